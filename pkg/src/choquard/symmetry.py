"""Cyclic rotation groups acting on fields with a character tau(g) = zeta^m."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .field import Grid, PotentialPair

LATTICE_EXACT = (1, 2, 4)


@dataclass(frozen=True)
class SymmetrySpec:
    """Z_k generated by rotation through 2*pi/k in the ``plane`` axes."""

    k: int = 1
    m: int = 0
    plane: tuple = (0, 1)

    def __post_init__(self):
        if not isinstance(self.k, (int, np.integer)) or self.k < 1:
            raise ValueError(f"group order k={self.k!r} must be a positive integer")
        if not 0 <= self.m < self.k:
            raise ValueError(f"homomorphism index m={self.m} must satisfy 0 <= m < k={self.k}")
        a, b = self.plane
        if a == b or min(a, b) < 0:
            raise ValueError(f"invalid rotation plane {self.plane}")

    @property
    def lattice_exact(self) -> bool:
        return self.k in LATTICE_EXACT

    def tau(self, j: int) -> complex:
        """Exact root of unity for g_j; quarter turns avoid trig round-off."""
        q = (j * self.m) % self.k
        if (4 * q) % self.k == 0:
            return (1, 1j, -1, -1j)[(4 * q) // self.k]
        return complex(np.exp(2j * np.pi * q / self.k))

    def h0_holds(self) -> bool:
        # points off the rotation axis have trivial isotropy
        return True

    def to_json(self) -> dict:
        return {"k": self.k, "m": self.m, "plane": list(self.plane)}


def _check_plane(spec: SymmetrySpec, grid: Grid) -> None:
    if max(spec.plane) >= grid.dim:
        raise ValueError(f"rotation plane {spec.plane} does not fit a {grid.dim}-d grid")


def _quarter_turns(u: np.ndarray, q: int, plane) -> np.ndarray:
    """``x -> u(R^q x)`` for the quarter turn R on a cell-centred grid (exact)."""
    a, b = plane
    return np.rot90(u, k=-q % 4, axes=(a, b))


def _rotation(theta: float, dim: int, plane) -> np.ndarray:
    a, b = plane
    R = np.eye(dim)
    c, s = np.cos(theta), np.sin(theta)
    R[a, a], R[a, b], R[b, a], R[b, b] = c, -s, s, c
    return R


def _resample(u: np.ndarray, grid: Grid, R: np.ndarray) -> np.ndarray:
    """Bilinear sample of ``u(R x)`` at every node."""
    X = grid.coords().reshape(grid.dim, -1)
    Y = R @ X
    idx = (Y + grid.half_extent) / grid.h - 0.5
    re = ndimage.map_coordinates(np.real(u), idx, order=1, mode="grid-wrap")
    im = ndimage.map_coordinates(np.imag(u), idx, order=1, mode="grid-wrap")
    out = re + 1j * im
    return out.reshape(grid.shape)


def compose(u: np.ndarray, j: int, spec: SymmetrySpec, grid: Grid) -> np.ndarray:
    """``x -> u(g_j x)`` with ``g_j`` the rotation by ``2 pi j / k``."""
    _check_plane(spec, grid)
    j %= spec.k
    if j == 0:
        return u.copy()
    if spec.lattice_exact:
        return _quarter_turns(u, (4 * j) // spec.k, spec.plane)
    return _resample(u, grid, _rotation(2 * np.pi * j / spec.k, grid.dim, spec.plane))


def act(u: np.ndarray, j: int, spec: SymmetrySpec, grid: Grid) -> np.ndarray:
    """``(u_g)(x) = tau(g) u(g^-1 x)`` for ``g = g_j``."""
    if not 0 <= j < spec.k:
        raise ValueError(f"group element index j={j} out of range for k={spec.k}")
    return spec.tau(j) * compose(u, -j, spec, grid)


def symmetrize(u: np.ndarray, spec: SymmetrySpec, grid: Grid) -> np.ndarray:
    """Average ``tau(g)^-1 u(g x)`` over the group: projector onto the tau-equivariant fields."""
    if spec.k == 1:
        return u.copy()
    terms = [np.conj(spec.tau(j)) * compose(u, j, spec, grid) for j in range(spec.k)]
    # pairwise sums: k equal copies add up exactly when k is a power of two
    while len(terms) > 1:
        terms = [terms[i] + terms[i + 1] if i + 1 < len(terms) else terms[i] for i in range(0, len(terms), 2)]
    avg = terms[0] / spec.k
    if not spec.lattice_exact:
        return avg
    # keep the average on a fundamental sector and extend it by the exact action,
    # so the output is a bit-exact fixed point of the projector
    X = grid.mesh()
    a, b = spec.plane
    sector = np.broadcast_to(X[a] > 0 if spec.k == 2 else (X[a] > 0) & (X[b] > 0), grid.shape)
    seed = np.where(sector, avg, 0)
    return sum(np.conj(spec.tau(j)) * compose(seed, j, spec, grid) for j in range(spec.k))


def equivariance_defect(u: np.ndarray, spec: SymmetrySpec, grid: Grid) -> float:
    """``max_g max_x |u(g x) - tau(g) u(x)| / max |u|``."""
    scale = float(np.max(np.abs(u)))
    if scale == 0 or spec.k == 1:
        return 0.0
    worst = 0.0
    for j in range(1, spec.k):
        worst = max(worst, float(np.max(np.abs(compose(u, j, spec, grid) - spec.tau(j) * u))))
    return worst / scale


class DegenerateLoop(ValueError):
    pass


def _interp_circle(u: np.ndarray, grid: Grid, radius: float, plane, samples: int) -> np.ndarray:
    a, b = plane
    th = 2 * np.pi * np.arange(samples) / samples
    pts = np.zeros((grid.dim, samples))
    pts[a] = radius * np.cos(th)
    pts[b] = radius * np.sin(th)
    idx = (pts + grid.half_extent) / grid.h - 0.5
    re = ndimage.map_coordinates(np.real(u), idx, order=3, mode="grid-wrap")
    im = ndimage.map_coordinates(np.imag(u), idx, order=3, mode="grid-wrap")
    return re + 1j * im


def winding_number(u: np.ndarray, radius: float, spec: SymmetrySpec, grid: Grid,
                   samples: int = 256, guard: float = 0.25) -> int:
    """Degree of ``arg u`` along the circle of given radius in the rotation plane."""
    _check_plane(spec, grid)
    vals = _interp_circle(u, grid, radius, spec.plane, samples)
    mod = np.abs(vals)
    floor = 1e-8 * float(np.max(np.abs(u)))
    if mod.min() < floor or mod.min() == 0:
        raise DegenerateLoop(f"degenerate loop: min |u| on circle = {mod.min():.3e} (floor {floor:.3e})")
    inc = np.angle(np.roll(vals, -1) / vals)
    w = float(np.sum(inc) / (2 * np.pi))
    nearest = round(w)
    if abs(w - nearest) > guard:
        raise DegenerateLoop(f"winding sum {w:.3f} not within {guard} of an integer")
    return int(nearest)


@dataclass
class CompatReport:
    max_V_violation: float
    max_A_violation: float
    threshold: float
    compatible: bool
    worst_element: int
    worst_node: tuple = ()
    worst_point: tuple = ()

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["worst_node"], out["worst_point"] = list(self.worst_node), list(self.worst_point)
        return out


def _bilinear_bound(f: np.ndarray, plane) -> float:
    """``h^2/8 (|f_aa| + |f_bb|)`` from second differences: the error of bilinear resampling."""
    return sum(float(np.max(np.abs(np.diff(f, 2, axis=ax)))) for ax in plane) / 8


def compat_check(pot: PotentialPair, spec: SymmetrySpec, grid: Grid) -> CompatReport:
    """Largest nodewise violation of ``V(gx) = V(x)`` and ``A(gx) = g A(x)``.

    Quarter-turn groups are checked exactly at every node against 1e-8.  Other
    groups are resampled bilinearly, so nodes are compared on the disc that
    stays inside the box under rotation, against the interpolation error
    bound of the sampled fields (floor 1e-5).
    """
    _check_plane(spec, grid)
    a, b = spec.plane
    if spec.lattice_exact:
        thr = 1e-8
        mask = np.ones(grid.shape, dtype=bool)
    else:
        bound = max([_bilinear_bound(pot.V, spec.plane)] + [_bilinear_bound(c, spec.plane) for c in pot.A])
        thr = max(1e-5, 1.5 * bound)
        X = grid.mesh()
        mask = np.broadcast_to(np.hypot(X[a], X[b]), grid.shape) < grid.half_extent - 2 * grid.h
    worst_v = worst_a = 0.0
    worst_j, worst_idx = 0, (0,) * grid.dim
    for j in range(1, spec.k):
        errv = np.where(mask, np.abs(compose(pot.V, j, spec, grid) - pot.V), 0.0)
        dv = float(np.max(errv))
        R = _rotation(2 * np.pi * j / spec.k, grid.dim, spec.plane)
        if spec.lattice_exact:
            R = np.round(R)
        A_g = np.stack([np.real(compose(c, j, spec, grid)) for c in pot.A])
        gA = np.tensordot(R, pot.A, axes=(1, 0))
        erra = np.where(mask, np.max(np.abs(A_g - gA), axis=0), 0.0)
        da = float(np.max(erra))
        if max(dv, da) > max(worst_v, worst_a):
            worst_j = j
            err = errv if dv >= da else erra
            worst_idx = tuple(int(i) for i in np.unravel_index(int(np.argmax(err)), grid.shape))
        worst_v, worst_a = max(worst_v, dv), max(worst_a, da)
    x = grid.axis()
    point = tuple(float(x[i]) for i in worst_idx)
    return CompatReport(worst_v, worst_a, thr, max(worst_v, worst_a) <= thr, worst_j, worst_idx, point)
