"""Truncated-box grids, complex fields on them, potentials and the magnetic norm.

Fields are plain numpy arrays of shape ``(n,) * dim``; vector fields carry a
leading axis of length ``dim``.  Derivatives are spectral (periodic FFT) with
the Nyquist mode dropped, so the discrete gradient is exactly skew-adjoint.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import fft


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Cell-centred box ``[-L, L)^dim`` with ``n`` nodes per axis.

    Nodes sit at ``-L + (i + 1/2) h``; negation and quarter turns are then
    exact index permutations, which keeps the zero-padded convolution
    symmetric under the lattice rotations.
    """

    dim: int
    half_extent: float
    n: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"grid dim must be 2 or 3, got {self.dim}")
        if self.n < 4 or self.n % 2:
            raise ValueError(f"n_per_axis must be an even integer >= 4, got {self.n}")
        if not self.half_extent > 0:
            raise ValueError("half_extent must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.half_extent / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def weight(self) -> float:
        return self.h ** self.dim

    def axis(self) -> np.ndarray:
        return -self.half_extent + (np.arange(self.n) + 0.5) * self.h

    def mesh(self) -> list:
        x = self.axis()
        return np.meshgrid(*([x] * self.dim), indexing="ij", sparse=True)

    def coords(self) -> np.ndarray:
        """Dense coordinates, shape ``(dim, n, ..., n)``."""
        return np.stack(np.broadcast_arrays(*self.mesh()))

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.mesh()))

    def wavenumbers(self) -> np.ndarray:
        k = 2 * np.pi * fft.fftfreq(self.n, self.h)
        k[self.n // 2] = 0.0
        return k

    def k_mesh(self) -> list:
        k = self.wavenumbers()
        return np.meshgrid(*([k] * self.dim), indexing="ij", sparse=True)

    def k2(self) -> np.ndarray:
        return sum(kk * kk for kk in self.k_mesh())

    def lowpass(self, width: float) -> np.ndarray:
        """Gaussian filter ``exp(-|k|^2 width^2 / 2)`` with the Nyquist plane removed."""
        k = 2 * np.pi * fft.fftfreq(self.n, self.h)
        f1 = np.exp(-(k * width) ** 2 / 2)
        f1[self.n // 2] = 0.0
        out = np.ones((1,) * self.dim)
        for ax in range(self.dim):
            shape = [1] * self.dim
            shape[ax] = self.n
            out = out * f1.reshape(shape)
        return out

    def check(self, *arrays) -> None:
        for a in arrays:
            if np.shape(a)[-self.dim:] != self.shape:
                raise GridMismatch(f"array of shape {np.shape(a)} does not live on grid {self.shape}")

    def integrate(self, values) -> float:
        return float(np.sum(values) * self.weight)

    def to_json(self) -> dict:
        return {"dim": self.dim, "half_extent": self.half_extent, "n": self.n, "h": self.h,
                "layout": "cell-centred"}


def spectral_gradient(u: np.ndarray, grid: Grid) -> np.ndarray:
    grid.check(u)
    uh = fft.fftn(u)
    return np.stack([fft.ifftn(1j * kk * uh) for kk in grid.k_mesh()])


def covariant_gradient(u: np.ndarray, A: np.ndarray, grid: Grid) -> np.ndarray:
    """``grad u + i A u``, one complex component per axis."""
    grid.check(u, A)
    if A.shape[0] != grid.dim:
        raise GridMismatch(f"vector potential has {A.shape[0]} components, grid dim is {grid.dim}")
    return spectral_gradient(u, grid) + 1j * A * u


@dataclass(frozen=True, eq=False)
class PotentialPair:
    """Sampled vector potential ``A`` (shape ``(dim, n, ...)``) and scalar ``V``."""

    A: np.ndarray
    V: np.ndarray
    v_inf: float
    name: str = ""

    def __post_init__(self):
        if not np.all(np.isfinite(self.V)) or not np.all(self.V > 0):
            raise ValueError(f"V must be positive at every node (min V = {np.min(self.V):.3g})")
        if not self.v_inf > 0:
            raise ValueError("V_inf must be positive")

    @property
    def zero_field(self) -> bool:
        return not np.any(self.A)


def magnetic_hamiltonian(u: np.ndarray, pot: PotentialPair, grid: Grid) -> np.ndarray:
    """Apply ``(grad + iA)^* (grad + iA) + V``, the L2 representative of <u, .>_{A,V}."""
    grid.check(u, pot.V)
    uh = fft.fftn(u)
    if pot.zero_field:
        return fft.ifftn(grid.k2() * uh) + pot.V * u
    out = pot.V * u
    for kk, a in zip(grid.k_mesh(), pot.A):
        w = fft.ifftn(1j * kk * uh) + 1j * a * u
        out = out - fft.ifftn(1j * kk * fft.fftn(w)) - 1j * a * w
    return out


def inner_AV(u: np.ndarray, v: np.ndarray, pot: PotentialPair, grid: Grid) -> float:
    gu = covariant_gradient(u, pot.A, grid)
    gv = covariant_gradient(v, pot.A, grid)
    dens = np.sum(gu * np.conj(gv), axis=0) + pot.V * u * np.conj(v)
    return float(np.real(np.sum(dens)) * grid.weight)


def norm_AV(u: np.ndarray, pot: PotentialPair, grid: Grid) -> float:
    gu = covariant_gradient(u, pot.A, grid)
    dens = np.sum(np.abs(gu) ** 2, axis=0) + pot.V * np.abs(u) ** 2
    return float(np.sqrt(np.sum(dens) * grid.weight))


def l2_norm(u: np.ndarray, grid: Grid) -> float:
    return float(np.sqrt(np.sum(np.abs(u) ** 2) * grid.weight))


@dataclass
class DiamagneticReport:
    lhs: float
    rhs: float
    margin: float
    tol_disc: float
    spectral_tail: float
    holds: bool

    def to_json(self) -> dict:
        return dict(self.__dict__)


def diamagnetic_check(u: np.ndarray, A: np.ndarray, grid: Grid, rel_tol: float = 1e-3) -> DiamagneticReport:
    """Integrated diamagnetic inequality ``||grad|u| || <= ||grad_A u||``.

    ``tol_disc`` is ``rel_tol * rhs``; ``spectral_tail`` is the fraction of
    the spectral energy of ``|u|`` in the upper half of the resolved band, a
    resolution diagnostic for the kink of ``|u|`` at zeros of ``u``.
    """
    mod = np.abs(u)
    lhs = l2_norm(np.sqrt(np.sum(np.abs(spectral_gradient(mod, grid)) ** 2, axis=0)), grid)
    rhs = l2_norm(np.sqrt(np.sum(np.abs(covariant_gradient(u, A, grid)) ** 2, axis=0)), grid)
    power = np.abs(fft.fftn(mod)) ** 2
    kmax = np.pi / grid.h
    kn = np.sqrt(grid.k2())
    total = float(np.sum(power))
    tail = float(np.sum(power[kn > 0.5 * kmax]) / total) if total > 0 else 0.0
    tol = rel_tol * rhs
    return DiamagneticReport(lhs, rhs, rhs - lhs, tol, tail, lhs <= rhs + tol)


# -- presets ---------------------------------------------------------------

def constant_field(grid: Grid, strength: float = 1.0, planes=None) -> np.ndarray:
    """``A(z_1, ..) = strength * (i z_1, ..)`` on complex coordinate planes.

    ``planes`` defaults to consecutive axis pairs ``(0,1), (2,3)``; a leftover
    axis carries no field.  In real components ``i z = (-y, x)``.
    """
    if planes is None:
        planes = [(a, a + 1) for a in range(0, grid.dim - 1, 2)]
    X = grid.coords()
    A = np.zeros_like(X)
    for a, b in planes:
        A[a] = -strength * X[b]
        A[b] = strength * X[a]
    return A


def sample_scalar(grid: Grid, preset: str, v_inf: float, **kw) -> np.ndarray:
    r = grid.radius()
    if preset == "constant":
        V = np.full(grid.shape, float(v_inf))
    elif preset == "well":
        depth = kw.get("depth", 0.5)
        width = kw.get("width", 2.0)
        V = v_inf - depth * np.exp(-(r / width) ** 2)
    elif preset == "exp_approach":
        c0 = kw.get("c0", 1.0)
        kappa = kw.get("kappa", 0.5)
        V = v_inf - c0 * np.exp(-kappa * r)
    elif preset == "offaxis_bump":
        # deliberately not rotation invariant
        amp = kw.get("amp", 0.5)
        width = kw.get("width", 1.0)
        center = np.zeros(grid.dim)
        center[0] = kw.get("offset", 3.0)
        d2 = sum((c - x0) ** 2 for c, x0 in zip(grid.mesh(), center))
        V = v_inf + amp * np.exp(-d2 / width ** 2)
    else:
        raise ValueError(f"unknown scalar potential preset {preset!r}")
    return np.broadcast_to(V, grid.shape).astype(float)


def make_potentials(grid: Grid, v_inf: float, v_preset: str = "constant", a_preset: str = "zero",
                    v_args: dict | None = None, a_args: dict | None = None) -> PotentialPair:
    V = sample_scalar(grid, v_preset, v_inf, **(v_args or {}))
    if a_preset == "zero":
        A = np.zeros((grid.dim,) + grid.shape)
    elif a_preset == "constant_field":
        A = constant_field(grid, **(a_args or {}))
    else:
        raise ValueError(f"unknown vector potential preset {a_preset!r}")
    return PotentialPair(A, V, float(v_inf), name=f"{v_preset}/{a_preset}")


def gauge_transform(u: np.ndarray, A: np.ndarray, phi: np.ndarray, grad_phi: np.ndarray):
    """``(u, A) -> (exp(-i phi) u, A + grad phi)``; leaves ``|grad_A u|`` unchanged."""
    return np.exp(-1j * phi) * u, A + grad_phi


# -- snapshots -------------------------------------------------------------

_MAGIC = b"CQF1"
_HEADER = struct.Struct("<4sIId8s")


def save_snapshot(path, u: np.ndarray, grid: Grid, kind: str = "field", meta: dict | None = None) -> None:
    """Little-endian header (magic, dim, n, L, kind) + complex64 pairs, plus JSON sidecar."""
    grid.check(u)
    path = Path(path)
    tag = kind.encode("ascii")[:8].ljust(8, b"\0")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, grid.dim, grid.n, grid.half_extent, tag))
        fh.write(np.ascontiguousarray(u, dtype="<c8").tobytes())
    side = {"grid": grid.to_json(), "kind": kind, "dtype": "complex64", "byte_order": "little"}
    side.update(meta or {})
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(side, indent=2, sort_keys=True))


def load_snapshot(path):
    path = Path(path)
    raw = path.read_bytes()
    magic, dim, n, L, tag = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path} is not a field snapshot")
    grid = Grid(dim, L, n)
    u = np.frombuffer(raw, dtype="<c8", offset=_HEADER.size).reshape(grid.shape)
    return u.astype(complex), grid, tag.rstrip(b"\0").decode("ascii")
