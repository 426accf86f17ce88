"""Cut-off ground states, multi-bump test functions and the energy-threshold certificate.

The certificate is evaluated on the radial mesh of the base profile: a
single cut-off bump centred at ``y`` is radial about ``y``, so its norm only
needs shell averages of ``|A|^2 + V`` around ``y`` and its double integral is
the radial one.  Distinct bumps have disjoint supports, so the norm of
``theta`` is exactly ``k`` times the single-bump norm while ``D(theta)``
picks up the long-range cross term, computed here from the exterior Riesz
potential of one bump averaged over the spheres of the other.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline

from .energy import fibre_max
from .field import Grid
from .radial import RadialOperator, RadialProfile, _shell_kernel, fit_log_tail, sphere_area
from .symmetry import SymmetrySpec


def chi(t, eps: float) -> np.ndarray:
    """C^1 smoothstep: 1 on [0, 1-eps], ``1 - 3s^2 + 2s^3`` across the ramp, 0 from 1 on."""
    if not 0 < eps < 1:
        raise ValueError(f"cutoff parameter eps={eps} must lie in (0, 1)")
    t = np.asarray(t, dtype=float)
    s = np.clip((t - (1 - eps)) / eps, 0.0, 1.0)
    return 1 - 3 * s * s + 2 * s ** 3


def cutoff(u, R: float, eps: float, r: Optional[np.ndarray] = None, grid: Optional[Grid] = None):
    """``chi(|x| / R) u(x)`` for a profile, a radial array with nodes ``r``, or a grid field."""
    if not R > 0:
        raise ValueError("cutoff radius must be positive")
    if isinstance(u, RadialProfile):
        return chi(u.r / R, eps) * u.values
    if r is not None:
        return chi(np.asarray(r) / R, eps) * u
    if grid is not None:
        return chi(grid.radius() / R, eps) * u
    raise ValueError("cutoff needs a RadialProfile, radial nodes or a grid")


# -- cut-off decay scan --------------------------------------------------------

@dataclass
class DecayScan:
    R: np.ndarray
    delta_D: np.ndarray
    delta_grad: np.ndarray
    slope_D: float
    slope_grad: float
    expected_D: float
    expected_grad: float

    @property
    def ok_D(self) -> bool:
        return abs(self.slope_D - self.expected_D) <= 0.1 * self.expected_D

    @property
    def ok_grad(self) -> bool:
        return abs(self.slope_grad - self.expected_grad) <= 0.1 * self.expected_grad

    def rows(self):
        return [(float(a), float(b), float(c)) for a, b, c in zip(self.R, self.delta_D, self.delta_grad)]


def cutoff_deltas(values: np.ndarray, op: RadialOperator, p: float, R: float, eps: float) -> tuple:
    """``|D(w) - D(w^R)|`` and ``int ||grad w|^2 - |grad w^R|^2|`` on the radial mesh."""
    r = op.mesh.r
    wR = chi(r / R, eps) * values
    f, fR = values ** p, wR ** p
    dD = abs(op.cross(f - fR, f + fR))
    du = np.diff(np.append(values, 0.0))
    duR = np.diff(np.append(wR, 0.0))
    dg = float(np.sum(op.mesh.face_weights * np.abs(du * du - duR * duR)))
    return dD, dg


def cutoff_decay_scan(profile: RadialProfile, mu: float, eps: float, R_list, p: float | None = None,
                      op: RadialOperator | None = None) -> DecayScan:
    """Tabulate the cut-off defects over ``R_list`` and fit their exponential rates.

    Each column is fitted with ``log delta = c - s R - a log R`` so that the
    algebraic prefactor does not bias the rate ``s``.
    """
    R = np.asarray(sorted(R_list), dtype=float)
    if R.size < 4:
        raise ValueError("need at least 4 cutoff radii for a rate fit")
    if R.max() > profile.r_max:
        raise ValueError(f"cutoff radius {R.max()} exceeds the profile domain r_max={profile.r_max}")
    p = profile.p if p is None else p
    op = op or RadialOperator(profile.mesh, profile.alpha)
    rows = np.array([cutoff_deltas(profile.values, op, p, Ri, eps) for Ri in R])
    sD, *_ = fit_log_tail(R, rows[:, 0])
    sG, *_ = fit_log_tail(R, rows[:, 1])
    rate = math.sqrt(mu) * (1 - eps)
    return DecayScan(R, rows[:, 0], rows[:, 1], sD, sG, p * rate, 2 * rate)


# -- geometry of the plan --------------------------------------------------------

def choose_mu(v_inf: float, kappa: float, delta: float) -> float:
    """``V_inf (1 - kappa / (4 delta sqrt V_inf))^2``, checked against ``kappa < 2 delta sqrt mu``."""
    mu = v_inf * (1 - kappa / (4 * delta * math.sqrt(v_inf))) ** 2
    if not (0 < mu < v_inf) or kappa >= 4 * delta * math.sqrt(v_inf):
        raise ValueError(f"no admissible mu for kappa={kappa}, delta={delta}, V_inf={v_inf}")
    if not kappa < 2 * delta * math.sqrt(mu):
        raise ValueError(f"kappa={kappa} violates kappa < 2 delta sqrt(mu) = {2 * delta * math.sqrt(mu)}")
    return mu


def r_y(kappa: float, delta_tau: float, mu: float, y_norm: float) -> float:
    """``((kappa + 2 delta sqrt mu) / (4 delta sqrt mu)) delta |y|``."""
    s = 2 * delta_tau * math.sqrt(mu)
    if not 0 < kappa < s:
        raise ValueError(f"need 0 < kappa < 2 delta_tau sqrt(mu): kappa={kappa}, bound={s}")
    return (kappa + s) / (2 * s) * delta_tau * y_norm


def eps_window(kappa: float, delta: float, mu: float) -> float:
    s = 2 * delta * math.sqrt(mu)
    return (s - kappa) / (s + kappa)


@dataclass
class BumpPlan:
    profile: RadialProfile
    y_norm: float
    R_y: float
    k: int
    m: int
    eps: float
    delta: float
    mu: float
    kappa: float
    plane: tuple = (0, 1)

    def __post_init__(self):
        if not 0 < self.R_y < self.delta * self.y_norm:
            raise ValueError(f"R_y={self.R_y} not in (0, delta |y|) = (0, {self.delta * self.y_norm})")
        hi = eps_window(self.kappa, self.delta, self.mu)
        if not 0 < self.eps < hi:
            raise ValueError(f"eps={self.eps} outside the admissible window (0, {hi})")
        if self.k > 1 and not self.center_distance(1) > 2 * self.R_y:
            raise ValueError("overlapping supports: neighbouring bumps closer than 2 R_y")
        if self.R_y > self.profile.r_max:
            raise ValueError("R_y exceeds the base profile domain")

    def center_distance(self, j: int) -> float:
        return 2 * self.y_norm * abs(math.sin(math.pi * j / self.k))

    def centers(self, dim: int) -> list:
        a, b = self.plane
        out = []
        for j in range(self.k):
            c = np.zeros(dim)
            th = 2 * math.pi * j / self.k
            c[a], c[b] = self.y_norm * math.cos(th), self.y_norm * math.sin(th)
            out.append(c)
        return out


def make_plan(profile: RadialProfile, spec: SymmetrySpec, kappa: float, eps: float, y_norm: float,
              delta: float | None = None, v_inf: float | None = None) -> BumpPlan:
    from .params import delta_tau

    delta = delta_tau(spec) if delta is None else delta
    v_inf = profile.lam if v_inf is None else v_inf
    mu = choose_mu(v_inf, kappa, delta)
    return BumpPlan(profile, float(y_norm), r_y(kappa, delta, mu, y_norm), spec.k, spec.m, eps, delta, mu,
                    kappa, tuple(spec.plane))


def build_theta(plan: BumpPlan, grid: Grid, spec: SymmetrySpec, phases: bool = True,
                only: Optional[int] = None) -> np.ndarray:
    """``sum_j tau(g_j) w^{R_y}(x - g_j y)`` sampled on the grid (``only`` keeps one term)."""
    if (spec.k, spec.m) != (plan.k, plan.m):
        raise ValueError("plan and symmetry spec disagree on (k, m)")
    if max(spec.plane) >= grid.dim:
        raise ValueError("rotation plane does not fit the grid")
    room = grid.half_extent - 2 * grid.h
    if plan.y_norm + plan.R_y > room:
        raise ValueError(f"bumps do not fit: |y| + R_y = {plan.y_norm + plan.R_y:.3g} > L - 2h = {room:.3g}")
    prof = plan.profile
    X = grid.mesh()
    out = np.zeros(grid.shape, dtype=complex)
    for j, c in enumerate(plan.centers(grid.dim)):
        if only is not None and j != only:
            continue
        d = np.sqrt(sum((x - x0) ** 2 for x, x0 in zip(X, c)))
        vals = np.interp(d, prof.r, prof.values, left=prof.values[0], right=0.0)
        out += (spec.tau(j) if phases else 1.0) * chi(d / plan.R_y, plan.eps) * vals
    return out


# -- shell averages ------------------------------------------------------------

def _sphere_rule(dim: int, nq: int = 96):
    """Nodes ``t = cos(angle)`` and weights for averages over S^{dim-1}."""
    a = (dim - 3) / 2
    t, w = special.roots_jacobi(nq, a, a)
    return t, w / w.sum()


def shell_average(F: Callable, r: np.ndarray, Y: float, dim: int, nq: int = 96) -> np.ndarray:
    """Mean of ``F(|r w + Y e|)`` over unit vectors ``w`` for each radius in ``r``."""
    t, w = _sphere_rule(dim, nq)
    r = np.asarray(r, dtype=float)[:, None]
    rho = np.sqrt(np.maximum(r * r + Y * Y + 2 * r * Y * t[None, :], 0.0))
    return F(rho) @ w


def exterior_potential(f: np.ndarray, op: RadialOperator) -> Callable:
    """``rho -> (K * f)(rho)`` valid outside the support of the radial density ``f``."""
    mesh = op.mesh
    W = mesh.weights
    if op.newtonian:
        M = float(np.sum(W * f))
        return lambda rho: M / rho
    sel = f > 0
    s, ws = mesh.r[sel], (W * f)[sel] / sphere_area(mesh.dim)
    N, a = mesh.dim, op.alpha

    def U(rho):
        rho = np.asarray(rho, dtype=float)
        lo, hi = float(rho.min()), float(rho.max())
        tab = np.linspace(lo, hi, 1024) if hi > lo else np.array([lo])
        vals = np.array([sphere_area(N - 1) * np.dot(_shell_kernel(x, s, N, a), ws) for x in tab])
        if tab.size == 1:
            return np.full_like(rho, vals[0])
        return CubicSpline(tab, vals)(rho)

    return U


# -- (H2) check and certificate -----------------------------------------------

def exp_approach(v_inf: float, c0: float, kappa: float) -> Callable:
    """Radial ``|A|^2 + V`` for the preset ``V = V_inf - c0 exp(-kappa |x|)``, ``A = 0``."""
    return lambda rho: v_inf - c0 * np.exp(-kappa * np.asarray(rho))


@dataclass
class H2Report:
    holds: bool
    worst_excess: float
    worst_radius: float
    checked_nodes: int

    def to_json(self):
        return asdict(self)


def h2_check(vA2: Callable, v_inf: float, c0: float, kappa: float, rho: float, r_out: float,
             nodes: int = 4001) -> H2Report:
    """Nodewise ``|A|^2 + V <= V_inf - c0 e^{-kappa r}`` for ``rho <= r <= r_out``."""
    r = np.linspace(rho, max(r_out, rho), nodes)
    excess = vA2(r) - (v_inf - c0 * np.exp(-kappa * r))
    i = int(np.argmax(excess))
    tol = 1e-12 * v_inf
    return H2Report(bool(excess[i] <= tol), float(excess[i]), float(r[i]), nodes)


def h2_check_grid(pot, grid: Grid, c0: float, kappa: float, rho: float) -> H2Report:
    """The same inequality on every grid node with ``|x| >= rho``."""
    r = grid.radius()
    lhs = np.sum(pot.A ** 2, axis=0) + pot.V
    excess = np.where(r >= rho, lhs - (pot.v_inf - c0 * np.exp(-kappa * r)), -np.inf)
    i = np.unravel_index(int(np.argmax(excess)), excess.shape)
    tol = 1e-12 * pot.v_inf
    return H2Report(bool(excess[i] <= tol), float(excess[i]), float(r[i]), int(np.sum(r >= rho)))


@dataclass
class Certificate:
    k: int
    m: int
    rho0: float
    R_y: float
    max_t_J_theta: float
    split_value: float
    k_E_Vinf: float
    gap: float
    gap_full: float
    cross_term: float
    single_norm2: float
    single_D: float
    passed: bool
    refusals: list = field(default_factory=list)
    d0_fit: Optional[float] = None
    kappa_fit: Optional[float] = None

    def to_json(self) -> dict:
        return asdict(self)


def single_bump_terms(plan: BumpPlan, vA2: Callable, op: RadialOperator, p: float) -> tuple:
    """``(||w^R_y||^2_{A,V}, D(w^R_y), w^R_y)`` for one bump centred at distance ``|y|``."""
    prof = plan.profile
    r = prof.r
    phi = chi(r / plan.R_y, plan.eps) * prof.values
    sel = phi > 0
    pot_avg = np.zeros_like(r)
    pot_avg[sel] = shell_average(vA2, r[sel], plan.y_norm, op.mesh.dim)
    norm2 = op.dirichlet(phi) + float(np.sum(op.mesh.weights * pot_avg * phi * phi))
    return norm2, op.D(phi, p), phi


def cross_term(plan: BumpPlan, phi: np.ndarray, op: RadialOperator, p: float) -> float:
    """``D(theta) - k D(single)``: interactions between distinct bumps."""
    if plan.k == 1:
        return 0.0
    f = phi ** p
    U = exterior_potential(f, op)
    sel = f > 0
    r, W = op.mesh.r[sel], op.mesh.weights[sel]
    total = 0.0
    for j in range(1, plan.k):
        d = plan.center_distance(j)
        total += float(np.sum(W * f[sel] * shell_average(U, r, d, op.mesh.dim)))
    return plan.k * total


def threshold_certificate(plan: BumpPlan, vA2: Callable, v_inf: float, c0: float, kappa: float,
                          rho: float, E_vinf: float | None = None, op: RadialOperator | None = None,
                          p: float | None = None) -> Certificate:
    """Compare ``max_t J(t theta)`` with ``k E_{V_inf}``.

    ``gap`` is ``k (E_{V_inf} - max_t J(t w^R_y(. - y)))``: every bump is
    evaluated on its own, as in the energy split.  ``gap_full`` uses the
    full ``D(theta)`` including the cross term.  The certificate passes iff
    (H2) holds nodewise, ``c0 > 0`` and ``gap`` exceeds round-off.
    """
    prof = plan.profile
    p = prof.p if p is None else p
    op = op or RadialOperator(prof.mesh, prof.alpha)
    E = prof.energy if E_vinf is None else E_vinf
    refusals = []
    if not c0 > 0:
        refusals.append(f"degenerate (H2): c0={c0} must be positive")
    h2 = h2_check(vA2, v_inf, c0, kappa, rho, plan.y_norm + plan.R_y + prof.r_max)
    if not h2.holds:
        refusals.append(f"(H2) fails at r={h2.worst_radius:.6g}: excess {h2.worst_excess:.3e}")
    n1, D1, phi = single_bump_terms(plan, vA2, op, p)
    X = cross_term(plan, phi, op, p)
    k = plan.k
    split = k * fibre_max(n1, D1, p)
    full = fibre_max(k * n1, k * D1 + X, p)
    gap = k * E - split
    floor = 1e-12 * k * E
    if not gap > floor:
        refusals.append(f"gap {gap:.3e} is not positive beyond round-off {floor:.1e}")
    return Certificate(k, plan.m, plan.y_norm, plan.R_y, full, split, k * E, gap, k * E - full, X, n1, D1,
                       not refusals, refusals)


@dataclass
class GapFit:
    d0: float
    rate: float
    rms: float

    def to_json(self):
        return asdict(self)


def fit_gap_decay(y_norms, gaps) -> GapFit:
    """Least squares ``log gap = log d0 - rate |y|``."""
    y = np.asarray(y_norms, dtype=float)
    g = np.asarray(gaps, dtype=float)
    if np.any(g <= 0):
        raise ValueError("gap fit needs strictly positive gaps")
    A = np.column_stack([np.ones_like(y), -y])
    coef, *_ = np.linalg.lstsq(A, np.log(g), rcond=None)
    rms = float(np.sqrt(np.mean((A @ coef - np.log(g)) ** 2)))
    return GapFit(float(math.exp(coef[0])), float(coef[1]), rms)


def certificate_sweep(profile: RadialProfile, spec: SymmetrySpec, vA2: Callable, v_inf: float, c0: float,
                      kappa: float, rho: float, eps: float, y_norms, delta: float | None = None) -> tuple:
    """Certificates over ``|y|`` plus the exponential fit of the gaps (when all are positive)."""
    op = RadialOperator(profile.mesh, profile.alpha)
    certs = []
    for y in y_norms:
        plan = make_plan(profile, spec, kappa, eps, y, delta=delta, v_inf=v_inf)
        certs.append(threshold_certificate(plan, vA2, v_inf, c0, kappa, rho, op=op))
    gaps = [c.gap for c in certs]
    fit = fit_gap_decay(y_norms, gaps) if all(g > 0 for g in gaps) else None
    if fit is not None:
        for c in certs:
            c.d0_fit, c.kappa_fit = fit.d0, fit.rate
    return certs, fit
