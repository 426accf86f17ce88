"""Decay windows, convolution tail checks and cross-module consistency oracles."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import energy as en
from .field import Grid, PotentialPair, make_potentials, spectral_gradient
from .radial import RadialOperator, RadialProfile, UnreliableWindow, decay_fit, fit_log_tail
from .riesz import D, RieszKernel, brute_force_D

WINDOW_NOTE = ("decay windows are one-sided asymptotic bounds rendered with a 1.05 upward slack; "
               "for p = 2 the convolution's 1/r far field adds algebraic corrections")


def context_hash(context: dict) -> str:
    blob = json.dumps(context, sort_keys=True, default=lambda x: format(float(x), ".17g"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class CheckResult:
    name: str
    measured: float
    lo: float
    hi: float
    passed: bool
    context_hash: str
    note: str = ""

    def to_json(self) -> dict:
        return asdict(self)


def check(name: str, measured: float, lo: float, hi: float, context: dict | None = None,
          note: str = "") -> CheckResult:
    if not lo <= hi:
        raise ValueError(f"empty window [{lo}, {hi}] for check {name}")
    measured = float(measured)
    ok = bool(lo <= measured <= hi)
    return CheckResult(name, measured, float(lo), float(hi), ok, context_hash(context or {}), note)


def radial_derivative(profile: RadialProfile) -> np.ndarray:
    """Centred second-order differences, one-sided second-order at the ends."""
    return np.gradient(profile.values, profile.r, edge_order=2)


def _rate_window(p: float, lam: float) -> tuple:
    if p > 2:
        return 0.98 * math.sqrt(lam), 1.05 * math.sqrt(lam)
    return math.sqrt(0.9 * lam), 1.05 * math.sqrt(lam)


def appendix_decay_suite(profile: RadialProfile, dim: int | None = None) -> list:
    """Rate and power checks for ``u`` and ``|u'|`` against the exponential decay windows."""
    if not profile.converged:
        raise ValueError("appendix_decay_suite needs a converged profile")
    lam = profile.lam
    if profile.r_max < 6 / math.sqrt(lam):
        raise UnreliableWindow(f"window outside reliable tail: r_max={profile.r_max} < 6/sqrt(lambda)")
    N = profile.dim if dim is None else dim
    lo, hi = _rate_window(profile.p, lam)
    ctx = {"lambda": lam, "p": profile.p, "alpha": profile.alpha, "N": N, "r_max": profile.r_max,
           "m": profile.m_nodes, "energy": profile.energy}
    out = []
    for label, vals in (("u", profile.values), ("grad_u", np.abs(radial_derivative(profile)))):
        fit = decay_fit(profile, values=vals)
        out.append(check(f"decay_rate_{label}", fit.rate, lo, hi, ctx, WINDOW_NOTE))
        out.append(check(f"decay_power_{label}", fit.power, (N - 1) / 2 - 0.3, (N - 1) / 2 + 0.3, ctx,
                         WINDOW_NOTE))
    return out


def kkstar_decay_of_convolution(profile: RadialProfile, op: RadialOperator | None = None) -> list:
    """Vanishing of ``K * u^p`` at infinity: size at ``0.9 r_max``, monotone tail, tail power."""
    op = op or RadialOperator(profile.mesh, profile.alpha)
    phi = op.convolve(np.abs(profile.values) ** profile.p)
    ctx = {"lambda": profile.lam, "p": profile.p, "alpha": profile.alpha, "m": profile.m_nodes}
    if not np.any(phi):
        return [check("kkstar_vanishing", 0.0, 0.0, 0.0, ctx)]
    r = profile.r
    i90 = int(np.searchsorted(r, 0.9 * profile.r_max))
    ratio = phi[i90] / phi[0]
    q = len(r) - len(r) // 4
    rises = float(np.max(np.diff(phi[q:])))
    sel = (r >= 0.5 * profile.r_max) & (r <= 0.9 * profile.r_max)
    power = -np.polyfit(np.log(r[sel]), np.log(phi[sel]), 1)[0]
    return [
        check("kkstar_ratio_at_0.9rmax", ratio, 0.0, 0.01, ctx),
        check("kkstar_tail_max_increment", rises, -float(phi.max()), 0.0, ctx),
        check("kkstar_tail_power", power, 0.8 * profile.alpha, 1.2 * profile.alpha, ctx),
    ]


def far_field_error(profile: RadialProfile, support: float, beyond: float = 2.0) -> float:
    """Max relative error of ``K * u^p`` against ``mass / r`` past ``beyond`` (Newtonian case)."""
    op = RadialOperator(profile.mesh, profile.alpha)
    if not op.newtonian:
        raise ValueError("closed-form far field only for N=3, alpha=1")
    f = np.abs(profile.values) ** profile.p
    if np.any(f[profile.r > support]):
        raise ValueError("profile is not supported inside the given radius")
    M = float(np.sum(op.mesh.weights * f))
    phi = op.convolve(f)
    sel = profile.r > beyond
    return float(np.max(np.abs(phi[sel] - M / profile.r[sel]) / (M / profile.r[sel])))


# -- grid consistency oracles --------------------------------------------------

def smooth_random_field(grid: Grid, rng: np.random.Generator, width: float = 1.0, complex_: bool = True,
                        envelope: float | None = None):
    """Band-limited random field under a Gaussian envelope of width ``L/8`` (about 1e-14 at the edge)."""
    sigma = grid.half_extent / 8 if envelope is None else envelope
    noise = rng.standard_normal(grid.shape)
    if complex_:
        noise = noise + 1j * rng.standard_normal(grid.shape)
    smooth = np.fft.ifftn(np.fft.fftn(noise) * grid.lowpass(width))
    u = smooth * np.exp(-grid.radius() ** 2 / (2 * sigma ** 2))
    u = u if complex_ else np.real(u)
    return u / np.max(np.abs(u))


def random_lattice_phase(grid: Grid, rng: np.random.Generator, modes: int = 3, amp: float = 0.5):
    """Smooth lattice-periodic phase ``phi`` and its exact gradient."""
    X = grid.mesh()
    base = 2 * np.pi / (2 * grid.half_extent)
    phi = np.zeros(grid.shape)
    grad = np.zeros((grid.dim,) + grid.shape)
    for _ in range(modes):
        kv = rng.integers(-2, 3, size=grid.dim) * base
        shift = rng.uniform(0, 2 * np.pi)
        c = rng.uniform(-amp, amp)
        arg = sum(k * x for k, x in zip(kv, X)) + shift
        phi = phi + c * np.cos(arg)
        for d in range(grid.dim):
            grad[d] = grad[d] - c * kv[d] * np.sin(arg)
    return phi, grad


def gauge_defect(u, pot: PotentialPair, kernel: RieszKernel, p: float, phi, grad_phi) -> float:
    """Relative change of J and of the residual modulus under a gauge transformation."""
    from .field import gauge_transform

    grid = kernel.grid
    v, A2 = gauge_transform(u, pot.A, phi, grad_phi)
    pot2 = PotentialPair(A2, pot.V, pot.v_inf)
    c1 = en.EnergyContext(grid, pot, kernel, p)
    c2 = en.EnergyContext(grid, pot2, kernel, p)
    J1, J2 = en.J(u, c1), en.J(v, c2)
    r1, r2 = en.residual(u, c1), en.residual(v, c2)
    dJ = abs(J1 - J2) / abs(J1)
    dr = float(np.max(np.abs(np.abs(r1) - np.abs(r2))) / np.max(np.abs(r1)))
    return max(dJ, dr)


def fd_gradient_error(u, v, ctx: en.EnergyContext, t: float = 1e-5) -> float:
    exact = en.J_prime(u, v, ctx)
    fd = (en.J(u + t * v, ctx) - en.J(u - t * v, ctx)) / (2 * t)
    return abs(exact - fd) / max(abs(exact), 1e-300)


def consistency_suite(seed: int = 0, n_brute: int = 12, solve_report=None, radial_profile=None,
                      radial_tol: float = 0.01) -> list:
    """FFT vs brute-force D, J' vs finite differences, gauge covariance, equivariance, radial vs grid."""
    rng = np.random.default_rng(seed)
    out = []
    g = Grid(3, 3.0, n_brute)
    ker = RieszKernel(g, 1.0)
    u = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    Dfft, Dbf = D(u, 2.0, ker), brute_force_D(u, 2.0, ker)
    out.append(check("brute_force_D_rel_err", abs(Dfft - Dbf) / Dbf, 0.0, 1e-10, {"seed": seed, "n": n_brute}))

    # h = 1/6: the residual of the gauge-transformed field is resolved below 1e-13
    g = Grid(3, 8.0, 96)
    ker = RieszKernel(g, 1.0)
    pot = make_potentials(g, 1.0, "well", "constant_field", a_args={"strength": 0.1})
    ctx = en.EnergyContext(g, pot, ker, 2.0)
    u = smooth_random_field(g, rng)
    v = smooth_random_field(g, rng)
    out.append(check("gradient_fd_rel_err", fd_gradient_error(u, v, ctx), 0.0, 1e-6, {"seed": seed}))
    phi, gphi = random_lattice_phase(g, rng)
    out.append(check("gauge_covariance_rel", gauge_defect(u, pot, ker, 2.0, phi, gphi), 0.0, 1e-10,
                     {"seed": seed}))
    if solve_report is not None:
        out.append(check("equivariance_defect", solve_report.equivariance_defect, 0.0, 1e-10,
                         {"symmetry": solve_report.symmetry}))
        if radial_profile is not None:
            rel = abs(solve_report.energy - radial_profile.energy) / radial_profile.energy
            out.append(check("radial_vs_grid_energy", rel, 0.0, radial_tol,
                             {"grid": solve_report.grid.to_json(), "m": radial_profile.m_nodes}))
    return sorted(out, key=lambda c: c.name)


COVERAGE = {
    "brute_force_D_rel_err": "double integral D as a kernel quadrature",
    "gradient_fd_rel_err": "derivative of J_{A,V}",
    "gauge_covariance_rel": "gauge covariance of J_{A,V}",
    "equivariance_defect": "fixed-point space of the group action",
    "radial_vs_grid_energy": "limit-problem level E_lambda",
    "decay_rate_u": "exponential decay of the ground state",
    "decay_power_u": "algebraic prefactor of the decay",
    "decay_rate_grad_u": "exponential decay of the gradient",
    "decay_power_grad_u": "algebraic prefactor of the gradient decay",
    "kkstar_ratio_at_0.9rmax": "K * |u|^p vanishes at infinity",
    "kkstar_tail_max_increment": "monotone tail of K * |u|^p",
    "kkstar_tail_power": "mass / r far field of K * |u|^p",
    "kkstar_vanishing": "K * 0 = 0",
}


def write_checks(results: list, out_dir) -> Path:
    """``checks.csv`` (name, measured, lo, hi, pass) plus ``checks.json`` with the coverage table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = sorted(results, key=lambda c: c.name)
    with open(out / "checks.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "measured", "lo", "hi", "pass"])
        for c in results:
            w.writerow([c.name, f"{c.measured:.17g}", f"{c.lo:.17g}", f"{c.hi:.17g}", c.passed])
    payload = {"checks": [c.to_json() for c in results],
               "coverage": {c.name: COVERAGE.get(c.name, "") for c in results}}
    (out / "checks.json").write_text(json.dumps(payload, indent=2, sort_keys=True, default=float))
    return out / "checks.csv"
