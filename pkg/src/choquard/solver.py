"""Equivariant Nehari descent for critical points of J_{A,V} on the grid."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import energy as en
from .field import Grid, save_snapshot
from .symmetry import DegenerateLoop, SymmetrySpec, compat_check, equivariance_defect, symmetrize, winding_number


class DegenerateGuess(ValueError):
    pass


class IncompatiblePotentials(ValueError):
    pass


class NumericalBreakdown(RuntimeError):
    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


@dataclass
class SolveConfig:
    max_iter: int = 400
    step_init: float = 1.0
    step_min: float = 1e-8
    armijo_c: float = 1e-4
    tol_grad: float = 1e-8
    tol_nehari: float = 1e-10
    seed: int = 0
    init: str = "ring_bumps"
    init_params: dict = field(default_factory=dict)
    symmetrize_every: int = 1
    winding_radius: float | None = None

    def __post_init__(self):
        if self.tol_grad <= 0 or self.tol_nehari <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.step_min <= self.step_init:
            raise ValueError("need 0 < step_min <= step_init")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if self.max_iter < 1 or self.symmetrize_every < 1:
            raise ValueError("max_iter and symmetrize_every must be >= 1")

    def to_json(self) -> dict:
        return asdict(self)


def initial_guess(grid: Grid, spec: SymmetrySpec, cfg: SolveConfig) -> np.ndarray:
    """Presets ``ring_bumps``, ``single_bump``, ``random`` and ``zero``."""
    prm = dict(cfg.init_params)
    width = float(prm.get("width", 1.5))
    amp = float(prm.get("amplitude", 1.0))
    X = grid.mesh()
    if cfg.init == "zero":
        return np.zeros(grid.shape, dtype=complex)
    if cfg.init == "single_bump":
        return amp * np.exp(-grid.radius() ** 2 / (2 * width ** 2)).astype(complex)
    if cfg.init == "ring_bumps":
        rho0 = float(prm.get("rho0", 3.0))
        a, b = spec.plane
        u = np.zeros(grid.shape, dtype=complex)
        for j in range(spec.k):
            th = 2 * np.pi * j / spec.k
            c = [0.0] * grid.dim
            c[a], c[b] = rho0 * math.cos(th), rho0 * math.sin(th)
            d2 = sum((x - x0) ** 2 for x, x0 in zip(X, c))
            u = u + spec.tau(j) * np.exp(-d2 / (2 * width ** 2))
        return amp * u
    if cfg.init == "random":
        rng = np.random.default_rng(cfg.seed)
        noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        envelope = np.exp(-grid.radius() ** 2 / (2 * (2 * width) ** 2))
        smooth = np.fft.ifftn(np.fft.fftn(noise) * grid.lowpass(width / 2 ** 0.5))
        return amp * smooth * envelope
    raise ValueError(f"unknown initial guess preset {cfg.init!r}")


@dataclass
class SolveReport:
    u: np.ndarray = field(repr=False)
    grid: Grid
    converged: bool
    iterations: int
    energy: float
    norm2: float
    D: float
    t_drift: float
    grad_residual: float
    nehari_residual: float
    equivariance_defect: float
    winding: int | None
    boundary_mass: float
    wall_clock: float
    config: dict
    symmetry: dict
    trace: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        keys = ("converged", "iterations", "energy", "norm2", "D", "t_drift", "grad_residual",
                "nehari_residual", "equivariance_defect", "winding", "boundary_mass", "wall_clock")
        out = {k: getattr(self, k) for k in keys}
        out.update(config=self.config, symmetry=self.symmetry, grid=self.grid.to_json())
        return out

    def deterministic_fields(self) -> dict:
        out = self.summary()
        out.pop("wall_clock")
        return out


def boundary_mass_fraction(u: np.ndarray, grid: Grid) -> float:
    """Share of ``int |u|^2`` carried by the outermost layer of nodes of the box."""
    edge = grid.half_extent - grid.h
    near = np.zeros(grid.shape, dtype=bool)
    for c in grid.mesh():
        near = near | (np.abs(c) > edge)
    tot = float(np.sum(np.abs(u) ** 2))
    return float(np.sum(np.abs(u[near]) ** 2) / tot) if tot > 0 else 0.0


def _measure(u, ctx, spec, cfg, pr=None):
    pr = pr or en.parts(u, ctx)
    g = en.grad_J(u, ctx, pr)
    res = en.residual(u, ctx, pr)
    g2 = float(np.real(np.vdot(g, res)) * ctx.grid.weight)
    un = en.sigma_norm(u, ctx)
    return pr, g, g2, math.sqrt(max(g2, 0.0)) / un


def _peak_radius(u, spec: SymmetrySpec, grid) -> float:
    """Distance of the largest ``|u|`` from the rotation axis, kept at least four cells away from it."""
    X = grid.mesh()
    a, b = spec.plane
    rho = np.broadcast_to(np.hypot(X[a], X[b]), grid.shape)
    i = np.unravel_index(int(np.argmax(np.abs(u))), grid.shape)
    return float(min(max(rho[i], 4 * grid.h), 0.5 * grid.half_extent))


def finalize(u, ctx, spec, cfg, converged, iterations, trace, wall) -> SolveReport:
    """Recompute every reported quantity from the stored field."""
    pr, _, _, gres = _measure(u, ctx, spec, cfg)
    t = en.nehari_scale(u, ctx, pr)
    wind = None
    if spec.k > 1:
        radius = cfg.winding_radius if cfg.winding_radius is not None else _peak_radius(u, spec, ctx.grid)
        try:
            wind = winding_number(u, radius, spec, ctx.grid)
        except DegenerateLoop:
            wind = None
    return SolveReport(u, ctx.grid, converged, iterations, pr.J(ctx.p), pr.norm2, pr.D, abs(t - 1.0), gres,
                       en.nehari_residual(pr), equivariance_defect(u, spec, ctx.grid), wind,
                       boundary_mass_fraction(u, ctx.grid), wall, cfg.to_json(), spec.to_json(), trace)


def solve(ctx: en.EnergyContext, spec: SymmetrySpec, cfg: SolveConfig | None = None,
          u0: np.ndarray | None = None) -> SolveReport:
    """Iterate ``u <- symmetrize(t (u - s grad_J(u)))`` with Armijo backtracking on max_t J."""
    cfg = cfg or SolveConfig()
    grid = ctx.grid
    compat = compat_check(ctx.pot, spec, grid)
    if not compat.compatible:
        raise IncompatiblePotentials(
            f"potentials not compatible with Z_{spec.k}: V violation {compat.max_V_violation:.3e}, "
            f"A violation {compat.max_A_violation:.3e} (threshold {compat.threshold:.1e}) "
            f"at group element {compat.worst_element}")
    start = time.perf_counter()
    u = initial_guess(grid, spec, cfg) if u0 is None else np.asarray(u0, dtype=complex)
    u = symmetrize(u, spec, grid)
    if not np.any(np.abs(u) > 0):
        raise DegenerateGuess("degenerate initial guess: field is zero after symmetrization, "
                              "Nehari rescaling is undefined")
    try:
        pr = en.parts(u, ctx)
        u = u * en.nehari_scale(u, ctx, pr)
    except en.DegenerateField as exc:
        raise DegenerateGuess(f"degenerate initial guess: {exc}") from exc
    u = symmetrize(u, spec, grid)

    eps = np.finfo(float).eps
    trace = []
    converged = False
    pr = en.parts(u, ctx)
    it = 0
    for it in range(1, cfg.max_iter + 1):
        pr, g, g2, gres = _measure(u, ctx, spec, cfg, pr)
        level = en.fibre_max(pr.norm2, pr.D, ctx.p)
        neh = en.nehari_residual(pr)
        if not (np.isfinite(level) and np.isfinite(gres)):
            raise NumericalBreakdown(f"non-finite energy at iteration {it}", last_good=u)
        trace.append((it, pr.J(ctx.p), gres, neh, equivariance_defect(u, spec, grid)))
        if gres <= cfg.tol_grad and neh <= cfg.tol_nehari:
            converged = True
            break
        if spec.k > 1:
            # J' maps equivariant fields to equivariant fields; projecting the
            # direction keeps round-off in unstable non-equivariant modes from growing
            g = symmetrize(g, spec, grid)
        step = cfg.step_init
        while True:
            cand = u - step * g
            cpr = en.parts(cand, ctx)
            ok = cpr.D > 0 and np.isfinite(cpr.norm2)
            if ok and en.fibre_max(cpr.norm2, cpr.D, ctx.p) <= level - cfg.armijo_c * step * g2 + 64 * eps * level:
                break
            step *= 0.5
            if step < cfg.step_min:
                break
        if step < cfg.step_min:
            break  # line search failed: report as non-converged
        t = en.nehari_scale(cand, ctx, cpr)
        u = t * cand
        pr = en.EnergyParts(cpr.norm2 * t * t, cpr.D * t ** (2 * ctx.p), cpr.Hu * t, cpr.potential * t ** ctx.p)
        if spec.k > 1 and it % cfg.symmetrize_every == 0:
            u = symmetrize(u, spec, grid)
            if not spec.lattice_exact:
                pr = en.parts(u, ctx)
        if not np.all(np.isfinite(u)):
            raise NumericalBreakdown(f"non-finite field at iteration {it}", last_good=trace and u)
    if spec.k > 1:
        u = symmetrize(u, spec, grid)
    return finalize(u, ctx, spec, cfg, converged, it, trace, time.perf_counter() - start)


def save_report(report: SolveReport, ctx: en.EnergyContext, spec: SymmetrySpec, out_dir) -> dict:
    """Write report.json, trace.csv and field.bin; values are recomputed from the field first."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = SolveConfig(**report.config)
    fresh = finalize(report.u, ctx, spec, cfg, report.converged, report.iterations, report.trace,
                     report.wall_clock)
    save_snapshot(out / "field.bin", fresh.u, fresh.grid, kind="solution")
    with open(out / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "J", "grad_res", "nehari_res", "equivariance_defect"])
        for row in fresh.trace:
            w.writerow([row[0]] + [f"{x:.17g}" for x in row[1:]])
    summary = fresh.summary()
    summary["ps_monitor"] = ps_monitor(fresh).to_json() if fresh.iterations >= 10 else None
    (out / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=float))
    return summary


@dataclass
class PSSummary:
    is_ps_like: bool
    c_estimate: float
    residual_slope: float
    stagnated: bool
    boundary_mass: float
    max_J_increase: float
    notes: list

    def to_json(self) -> dict:
        return asdict(self)


def ps_monitor(report: SolveReport, boundary_floor: float = 1e-6) -> PSSummary:
    """Numerical Palais-Smale evidence: bounded level, vanishing residual, no escaping mass."""
    if len(report.trace) < 10:
        raise ValueError(f"ps_monitor needs >= 10 iterations, trace has {len(report.trace)}")
    tr = np.array([row[:3] for row in report.trace], dtype=float)
    its, Js, res = tr[:, 0], tr[:, 1], tr[:, 2]
    tail = slice(len(its) // 2, None)
    slope = float(np.polyfit(its[tail], np.log10(np.maximum(res[tail], 1e-300)), 1)[0])
    rise = float(np.max(np.diff(Js), initial=0.0))
    notes = []
    stagnated = not report.converged and slope > -1e-3
    if stagnated:
        notes.append("residual stagnates")
    if report.boundary_mass > boundary_floor:
        notes.append(f"boundary-mass fraction {report.boundary_mass:.3e} exceeds {boundary_floor:.0e}")
        stagnated = True
    if not report.converged:
        notes.append("not converged")
    ps_like = report.converged and not stagnated
    return PSSummary(ps_like, float(report.energy), slope, stagnated, report.boundary_mass, rise, notes)
