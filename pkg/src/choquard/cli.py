"""Command line entry point: validate, ground, solve, bumps, decay, report.

Exit codes: 0 success, 1 validation or configuration failure, 2 numerical
non-convergence, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, multibump
from .config import ConfigError, RunConfig, dumps, load_config
from .energy import EnergyContext
from .field import Grid, make_potentials
from .params import delta_tau, lambda_set, validate
from .radial import NonConvergence, RadialOperator, decay_fit, solve_ground_state
from .riesz import RieszKernel
from .solver import DegenerateGuess, IncompatiblePotentials, NumericalBreakdown, save_report, solve
from .symmetry import compat_check

EXIT_OK, EXIT_INVALID, EXIT_NONCONV, EXIT_IO = 0, 1, 2, 3


class Artifacts:
    """Output directory that records every file it writes in a hashed manifest."""

    def __init__(self, root, command: str, cfg: RunConfig | None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.cfg = cfg

    def write_text(self, name: str, text: str) -> Path:
        path = self.root / name
        path.write_text(text)
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write_text(name, dumps(obj) + "\n")

    def write_csv(self, name: str, header, rows) -> Path:
        path = self.root / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([format(x, ".17g") if isinstance(x, float) else x for x in row])
        return path

    def finish(self) -> None:
        files = {}
        for path in sorted(self.root.rglob("*")):
            if path.is_file() and path.name not in ("manifest.json", "report.md", "summary.csv"):
                files[path.relative_to(self.root).as_posix()] = sha256(path)
        manifest = {"command": self.command, "files": files,
                    "config": self.cfg.raw if self.cfg is not None else {},
                    "seed": self.cfg.seed if self.cfg is not None else None}
        (self.root / "manifest.json").write_text(dumps(manifest) + "\n")


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _print(obj) -> None:
    sys.stdout.write(dumps(obj) + "\n")


def _grid_setup(cfg: RunConfig):
    grid = Grid(cfg.problem.dim, cfg.grid.half_extent, cfg.grid.n)
    pot = make_potentials(grid, float(cfg.problem.v_inf), cfg.potential.v_preset, cfg.potential.a_preset,
                          cfg.potential.v_args, cfg.potential.a_args)
    return grid, pot


def energy_exponent(dim: int, alpha: float, p: float) -> float:
    """Exponent b in ``E_lambda = lambda^b E_1`` from ``u(x) = lambda^a v(sqrt(lambda) x)``."""
    a = (dim - alpha + 2) / (4 * (p - 1))
    return 2 * a + 1 - dim / 2


# -- commands --------------------------------------------------------------------

def cmd_validate(cfg: RunConfig, art: Artifacts) -> int:
    prob = cfg.problem
    rep = validate(prob, cfg.symmetry)
    out = rep.to_json()
    try:
        out["lambda_set"] = lambda_set(prob).to_json()
    except (ZeroDivisionError, ValueError) as exc:
        out["lambda_set"] = {"error": str(exc)}
    out["delta_tau"] = delta_tau(cfg.symmetry)
    compatible = True
    if prob.dim in (2, 3) and max(cfg.symmetry.plane) < prob.dim:
        try:
            grid, pot = _grid_setup(cfg)
            cr = compat_check(pot, cfg.symmetry, grid)
            out["compat"] = cr.to_json()
            compatible = cr.compatible
            if not compatible:
                out["violations"].append(f"potentials not compatible with Z_{cfg.symmetry.k} "
                                         f"(worst group element {cr.worst_element} at node {list(cr.worst_node)})")
        except ValueError as exc:
            compatible = False
            out["violations"].append(f"potential setup failed: {exc}")
    out["admissible"] = rep.admissible
    out["compatible"] = compatible
    art.write_json("validate.json", out)
    art.finish()
    _print(out)
    return EXIT_OK if rep.admissible and compatible else EXIT_INVALID


def cmd_ground(cfg: RunConfig, art: Artifacts) -> int:
    prob = cfg.problem
    dim, alpha, p = prob.dim, float(prob.alpha), float(prob.p)
    rows, fits, checks = [], [], []
    for i, (lam, mesh) in enumerate(zip(cfg.radial.lambdas, cfg.meshes())):
        try:
            prof = solve_ground_state(float(lam), dim, alpha, p, mesh, max_iter=cfg.radial.max_iter,
                                      tol_grad=cfg.radial.tol_grad)
        except NonConvergence as exc:
            if exc.profile is not None:
                art.write_csv(f"trace_{i}.csv", ["iter", "level", "grad_res", "nehari_res"], exc.profile.trace)
            art.finish()
            sys.stderr.write(f"non-convergence: {exc}\n")
            return EXIT_NONCONV
        fit = decay_fit(prof)
        prof.save(art.root / f"profile_{i}.csv", extra={"decay_fit": fit.to_json()})
        rows.append((float(lam), prof.energy, prof.nehari_residual, prof.grad_residual, prof.iterations,
                     fit.rate, fit.power))
        fits.append(fit.to_json())
        try:
            checks += [_tag(c, i) for c in analysis.appendix_decay_suite(prof)]
        except ValueError as exc:
            sys.stderr.write(f"decay suite skipped for lambda={lam}: {exc}\n")
    art.write_csv("energies.csv", ["lambda", "energy", "nehari_residual", "grad_residual", "iterations",
                                   "decay_rate", "decay_power"], rows)
    summary = {"lambdas": [r[0] for r in rows], "energies": [r[1] for r in rows],
               "expected_exponent": energy_exponent(dim, alpha, p), "decay_fits": fits}
    if len(rows) >= 2:
        lam = np.log([r[0] for r in rows])
        E = np.log([r[1] for r in rows])
        summary["fitted_exponent"] = float(np.polyfit(lam, E, 1)[0])
    if checks:
        analysis.write_checks(checks, art.root)
    art.write_json("ground.json", summary)
    art.finish()
    _print(summary)
    return EXIT_OK


def _tag(c, i):
    c.name = f"{c.name}[{i}]"
    return c


def cmd_solve(cfg: RunConfig, art: Artifacts) -> int:
    prob = cfg.problem
    rep = validate(prob, cfg.symmetry)
    if not rep.admissible:
        _print(rep.to_json())
        return EXIT_INVALID
    grid, pot = _grid_setup(cfg)
    ctx = EnergyContext(grid, pot, RieszKernel(grid, float(prob.alpha), cfg.grid.kernel), float(prob.p))
    try:
        report = solve(ctx, cfg.symmetry, cfg.solver)
    except (DegenerateGuess, IncompatiblePotentials) as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_INVALID
    except NumericalBreakdown as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_NONCONV
    summary = save_report(report, ctx, cfg.symmetry, art.root)
    art.finish()
    summary.pop("wall_clock", None)
    _print({k: summary[k] for k in ("converged", "iterations", "energy", "grad_residual", "nehari_residual",
                                    "equivariance_defect", "winding")})
    return EXIT_OK if report.converged else EXIT_NONCONV


def _radial_vA2(cfg: RunConfig):
    prob = cfg.problem
    if cfg.potential.a_preset != "zero":
        raise ConfigError("the threshold certificate is evaluated for A = 0 presets only")
    v_inf = float(prob.v_inf)
    if cfg.potential.v_preset == "exp_approach":
        return multibump.exp_approach(v_inf, float(prob.c0), float(prob.kappa))
    if cfg.potential.v_preset == "constant":
        return lambda rho: np.full_like(np.asarray(rho, dtype=float), v_inf)
    raise ConfigError(f"certificate needs a radial preset ('exp_approach' or 'constant'), "
                      f"got {cfg.potential.v_preset!r}")


def _base_profile(cfg: RunConfig):
    prob = cfg.problem
    lam = float(prob.v_inf)
    r_max = cfg.radial.r_max if cfg.radial.r_max is not None else 30.0 / math.sqrt(lam)
    from .radial import RadialMesh
    mesh = RadialMesh(r_max, cfg.radial.m_nodes, prob.dim)
    return solve_ground_state(lam, prob.dim, float(prob.alpha), float(prob.p), mesh,
                              max_iter=cfg.radial.max_iter, tol_grad=cfg.radial.tol_grad)


def cmd_bumps(cfg: RunConfig, art: Artifacts) -> int:
    prob = cfg.problem
    vA2 = _radial_vA2(cfg)
    try:
        prof = _base_profile(cfg)
    except NonConvergence as exc:
        sys.stderr.write(f"non-convergence: {exc}\n")
        return EXIT_NONCONV
    ys = sorted(set(float(y) for y in cfg.bumps.y_norms) | {float(cfg.bumps.rho0)})
    certs, fit = multibump.certificate_sweep(prof, cfg.symmetry, vA2, float(prob.v_inf), float(prob.c0),
                                             float(prob.kappa), float(prob.rho), float(prob.epsilon_cutoff), ys)
    main = next(c for c in certs if c.rho0 == float(cfg.bumps.rho0))
    art.write_csv("gaps.csv", ["rho0", "R_y", "gap", "gap_full", "cross_term", "max_t_J_theta", "k_E_Vinf"],
                  [(c.rho0, c.R_y, c.gap, c.gap_full, c.cross_term, c.max_t_J_theta, c.k_E_Vinf) for c in certs])
    payload = {"certificate": main.to_json(), "sweep": [c.to_json() for c in certs],
               "fit": fit.to_json() if fit else None, "kappa": float(prob.kappa), "E_Vinf": prof.energy}
    art.write_json("certificates.json", payload)
    art.finish()
    _print({"passed": main.passed, "gap": main.gap, "kappa_fit": fit.rate if fit else None,
            "refusals": main.refusals})
    return EXIT_OK if main.passed else EXIT_INVALID


def cmd_decay(cfg: RunConfig, art: Artifacts) -> int:
    prob = cfg.problem
    try:
        prof = _base_profile(cfg)
    except NonConvergence as exc:
        sys.stderr.write(f"non-convergence: {exc}\n")
        return EXIT_NONCONV
    op = RadialOperator(prof.mesh, prof.alpha)
    eps = float(prob.epsilon_cutoff)
    scan = multibump.cutoff_decay_scan(prof, prof.lam, eps, cfg.decay.R_list, op=op)
    art.write_csv("cutoff_scan.csv", ["R", "delta_D", "delta_grad"], scan.rows())
    ctx = {"lambda": prof.lam, "p": prof.p, "eps": eps}
    checks = [
        analysis.check("cutoff_slope_D", scan.slope_D, 0.9 * scan.expected_D, 1.1 * scan.expected_D, ctx),
        analysis.check("cutoff_slope_grad", scan.slope_grad, 0.9 * scan.expected_grad,
                       1.1 * scan.expected_grad, ctx),
    ]
    checks += analysis.appendix_decay_suite(prof)
    checks += analysis.kkstar_decay_of_convolution(prof, op)
    analysis.write_checks(checks, art.root)
    art.finish()
    _print({c.name: {"measured": c.measured, "pass": c.passed} for c in checks})
    return EXIT_OK if all(c.passed for c in checks) else EXIT_INVALID


def _verify(d: Path) -> dict:
    man = json.loads((d / "manifest.json").read_text())
    for name, digest in man["files"].items():
        path = d / name
        if not path.is_file() or sha256(path) != digest:
            raise ValueError(f"hash verification failed for {path}")
    return man


def cmd_report(run_dir) -> int:
    root = Path(run_dir)
    if not root.is_dir():
        sys.stderr.write(f"{root} is not a directory\n")
        return EXIT_IO
    dirs = sorted({p.parent for p in root.rglob("manifest.json")})
    if not dirs:
        sys.stderr.write("no artifacts\n")
        return EXIT_INVALID
    lines = ["# Run report", ""]
    rows = []
    for d in dirs:
        try:
            man = _verify(d)
        except ValueError as exc:
            sys.stderr.write(f"{exc}\n")
            return EXIT_INVALID
        rel = d.relative_to(root).as_posix() or "."
        lines += [f"## {man['command']}: `{rel}`", ""]
        if (d / "report.json").exists():
            rep = json.loads((d / "report.json").read_text())
            lines += ["| quantity | value |", "|---|---|"]
            for key in ("converged", "iterations", "energy", "norm2", "D", "grad_residual", "nehari_residual",
                        "equivariance_defect", "winding", "boundary_mass"):
                lines.append(f"| {key} | {rep.get(key)} |")
                rows.append((rel, "solve", key, rep.get(key)))
            lines.append("")
        if (d / "certificates.json").exists():
            cert = json.loads((d / "certificates.json").read_text())
            lines += ["| rho0 | R_y | gap | gap_full | cross_term | passed |", "|---|---|---|---|---|---|"]
            for c in cert["sweep"]:
                lines.append(f"| {c['rho0']} | {c['R_y']} | {c['gap']} | {c['gap_full']} | {c['cross_term']} "
                             f"| {c['passed']} |")
                rows.append((rel, "bumps", f"gap@{c['rho0']}", c["gap"]))
            if cert.get("fit"):
                lines.append(f"\nfitted gap rate {cert['fit']['rate']} (kappa {cert['kappa']})")
            lines.append("")
        if (d / "energies.csv").exists():
            with open(d / "energies.csv") as fh:
                table = list(csv.reader(fh))
            lines += ["| " + " | ".join(table[0]) + " |", "|" + "---|" * len(table[0])]
            lines += ["| " + " | ".join(r) + " |" for r in table[1:]]
            for r in table[1:]:
                rows.append((rel, "ground", f"E@{r[0]}", r[1]))
            lines.append("")
        if (d / "checks.csv").exists():
            with open(d / "checks.csv") as fh:
                table = list(csv.reader(fh))
            lines += ["| check | measured | lo | hi | pass |", "|---|---|---|---|---|"]
            lines += ["| " + " | ".join(r) + " |" for r in table[1:]]
            for r in table[1:]:
                rows.append((rel, "check", r[0], r[1]))
            lines.append("")
    (root / "report.md").write_text("\n".join(lines) + "\n")
    with open(root / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["artifact", "kind", "quantity", "value"])
        w.writerows(rows)
    sys.stdout.write(f"wrote {root / 'report.md'}\n")
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "ground": cmd_ground, "solve": cmd_solve, "bumps": cmd_bumps,
            "decay": cmd_decay}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="choquard", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="TOML run configuration")
        sp.add_argument("--out", help="artifact directory (overrides the config)")
        sp.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
        sp.add_argument("--nonrigorous", action="store_true", help="allow N = 2 smoke runs")
    sp = sub.add_parser("report")
    sp.add_argument("run_dir")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        try:
            return cmd_report(args.run_dir)
        except OSError as exc:
            sys.stderr.write(f"I/O error: {exc}\n")
            return EXIT_IO
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        sys.stderr.write("--seed must be an unsigned 64-bit integer\n")
        return EXIT_INVALID
    try:
        cfg = load_config(args.config, seed=args.seed, nonrigorous=args.nonrigorous or None)
        out = args.out or cfg.out or f"runs/{args.command}"
        art = Artifacts(out, args.command, cfg)
        return COMMANDS[args.command](cfg, art)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_INVALID
    except OSError as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
