"""Strict TOML run configuration and deterministic JSON output."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .params import ProblemParams
from .radial import RadialMesh
from .solver import SolveConfig
from .symmetry import SymmetrySpec


class ConfigError(ValueError):
    pass


@dataclass
class GridBlock:
    half_extent: float = 12.0
    n: int = 64
    kernel: str = "pointwise"


@dataclass
class PotentialBlock:
    v_preset: str = "constant"
    a_preset: str = "zero"
    v_args: dict = field(default_factory=dict)
    a_args: dict = field(default_factory=dict)


@dataclass
class RadialBlock:
    lambdas: list = field(default_factory=lambda: [1.0])
    r_max: float | None = None
    m_nodes: int = 3000
    max_iter: int = 2000
    tol_grad: float = 1e-11


@dataclass
class BumpsBlock:
    rho0: float = 24.0
    y_norms: list = field(default_factory=lambda: [18.0, 20.0, 22.0, 24.0, 26.0, 28.0, 30.0])


@dataclass
class DecayBlock:
    R_list: list = field(default_factory=lambda: [4.0 + i for i in range(11)])


@dataclass
class RunConfig:
    problem: ProblemParams
    grid: GridBlock
    symmetry: SymmetrySpec
    potential: PotentialBlock
    solver: SolveConfig
    radial: RadialBlock
    bumps: BumpsBlock
    decay: DecayBlock
    workflow: str | None = None
    out: str | None = None
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    def meshes(self) -> list:
        return [RadialMesh(self.radial.r_max if self.radial.r_max is not None else 30.0 / math.sqrt(lam),
                           self.radial.m_nodes, self.problem.dim) for lam in self.radial.lambdas]


_TOP = {"workflow", "out", "seed", "nonrigorous", "problem", "grid", "symmetry", "potential", "solver",
        "radial", "bumps", "decay"}
_PROBLEM = {"dim", "alpha", "p", "v_inf", "lambda", "kappa", "c0", "rho", "epsilon_cutoff", "claims"}
_FREEFORM = {"v_args", "a_args", "init_params"}


def _strict(block: dict, allowed: set, where: str) -> None:
    extra = sorted(set(block) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(extra)}")


def _build(cls, block: dict, where: str):
    names = {f.name for f in fields(cls)}
    _strict(block, names, where)
    for k, v in block.items():
        if k in _FREEFORM:
            if not isinstance(v, dict) or not all(isinstance(x, (int, float, str, bool)) for x in v.values()):
                raise ConfigError(f"[{where}.{k}] must be a table of scalars")
    try:
        return cls(**block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def parse_config(raw: dict, seed: int | None = None, nonrigorous: bool | None = None) -> RunConfig:
    _strict(raw, _TOP, "top level")
    prob = dict(raw.get("problem", {}))
    _strict(prob, _PROBLEM, "problem")
    if "lambda" in prob:
        if "v_inf" in prob:
            raise ConfigError("[problem] sets both lambda and v_inf")
        prob["v_inf"] = prob.pop("lambda")
    prob["claims"] = frozenset(prob.get("claims", []))
    prob.setdefault("dim", 3)
    prob.setdefault("alpha", 1.0)
    prob.setdefault("p", 2.0)
    flag = raw.get("nonrigorous", False) if nonrigorous is None else (nonrigorous or raw.get("nonrigorous", False))
    try:
        problem = ProblemParams(nonrigorous=bool(flag), **prob)
    except TypeError as exc:
        raise ConfigError(f"[problem]: {exc}") from exc
    sym = dict(raw.get("symmetry", {}))
    if "plane" in sym:
        sym["plane"] = tuple(sym["plane"])
    symmetry = _build(SymmetrySpec, sym, "symmetry")
    run_seed = int(raw.get("seed", 0) if seed is None else seed)
    solver_block = dict(raw.get("solver", {}))
    solver_block.setdefault("seed", run_seed)
    if seed is not None:
        solver_block["seed"] = run_seed
    cfg = RunConfig(
        problem=problem,
        grid=_build(GridBlock, raw.get("grid", {}), "grid"),
        symmetry=symmetry,
        potential=_build(PotentialBlock, raw.get("potential", {}), "potential"),
        solver=_build(SolveConfig, solver_block, "solver"),
        radial=_build(RadialBlock, raw.get("radial", {}), "radial"),
        bumps=_build(BumpsBlock, raw.get("bumps", {}), "bumps"),
        decay=_build(DecayBlock, raw.get("decay", {}), "decay"),
        workflow=raw.get("workflow"),
        out=raw.get("out"),
        seed=run_seed,
        raw=raw,
    )
    if cfg.grid.kernel not in ("pointwise", "spectral"):
        raise ConfigError(f"[grid] kernel must be 'pointwise' or 'spectral', got {cfg.grid.kernel!r}")
    if not cfg.radial.lambdas or any(not float(x) > 0 for x in cfg.radial.lambdas):
        raise ConfigError("[radial] lambdas must be a nonempty list of positive numbers")
    try:
        cfg.meshes()
    except ValueError as exc:
        raise ConfigError(f"[radial]: {exc}") from exc
    return cfg


def load_config(path, seed: int | None = None, nonrigorous: bool | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError:
        raise
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(raw, seed=seed, nonrigorous=nonrigorous)


# -- JSON with 17 significant digits -----------------------------------------------

def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with sorted keys and every float written as ``%.17g``."""
    import json

    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if hasattr(obj, "item") and not isinstance(obj, (list, tuple, dict)):
        return dumps(obj.item(), indent, _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, frozenset, set)):
        seq = sorted(obj) if isinstance(obj, (set, frozenset)) else list(obj)
        if not seq:
            return "[]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")
