"""Problem parameters, admissibility checks and the exponent set Lambda(alpha, p)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import TYPE_CHECKING, Optional, Union

if TYPE_CHECKING:
    from .symmetry import SymmetrySpec

Number = Union[int, float, Fraction]

FLOAT_TOL = 1e-12


def exact(x: Number) -> Fraction:
    """Rational value of ``x``; floats are read through their shortest decimal repr."""
    if isinstance(x, Rational):
        return Fraction(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite parameter {x!r}")
    return Fraction(repr(float(x)))


@dataclass(frozen=True)
class Interval:
    """Real interval with explicit open/closed ends. ``hi=None`` means +inf."""

    lo: Fraction
    hi: Optional[Fraction]
    lo_closed: bool
    hi_closed: bool
    name: str = ""

    @property
    def empty(self) -> bool:
        if self.hi is None:
            return False
        if self.lo < self.hi:
            return False
        return not (self.lo == self.hi and self.lo_closed and self.hi_closed)

    def __contains__(self, x: Number) -> bool:
        q = exact(x)
        above = q >= self.lo if self.lo_closed else q > self.lo
        if self.hi is None:
            return above
        below = q <= self.hi if self.hi_closed else q < self.hi
        return above and below

    def intersect(self, other: "Interval", name: str = "") -> "Interval":
        if self.lo > other.lo:
            lo, lo_closed = self.lo, self.lo_closed
        elif other.lo > self.lo:
            lo, lo_closed = other.lo, other.lo_closed
        else:
            lo, lo_closed = self.lo, self.lo_closed and other.lo_closed
        if self.hi is None:
            hi, hi_closed = other.hi, other.hi_closed
        elif other.hi is None or self.hi < other.hi:
            hi, hi_closed = self.hi, self.hi_closed
        elif other.hi < self.hi:
            hi, hi_closed = other.hi, other.hi_closed
        else:
            hi, hi_closed = self.hi, self.hi_closed and other.hi_closed
        return Interval(lo, hi, lo_closed, hi_closed, name or f"{self.name}&{other.name}")

    def to_json(self) -> dict:
        return {
            "lo": float(self.lo),
            "hi": None if self.hi is None else float(self.hi),
            "lo_closed": self.lo_closed,
            "hi_closed": self.hi_closed,
            "text": str(self),
        }

    def __str__(self) -> str:
        if self.empty:
            return "{}"
        left = "[" if self.lo_closed else "("
        right = "]" if (self.hi is not None and self.hi_closed) else ")"
        hi = "inf" if self.hi is None else str(self.hi)
        return f"{left}{self.lo}, {hi}{right}"


@dataclass(frozen=True)
class ProblemParams:
    dim: int
    alpha: Number
    p: Number
    v_inf: Number = 1.0
    kappa: Number = 0.5
    c0: Number = 1.0
    rho: Number = 1.0
    epsilon_cutoff: Number = 0.1
    claims: frozenset = field(default_factory=frozenset)
    nonrigorous: bool = False

    @property
    def lam(self) -> float:
        return float(self.v_inf)


@dataclass
class ValidationReport:
    admissible: bool
    violations: list
    nonrigorous: bool = False

    def to_json(self) -> dict:
        return {
            "admissible": self.admissible,
            "violations": list(self.violations),
            "nonrigorous": self.nonrigorous,
        }


@dataclass(frozen=True)
class ExponentSet:
    r: float
    pr: float
    intervals: tuple
    intersection: Interval
    first_empty: Optional[str] = None

    @property
    def empty(self) -> bool:
        return self.intersection.empty

    def to_json(self) -> dict:
        return {
            "r": self.r,
            "pr": self.pr,
            "intervals": [iv.to_json() | {"name": iv.name} for iv in self.intervals],
            "intersection": self.intersection.to_json(),
            "empty": self.empty,
            "first_empty": self.first_empty,
        }


def standing_window(dim: int, alpha: Number) -> Interval:
    """Open window of admissible p: (2 - alpha/N, (2N - alpha)/(N - 2))."""
    n, a = Fraction(dim), exact(alpha)
    hi = None if dim <= 2 else (2 * n - a) / (n - 2)
    return Interval(2 - a / n, hi, False, False, "standing")


def validate(params: ProblemParams, sym: Optional["SymmetrySpec"] = None) -> ValidationReport:
    """Check the standing assumptions and any claimed hypotheses; never raises."""
    v: list[str] = []
    n = params.dim
    if not isinstance(n, int) or n < 2:
        return ValidationReport(False, [f"dim N={n!r} must be an integer >= 2"])
    if n == 2 and not params.nonrigorous:
        v.append("N=2 requires the nonrigorous flag (theory needs N >= 3)")
    a = exact(params.alpha)
    p = exact(params.p)
    if not 0 < a < n:
        v.append(f"alpha={float(a)} must lie in (0, N={n})")
    win = standing_window(n, a)
    if not p > win.lo:
        v.append(f"p > 2 - alpha/N = {float(win.lo):.17g} violated (p={float(p)})")
    if win.hi is not None and not p < win.hi:
        v.append(f"p < (2N - alpha)/(N - 2) = {float(win.hi):.17g} violated (p={float(p)})")
    for name in ("v_inf", "kappa", "c0", "rho"):
        if not float(getattr(params, name)) > 0:
            v.append(f"{name}={getattr(params, name)!r} must be positive")
    eps = float(params.epsilon_cutoff)
    if not 0 < eps < 1:
        v.append(f"epsilon_cutoff={eps} must lie in (0, 1)")

    if "H1" in params.claims:
        if p < 2:
            v.append(f"H1: p >= 2 violated (p={float(p)})")
        if 0 < a < n and lambda_set(params).empty:
            v.append("H1: Lambda(alpha,p) is empty")
    if "H2" in params.claims:
        if sym is None:
            v.append("H2: claimed without a symmetry spec (delta_tau unknown)")
        else:
            bound = 2 * delta_tau(sym) * math.sqrt(float(params.v_inf))
            if not float(params.kappa) < bound:
                v.append(f"H2: kappa < 2*delta_tau*sqrt(V_inf) = {bound:.17g} violated "
                         f"(kappa={float(params.kappa)})")
    return ValidationReport(not v, v, nonrigorous=(n == 2))


def lambda_set(params: ProblemParams) -> ExponentSet:
    """The four defining intervals of Lambda(alpha, p) and their intersection."""
    n = Fraction(params.dim)
    a = exact(params.alpha)
    p = exact(params.p)
    sob_hi = None if params.dim <= 2 else 2 * n / (n - 2)
    ivs = (
        Interval(Fraction(2), sob_hi, True, True, "sobolev"),
        Interval(p, p * n / (n - a), False, False, "riesz"),
        Interval((2 * p - 2) * n / (n + 2 - a), (2 * p - 1) * n / (n + 2 - a), False, True, "bootstrap"),
        Interval((2 * p - 1) * n / (2 * n - a), None, True, False, "hls"),
    )
    acc = ivs[0]
    first_empty = None
    for iv in ivs[1:]:
        acc = acc.intersect(iv)
        if acc.empty and first_empty is None:
            first_empty = acc.name
    r = float(2 * n / (2 * n - a))
    return ExponentSet(r, float(p) * r, ivs, acc, first_empty)


def delta_tau(sym: "SymmetrySpec") -> float:
    """Half the minimal orbit gap on the unit circle of the rotation plane.

    Raises ValueError when no point has isotropy inside ker(tau) (H0 fails).
    """
    if sym.k < 1:
        raise ValueError(f"group order k={sym.k} must be >= 1")
    if not sym.h0_holds():
        raise ValueError(f"H0 violated: no point has isotropy inside ker tau for k={sym.k}, m={sym.m}")
    if sym.k == 1:
        return 1.0
    return math.sin(math.pi / sym.k)
