"""The functional J_{A,V}, its derivative and the Nehari fibre maps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from .field import Grid, PotentialPair, magnetic_hamiltonian
from .riesz import RieszKernel, density, nonlinear_term, riesz_convolve


class DegenerateField(ValueError):
    """Nehari scaling is undefined (u = 0 or D(u) = 0)."""


@dataclass(eq=False)
class EnergyContext:
    grid: Grid
    pot: PotentialPair
    kernel: RieszKernel
    p: float
    sigma: float = field(default=None)

    def __post_init__(self):
        self.p = float(self.p)
        if self.sigma is None:
            self.sigma = float(self.pot.v_inf)
        if self.kernel.grid != self.grid:
            raise ValueError("kernel and context grids differ")
        self.grid.check(self.pot.V)
        self._precond = self.grid.k2() + self.sigma


@dataclass
class EnergyParts:
    """Everything one evaluation of J needs, kept for reuse."""

    norm2: float
    D: float
    Hu: np.ndarray
    potential: np.ndarray

    def J(self, p: float) -> float:
        return 0.5 * self.norm2 - self.D / (2 * p)


def parts(u: np.ndarray, ctx: EnergyContext) -> EnergyParts:
    g = ctx.grid
    Hu = magnetic_hamiltonian(u, ctx.pot, g)
    norm2 = float(np.real(np.vdot(u, Hu)) * g.weight)
    f = density(u, ctx.p)
    phi = riesz_convolve(f, ctx.kernel)
    Dv = float(np.sum(phi * f) * g.weight)
    return EnergyParts(norm2, Dv, Hu, phi)


def J(u: np.ndarray, ctx: EnergyContext) -> float:
    return parts(u, ctx).J(ctx.p)


def residual(u: np.ndarray, ctx: EnergyContext, pr: EnergyParts | None = None) -> np.ndarray:
    """L2 representative of J'(u): ``H u - (K * |u|^p)|u|^(p-2) u``."""
    pr = pr or parts(u, ctx)
    return pr.Hu - nonlinear_term(u, ctx.p, pr.potential)


def J_prime(u: np.ndarray, v: np.ndarray, ctx: EnergyContext) -> float:
    return float(np.real(np.sum(residual(u, ctx) * np.conj(v))) * ctx.grid.weight)


def apply_precond_inverse(r: np.ndarray, ctx: EnergyContext) -> np.ndarray:
    return fft.ifftn(fft.fftn(r) / ctx._precond)


def sigma_inner(a: np.ndarray, b: np.ndarray, ctx: EnergyContext) -> float:
    """``Re int (grad a . conj grad b + sigma a conj b)``, evaluated spectrally."""
    Pb = fft.ifftn(fft.fftn(b) * ctx._precond)
    return float(np.real(np.vdot(Pb, a)) * ctx.grid.weight)


def sigma_norm(a: np.ndarray, ctx: EnergyContext) -> float:
    return float(np.sqrt(max(sigma_inner(a, a, ctx), 0.0)))


def grad_J(u: np.ndarray, ctx: EnergyContext, pr: EnergyParts | None = None) -> np.ndarray:
    """Riesz representative of J'(u) for the inner product of ``-Laplace + sigma``."""
    return apply_precond_inverse(residual(u, ctx, pr), ctx)


def _fibre_ratio(norm2: float, Dv: float) -> float:
    if not norm2 > 0 or not Dv > 0:
        raise DegenerateField(f"Nehari scaling undefined: ||u||^2={norm2:.3g}, D(u)={Dv:.3g}")
    return norm2 / Dv


def nehari_scale(u: np.ndarray, ctx: EnergyContext, pr: EnergyParts | None = None) -> float:
    """``t_u = (||u||^2 / D(u))^(1/(2p-2))``, the maximiser of ``t -> J(t u)``."""
    pr = pr or parts(u, ctx)
    return _fibre_ratio(pr.norm2, pr.D) ** (1.0 / (2 * ctx.p - 2))


def mountain_pass_value(u: np.ndarray, ctx: EnergyContext, pr: EnergyParts | None = None) -> float:
    """``max_t J(t u) = (p-1)/(2p) (||u||^2 / D(u)^(1/p))^(p/(p-1))`` in closed form."""
    pr = pr or parts(u, ctx)
    return fibre_max(pr.norm2, pr.D, ctx.p)


def fibre_max(norm2: float, Dv: float, p: float) -> float:
    _fibre_ratio(norm2, Dv)
    return (p - 1) / (2 * p) * (norm2 / Dv ** (1 / p)) ** (p / (p - 1))


def nehari_residual(pr: EnergyParts) -> float:
    return abs(pr.norm2 - pr.D) / pr.norm2 if pr.norm2 > 0 else float("inf")
