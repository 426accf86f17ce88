"""Ground states of the limit problem ``-Lap u + lam u = (K * u^p) u^(p-1)`` on a radial mesh.

The mesh is cell-centred, ``r_i = (i + 1/2) h`` on ``[0, r_max]``, with
weights ``|S^{N-1}| r_i^{N-1} h``.  The Dirichlet energy is summed over
faces ``(i+1) h`` with a zero ghost value beyond ``r_max``; the face at the
origin has zero area, which is the Neumann condition.  Every discrete
quantity is an exact quadratic or bilinear form, so the discrete gradient is
the true derivative of the discrete energy.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special
from scipy.linalg import solve_banded


def sphere_area(dim: int) -> float:
    """Surface area of the unit sphere S^{dim-1} (S^0 has two points)."""
    return 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)


class NonConvergence(RuntimeError):
    def __init__(self, message, profile=None):
        super().__init__(message)
        self.profile = profile


@dataclass(frozen=True)
class RadialMesh:
    r_max: float
    m_nodes: int
    dim: int = 3

    def __post_init__(self):
        if self.m_nodes < 16:
            raise ValueError(f"m_nodes={self.m_nodes} too small (need >= 16)")
        if not self.r_max > 0:
            raise ValueError("r_max must be positive")
        if self.dim < 2:
            raise ValueError("radial mesh needs dim >= 2")

    @property
    def h(self) -> float:
        return self.r_max / self.m_nodes

    @property
    def r(self) -> np.ndarray:
        return (np.arange(self.m_nodes) + 0.5) * self.h

    @property
    def weights(self) -> np.ndarray:
        return sphere_area(self.dim) * self.r ** (self.dim - 1) * self.h

    @property
    def face_weights(self) -> np.ndarray:
        faces = np.arange(1, self.m_nodes + 1) * self.h
        return sphere_area(self.dim) * faces ** (self.dim - 1) / self.h


def _shell_kernel(r: np.ndarray, s: np.ndarray, dim: int, alpha: float) -> np.ndarray:
    """``int_0^pi (r^2 + s^2 - 2 r s cos t)^(-alpha/2) sin^(N-2) t dt`` for r != s."""
    big = np.maximum(r, s)
    x2 = (np.minimum(r, s) / big) ** 2
    b = special.beta((dim - 1) / 2, 0.5)
    return big ** (-alpha) * b * special.hyp2f1(alpha / 2, alpha / 2 - (dim - 2) / 2, dim / 2, x2)


class RadialOperator:
    """Discrete radial Riesz potential and the pieces of J_lambda on one mesh."""

    def __init__(self, mesh: RadialMesh, alpha: float):
        self.mesh = mesh
        self.alpha = float(alpha)
        if not 0 < self.alpha < mesh.dim:
            raise ValueError(f"alpha={alpha} must lie in (0, {mesh.dim})")
        self.newtonian = mesh.dim == 3 and self.alpha == 1.0
        self._matrix = None if self.newtonian else self._build_matrix()

    def _build_matrix(self) -> np.ndarray:
        mesh, a = self.mesh, self.alpha
        r, h, N = mesh.r, mesh.h, mesh.dim
        R, S = np.meshgrid(r, r, indexing="ij")
        with np.errstate(divide="ignore", invalid="ignore"):
            psi = _shell_kernel(R, S, N, a)
        # diagonal: average of s^{N-1} psi(r_i, s) over the cell of r_i; the
        # graded map s = r_i +- (h/2) t^4 flattens the |r - s|^(N-1-alpha) singularity
        t, w = np.polynomial.legendre.leggauss(48)
        t, w = 0.5 * (t + 1), 0.5 * w
        q = 4
        acc = np.zeros_like(r)
        for sign in (-1.0, 1.0):
            S_ = r[:, None] + sign * (h / 2) * t[None, :] ** q
            jac = (h / 2) * q * t ** (q - 1)
            vals = S_ ** (N - 1) * _shell_kernel(r[:, None], S_, N, a)
            acc += (vals * (w * jac)[None, :]).sum(axis=1)
        psi[np.diag_indices_from(psi)] = acc / (h * r ** (N - 1))
        return sphere_area(N - 1) * psi * (r ** (N - 1) * h)[None, :] if N > 2 else \
            2.0 * psi * (r ** (N - 1) * h)[None, :]

    def convolve(self, f: np.ndarray) -> np.ndarray:
        """``(K * f)(r_i)`` for a radial density sampled at the mesh nodes."""
        f = np.asarray(f, dtype=float)
        if np.any(f < 0):
            raise ValueError("radial_convolve needs a nonnegative density")
        if not self.newtonian:
            return self._matrix @ f
        W = self.mesh.weights
        r = self.mesh.r
        wf = W * f
        inner = np.cumsum(wf)
        outer = np.cumsum((wf / r)[::-1])[::-1] - wf / r
        return inner / r + outer

    def D(self, u: np.ndarray, p: float) -> float:
        f = np.abs(u) ** p
        return float(np.sum(self.mesh.weights * f * self.convolve(f)))

    def cross(self, f: np.ndarray, g: np.ndarray) -> float:
        """Symmetric bilinear form ``int f (K * g)``."""
        return float(np.sum(self.mesh.weights * f * self.convolve(g)))

    def stiffness(self, u: np.ndarray) -> np.ndarray:
        """``S u`` where ``u.S u = int |u'|^2`` on the mesh."""
        Wf = self.mesh.face_weights
        du = np.diff(np.append(u, 0.0))
        flux = Wf * du
        out = -flux.copy()
        out[1:] += flux[:-1]
        return out

    def dirichlet(self, u: np.ndarray) -> float:
        du = np.diff(np.append(u, 0.0))
        return float(np.sum(self.mesh.face_weights * du * du))

    def mass(self, u: np.ndarray, weight=1.0) -> float:
        return float(np.sum(self.mesh.weights * weight * u * u))

    def norm2(self, u: np.ndarray, lam: float) -> float:
        return self.dirichlet(u) + lam * self.mass(u)

    def preconditioner(self, lam: float) -> np.ndarray:
        """Banded form of ``S + lam W`` for solve_banded((1, 1), ...)."""
        Wf = self.mesh.face_weights
        m = self.mesh.m_nodes
        ab = np.zeros((3, m))
        ab[1] = lam * self.mesh.weights + Wf + np.r_[0.0, Wf[:-1]]
        ab[0, 1:] = -Wf[:-1]
        ab[2, :-1] = -Wf[:-1]
        return ab


def radial_convolve(f: np.ndarray, alpha: float, mesh: RadialMesh) -> np.ndarray:
    return RadialOperator(mesh, alpha).convolve(f)


@dataclass
class RadialProfile:
    r: np.ndarray
    values: np.ndarray
    lam: float
    dim: int
    alpha: float
    p: float
    r_max: float
    energy: float
    norm2: float
    D: float
    nehari_residual: float
    grad_residual: float
    converged: bool
    iterations: int
    trace: list = field(default_factory=list, repr=False)

    @property
    def m_nodes(self) -> int:
        return self.r.size

    @property
    def mesh(self) -> RadialMesh:
        return RadialMesh(self.r_max, self.m_nodes, self.dim)

    def monotone_after_max(self) -> bool:
        i = int(np.argmax(self.values))
        return bool(np.all(np.diff(self.values[i:]) <= 0))

    def metadata(self) -> dict:
        return {
            "lambda": self.lam, "dim": self.dim, "alpha": self.alpha, "p": self.p,
            "r_max": self.r_max, "m_nodes": self.m_nodes, "energy": self.energy,
            "norm2": self.norm2, "D": self.D, "nehari_residual": self.nehari_residual,
            "grad_residual": self.grad_residual, "converged": self.converged,
            "iterations": self.iterations, "monotone_after_max": self.monotone_after_max(),
            "min_value": float(self.values.min()),
        }

    def save(self, path, extra: dict | None = None) -> None:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "value"])
            for ri, vi in zip(self.r, self.values):
                w.writerow([f"{ri:.17g}", f"{vi:.17g}"])
        meta = self.metadata()
        meta.update(extra or {})
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "RadialProfile":
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        meta = json.loads(path.with_suffix(".json").read_text())
        return cls(data[:, 0], data[:, 1], meta["lambda"], meta["dim"], meta["alpha"], meta["p"],
                   meta["r_max"], meta["energy"], meta["norm2"], meta["D"], meta["nehari_residual"],
                   meta["grad_residual"], meta["converged"], meta["iterations"])


def default_mesh(lam: float, dim: int = 3, r_max: float | None = None, m_nodes: int = 3000) -> RadialMesh:
    return RadialMesh(r_max if r_max is not None else 30.0 / math.sqrt(lam), m_nodes, dim)


def solve_ground_state(lam: float, dim: int, alpha: float, p: float, mesh: RadialMesh | None = None,
                       max_iter: int = 2000, tol_grad: float = 1e-11, armijo: float = 1e-4,
                       op: RadialOperator | None = None) -> RadialProfile:
    """Preconditioned descent on the Nehari manifold, projected onto u >= 0.

    Each step ``u <- max(u - s P^-1 J'(u), 0)`` is followed by the Nehari
    rescaling; ``s`` starts at 1 and is halved until the fibre maximum
    decreases by the Armijo amount.  Raises NonConvergence (with the partial
    profile attached) if the residual does not reach ``tol_grad``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if p < 2:
        raise ValueError("the radial solver needs p >= 2")
    mesh = mesh or default_mesh(lam, dim)
    if mesh.dim != dim:
        raise ValueError("mesh dimension does not match dim")
    op = op or RadialOperator(mesh, alpha)
    r, W = mesh.r, mesh.weights
    ab = op.preconditioner(lam)

    u = np.exp(-lam * r * r / 2)
    u /= math.sqrt(op.mass(u))

    def evaluate(v):
        f = v ** p
        phi = op.convolve(f)
        n2 = op.norm2(v, lam)
        Dv = float(np.sum(W * f * phi))
        return n2, Dv, phi

    def rescale(v):
        n2, Dv, phi = evaluate(v)
        t = (n2 / Dv) ** (1 / (2 * p - 2))
        return v * t, n2 * t * t, Dv * t ** (2 * p), phi * t ** p

    def fibre(n2, Dv):
        return (p - 1) / (2 * p) * (n2 / Dv ** (1 / p)) ** (p / (p - 1))

    u, n2, Dv, phi = rescale(u)
    trace = []
    eps = np.finfo(float).eps
    gres = float("inf")
    it = 0
    for it in range(1, max_iter + 1):
        res = op.stiffness(u) + lam * W * u - W * phi * u ** (p - 1)
        g = solve_banded((1, 1), ab, res)
        g2 = float(g @ res)
        gres = math.sqrt(max(g2, 0.0) / n2)
        level = fibre(n2, Dv)
        trace.append((it, level, gres, abs(n2 - Dv) / n2))
        if gres <= tol_grad:
            break
        step = 1.0
        while True:
            cand = np.maximum(u - step * g, 0.0)
            cn2, cD, _ = evaluate(cand)
            # the slack absorbs round-off once the decrease is below machine precision
            if cD > 0 and fibre(cn2, cD) <= level - armijo * step * g2 + 64 * eps * level or step < 1e-8:
                break
            step *= 0.5
        u, n2, Dv, phi = rescale(cand)
    else:
        it = max_iter

    profile = RadialProfile(r, u, float(lam), dim, float(alpha), float(p), mesh.r_max,
                            (p - 1) / (2 * p) * n2, n2, Dv, abs(n2 - Dv) / n2, gres,
                            gres <= tol_grad, it, trace)
    if not profile.converged:
        raise NonConvergence(f"radial solver stopped at residual {gres:.3e} after {it} iterations", profile)
    return profile


@dataclass
class DecayFit:
    rate: float
    power: float
    fit_residual: float
    window: tuple

    def to_json(self) -> dict:
        return {"rate": self.rate, "power": self.power, "fit_residual": self.fit_residual,
                "window": list(self.window)}


class UnreliableWindow(ValueError):
    pass


def fit_log_tail(r: np.ndarray, values: np.ndarray) -> tuple:
    """Least squares ``log v = c - rate r - power log r``; returns (rate, power, rms)."""
    if np.any(values <= 0):
        raise ValueError("decay fit needs strictly positive values on the window")
    A = np.column_stack([np.ones_like(r), -r, -np.log(r)])
    y = np.log(values)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    rms = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(coef[1]), float(coef[2]), rms


def decay_fit(profile: RadialProfile, window: tuple | None = None, values: np.ndarray | None = None) -> DecayFit:
    """Fit ``u(r) ~ C r^-power exp(-rate r)`` on a window inside ``[0.4, 0.9] r_max``."""
    lo_ok, hi_ok = 0.4 * profile.r_max, 0.9 * profile.r_max
    lo, hi = window if window is not None else (lo_ok, 0.8 * profile.r_max)
    if lo < lo_ok - 1e-12 or hi > hi_ok + 1e-12 or not lo < hi:
        raise UnreliableWindow(f"window outside reliable tail: [{lo}, {hi}] not inside "
                               f"[{lo_ok}, {hi_ok}]")
    v = profile.values if values is None else values
    sel = (profile.r >= lo) & (profile.r <= hi)
    if np.any(v[sel] <= 0):
        raise ValueError("nonpositive values inside the fit window")
    rate, power, rms = fit_log_tail(profile.r[sel], v[sel])
    return DecayFit(rate, power, rms, (float(lo), float(hi)))
