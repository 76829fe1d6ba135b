"""Mild HJB solver in the reduced observation variable.

The value function factorizes as ``v(t, x) = f(tau, Gamma S_bar(tau) x)``
with ``tau = T - t``; ``f`` solves the scalar Volterra-type equation

    f(tau, y) = E phi(y + xi_tau)
                + int_0^tau E[H_min(K(s) b d_y f(s, y + zeta))] ds,

with ``xi_tau ~ N(0, Q(tau))`` and ``zeta ~ N(0, Q(tau) - Q(s))``. It is
marched row by row on a graded ``tau`` grid and a uniform ``y`` grid; the
Gaussian expectations use Gauss-Hermite quadrature.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.interpolate import CubicSpline

from .kernels import Kernel
from .lift import LiftedModel
from .payoffs import Payoff, payoff_from_dict
from .smoothing import effective_kernel


class DomainCoverageError(RuntimeError):
    """Gauss-Hermite probes leave the padded observation grid."""


class ContractionError(RuntimeError):
    """Picard refinement of the implicit step failed to settle."""


class ExtrapolationError(ValueError):
    """Observation outside the span of a value grid."""


# ---------------------------------------------------------------------------
# Hamiltonian


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """Control set ``[u_min, u_max]`` with running cost ``l1``.

    ``running_cost`` is ``"quadratic"`` (``weight * u**2 / 2``) or a
    vectorized callable, minimized by golden-section search.
    """

    u_min: float = -1.0
    u_max: float = 1.0
    running_cost: Union[str, Callable] = "quadratic"
    weight: float = 1.0

    def __post_init__(self):
        if self.u_min > self.u_max:
            raise ValueError("u_min must not exceed u_max")
        if self.running_cost == "quadratic" and self.weight <= 0:
            raise ValueError("quadratic running cost needs a positive weight")

    @property
    def singleton(self) -> bool:
        return self.u_min == self.u_max

    def cost(self, u):
        u = np.asarray(u, dtype=float)
        if self.running_cost == "quadratic":
            return 0.5 * self.weight * u * u
        return np.asarray(self.running_cost(u), dtype=float)

    def h_cv(self, p, u):
        """``H_CV(p; u) = p u + l1(u)``."""
        return np.asarray(p) * np.asarray(u) + self.cost(u)

    def select(self, p):
        """Minimizer of ``p u + l1(u)`` over ``U`` (smallest magnitude on ties)."""
        p = np.asarray(p, dtype=float)
        if self.singleton:
            return np.full_like(p, self.u_min)
        if self.running_cost == "quadratic":
            return np.clip(-p / self.weight, self.u_min, self.u_max)
        return self._golden(p)

    def h_min(self, p):
        u = self.select(p)
        return self.h_cv(p, u)

    def __call__(self, p):
        """``(h_min(p), u_star(p))``."""
        u = self.select(p)
        h = self.h_cv(p, u)
        if np.ndim(h) == 0:
            return float(h), float(u)
        return h, u

    def _golden(self, p, iters: int = 90):
        a = np.full_like(p, self.u_min)
        b = np.full_like(p, self.u_max)
        r = (math.sqrt(5.0) - 1.0) / 2.0
        c = b - r * (b - a)
        d = a + r * (b - a)
        fc, fd = self.h_cv(p, c), self.h_cv(p, d)
        for _ in range(iters):
            left = fc < fd
            b = np.where(left, d, b)
            a = np.where(left, a, c)
            c_new = b - r * (b - a)
            d_new = a + r * (b - a)
            c, d = c_new, d_new
            fc, fd = self.h_cv(p, c), self.h_cv(p, d)
        u = 0.5 * (a + b)
        # endpoints and the smallest-magnitude admissible point compete on ties
        cands = [u, np.full_like(p, self.u_min), np.full_like(p, self.u_max),
                 np.full_like(p, min(max(0.0, self.u_min), self.u_max))]
        vals = np.stack([self.h_cv(p, x) for x in cands])
        best = vals.min(axis=0)
        out = u.copy()
        mag = np.full_like(p, np.inf)
        for x, v in zip(cands, vals):
            tie = v <= best + 1e-14 * (1 + np.abs(best))
            better = tie & (np.abs(x) < mag)
            out = np.where(better, x, out)
            mag = np.where(better, np.abs(x), mag)
        return out

    @property
    def lipschitz_L(self) -> float:
        """Lipschitz constant of ``h_min``: ``sup_U |u|``."""
        return max(abs(self.u_min), abs(self.u_max))

    @property
    def lipschitz_Lgamma(self) -> float:
        """Lipschitz constant of the selection (``1/weight`` for quadratic cost)."""
        if self.singleton:
            return 0.0
        if self.running_cost == "quadratic":
            return 1.0 / self.weight
        return math.nan

    def to_dict(self) -> dict:
        if self.running_cost != "quadratic":
            raise ValueError("only quadratic running costs are serializable")
        return {"u_min": self.u_min, "u_max": self.u_max, "running_cost": "quadratic", "weight": self.weight}


def hamiltonian_eval(ham: Hamiltonian, p):
    """``(h_min(p), u_star(p))``."""
    return ham(p)


# ---------------------------------------------------------------------------
# Gaussian smoothing


def _hermite(order: int):
    x, w = np.polynomial.hermite.hermgauss(order)
    return math.sqrt(2.0) * x, w / math.sqrt(math.pi)


def gaussian_smooth(phi_bar: Payoff, variance: float, y, quad_order: int = 32):
    """``(E phi(y + xi), E[phi(y + xi) xi] / variance)`` for ``xi ~ N(0, variance)``.

    Gauss-Hermite quadrature; the second entry is the scalar
    Bismut-Elworthy-Li weight. ``variance == 0`` returns the payoff and its
    derivative.
    """
    if not 8 <= quad_order <= 256:
        # numpy's Hermite rule overflows for much larger orders
        raise ValueError("quad_order must lie in [8, 256]")
    y = np.asarray(y, dtype=float)
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    if variance == 0.0:
        return _squeeze(np.asarray(phi_bar(y), dtype=float)), _squeeze(np.asarray(phi_bar.derivative(y), dtype=float))
    z, w = _hermite(quad_order)
    s = math.sqrt(variance)
    vals = np.asarray(phi_bar(y[..., None] + s * z), dtype=float)
    value = vals @ w
    deriv = vals @ (w * z) / s
    return _squeeze(value), _squeeze(deriv)


def _squeeze(a):
    return float(a) if np.ndim(a) == 0 else a


def _terminal(phi_bar: Payoff, variance: float, y: np.ndarray, quad_order: int, exact: bool):
    if exact:
        out = phi_bar.smooth_exact(y, variance)
        if out is not None:
            return np.asarray(out[0], dtype=float), np.asarray(out[1], dtype=float)
    v, d = gaussian_smooth(phi_bar, variance, y, quad_order)
    return np.asarray(v, dtype=float), np.asarray(d, dtype=float)


def sigma_profile(model: LiftedModel, s: float, tau: float, kernel: Optional[Kernel] = None) -> float:
    """``g**2 int_0^tau K(s + r)**2 dr`` = ``Q(s + tau) - Q(s)``."""
    if s < 0 or tau < 0:
        raise ValueError("s and tau must be nonnegative")
    k = kernel if kernel is not None else effective_kernel(model, s + tau)
    if tau == 0.0:
        return 0.0
    return model.g**2 * (k.square_primitive(s + tau) - k.square_primitive(s))


# ---------------------------------------------------------------------------
# value grid


def _spline_coefficients(y: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Natural-free (not-a-knot) cubic coefficients, shape ``(rows, 4, n_y - 1)``."""
    cs = CubicSpline(y, rows, axis=1)
    return np.moveaxis(cs.c, 2, 0).copy() if rows.ndim == 2 else cs.c


def _eval_uniform(coef: np.ndarray, y0: float, h: float, pts: np.ndarray, derivative: bool = False) -> np.ndarray:
    """Evaluate row-wise spline coefficients at clamped points.

    ``coef`` has shape ``(R, 4, n-1)`` and ``pts`` shape ``(R, ...)``.
    """
    n_int = coef.shape[2]
    u = (pts - y0) / h
    u = np.clip(u, 0.0, n_int)
    idx = np.minimum(u.astype(np.intp), n_int - 1)
    dx = (u - idx) * h
    R = coef.shape[0]
    flat_idx = idx.reshape(R, -1)
    gather = np.take_along_axis
    c0 = gather(coef[:, 0, :], flat_idx, axis=1).reshape(pts.shape)
    c1 = gather(coef[:, 1, :], flat_idx, axis=1).reshape(pts.shape)
    c2 = gather(coef[:, 2, :], flat_idx, axis=1).reshape(pts.shape)
    c3 = gather(coef[:, 3, :], flat_idx, axis=1).reshape(pts.shape)
    if derivative:
        return (3 * c0 * dx + 2 * c1) * dx + c2
    return ((c0 * dx + c1) * dx + c2) * dx + c3


@dataclass(eq=False)
class ValueGrid:
    """Reduced value function ``f(tau, y)`` and ``d_y f`` on a grid.

    ``core`` is the observation interval of interest; the grid extends it
    by ``pad * sqrt(Q(T))`` on both sides so Gaussian probes stay on grid.
    """

    tau_grid: np.ndarray
    y_grid: np.ndarray
    f_values: np.ndarray
    df_values: np.ndarray
    core: tuple[float, float]
    payoff: Payoff
    kernel: Kernel
    b: float
    g: float
    gramian_values: np.ndarray
    quad_order: int = 32
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._refresh()

    def _refresh(self):
        self._h = float(self.y_grid[1] - self.y_grid[0])
        self._f_coef = _spline_coefficients(self.y_grid, self.f_values)
        self._df_coef = _spline_coefficients(self.y_grid, self.df_values)

    @property
    def T(self) -> float:
        return float(self.tau_grid[-1])

    def in_span(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return (y >= self.y_grid[0]) & (y <= self.y_grid[-1])

    def _interp(self, coef, tau: float, y, derivative=False):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        tg = self.tau_grid
        if tau <= tg[0]:
            k0 = k1 = 0
            lam = 0.0
        elif tau >= tg[-1]:
            k0 = k1 = len(tg) - 1
            lam = 0.0
        else:
            k1 = int(np.searchsorted(tg, tau, side="right"))
            k0 = k1 - 1
            lam = (tau - tg[k0]) / (tg[k1] - tg[k0])
        rows = coef[[k0, k1]]
        vals = _eval_uniform(rows, self.y_grid[0], self._h, np.stack([y, y]), derivative)
        return (1.0 - lam) * vals[0] + lam * vals[1]

    def value(self, tau: float, y):
        """``f(tau, y)``, linear in ``tau`` and cubic in ``y``."""
        out = self._interp(self._f_coef, tau, y)
        return float(out[0]) if np.ndim(y) == 0 else out

    def dy(self, tau: float, y):
        """``d_y f(tau, y)``; below the first positive row uses the terminal BEL term."""
        y_arr = np.atleast_1d(np.asarray(y, dtype=float))
        if len(self.tau_grid) > 1 and 0.0 < tau < self.tau_grid[1]:
            var = self.g**2 * float(self.kernel.square_primitive(tau))
            out = _terminal(self.payoff, var, y_arr, self.quad_order, True)[1]
        else:
            out = self._interp(self._df_coef, tau, y_arr)
        return float(out[0]) if np.ndim(y) == 0 else out

    # -- serialization ------------------------------------------------------
    def write_csv(self, path) -> None:
        from ._io import write_csv

        tt, yy = np.meshgrid(self.tau_grid, self.y_grid, indexing="ij")
        write_csv(path, ["tau", "y", "f", "df"],
                  np.column_stack([tt.ravel(), yy.ravel(), self.f_values.ravel(), self.df_values.ravel()]))

    def save(self, path) -> None:
        """Binary snapshot (``.npz``) with grid metadata."""
        meta = {"core": list(self.core), "payoff": self.payoff.to_dict(), "kernel": self.kernel.to_dict(),
                "b": self.b, "g": self.g, "quad_order": self.quad_order,
                "meta": {k: v for k, v in self.meta.items() if isinstance(k, str)}}
        np.savez(path, tau_grid=self.tau_grid, y_grid=self.y_grid, f_values=self.f_values,
                 df_values=self.df_values, gramian_values=self.gramian_values,
                 metadata=np.array(json.dumps(meta, sort_keys=True, default=float)))

    @classmethod
    def load(cls, path) -> "ValueGrid":
        from .kernels import kernel_from_dict

        with np.load(path) as z:
            meta = json.loads(str(z["metadata"]))
            return cls(z["tau_grid"], z["y_grid"], z["f_values"], z["df_values"], tuple(meta["core"]),
                       payoff_from_dict(meta["payoff"]), kernel_from_dict(meta["kernel"]), meta["b"],
                       meta["g"], z["gramian_values"], int(meta["quad_order"]), meta.get("meta", {}))


@dataclass(frozen=True)
class HJBGrids:
    """Discretization parameters of :func:`solve_hjb`."""

    n_tau: int = 200
    n_y: int = 201
    y_span: tuple[float, float] = (-3.0, 3.0)
    quad_order: int = 32
    pad: float = 6.0
    picard_iters: int = 3
    exact_terminal: bool = True
    coverage_tol: float = 1e-6


class _Setup:
    """Precomputed grids and weights shared by the marching and Picard solvers."""

    def __init__(self, model: LiftedModel, ham: Hamiltonian, phi_bar: Payoff, T: float, grids: HJBGrids):
        if not T > 0:
            raise ValueError("horizon T must be positive")
        if grids.n_tau < 2 or grids.n_y < 8:
            raise ValueError("need n_tau >= 2 and n_y >= 8")
        lo, hi = map(float, grids.y_span)
        if not hi > lo:
            raise ValueError("y_span must be increasing")
        self.model, self.ham, self.phi, self.T, self.grids = model, ham, phi_bar, T, grids
        self.kernel = effective_kernel(model, T)
        n = grids.n_tau
        self.tau = T * (np.arange(n + 1) / n) ** 2
        self.Q = model.g**2 * np.asarray(self.kernel.square_primitive(self.tau), dtype=float)
        self.Q[0] = 0.0
        with np.errstate(divide="ignore"):
            kv = np.asarray(self.kernel(np.where(self.tau > 0, self.tau, 1.0)), dtype=float)
        kv[0] = np.inf if self.kernel.singular else float(self.kernel(0.0))
        self.Kb = kv * model.b
        sig_max = math.sqrt(self.Q[-1])
        self.pad = grids.pad * sig_max
        self.y = np.linspace(lo - self.pad, hi + self.pad, grids.n_y)
        self.h = float(self.y[1] - self.y[0])
        self.core = (lo, hi)
        self.core_mask = (self.y >= lo - 1e-12) & (self.y <= hi + 1e-12)
        self.z, self.w = _hermite(grids.quad_order)
        self._check_coverage(sig_max)

    def _check_coverage(self, sig_max: float):
        lo, hi = self.core
        # worst core point is at the edge; probes reach y + sigma z
        escaped = float(np.sum(self.w[(lo + sig_max * self.z < self.y[0]) | (hi + sig_max * self.z > self.y[-1])]))
        if escaped > self.grids.coverage_tol:
            raise DomainCoverageError(
                f"Gauss-Hermite probes escape the padded y grid with weight {escaped:.3g} "
                f"(> {self.grids.coverage_tol:g}); increase pad (now {self.grids.pad})")
        self.escaped_weight = escaped

    def weights(self, k: int) -> np.ndarray:
        """Trapezoid weights in ``u = sqrt(s/T)`` for ``int_0^{tau_k}``; ``w_0 = 0``."""
        n = self.grids.n_tau
        j = np.arange(k + 1, dtype=float)
        w = 2.0 * self.T * j / n**2
        w[k] = self.T * k / n**2
        w[0] = 0.0
        return w

    def terminal(self, k: int):
        return _terminal(self.phi, float(self.Q[k]), self.y, self.grids.quad_order, self.grids.exact_terminal)

    def accumulate(self, k: int, df_coef: np.ndarray, j_stop: int) -> np.ndarray:
        """``sum_{1 <= j < j_stop} w_j E[h_min(K_j b df_j(y + zeta_jk))]`` on the y grid."""
        if j_stop <= 1:
            return np.zeros_like(self.y)
        w = self.weights(k)
        js = np.arange(1, j_stop)
        sd = np.sqrt(np.maximum(self.Q[k] - self.Q[js], 0.0))
        pts = self.y[None, :, None] + sd[:, None, None] * self.z[None, None, :]
        grad = _eval_uniform(df_coef[js], self.y[0], self.h, pts)
        hv = self.ham.h_min(self.Kb[js][:, None, None] * grad)
        return np.einsum("jyq,q,j->y", hv, self.w, w[js])

    def implicit_term(self, k: int, df_row: np.ndarray) -> np.ndarray:
        return self.weights(k)[k] * self.ham.h_min(self.Kb[k] * df_row)

    def spline_dy(self, row: np.ndarray) -> np.ndarray:
        return CubicSpline(self.y, row)(self.y, 1)


def solve_hjb(model: LiftedModel, ham: Hamiltonian, phi_bar: Payoff, T: float,
              grids: Optional[HJBGrids] = None) -> ValueGrid:
    """March the reduced mild HJB equation over ``tau in [0, T]``.

    Row ``k`` combines the Gaussian-smoothed payoff (value and BEL
    derivative) with the time convolution of ``H_min`` over earlier rows.
    The endpoint term of each row is implicit and resolved by a few Picard
    sweeps; the last sweep's change is recorded as ``meta['picard_gap']``.
    """
    grids = grids or HJBGrids()
    S = _Setup(model, ham, phi_bar, T, grids)
    n, ny = grids.n_tau, S.y.size
    F = np.empty((n + 1, ny))
    D = np.empty((n + 1, ny))
    F[0] = np.asarray(phi_bar(S.y), dtype=float)
    D[0] = np.asarray(phi_bar.derivative(S.y), dtype=float)
    coef = np.zeros((n + 1, 4, ny - 1))
    picard_gaps = np.zeros(n + 1)
    for k in range(1, n + 1):
        tv, td = S.terminal(k)
        acc = S.accumulate(k, coef, k)
        d = td.copy() if k == 1 else D[k - 1].copy()
        prev_f = None
        gaps = []
        for _ in range(max(1, grids.picard_iters)):
            a = acc + S.implicit_term(k, d)
            f = tv + a
            d = td + S.spline_dy(a)
            if prev_f is not None:
                gaps.append(float(np.max(np.abs(f - prev_f)[S.core_mask])))
            prev_f = f
        if len(gaps) >= 2 and gaps[-1] > gaps[-2] * 1.000001 and gaps[-1] > 1e-10:
            raise ContractionError(
                f"implicit step at tau={S.tau[k]:.4g} does not contract (Picard gaps {gaps})")
        picard_gaps[k] = gaps[-1] if gaps else 0.0
        F[k], D[k] = f, d
        coef[k] = _spline_coefficients(S.y, D[k:k + 1])[0]
    vg = ValueGrid(S.tau, S.y, F, D, S.core, phi_bar, S.kernel, model.b, model.g, S.Q,
                   grids.quad_order, {"picard_gap": float(picard_gaps.max()),
                                      "escaped_weight": S.escaped_weight, "T": T})
    return vg


def mild_residual(vg: ValueGrid, ham: Hamiltonian, tau_index: int, y_probe, quad_order: int = 64,
                  n_s: int = 400) -> np.ndarray:
    """Residual of the mild equation at probe points by independent re-quadrature.

    Uses a finer Gauss-Hermite rule and Gauss-Jacobi-free substitution
    ``s = tau u**2`` with ``n_s`` midpoint nodes.
    """
    tau = float(vg.tau_grid[tau_index])
    y_probe = np.atleast_1d(np.asarray(y_probe, dtype=float))
    Q = lambda s: vg.g**2 * np.asarray(vg.kernel.square_primitive(s), dtype=float)
    tv, _ = _terminal(vg.payoff, float(Q(tau)), y_probe, quad_order, True)
    z, w = _hermite(quad_order)
    u = (np.arange(n_s) + 0.5) / n_s
    s = tau * u * u
    ws = 2 * tau * u / n_s
    Qt = float(Q(tau))
    total = np.zeros_like(y_probe)
    for sj, wj in zip(s, ws):
        sd = math.sqrt(max(Qt - float(Q(sj)), 0.0))
        pts = y_probe[:, None] + sd * z[None, :]
        grad = np.stack([vg.dy(sj, p) for p in pts])
        total += wj * (ham.h_min(float(vg.kernel(sj)) * vg.b * grad) @ w)
    return vg.value(tau, y_probe) - (tv + total)


def gradient_B(vg: ValueGrid, model: LiftedModel, t: float, x) -> float:
    """``K(tau) b d_y f(tau, Gamma S_bar(tau) x)`` with ``tau = T - t``."""
    tau = vg.T - t
    if not tau > 0:
        raise ValueError("gradient_B needs t < T")
    y_obs = float(model.observation_row(tau) @ np.asarray(x, dtype=float))
    if not vg.in_span(y_obs):
        raise ExtrapolationError(f"observation {y_obs:.6g} outside value grid "
                                 f"[{vg.y_grid[0]:.6g}, {vg.y_grid[-1]:.6g}]")
    return float(vg.kernel(tau)) * vg.b * vg.dy(tau, y_obs)


@dataclass(frozen=True)
class ContractionReport:
    iterate_gaps: tuple[float, ...]
    ratios: tuple[float, ...]
    contracting: bool
    diverged: bool


def contraction_diagnostic(model: LiftedModel, ham: Hamiltonian, phi_bar: Payoff, T: float,
                           grids: Optional[HJBGrids] = None, n_iter: int = 6) -> ContractionReport:
    """Global Picard iteration ``g_{n+1} = K(g_n)`` started at the smoothed payoff.

    Reports sup-norm gaps ``|g_{n+1} - g_n|`` over the core of the grid.
    """
    grids = grids or HJBGrids()
    S = _Setup(model, ham, phi_bar, T, grids)
    n, ny = grids.n_tau, S.y.size
    TV = np.empty((n + 1, ny))
    TD = np.empty((n + 1, ny))
    TV[0] = np.asarray(phi_bar(S.y), dtype=float)
    TD[0] = np.asarray(phi_bar.derivative(S.y), dtype=float)
    for k in range(1, n + 1):
        TV[k], TD[k] = S.terminal(k)
    F, D = TV.copy(), TD.copy()
    gaps = []
    for _ in range(n_iter):
        coef = _spline_coefficients(S.y, D)
        Fn, Dn = TV.copy(), TD.copy()
        for k in range(1, n + 1):
            a = S.accumulate(k, coef, k + 1)
            Fn[k] = TV[k] + a
            Dn[k] = TD[k] + S.spline_dy(a)
        gap = float(np.max(np.abs(Fn - F)[:, S.core_mask]))
        gaps.append(gap)
        F, D = Fn, Dn
        if not np.isfinite(gap) or gap > 1e12:
            break
    ratios = tuple(g1 / g0 if g0 > 0 else 0.0 for g0, g1 in zip(gaps, gaps[1:]))
    diverged = (not all(np.isfinite(gaps))) or (len(gaps) > 2 and gaps[-1] > gaps[0])
    contracting = (not diverged) and all(r < 1.0 for r in ratios)
    return ContractionReport(tuple(gaps), ratios, contracting, diverged)


def gradient_blowup(vg: ValueGrid, fraction: float = 0.2, min_rows: int = 5) -> dict:
    """Log-log slopes of ``sup_y |d_y f|`` and ``sup_y |K b d_y f|`` as ``tau -> 0``.

    Fits the smallest positive ``tau`` rows (``fraction`` of the grid).
    """
    core = (vg.y_grid >= vg.core[0]) & (vg.y_grid <= vg.core[1])
    k_max = max(min_rows, int(fraction * (len(vg.tau_grid) - 1)))
    ks = np.arange(1, k_max + 1)
    tau = vg.tau_grid[ks]
    sup_d = np.max(np.abs(vg.df_values[ks][:, core]), axis=1)
    sup_b = sup_d * np.abs(np.asarray(vg.kernel(tau)) * vg.b)
    slope_d = float(np.polyfit(np.log(tau), np.log(sup_d), 1)[0])
    slope_b = float(np.polyfit(np.log(tau), np.log(sup_b), 1)[0])
    return {"exponent": slope_d, "exponent_B": slope_b,
            "sup_dy": float(np.max(np.abs(vg.df_values[1:][:, core]))),
            "sup_B": float(np.max(np.abs(vg.df_values[1:][:, core])
                                  * np.abs(np.asarray(vg.kernel(vg.tau_grid[1:])))[:, None] * abs(vg.b)))}
