"""Projected Gramian, the smoothing operator Lambda(t) and minimum-energy controls.

For the scalar observation ``y = Gamma X`` the Gramian is
``Q_t = g**2 int_0^t K(s)**2 ds`` and the smoothing operator reduces to
``Lambda(t) = K(t) b / sqrt(Q_t)``. The minimum-energy virtual control
``v`` solves ``int_0^t K(t-s) g v(s) ds = -K(t) b k`` with least L2 norm;
its energy equals ``|Lambda(t) k|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import Kernel, resolvent_kernel
from .lift import LiftedModel


def effective_kernel(model: LiftedModel, t_max: float, n_grid: int = 400) -> Kernel:
    """Kernel seen by the observation: ``K`` when ``c == 0``, else the resolvent.

    The resolvent is tabulated on a grid reaching below ``1e-6 t_max`` so
    interpolation covers the time steps used downstream.
    """
    if model.c == 0.0:
        return model.kernel
    key = ("effective_kernel", float(t_max), int(n_grid))
    cached = model.meta.get(key)
    if cached is not None:
        return cached
    t_end = 1.05 * t_max
    # geometric near zero for the singular head, uniform elsewhere for log-log accuracy
    grid = np.union1d(np.geomspace(1e-6 * t_max, t_end, n_grid),
                      np.linspace(t_end / (4 * n_grid), t_end, 4 * n_grid))
    res = resolvent_kernel(model.kernel, model.c, grid)
    model.meta[key] = res
    return res


def gramian(model: LiftedModel, t, kernel: Kernel | None = None):
    """``Q_t = g**2 int_0^t K(s)**2 ds``."""
    k = kernel if kernel is not None else effective_kernel(model, float(np.max(t)))
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("gramian needs t >= 0")
    out = model.g**2 * np.asarray(k.square_primitive(t_arr), dtype=float)
    return float(out) if out.ndim == 0 else out


def lambda_op(model: LiftedModel, t, kernel: Kernel | None = None):
    """``Lambda(t) = K(t) b / sqrt(Q_t)``."""
    k = kernel if kernel is not None else effective_kernel(model, float(np.max(t)))
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ValueError("lambda_op needs t > 0")
    q = np.asarray(gramian(model, t_arr, k), dtype=float)
    if np.any(q <= 0):
        raise ArithmeticError("Gramian is not positive; the smoothing condition fails")
    out = np.asarray(k(t_arr), dtype=float) * model.b / np.sqrt(q)
    return float(out) if out.ndim == 0 else out


def constant_ansatz_energy(model: LiftedModel, t: float, k: float, kernel: Kernel | None = None) -> float:
    """Energy of the constant virtual control solving the same constraint.

    ``sqrt(t) K(t)/I_K(t) |b/g| |k|``.
    """
    ker = kernel if kernel is not None else effective_kernel(model, t)
    if not t > 0:
        raise ValueError("t must be positive")
    return math.sqrt(t) * ker(t) / ker.primitive(t) * abs(model.b / model.g) * abs(k)


@dataclass(frozen=True, eq=False)
class VirtualControl:
    """Piecewise-constant control on a graded mesh of ``[0, t]``.

    ``times`` are panel midpoints, ``weights`` panel widths and ``energy``
    the discrete L2 norm ``sqrt(sum weights * values**2)``.
    """

    times: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    energy: float
    constraint_residual: float


def _grading_exponent(kernel: Kernel) -> float:
    p = kernel.singularity
    if p <= 0.0:
        return 1.0
    return float(min(max(2, math.ceil(3.0 / (1.0 - 2.0 * p))), 20))


def min_energy_control(model: LiftedModel, t: float, k: float, n_steps: int = 2000,
                       kernel: Kernel | None = None) -> VirtualControl:
    """Least-norm solution of the discretized Volterra constraint.

    The constraint is discretized by the midpoint rule on a mesh graded
    towards ``s = t`` (where ``K(t - s)`` may be singular). The solution is
    ``v = target * a / <a, a>_w`` with ``a_i = K(t - s_i) g``.
    """
    ker = kernel if kernel is not None else effective_kernel(model, t)
    if not t > 0:
        raise ValueError("t must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    q = _grading_exponent(ker)
    # lag r = t - s graded towards 0
    r_edges = t * (np.arange(n_steps + 1) / n_steps) ** q
    r_mid = 0.5 * (r_edges[1:] + r_edges[:-1])
    w = np.diff(r_edges)
    a = np.asarray(ker(r_mid), dtype=float) * model.g
    target = -ker(t) * model.b * k
    norm2 = float(np.sum(w * a * a))
    if not norm2 > 0 or not np.isfinite(norm2):
        raise ArithmeticError(f"degenerate constraint (Gram value {norm2!r})")
    if not np.all(np.isfinite(a)):
        raise ArithmeticError("constraint row has non-finite entries; refine the mesh")
    v = target * a / norm2
    resid = float(np.sum(w * a * v) - target)
    # report in increasing s
    s = (t - r_mid)[::-1]
    return VirtualControl(times=s, values=v[::-1].copy(), weights=w[::-1].copy(),
                          energy=float(np.sqrt(np.sum(w * v * v))), constraint_residual=resid)


@dataclass(frozen=True, eq=False)
class SmoothingProfile:
    """Tabulated ``Q_t``, ``Lambda(t)`` and the constant-ansatz energy on a grid."""

    times: np.ndarray
    gramian: np.ndarray
    lambda_values: np.ndarray
    ansatz_energy: np.ndarray
    kappa0: float
    gamma_exponent: float = 0.5

    @property
    def scaled_lambda(self) -> np.ndarray:
        return self.lambda_values * np.sqrt(self.times)

    def fitted_exponent(self) -> float:
        """Least-squares slope of ``log |Lambda|`` against ``log t``."""
        return float(np.polyfit(np.log(self.times), np.log(np.abs(self.lambda_values)), 1)[0])

    def rows(self) -> np.ndarray:
        return np.column_stack([self.times, self.gramian, self.lambda_values,
                                self.scaled_lambda, self.ansatz_energy])

    def write_csv(self, path) -> None:
        from ._io import write_csv

        write_csv(path, ["t", "Q", "Lambda", "Lambda_sqrt_t", "ansatz_energy"], self.rows())


def smoothing_profile(model: LiftedModel, times) -> SmoothingProfile:
    """Tabulate the smoothing quantities; ``kappa0`` is the sup of ``|Lambda| sqrt(t)``."""
    t = np.asarray(times, dtype=float)
    ker = effective_kernel(model, float(t.max()))
    q = np.asarray(gramian(model, t, ker))
    lam = np.asarray(lambda_op(model, t, ker))
    ans = np.array([constant_ansatz_energy(model, float(s), 1.0, ker) for s in t])
    return SmoothingProfile(t, q, lam, ans, float(np.max(np.abs(lam) * np.sqrt(t))))
