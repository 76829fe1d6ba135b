"""Completely monotone kernels.

A kernel is stored through its Laplace-Bernstein representation

    K(t) = K(inf) + int exp(-x t) mu(dx),

with closed forms for the named families (Riemann-Liouville/gamma,
logarithmic, finite spectrum, shifted) and a log-log interpolated
``SampledKernel`` for tabulated kernels such as numerically computed
resolvents.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline


class KernelError(ValueError):
    """Invalid kernel parameters or evaluation outside the kernel domain."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested accuracy."""


class ResolventBlowUpError(RuntimeError):
    """``1 - c * Khat(lam)`` vanishes on the relevant Laplace range."""


# ---------------------------------------------------------------------------
# quadrature helpers


def _quad(f, a, b, **kw):
    opts = dict(epsabs=0.0, epsrel=1e-12, limit=400)
    opts.update(kw)
    val, err = integrate.quad(f, a, b, full_output=0, **opts)
    if not np.isfinite(val):
        raise QuadratureError(f"non-finite integral on [{a}, {b}]")
    if abs(err) > 1e-6 * max(abs(val), 1e-300) and abs(err) > 1e-14:
        raise QuadratureError(
            f"quadrature on [{a}, {b}] did not converge: value={val!r}, abs err={err!r}")
    return val


def integrate_from_zero(f: Callable[[float], float], t: float, singularity: float = 0.0) -> float:
    """Integrate ``f`` over ``[0, t]`` when ``f(s) ~ s**-singularity`` near 0.

    The substitution ``s = t u**m`` with ``m(1 - p) >= 2`` turns the
    power singularity into a smooth integrand on ``[0, 1]``.
    """
    if t <= 0.0:
        return 0.0
    p = min(max(singularity, 0.0), 0.95)
    m = max(3.0, 2.0 / (1.0 - p))

    def g(u):
        if u <= 0.0:
            return 0.0
        s = t * u**m
        if s <= 0.0:
            return 0.0
        return f(s) * m * t * u ** (m - 1.0)

    return _quad(g, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Bernstein measures


@dataclass(frozen=True)
class BernsteinMeasure:
    """Nonnegative measure ``mu`` on ``(0, inf)``.

    Either a finite list of atoms ``(location, mass)`` or a density
    ``regular(x) * (x - lower)**(-singularity)`` on ``(lower, upper)``.
    """

    atoms: Optional[tuple[tuple[float, float], ...]] = None
    regular: Optional[Callable[[float], float]] = None
    lower: float = 0.0
    upper: float = math.inf
    singularity: float = 0.0

    def __post_init__(self):
        if self.atoms is not None:
            locs = [a[0] for a in self.atoms]
            if any(x <= 0 for x in locs):
                raise KernelError("atom locations must be strictly positive")
            if any(m <= 0 for _, m in self.atoms):
                raise KernelError("atom masses must be positive")
            if any(b <= a for a, b in zip(locs, locs[1:])):
                raise KernelError("atom locations must be sorted strictly ascending")
        elif self.regular is not None:
            if self.singularity >= 1.0:
                raise KernelError("density singularity exponent must be < 1 (local integrability)")
            if not self.upper > self.lower >= 0.0:
                raise KernelError("density support must be a nonempty interval in [0, inf)")

    @property
    def is_atomic(self) -> bool:
        return self.atoms is not None

    def density(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = (x > self.lower) & (x < self.upper)
        xi = x[inside]
        out[inside] = np.array([self.regular(v) for v in xi]) * (xi - self.lower) ** (-self.singularity)
        return out

    def integrate(self, f: Callable[[float], float], a: float, b: float) -> float:
        """``int_{(a, b)} f(x) mu(dx)`` for a density measure (or atoms in the range)."""
        if self.atoms is not None:
            return float(sum(m * f(x) for x, m in self.atoms if a < x <= b))
        a = max(a, self.lower)
        b = min(b, self.upper)
        if b <= a:
            return 0.0
        total = 0.0
        if a == self.lower and self.singularity != 0.0:
            # algebraic endpoint weight handled by QAWS on a bounded first piece
            first = min(b, a + 1.0)
            total += _quad(lambda x: f(x) * self.regular(x), a, first,
                           weight="alg", wvar=(-self.singularity, 0.0))
            a = first
            if b <= a:
                return total
        g = lambda x: f(x) * self.regular(x) * (x - self.lower) ** (-self.singularity)
        if math.isinf(b):
            # x = A e^u on the tail turns power-law decay into exponential decay
            A = max(a, 1.0)
            if A > a:
                total += self.integrate(f, a, A) if a > self.lower else _quad(g, a, A)
            h = lambda u: g(A * math.exp(u)) * A * math.exp(u)
            for lo, up in ((0.0, 4.0), (4.0, 16.0), (16.0, 64.0), (64.0, 600.0)):
                total += _quad(h, lo, up)
            return total
        edges = np.geomspace(max(a, 1e-300), b, 8) if a > 0 and b / a > 100 else np.array([a, b])
        edges[0], edges[-1] = a, b
        for lo, up in zip(edges, edges[1:]):
            total += _quad(g, lo, up)
        return total

    def laplace(self, t: float) -> float:
        """``int exp(-x t) mu(dx)``: numeric quadrature, used as an independent oracle."""
        if self.atoms is not None:
            return float(sum(m * math.exp(-x * t) for x, m in self.atoms))
        return self.integrate(lambda x: math.exp(-x * t), self.lower, self.upper)

    def stieltjes(self, lam: float) -> float:
        """``int mu(dx) / (lam + x)``, the Laplace transform of the measure part of K."""
        if self.atoms is not None:
            return float(sum(m / (lam + x) for x, m in self.atoms))
        return self.integrate(lambda x: 1.0 / (lam + x), self.lower, self.upper)


# ---------------------------------------------------------------------------
# kernels


class Kernel:
    """Base class. Subclasses provide ``_eval`` and, where known, closed forms."""

    family: str = "abstract"
    k_infinity: float = 0.0
    # exponent p with K(t) ~ t**-p as t -> 0 (0 for bounded kernels)
    singularity: float = 0.0

    # -- evaluation ---------------------------------------------------------
    @property
    def singular(self) -> bool:
        return self.singularity > 0.0

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0) or (self.singular and np.any(t_arr <= 0)):
            raise KernelError(f"{self.family} kernel evaluated at t <= 0")
        out = self._eval(t_arr)
        return float(out) if np.ndim(out) == 0 else out

    def _eval(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- integrals ----------------------------------------------------------
    def _scalar_map(self, fn, t):
        t_arr = np.asarray(t, dtype=float)
        out = np.vectorize(fn, otypes=[float])(t_arr)
        return float(out) if out.ndim == 0 else out

    def primitive(self, t):
        """``I_K(t) = int_0^t K(s) ds``."""
        return self._scalar_map(
            lambda s: integrate_from_zero(lambda r: float(self._eval(np.float64(r))), s, self.singularity), t)

    def square_primitive(self, t):
        """``int_0^t K(s)**2 ds``."""
        return self._scalar_map(
            lambda s: integrate_from_zero(lambda r: float(self._eval(np.float64(r))) ** 2, s,
                                          2.0 * self.singularity), t)

    def first_moment(self, t):
        """``int_0^t s K(s) ds``."""
        return self._scalar_map(
            lambda s: integrate_from_zero(lambda r: r * float(self._eval(np.float64(r))), s,
                                          max(self.singularity - 1.0, 0.0)), t)

    def self_convolution(self, t):
        """``(K * K)(t) = int_0^t K(t - s) K(s) ds``."""
        def conv(tt):
            if tt <= 0.0:
                return 0.0
            h = 0.5 * tt
            f = lambda s: float(self._eval(np.float64(tt - s))) * float(self._eval(np.float64(s)))
            # symmetric integrand: twice the integral over the first half
            return 2.0 * integrate_from_zero(f, h, self.singularity)
        return self._scalar_map(conv, t)

    def laplace(self, lam: float) -> float:
        """``Khat(lam) = K(inf)/lam + int mu(dx)/(lam + x)``."""
        meas = self.measure
        if meas is None:
            raise KernelError(f"{self.family} kernel has no Bernstein measure")
        return self.k_infinity / lam + meas.stieltjes(lam)

    # -- structure ----------------------------------------------------------
    @property
    def measure(self) -> Optional[BernsteinMeasure]:
        return None

    @property
    def eta_star(self) -> Optional[float]:
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError

    def shifted(self, eps: float) -> "ShiftedKernel":
        return ShiftedKernel(self, eps)


@dataclass(frozen=True)
class RiemannLiouvilleKernel(Kernel):
    """``K(t) = t**(alpha-1) exp(-beta t) / Gamma(alpha)`` (gamma kernel for beta > 0)."""

    alpha: float
    beta: float = 0.0
    family = "riemann_liouville"
    k_infinity = 0.0

    def __post_init__(self):
        if not 0.5 < self.alpha < 1.0:
            raise KernelError("riemann_liouville requires alpha in (1/2, 1)")
        if self.beta < 0.0:
            raise KernelError("riemann_liouville requires beta >= 0")

    @property
    def singularity(self) -> float:
        return 1.0 - self.alpha

    def _eval(self, t):
        a, b = self.alpha, self.beta
        with np.errstate(divide="ignore"):
            return t ** (a - 1.0) * np.exp(-b * t) / special.gamma(a)

    def primitive(self, t):
        t = np.asarray(t, dtype=float)
        a, b = self.alpha, self.beta
        if b == 0.0:
            out = t**a / special.gamma(a + 1.0)
        else:
            out = special.gammainc(a, b * t) / b**a
        return float(out) if out.ndim == 0 else out

    def square_primitive(self, t):
        t = np.asarray(t, dtype=float)
        a, b = self.alpha, self.beta
        if b == 0.0:
            out = t ** (2 * a - 1) / ((2 * a - 1) * special.gamma(a) ** 2)
        else:
            p = 2 * a - 1
            out = special.gamma(p) * special.gammainc(p, 2 * b * t) / ((2 * b) ** p * special.gamma(a) ** 2)
        return float(out) if out.ndim == 0 else out

    def first_moment(self, t):
        t = np.asarray(t, dtype=float)
        a, b = self.alpha, self.beta
        if b == 0.0:
            out = t ** (a + 1) / ((a + 1) * special.gamma(a))
        else:
            out = a * special.gammainc(a + 1, b * t) / b ** (a + 1)
        return float(out) if out.ndim == 0 else out

    def self_convolution(self, t):
        t = np.asarray(t, dtype=float)
        a, b = self.alpha, self.beta
        out = t ** (2 * a - 1) * np.exp(-b * t) / special.gamma(2 * a)
        return float(out) if out.ndim == 0 else out

    def laplace(self, lam: float) -> float:
        return (lam + self.beta) ** (-self.alpha)

    @property
    def measure(self) -> BernsteinMeasure:
        c = 1.0 / (special.gamma(1.0 - self.alpha) * special.gamma(self.alpha))
        return BernsteinMeasure(regular=lambda x: c, lower=self.beta, singularity=self.alpha)

    @property
    def eta_star(self) -> float:
        return 1.0 - self.alpha

    def to_dict(self) -> dict:
        return {"family": self.family, "params": {"alpha": self.alpha, "beta": self.beta}}


@dataclass(frozen=True)
class LogarithmicKernel(Kernel):
    """``K(t) = log(1 + 1/t)``, with ``mu(dx) = (1 - exp(-x))/x dx``."""

    family = "logarithmic"
    k_infinity = 0.0
    # log singularity: bounded by any positive power
    singularity = 1e-3

    def _eval(self, t):
        with np.errstate(divide="ignore"):
            return np.log1p(1.0 / t)

    def primitive(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(t > 0, t * np.log1p(1.0 / np.where(t > 0, t, 1.0)) + np.log1p(t), 0.0)
        return float(out) if out.ndim == 0 else out

    def first_moment(self, t):
        t = np.asarray(t, dtype=float)
        safe = np.where(t > 0, t, 1.0)
        out = np.where(t > 0, 0.5 * safe**2 * np.log1p(1.0 / safe) + 0.5 * safe - 0.5 * np.log1p(safe), 0.0)
        return float(out) if out.ndim == 0 else out

    @property
    def measure(self) -> BernsteinMeasure:
        return BernsteinMeasure(regular=lambda x: -math.expm1(-x) / x if x > 0 else 1.0)

    @property
    def eta_star(self) -> float:
        return 0.0

    def to_dict(self) -> dict:
        return {"family": self.family, "params": {}}


@dataclass(frozen=True)
class FiniteSpectrumKernel(Kernel):
    """``K(t) = c0 + sum_i weights[i] * exp(-rates[i] t)``."""

    c0: float = 0.0
    weights: tuple[float, ...] = ()
    rates: tuple[float, ...] = ()
    family = "finite_spectrum"
    singularity = 0.0

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if len(self.weights) != len(self.rates):
            raise KernelError("finite_spectrum needs one weight per rate")
        if self.c0 < 0 or any(w < 0 for w in self.weights):
            raise KernelError("finite_spectrum coefficients must be nonnegative")
        if any(r <= 0 for r in self.rates):
            raise KernelError("finite_spectrum rates must be positive")
        if len(set(self.rates)) != len(self.rates):
            raise KernelError("finite_spectrum rates must be distinct")

    @property
    def k_infinity(self) -> float:
        return float(self.c0)

    def _arrays(self):
        keep = [(r, w) for r, w in sorted(zip(self.rates, self.weights)) if w > 0]
        lam = np.array([r for r, _ in keep], dtype=float)
        c = np.array([w for _, w in keep], dtype=float)
        return lam, c

    def _eval(self, t):
        lam, c = self._arrays()
        t = np.asarray(t, dtype=float)
        return self.c0 + (c * np.exp(-np.multiply.outer(t, lam))).sum(axis=-1)

    def primitive(self, t):
        lam, c = self._arrays()
        t = np.asarray(t, dtype=float)
        out = self.c0 * t + (c / lam * -np.expm1(-np.multiply.outer(t, lam))).sum(axis=-1)
        return float(out) if out.ndim == 0 else out

    def square_primitive(self, t):
        lam, c = self._arrays()
        t = np.asarray(t, dtype=float)
        out = self.c0**2 * t + 2 * self.c0 * (c / lam * -np.expm1(-np.multiply.outer(t, lam))).sum(axis=-1)
        s = lam[:, None] + lam[None, :]
        cc = c[:, None] * c[None, :]
        out = out + (cc / s * -np.expm1(-t[..., None, None] * s)).sum(axis=(-1, -2))
        return float(out) if out.ndim == 0 else out

    def first_moment(self, t):
        lam, c = self._arrays()
        t = np.asarray(t, dtype=float)
        lt = np.multiply.outer(t, lam)
        out = 0.5 * self.c0 * t**2 + (c / lam**2 * (1.0 - np.exp(-lt) * (1.0 + lt))).sum(axis=-1)
        return float(out) if out.ndim == 0 else out

    def self_convolution(self, t):
        lam, c = self._arrays()
        t = np.asarray(t, dtype=float)
        out = self.c0**2 * t + 2 * self.c0 * (c / lam * -np.expm1(-np.multiply.outer(t, lam))).sum(axis=-1)
        for i in range(len(lam)):
            for j in range(len(lam)):
                if i == j:
                    term = t * np.exp(-lam[i] * t)
                else:
                    term = (np.exp(-lam[j] * t) - np.exp(-lam[i] * t)) / (lam[i] - lam[j])
                out = out + c[i] * c[j] * term
        return float(out) if np.ndim(out) == 0 else out

    def laplace(self, lam: float) -> float:
        l, c = self._arrays()
        return self.c0 / lam + float((c / (lam + l)).sum())

    @property
    def measure(self) -> BernsteinMeasure:
        lam, c = self._arrays()
        return BernsteinMeasure(atoms=tuple(zip(lam.tolist(), c.tolist())))

    @property
    def eta_star(self) -> float:
        return -math.inf

    def to_dict(self) -> dict:
        return {"family": self.family,
                "params": {"c0": self.c0, "weights": list(self.weights), "rates": list(self.rates)}}


@dataclass(frozen=True)
class ShiftedKernel(Kernel):
    """``K_eps(t) = K(t + eps)``; Bernstein measure ``exp(-eps x) mu(dx)``."""

    base: Kernel
    eps: float
    family = "shifted"
    singularity = 0.0

    def __post_init__(self):
        if not self.eps > 0.0:
            raise KernelError("shifted kernel requires eps > 0")

    @property
    def k_infinity(self) -> float:
        return self.base.k_infinity

    def _eval(self, t):
        return self.base._eval(np.asarray(t, dtype=float) + self.eps)

    def primitive(self, t):
        t = np.asarray(t, dtype=float)
        out = np.asarray(self.base.primitive(t + self.eps)) - self.base.primitive(self.eps)
        return float(out) if out.ndim == 0 else out

    def square_primitive(self, t):
        t = np.asarray(t, dtype=float)
        out = np.asarray(self.base.square_primitive(t + self.eps)) - self.base.square_primitive(self.eps)
        return float(out) if out.ndim == 0 else out

    @property
    def measure(self) -> Optional[BernsteinMeasure]:
        m = self.base.measure
        if m is None:
            return None
        eps = self.eps
        if m.atoms is not None:
            return BernsteinMeasure(atoms=tuple((x, w * math.exp(-eps * x)) for x, w in m.atoms))
        reg = m.regular
        return BernsteinMeasure(regular=lambda x: reg(x) * math.exp(-eps * x), lower=m.lower,
                                upper=m.upper, singularity=m.singularity)

    @property
    def eta_star(self) -> float:
        return -math.inf

    def to_dict(self) -> dict:
        return {"family": self.family, "params": {"eps": self.eps, "base": self.base.to_dict()}}


@dataclass(frozen=True, eq=False)
class SampledKernel(Kernel):
    """Kernel tabulated on an increasing grid of positive times.

    Values are interpolated linearly in log-log coordinates; below the
    first sample a power law ``v0 (t/t0)**-p`` continues the first segment.
    ``meta`` carries solver diagnostics (e.g. an exact oracle column).
    """

    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)
    family = "sampled"
    k_infinity = 0.0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise KernelError("sampled kernel needs matching 1-d arrays with >= 2 points")
        if np.any(t <= 0) or np.any(np.diff(t) <= 0):
            raise KernelError("sampled kernel times must be positive and strictly increasing")
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise KernelError("sampled kernel values must be positive and finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def _slopes(self) -> np.ndarray:
        return np.diff(np.log(self.values)) / np.diff(np.log(self.times))

    @property
    def singularity(self) -> float:
        return float(min(max(-self._slopes[0], 0.0), 0.95))

    def _eval(self, t):
        t = np.asarray(t, dtype=float)
        lt, lv, s = np.log(self.times), np.log(self.values), self._slopes
        with np.errstate(divide="ignore"):
            x = np.log(t)
        i = np.clip(np.searchsorted(lt, x, side="right") - 1, 0, len(s) - 1)
        head = t < self.times[0]
        slope = np.where(head, -self.singularity, s[i])
        return np.exp(lv[i] + slope * (x - lt[i]))

    def _power_integral(self, t, power: int):
        """exact integral of (interpolant)**power over [0, t]."""
        t = np.asarray(t, dtype=float)
        tt, vv, s = self.times, self.values**power, self._slopes * power
        p = self.singularity * power
        if p >= 1.0:
            raise KernelError("sampled kernel is not integrable to this power at 0")
        # cumulative integrals at the knots
        seg = np.where(np.abs(s + 1) > 1e-12,
                       vv[:-1] * tt[:-1] / (s + 1) * ((tt[1:] / tt[:-1]) ** (s + 1) - 1.0),
                       vv[:-1] * tt[:-1] * np.log(tt[1:] / tt[:-1]))
        head = vv[0] * tt[0] / (1.0 - p)
        cum = np.concatenate([[head], head + np.cumsum(seg)])

        def one(x):
            if x <= 0:
                return 0.0
            if x <= tt[0]:
                return vv[0] * tt[0] / (1.0 - p) * (x / tt[0]) ** (1.0 - p)
            i = min(np.searchsorted(tt, x, side="right") - 1, len(s) - 1)
            e = s[i] + 1.0
            r = x / tt[i]
            part = vv[i] * tt[i] * (np.log(r) if abs(e) < 1e-12 else (r**e - 1.0) / e)
            return cum[i] + part

        out = np.vectorize(one, otypes=[float])(t)
        return float(out) if out.ndim == 0 else out

    def primitive(self, t):
        return self._power_integral(t, 1)

    def square_primitive(self, t):
        return self._power_integral(t, 2)

    def to_dict(self) -> dict:
        return {"family": self.family,
                "params": {"times": self.times.tolist(), "values": self.values.tolist()}}


# ---------------------------------------------------------------------------
# module-level operations


def eval_kernel(kernel: Kernel, t):
    """``K(t)``; raises :class:`KernelError` at ``t <= 0`` for singular kernels."""
    return kernel(t)


def primitive_and_ratio(kernel: Kernel, t):
    """Return ``(I_K(t), t K(t) / I_K(t))``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise KernelError("primitive_and_ratio requires t > 0")
    ik = np.asarray(kernel.primitive(t_arr), dtype=float)
    kv = np.asarray(kernel(t_arr), dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(ik > 0, t_arr * kv / np.where(ik > 0, ik, 1.0), 0.0)
    if t_arr.ndim == 0:
        return float(ik), float(ratio)
    return ik, ratio


def eta_star(kernel: Kernel) -> Optional[float]:
    """Critical integrability exponent; ``None`` when unknown (sampled kernels)."""
    return kernel.eta_star


def resolvent_matrix_exponential(kernel: FiniteSpectrumKernel, c: float, t) -> np.ndarray:
    """Exact resolvent of a finite-spectrum kernel: ``m^T expm(t M) 1``.

    ``M = diag(-x_i) + c 1 m^T`` over the atoms (plus the constant part as
    an atom at 0).
    """
    from scipy.linalg import expm

    lam, w = kernel._arrays()
    x = np.concatenate([[0.0], lam]) if kernel.c0 > 0 else lam
    m = np.concatenate([[kernel.c0], w]) if kernel.c0 > 0 else w
    M = np.diag(-x) + c * np.outer(np.ones_like(m), m)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.array([m @ expm(tt * M) @ np.ones_like(m) for tt in t])
    return out


def _check_blow_up(kernel: Kernel, c: float, t_max: float) -> None:
    if c <= 0.0:
        return
    lams = np.geomspace(1.0 / t_max, 1e3 / t_max, 16)
    try:
        den = np.array([1.0 - c * kernel.laplace(l) for l in lams])
    except KernelError:
        return
    if np.any(den <= 0.0):
        bad = lams[den <= 0.0].max()
        raise ResolventBlowUpError(
            f"1 - c*Khat(lambda) <= 0 at lambda={bad:.4g} (c={c}); the resolvent grows like "
            f"exp({bad:.3g} t) on the horizon and is not completely monotone")


def resolvent_kernel(kernel: Kernel, c: float, grid: Sequence[float], n_internal: int = 4000) -> SampledKernel:
    """Solve ``R = K + c K*R`` on ``grid`` by product-integration marching.

    The bounded remainder ``D = R - K`` solves ``D = c K*K + c K*D``; it is
    approximated piecewise linearly on a uniform internal mesh with weights
    from exact panel integrals of ``K`` and ``s K(s)``. For finite-spectrum
    kernels ``meta['exact']`` holds the matrix-exponential values.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise KernelError("resolvent grid must be strictly increasing with >= 2 points")
    if np.any(grid <= 0) and kernel.singular:
        raise KernelError("resolvent grid must start at t > 0 for singular kernels")
    if c == 0.0:
        vals = np.asarray(kernel(grid), dtype=float)
        return SampledKernel(grid, vals, meta={"c": 0.0})
    t_max = float(grid[-1])
    _check_blow_up(kernel, c, t_max)

    n = int(n_internal)
    h = t_max / n
    r = h * np.arange(n + 1)
    I = np.asarray(kernel.primitive(r), dtype=float)
    M1 = np.asarray(kernel.first_moment(r), dtype=float)
    F = np.asarray(kernel.self_convolution(r), dtype=float)
    dI = np.diff(I)
    dM = np.diff(M1)
    a = r[:-1]
    beta = ((a + h) * dI - dM) / h          # weight on the right hat of each panel
    alpha = dI - beta                      # weight on the left hat
    D = np.zeros(n + 1)
    denom = 1.0 - c * beta[0]
    if denom <= 0.0:
        raise ResolventBlowUpError("implicit product-integration step is singular; refine n_internal")
    for k in range(1, n + 1):
        # panels j = 0..k-1, lag index m = k-1-j
        js = np.arange(k)
        lag = k - 1 - js
        acc = alpha[lag] @ D[js]
        if k > 1:
            acc += beta[lag[:-1]] @ D[js[:-1] + 1]
        D[k] = (c * F[k] + c * acc) / denom
    if not np.all(np.isfinite(D)):
        raise ResolventBlowUpError("resolvent marching produced non-finite values")
    spline = CubicSpline(r, D)
    vals = np.asarray(kernel(grid), dtype=float) + spline(grid)
    meta = {"c": c, "n_internal": n}
    if isinstance(kernel, FiniteSpectrumKernel):
        meta["exact"] = resolvent_matrix_exponential(kernel, c, grid)
    if np.any(vals <= 0):
        raise ResolventBlowUpError("resolvent became non-positive on the grid")
    return SampledKernel(grid, vals, meta=meta)


@dataclass(frozen=True)
class CMReport:
    monotone: bool
    alternating: bool
    max_violation: float
    violations: tuple[float, ...] = ()

    @property
    def passed(self) -> bool:
        return self.monotone and self.alternating


def cm_diagnostic(times, values, order: int = 3, tol: float = 1e-8) -> CMReport:
    """Finite-order complete-monotonicity check via divided differences.

    Order ``k`` differences must have sign ``(-1)**k``. The violation of an
    order is the largest wrong-signed difference relative to the largest
    magnitude at that order.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size < order + 2:
        raise ValueError(f"cm_diagnostic needs at least order+2={order + 2} samples")
    if np.any(np.diff(t) <= 0):
        raise ValueError("cm_diagnostic needs a strictly increasing grid")
    viol = []
    dd = v.copy()
    for k in range(order + 1):
        if k > 0:
            dd = (dd[1:] - dd[:-1]) / (t[k:] - t[:-k])
        signed = (-1) ** k * dd
        scale = np.max(np.abs(dd)) if dd.size else 0.0
        bad = max(0.0, -float(np.min(signed))) if dd.size else 0.0
        viol.append(bad / scale if scale > 0 else 0.0)
    monotone = viol[0] <= tol and (order < 1 or viol[1] <= tol)
    alternating = all(x <= tol for x in viol)
    return CMReport(monotone=bool(monotone), alternating=bool(alternating), max_violation=float(max(viol)),
                    violations=tuple(float(x) for x in viol))


# ---------------------------------------------------------------------------
# serialization


def kernel_from_dict(desc: dict) -> Kernel:
    family = desc.get("family")
    p = desc.get("params", {}) or {}
    if family == "riemann_liouville":
        return RiemannLiouvilleKernel(alpha=float(p["alpha"]), beta=float(p.get("beta", 0.0)))
    if family == "logarithmic":
        return LogarithmicKernel()
    if family == "finite_spectrum":
        return FiniteSpectrumKernel(c0=float(p.get("c0", 0.0)), weights=tuple(p.get("weights", ())),
                                    rates=tuple(p.get("rates", ())))
    if family == "shifted":
        return ShiftedKernel(kernel_from_dict(p["base"]), float(p["eps"]))
    if family == "sampled":
        return SampledKernel(np.asarray(p["times"], float), np.asarray(p["values"], float))
    raise KernelError(f"unknown kernel family {family!r}")


def kernel_to_json(kernel: Kernel) -> str:
    return json.dumps(kernel.to_dict(), sort_keys=True)


def kernel_from_json(text: str) -> Kernel:
    return kernel_from_dict(json.loads(text))


def write_kernel_csv(path, times, kernel: Kernel) -> None:
    from ._io import write_csv

    t = np.asarray(times, dtype=float)
    write_csv(path, ["t", "K"], np.column_stack([t, np.asarray(kernel(t), dtype=float)]))


def read_kernel_csv(path) -> SampledKernel:
    from ._io import read_csv

    header, data = read_csv(path)
    if header[:2] != ["t", "K"]:
        raise KernelError(f"expected header 't,K' in {path}")
    return SampledKernel(data[:, 0], data[:, 1])
