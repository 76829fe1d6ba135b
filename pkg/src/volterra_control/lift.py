"""Discrete Markovian lift of a scalar Volterra equation.

The extended measure ``mu_bar = delta_0 + mu`` is replaced by finitely many
nodes ``x_0 = 0 < x_1 < ... < x_N`` with masses ``m_i``. The lifted state
``X`` lives on the nodes; the semigroup acts by ``exp(-t x_i)`` and the
observation is ``y = Gamma X = sum m_i X_i``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.linalg import expm

from .kernels import Kernel, KernelError

LiftedState = np.ndarray


@dataclass(frozen=True, eq=False)
class LiftNodes:
    """Quadrature nodes of ``mu_bar``.

    Attributes
    ----------
    locations, masses, xi_K : ndarray
        Node locations (first is 0), masses (first is 1) and the kernel
        injection vector ``(K(inf), 1, ..., 1)``.
    t_range : tuple
        Interval on which the reconstruction error was measured.
    error : float
        Sup relative reconstruction error on ``t_range``.
    flagged : bool
        True when ``error`` exceeds the requested tolerance.
    """

    locations: np.ndarray
    masses: np.ndarray
    xi_K: np.ndarray
    t_range: tuple[float, float] = (0.0, 0.0)
    error: float = 0.0
    tolerance: float = 1e-2
    flagged: bool = False

    def __post_init__(self):
        x = np.asarray(self.locations, dtype=float)
        m = np.asarray(self.masses, dtype=float)
        xi = np.asarray(self.xi_K, dtype=float)
        if not (x.shape == m.shape == xi.shape) or x.ndim != 1 or x.size < 1:
            raise ValueError("locations, masses and xi_K must be 1-d arrays of equal length")
        if x[0] != 0.0 or m[0] != 1.0:
            raise ValueError("the first node must be the delta_0 atom (x=0, m=1)")
        if np.any(np.diff(x) <= 0):
            raise ValueError("node locations must be strictly increasing")
        if np.any(m <= 0):
            raise ValueError("node masses must be positive")
        for name, arr in (("locations", x), ("masses", m), ("xi_K", xi)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def size(self) -> int:
        return int(self.locations.size)

    @property
    def k_infinity(self) -> float:
        return float(self.xi_K[0])

    def to_dict(self) -> dict:
        return {"locations": self.locations.tolist(), "masses": self.masses.tolist(),
                "xi_K": self.xi_K.tolist(), "t_range": list(self.t_range), "error": self.error,
                "tolerance": self.tolerance, "flagged": self.flagged}

    @classmethod
    def from_dict(cls, d: dict) -> "LiftNodes":
        return cls(np.asarray(d["locations"]), np.asarray(d["masses"]), np.asarray(d["xi_K"]),
                   tuple(d.get("t_range", (0.0, 0.0))), float(d.get("error", 0.0)),
                   float(d.get("tolerance", 1e-2)), bool(d.get("flagged", False)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "LiftNodes":
        return cls.from_dict(json.loads(text))

    def write_csv(self, path) -> None:
        from ._io import write_csv

        write_csv(path, ["x", "m", "xi"], np.column_stack([self.locations, self.masses, self.xi_K]))


def _panel_orders(n: int) -> list[int]:
    # two Gauss points per panel once there are enough nodes, one otherwise
    q = 2 if n >= 16 else 1
    orders = [q] * (n // q)
    if n % q:
        orders.append(n % q)
    return orders


def discretize_measure(kernel: Kernel, n_nodes: int, t_range: tuple[float, float],
                       scheme: str = "geometric_gauss", tol: float = 1e-2,
                       n_check: int = 400) -> LiftNodes:
    """Quadrature of the Bernstein measure accurate on ``t_range``.

    ``n_nodes`` counts the nodes of ``mu`` (the delta_0 atom is extra).
    Finite-spectrum kernels return their atoms exactly. Density measures
    use geometric panels in ``x - lower`` on ``[0.01/t_max, 100/t_min]``
    with Gauss-Legendre points in ``log(x - lower)``; masses are rescaled
    to the exact panel integrals, the mass next to ``lower`` is lumped at
    its mean and the mass above the last panel is dropped.
    """
    t_min, t_max = map(float, t_range)
    if not 0.0 < t_min < t_max:
        raise ValueError("t_range must satisfy 0 < t_min < t_max")
    meas = kernel.measure
    if meas is None:
        raise KernelError(f"{kernel.family} kernel has no Bernstein measure to discretize")
    if meas.is_atomic or scheme == "atoms_exact":
        if not meas.is_atomic:
            raise ValueError("atoms_exact scheme needs an atomic measure")
        xs = np.array([a[0] for a in meas.atoms])
        ws = np.array([a[1] for a in meas.atoms])
    elif scheme == "geometric_gauss":
        if n_nodes < 2:
            raise ValueError("geometric_gauss needs n_nodes >= 2")
        # panels are geometric in the distance to the lower end of the support
        base = meas.lower
        # a shift by eps moves the effective observation window to [t_min + eps, t_max + eps]
        eps = float(getattr(kernel, "eps", 0.0))
        lo = 1e-2 / (t_max + eps)
        hi = max(1e2 / (t_min + eps) - base, 10.0 * lo)
        xs_l, ws_l = [], []
        n_panel_nodes = n_nodes
        lump = meas.integrate(lambda x: 1.0, base, base + lo)
        if lump > 0:
            xs_l.append(meas.integrate(lambda x: x, base, base + lo) / lump)
            ws_l.append(lump)
            n_panel_nodes -= 1
        orders = _panel_orders(n_panel_nodes)
        edges = np.geomspace(lo, hi, len(orders) + 1)
        for q, a, b in zip(orders, edges[:-1], edges[1:]):
            mass = meas.integrate(lambda x: 1.0, base + a, base + b)
            if not mass > 0.0:
                continue
            gx, gw = np.polynomial.legendre.leggauss(q)
            la, lb = math.log(a), math.log(b)
            r = np.exp(0.5 * (la + lb) + 0.5 * (lb - la) * gx)
            x = base + r
            w = gw * meas.density(x) * r
            w = w * (mass / w.sum()) if w.sum() > 0 else np.full(q, mass / q)
            xs_l.extend(x.tolist())
            ws_l.extend(w.tolist())
        xs, ws = np.array(xs_l), np.array(ws_l)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    order = np.argsort(xs)
    nodes_x = np.concatenate([[0.0], xs[order]])
    nodes_m = np.concatenate([[1.0], ws[order]])
    xi = np.concatenate([[kernel.k_infinity], np.ones(xs.size)])
    t = np.geomspace(t_min, t_max, n_check)
    ref = np.asarray(kernel(t), dtype=float)
    rec = np.exp(-np.outer(t, nodes_x)) @ (nodes_m * xi)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(ref > 0, np.abs(rec - ref) / np.where(ref > 0, ref, 1.0), np.abs(rec - ref))
    err = float(rel.max())
    if meas.is_atomic:
        err = 0.0 if err < 1e-13 else err
    return LiftNodes(nodes_x, nodes_m, xi, (t_min, t_max), err, tol, err > tol)


def reconstruct_kernel(nodes: LiftNodes, t):
    """``sum m_i exp(-t x_i) xi_i``."""
    t_arr = np.asarray(t, dtype=float)
    out = np.exp(-np.multiply.outer(t_arr, nodes.locations)) @ (nodes.masses * nodes.xi_K)
    return float(out) if out.ndim == 0 else out


def semigroup_apply(nodes: LiftNodes, t: float, state: LiftedState) -> LiftedState:
    """``S(t) X``: componentwise multiplication by ``exp(-t x_i)``."""
    state = _check_state(nodes, state)
    return np.exp(-t * nodes.locations) * state


def gamma_observe(nodes: LiftNodes, state: LiftedState) -> float:
    """``Gamma X = sum m_i X_i``."""
    state = _check_state(nodes, state)
    return float(nodes.masses @ state)


def weighted_norm(nodes: LiftNodes, state: LiftedState, eta: float) -> float:
    """Norm of ``H_eta``: ``sqrt(sum m_i (1 + x_i)**eta X_i**2)``."""
    state = _check_state(nodes, state)
    return float(np.sqrt(np.sum(nodes.masses * (1.0 + nodes.locations) ** eta * state**2)))


def analytic_smoothing_constant(nodes: LiftNodes, t: float, eta: float, eta_prime: float) -> float:
    """Discrete operator norm of ``A S(t)`` from ``H_eta'`` to ``H_eta``.

    Equals ``max_i x_i exp(-t x_i) (1 + x_i)**((eta - eta')/2)``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if not eta_prime < eta:
        raise ValueError("eta_prime must be smaller than eta")
    x = nodes.locations
    return float(np.max(x * np.exp(-t * x) * (1.0 + x) ** (0.5 * (eta - eta_prime))))


def lift_initial_curve(nodes: LiftNodes, spec: Union[tuple, np.ndarray, list]) -> LiftedState:
    """Lift an initial curve ``z``.

    ``spec`` is ``("constant", y0)``, ``("kernel_shaped", lam)`` or
    ``("explicit", vector)``; a bare vector is treated as explicit.
    """
    if isinstance(spec, np.ndarray) or (isinstance(spec, list) and spec and not isinstance(spec[0], str)):
        kind, val = "explicit", spec
    else:
        kind, val = spec
    if kind == "constant":
        out = np.zeros(nodes.size)
        out[0] = float(val)
        return out
    if kind == "kernel_shaped":
        return float(val) * nodes.xi_K.copy()
    if kind == "explicit":
        return _check_state(nodes, np.array(val, dtype=float))
    raise ValueError(f"unknown initial-curve kind {kind!r}")


def _check_state(nodes: LiftNodes, state) -> np.ndarray:
    arr = np.asarray(state, dtype=float)
    if arr.shape[-1] != nodes.size:
        raise ValueError(f"state length {arr.shape[-1]} does not match {nodes.size} nodes")
    return arr


def default_exponents(eta_star: Optional[float]) -> tuple[float, float]:
    """``(eta, eta')`` with ``eta`` mid-way in ``(eta_*, 1)`` and ``eta' < eta_*``."""
    if eta_star is None or math.isinf(eta_star):
        return 0.0 if eta_star is not None else 0.5, -1.0
    eta = 0.5 * (eta_star + 1.0)
    return eta, eta_star - 0.5


@dataclass(frozen=True, eq=False)
class LiftedModel:
    """Lifted controlled SVIE ``dX = (A X + B u) dt + G dW`` on the nodes.

    ``kernel`` is kept for closed-form quantities (Gramian, primitives);
    ``nodes`` drive simulation.
    """

    kernel: Kernel
    nodes: LiftNodes
    c: float = 0.0
    b: float = 1.0
    g: float = 1.0
    eta: Optional[float] = None
    eta_prime: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.b == 0.0 or self.g == 0.0:
            raise ValueError("controllability requires b != 0 and g != 0")
        es = self.kernel.eta_star
        eta, eta_p = default_exponents(es)
        if self.eta is None:
            object.__setattr__(self, "eta", eta)
        if self.eta_prime is None:
            object.__setattr__(self, "eta_prime", eta_p)
        if not self.eta_prime < self.eta:
            raise ValueError("eta_prime must be smaller than eta")
        if es is not None and not math.isinf(es):
            if not es < self.eta < 1.0:
                raise ValueError(f"eta must lie in (eta_*, 1) = ({es}, 1)")
            if not self.eta_prime < es:
                raise ValueError("eta_prime must be below eta_*")

    @property
    def B(self) -> np.ndarray:
        return self.b * self.nodes.xi_K

    @property
    def G(self) -> np.ndarray:
        return self.g * self.nodes.xi_K

    def generator(self) -> np.ndarray:
        """Matrix of the drift ``A + c xi_K m^T`` acting on lifted states."""
        n = self.nodes
        return np.diag(-n.locations) + self.c * np.outer(n.xi_K, n.masses)

    def observation_row(self, tau) -> np.ndarray:
        """Row ``r(tau)`` with ``Gamma S_bar(tau) X = r(tau) . X``.

        With ``c != 0`` ``S_bar`` is generated by ``A + c xi_K m^T``.
        """
        tau_arr = np.atleast_1d(np.asarray(tau, dtype=float))
        n = self.nodes
        if self.c == 0.0:
            rows = n.masses * np.exp(-np.outer(tau_arr, n.locations))
        else:
            M = self.generator()
            rows = np.array([n.masses @ expm(t * M) for t in tau_arr])
        return rows[0] if np.ndim(tau) == 0 else rows
