"""Simulation of the controlled Volterra equation and Monte Carlo verification.

Paths are simulated either through the lift (exponential Euler on the
nodes) or directly from the Volterra sum. Every path draws its Brownian
increments from its own stream ``SeedSequence(seed, spawn_key=(i,))``, and
paths are processed in fixed-size chunks, so results do not depend on the
number of worker threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .hjb import Hamiltonian, ValueGrid
from .kernels import Kernel
from .lift import LiftedModel
from .payoffs import Payoff

CHUNK = 256


@dataclass(frozen=True)
class SimConfig:
    """Time step, horizon, path count and seed."""

    dt: float
    n_paths: int
    seed: int = 0
    T: float = 1.0
    scheme: str = "exp_euler"
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.dt < self.T:
            raise ValueError("need 0 < dt < T")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if self.scheme not in ("exp_euler", "euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def n_steps(self) -> int:
        n = int(round(self.T / self.dt))
        if abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError("T must be an integer multiple of dt")
        return n

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)


# ---------------------------------------------------------------------------
# open-loop controls


@dataclass(frozen=True)
class OpenLoop:
    """Deterministic control ``u(t)``; ``name`` labels it in reports."""

    fn: Callable[[float], float]
    name: str = "custom"

    def __call__(self, t: float) -> float:
        return float(self.fn(t))


def constant_control(u: float) -> OpenLoop:
    return OpenLoop(lambda t: u, f"constant({u:g})")


def bang_bang(first: float, second: float, switch: float) -> OpenLoop:
    """``first`` on ``[0, switch)``, ``second`` afterwards."""
    return OpenLoop(lambda t: first if t < switch else second, f"bang_bang({first:g},{second:g}@{switch:g})")


def control_from_dict(desc: dict) -> OpenLoop:
    kind = desc.get("kind")
    if kind == "constant":
        return constant_control(float(desc["value"]))
    if kind == "bang_bang":
        return bang_bang(float(desc["first"]), float(desc["second"]), float(desc["switch"]))
    raise ValueError(f"unknown control kind {kind!r}")


# ---------------------------------------------------------------------------
# Brownian increments


def brownian_increments(seed: int, paths: Sequence[int], n_steps: int, dt: float) -> np.ndarray:
    """Increments for the given path indices, one independent stream per path."""
    out = np.empty((len(paths), n_steps))
    sq = math.sqrt(dt)
    for r, i in enumerate(paths):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(int(i),))))
        out[r] = rng.standard_normal(n_steps) * sq
    return out


def _chunks(n: int):
    return [np.arange(s, min(s + CHUNK, n)) for s in range(0, n, CHUNK)]


def _run_chunks(fn, cfg: SimConfig):
    chunks = _chunks(cfg.n_paths)
    if cfg.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            parts = list(ex.map(fn, chunks))
    else:
        parts = [fn(c) for c in chunks]
    return parts


# ---------------------------------------------------------------------------
# path batches


@dataclass(eq=False)
class PathBatch:
    """Simulated paths.

    ``observed`` has shape ``(paths, steps + 1)``; ``controls`` and
    ``gradients`` (the B-gradient seen along the path, when recorded) have
    shape ``(paths, steps)``. ``valid`` marks paths that stayed inside the
    value grid in closed loop.
    """

    times: np.ndarray
    observed: np.ndarray
    controls: np.ndarray
    terminal_states: Optional[np.ndarray] = None
    gradients: Optional[np.ndarray] = None
    valid: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)
    slopes: Optional[np.ndarray] = None
    gap_rule: Optional[tuple] = None

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n_paths(self) -> int:
        return int(self.observed.shape[0])

    @property
    def n_excluded(self) -> int:
        return 0 if self.valid is None else int((~self.valid).sum())

    def costs(self, ham: Hamiltonian, phi_bar: Payoff) -> np.ndarray:
        """Per-path ``sum l1(u_k) dt + phi(y_T)``."""
        return ham.cost(self.controls).sum(axis=1) * self.dt + np.asarray(phi_bar(self.observed[:, -1]))

    def hamiltonian_gap(self, ham: Hamiltonian) -> np.ndarray:
        """Per-path ``int (H_CV(p; u) - H_min(p)) ds`` along the recorded gradients.

        Within each step ``d_y f`` is frozen at the left point while the
        factor ``K(tau) b`` is integrated by Gauss quadrature (graded on
        the last step, where ``K`` may be singular).
        """
        if self.gradients is None:
            raise ValueError("batch has no recorded gradients")
        if self.gap_rule is None or self.slopes is None:
            p = self.gradients
            return (ham.h_cv(p, self.controls) - ham.h_min(p)).sum(axis=1) * self.dt
        wq, kbq = self.gap_rule
        total = np.zeros(self.n_paths)
        for q in range(wq.shape[1]):
            p = kbq[None, :, q] * self.slopes
            total += ((ham.h_cv(p, self.controls) - ham.h_min(p)) * wq[None, :, q]).sum(axis=1)
        return total

    def write_csv(self, path) -> None:
        """Long format ``path, t, y, u`` (``u`` empty at the final time)."""
        from ._io import FLOAT_FMT
        from pathlib import Path

        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        n = self.controls.shape[1]
        with p.open("w") as fh:
            fh.write("path,t,y,u\n")
            for i in range(self.n_paths):
                for k, t in enumerate(self.times):
                    u = FLOAT_FMT.format(self.controls[i, k]) if k < n else ""
                    fh.write(f"{i},{FLOAT_FMT.format(t)},{FLOAT_FMT.format(self.observed[i, k])},{u}\n")


def _concat(parts, times, meta) -> PathBatch:
    def cat(i):
        return np.concatenate([p[i] for p in parts]) if parts[0][i] is not None else None

    slopes = cat(5) if len(parts[0]) > 5 else None
    return PathBatch(times, cat(0), cat(1), cat(2), cat(3), cat(4), meta, slopes)


# ---------------------------------------------------------------------------
# lifted simulation


class _GradientProbe:
    """B-gradient ``K(tau) b d_y f(tau, r(tau) X)`` evaluated at the step times."""

    def __init__(self, model: LiftedModel, vg: ValueGrid, times: np.ndarray):
        self.vg = vg
        T = vg.T
        self.tau = T - times[:-1]
        if np.any(self.tau <= 0):
            raise ValueError("value grid horizon shorter than the simulation horizon")
        self.rows = model.observation_row(self.tau)
        self.kb = np.asarray(vg.kernel(self.tau), dtype=float) * vg.b
        self.gap_rule = self._gap_rule(times)

    def _gap_rule(self, times, order: int = 6):
        dt = float(times[1] - times[0])
        gx, gw = np.polynomial.legendre.leggauss(order)
        v, wv = 0.5 * (gx + 1.0), 0.5 * gw
        hi = self.tau
        # step k covers tau in [hi - dt, hi]
        tq = hi[:, None] - dt * v[None, :]
        wq = np.tile(dt * wv, (hi.size, 1))
        last = hi - dt <= 1e-12 * dt
        if np.any(last):
            # tau = lo + dt v**2 absorbs an integrable singularity at lo
            lo = hi[last] - dt
            tq[last] = lo[:, None] + dt * v[None, :] ** 2
            wq[last] = 2.0 * dt * v[None, :] * wv[None, :]
        kbq = np.asarray(self.vg.kernel(np.maximum(tq, 1e-300)), dtype=float) * self.vg.b
        return wq, kbq

    def __call__(self, k: int, X: np.ndarray):
        y = (X * self.rows[k]).sum(axis=1)
        inside = self.vg.in_span(y)
        d = np.asarray(self.vg.dy(float(self.tau[k]), y))
        return self.kb[k] * d, inside, d


def _lifted_core(model: LiftedModel, xi_z, cfg: SimConfig, policy, probe: Optional[_GradientProbe]):
    nodes = model.nodes
    x, m, xi = nodes.locations, nodes.masses, nodes.xi_K
    dt, n = cfg.dt, cfg.n_steps
    times = cfg.times
    if cfg.scheme == "exp_euler":
        decay = np.exp(-x * dt)
        phi = np.where(x > 0, -np.expm1(-x * dt) / np.where(x > 0, x * dt, 1.0), 1.0)
    else:
        decay = 1.0 - x * dt
        phi = np.ones_like(x)
    xi_z = np.asarray(xi_z, dtype=float)

    def run(paths):
        P = len(paths)
        dW = brownian_increments(cfg.seed, paths, n, dt)
        X = np.tile(xi_z, (P, 1))
        obs = np.empty((P, n + 1))
        ctr = np.empty((P, n))
        grads = np.empty((P, n)) if probe is not None else None
        slopes = np.empty((P, n)) if probe is not None else None
        valid = np.ones(P, dtype=bool) if probe is not None else None
        obs[:, 0] = (X * m).sum(axis=1)
        for k in range(n):
            p = None
            if probe is not None:
                p, inside, d = probe(k, X)
                grads[:, k] = p
                slopes[:, k] = d
                valid &= inside
            u = policy(k, times[k], p, P)
            ctr[:, k] = u
            drive = (model.b * u + model.c * obs[:, k]) * dt + model.g * dW[:, k]
            X = decay * X + (phi * xi) * drive[:, None]
            obs[:, k + 1] = (X * m).sum(axis=1)
        if not np.all(np.isfinite(obs)):
            raise FloatingPointError("lifted simulation overflowed")
        return obs, ctr, X, grads, valid, slopes

    batch = _concat(_run_chunks(run, cfg), times, {"scheme": cfg.scheme, "seed": cfg.seed})
    if probe is not None:
        batch.gap_rule = probe.gap_rule
    return batch


def simulate_lifted(model: LiftedModel, xi_z, control: Callable[[float], float], cfg: SimConfig,
                    vg: Optional[ValueGrid] = None) -> PathBatch:
    """Open-loop simulation of the lifted equation.

    Each step applies ``X <- exp(-x dt) X + phi(x dt) xi_K ((b u + c y) dt + g dW)``
    with ``phi(z) = (1 - exp(-z))/z``. When ``vg`` is given the B-gradient
    of the value function along the path is recorded.
    """
    probe = _GradientProbe(model, vg, cfg.times) if vg is not None else None
    uk = np.array([control(t) for t in cfg.times[:-1]], dtype=float)

    def policy(k, t, p, P):
        return np.full(P, uk[k])

    return _lifted_core(model, xi_z, cfg, policy, probe)


def simulate_closed_loop(model: LiftedModel, vg: ValueGrid, ham: Hamiltonian, xi_z, cfg: SimConfig) -> PathBatch:
    """Optimal feedback ``u = gamma(grad_B v(t, X))``.

    Paths whose observation leaves the value grid are flagged in
    ``valid``; they keep the clamped feedback but should be excluded from
    cost estimates.
    """
    probe = _GradientProbe(model, vg, cfg.times)

    def policy(k, t, p, P):
        return np.asarray(ham.select(p), dtype=float)

    batch = _lifted_core(model, xi_z, cfg, policy, probe)
    batch.meta["closed_loop"] = True
    return batch


# ---------------------------------------------------------------------------
# direct Volterra simulation


def simulate_svie_direct(kernel: Kernel, z_curve: Callable, control: Callable[[float], float],
                         coeffs: dict, cfg: SimConfig, weights: str = "left") -> PathBatch:
    """Left-rectangle discretization of the Volterra equation.

    ``y_k = z(t_k) + sum_{j<k} K_{k-j} ((c y_j + b u_j) dt + g dW_j)`` with
    ``K_m = K(m dt)`` for ``m >= 2`` and the exact panel average
    ``I_K(dt)/dt`` for ``m = 1``. ``weights="panel"`` uses exact panel
    averages ``(I_K(m dt) - I_K((m-1) dt))/dt`` for every lag (product
    integration), which removes the rectangle-rule error for singular kernels.
    """
    c = float(coeffs.get("c", 0.0))
    b = float(coeffs.get("b", 1.0))
    g = float(coeffs.get("g", 1.0))
    dt, n = cfg.dt, cfg.n_steps
    times = cfg.times
    lags = dt * np.arange(1, n + 1)
    if weights == "left":
        kw = np.asarray(kernel(lags), dtype=float)
        kw[0] = kernel.primitive(dt) / dt
    elif weights == "panel":
        kw = np.diff(np.concatenate([[0.0], np.asarray(kernel.primitive(lags), dtype=float)])) / dt
    else:
        raise ValueError(f"unknown weights {weights!r}")
    z = np.array([z_curve(t) for t in times], dtype=float)
    uk = np.array([control(t) for t in times[:-1]], dtype=float)
    # Toeplitz weights: L[k-1, j] = kw[k-1-j] for j < k
    idx = np.arange(n)[:, None] - np.arange(n)[None, :]
    L = np.where(idx >= 0, kw[np.clip(idx, 0, n - 1)], 0.0)

    def run(paths):
        P = len(paths)
        dW = brownian_increments(cfg.seed, paths, n, dt)
        inc = b * uk[None, :] * dt + g * dW
        obs = np.empty((P, n + 1))
        if c == 0.0:
            obs[:, 0] = z[0]
            obs[:, 1:] = z[None, 1:] + inc @ L.T
        else:
            obs[:, 0] = z[0]
            for k in range(1, n + 1):
                drive = inc[:, :k] + c * obs[:, :k] * dt
                obs[:, k] = z[k] + drive @ kw[:k][::-1]
        return obs, np.tile(uk, (P, 1)), None, None, None

    return _concat(_run_chunks(run, cfg), times, {"scheme": "direct", "seed": cfg.seed})


# ---------------------------------------------------------------------------
# estimates and verification


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    std_err: float
    ci95: tuple[float, float]
    n: int


def _estimate(samples: np.ndarray) -> CostEstimate:
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empty batch")
    mean = float(samples.mean())
    se = float(samples.std(ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else 0.0
    return CostEstimate(mean, se, (mean - 1.959963984540054 * se, mean + 1.959963984540054 * se), int(samples.size))


def estimate_cost(batch: PathBatch, ham: Hamiltonian, phi_bar: Payoff) -> CostEstimate:
    """Mean, standard error and 95% interval of the per-path cost (valid paths only)."""
    costs = batch.costs(ham, phi_bar)
    if batch.valid is not None:
        costs = costs[batch.valid]
    return _estimate(costs)


def value_at_start(vg: ValueGrid, model: LiftedModel, xi_z) -> float:
    """``v(0, xi_z) = f(T, Gamma S_bar(T) xi_z)``."""
    y0 = float(model.observation_row(vg.T) @ np.asarray(xi_z, dtype=float))
    return vg.value(vg.T, y0)


def default_alternatives(ham: Hamiltonian, T: float) -> list[OpenLoop]:
    """Endpoints of ``U``, zero (when admissible) and the two bang-bang switches at ``T/2``."""
    alts = [constant_control(ham.u_min)]
    if ham.u_max != ham.u_min:
        alts.append(constant_control(ham.u_max))
        alts.append(bang_bang(ham.u_min, ham.u_max, 0.5 * T))
        alts.append(bang_bang(ham.u_max, ham.u_min, 0.5 * T))
    if ham.u_min < 0.0 < ham.u_max:
        alts.append(constant_control(0.0))
    return alts


def verify_optimality(model: LiftedModel, vg: ValueGrid, ham: Hamiltonian, phi_bar: Payoff, xi_z,
                      cfg: SimConfig, alt_controls: Optional[list] = None, grid_tol: float = 2e-3) -> dict:
    """Monte Carlo check of the verification theorem and the fundamental identity.

    (a) ``J(u) - v >= -(2 se + grid_tol)`` for every alternative, with
    ``strict`` marking ``J(u) - v > 2 se``; (b) ``|v - J(u*)| <= 3 se + grid_tol``;
    (c) the paired per-path difference ``cost - v - Hamiltonian gap`` has
    mean within ``3 se + grid_tol`` of zero and the gap mean is ``>= -3 se``.
    """
    alts = default_alternatives(ham, cfg.T) if alt_controls is None else list(alt_controls)
    v = value_at_start(vg, model, xi_z)
    opt = simulate_closed_loop(model, vg, ham, xi_z, cfg)
    j_opt = estimate_cost(opt, ham, phi_bar)
    excluded = opt.n_excluded
    opt_gap = _estimate(opt.hamiltonian_gap(ham)[opt.valid])
    check_b = {"v": v, "J": j_opt.mean, "std_err": j_opt.std_err, "ci95": list(j_opt.ci95),
               "margin": 3 * j_opt.std_err + grid_tol - abs(v - j_opt.mean),
               "in_ci95": bool(j_opt.ci95[0] <= v <= j_opt.ci95[1]),
               "excluded_paths": excluded}
    check_b["passed"] = bool(check_b["margin"] >= 0 and excluded <= 1e-3 * cfg.n_paths)
    rows = []
    for ctrl in alts:
        batch = simulate_lifted(model, xi_z, ctrl, cfg, vg=vg)
        costs = batch.costs(ham, phi_bar)
        gap = batch.hamiltonian_gap(ham)
        ok = batch.valid
        est = _estimate(costs[ok])
        gap_est = _estimate(gap[ok])
        diff = _estimate(costs[ok] - v - gap[ok])
        excess = est.mean - v
        rows.append({
            "control": getattr(ctrl, "name", "custom"),
            "J": est.mean, "std_err": est.std_err, "J_minus_v": excess,
            "margin_a": excess + 2 * est.std_err + grid_tol,
            "strict": bool(excess > 2 * est.std_err),
            "hamiltonian_gap": gap_est.mean, "gap_std_err": gap_est.std_err,
            "identity_residual": diff.mean, "identity_std_err": diff.std_err,
            "margin_c": 3 * diff.std_err + grid_tol - abs(diff.mean),
            "gap_nonnegative": bool(gap_est.mean >= -3 * gap_est.std_err),
            "excluded_paths": batch.n_excluded,
        })
    check_a = all(r["margin_a"] >= 0 for r in rows)
    check_c = all(r["margin_c"] >= 0 and r["gap_nonnegative"] for r in rows)
    return {"v": v, "optimal": check_b, "optimal_hamiltonian_gap": opt_gap.mean,
            "alternatives": rows, "checks": {"a": check_a, "b": check_b["passed"], "c": check_c},
            "passed": bool(check_a and check_b["passed"] and check_c)}
