"""Config-driven command line runner.

Each subcommand reads a YAML config, writes CSV/JSON artifacts into the
output directory together with ``manifest.json`` (config hash, versions,
seed, artifact hashes) and ``manifest_time.json`` (timestamps only).

Exit codes: 0 success, 1 failed optimality checks (``verify``), 2 invalid
configuration or missing inputs, 3 numeric failure (details in
``diagnostic.json``).
"""
from __future__ import annotations

import argparse
import hashlib
import math
import platform
import sys
import time
import traceback
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from ._io import read_csv, write_csv, write_json
from .config import Config, ConfigError, load_config
from .control import (SimConfig, control_from_dict, estimate_cost, simulate_closed_loop,
                      simulate_lifted, verify_optimality)
from .hjb import (ContractionError, DomainCoverageError, ExtrapolationError, HJBGrids, Hamiltonian, ValueGrid,
                  gradient_blowup, solve_hjb)
from .kernels import (KernelError, QuadratureError, ResolventBlowUpError, cm_diagnostic, kernel_from_dict,
                      primitive_and_ratio, resolvent_kernel)
from .lift import LiftedModel, discretize_measure, lift_initial_curve
from .payoffs import payoff_from_dict
from .smoothing import constant_ansatz_energy, lambda_op, min_energy_control, smoothing_profile

SCHEMA_VERSION = 1
SUBCOMMANDS = ("kernel-info", "lift", "smoothing", "min-energy", "hjb-solve", "simulate", "verify", "report")
NUMERIC_ERRORS = (ArithmeticError, FloatingPointError, QuadratureError, ResolventBlowUpError, DomainCoverageError,
                  ContractionError, ExtrapolationError, np.linalg.LinAlgError)


class UsageError(RuntimeError):
    """Missing inputs for a subcommand (exit 2)."""


class ChecksFailed(RuntimeError):
    """Optimality checks failed (exit 1)."""


# ---------------------------------------------------------------------------
# building blocks from config


class Context:
    def __init__(self, cfg: Config, out: Path, seed: int | None, threads: int):
        self.cfg, self.out, self.threads = cfg, out, threads
        self.seed = int(cfg["simulation"]["seed"] if seed is None else seed)
        self.files: list[str] = []
        self._cache: dict = {}

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    @property
    def kernel(self):
        if "kernel" not in self._cache:
            try:
                self._cache["kernel"] = kernel_from_dict(self.cfg["kernel"])
            except (KernelError, KeyError, TypeError, ValueError) as exc:
                raise self.cfg.error(f"invalid kernel: {exc}", "kernel", "params") from exc
        return self._cache["kernel"]

    @property
    def T(self) -> float:
        return float(self.cfg["horizon"])

    @property
    def model(self) -> LiftedModel:
        if "model" not in self._cache:
            lc = self.cfg["lift"]
            t_min, t_max = float(lc["t_min"]), float(lc["t_max"])
            if not t_min < t_max:
                raise self.cfg.error("lift.t_min must be below lift.t_max", "lift", "t_min")
            nodes = discretize_measure(self.kernel, int(lc["n_nodes"]), (t_min, t_max), tol=float(lc["tol"]))
            co = self.cfg["coefficients"]
            try:
                self._cache["model"] = LiftedModel(self.kernel, nodes, float(co["c"]), float(co["b"]), float(co["g"]))
            except ValueError as exc:
                raise self.cfg.error(str(exc), "coefficients") from exc
        return self._cache["model"]

    @property
    def xi_z(self) -> np.ndarray:
        ic = self.cfg["initial_curve"]
        try:
            return lift_initial_curve(self.model.nodes, (ic["kind"], ic.get("value", 0.0)))
        except ValueError as exc:
            raise self.cfg.error(str(exc), "initial_curve") from exc

    @property
    def ham(self) -> Hamiltonian:
        h = self.cfg["hamiltonian"]
        try:
            return Hamiltonian(float(h["u_min"]), float(h["u_max"]), "quadratic", float(h["weight"]))
        except ValueError as exc:
            raise self.cfg.error(str(exc), "hamiltonian") from exc

    @property
    def payoff(self):
        try:
            return payoff_from_dict(self.cfg["payoff"])
        except (TypeError, ValueError) as exc:
            raise self.cfg.error(f"invalid payoff: {exc}", "payoff") from exc

    @property
    def grids(self) -> HJBGrids:
        h = self.cfg["hjb"]
        lo, hi = map(float, h["y_span"])
        if not lo < hi:
            raise self.cfg.error("hjb.y_span must be increasing", "hjb", "y_span")
        return HJBGrids(int(h["n_tau"]), int(h["n_y"]), (lo, hi), int(h["quad_order"]), float(h["pad"]),
                        int(h["picard_iters"]))

    @property
    def sim(self) -> SimConfig:
        s = self.cfg["simulation"]
        try:
            cfg = SimConfig(float(s["dt"]), int(s["n_paths"]), self.seed, self.T, s["scheme"], self.threads)
            cfg.n_steps
        except ValueError as exc:
            raise self.cfg.error(str(exc), "simulation") from exc
        return cfg

    def value_grid(self) -> ValueGrid:
        """Reuse ``value_grid.npz`` from an earlier ``hjb-solve`` when it matches the config."""
        snap = self.out / "value_grid.npz"
        if snap.exists():
            vg = ValueGrid.load(snap)
            if vg.meta.get("config_sha256") == self.cfg.sha256:
                return vg
        return self._solve()

    def _solve(self) -> ValueGrid:
        vg = solve_hjb(self.model, self.ham, self.payoff, self.T, self.grids)
        vg.meta["config_sha256"] = self.cfg.sha256
        return vg


# ---------------------------------------------------------------------------
# subcommands


def cmd_kernel_info(ctx: Context) -> dict:
    k = ctx.kernel
    t = np.geomspace(1e-4, 10.0, 200)
    ik, ratio = primitive_and_ratio(k, t)
    kv = np.asarray(k(t))
    write_csv(ctx.path("kernel_samples.csv"), ["t", "K", "I_K", "ratio"], np.column_stack([t, kv, ik, ratio]))
    es = k.eta_star
    info = {"schema_version": SCHEMA_VERSION, "kernel": k.to_dict(), "k_infinity": k.k_infinity,
            "eta_star": None if es is None or math.isinf(es) else es,
            "eta_star_text": "unknown" if es is None else ("-inf" if math.isinf(es) else repr(es)),
            "ratio_min": float(ratio.min()), "ratio_max": float(ratio.max()),
            "cm": cm_diagnostic(t, kv).__dict__}
    if "resolvent" in ctx.cfg.data:
        rc = ctx.cfg["resolvent"]
        grid = np.geomspace(float(rc.get("t_min", 0.1)), float(rc.get("t_max", 2.0)), int(rc.get("n_points", 50)))
        res = resolvent_kernel(k, float(rc["c"]), grid)
        cols, rows = ["t", "R"], [grid, res.values]
        if "exact" in res.meta:
            cols.append("R_exact")
            rows.append(res.meta["exact"])
        write_csv(ctx.path("resolvent.csv"), cols, np.column_stack(rows))
        info["resolvent"] = {"c": float(rc["c"]), "cm": cm_diagnostic(grid, res.values).__dict__}
        if "exact" in res.meta:
            info["resolvent"]["max_rel_error_vs_exact"] = float(np.max(np.abs(res.values / res.meta["exact"] - 1)))
    write_json(ctx.path("kernel.json"), info)
    return info


def cmd_lift(ctx: Context) -> dict:
    nodes = ctx.model.nodes
    nodes.write_csv(ctx.path("nodes.csv"))
    info = {"schema_version": SCHEMA_VERSION, **nodes.to_dict(), "eta": ctx.model.eta, "eta_prime": ctx.model.eta_prime}
    write_json(ctx.path("nodes.json"), info)
    return {"n_nodes": nodes.size, "error": nodes.error, "flagged": nodes.flagged}


def cmd_smoothing(ctx: Context) -> dict:
    s = ctx.cfg["smoothing"]
    t = np.geomspace(float(s["t_min"]), float(s["t_max"]), int(s["n_points"]))
    prof = smoothing_profile(ctx.model, t)
    prof.write_csv(ctx.path("smoothing.csv"))
    info = {"schema_version": SCHEMA_VERSION, "kappa0": prof.kappa0, "gamma_exponent": prof.gamma_exponent,
            "fitted_exponent": prof.fitted_exponent(),
            "ratio_bound": float(np.max(prof.ansatz_energy * np.sqrt(t)))}
    write_json(ctx.path("smoothing.json"), info)
    return info


def cmd_min_energy(ctx: Context) -> dict:
    s = ctx.cfg["smoothing"]
    t, k = float(s["t"]), float(s["k"])
    vc = min_energy_control(ctx.model, t, k, int(s["n_steps"]))
    write_csv(ctx.path("min_energy.csv"), ["s", "v", "weight"], np.column_stack([vc.times, vc.values, vc.weights]))
    lam = lambda_op(ctx.model, t)
    info = {"schema_version": SCHEMA_VERSION, "t": t, "k": k, "energy": vc.energy, "lambda_k": abs(lam * k),
            "relative_gap": abs(vc.energy - abs(lam * k)) / abs(lam * k) if k else 0.0,
            "ansatz_energy": constant_ansatz_energy(ctx.model, t, k),
            "constraint_residual": vc.constraint_residual}
    write_json(ctx.path("min_energy.json"), info)
    return info


def cmd_hjb_solve(ctx: Context) -> dict:
    vg = ctx._solve()
    vg.write_csv(ctx.path("value_grid.csv"))
    vg.save(ctx.path("value_grid.npz"))
    info = {"schema_version": SCHEMA_VERSION, "T": ctx.T, "n_tau": len(vg.tau_grid), "n_y": len(vg.y_grid),
            "y_grid": [float(vg.y_grid[0]), float(vg.y_grid[-1])], "core": list(vg.core),
            "picard_gap": vg.meta["picard_gap"], "escaped_weight": vg.meta["escaped_weight"],
            "gradient": gradient_blowup(vg)}
    write_json(ctx.path("hjb.json"), info)
    return info


def _export_paths(ctx: Context, batch, n_export: int):
    n = min(n_export, batch.n_paths)
    sub = type(batch)(batch.times, batch.observed[:n], batch.controls[:n])
    sub.write_csv(ctx.path("paths.csv"))


def cmd_simulate(ctx: Context) -> dict:
    s = ctx.cfg["simulation"]
    sim = ctx.sim
    ctrl = s["control"]
    if ctrl["kind"] == "closed_loop":
        batch = simulate_closed_loop(ctx.model, ctx.value_grid(), ctx.ham, ctx.xi_z, sim)
    else:
        try:
            u = control_from_dict(ctrl)
        except (KeyError, ValueError) as exc:
            raise ctx.cfg.error(f"invalid control: {exc}", "simulation", "control") from exc
        batch = simulate_lifted(ctx.model, ctx.xi_z, u, sim)
    _export_paths(ctx, batch, int(s["export_paths"]))
    est = estimate_cost(batch, ctx.ham, ctx.payoff)
    info = {"schema_version": SCHEMA_VERSION, "control": ctrl, "seed": sim.seed, "n_paths": sim.n_paths,
            "dt": sim.dt, "cost_mean": est.mean, "cost_std_err": est.std_err, "cost_ci95": list(est.ci95),
            "excluded_paths": batch.n_excluded}
    write_json(ctx.path("simulate.json"), info)
    return info


def cmd_verify(ctx: Context) -> dict:
    vg = ctx.value_grid()
    rep = verify_optimality(ctx.model, vg, ctx.ham, ctx.payoff, ctx.xi_z, ctx.sim)
    rep["schema_version"] = SCHEMA_VERSION
    rows = [[r["control"], r["J"], r["std_err"], r["J_minus_v"], r["hamiltonian_gap"], r["identity_residual"]]
            for r in rep["alternatives"]]
    write_csv(ctx.path("verify_alternatives.csv"),
              ["control", "J", "std_err", "J_minus_v", "hamiltonian_gap", "identity_residual"], rows)
    write_json(ctx.path("verify.json"), rep)
    if not rep["passed"]:
        raise ChecksFailed(f"optimality checks failed: {rep['checks']}")
    return rep


def cmd_report(ctx: Context) -> dict:
    import json

    found = {}
    for name in ("kernel.json", "nodes.json", "smoothing.json", "min_energy.json", "hjb.json",
                 "simulate.json", "verify.json"):
        p = ctx.out / name
        if p.exists():
            found[name] = json.loads(p.read_text())
    if not found:
        raise UsageError(f"no artifacts found in {ctx.out}; run a subcommand first")
    report: dict = {"schema_version": SCHEMA_VERSION, "artifacts": sorted(found)}
    exps = []
    if "smoothing.json" in found:
        sm = found["smoothing.json"]
        report["smoothing"] = {"lambda_exponent": sm["fitted_exponent"], "kappa0": sm["kappa0"]}
        exps.append(["lambda", sm["fitted_exponent"]])
    if "hjb.json" in found:
        gr = found["hjb.json"]["gradient"]
        report["hjb"] = {"gradient_exponent": gr["exponent"], "gradient_B_exponent": gr["exponent_B"],
                         "picard_gap": found["hjb.json"]["picard_gap"]}
        exps += [["dy_f", gr["exponent"]], ["grad_B", gr["exponent_B"]]]
    if "min_energy.json" in found:
        report["min_energy"] = {k: found["min_energy.json"][k] for k in ("energy", "lambda_k", "relative_gap")}
    if "verify.json" in found:
        v = found["verify.json"]
        report["verify"] = {"v": v["v"], "checks": v["checks"], "passed": v["passed"],
                            "alternatives": [{"control": r["control"], "J_minus_v": r["J_minus_v"],
                                              "std_err": r["std_err"], "margin_a": r["margin_a"],
                                              "margin_c": r["margin_c"]} for r in v["alternatives"]]}
        write_csv(ctx.path("report_margins.csv"), ["control", "J_minus_v", "std_err", "margin_a", "margin_c"],
                  [[r["control"], r["J_minus_v"], r["std_err"], r["margin_a"], r["margin_c"]]
                   for r in v["alternatives"]])
    if "simulate.json" in found:
        s = found["simulate.json"]
        report["simulate"] = {k: s[k] for k in ("cost_mean", "cost_std_err", "cost_ci95", "excluded_paths")}
    if "smoothing.csv" in {p.name for p in ctx.out.iterdir()}:
        header, data = read_csv(ctx.out / "smoothing.csv")
        write_csv(ctx.path("report_smoothing.csv"), ["t", "Lambda_sqrt_t"],
                  data[:, [header.index("t"), header.index("Lambda_sqrt_t")]])
    if exps:
        write_csv(ctx.path("report_exponents.csv"), ["quantity", "exponent"], exps)
    write_json(ctx.path("report.json"), report)
    return report


COMMANDS = {"kernel-info": cmd_kernel_info, "lift": cmd_lift, "smoothing": cmd_smoothing,
            "min-energy": cmd_min_energy, "hjb-solve": cmd_hjb_solve, "simulate": cmd_simulate,
            "verify": cmd_verify, "report": cmd_report}


# ---------------------------------------------------------------------------
# entry point


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(ctx: Context, sub: str, status: str):
    files = {name: _sha(ctx.out / name) for name in sorted(set(ctx.files)) if (ctx.out / name).exists()}
    write_json(ctx.out / "manifest.json", {
        "schema_version": SCHEMA_VERSION, "subcommand": sub, "status": status,
        "config_sha256": ctx.cfg.sha256, "seed": ctx.seed,
        "versions": {"volterra_control": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "artifacts": files})
    write_json(ctx.out / "manifest_time.json", {"subcommand": sub, "finished_unix": time.time(),
                                                "finished_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="volterra-control", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--out", help="output directory (overrides config 'output')")
    p.add_argument("--seed", type=int, help="random seed (overrides config)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for path simulation")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out if args.out else cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg, out, args.seed, args.threads)
    try:
        COMMANDS[args.subcommand](ctx)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ChecksFailed as exc:
        _write_manifest(ctx, args.subcommand, "checks_failed")
        print(f"verify: {exc}", file=sys.stderr)
        return 1
    except NUMERIC_ERRORS as exc:
        write_json(out / "diagnostic.json", {"subcommand": args.subcommand, "error": type(exc).__name__,
                                             "message": str(exc), "traceback": traceback.format_exc()})
        print(f"numeric failure ({type(exc).__name__}): {exc}; see {out / 'diagnostic.json'}", file=sys.stderr)
        return 3
    _write_manifest(ctx, args.subcommand, "ok")
    print(f"{args.subcommand}: wrote {', '.join(sorted(set(ctx.files)))} to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
