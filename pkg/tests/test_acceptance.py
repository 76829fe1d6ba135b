"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured numbers
(capture is bypassed so the line shows under plain ``pytest``).
"""
import math
import time

import numpy as np
import pytest
from scipy import integrate

from volterra_control.cli import SUBCOMMANDS, main
from volterra_control.control import (
    SimConfig,
    constant_control,
    simulate_lifted,
    simulate_svie_direct,
    verify_optimality,
)
from volterra_control.hjb import Hamiltonian, HJBGrids, gaussian_smooth, gradient_blowup, solve_hjb
from volterra_control.kernels import (
    FiniteSpectrumKernel,
    LogarithmicKernel,
    RiemannLiouvilleKernel,
    SampledKernel,
    ShiftedKernel,
    cm_diagnostic,
    primitive_and_ratio,
    resolvent_kernel,
    resolvent_matrix_exponential,
)
from volterra_control.lift import LiftedModel, discretize_measure, lift_initial_curve
from volterra_control.payoffs import LinearPayoff, QuadraticPayoff, SinePayoff, StepPayoff, TanhPayoff
from volterra_control.smoothing import constant_ansatz_energy, lambda_op, min_energy_control

pytestmark = pytest.mark.acceptance

RL75 = RiemannLiouvilleKernel(0.75)
EXP1 = FiniteSpectrumKernel(weights=(1.0,), rates=(1.0,))


@pytest.fixture()
def report(capsys):
    def emit(number: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, f"criterion {number}: {detail}"

    return emit


def _model(kernel, n=20, t_range=(1e-3, 10.0), **kw):
    return LiftedModel(kernel, discretize_measure(kernel, n, t_range), **kw)


def test_criterion_01_smoothing_law(report):
    t = np.geomspace(1e-3, 10.0, 200)
    b, g = 1.7, 0.6
    worst_rl = 0.0
    for alpha in (0.6, 0.75, 0.9):
        m = _model(RiemannLiouvilleKernel(alpha), b=b, g=g)
        target = abs(b / g) * math.sqrt(2 * alpha - 1)
        worst_rl = max(worst_rl, float(np.max(np.abs(lambda_op(m, t) * np.sqrt(t) - target))))
    slack = []
    for k in (LogarithmicKernel(), ShiftedKernel(RL75, 0.1), ShiftedKernel(LogarithmicKernel(), 0.05)):
        m = _model(k, b=b, g=g)
        scaled = np.abs(lambda_op(m, t)) * np.sqrt(t)
        bound = float(np.max(t * k(t) / k.primitive(t))) * abs(b / g)
        slack.append(bound + 1e-8 - float(np.max(scaled)) if np.all(np.isfinite(scaled)) else -np.inf)
    ok = worst_rl <= 1e-10 and min(slack) >= 0
    report(1, ok, f"RL max |Lambda sqrt(t) - |b/g|sqrt(2a-1)| = {worst_rl:.2e} (tol 1e-10); "
                  f"log/shifted bound slack min = {min(slack):.3e}")


def test_criterion_02_min_energy_isometry(report):
    kernels = [EXP1, RiemannLiouvilleKernel(0.6), RL75, RiemannLiouvilleKernel(0.9)]
    worst, dominated = 0.0, True
    for k in kernels:
        m = _model(k, b=1.3, g=0.8)
        for t in (0.01, 0.3, 1.0, 4.0):
            for kk in (-2.0, 0.5):
                vc = min_energy_control(m, t, kk, n_steps=2000)
                exact = abs(lambda_op(m, t) * kk)
                worst = max(worst, abs(vc.energy / exact - 1))
                dominated &= constant_ansatz_energy(m, t, kk) >= vc.energy
    report(2, worst <= 1e-3 and dominated,
           f"max relative |energy - |Lambda k|| = {worst:.2e} (tol 1e-3); ansatz dominates: {dominated}")


def test_criterion_03_growth_lemma(report):
    t = np.geomspace(1e-4, 10.0, 200)
    samp_t = np.geomspace(1e-3, 10.0, 50)
    kernels = [RiemannLiouvilleKernel(0.6), RL75, RiemannLiouvilleKernel(0.9, beta=0.5), LogarithmicKernel(),
               EXP1, FiniteSpectrumKernel(c0=0.5, weights=(2.0, 0.1), rates=(1.0, 3.0)),
               FiniteSpectrumKernel(c0=2.0), ShiftedKernel(RL75, 0.1), SampledKernel(samp_t, RL75(samp_t))]
    in_range = all(np.all((r >= 0) & (r <= 1)) for r in (primitive_and_ratio(k, t)[1] for k in kernels))
    rl_dev = max(float(np.max(np.abs(primitive_and_ratio(RiemannLiouvilleKernel(a), t)[1] - a)))
                 for a in (0.6, 0.75, 0.9))
    report(3, in_range and rl_dev <= 1e-15,
           f"0 <= tK/I_K <= 1 on all {len(kernels)} kernels: {in_range}; RL max |ratio - alpha| = {rl_dev:.1e}")


def test_criterion_04_resolvent(report):
    grid = np.linspace(0.1, 2.0, 40)
    worst = 0.0
    for k, c in [(FiniteSpectrumKernel(weights=(1.0, 0.5), rates=(1.0, 3.0)), -0.5),
                 (FiniteSpectrumKernel(weights=(1.0, 0.5), rates=(1.0, 3.0)), 0.4),
                 (FiniteSpectrumKernel(c0=0.3, weights=(2.0, 0.1), rates=(1.0, 3.0)), -1.0)]:
        res = resolvent_kernel(k, c, grid)
        exact = resolvent_matrix_exponential(k, c, grid)
        worst = max(worst, float(np.max(np.abs(res.values / exact - 1))))
    single = resolvent_kernel(EXP1, -1.0, grid)
    exp_err = float(np.max(np.abs(single.values / np.exp(-2 * grid) - 1)))
    cm_ok = True
    cm_grid = np.geomspace(0.01, 2.0, 60)
    for k in (EXP1, RL75, LogarithmicKernel()):
        for c in (-0.5, -2.0):
            rep = cm_diagnostic(cm_grid, resolvent_kernel(k, c, cm_grid).values, order=3)
            cm_ok &= rep.monotone and rep.alternating
    report(4, worst <= 1e-6 and exp_err <= 1e-6 and cm_ok,
           f"finite-spectrum max rel err = {worst:.2e}; e^(-2t) rel err = {exp_err:.2e} (tol 1e-6); "
           f"CM diagnostic for c<0: {cm_ok}")


def test_criterion_05_hjb_oracles(report):
    model = LiftedModel(RL75, discretize_measure(RL75, 40, (1e-5, 1.0)))
    grids = HJBGrids(n_tau=200, n_y=200, y_span=(-2.0, 2.0), quad_order=32)
    y = np.linspace(-2.0, 2.0, 81)
    u0 = 0.5
    t0 = time.perf_counter()
    vg = solve_hjb(model, Hamiltonian(u0, u0), SinePayoff(), 1.0, grids)
    runtime = time.perf_counter() - t0
    sing = 0.0
    for k in range(1, 201, 7):
        tau = vg.tau_grid[k]
        ref = tau * u0**2 / 2 + np.sin(y + u0 * RL75.primitive(tau)) * math.exp(-RL75.square_primitive(tau) / 2)
        sing = max(sing, float(np.max(np.abs(vg.value(tau, y) - ref))))
    a = 0.5
    ham = Hamiltonian(-1.0, 1.0)
    vl = solve_hjb(model, ham, LinearPayoff(a), 1.0, grids)
    core = (vl.y_grid >= -2.0) & (vl.y_grid <= 2.0)
    d_err = float(np.max(np.abs(vl.df_values[:, core] - a)))
    f_err = 0.0
    for k in range(1, 201, 7):
        tau = vl.tau_grid[k]
        run, _ = integrate.quad(lambda s: float(ham.h_min(RL75(s) * a)), 0.0, tau, limit=200)
        f_err = max(f_err, float(np.max(np.abs(vl.value(tau, y) - (a * y + run)))))
    ok = sing <= 2e-3 and d_err <= 1e-6 and f_err <= 1e-3 and runtime <= 30.0
    report(5, ok, f"singleton sup err = {sing:.2e} (tol 2e-3); linear d_y f err = {d_err:.1e} (tol 1e-6), "
                  f"f err = {f_err:.2e} (tol 1e-3); 200x200 solve {runtime:.1f}s (target 30s)")


def test_criterion_06_gradient_singularity(report):
    ham = Hamiltonian(-1.0, 1.0)
    grids = HJBGrids(n_tau=200, n_y=201, y_span=(-1.0, 1.0))
    m_exp = LiftedModel(EXP1, discretize_measure(EXP1, 1, (1e-3, 1.0)))
    step = gradient_blowup(solve_hjb(m_exp, ham, StepPayoff(), 1.0, grids))
    m_rl = LiftedModel(RL75, discretize_measure(RL75, 40, (1e-5, 1.0)))
    step_rl = gradient_blowup(solve_hjb(m_rl, ham, StepPayoff(), 1.0, grids))
    coarse = HJBGrids(n_tau=100, n_y=101, y_span=(-1.0, 1.0))
    lip = [gradient_blowup(solve_hjb(m, ham, phi, 1.0, coarse))
           for m in (m_exp, m_rl) for phi in (SinePayoff(), TanhPayoff())]
    lip_ok = all(abs(r["exponent"]) < 0.05 and r["sup_dy"] <= 1.0 + 1e-6 for r in lip)
    ok = -0.6 <= step["exponent"] <= -0.4 and -0.6 <= step_rl["exponent_B"] <= -0.4 and lip_ok
    report(6, ok, f"step exponent (exponential kernel, d_y f) = {step['exponent']:.4f}; "
                  f"step exponent (RL 0.75, B-gradient) = {step_rl['exponent_B']:.4f}; window [-0.6, -0.4]; "
                  f"Lipschitz payoffs bounded: {lip_ok} (max sup|d_y f| = {max(r['sup_dy'] for r in lip):.3f})")


def test_criterion_07_lift_fidelity(report):
    model = LiftedModel(EXP1, discretize_measure(EXP1, 1, (1e-3, 1.0)))
    x0 = np.zeros(model.nodes.size)
    dts = (4e-3, 2e-3, 1e-3)
    mean_gap, consts = [], []
    for dt in dts:
        cfg = SimConfig(dt=dt, n_paths=200, seed=3)
        bl = simulate_lifted(model, x0, constant_control(0.5), cfg)
        bd = simulate_svie_direct(EXP1, lambda t: 0.0, constant_control(0.5), {"b": 1.0, "g": 1.0}, cfg)
        per_path = np.max(np.abs(bl.observed - bd.observed), axis=1)
        mean_gap.append(float(per_path.mean()))
        consts.append(float(per_path.max() / dt))
    order = float(np.polyfit(np.log(dts), np.log(mean_gap), 1)[0])
    C = max(consts)
    cfg = SimConfig(dt=2e-3, n_paths=200, seed=3)
    bd = simulate_svie_direct(RL75, lambda t: 0.0, constant_control(0.5), {"b": 1.0, "g": 1.0}, cfg,
                              weights="panel")
    rl_gaps = []
    for n in (10, 20, 40):
        m = LiftedModel(RL75, discretize_measure(RL75, n, (2e-3, 1.0)))
        bl = simulate_lifted(m, np.zeros(m.nodes.size), constant_control(0.5), cfg)
        rl_gaps.append(float(np.mean(np.max(np.abs(bl.observed - bd.observed), axis=1))))
    monotone = rl_gaps[0] > rl_gaps[1] > rl_gaps[2]
    ok = 0.8 <= order <= 1.2 and monotone
    report(7, ok, f"finite-spectrum gap <= C dt with C = {C:.3f}, order = {order:.3f}; "
                  f"RL N=10/20/40 mean gaps = {rl_gaps[0]:.4f}/{rl_gaps[1]:.4f}/{rl_gaps[2]:.4f} "
                  f"(monotone: {monotone})")


def test_criterion_08_verification(report):
    t0 = time.perf_counter()
    model = LiftedModel(RL75, discretize_measure(RL75, 40, (1e-5, 1.0)))
    ham = Hamiltonian(-1.0, 1.0)
    phi = LinearPayoff(0.5)
    vg = solve_hjb(model, ham, phi, 1.0, HJBGrids(n_tau=100, n_y=101, y_span=(-2.0, 2.0)))
    cfg = SimConfig(dt=1 / 500, n_paths=10_000, seed=42, T=1.0, threads=4)
    out = verify_optimality(model, vg, ham, phi, lift_initial_curve(model.nodes, ("constant", 0.0)), cfg)
    runtime = time.perf_counter() - t0
    opt = out["optimal"]
    a_ok = opt["in_ci95"]
    b_ok = all(r["strict"] for r in out["alternatives"])
    c_ok = out["checks"]["c"] and all(
        abs(r["identity_residual"]) <= 2 * r["identity_std_err"] + 2e-3 for r in out["alternatives"])
    worst = min(r["J_minus_v"] / r["std_err"] for r in out["alternatives"])
    ok = a_ok and b_ok and c_ok and out["passed"] and runtime <= 120
    report(8, ok, f"v = {out['v']:.5f}, J(u*) = {opt['J']:.5f} +- {opt['std_err']:.5f} (in 95% CI: {a_ok}); "
                  f"min (J - v)/se over alternatives = {worst:.1f} (> 2: {b_ok}); identity: {c_ok}; "
                  f"{runtime:.0f}s (target 120s)")


def test_criterion_09_bel(report):
    model = LiftedModel(RL75, discretize_measure(RL75, 40, (1e-5, 1.0)), b=0.8)
    rng = np.random.default_rng(0)
    x = 0.3 * rng.standard_normal(model.nodes.size)
    h = 1e-4
    worst = 0.0
    for phi in (SinePayoff(1.0, 1.5, 0.2), TanhPayoff(1.0, 1.0), QuadraticPayoff(0.5)):
        for t in (0.1, 0.5, 1.0):
            row = model.observation_row(t)
            var = model.g**2 * RL75.square_primitive(t)

            def lifted_value(state):
                return gaussian_smooth(phi, var, float(row @ state), quad_order=64)[0]

            _, bel = gaussian_smooth(phi, var, float(row @ x), quad_order=64)
            bel_b = bel * float(row @ model.B)
            fd = (lifted_value(x + h * model.B) - lifted_value(x - h * model.B)) / (2 * h)
            worst = max(worst, abs(bel_b - fd))
    report(9, worst <= 1e-6, f"max |BEL - central difference| in direction B = {worst:.2e} (tol 1e-6)")


CLI_CONFIG = """\
kernel:
  family: riemann_liouville
  params: {alpha: 0.75}
coefficients: {c: 0.0, b: 1.0, g: 1.0}
horizon: 1.0
payoff: {kind: linear, slope: 0.5}
lift: {n_nodes: 20}
smoothing: {n_points: 30, n_steps: 500}
resolvent: {c: -1.0, n_points: 40}
hjb: {n_tau: 40, n_y: 61}
simulation: {dt: 0.01, n_paths: 600, seed: 11, export_paths: 5}
"""


def test_criterion_10_cli_determinism(report, tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(CLI_CONFIG)
    mismatched = []
    n_csv = 0
    for threads in ("1", "4"):
        for rep in ("a", "b"):
            out = tmp_path / f"t{threads}{rep}"
            for sub in SUBCOMMANDS:
                assert main([sub, "--config", str(cfg), "--out", str(out), "--threads", threads]) in (0, 1)
    ref = tmp_path / "t1a"
    for other in ("t1b", "t4a", "t4b"):
        for f in sorted(ref.glob("*.csv")):
            n_csv += 1
            if f.read_bytes() != (tmp_path / other / f.name).read_bytes():
                mismatched.append(f"{other}/{f.name}")
    report(10, not mismatched and n_csv > 0,
           f"{n_csv} CSV comparisons across repeats and 1 vs 4 threads; mismatches: {mismatched or 'none'}")
