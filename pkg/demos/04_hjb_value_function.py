"""Reduced HJB equation on (tau, y).

Solves for a smooth and a discontinuous payoff, compares the forced-control
case with its closed form, and measures how d_y f blows up as tau -> 0.
"""
import math
import time

import numpy as np

from volterra_control.hjb import Hamiltonian, HJBGrids, gradient_blowup, mild_residual, solve_hjb
from volterra_control.kernels import FiniteSpectrumKernel, RiemannLiouvilleKernel
from volterra_control.lift import LiftedModel, discretize_measure
from volterra_control.payoffs import SinePayoff, StepPayoff

rl = RiemannLiouvilleKernel(0.75)
model = LiftedModel(rl, discretize_measure(rl, 40, (1e-5, 1.0)))
grids = HJBGrids(n_tau=100, n_y=121, y_span=(-2.0, 2.0))

# %% forced control u = 0.5 has a closed form
t0 = time.perf_counter()
vg = solve_hjb(model, Hamiltonian(0.5, 0.5), SinePayoff(), 1.0, grids)
y = np.linspace(-2, 2, 9)
ref = 0.125 + np.sin(y + 0.5 * rl.primitive(1.0)) * math.exp(-rl.square_primitive(1.0) / 2)
print(f"forced control: solve {time.perf_counter() - t0:.1f}s, sup error at tau=T "
      f"{np.max(np.abs(vg.value(1.0, y) - ref)):.2e}")

# %% genuine control set U = [-1, 1]
ham = Hamiltonian(-1.0, 1.0)
vg = solve_hjb(model, ham, SinePayoff(), 1.0, grids)
print("f(T, y)      :", np.array2string(vg.value(1.0, y), precision=4))
res = mild_residual(vg, ham, 100, y[::2], n_s=100)
print("mild residual:", " ".join(f"{r:.1e}" for r in res))

# %% gradient singularity: step payoff versus smooth payoff
exp1 = FiniteSpectrumKernel(weights=(1.0,), rates=(1.0,))
m_exp = LiftedModel(exp1, discretize_measure(exp1, 1, (1e-3, 1.0)))
fine = HJBGrids(n_tau=200, n_y=201, y_span=(-1.0, 1.0))
for name, m in (("exp(-t)", m_exp), ("RL(0.75)", model)):
    step = gradient_blowup(solve_hjb(m, ham, StepPayoff(), 1.0, fine))
    smooth = gradient_blowup(solve_hjb(m, ham, SinePayoff(), 1.0, fine))
    print(f"{name:>9}: step d_y f slope {step['exponent']:+.3f}, B-gradient slope {step['exponent_B']:+.3f}; "
          f"sine d_y f slope {smooth['exponent']:+.3f}")
