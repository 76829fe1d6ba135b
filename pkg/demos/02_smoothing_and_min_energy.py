"""Smoothing in the control direction and the minimum-energy virtual control.

For Riemann-Liouville kernels Lambda(t) sqrt(t) is constant; for other
kernels it stays below the growth ratio bound. The least-norm virtual
control reproduces |Lambda(t) k| and is cheaper than the constant ansatz.
"""
import numpy as np

from volterra_control.kernels import FiniteSpectrumKernel, LogarithmicKernel, RiemannLiouvilleKernel
from volterra_control.lift import LiftedModel, discretize_measure
from volterra_control.smoothing import constant_ansatz_energy, lambda_op, min_energy_control, smoothing_profile


def model(kernel, **kw):
    return LiftedModel(kernel, discretize_measure(kernel, 20, (1e-3, 10.0)), **kw)


t = np.geomspace(1e-3, 10, 7)

# %% Lambda(t) sqrt(t)
for alpha in (0.6, 0.75, 0.9):
    prof = smoothing_profile(model(RiemannLiouvilleKernel(alpha)), t)
    print(f"RL({alpha}): Lambda sqrt(t) = {np.array2string(prof.scaled_lambda, precision=6)}"
          f"  sqrt(2a-1) = {np.sqrt(2 * alpha - 1):.6f}")
log = LogarithmicKernel()
prof = smoothing_profile(model(log), t)
print("log kernel: Lambda sqrt(t) =", np.array2string(prof.scaled_lambda, precision=4),
      f" fitted slope {prof.fitted_exponent():.3f}")

# %% minimum energy against the isometry and the constant ansatz
print("\nkernel            t      |Lambda k|   min-energy   ansatz")
for name, k in [("exp(-t)", FiniteSpectrumKernel(weights=(1.0,), rates=(1.0,))),
                ("RL(0.75)", RiemannLiouvilleKernel(0.75)), ("log", log)]:
    m = model(k)
    for s in (0.01, 1.0):
        vc = min_energy_control(m, s, 1.0)
        print(f"{name:<14} {s:6.2f}  {abs(lambda_op(m, s)):11.6f}  {vc.energy:11.6f}  "
              f"{constant_ansatz_energy(m, s, 1.0):8.4f}")

# %% the control itself concentrates near the end of the window
vc = min_energy_control(model(RiemannLiouvilleKernel(0.75)), 1.0, 1.0, n_steps=200)
idx = np.searchsorted(vc.times, [0.1, 0.5, 0.9, 0.99])
print("\nRL(0.75) virtual control at s = 0.1, 0.5, 0.9, 0.99:", np.array2string(vc.values[idx], precision=4))
