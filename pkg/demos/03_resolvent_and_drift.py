"""Linear drift through the resolvent kernel.

A drift c y in the Volterra equation is absorbed into the resolvent
R = K + c K*R. For c < 0 the resolvent stays completely monotone.
"""
import numpy as np

from volterra_control.kernels import (
    FiniteSpectrumKernel,
    RiemannLiouvilleKernel,
    cm_diagnostic,
    resolvent_kernel,
)

# %% single exponential: R = exp(-(1 - c) t)
k = FiniteSpectrumKernel(weights=(1.0,), rates=(1.0,))
grid = np.linspace(0.1, 2.0, 5)
res = resolvent_kernel(k, -1.0, grid)
print("exp(-t), c=-1:", np.array2string(res.values, precision=8))
print("exp(-2t)     :", np.array2string(np.exp(-2 * grid), precision=8))

# %% two atoms against the matrix exponential
k2 = FiniteSpectrumKernel(weights=(1.0, 0.5), rates=(1.0, 3.0))
for c in (-0.5, 0.4):
    r = resolvent_kernel(k2, c, grid)
    print(f"two atoms, c={c:+.1f}: max rel err vs expm = {np.max(np.abs(r.values / r.meta['exact'] - 1)):.2e}")

# %% RL kernel: complete monotonicity for c < 0, not for c > 0
rl = RiemannLiouvilleKernel(0.75)
g = np.geomspace(0.01, 2.0, 60)
for c in (-2.0, -0.5, 0.5):
    r = resolvent_kernel(rl, c, g)
    rep = cm_diagnostic(g, r.values, order=3)
    print(f"RL(0.75), c={c:+.1f}: R(1) = {r(1.0):.6f}, monotone={rep.monotone}, alternating={rep.alternating}")
