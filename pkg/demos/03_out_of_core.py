"""
Batched ridge solves
====================

Gram accumulation over row batches gives the same weights as the one-shot
solve, so features never need to be resident at once.
"""
import numpy as np

from rmlmp.solvers import GramState, RidgeConfig, ridge_solve

rng = np.random.default_rng(0)
psi = rng.standard_normal((5000, 40))
t = rng.standard_normal((5000, 3))
cfg = RidgeConfig(4.0)

state = GramState(40, 3)
for lo in range(0, 5000, 512):
    state.absorb(psi[lo:lo + 512], t[lo:lo + 512])

w_batched = state.finalize(cfg)
# same thing through the convenience argument
w_oneshot = ridge_solve(psi, t, cfg)
print("max |diff| %.2e" % np.max(np.abs(w_batched - w_oneshot)))
print("batch_size path %.2e" % np.max(np.abs(ridge_solve(psi, t, cfg, batch_size=512) - w_oneshot)))
