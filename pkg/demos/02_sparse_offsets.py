"""
Sparse weight offsets
=====================

The sparse variant replaces the ridge offset solve with iterative
half-thresholding.  Larger C means more exact zeros in the offsets.
"""
import numpy as np

from rmlmp import Activation, SparseConfig, TrainConfig, make_blobs
from rmlmp.network import pullback, recompute, stage1_train
from rmlmp.solvers import half_prox, half_thresholds

# the scalar prox: zero at or below tau; the actual jump sits at 1.5*(C*mu)**(2/3),
# so 1.2 is still mapped to zero here
cfg = SparseConfig(c=1.0, mu=1.0)
th = half_thresholds(cfg)
print("tau %.6f psi %.6f" % (th.tau, th.psi))
for z in (0.5, 1.2, 2.0, -3.0):
    print("prox(%5.2f) = %.4f" % (z, half_prox(z, cfg)))

ds = make_blobs(300, 3, 10, 2.0, seed=1)
x, t = ds.features, ds.targets()
base_cfg = TrainConfig(hidden=(80, 80), activation=Activation("sine"), seed=1)
fb = pullback(stage1_train(x, t, base_cfg), x, t)

for c in (1e-7, 1e-6, 1e-5, 1e-4):
    m = stage1_train(x, t, base_cfg.replace(sparse=SparseConfig(c=c)))
    _, etas = recompute(m, x, t, fb, return_offsets=True)
    zeros = np.mean(np.concatenate([e.ravel() for e in etas]) == 0)
    print("C=%-6g zero fraction %.3f" % (c, zeros))
