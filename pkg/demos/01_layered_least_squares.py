"""
Stacked least-squares autoencoders, with and without recomputation
==================================================================

Train the plain stacked model on synthetic blobs, then pull the output
error back through every layer and recompute the encoders.
"""
import numpy as np

from rmlmp import Activation, TrainConfig, make_blobs, split
from rmlmp.evaluation import top1_accuracy
from rmlmp.network import pullback, predict, recompute, stage1_train

ds = make_blobs(600, 4, 12, separation=2.0, seed=0)
train, test = split(ds, 0.25, seed=0)
x, t = train.features, train.targets()

cfg = TrainConfig(hidden=(120, 120), activation=Activation("sine"), learning_rate=0.5, seed=0)

###############################################################################
# Stage 1: every layer is an autoencoder solved in closed form, then a ridge
# output layer on top.
base = stage1_train(x, t, cfg)
print("widths", base.widths)
print("stage-1 train mse %.4f" % np.mean((predict(base, x) - t) ** 2))

###############################################################################
# Pullback: the residual is mapped to per-layer targets through regularized
# pseudoinverses.  Each offset has the width of its layer.
fb = pullback(base, x, t)
print("offsets", [p.shape for p in fb.offsets])

###############################################################################
# Recompute the encoder weights and refit the output layer.
model = recompute(base, x, t, fb)
for name, m in (("stage 1", base), ("recomputed", model)):
    mse = np.mean((predict(m, x) - t) ** 2)
    print("%-10s train mse %.4f  test top1 %.3f" % (name, mse, top1_accuracy(predict(m, test.features), test.labels)))
