"""
Spatio-temporal stacks and a small 2-D CNN
==========================================

Seven frames spread over a 36-frame window are cropped to a square around
the car and stacked as channels. A narrow copy of the stack CNN is trained on
four cars and tested on a fifth.
"""

import tempfile

import numpy as np

from idlecar import thermosim as ts
from idlecar.classify import TrainOptions, stack_offsets, train_classifier
from idlecar.evalharness import pr_curve
from idlecar.learncore import OptimizerConfig
from idlecar.study import annotated_samples, load_dataset

print("frame offsets inside a window:", stack_offsets(7))

root = tempfile.mkdtemp()
ts.build_dataset(root, n_cars=6, seed=2)
data = load_dataset(root)
stacks = annotated_samples(data, "spatiotemporal", size=24, n=7, stride=4)
print("stacks:", stacks.x.shape)

train = stacks.cars(["car00", "car01", "car02", "car03"])
v2 = stacks.cars(["car04"])
test = stacks.cars(["car05"])
opts = TrainOptions(seeds=(0,), width=0.5, optimizer=OptimizerConfig(kind="adam", lr=1e-3, max_epochs=25, batch_size=32))
clf = train_classifier("cnn2d", train, v2, opts)
for h in clf.history[::5]:
    print(f"epoch {h['epoch']:3d}  loss {h['train_loss']:.3f}  train acc {h['train_acc']:.2f}  V2 acc {h['v2_acc']:.2f}")

p = clf.predict(test.x)
print("held-out car window AP %.3f, accuracy %.2f" % (pr_curve(p, test.y).ap, np.mean((p > 0.5) == test.y)))
