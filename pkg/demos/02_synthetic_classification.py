"""
Sentence classification on Poisson glyphs
=========================================

Two sentences, "v/v yty" and "vxv yty", differ only in their second glyph.
A three-layer network learns to tell them apart with the Sup3r rule; the
same network trained with plain online k-means serves as the baseline.
Run time is a few seconds per seed.
"""

import numpy as np

from sup3r import config
from sup3r import experiments as ex
from sup3r.synth import GLYPHS, TASKS, render_sentence

cfg = config.load()

# %%
# The data: a 5x30 rate map per sentence, lit pixels at 1 kHz.
for sentence in TASKS[1]:
    rmap = render_sentence(sentence)
    print(sentence)
    print("\n".join("".join("#" if r > 100 else "." for r in row) for row in rmap))

print("pixels that differ between 'x' and '/':", int((GLYPHS["x"] ^ GLYPHS["/"]).sum()))

# %%
# One training run: 1000 recordings in, 1000 fresh recordings out.
train_set, test_set = ex.task_data(cfg, 1, seed=0)
net, log = ex.train_sup3r(cfg, train_set, seed=0)
_, sup3r = ex.evaluate(net, test_set)
km, _ = ex.train_kmeans(cfg, train_set, seed=0)
_, kmeans = ex.evaluate(km, test_set)

print(f"sup3r   accuracy {sup3r.accuracy:.3f}  processed {sup3r.processed_fraction:.3f}")
print(f"k-means accuracy {kmeans.accuracy:.3f}  processed {kmeans.processed_fraction:.3f}")

# %%
# Training accuracy in blocks of 100 recordings shows how learning unfolds.
acc = np.array([row["event_accuracy"] for row in log])
print("training accuracy per 100 recordings:", np.round(acc.reshape(-1, 100).mean(axis=1), 3))

# %%
# Thresholds are what make Sup3r selective: events far from every centroid
# are dropped.
for k, layer in enumerate(net.layers):
    print(f"layer {k + 1} thresholds", np.round(layer.thresholds, 3))
