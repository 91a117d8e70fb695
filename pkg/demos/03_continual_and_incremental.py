"""
Continual and incremental learning
==================================

Continual: after supervised training, the 'x' and '/' glyphs slowly morph into
each other. The network keeps learning from its own predictions (no labels)
while a copy runs with learning switched off.

Incremental: the task-1 network is frozen and grows new centroids for two new
sentences, "vpv yty" and "vov yty".
"""

import numpy as np

from sup3r import config
from sup3r import experiments as ex

cfg = config.load()
train_set, test_set = ex.task_data(cfg, 1, seed=0)
net, _ = ex.train_sup3r(cfg, train_set, seed=0)

# %%
res = ex.continual_run(cfg, net, seed=0)
for mode, rows in res.items():
    steps = np.array([r["shift_step"] for r in rows])
    acc = np.array([r["event_accuracy"] for r in rows])
    per_step = {int(s): round(float(acc[steps == s].mean()), 3) for s in np.unique(steps)}
    print(f"{mode:8s} accuracy by shift step {per_step}, last 250: {acc[-250:].mean():.3f}")

# %%
inc = ex.incremental_run(cfg, net.copy(), seed=0, task1_test=test_set)
print(f"task 1 before: {inc['task1']:.3f}  after: {inc['task1_after_task2']:.3f}  task 2: {inc['task2']:.3f}")
print("old parameters untouched:", inc["frozen_unchanged"])
print("clusters per layer now:", [l.n_clusters for l in inc["net"].layers])
