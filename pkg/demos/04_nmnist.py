"""
N-MNIST ingestion and a capped run
==================================

N-MNIST stores each event in 5 bytes: x, y, then a polarity bit and a 23-bit
timestamp. This demo decodes a hand-made record, then trains on a small
saccade dataset. Point ``SUP3R_NMNIST_ROOT`` at a real N-MNIST tree
(``Train/0..9``, ``Test/0..9``) to use it; otherwise recordings are simulated
from the scikit-learn 8x8 digits, which takes a couple of minutes end to end.
"""

import os
import tempfile

from sup3r import config
from sup3r import experiments as ex
from sup3r.learning import Mode
from sup3r.nmnist import EXTENT, load_split, parse_bin, serialize_bin, write_standin
from sup3r.synth import Recording

# %%
# x=33, y=33, polarity 1, t=1 us
ev = parse_bin(bytes.fromhex("2121800001"))
print("decoded (t, y, x, p):", ev.tolist(), "re-encoded:", serialize_bin(ev).hex())

# %%
root = os.environ.get("SUP3R_NMNIST_ROOT")
if not root:
    from sklearn.datasets import load_digits

    root = tempfile.mkdtemp(prefix="standin_")
    digits = load_digits()
    n_train, n_test = write_standin(root, digits.images, digits.target, train_per_class=100)
    print(f"simulated {n_train} training and {n_test} test recordings in {root}")

cfg = config.load().nmnist
train_set = [Recording(e, l) for e, l in load_split(root, "Train", cfg.train_limit)]
test_set = [Recording(e, l) for e, l in load_split(root, "Test", cfg.test_limit)]
print("events in the first training recording:", len(train_set[0].events))

# %%
run = config.load()
net = ex.build_network(run, train_set, seed=0, extent=EXTENT, n_polarities=2, layers=cfg.layers)
ex.train(net, train_set, Mode.SUPERVISED, cfg.rates.learning(), cfg.epochs)
_, summary = ex.evaluate(net, test_set)
print(f"test accuracy {summary.accuracy:.3f} (chance 0.1), processed {summary.processed_fraction:.3f}")
