"""Training, evaluation and the benchmark experiments built on top of them."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import RunConfig
from .learning import LearningRates, Mode, train_recording
from .network import (
    Network,
    collect_surfaces,
    init_centroids,
    init_thresholds,
    initialize,
    predict_recording,
)
from .synth import Recording, SynthConfig, gen_shift_sequence, gen_task, read_dataset

log = logging.getLogger(__name__)

LOG_COLUMNS = ["recording_index", "label", "predicted", "event_accuracy", "processed_fraction", "mean_S"]

MODES = {"supervised": Mode.SUPERVISED, "self": Mode.SELF, "ablated": Mode.ABLATED}


@dataclass
class Summary:
    accuracy: float
    processed_fraction: float
    n_recordings: int
    n_silent: int  # recordings without any last-layer output

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def synth_config(cfg: RunConfig) -> SynthConfig:
    d = cfg.data
    return SynthConfig(hi=d.hi, lo=d.lo, duration=d.duration, rows=d.rows)


def task_data(cfg: RunConfig, task: int, seed: int) -> tuple[list[Recording], list[Recording]]:
    """Train/test recordings for a task: from manifests when configured, else generated."""
    if task == 1 and cfg.data.train_manifest and cfg.data.test_manifest:
        return read_dataset(cfg.data.train_manifest), read_dataset(cfg.data.test_manifest)
    sc = synth_config(cfg)
    train = gen_task(task, cfg.data.n_train_per_class, seed, sc)
    test = gen_task(task, cfg.data.n_test_per_class, seed + 10_000, sc)
    return train, test


def build_network(cfg: RunConfig, recordings: Sequence[Recording], seed: int, extent=None, n_polarities=1, layers=None) -> Network:
    extent = extent or synth_config(cfg).extent
    net = Network.empty(layers or cfg.layers, extent, n_polarities, feedback=cfg.feedback)
    batch = [r.events for r in recordings[: cfg.init.batch]]
    return initialize(net, batch, cfg.init.zeta, seed)


def _row(i: int, label, p) -> dict:
    return {
        "recording_index": i,
        "label": label,
        "predicted": p.predicted if p.n_out else -1,
        "event_accuracy": p.event_accuracy,
        "processed_fraction": p.processed_fraction,
        "mean_S": p.mean_S,
    }


def train(
    net: Network,
    recordings: Sequence[Recording],
    mode: Mode,
    rates: LearningRates,
    epochs: int = 1,
    seed: int = 0,
    shuffle: bool = True,
    kmeans_eta: float | None = None,
) -> list[dict]:
    """Train for some epochs; returns one log row per processed recording."""
    rng = np.random.default_rng(seed)
    rows = []
    for ep in range(epochs):
        order = rng.permutation(len(recordings)) if shuffle else np.arange(len(recordings))
        for i in order:
            r = recordings[i]
            p = train_recording(net, r.events, r.label, mode, rates, kmeans_eta=kmeans_eta)
            rows.append(_row(len(rows), r.label, p))
        log.info("epoch %d: train accuracy %.4f", ep, np.mean([r["event_accuracy"] for r in rows[-len(order):]]))
    return rows


def evaluate(net: Network, recordings: Sequence[Recording]) -> tuple[list[dict], Summary]:
    if len(recordings) == 0:
        raise ValueError("nothing to evaluate")
    rows = [_row(i, r.label, predict_recording(net, r.events, r.label)) for i, r in enumerate(recordings)]
    return rows, summarize_rows(rows)


def summarize_rows(rows: Sequence[dict]) -> Summary:
    return Summary(
        accuracy=float(np.mean([r["event_accuracy"] for r in rows])),
        processed_fraction=float(np.mean([r["processed_fraction"] for r in rows])),
        n_recordings=len(rows),
        n_silent=sum(r["predicted"] < 0 for r in rows),
    )


def fit_class_map(net: Network, recordings: Sequence[Recording]) -> np.ndarray:
    """Label each last-layer centroid with the class it most often fires for.

    Used for the k-means baseline, whose centroid order carries no meaning.
    """
    net.class_map = None
    votes = np.zeros((net.n_classes, net.n_classes), dtype=np.int64)
    for r in recordings:
        p = predict_recording(net, r.events, r.label)
        votes[:, r.label] += p.counts
    net.class_map = np.argmax(votes, axis=1)
    return net.class_map


def train_sup3r(cfg: RunConfig, train_set, seed: int, mode: Mode | None = None) -> tuple[Network, list[dict]]:
    net = build_network(cfg, train_set, seed)
    rows = train(net, train_set, mode or MODES[cfg.mode], cfg.rates.learning(), cfg.train.epochs, seed, cfg.train.shuffle)
    return net, rows


def train_kmeans(cfg: RunConfig, train_set, seed: int) -> tuple[Network, list[dict]]:
    """Same architecture and initialisation, no gating, online k-means updates."""
    net = build_network(cfg, train_set, seed)
    net.disable_thresholds()
    rows = train(net, train_set, Mode.SUPERVISED, cfg.rates.learning(), cfg.train.epochs, seed, cfg.train.shuffle, kmeans_eta=cfg.rates.kmeans_eta)
    fit_class_map(net, train_set)
    return net, rows


def classification_run(cfg: RunConfig, seed: int, baseline: bool = True) -> dict:
    """Train and test Sup3r (and optionally the k-means baseline) on task 1."""
    train_set, test_set = task_data(cfg, 1, seed)
    net, _ = train_sup3r(cfg, train_set, seed)
    _, s = evaluate(net, test_set)
    out = {"seed": seed, "sup3r": s.as_dict(), "net": net}
    if baseline:
        km, _ = train_kmeans(cfg, train_set, seed)
        _, sk = evaluate(km, test_set)
        out["kmeans"] = sk.as_dict()
    return out


def adapt(net: Network, recordings: Sequence[Recording], mode: Mode, rates: LearningRates) -> list[dict]:
    """Stream recordings once, learning in ``mode`` while scoring every recording."""
    rows = []
    for i, r in enumerate(recordings):
        label = r.label if mode == Mode.SUPERVISED else None
        p = train_recording(net, r.events, label, mode, rates)
        # score against the true label even when learning is label-free
        acc = 0.0
        if p.n_out:
            acc = float(p.counts[r.label] / p.n_out) if r.label < len(p.counts) else 0.0
        row = _row(i, r.label, p)
        row["event_accuracy"] = acc
        row["shift_step"] = r.meta.get("shift_step", 0)
        rows.append(row)
    return rows


def continual_run(cfg: RunConfig, net: Network, seed: int) -> dict[str, list[dict]]:
    """Shift sequence with label-free learning versus no learning, from the same start."""
    c = cfg.continual
    seq = gen_shift_sequence(seed + 20_000, c.n_steps, c.per_step, c.final_len, synth_config(cfg))
    rates = cfg.rates.learning()
    return {
        "self": adapt(net.copy(), seq, Mode.SELF, rates),
        "ablated": adapt(net.copy(), seq, Mode.ABLATED, rates),
    }


def _pad_polarities(centroids: np.ndarray, n_old: int, n_new: int) -> np.ndarray:
    """Append zero input channels for new polarities (polarity is the fastest axis)."""
    N = centroids.shape[0]
    c = centroids.reshape(N, -1, n_old)
    return np.concatenate([c, np.zeros((N, c.shape[1], n_new - n_old))], axis=2).reshape(N, -1)


def extend_network(net: Network, new_clusters: Sequence[int], recordings: Sequence[np.ndarray], zeta: float, seed=None) -> Network:
    """Freeze every existing centroid and append freshly initialised ones.

    Layers are extended bottom-up so each layer's new rows are initialised on
    surfaces produced by the already-extended layers below.
    """
    rng = np.random.default_rng(seed)
    for layer in net.layers:
        layer.frozen[:] = True
    for k, layer in enumerate(net.layers):
        n_add = new_clusters[k]
        if not n_add:
            continue
        layer.centroids = np.vstack([layer.centroids, np.zeros((n_add, layer.dim))])
        layer.thresholds = np.concatenate([layer.thresholds, np.ones(n_add)])
        layer.frozen = np.concatenate([layer.frozen, np.zeros(n_add, dtype=bool)])
        layer.config.n_clusters = layer.n_clusters
        if k + 1 < len(net.layers):
            nxt = net.layers[k + 1]
            nxt.centroids = _pad_polarities(nxt.centroids, nxt.n_in, layer.n_clusters)
            nxt.n_in = layer.n_clusters
        net.rebuild()
        batch = collect_surfaces(net, recordings, k)
        new = init_centroids(batch, n_add, zeta, rng)
        layer.centroids[-n_add:] = new
        layer.thresholds[-n_add:] = init_thresholds(batch, new, net.th_floor)
    net.rebuild()
    return net


def _old_block(layer, n_rows: int, n_in: int) -> np.ndarray:
    """The pre-extension part of a grown centroid matrix: old rows, old input channels."""
    c = layer.centroids[:n_rows].reshape(n_rows, -1, layer.n_in)
    return c[:, :, :n_in].reshape(n_rows, -1)


def incremental_run(cfg: RunConfig, net: Network, seed: int, task1_test: Sequence[Recording]) -> dict:
    """Learn task 2 on new centroids only, then re-test task 1."""
    before = evaluate(net, task1_test)[1]
    train2, test2 = task_data(cfg, 2, seed + 30_000)
    frozen_before = [(l.centroids.copy(), l.thresholds.copy(), l.n_in) for l in net.layers]
    extend_network(net, cfg.incremental.new_clusters, [r.events for r in train2[: cfg.init.batch]], cfg.init.zeta, seed)
    train(net, train2, Mode.SUPERVISED, cfg.rates.learning(), cfg.train.epochs, seed, cfg.train.shuffle)
    task2 = evaluate(net, test2)[1]
    after = evaluate(net, task1_test)[1]
    unchanged = all(
        np.array_equal(_old_block(l, len(c), n_in), c) and np.array_equal(l.thresholds[: len(t)], t)
        for l, (c, t, n_in) in zip(net.layers, frozen_before)
    )
    return {
        "seed": seed,
        "task1": before.accuracy,
        "task2": task2.accuracy,
        "task1_after_task2": after.accuracy,
        "frozen_unchanged": unchanged,
        "net": net,
    }


def write_rows(path: str | Path, rows: Iterable[dict], columns: Sequence[str] = LOG_COLUMNS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in columns})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
