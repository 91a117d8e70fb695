"""Semi-supervised learning signals and update rules for HOTS networks.

The learning signal of a layer is ``S = G * (ftv[f] - mean_{n != f} ftv[n])``
where ``ftv`` is the feedback time vector of the layer's output and ``G`` is
+1 when the last layer fired for the right class. Centroids move by
``(alpha * dS + beta * S) * q`` and thresholds by
``(gamma * dS + delta * S) * exp(-|q| / d)``, with ``q = ts - c``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _engine
from .events import Event
from .network import (
    ConfigError,
    Layer,
    Network,
    Prediction,
    forward_event,
    layer_surface,
    output_coords,
    reset_state,
    summarize,
)


class Mode(enum.IntEnum):
    SUPERVISED = _engine.SUPERVISED
    SELF = _engine.SELF
    ABLATED = _engine.ABLATED


@dataclass(frozen=True)
class LearningRates:
    alpha: float = 1e-4
    beta: float = 1e-5
    gamma: float = 1e-4
    delta: float = 5e-6

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            if getattr(self, name) < 0:
                raise ConfigError(f"rates.{name} must be >= 0")
        if self.alpha and self.beta and not self.beta < self.alpha:
            raise ConfigError("rates.beta must be < rates.alpha")
        if self.gamma and self.delta and not self.delta < self.gamma:
            raise ConfigError("rates.delta must be < rates.gamma")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma, self.delta])


def compute_G(firing_class: int, label: int | None, mode: Mode) -> int:
    if mode == Mode.SUPERVISED:
        if label is None:
            raise ValueError("supervised learning needs a label")
        return 1 if firing_class == label else -1
    return 1


def compute_S(ftv: np.ndarray, f: int, G: int) -> float:
    N = len(ftv)
    if N < 2:
        raise ConfigError("learning signal needs at least 2 clusters")
    others = ftv.sum() - ftv[f]
    return float(G * (ftv[f] - others / (N - 1)))


def update_centroid(layer: Layer, f: int, q: np.ndarray, S: float, dS: float, rates: LearningRates) -> None:
    if layer.frozen[f]:
        return
    c = layer.centroids[f]
    np.clip(c + (rates.alpha * dS + rates.beta * S) * q, 0.0, 1.0, out=c)


def update_threshold_firing(
    layer: Layer, f: int, q_norm: float, S: float, dS: float, rates: LearningRates, d: float, floor: float
) -> None:
    if layer.frozen[f]:
        return
    step = (rates.gamma * dS + rates.delta * S) * np.exp(-q_norm / d)
    layer.thresholds[f] = max(layer.thresholds[f] + step, floor)


def update_thresholds_competitive(
    layer: Layer, others, q_norms: np.ndarray, S: float, dS: float, rates: LearningRates, d: float, floor: float
) -> None:
    """Shrink the thresholds of non-firing clusters that also contained the sample."""
    if not (dS > 0 and S > 0):
        return
    coef = rates.gamma * dS + rates.delta * S
    for n in others:
        if layer.frozen[n]:
            continue
        layer.thresholds[n] = max(layer.thresholds[n] - coef * np.exp(-q_norms[n] / d), floor)


def kmeans_step(layer: Layer, ts: np.ndarray, eta: float) -> int:
    """Online k-means: move the closest centroid towards ``ts``. Returns its index."""
    dists = np.sqrt(((layer.centroids - ts) ** 2).sum(axis=1))
    f = int(np.argmin(dists))
    if not layer.frozen[f]:
        layer.centroids[f] += eta * (ts - layer.centroids[f])
    return f


def train_on_event(net: Network, ev: Event, label: int | None, mode: Mode, rates: LearningRates) -> list:
    """Reference (pure numpy) forward pass plus one learning step.

    Nothing changes unless the event produces a last-layer output.
    """
    trace = forward_event(net, ev)
    K = len(net.layers)
    if len(trace) < K or not trace[-1].assignment.fired:
        return trace
    G = compute_G(trace[-1].assignment.f, label, mode)
    S = np.zeros(K)
    dS = np.zeros(K)
    for k, step in enumerate(trace):
        if net.layers[k].n_clusters < 2:
            continue
        S[k] = compute_S(step.ftv, step.assignment.f, G)
        dS[k] = S[k] - net.s_prev[k]
        net.s_prev[k] = S[k]
    if mode == Mode.ABLATED:
        return trace
    drivers = net.drivers()
    for k, step in enumerate(trace):
        layer = net.layers[k]
        a = step.assignment
        s, ds = S[drivers[k]], dS[drivers[k]]
        update_centroid(layer, a.f, step.q, s, ds, rates)
        if layer.frozen[a.f]:
            continue
        update_threshold_firing(layer, a.f, a.dist, s, ds, rates, layer.d, net.th_floor)
        update_thresholds_competitive(
            layer, [n for n in a.within if n != a.f], a.dists, s, ds, rates, layer.d, net.th_floor
        )
    return trace


def train_kmeans_event(net: Network, ev: Event, eta: float) -> list:
    """Reference online k-means step through every layer; thresholds are ignored."""
    trace = []
    for k, layer in enumerate(net.layers):
        net.in_stores[k].record(ev)
        ts = layer_surface(net, k, ev)
        f = kmeans_step(layer, ts, eta)
        trace.append(f)
        out = Event(ev.t, output_coords(layer, ev.x), f)
        net.fb_stores[k].record(out)
        ev = out
    return trace


def train_recording(
    net: Network,
    events: np.ndarray,
    label: int | None,
    mode: Mode,
    rates: LearningRates,
    kmeans_eta: float | None = None,
) -> Prediction:
    """Reset memories and learn from one recording, event by event.

    ``events`` has columns ``t, *x, p``. With ``kmeans_eta`` set, the network
    is trained as the online k-means baseline (no gating, no learning signal).
    Returns the monitoring metrics accumulated while learning.
    """
    if len(events) == 0:
        raise ValueError("empty recording")
    if mode == Mode.SUPERVISED and label is None:
        raise ValueError("supervised learning needs a label")
    reset_state(net)
    kmeans = kmeans_eta is not None
    counts, _, sum_S = net.engine().run(
        events, label, int(mode), rates.as_array(), eta=kmeans_eta or 0.0, kmeans=kmeans
    )
    return summarize(net, counts, len(events), label, sum_S)
