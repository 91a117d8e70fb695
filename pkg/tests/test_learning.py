import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sup3r.events import Event
from sup3r.learning import (
    LearningRates,
    Mode,
    compute_G,
    compute_S,
    kmeans_step,
    train_kmeans_event,
    train_on_event,
    train_recording,
    update_centroid,
    update_threshold_firing,
    update_thresholds_competitive,
)
from sup3r.network import ConfigError, LayerConfig, Network, _events, initialize, reset_state
from sup3r.synth import SynthConfig, gen_task

from test_network import recording, small_net

RATES = LearningRates(alpha=1e-2, beta=1e-3, gamma=1e-2, delta=1e-3)


def one_layer(centroids, thresholds=(1.0, 1.0, 1.0)):
    net = small_net()
    layer = net.layers[0]
    layer.centroids = np.array(centroids, dtype=float)
    layer.thresholds = np.array(thresholds, dtype=float)
    layer.frozen = np.zeros(len(centroids), dtype=bool)
    return layer


@pytest.mark.parametrize(
    "f, label, mode, G", [(3, 3, Mode.SUPERVISED, 1), (3, 1, Mode.SUPERVISED, -1), (3, None, Mode.SELF, 1)]
)
def test_G(f, label, mode, G):
    assert compute_G(f, label, mode) == G


def test_G_needs_label_when_supervised():
    with pytest.raises(ValueError):
        compute_G(0, None, Mode.SUPERVISED)


def test_S_examples():
    assert compute_S(np.array([0, 1.0, 0]), 1, 1) == 1.0
    assert compute_S(np.array([0, 1.0, 0]), 1, -1) == -1.0
    assert compute_S(np.ones(4), 2, 1) == 0.0
    assert compute_S(np.array([1, 0.5, 0.1]), 0, 1) == pytest.approx(0.7, abs=1e-15)
    with pytest.raises(ConfigError):
        compute_S(np.ones(1), 0, 1)


def test_centroid_beta_term_only():
    layer = one_layer([[0.5, 0.5, 0.5]], [1.0])
    q = np.array([0.1, -0.2, 0.3])
    rates = LearningRates(alpha=3.0, beta=1e-5, gamma=0, delta=0)
    update_centroid(layer, 0, q, S=1.0, dS=0.0, rates=rates)
    np.testing.assert_allclose(layer.centroids[0] - 0.5, 1e-5 * q, rtol=0, atol=1e-15)


def test_centroid_moves_away_on_negative_dS():
    layer = one_layer([[0.5, 0.5, 0.5]], [1.0])
    ts = np.array([0.9, 0.9, 0.9])
    update_centroid(layer, 0, ts - 0.5, S=0.0, dS=-1.0, rates=LearningRates(0.1, 0.0, 0, 0))
    assert np.all(layer.centroids[0] < 0.5)


def test_centroid_clamped_to_unit_range():
    layer = one_layer([[0.0, 1.0, 0.5]], [1.0])
    update_centroid(layer, 0, np.array([-1.0, 1.0, 0.0]), S=1.0, dS=1.0, rates=LearningRates(0.9, 0.5, 0, 0))
    assert np.array_equal(layer.centroids[0], [0.0, 1.0, 0.5])


def test_threshold_firing_examples():
    r = LearningRates(0, 0, gamma=1e-2, delta=1e-3)
    layer = one_layer([[0, 0, 0]], [1.0])
    update_threshold_firing(layer, 0, 0.0, S=1.0, dS=1.0, rates=r, d=1.0, floor=1e-3)
    assert layer.thresholds[0] == pytest.approx(1.0 + 1e-2 + 1e-3, abs=1e-15)
    layer.thresholds[0] = 1.0
    update_threshold_firing(layer, 0, 50.0, S=1.0, dS=1.0, rates=r, d=1.0, floor=1e-3)
    assert abs(layer.thresholds[0] - 1.0) < 1e-20
    layer.thresholds[0] = 1.0
    update_threshold_firing(layer, 0, 0.5, S=-1.0, dS=0.0, rates=r, d=1.0, floor=1e-3)
    assert layer.thresholds[0] == pytest.approx(1.0 - 1e-3 * math.exp(-0.5), abs=1e-15)
    layer.thresholds[0] = 1e-3
    update_threshold_firing(layer, 0, 0.0, S=-1.0, dS=-2.0, rates=r, d=1.0, floor=1e-3)
    assert layer.thresholds[0] == 1e-3


def test_threshold_competitive_examples():
    r = LearningRates(0, 0, gamma=1e-2, delta=1e-3)
    layer = one_layer([[0, 0, 0]] * 3)
    q = np.zeros(3)
    update_thresholds_competitive(layer, [1], q, S=0.5, dS=0.5, rates=r, d=1.0, floor=1e-3)
    assert layer.thresholds[1] == pytest.approx(1 - (0.5e-2 + 0.5e-3), abs=1e-15)
    assert layer.thresholds[0] == 1.0 and layer.thresholds[2] == 1.0
    before = layer.thresholds.copy()
    update_thresholds_competitive(layer, [1, 2], q, S=0.5, dS=0.0, rates=r, d=1.0, floor=1e-3)
    update_thresholds_competitive(layer, [], q, S=0.5, dS=0.5, rates=r, d=1.0, floor=1e-3)
    assert np.array_equal(layer.thresholds, before)


def test_kmeans_step_examples():
    layer = one_layer([[0.2, 0.2, 0.2], [0.9, 0.9, 0.9]])
    ts = np.array([0.2, 0.2, 0.2])
    assert kmeans_step(layer, ts, 0.5) == 0
    assert np.array_equal(layer.centroids[0], ts)
    ts = np.array([1.0, 0.5, 0.8])
    kmeans_step(layer, ts, 1.0)
    assert np.array_equal(layer.centroids[1], ts)
    layer.centroids[1] = [0.0, 0.0, 0.0]
    ts = np.array([0.1, 0.0, 0.0])
    errs = []
    for _ in range(5):
        layer.centroids[0] = [5.0, 5.0, 5.0]  # keep centroid 1 the closest
        kmeans_step(layer, ts, 0.1)
        errs.append(np.abs(layer.centroids[1] - ts).max())
    assert np.allclose(np.array(errs[1:]) / errs[:-1], 0.9)


def reference_recording(net, events, label, mode, rates):
    reset_state(net)
    for ev in _events(events):
        train_on_event(net, ev, label, mode, rates)


def params(net):
    return [(l.centroids.copy(), l.thresholds.copy()) for l in net.layers]


def assert_params_close(a, b):
    for (ca, ta), (cb, tb) in zip(a, b):
        np.testing.assert_allclose(ca, cb, rtol=0, atol=1e-10)
        np.testing.assert_allclose(ta, tb, rtol=0, atol=1e-10)


@pytest.mark.parametrize("mode", [Mode.SUPERVISED, Mode.SELF])
@pytest.mark.parametrize("feedback", ["next", "self"])
def test_engine_matches_reference_1d(mode, feedback):
    recs = [recording(60, seed=s) for s in range(6)]
    net = small_net()
    net.feedback = feedback
    initialize(net, recs[:2], seed=0)
    ref = net.copy()
    updated = False
    for i, ev in enumerate(recs):
        train_recording(net, ev, i % 2, mode, RATES)
        reference_recording(ref, ev, i % 2, mode, RATES)
        assert_params_close(params(net), params(ref))
    for a, b in zip(params(net), params(initialize(small_net(), recs[:2], seed=0))):
        updated |= not np.array_equal(a[0], b[0])
    assert updated


@pytest.mark.parametrize("stride", ["center", "tile"])
def test_engine_matches_reference_synth(stride):
    recs = gen_task(1, 2, seed=4, cfg=SynthConfig(duration=3000))
    cfgs = [
        LayerConfig(3, 5, 1e6, 1e5, stride=stride),
        LayerConfig(4, 3, 1e3, 1e5, stride=stride),
        LayerConfig(2, None, 1e3, 1e4),
    ]
    net = initialize(Network.empty(cfgs, (5, 30), 1), [r.events for r in recs], seed=1)
    ref = net.copy()
    for r in recs:
        train_recording(net, r.events, r.label, Mode.SUPERVISED, RATES)
        reference_recording(ref, r.events, r.label, Mode.SUPERVISED, RATES)
    assert_params_close(params(net), params(ref))


def test_engine_matches_reference_kmeans():
    recs = [recording(60, seed=s) for s in range(4)]
    net = initialize(small_net(), recs[:2], seed=0)
    net.disable_thresholds()
    ref = net.copy()
    for ev in recs:
        train_recording(net, ev, 0, Mode.SUPERVISED, RATES, kmeans_eta=0.05)
        reset_state(ref)
        for e in _events(ev):
            train_kmeans_event(ref, e, 0.05)
    assert_params_close(params(net), params(ref))


def test_no_update_when_absorbed_at_first_layer():
    net = small_net(th0=0.0, th1=10.0)
    before = params(net)
    train_recording(net, recording(), 0, Mode.SUPERVISED, RATES)
    assert all(np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]) for a, b in zip(before, params(net)))


def test_correct_sparse_history_leaves_only_beta_term_at_top():
    net = small_net()
    net.layers[1].centroids[1] = 50.0  # the classifier always picks centroid 0
    reset_state(net)
    for t in range(3):
        train_on_event(net, Event(t, (2,), 0), 0, Mode.ABLATED, RATES)
    assert net.s_prev[1] == 1.0
    c = net.layers[1].centroids[0].copy()
    trace = train_on_event(net, Event(3, (2,), 0), 0, Mode.SUPERVISED, RATES)
    assert net.s_prev[1] == 1.0  # S = 1, dS = 0
    np.testing.assert_allclose(net.layers[1].centroids[0], np.clip(c + RATES.beta * trace[1].q, 0, 1), atol=1e-15)


def test_ablated_and_frozen_leave_parameters_unchanged():
    recs = [recording(60, seed=s) for s in range(4)]
    net = initialize(small_net(), recs[:2], seed=0)
    before = params(net)
    for ev in recs:
        train_recording(net, ev, 1, Mode.ABLATED, RATES)
    assert all(np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]) for a, b in zip(before, params(net)))


def test_training_is_deterministic():
    recs = [recording(60, seed=s) for s in range(4)]
    a = initialize(small_net(), recs[:2], seed=0)
    b = a.copy()
    for net in (a, b):
        for i, ev in enumerate(recs):
            train_recording(net, ev, i % 2, Mode.SUPERVISED, RATES)
    for x, y in zip(params(a), params(b)):
        assert np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1])


def test_rates_validation():
    with pytest.raises(ConfigError, match="beta"):
        LearningRates(alpha=1e-5, beta=1e-4)
    with pytest.raises(ConfigError, match="delta"):
        LearningRates(gamma=1e-5, delta=1e-4)
    with pytest.raises(ConfigError):
        LearningRates(alpha=-1.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=12), st.data(), st.sampled_from([1, -1]))
def test_S_bounded(ftv, data, G):
    f = data.draw(st.integers(0, len(ftv) - 1))
    assert abs(compute_S(np.array(ftv), f, G)) <= 1.0


def test_sparse_global_path_matches_reference(monkeypatch):
    from sup3r import _engine

    monkeypatch.setattr(_engine, "SPARSE_MIN_DIM", 0)
    recs = [recording(80, seed=s) for s in range(5)]
    net = initialize(small_net(), recs[:2], seed=0)
    net.layers[1].config.tau = 5.0  # short enough for the cutoff to drop old cells
    assert net.engine().sparse_top
    ref = net.copy()
    for i, ev in enumerate(recs):
        train_recording(net, ev, i % 2, Mode.SUPERVISED, RATES)
        reference_recording(ref, ev, i % 2, Mode.SUPERVISED, RATES)
        assert_params_close(params(net), params(ref))
