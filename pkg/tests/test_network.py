import numpy as np
import pytest

from sup3r.events import Event
from sup3r.network import (
    TH_FLOOR,
    ConfigError,
    LayerConfig,
    Network,
    assign,
    forward_event,
    init_centroids,
    init_thresholds,
    initialize,
    predict_recording,
    reset_state,
)


def small_net(th0=np.inf, th1=np.inf, stride="center"):
    """Two-layer 1-D net over 6 channels: window 3 then a global classifier."""
    cfgs = [LayerConfig(2, 3, 100.0, 1000.0, stride=stride), LayerConfig(2, None, 100.0, 1000.0)]
    net = Network.empty(cfgs, (6,), 1)
    rng = np.random.default_rng(0)
    for layer, th in zip(net.layers, (th0, th1)):
        layer.centroids[:] = rng.random(layer.centroids.shape)
        layer.thresholds[:] = th
    return net


def recording(n=40, seed=0, width=6):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(0, 1000, n))
    return np.stack([t, rng.integers(0, width, n), np.zeros(n, dtype=int)], axis=1).astype(np.int64)


def test_assign_zero_distance():
    net = small_net()
    layer = net.layers[0]
    layer.centroids = np.array([[0.0, 0, 0], [1, 1, 1], [0.5, 0.5, 0.5]])
    layer.thresholds = np.array([1.0, 1.0, 1.0])
    a = assign(np.full(3, 0.5), layer)
    assert (a.f, a.dist, a.fired) == (2, 0.0, True)


def test_assign_tie_breaks_to_lowest_index():
    layer = small_net(th0=10.0).layers[0]
    layer.centroids[:] = [[0, 0, 0], [1, 1, 1]]
    assert assign(np.full(3, 0.5), layer).f == 0


def test_assign_gate_closed():
    layer = small_net(th0=0.1).layers[0]
    layer.centroids[:] = [[0, 0, 0], [1, 1, 1]]
    a = assign(np.full(3, 0.5), layer)
    assert not a.fired and len(a.within) == 0


def test_assign_rejects_wrong_dimension():
    with pytest.raises(ConfigError):
        assign(np.zeros(4), small_net().layers[0])


def test_assign_invariant_to_row_order():
    layer = small_net(th0=10.0).layers[0]
    ts = np.array([0.2, 0.9, 0.4])
    f = assign(ts, layer).f
    layer.centroids[:] = layer.centroids[::-1].copy()
    assert assign(ts, layer).f == 1 - f


def test_forward_full_propagation():
    net = small_net()
    trace = forward_event(net, Event(0, (2,), 0))
    assert len(trace) == 2 and all(s.assignment.fired for s in trace)
    assert trace[0].out == Event(0, (2,), trace[0].assignment.f)
    assert trace[1].out.x == ()


def test_forward_stops_at_closed_gate():
    net = small_net(th0=0.0)
    trace = forward_event(net, Event(0, (2,), 0))
    assert len(trace) == 1 and not trace[0].assignment.fired
    assert np.all(net.fb_stores[0].cells < 0)


def test_tile_layer_emits_tile_coordinates():
    net = small_net(stride="tile")
    assert net.layers[1].extent == (2,)
    trace = forward_event(net, Event(0, (4,), 0))
    assert trace[0].out.x == (1,)


def test_disabled_thresholds_process_everything():
    net = small_net(th0=1.0, th1=1.0)
    net.disable_thresholds()
    p = predict_recording(net, recording(), 0)
    assert p.processed_fraction == 1.0


def test_predict_examples():
    net = small_net()
    net.layers[1].centroids[1] = 5.0  # unreachable: every output goes to class 0
    assert predict_recording(net, recording(), 0).event_accuracy == 1.0
    silent = small_net(th0=0.0)
    p = predict_recording(silent, recording(), 0)
    assert (p.event_accuracy, p.n_out) == (0.0, 0)


def test_predict_rejects_empty_recording():
    with pytest.raises(ValueError):
        predict_recording(small_net(), np.zeros((0, 3), dtype=np.int64), 0)


def test_reset_and_determinism():
    net = small_net(th0=0.8, th1=2.0)
    a = predict_recording(net, recording(), 1)
    b = predict_recording(net, recording(), 1)
    assert np.array_equal(a.counts, b.counts)
    reset_state(net)
    assert np.all(net.in_stores[0].cells < 0) and np.all(net.s_prev == 0)


def test_init_centroids_examples():
    batch = np.random.default_rng(1).random((20, 4))
    c = init_centroids(batch, 3, 0.0, seed=0)
    assert np.allclose(c, batch.mean(axis=0))
    c = init_centroids(np.full((2, 1000), 0.5), 2, 1.0, seed=0)
    assert c.min() >= 0 and c.max() < 0.5
    c = init_centroids(np.ones((1, 50)), 4, 0.1, seed=0)
    assert c.min() >= 0.9 and c.max() < 1.0


def test_init_thresholds_examples():
    c = np.array([[0.0, 0.0]])
    assert init_thresholds(c, c)[0] == TH_FLOOR
    assert init_thresholds(np.array([[1.0, 0.0], [3.0, 0.0]]), c)[0] == pytest.approx(3.0)
    th = init_thresholds(np.random.default_rng(0).random((5, 2)), np.random.default_rng(1).random((3, 2)))
    assert np.all(th >= TH_FLOOR)


def test_initialize_sets_d_and_thresholds():
    net = initialize(small_net(), [recording(seed=s) for s in range(3)], zeta=0.1, seed=0)
    for layer in net.layers:
        assert layer.d == pytest.approx(0.5 * layer.thresholds.mean())
        assert np.all(np.isfinite(layer.thresholds))


def test_checkpoint_round_trip(tmp_path):
    net = initialize(small_net(), [recording()], seed=3)
    net.layers[0].thresholds[1] = np.inf
    net.layers[1].frozen[0] = True
    net.class_map = np.array([1, 0])
    net.save(tmp_path / "c.json")
    back = Network.load(tmp_path / "c.json")
    for a, b in zip(net.layers, back.layers):
        assert np.array_equal(a.centroids, b.centroids)
        assert np.array_equal(a.thresholds, b.thresholds)
        assert np.array_equal(a.frozen, b.frozen)
        assert a.d == b.d and a.config == b.config
    assert np.array_equal(back.class_map, net.class_map)


def test_checkpoint_version_checked():
    doc = small_net().to_dict()
    doc["format_version"] = 99
    with pytest.raises(ConfigError, match="version"):
        Network.from_dict(doc)


@pytest.mark.parametrize(
    "cfgs, match",
    [
        ([LayerConfig(2, 4, 1.0, 1.0), LayerConfig(2, None, 1.0, 1.0)], "odd"),
        ([LayerConfig(2, 3, 0.0, 1.0), LayerConfig(2, None, 1.0, 1.0)], "tau"),
        ([LayerConfig(2, None, 1.0, 1.0), LayerConfig(2, None, 1.0, 1.0)], "global"),
        ([LayerConfig(2, 3, 1.0, 1.0), LayerConfig(1, None, 1.0, 1.0)], "2 clusters"),
    ],
)
def test_invalid_architectures(cfgs, match):
    with pytest.raises(ConfigError, match=match):
        Network.empty(cfgs, (6,), 1)
