"""HOTS layer stack: centroids with individual firing thresholds.

Every layer shares one centroid set across all spatial positions. Layers
``0..K-2`` read a local window of their input; the last layer reads a time
vector over the whole extent and its centroids stand for the classes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _engine
from .events import (
    Event,
    FeedbackStore,
    TimestampStore,
    feedback_time_vector,
    global_time_vector,
    local_time_surface,
    tile_index,
    tile_time_surface,
)

CHECKPOINT_VERSION = 1
TH_FLOOR = 1e-3
# initialisation keeps at most this many surface values per layer
MAX_INIT_VALUES = 20_000_000
MIN_INIT_SURFACES = 200


class ConfigError(ValueError):
    pass


@dataclass
class LayerConfig:
    """Hyper-parameters of one layer.

    ``window=None`` makes the layer global. ``stride="center"`` centres the
    window on every event and keeps its coordinates; ``stride="tile"`` cuts
    the input into non-overlapping ``window``-wide tiles and emits the tile
    index as the output coordinate. ``d=None`` defers the threshold border
    scale to initialisation (half the mean initial threshold). Times are in
    microseconds.
    """

    n_clusters: int
    window: int | None
    tau: float
    f_tau: float
    d: float | None = None
    stride: str = "center"

    def validate(self, index: int = 0) -> None:
        where = f"layer {index}"
        if self.n_clusters < 1:
            raise ConfigError(f"{where}: n_clusters must be >= 1, got {self.n_clusters}")
        if self.window is not None and (self.window < 1 or self.window % 2 == 0):
            raise ConfigError(f"{where}: window must be a positive odd integer, got {self.window}")
        if not self.tau > 0:
            raise ConfigError(f"{where}: tau must be > 0, got {self.tau}")
        if not self.f_tau > 0:
            raise ConfigError(f"{where}: f_tau must be > 0, got {self.f_tau}")
        if self.d is not None and not self.d > 0:
            raise ConfigError(f"{where}: d must be > 0, got {self.d}")
        if self.stride not in ("center", "tile"):
            raise ConfigError(f"{where}: stride must be 'center' or 'tile', got {self.stride!r}")

    def out_extent(self, extent: Sequence[int]) -> tuple[int, ...] | None:
        if self.window is None:
            return None
        if self.stride == "tile":
            return tuple(-(-int(e) // self.window) for e in extent)
        return tuple(int(e) for e in extent)


@dataclass
class Layer:
    config: LayerConfig
    n_in: int
    extent: tuple[int, ...]
    centroids: np.ndarray
    thresholds: np.ndarray
    frozen: np.ndarray
    d: float = 1.0

    @property
    def is_global(self) -> bool:
        return self.config.window is None

    @property
    def dim(self) -> int:
        return surface_dim(self.config, self.extent, self.n_in)

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]


def surface_dim(cfg: LayerConfig, extent: Sequence[int], n_in: int) -> int:
    if cfg.window is None:
        return int(np.prod(extent)) * n_in
    return cfg.window ** len(extent) * n_in


@dataclass
class Assignment:
    f: int
    dist: float
    within: np.ndarray
    fired: bool
    dists: np.ndarray


@dataclass
class TraceStep:
    layer: int
    ts: np.ndarray
    assignment: Assignment
    q: np.ndarray
    ftv: np.ndarray | None = None
    out: Event | None = None


@dataclass
class Network:
    """A HOTS network plus its per-recording event memories.

    ``feedback`` selects which layer's learning signal drives each layer:
    ``"next"`` (layer k learns from layer k+1, the last layer from itself)
    or ``"self"``.
    """

    layers: list[Layer]
    extent: tuple[int, ...]
    n_polarities: int
    feedback: str = "next"
    th_floor: float = TH_FLOOR
    class_map: np.ndarray | None = None
    in_stores: list[TimestampStore] = field(default_factory=list, repr=False)
    fb_stores: list[FeedbackStore] = field(default_factory=list, repr=False)
    s_prev: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.feedback not in ("next", "self"):
            raise ConfigError(f"feedback must be 'next' or 'self', got {self.feedback!r}")
        for k, layer in enumerate(self.layers):
            layer.config.validate(k)
            expect_in = self.n_polarities if k == 0 else self.layers[k - 1].n_clusters
            if layer.n_in != expect_in:
                raise ConfigError(f"layer {k}: expects {layer.n_in} input polarities, gets {expect_in}")
            if layer.is_global != (k == len(self.layers) - 1):
                raise ConfigError(f"layer {k}: only the last layer is global")
            expect_extent = self.extent if k == 0 else self.layers[k - 1].config.out_extent(self.layers[k - 1].extent)
            if tuple(layer.extent) != tuple(expect_extent):
                raise ConfigError(f"layer {k}: input extent {layer.extent} != {expect_extent}")
            if layer.centroids.shape != (layer.n_clusters, layer.dim):
                raise ConfigError(f"layer {k}: centroid shape {layer.centroids.shape} != {(layer.n_clusters, layer.dim)}")
        for k in self.drivers():
            if self.layers[k].n_clusters < 2:
                raise ConfigError(f"layer {k}: learning signal needs >= 2 clusters")
        if self.class_map is not None:
            self.class_map = np.asarray(self.class_map, dtype=np.int64)
        self._build_stores()

    @classmethod
    def empty(cls, configs: Sequence[LayerConfig], extent: Sequence[int], n_polarities: int, **kw) -> "Network":
        """Network with zero centroids and unit thresholds, ready for initialisation."""
        extent = tuple(int(e) for e in extent)
        layers = []
        n_in = n_polarities
        layer_extent = extent
        configs = [replace(c) for c in configs]  # layers own their config; growth must not leak back
        for k, cfg in enumerate(configs):
            cfg.validate(k)
            if (cfg.window is None) != (k == len(configs) - 1):
                raise ConfigError(f"layer {k}: only the last layer is global")
            if k:
                layer_extent = configs[k - 1].out_extent(layer_extent)
            dim = surface_dim(cfg, layer_extent, n_in)
            layers.append(
                Layer(
                    config=cfg,
                    n_in=n_in,
                    extent=layer_extent,
                    centroids=np.zeros((cfg.n_clusters, dim)),
                    thresholds=np.ones(cfg.n_clusters),
                    frozen=np.zeros(cfg.n_clusters, dtype=bool),
                    d=cfg.d if cfg.d is not None else 1.0,
                )
            )
            n_in = cfg.n_clusters
        return cls(layers=layers, extent=extent, n_polarities=n_polarities, **kw)

    def _build_stores(self) -> None:
        K = len(self.layers)
        self.in_stores = [TimestampStore(layer.extent, layer.n_in) for layer in self.layers]
        self.fb_stores = [
            FeedbackStore(layer.config.out_extent(layer.extent), layer.n_clusters) for layer in self.layers
        ]
        self.s_prev = np.zeros(K)
        self._packed = None

    def engine(self):
        """Compiled-loop view of this network, rebuilt after structural changes."""
        if self._packed is None:
            self._packed = _engine.Packed(self)
        return self._packed

    def rebuild(self) -> None:
        """Re-validate and reallocate memories after layers were replaced or grown."""
        self.__post_init__()

    @property
    def n_classes(self) -> int:
        return self.layers[-1].n_clusters

    def drivers(self) -> list[int]:
        """Index of the layer whose learning signal drives each layer."""
        K = len(self.layers)
        if self.feedback == "self":
            return list(range(K))
        return [min(k + 1, K - 1) for k in range(K)]

    def disable_thresholds(self) -> None:
        for layer in self.layers:
            layer.thresholds[:] = np.inf

    def copy(self) -> "Network":
        return Network.from_dict(self.to_dict())

    def to_dict(self) -> dict:
        return {
            "format_version": CHECKPOINT_VERSION,
            "extent": list(self.extent),
            "n_polarities": self.n_polarities,
            "feedback": self.feedback,
            "th_floor": self.th_floor,
            "class_map": None if self.class_map is None else self.class_map.tolist(),
            "layers": [
                {
                    "config": asdict(layer.config),
                    "n_in": layer.n_in,
                    "d": layer.d,
                    "centroids": layer.centroids.tolist(),
                    "thresholds": [_enc_float(v) for v in layer.thresholds],
                    "frozen": layer.frozen.tolist(),
                }
                for layer in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Network":
        if doc.get("format_version") != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {doc.get('format_version')!r}")
        extent = tuple(doc["extent"])
        layers = []
        layer_extent = extent
        for k, ld in enumerate(doc["layers"]):
            cfg = LayerConfig(**ld["config"])
            if k:
                layer_extent = layers[-1].config.out_extent(layer_extent)
            layers.append(
                Layer(
                    config=cfg,
                    n_in=ld["n_in"],
                    extent=layer_extent,
                    centroids=np.array(ld["centroids"], dtype=np.float64).reshape(cfg.n_clusters, -1),
                    thresholds=np.array([float(v) for v in ld["thresholds"]], dtype=np.float64),
                    frozen=np.array(ld["frozen"], dtype=bool),
                    d=float(ld["d"]),
                )
            )
        return cls(
            layers=layers,
            extent=extent,
            n_polarities=doc["n_polarities"],
            feedback=doc["feedback"],
            th_floor=doc["th_floor"],
            class_map=doc.get("class_map"),
        )

    def save(self, path: str | Path) -> None:
        # repr() of a float round-trips exactly through json
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "Network":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _enc_float(v: float):
    return "inf" if np.isinf(v) else float(v)


def assign(ts: np.ndarray, layer: Layer) -> Assignment:
    if ts.shape != (layer.dim,):
        raise ConfigError(f"surface has shape {ts.shape}, layer expects ({layer.dim},)")
    dists = np.sqrt(((layer.centroids - ts) ** 2).sum(axis=1))
    f = int(np.argmin(dists))
    within = np.flatnonzero(dists < layer.thresholds)
    return Assignment(f=f, dist=float(dists[f]), within=within, fired=bool(dists[f] < layer.thresholds[f]), dists=dists)


def layer_surface(net: Network, k: int, ev: Event) -> np.ndarray:
    layer = net.layers[k]
    if layer.is_global:
        return global_time_vector(net.in_stores[k], ev, layer.config.tau)
    if layer.config.stride == "tile":
        return tile_time_surface(net.in_stores[k], ev, layer.config.window, layer.config.tau)
    return local_time_surface(net.in_stores[k], ev, layer.config.window, layer.config.tau)


def output_coords(layer: Layer, x: tuple[int, ...]) -> tuple[int, ...]:
    if layer.is_global:
        return ()
    if layer.config.stride == "tile":
        return tile_index(x, layer.config.window)
    return x


def forward_event(net: Network, ev: Event) -> list[TraceStep]:
    """Push one input event up the hierarchy until a layer does not fire."""
    trace = []
    K = len(net.layers)
    for k, layer in enumerate(net.layers):
        net.in_stores[k].record(ev)
        ts = layer_surface(net, k, ev)
        a = assign(ts, layer)
        step = TraceStep(layer=k, ts=ts, assignment=a, q=ts - layer.centroids[a.f])
        trace.append(step)
        if not a.fired:
            break
        out = Event(ev.t, output_coords(layer, ev.x), a.f)
        net.fb_stores[k].record(out)
        step.ftv = feedback_time_vector(net.fb_stores[k], out, layer.config.f_tau)
        step.out = out
        ev = out
    return trace


def reset_state(net: Network) -> None:
    for s in net.in_stores:
        s.clear()
    for s in net.fb_stores:
        s.clear()
    net.s_prev[:] = 0.0


def init_centroids(batch: Sequence[np.ndarray] | np.ndarray, n_clusters: int, zeta: float, seed=None) -> np.ndarray:
    """Batch-mean centroids plus uniform noise scaled by the mean surface value."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or len(batch) == 0:
        raise ValueError("initialisation batch is empty")
    if not 0.0 <= zeta <= 1.0:
        raise ValueError(f"zeta must lie in [0, 1], got {zeta}")
    rng = np.random.default_rng(seed)
    mean = batch.mean(axis=0)
    mu = mean.mean()
    noise = rng.random((n_clusters, batch.shape[1]))
    return (1.0 - zeta) * mean + zeta * mu * noise


def init_thresholds(batch: Sequence[np.ndarray] | np.ndarray, centroids: np.ndarray, floor: float = TH_FLOOR) -> np.ndarray:
    """Mean plus one standard deviation of batch distances to each centroid."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or len(batch) == 0:
        raise ValueError("initialisation batch is empty")
    d = np.stack([np.sqrt(((batch - c) ** 2).sum(axis=1)) for c in centroids], axis=1)
    return np.maximum(d.mean(axis=0) + d.std(axis=0), floor)


@dataclass
class Prediction:
    event_accuracy: float
    counts: np.ndarray
    processed_fraction: float
    predicted: int
    n_in: int
    n_out: int
    mean_S: float = float("nan")


def class_counts(net: Network, counts: np.ndarray) -> np.ndarray:
    """Fold per-centroid output counts into per-class counts via ``class_map``."""
    if net.class_map is None:
        return counts
    out = np.zeros(int(net.class_map.max()) + 1, dtype=counts.dtype)
    np.add.at(out, net.class_map, counts)
    return out


def summarize(net: Network, counts: np.ndarray, n_in: int, label: int | None, sum_S: float = 0.0) -> Prediction:
    per_class = class_counts(net, counts)
    n_out = int(counts.sum())
    acc = 0.0
    if n_out and label is not None and label < len(per_class):
        acc = per_class[label] / n_out
    return Prediction(
        event_accuracy=float(acc),
        counts=per_class,
        processed_fraction=n_out / n_in,
        predicted=int(np.argmax(per_class)),
        n_in=n_in,
        n_out=n_out,
        mean_S=sum_S / n_out if n_out else float("nan"),
    )


def predict_recording(net: Network, events: np.ndarray, label: int | None = None) -> Prediction:
    """Forward-only pass over one recording with fresh memories.

    ``events`` is an ``(n, 2 + ndim)`` int array with columns ``t, *x, p``.
    A recording with no last-layer output scores accuracy 0.
    """
    if len(events) == 0:
        raise ValueError("empty recording")
    reset_state(net)
    counts, _, sum_S = net.engine().run(events, label, _engine.ABLATED, np.zeros(4))
    return summarize(net, counts, len(events), label, sum_S)


def _events(arr: np.ndarray) -> list[Event]:
    return [Event(int(r[0]), tuple(int(c) for c in r[1:-1]), int(r[-1])) for r in arr]


def collect_surfaces(
    net: Network, recordings: Sequence[np.ndarray], k: int, max_values: int = MAX_INIT_VALUES
) -> np.ndarray:
    """Surfaces seen by layer ``k`` when the recordings run through layers ``< k``.

    At most ``max_values // dim`` surfaces are kept, evenly strided over all
    events reaching the layer, so that wide global layers stay within memory.
    """
    cap = max(MIN_INIT_SURFACES, max_values // net.layers[k].dim)
    stride = max(1, -(-sum(len(r) for r in recordings) // cap))
    out = []
    n_seen = 0
    for events in recordings:
        reset_state(net)
        for ev in _events(events):
            for j in range(k + 1):
                net.in_stores[j].record(ev)
                if j == k:
                    if n_seen % stride == 0:
                        out.append(layer_surface(net, j, ev))
                    n_seen += 1
                    break
                a = assign(layer_surface(net, j, ev), net.layers[j])
                if not a.fired:
                    break
                ev = Event(ev.t, output_coords(net.layers[j], ev.x), a.f)
                net.fb_stores[j].record(ev)
    reset_state(net)
    return np.array(out)


def initialize(net: Network, recordings: Sequence[np.ndarray], zeta: float = 0.1, seed=None) -> Network:
    """Initialise every layer bottom-up from a small batch of recordings.

    Centroids start at the batch-mean surface plus uniform noise, thresholds at
    mean + 1 std of batch distances, and unset ``d`` at half the mean threshold.
    """
    rng = np.random.default_rng(seed)
    for k, layer in enumerate(net.layers):
        batch = collect_surfaces(net, recordings, k)
        if len(batch) == 0:
            raise ValueError(f"no events reached layer {k} during initialisation")
        layer.centroids[:] = init_centroids(batch, layer.n_clusters, zeta, rng)
        layer.thresholds[:] = init_thresholds(batch, layer.centroids, net.th_floor)
        layer.d = layer.config.d if layer.config.d is not None else 0.5 * float(layer.thresholds.mean())
    return net
