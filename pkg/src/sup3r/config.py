"""Run configuration: TOML file plus command-line overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import tomli
import tomli_w

from .learning import LearningRates
from .network import ConfigError, LayerConfig

MS = 1_000
S = 1_000_000


def synth_layers() -> list[LayerConfig]:
    return [
        LayerConfig(n_clusters=3, window=5, tau=1 * S, f_tau=100 * MS),
        LayerConfig(n_clusters=6, window=15, tau=1 * MS, f_tau=100 * MS),
        LayerConfig(n_clusters=2, window=None, tau=1 * MS, f_tau=10 * MS),
    ]


def nmnist_layers() -> list[LayerConfig]:
    return [
        LayerConfig(n_clusters=32, window=9, tau=100 * MS, f_tau=100 * MS),
        LayerConfig(n_clusters=10, window=None, tau=1 * MS, f_tau=10 * MS),
    ]


@dataclass
class Rates:
    # Per-event updates. The published synthetic rates (1e-4, 1e-5, 1e-4, 5e-6)
    # were lowered for batch-summed updates; see configs/published_rates.toml.
    alpha: float = 3e-3
    beta: float = 3e-4
    gamma: float = 3e-2
    delta: float = 1.5e-3
    eta: float | None = None  # k-means baseline; defaults to alpha + beta

    def learning(self) -> LearningRates:
        return LearningRates(self.alpha, self.beta, self.gamma, self.delta)

    @property
    def kmeans_eta(self) -> float:
        return self.alpha + self.beta if self.eta is None else self.eta


@dataclass
class DataConfig:
    n_train_per_class: int = 500
    n_test_per_class: int = 500
    hi: float = 1000.0
    lo: float = 50.0
    duration: int = 10_000
    rows: int = 5
    train_manifest: str = ""
    test_manifest: str = ""


@dataclass
class InitConfig:
    zeta: float = 0.1
    batch: int = 10


@dataclass
class TrainConfig:
    epochs: int = 3
    shuffle: bool = True


@dataclass
class ContinualConfig:
    n_steps: int = 3
    per_step: int = 250
    final_len: int = 1000


@dataclass
class IncrementalConfig:
    new_clusters: list[int] = field(default_factory=lambda: [1, 2, 2])


@dataclass
class NmnistConfig:
    root: str = ""
    train_limit: int = 100
    test_limit: int = 100
    epochs: int = 1
    merge_polarities: bool = False
    layers: list[LayerConfig] = field(default_factory=nmnist_layers)
    rates: Rates = field(default_factory=lambda: Rates(alpha=5e-3, beta=5e-6, gamma=1e-4, delta=1e-7))


@dataclass
class RunConfig:
    name: str = "run"
    seed: int = 0
    n_runs: int = 10
    mode: str = "supervised"
    feedback: str = "next"
    layers: list[LayerConfig] = field(default_factory=synth_layers)
    rates: Rates = field(default_factory=Rates)
    data: DataConfig = field(default_factory=DataConfig)
    init: InitConfig = field(default_factory=InitConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    continual: ContinualConfig = field(default_factory=ContinualConfig)
    incremental: IncrementalConfig = field(default_factory=IncrementalConfig)
    nmnist: NmnistConfig = field(default_factory=NmnistConfig)

    def validate(self) -> "RunConfig":
        if self.mode not in ("supervised", "self", "ablated"):
            raise ConfigError(f"mode: expected supervised, self or ablated, got {self.mode!r}")
        if self.feedback not in ("next", "self"):
            raise ConfigError(f"feedback: expected next or self, got {self.feedback!r}")
        if self.n_runs < 1:
            raise ConfigError("n_runs: must be >= 1")
        for name, layers in (("layers", self.layers), ("nmnist.layers", self.nmnist.layers)):
            if not layers:
                raise ConfigError(f"{name}: at least one layer is required")
            for k, layer in enumerate(layers):
                try:
                    layer.validate(k)
                except ConfigError as e:
                    raise ConfigError(f"{name}: {e}") from None
            if any(l.window is None for l in layers[:-1]) or layers[-1].window is not None:
                raise ConfigError(f"{name}: only the last layer may (and must) be global (window = 0)")
        for name, rates in (("rates", self.rates), ("nmnist.rates", self.nmnist.rates)):
            try:
                rates.learning()
            except ConfigError as e:
                raise ConfigError(f"{name}: {e}") from None
        if not 0 <= self.init.zeta <= 1:
            raise ConfigError(f"init.zeta: must lie in [0, 1], got {self.init.zeta}")
        if self.init.batch < 1:
            raise ConfigError("init.batch: must be >= 1")
        if self.train.epochs < 1:
            raise ConfigError("train.epochs: must be >= 1")
        if not self.data.hi > self.data.lo >= 0:
            raise ConfigError("data.hi/data.lo: need hi > lo >= 0")
        if self.data.rows not in (5, 10):
            raise ConfigError("data.rows: must be 5 or 10")
        if len(self.incremental.new_clusters) != len(self.layers):
            raise ConfigError("incremental.new_clusters: need one entry per layer")
        return self


def _layer_to_dict(layer: LayerConfig) -> dict:
    d = dataclasses.asdict(layer)
    d["window"] = d["window"] or 0
    if d["d"] is None:
        del d["d"]
    return d


def _layer_from_dict(d: dict) -> LayerConfig:
    d = dict(d)
    d["window"] = d.get("window") or None
    return LayerConfig(**d)


def to_dict(cfg: RunConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["layers"] = [_layer_to_dict(l) for l in cfg.layers]
    out["nmnist"]["layers"] = [_layer_to_dict(l) for l in cfg.nmnist.layers]
    for r in (out["rates"], out["nmnist"]["rates"]):
        if r["eta"] is None:
            del r["eta"]
    return out


def _build(cls, data: dict, where: str):
    names = {f.name: f for f in dataclasses.fields(cls)}
    kw = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"{where}{key}: unknown setting")
        kw[key] = value
    return cls(**kw)


def from_dict(doc: dict) -> RunConfig:
    doc = dict(doc)
    sections = {
        "rates": Rates,
        "data": DataConfig,
        "init": InitConfig,
        "train": TrainConfig,
        "continual": ContinualConfig,
        "incremental": IncrementalConfig,
    }
    kw: dict[str, Any] = {}
    for key, value in doc.items():
        if key in sections:
            kw[key] = _build(sections[key], value, f"{key}.")
        elif key == "layers":
            kw[key] = [_layer_from_dict(l) for l in value]
        elif key == "nmnist":
            nm = dict(value)
            if "layers" in nm:
                nm["layers"] = [_layer_from_dict(l) for l in nm["layers"]]
            if "rates" in nm:
                nm["rates"] = _build(Rates, nm["rates"], "nmnist.rates.")
            kw[key] = _build(NmnistConfig, nm, "nmnist.")
        else:
            kw[key] = value
    return _build(RunConfig, kw, "").validate()


def set_path(doc: dict, dotted: str, value: Any) -> None:
    """Apply a ``section.key=value`` override to a raw config dict."""
    parts = dotted.split(".")
    node = doc
    try:
        for p in parts[:-1]:
            node = node[int(p)] if isinstance(node, list) else node.setdefault(p, {})
        if isinstance(node, list):
            node[int(parts[-1])] = value
        else:
            node[parts[-1]] = value
    except (ValueError, IndexError, TypeError, AttributeError):
        raise ConfigError(f"override {dotted!r}: no such setting") from None


def parse_value(text: str) -> Any:
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def load(path: str | Path | None = None, overrides: list[str] = ()) -> RunConfig:
    doc = to_dict(RunConfig()) if path is None else tomli.loads(Path(path).read_text())
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, text = item.split("=", 1)
        set_path(doc, key.strip(), parse_value(text.strip()))
    return from_dict(doc)


def dump(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(tomli_w.dumps(to_dict(cfg)))
