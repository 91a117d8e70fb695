import json
from pathlib import Path

import numpy as np
import pytest

from sup3r import config
from sup3r.cli import main
from sup3r.network import ConfigError, Network

SMALL = [
    "data.n_train_per_class=4",
    "data.n_test_per_class=3",
    "data.duration=2000",
    "n_runs=1",
    "name=t",
]


def cli(tmp_path, *argv):
    args = [a for item in SMALL for a in ("--set", item)]
    return main([*argv, "--runs", str(tmp_path / "runs"), *args])


def test_default_architecture():
    cfg = config.load()
    assert [l.n_clusters for l in cfg.layers] == [3, 6, 2]
    assert [l.window for l in cfg.layers] == [5, 15, None]
    assert [l.tau for l in cfg.layers] == [1_000_000, 1_000, 1_000]
    assert [l.f_tau for l in cfg.layers] == [100_000, 100_000, 10_000]
    assert cfg.rates.kmeans_eta == cfg.rates.alpha + cfg.rates.beta


def test_published_rates_profile():
    cfg = config.load(Path(__file__).parents[1] / "configs" / "published_rates.toml")
    r = cfg.rates
    assert (r.alpha, r.beta, r.gamma, r.delta) == (1e-4, 1e-5, 1e-4, 5e-6)
    assert cfg.layers == config.load().layers
    nm = cfg.nmnist
    assert (nm.layers[0].n_clusters, nm.layers[0].window, nm.layers[0].tau) == (32, 9, 100_000)
    assert (nm.rates.alpha, nm.rates.beta, nm.rates.gamma, nm.rates.delta) == (5e-3, 5e-6, 1e-4, 1e-7)


def test_file_and_override_round_trip(tmp_path):
    cfg = config.load(overrides=["seed=7", "layers.0.window=3", "rates.alpha=0.5"])
    assert (cfg.seed, cfg.layers[0].window, cfg.rates.alpha) == (7, 3, 0.5)
    config.dump(cfg, tmp_path / "c.toml")
    assert config.load(tmp_path / "c.toml") == cfg


@pytest.mark.parametrize(
    "override, match",
    [
        ("layers.0.window=4", "layer 0: window"),
        ("layers.1.tau=0", "tau"),
        ("rates.beta=1.0", "beta"),
        ("rates.delta=1.0", "delta"),
        ("mode=sleepy", "mode"),
        ("init.zeta=2.0", "zeta"),
        ("data.bogus=1", "data.bogus"),
        ("layers.9.window=3", "layers.9"),
    ],
)
def test_invalid_settings_name_the_field(override, match):
    with pytest.raises(ConfigError, match=match):
        config.load(overrides=[override])


def test_gen_counts_and_determinism(tmp_path):
    for out in ("a", "b"):
        assert main(["gen", "--out", str(tmp_path / out), "--set", "data.duration=1000"]) == 0
    for name, n in (("task1_train", 1000), ("task1_test", 1000), ("shift", 1750)):
        doc = json.loads((tmp_path / "a" / f"{name}.json").read_text())
        assert len(doc["recordings"]) == n
        assert len(list((tmp_path / "a" / name).glob("*.csv"))) == n
    for name in ("task1_train/00000.csv", "task1_test/00999.csv", "shift/01749.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_train_then_eval_writes_run_directory(tmp_path, capsys):
    assert cli(tmp_path, "train") == 0
    assert cli(tmp_path, "eval") == 0
    d = tmp_path / "runs" / "t"
    for name in ("config.resolved.toml", "checkpoint.json", "train.csv", "eval.csv"):
        assert (d / name).exists()
    header = (d / "eval.csv").read_text().splitlines()[0]
    assert header == "recording_index,label,predicted,event_accuracy,processed_fraction,mean_S"
    assert len((d / "eval.csv").read_text().splitlines()) == 1 + 6


def test_identical_config_gives_identical_outputs(tmp_path):
    for sub in ("a", "b"):
        assert cli(tmp_path / sub, "train") == 0
        assert cli(tmp_path / sub, "eval") == 0
    for name in ("train.csv", "eval.csv", "checkpoint.json"):
        a = (tmp_path / "a" / "runs" / "t" / name).read_bytes()
        assert a == (tmp_path / "b" / "runs" / "t" / name).read_bytes()


def test_ablate_leaves_initial_parameters(tmp_path):
    from sup3r import experiments as ex

    cfg = config.load(overrides=SMALL)
    train_set, _ = ex.task_data(cfg, 1, cfg.seed)
    init = ex.build_network(cfg, train_set, cfg.seed)
    assert cli(tmp_path, "train", "--ablate") == 0
    trained = Network.load(tmp_path / "runs" / "t" / "checkpoint.json")
    for a, b in zip(init.layers, trained.layers):
        assert np.array_equal(a.centroids, b.centroids) and np.array_equal(a.thresholds, b.thresholds)


def test_kmeans_baseline_processes_everything(tmp_path):
    assert cli(tmp_path, "train", "--baseline", "kmeans") == 0
    assert cli(tmp_path, "eval") == 0
    lines = (tmp_path / "runs" / "t" / "eval.csv").read_text().splitlines()[1:]
    assert all(float(l.split(",")[4]) == 1.0 for l in lines)


@pytest.mark.parametrize(
    "argv",
    [
        ["train", "--set", "layers.0.window=4"],
        ["train", "--config", "/nonexistent.toml"],
        ["eval", "--set", "name=never_trained"],
        ["nmnist", "--set", "nmnist.root=/nonexistent"],
    ],
)
def test_errors_exit_nonzero(tmp_path, argv, capsys):
    assert main([*argv, "--runs", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err
