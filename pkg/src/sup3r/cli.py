"""Command-line entry point: ``sup3r <command> [--config FILE] [--set key=value ...]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import experiments as ex
from .learning import Mode
from .network import ConfigError, Network
from .nmnist import EXTENT as NMNIST_EXTENT
from .nmnist import FormatError, load_split
from .synth import Recording, gen_shift_sequence, write_dataset

log = logging.getLogger("sup3r")

CONTINUAL_COLUMNS = [
    "recording_index",
    "shift_step",
    "label",
    "self_mean",
    "self_min",
    "self_max",
    "ablated_mean",
    "ablated_min",
    "ablated_max",
]
RUN_COLUMNS = ["seed", "accuracy", "processed_fraction"]
INCREMENTAL_COLUMNS = ["seed", "task1", "task2", "task1_after_task2", "frozen_unchanged"]


def run_dir(args, cfg) -> Path:
    d = Path(args.runs) / cfg.name
    d.mkdir(parents=True, exist_ok=True)
    config_mod.dump(cfg, d / "config.resolved.toml")
    return d


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_gen(args, cfg) -> int:
    out = Path(args.out)
    sc = ex.synth_config(cfg)
    manifests = {}
    for task in (1, 2):
        train, test = ex.task_data(cfg, task, cfg.seed)
        manifests[f"task{task}_train"] = str(write_dataset(out, f"task{task}_train", train))
        manifests[f"task{task}_test"] = str(write_dataset(out, f"task{task}_test", test))
    c = cfg.continual
    seq = gen_shift_sequence(cfg.seed + 20_000, c.n_steps, c.per_step, c.final_len, sc)
    manifests["shift"] = str(write_dataset(out, "shift", seq))
    _print(manifests)
    return 0


def _load_net(args, d: Path) -> Network:
    path = Path(args.checkpoint) if args.checkpoint else d / "checkpoint.json"
    if not path.exists():
        raise FileNotFoundError(f"no checkpoint at {path}; run `train` first or pass --checkpoint")
    return Network.load(path)


def cmd_train(args, cfg) -> int:
    d = run_dir(args, cfg)
    train_set, _ = ex.task_data(cfg, 1, cfg.seed)
    if args.baseline == "kmeans":
        net, rows = ex.train_kmeans(cfg, train_set, cfg.seed)
    else:
        mode = Mode.ABLATED if args.ablate else ex.MODES[cfg.mode]
        net, rows = ex.train_sup3r(cfg, train_set, cfg.seed, mode)
    net.save(d / "checkpoint.json")
    ex.write_rows(d / "train.csv", rows)
    _print({"run_dir": str(d), **ex.summarize_rows(rows).as_dict()})
    return 0


def cmd_eval(args, cfg) -> int:
    d = run_dir(args, cfg)
    net = _load_net(args, d)
    _, test_set = ex.task_data(cfg, 1, cfg.seed)
    rows, summary = ex.evaluate(net, test_set)
    ex.write_rows(d / "eval.csv", rows)
    _print(summary.as_dict())
    return 0


def _networks(args, cfg):
    """One network per run: the given checkpoint for every run, or a freshly trained one per seed."""
    for i in range(cfg.n_runs):
        seed = cfg.seed + i
        if args.checkpoint:
            yield seed, Network.load(args.checkpoint), None
        else:
            train_set, test_set = ex.task_data(cfg, 1, seed)
            net, _ = ex.train_sup3r(cfg, train_set, seed)
            yield seed, net, test_set


def cmd_classify(args, cfg) -> int:
    d = run_dir(args, cfg)
    rows = {"sup3r": [], "kmeans": []}
    for i in range(cfg.n_runs):
        seed = cfg.seed + i
        res = ex.classification_run(cfg, seed, baseline=not args.no_baseline)
        for key in rows:
            if key in res:
                rows[key].append({"seed": seed, **res[key]})
        log.info("seed %d: %s", seed, {k: res[k] for k in rows if k in res})
    report = {}
    for key, rs in rows.items():
        if rs:
            ex.write_rows(d / f"classify_{key}.csv", rs, RUN_COLUMNS)
            report[key] = {m: _minmeanmax([r[m] for r in rs]) for m in ("accuracy", "processed_fraction")}
    _print(report)
    return 0


def _minmeanmax(v) -> dict:
    v = np.asarray(v, dtype=float)
    return {"mean": float(v.mean()), "min": float(v.min()), "max": float(v.max())}


def cmd_continual(args, cfg) -> int:
    d = run_dir(args, cfg)
    traces = {"self": [], "ablated": []}
    seq_rows = None
    for seed, net, _ in _networks(args, cfg):
        res = ex.continual_run(cfg, net, seed)
        for k in traces:
            traces[k].append([r["event_accuracy"] for r in res[k]])
        seq_rows = res["self"]
    rows = []
    arr = {k: np.array(v) for k, v in traces.items()}
    for i, r in enumerate(seq_rows):
        row = {"recording_index": i, "shift_step": r["shift_step"], "label": r["label"]}
        for k, a in arr.items():
            row[f"{k}_mean"] = float(a[:, i].mean())
            row[f"{k}_min"] = float(a[:, i].min())
            row[f"{k}_max"] = float(a[:, i].max())
        rows.append(row)
    ex.write_rows(d / "continual.csv", rows, CONTINUAL_COLUMNS)
    window = cfg.continual.per_step
    _print({k: _minmeanmax(a[:, -window:].mean(axis=1)) for k, a in arr.items()})
    return 0


def cmd_incremental(args, cfg) -> int:
    d = run_dir(args, cfg)
    rows = []
    for seed, net, test1 in _networks(args, cfg):
        if test1 is None:
            _, test1 = ex.task_data(cfg, 1, seed)
        res = ex.incremental_run(cfg, net, seed, test1)
        rows.append(res)
        res["net"].save(d / f"checkpoint_incremental_{seed}.json")
    ex.write_rows(d / "incremental.csv", rows, INCREMENTAL_COLUMNS)
    _print({k: _minmeanmax([r[k] for r in rows]) for k in ("task1", "task2", "task1_after_task2")})
    return 0 if all(r["frozen_unchanged"] for r in rows) else 1


def cmd_nmnist(args, cfg) -> int:
    nm = cfg.nmnist
    if not nm.root:
        raise ConfigError("nmnist.root: path to the N-MNIST directory (with Train/ and Test/) is required")
    d = run_dir(args, cfg)
    train_set = [Recording(e, l) for e, l in load_split(nm.root, "Train", nm.train_limit, nm.merge_polarities)]
    test_set = [Recording(e, l) for e, l in load_split(nm.root, "Test", nm.test_limit, nm.merge_polarities)]
    n_pol = 1 if nm.merge_polarities else 2
    net = ex.build_network(cfg, train_set, cfg.seed, extent=NMNIST_EXTENT, n_polarities=n_pol, layers=nm.layers)
    rows = ex.train(net, train_set, Mode.SUPERVISED, nm.rates.learning(), nm.epochs, cfg.seed, cfg.train.shuffle)
    net.save(d / "checkpoint.json")
    ex.write_rows(d / "train.csv", rows)
    eval_rows, summary = ex.evaluate(net, test_set)
    ex.write_rows(d / "eval.csv", eval_rows)
    _print(summary.as_dict())
    return 0


COMMANDS = {
    "gen": (cmd_gen, "write synthetic task and shift-sequence datasets"),
    "train": (cmd_train, "train one network on task 1"),
    "eval": (cmd_eval, "evaluate a checkpoint on the task 1 test set"),
    "classify": (cmd_classify, "train and test n_runs networks and the k-means baseline"),
    "continual": (cmd_continual, "label-free adaptation to the shift sequence"),
    "incremental": (cmd_incremental, "add task 2 classes to a task 1 network"),
    "nmnist": (cmd_nmnist, "capped N-MNIST training and evaluation"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config value")
    common.add_argument("--runs", default="runs", help="parent directory for run outputs")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="sup3r", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, parents=[common], help=help_)
        if name == "gen":
            s.add_argument("--out", default="data", help="output directory")
        if name == "train":
            s.add_argument("--baseline", choices=["kmeans"])
            s.add_argument("--ablate", action="store_true", help="run without learning")
        if name in ("eval", "continual", "incremental"):
            s.add_argument("--checkpoint", help="network checkpoint (default: the run directory's)")
        if name == "classify":
            s.add_argument("--no-baseline", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_mod.load(args.config, args.set)
        return COMMANDS[args.command][0](args, cfg)
    except (ConfigError, FormatError, FileNotFoundError, ValueError, OSError) as e:
        print(f"sup3r {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
