"""Poisson "sentence" benchmark.

A sentence is six 5x5 glyphs on a 5x30 lattice: word one in columns 0-14,
word two in columns 15-29. Lit pixels fire at ``hi`` Hz, the rest at ``lo`` Hz.
Events come out as an ``(n, 4)`` int64 array with columns ``t, y, x, p``
(t in microseconds, p always 0).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .events import read_csv, write_csv

GLYPH_ART = {
    "v": ["#...#", "#...#", ".#.#.", ".#.#.", "..#.."],
    "/": ["....#", "...#.", "..#..", ".#...", "#...."],
    "x": ["#...#", ".#.#.", "..#..", ".#.#.", "#...#"],
    "y": ["#...#", ".#.#.", "..#..", "..#..", "..#.."],
    "t": ["#####", "..#..", "..#..", "..#..", "..#.."],
    "p": ["####.", "#...#", "####.", "#....", "#...."],
    "o": [".###.", "#...#", "#...#", "#...#", ".###."],
}

GLYPHS = {k: np.array([[c == "#" for c in row] for row in art]) for k, art in GLYPH_ART.items()}

TASKS = {
    1: ["v/v yty", "vxv yty"],
    2: ["vpv yty", "vov yty"],
}

US_PER_S = 1_000_000


@dataclass
class Recording:
    events: np.ndarray
    label: int
    duration: int = 10_000
    meta: dict = field(default_factory=dict)


def layout(sentence: str, rows: int = 5) -> list[tuple[str, int, int]]:
    """(glyph, top, left) placements. ``rows=10`` stacks the words instead."""
    words = sentence.split()
    if len(words) != 2 or any(len(w) != 3 for w in words):
        raise ValueError(f"a sentence is two three-glyph words, got {sentence!r}")
    out = []
    for w, word in enumerate(words):
        for g, name in enumerate(word):
            if rows == 5:
                out.append((name, 0, 15 * w + 5 * g))
            elif rows == 10:
                out.append((name, 5 * w, 5 * g))
            else:
                raise ValueError(f"layout must have 5 or 10 rows, got {rows}")
    return out


def render_sentence(
    sentence: str,
    glyphs: dict[str, np.ndarray] = GLYPHS,
    hi: float = 1000.0,
    lo: float = 50.0,
    rows: int = 5,
) -> np.ndarray:
    """Rate map in Hz. Glyph names may be overridden through ``glyphs``."""
    if not hi > lo >= 0:
        raise ValueError(f"need hi > lo >= 0, got hi={hi}, lo={lo}")
    shape = (5, 30) if rows == 5 else (10, 15)
    lit = np.zeros(shape, dtype=bool)
    for name, top, left in layout(sentence, rows):
        lit[top : top + 5, left : left + 5] |= glyphs[name]
    return np.where(lit, hi, lo).astype(np.float64)


def poisson_spikes(rmap: np.ndarray, duration: int, seed=None) -> np.ndarray:
    """Independent homogeneous Poisson process per pixel, merged in time order."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(seed)
    counts = rng.poisson(rmap * duration / US_PER_S)
    n = int(counts.sum())
    ys, xs = np.nonzero(counts)
    reps = counts[ys, xs]
    y = np.repeat(ys, reps)
    x = np.repeat(xs, reps)
    t = rng.integers(0, duration, size=n)
    order = np.argsort(t, kind="stable")
    ev = np.zeros((n, 4), dtype=np.int64)
    ev[:, 0] = t[order]
    ev[:, 1] = y[order]
    ev[:, 2] = x[order]
    return ev


@dataclass
class SynthConfig:
    hi: float = 1000.0
    lo: float = 50.0
    duration: int = 10_000
    rows: int = 5
    glyphs: dict = field(default_factory=lambda: dict(GLYPH_ART))

    def bitmaps(self) -> dict[str, np.ndarray]:
        return {k: np.array([[c == "#" for c in row] for row in art]) for k, art in self.glyphs.items()}

    @property
    def extent(self) -> tuple[int, int]:
        return (5, 30) if self.rows == 5 else (10, 15)


def gen_task(task_id: int, n_per_class: int, seed: int, cfg: SynthConfig | None = None) -> list[Recording]:
    """Balanced, interleaved recordings of one task.

    Task 1 labels its sentences 0 and 1, task 2 labels them 2 and 3.
    """
    cfg = cfg or SynthConfig()
    sentences = TASKS[task_id]
    base_label = 2 * (task_id - 1)
    bitmaps = cfg.bitmaps()
    maps = [render_sentence(s, bitmaps, cfg.hi, cfg.lo, cfg.rows) for s in sentences]
    seeds = np.random.SeedSequence([seed, task_id]).spawn(n_per_class * len(sentences))
    recs = []
    for i in range(n_per_class):
        for c, rmap in enumerate(maps):
            ev = poisson_spikes(rmap, cfg.duration, seeds[i * len(maps) + c])
            recs.append(Recording(ev, base_label + c, cfg.duration, {"task": task_id, "sentence": sentences[c]}))
    return recs


def morph_order(a: np.ndarray, b: np.ndarray) -> list[tuple[int, int]]:
    """Pixels lit in ``a`` but not ``b``, in raster order."""
    return [tuple(int(v) for v in p) for p in np.argwhere(a & ~b)]


def morph_glyphs(bitmaps: dict[str, np.ndarray], n_moved: int, src: str = "x", dst: str = "/") -> dict:
    """Move ``n_moved`` pixels of the ``src``/``dst`` difference from ``src`` to ``dst``.

    Moving all of them swaps the two glyphs when ``dst`` is a subset of ``src``.
    """
    diff = morph_order(bitmaps[src], bitmaps[dst])
    if n_moved > len(diff):
        raise ValueError(f"cannot move {n_moved} pixels, glyphs differ in {len(diff)}")
    out = dict(bitmaps)
    s, d = bitmaps[src].copy(), bitmaps[dst].copy()
    for y, x in diff[:n_moved]:
        s[y, x] = False
        d[y, x] = True
    if n_moved == len(diff):
        # full swap also covers pixels lit only in dst
        s, d = bitmaps[dst].copy(), bitmaps[src].copy()
    out[src], out[dst] = s, d
    return out


def gen_shift_sequence(
    seed: int,
    n_steps: int = 3,
    per_step: int = 250,
    final_len: int = 1000,
    cfg: SynthConfig | None = None,
) -> list[Recording]:
    """Task-1 test stream whose 'x' and '/' glyphs morph into each other.

    Intermediate step k (1..n_steps) moves k differing pixels for ``per_step``
    recordings; the final step swaps the glyphs for ``final_len`` recordings.
    Labels follow the sentence, not its appearance.
    """
    cfg = cfg or SynthConfig()
    base = cfg.bitmaps()
    n_diff = len(morph_order(base["x"], base["/"]))
    if n_steps >= n_diff:
        raise ValueError(f"{n_steps} intermediate steps need more than {n_diff} differing pixels")
    plan = [(k, k, per_step) for k in range(1, n_steps + 1)] + [(n_steps + 1, n_diff, final_len)]
    rng = np.random.default_rng([seed, 7])
    ss = np.random.SeedSequence([seed, 99])
    recs = []
    for step, moved, length in plan:
        bitmaps = morph_glyphs(base, moved)
        maps = [render_sentence(s, bitmaps, cfg.hi, cfg.lo, cfg.rows) for s in TASKS[1]]
        labels = rng.integers(0, 2, size=length)
        for lab, child in zip(labels, ss.spawn(length)):
            ev = poisson_spikes(maps[lab], cfg.duration, child)
            recs.append(Recording(ev, int(lab), cfg.duration, {"task": 1, "shift_step": step, "moved": moved}))
    return recs


def write_dataset(root: str | Path, name: str, recs: Sequence[Recording]) -> Path:
    """Write each recording as CSV plus a JSON manifest; returns the manifest path."""
    root = Path(root)
    (root / name).mkdir(parents=True, exist_ok=True)
    entries = []
    for i, r in enumerate(recs):
        rel = f"{name}/{i:05d}.csv"
        write_csv(root / rel, r.events)
        entries.append({"file": rel, "label": r.label, "task": r.meta.get("task"), "shift_step": r.meta.get("shift_step", 0)})
    manifest = root / f"{name}.json"
    manifest.write_text(json.dumps({"recordings": entries}, indent=1))
    return manifest


def read_dataset(manifest: str | Path) -> list[Recording]:
    manifest = Path(manifest)
    doc = json.loads(manifest.read_text())
    return [
        Recording(read_csv(manifest.parent / e["file"]), e["label"], meta={"task": e["task"], "shift_step": e["shift_step"]})
        for e in doc["recordings"]
    ]
