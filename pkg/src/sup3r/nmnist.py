"""Reader for N-MNIST ``.bin`` saccade recordings.

Each event is a 40-bit big-endian record::

    byte 0      x address
    byte 1      y address
    byte 2      bit 7 polarity, bits 6-0 timestamp[22:16]
    bytes 3-4   timestamp[15:0]

Timestamps are microseconds.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterator

import numpy as np

log = logging.getLogger(__name__)

EXTENT = (34, 34)
MAX_COORD = 33
SACCADE_SPAN_US = 300_000


class FormatError(ValueError):
    pass


def parse_bin(data: bytes) -> np.ndarray:
    """Decode raw bytes into an ``(n, 4)`` int64 array with columns ``t, y, x, p``."""
    if len(data) % 5:
        raise FormatError(f"{len(data)} bytes is not a whole number of 5-byte records")
    raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, 5).astype(np.int64)
    x = raw[:, 0]
    y = raw[:, 1]
    p = raw[:, 2] >> 7
    t = ((raw[:, 2] & 0x7F) << 16) | (raw[:, 3] << 8) | raw[:, 4]
    if len(raw) and (x.max() > MAX_COORD or y.max() > MAX_COORD):
        raise FormatError(f"address outside 0..{MAX_COORD}")
    ev = np.stack([t, y, x, p], axis=1)
    if len(ev) and np.any(np.diff(t) < 0):
        ev = ev[np.argsort(t, kind="stable")]
    if len(ev) and t.max() - t.min() > 2 * SACCADE_SPAN_US:
        log.warning("recording spans %d us, expected about %d", t.max() - t.min(), SACCADE_SPAN_US)
    return ev


def serialize_bin(events: np.ndarray) -> bytes:
    """Inverse of :func:`parse_bin` for in-range events."""
    ev = np.asarray(events, dtype=np.int64)
    t, y, x, p = ev[:, 0], ev[:, 1], ev[:, 2], ev[:, 3]
    if np.any((x < 0) | (x > MAX_COORD) | (y < 0) | (y > MAX_COORD)):
        raise FormatError("address outside 0..33")
    if np.any((t < 0) | (t >= 1 << 23)) or np.any((p < 0) | (p > 1)):
        raise FormatError("timestamp or polarity out of range")
    raw = np.stack([x, y, (p << 7) | (t >> 16), (t >> 8) & 0xFF, t & 0xFF], axis=1)
    return raw.astype(np.uint8).tobytes()


def read_bin(path: str | Path, merge_polarities: bool = False) -> np.ndarray:
    ev = parse_bin(Path(path).read_bytes())
    if merge_polarities:
        ev[:, 3] = 0
    return ev


def load_split(
    root: str | Path, split: str = "Train", limit: int | None = None, merge_polarities: bool = False
) -> Iterator[tuple[np.ndarray, int]]:
    """Yield ``(events, label)`` for ``root/split/<digit>/*.bin``.

    Classes are visited in order, files in sorted order; ``limit`` caps the
    number of files per class.
    """
    base = Path(root) / split
    dirs = [base / str(c) for c in range(10)]
    for d in dirs:
        if not d.is_dir():
            raise FileNotFoundError(f"missing class directory {d}")
    for label, d in enumerate(dirs):
        files = sorted(d.glob("*.bin"))
        if limit is not None:
            files = files[:limit]
        for f in files:
            yield read_bin(f, merge_polarities), label


def _shift_bilinear(img: np.ndarray, dy: float, dx: float) -> np.ndarray:
    """Translate ``img`` by a sub-pixel offset; pixels shifted in from outside are 0."""
    h, w = img.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    sy, sx = yy - dy, xx - dx
    y0, x0 = np.floor(sy).astype(int), np.floor(sx).astype(int)
    fy, fx = sy - y0, sx - x0
    out = np.zeros_like(img, dtype=np.float64)
    for oy, ox, wgt in ((0, 0, (1 - fy) * (1 - fx)), (1, 0, fy * (1 - fx)), (0, 1, (1 - fy) * fx), (1, 1, fy * fx)):
        ys, xs = y0 + oy, x0 + ox
        ok = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
        out[ok] += wgt[ok] * img[ys[ok], xs[ok]]
    return out


def simulate_saccades(
    image: np.ndarray,
    seed=None,
    contrast: float = 0.15,
    saccade_us: int = 100_000,
    steps: int = 20,
    amplitude: float = 2.0,
) -> np.ndarray:
    """Events of a sensor making three triangular micro-saccades over a still image.

    A stand-in for N-MNIST recordings when the real dataset is unavailable.
    ``image`` (values in [0, 1], at most 30x30) is centred on the 34x34 array;
    each time step emits ``|dI| / contrast`` events per pixel (stochastically
    rounded) with polarity 1 for brightening. Returns ``t, y, x, p`` rows.
    """
    rng = np.random.default_rng(seed)
    h, w = image.shape
    if h > EXTENT[0] - 4 or w > EXTENT[1] - 4:
        raise ValueError(f"image {image.shape} too large for the {EXTENT} sensor")
    canvas = np.zeros(EXTENT)
    top, left = (EXTENT[0] - h) // 2, (EXTENT[1] - w) // 2
    canvas[top : top + h, left : left + w] = np.clip(image, 0.0, 1.0)
    corners = np.array([(0.0, 0.0), (amplitude, amplitude / 2), (0.0, amplitude), (0.0, 0.0)])
    step_us = saccade_us // steps
    prev = canvas
    chunks = []
    for s in range(3):
        for i in range(1, steps + 1):
            dy, dx = corners[s] + (corners[s + 1] - corners[s]) * i / steps
            cur = _shift_bilinear(canvas, dy, dx)
            diff = cur - prev
            n = np.floor(np.abs(diff) / contrast + rng.random(diff.shape)).astype(int)
            ys, xs = np.nonzero(n)
            reps = n[ys, xs]
            y, x = np.repeat(ys, reps), np.repeat(xs, reps)
            p = (diff[y, x] > 0).astype(np.int64)
            t0 = (s * steps + i - 1) * step_us
            t = t0 + rng.integers(0, step_us, size=len(y))
            chunks.append(np.stack([t, y, x, p], axis=1))
            prev = cur
    ev = np.concatenate(chunks).astype(np.int64)
    return ev[np.argsort(ev[:, 0], kind="stable")]


def write_split(root: str | Path, split: str, recordings, start_index: int = 0) -> None:
    """Write ``(events, label)`` pairs as ``root/split/<label>/<n>.bin``."""
    for i, (events, label) in enumerate(recordings, start=start_index):
        d = Path(root) / split / str(int(label))
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{i:05d}.bin").write_bytes(serialize_bin(events))


def write_standin(root: str | Path, images: np.ndarray, labels, train_per_class: int, upscale: int = 3, seed: int = 0) -> tuple[int, int]:
    """Turn labelled still images into an N-MNIST-shaped ``Train``/``Test`` tree.

    The first ``train_per_class`` images of each class go to ``Train``, the
    rest to ``Test``. Images are scaled to [0, 1] by their maximum and
    enlarged ``upscale`` times. Returns the two split sizes.
    """
    images = np.asarray(images, dtype=np.float64)
    images = images / images.max()
    kernel = np.ones((upscale, upscale))
    seen: dict[int, int] = {}
    splits: dict[str, list] = {"Train": [], "Test": []}
    for i, (img, label) in enumerate(zip(images, labels)):
        label = int(label)
        ev = simulate_saccades(np.kron(img, kernel), seed=[seed, i])
        split = "Train" if seen.get(label, 0) < train_per_class else "Test"
        splits[split].append((ev, label))
        seen[label] = seen.get(label, 0) + 1
    for split, recs in splits.items():
        write_split(root, split, recs)
    return len(splits["Train"]), len(splits["Test"])
