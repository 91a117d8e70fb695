"""Events, last-timestamp memories and exponential-decay time surfaces.

Coordinates are tuples of non-negative ints: ``(y, x)`` for a 2-D sensor,
``(ch,)`` for channel data. Timestamps are integer microseconds. Stores keep
the last timestamp per (coordinate, polarity) in a dense int64 array with
``UNSET`` marking cells that never received an event; unset cells decay to 0.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

UNSET = -1


class Event(NamedTuple):
    t: int
    x: tuple[int, ...]
    p: int = 0


class EventRangeError(ValueError):
    """Event coordinate or polarity outside the declared store bounds."""


class TimestampStore:
    """Last event timestamp for every (coordinate, polarity) cell.

    ``cells`` has shape ``(*extent, n_polarities)``.
    """

    def __init__(self, extent: Sequence[int], n_polarities: int):
        self.extent = tuple(int(e) for e in extent)
        self.n_polarities = int(n_polarities)
        if not self.extent or any(e < 1 for e in self.extent) or self.n_polarities < 1:
            raise ValueError(f"bad store shape {self.extent} x {self.n_polarities}")
        self.cells = np.full(self.extent + (self.n_polarities,), UNSET, dtype=np.int64)

    def check(self, ev: Event) -> None:
        if len(ev.x) != len(self.extent):
            raise EventRangeError(f"event has {len(ev.x)} coordinates, store has {len(self.extent)}")
        for c, e in zip(ev.x, self.extent):
            if not 0 <= c < e:
                raise EventRangeError(f"coordinate {tuple(ev.x)} outside extent {self.extent}")
        if not 0 <= ev.p < self.n_polarities:
            raise EventRangeError(f"polarity {ev.p} outside [0, {self.n_polarities})")
        if ev.t < 0:
            raise EventRangeError(f"negative timestamp {ev.t}")

    def record(self, ev: Event) -> None:
        self.check(ev)
        self.cells[tuple(ev.x) + (ev.p,)] = ev.t

    def clear(self) -> None:
        self.cells.fill(UNSET)

    def cell(self, x: Sequence[int], p: int) -> int:
        return int(self.cells[tuple(x) + (p,)])


class FeedbackStore(TimestampStore):
    """Last output time of every centroid of a layer.

    With ``extent=None`` (last layer) there is one cell per output polarity and
    no spatial index; otherwise it mirrors :class:`TimestampStore`.
    """

    def __init__(self, extent: Sequence[int] | None, n_polarities: int):
        self.spatial = extent is not None
        super().__init__(extent if self.spatial else (1,), n_polarities)

    def record(self, ev: Event) -> None:
        if not self.spatial:
            ev = ev._replace(x=(0,))
        super().record(ev)

    def check(self, ev: Event) -> None:
        if not self.spatial:
            ev = ev._replace(x=(0,))
        super().check(ev)


def record_event(store: TimestampStore, ev: Event) -> TimestampStore:
    store.record(ev)
    return store


def _decay(cells: np.ndarray, t: int, tau: float) -> np.ndarray:
    dt = (t - cells).astype(np.float64)
    out = np.exp(-dt / tau)
    out[cells == UNSET] = 0.0
    return out


def local_time_surface(store: TimestampStore, ev: Event, l: int, tau: float) -> np.ndarray:
    """Time surface over the ``l``-wide window centred on ``ev.x``.

    Returns a flat vector laid out as ``(l, ..., l, n_polarities)`` in C order.
    Window cells outside the store extent are 0.
    """
    if l < 1 or l % 2 == 0:
        raise ValueError(f"window size must be odd, got {l}")
    h = l // 2
    nd = len(store.extent)
    padded = np.full(tuple(e + 2 * h for e in store.extent) + (store.n_polarities,), UNSET, dtype=np.int64)
    padded[tuple(slice(h, h + e) for e in store.extent)] = store.cells
    window = padded[tuple(slice(c, c + l) for c in ev.x)]
    assert window.shape[:nd] == (l,) * nd
    return _decay(window, ev.t, tau).ravel()


def tile_index(x: Sequence[int], l: int) -> tuple[int, ...]:
    return tuple(int(c) // l for c in x)


def tile_time_surface(store: TimestampStore, ev: Event, l: int, tau: float) -> np.ndarray:
    """Time surface over the non-overlapping ``l``-wide tile that holds ``ev.x``.

    Same layout as :func:`local_time_surface`; tile cells past the extent are 0.
    """
    if l < 1:
        raise ValueError(f"tile size must be positive, got {l}")
    nd = len(store.extent)
    padded_ext = tuple(-(-e // l) * l for e in store.extent)
    padded = np.full(padded_ext + (store.n_polarities,), UNSET, dtype=np.int64)
    padded[tuple(slice(0, e) for e in store.extent)] = store.cells
    start = [i * l for i in tile_index(ev.x, l)]
    window = padded[tuple(slice(s, s + l) for s in start)]
    assert window.shape[:nd] == (l,) * nd
    return _decay(window, ev.t, tau).ravel()


def global_time_vector(store: TimestampStore, ev: Event, tau: float) -> np.ndarray:
    """Time vector over the whole extent, laid out as ``(*extent, n_polarities)``."""
    return _decay(store.cells, ev.t, tau).ravel()


def feedback_time_vector(fstore: FeedbackStore, ev_out: Event, f_tau: float) -> np.ndarray:
    """Decayed last-output times of all centroids, read at ``ev_out``'s location."""
    x = tuple(ev_out.x) if fstore.spatial else (0,)
    return _decay(fstore.cells[x], ev_out.t, f_tau)


def to_arrays(events: Sequence[Event]) -> np.ndarray:
    """Pack events into an ``(n, 2 + ndim)`` int64 array with columns ``t, *x, p``."""
    if len(events) == 0:
        return np.zeros((0, 4), dtype=np.int64)
    return np.array([(e.t, *e.x, e.p) for e in events], dtype=np.int64)


def from_arrays(arr: np.ndarray) -> list[Event]:
    return [Event(int(r[0]), tuple(int(c) for c in r[1:-1]), int(r[-1])) for r in arr]


def write_csv(path: str | Path, events: np.ndarray | Iterable[Event]) -> None:
    """Write 2-D events as ``t,x,y,p`` rows. ``events`` uses ``t, y, x, p`` columns."""
    arr = events if isinstance(events, np.ndarray) else to_arrays(list(events))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "p"])
        for t, y, x, p in arr.tolist():
            w.writerow([t, x, y, p])


def read_csv(path: str | Path) -> np.ndarray:
    """Read a ``t,x,y,p`` CSV back into a ``t, y, x, p`` int64 array."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != ["t", "x", "y", "p"]:
            raise ValueError(f"{path}: expected header t,x,y,p, got {header}")
        rows = [(int(t), int(y), int(x), int(p)) for t, x, y, p in r]
    arr = np.array(rows, dtype=np.int64).reshape(-1, 4)
    if np.any(np.diff(arr[:, 0]) < 0):
        raise ValueError(f"{path}: timestamps are not sorted")
    return arr
