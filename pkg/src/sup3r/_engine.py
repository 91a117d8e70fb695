"""Compiled per-recording loop.

Mirrors ``network.forward_event`` and ``learning.train_on_event`` event by
event; the pure-numpy path in those modules is the reference it is tested
against. Coordinates are promoted to 2-D: a 1-D extent ``(W,)`` runs as
``(1, W)`` with a window of height 1.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from numba.typed import List

SUPERVISED, SELF, ABLATED = 0, 1, 2

# Global layers wider than this compute surfaces and distances over recently
# written cells only; cells older than SPARSE_CUTOFF_TAUS time constants count as 0.
SPARSE_MIN_DIM = 2048
SPARSE_CUTOFF_TAUS = 40.0


@njit(cache=True)
def _surface(cells, t, y, x, hh, hw, tau, out):
    H, W, P = cells.shape
    if hw < 0:
        i = 0
        for yy in range(H):
            for xx in range(W):
                for p in range(P):
                    c = cells[yy, xx, p]
                    out[i] = 0.0 if c < 0 else np.exp(-(t - c) / tau)
                    i += 1
        return
    i = 0
    for dy in range(-hh, hh + 1):
        yy = y + dy
        for dx in range(-hw, hw + 1):
            xx = x + dx
            inside = 0 <= yy < H and 0 <= xx < W
            for p in range(P):
                if inside:
                    c = cells[yy, xx, p]
                    out[i] = 0.0 if c < 0 else np.exp(-(t - c) / tau)
                else:
                    out[i] = 0.0
                i += 1


@njit(cache=True)
def _tile_surface(cells, t, ty, tx, wh, ww, tau, out):
    H, W, P = cells.shape
    i = 0
    for yy in range(ty * wh, ty * wh + wh):
        for xx in range(tx * ww, tx * ww + ww):
            inside = yy < H and xx < W
            for p in range(P):
                if inside:
                    c = cells[yy, xx, p]
                    out[i] = 0.0 if c < 0 else np.exp(-(t - c) / tau)
                else:
                    out[i] = 0.0
                i += 1


@njit(cache=True)
def _sparse_global(cells, t, tau, cutoff, log_idx, log_t, n_log, stamp, act, n_act, ts, mark):
    """Refresh ``ts`` from cells written within ``cutoff`` us; returns the active count.

    Older cells are left at 0; their true value is below exp(-cutoff / tau).
    """
    for i in range(n_act):
        ts[act[i]] = 0.0
    flat = cells.reshape(-1)
    m = 0
    j = n_log - 1
    while j >= 0 and t - log_t[j] <= cutoff:
        idx = log_idx[j]
        if stamp[idx] != mark:
            stamp[idx] = mark
            ts[idx] = np.exp(-(t - flat[idx]) / tau)
            act[m] = idx
            m += 1
        j -= 1
    return m


@njit(cache=True)
def _sparse_distances(ts, cents, cnorm2, act, n_act, out):
    N = cents.shape[0]
    for n in range(N):
        s = cnorm2[n]
        for i in range(n_act):
            j = act[i]
            v = ts[j] - cents[n, j]
            s += v * v - cents[n, j] * cents[n, j]
        out[n] = np.sqrt(max(s, 0.0))


@njit(cache=True)
def _row_norm2(c, n):
    s = 0.0
    for j in range(c.shape[1]):
        s += c[n, j] * c[n, j]
    return s


@njit(cache=True)
def _distances(ts, cents, out):
    N, D = cents.shape
    for n in range(N):
        s = 0.0
        for j in range(D):
            v = ts[j] - cents[n, j]
            s += v * v
        out[n] = np.sqrt(s)


@njit(cache=True)
def run_recording(
    events,  # (n, 4) int64: t, y, x, p
    label,
    cents,
    ths,
    frozen,
    halves,  # (K, 2) int64; hw < 0 marks the global layer
    tiled,  # (K,) bool; tiled layers read the tile holding the event and emit its index
    taus,
    ftaus,
    ds,
    in_cells,
    fb_cells,
    s_prev,
    drivers,
    mode,
    rates,  # alpha, beta, gamma, delta
    eta,
    kmeans,
    th_floor,
    ts_bufs,
    dist_bufs,
    out_counts,
    stats,  # n_out, sum_S_top
    sparse_top,  # last layer uses the sparse global path
    cutoff,
    log_idx,
    log_t,
    stamp,
    act,
):
    K = len(cents)
    top_c = cents[K - 1]
    cnorm2 = np.zeros(top_c.shape[0])
    if sparse_top:
        for n in range(top_c.shape[0]):
            cnorm2[n] = _row_norm2(top_c, n)
        stamp[:] = -1
        ts_bufs[K - 1][:] = 0.0
    n_log = 0
    n_act = 0
    alpha, beta, gamma, delta = rates[0], rates[1], rates[2], rates[3]
    learn = mode != ABLATED
    fired_idx = np.zeros(K, dtype=np.int64)
    S = np.zeros(K)
    dS = np.zeros(K)
    for i in range(events.shape[0]):
        t = events[i, 0]
        y = events[i, 1]
        x = events[i, 2]
        p = events[i, 3]
        reached = True
        for k in range(K):
            in_cells[k][y, x, p] = t
            ts = ts_bufs[k]
            dist = dist_bufs[k]
            if sparse_top and k == K - 1:
                H, W, P = in_cells[k].shape
                log_idx[n_log] = (y * W + x) * P + p
                log_t[n_log] = t
                n_log += 1
                n_act = _sparse_global(in_cells[k], t, taus[k], cutoff, log_idx, log_t, n_log, stamp, act, n_act, ts, i)
                _sparse_distances(ts, cents[k], cnorm2, act, n_act, dist)
            elif tiled[k]:
                wh = 2 * halves[k, 0] + 1
                ww = 2 * halves[k, 1] + 1
                y = y // wh
                x = x // ww
                _tile_surface(in_cells[k], t, y, x, wh, ww, taus[k], ts)
                _distances(ts, cents[k], dist)
            else:
                _surface(in_cells[k], t, y, x, halves[k, 0], halves[k, 1], taus[k], ts)
                _distances(ts, cents[k], dist)
            f = 0
            for n in range(1, dist.shape[0]):
                if dist[n] < dist[f]:
                    f = n
            if not (kmeans or dist[f] < ths[k][f]):
                reached = False
                break
            if k == K - 1:
                fb_cells[k][0, 0, f] = t
            else:
                fb_cells[k][y, x, f] = t
            fired_idx[k] = f
            p = f
        if not reached:
            continue
        top = fired_idx[K - 1]
        out_counts[top] += 1
        stats[0] += 1.0
        if kmeans:
            if learn:
                for k in range(K):
                    f = fired_idx[k]
                    if frozen[k][f]:
                        continue
                    c = cents[k]
                    ts = ts_bufs[k]
                    for j in range(c.shape[1]):
                        c[f, j] += eta * (ts[j] - c[f, j])
                    if sparse_top and k == K - 1:
                        cnorm2[f] = _row_norm2(c, f)
            continue
        if mode == SUPERVISED:
            G = 1.0 if top == label else -1.0
        else:
            G = 1.0
        for k in range(K):
            N = cents[k].shape[0]
            if N < 2:
                continue
            f = fired_idx[k]
            if k == K - 1:
                fb = fb_cells[k][0, 0]
            else:
                fb = fb_cells[k][y, x]
            others = 0.0
            for n in range(N):
                if n != f and fb[n] >= 0:
                    others += np.exp(-(t - fb[n]) / ftaus[k])
            own = np.exp(-(t - fb[f]) / ftaus[k])
            S[k] = G * (own - others / (N - 1))
            dS[k] = S[k] - s_prev[k]
            s_prev[k] = S[k]
        stats[1] += S[K - 1]
        if not learn:
            continue
        for k in range(K):
            f = fired_idx[k]
            if frozen[k][f]:
                continue
            s = S[drivers[k]]
            dsv = dS[drivers[k]]
            c = cents[k]
            ts = ts_bufs[k]
            th = ths[k]
            qn = dist_bufs[k][f]
            coef = alpha * dsv + beta * s
            for j in range(c.shape[1]):
                v = c[f, j] + coef * (ts[j] - c[f, j])
                c[f, j] = min(max(v, 0.0), 1.0)
            if sparse_top and k == K - 1:
                cnorm2[f] = _row_norm2(c, f)
            tcoef = gamma * dsv + delta * s
            th[f] = max(th[f] + tcoef * np.exp(-qn / ds[k]), th_floor)
            if dsv > 0.0 and s > 0.0:
                dist = dist_bufs[k]
                for n in range(dist.shape[0]):
                    if n != f and not frozen[k][n] and dist[n] < th[n]:
                        th[n] = max(th[n] - tcoef * np.exp(-dist[n] / ds[k]), th_floor)


class Packed:
    """Typed-list views over a Network's arrays for the compiled loop.

    The lists alias the network's own arrays, so updates land in place.
    """

    def __init__(self, net):
        self.net = net
        K = len(net.layers)
        self.cents = List([layer.centroids for layer in net.layers])
        self.ths = List([layer.thresholds for layer in net.layers])
        self.frozen = List([layer.frozen for layer in net.layers])
        halves = np.zeros((K, 2), dtype=np.int64)
        two_d = len(net.extent) == 2
        for k, layer in enumerate(net.layers):
            w = layer.config.window
            if w is None:
                halves[k] = (-1, -1)
            else:
                halves[k] = (w // 2 if two_d else 0, w // 2)
        self.halves = halves
        self.tiled = np.array([l.config.stride == "tile" for l in net.layers], dtype=np.bool_)
        self.taus = np.array([l.config.tau for l in net.layers], dtype=np.float64)
        self.ftaus = np.array([l.config.f_tau for l in net.layers], dtype=np.float64)
        self.ds = np.array([l.d for l in net.layers], dtype=np.float64)
        self.drivers = np.array(net.drivers(), dtype=np.int64)
        def as3d(cells):
            return cells if two_d else cells.reshape(1, *cells.shape)

        self.in_cells = List([as3d(s.cells) for s in net.in_stores])
        self.fb_cells = List([as3d(s.cells) if s.spatial else s.cells.reshape(1, 1, -1) for s in net.fb_stores])
        self.ts_bufs = List([np.zeros(l.dim) for l in net.layers])
        self.dist_bufs = List([np.zeros(l.n_clusters) for l in net.layers])
        top = net.layers[-1]
        self.sparse_top = top.is_global and top.dim > SPARSE_MIN_DIM
        self.cutoff = SPARSE_CUTOFF_TAUS * top.config.tau
        self.stamp = np.full(top.dim if self.sparse_top else 1, -1, dtype=np.int64)
        self.act = np.zeros(top.dim if self.sparse_top else 1, dtype=np.int64)

    def run(self, events, label, mode, rates, eta=0.0, kmeans=False):
        """Process one recording (state is not reset here). Returns (counts, n_out, sum_S)."""
        counts = np.zeros(self.net.n_classes, dtype=np.int64)
        stats = np.zeros(2)
        events = np.ascontiguousarray(events, dtype=np.int64)
        if events.shape[1] == 3:
            events = np.insert(events, 1, 0, axis=1)
        n_log = len(events) if self.sparse_top else 1
        log_idx = np.zeros(n_log, dtype=np.int64)
        log_t = np.zeros(n_log, dtype=np.int64)
        run_recording(
            events,
            -1 if label is None else int(label),
            self.cents,
            self.ths,
            self.frozen,
            self.halves,
            self.tiled,
            self.taus,
            self.ftaus,
            self.ds,
            self.in_cells,
            self.fb_cells,
            self.net.s_prev,
            self.drivers,
            int(mode),
            np.asarray(rates, dtype=np.float64),
            float(eta),
            bool(kmeans),
            float(self.net.th_floor),
            self.ts_bufs,
            self.dist_bufs,
            counts,
            stats,
            self.sparse_top,
            self.cutoff,
            log_idx,
            log_t,
            self.stamp,
            self.act,
        )
        return counts, int(stats[0]), float(stats[1])
