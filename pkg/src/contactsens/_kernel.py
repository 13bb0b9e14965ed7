"""Compiled event loop for a monotone pair of contact processes.

The kernel evolves two nested configurations ``lo <= up`` under the coupled
five-clock dynamics: deaths (rate 1) hit both copies, base arrows (rate
``lam1``) infect in both copies, extra arrows (rate ``lam2 - lam1``) infect in
``up`` only.  A single process is the case ``lo == up`` and ``lam1 == lam2``;
the initial-condition coupling is ``lo != up`` with ``lam1 == lam2``.

Only transitions that change at least one copy are enumerated (jump-chain
form), so the cost per step does not grow with the number of arrows that
land on already infected sites.

Sites live in a dense window of ``W`` cells.  On the line, cell ``i`` is
coordinate ``i - W // 2``; on a ring of ``N`` sites the window is the ring
itself and cell ``i`` is coordinate ``i - N // 2``.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from .rng import STREAM_INITIAL, nb_derive_key3, nb_uniform

OK = 0
OVERFLOW = 1

# observation columns returned by the batch drivers
COL_EXT_LO = 0
COL_EXT_UP = 1
COL_EVENTS = 2
COL_VIOLATIONS = 3
COL_STATUS = 4
N_STAT = 5


def make_workspace(width: int):
    """Allocate the arrays used by ``evolve`` for a window of ``width`` cells."""
    lo = np.zeros(width, dtype=np.uint8)
    up = np.zeros(width, dtype=np.uint8)
    dlist = np.empty(width, dtype=np.int64)
    dpos = np.full(width, -1, dtype=np.int64)
    tlist = np.empty(2 * width, dtype=np.int64)
    tpos = np.full(2 * width, -1, dtype=np.int64)
    slist = np.empty(2 * width, dtype=np.int64)
    spos = np.full(2 * width, -1, dtype=np.int64)
    # counts: n_up, n_lo, n_t, n_s
    counts = np.zeros(4, dtype=np.int64)
    return lo, up, dlist, dpos, tlist, tpos, slist, spos, counts


@nb.njit(cache=True, inline="always")
def _nbr(i, d, width, ring):
    # d == 0: right neighbour, d == 1: left neighbour
    if d == 0:
        j = i + 1
        if ring and j == width:
            j = 0
    else:
        j = i - 1
        if ring and j < 0:
            j = width - 1
    return j


@nb.njit(cache=True)
def clear(lo, up, dlist, dpos, tlist, tpos, slist, spos, counts):
    """Reset a workspace touched by a previous replica in O(active) time."""
    for k in range(counts[0]):
        i = dlist[k]
        up[i] = 0
        lo[i] = 0
        dpos[i] = -1
    for k in range(counts[2]):
        tpos[tlist[k]] = -1
    for k in range(counts[3]):
        spos[slist[k]] = -1
    counts[:] = 0


@nb.njit(cache=True)
def evolve(lo, up, dlist, dpos, tlist, tpos, slist, spos, counts,
           init_lo, init_up, lam1, lam2, horizon, ring, state, check, stats):
    """Load ``(init_lo, init_up)`` into a clear workspace and run it to ``horizon``.

    ``stats`` receives extinction times of both copies (``inf`` when alive at
    the horizon), the number of applied events, the number of domination
    violations found, and a status code (``OVERFLOW`` when an infection reached
    the edge of a line window; the caller must re-run with a wider window).
    ``check`` is 1 for the local test at the changed site, 2 for a scan of the
    whole window after every event.
    """
    # Helpers are expanded by hand: nested jitted calls that take the
    # workspace arrays cost ~20x the event itself.
    width = up.shape[0]
    extra = lam2 - lam1
    use_s = extra > 0.0
    now = 0.0
    events = 0
    bad = 0
    for i in init_up:
        up[i] = 1
    for i in init_lo:
        lo[i] = 1
        counts[1] += 1
    n_init = init_up.shape[0]
    stats[COL_EXT_LO] = np.inf if counts[1] > 0 else 0.0
    stats[COL_EXT_UP] = np.inf if n_init > 0 else 0.0
    stats[COL_STATUS] = OK
    qi = 0
    while True:
        if qi < n_init:
            y = init_up[qi]
            qi += 1
        else:
            if counts[0] == 0:
                break
            n_up = counts[0]
            n_t = counts[2] if lam1 > 0.0 else 0
            n_s = counts[3] if use_s else 0
            base = lam1 * n_t
            total = n_up + base + extra * n_s
            now += -math.log(nb_uniform(state)) / total
            if now > horizon:
                break
            x = (1.0 - nb_uniform(state)) * total
            if x < n_up or n_t + n_s == 0:
                y = dlist[min(int(x), n_up - 1)]
                up[y] = 0
                if lo[y] == 1:
                    lo[y] = 0
                    counts[1] -= 1
            else:
                x -= n_up
                if n_t > 0 and (x < base or n_s == 0):
                    pid = tlist[min(int(x / lam1), n_t - 1)]
                    i = pid >> 1
                    y = _nbr(i, pid & 1, width, ring)
                    if up[i] == 1 and up[y] == 0:
                        up[y] = 1
                    if lo[i] == 1 and lo[y] == 0:
                        lo[y] = 1
                        counts[1] += 1
                else:
                    pid = slist[min(int((x - base) / extra), n_s - 1)]
                    y = _nbr(pid >> 1, pid & 1, width, ring)
                    up[y] = 1
            events += 1
            if check == 2:
                for c in range(width):
                    if lo[c] > up[c]:
                        bad += 1
            elif lo[y] > up[y]:
                bad += 1
            if counts[1] == 0 and stats[COL_EXT_LO] == np.inf:
                stats[COL_EXT_LO] = now

        # membership of y in the infected list
        p = dpos[y]
        if up[y] == 1:
            if p < 0:
                m = counts[0]
                dlist[m] = y
                dpos[y] = m
                counts[0] = m + 1
        elif p >= 0:
            m = counts[0] - 1
            last = dlist[m]
            dlist[p] = last
            dpos[last] = p
            dpos[y] = -1
            counts[0] = m
        # the four directed pairs touching y: y->right, y->left, left->y, right->y
        for q in range(4):
            if q < 2:
                pid = 2 * y + q
            elif q == 2:
                src = _nbr(y, 1, width, ring)
                if src < 0:
                    continue
                pid = 2 * src
            else:
                src = _nbr(y, 0, width, ring)
                if src >= width:
                    continue
                pid = 2 * src + 1
            i = pid >> 1
            j = _nbr(i, pid & 1, width, ring)
            if j < 0 or j >= width:
                continue
            up_open = up[i] == 1 and up[j] == 0
            member = up_open or (lo[i] == 1 and lo[j] == 0)
            p = tpos[pid]
            if member:
                if p < 0:
                    m = counts[2]
                    tlist[m] = pid
                    tpos[pid] = m
                    counts[2] = m + 1
            elif p >= 0:
                m = counts[2] - 1
                last = tlist[m]
                tlist[p] = last
                tpos[last] = p
                tpos[pid] = -1
                counts[2] = m
            if use_s:
                p = spos[pid]
                if up_open:
                    if p < 0:
                        m = counts[3]
                        slist[m] = pid
                        spos[pid] = m
                        counts[3] = m + 1
                elif p >= 0:
                    m = counts[3] - 1
                    last = slist[m]
                    slist[p] = last
                    spos[last] = p
                    spos[pid] = -1
                    counts[3] = m

        if qi >= n_init and counts[0] == 0:
            stats[COL_EXT_UP] = now
        if not ring and up[y] == 1 and (y == 0 or y == width - 1):
            stats[COL_STATUS] = OVERFLOW
            break
    stats[COL_EVENTS] = events
    stats[COL_VIOLATIONS] = bad


@nb.njit(cache=True)
def _sample_window(window_cells, p, q, state, lo_buf, up_buf):
    # one uniform per window site drives both Bernoulli marks (maximal coupling)
    n_lo = 0
    n_up = 0
    for i in window_cells:
        u = 1.0 - nb_uniform(state)
        if u < q:
            up_buf[n_up] = i
            n_up += 1
            if u < p:
                lo_buf[n_lo] = i
                n_lo += 1
    return n_lo, n_up


@nb.njit(cache=True)
def batch(width, ring, lo_cells, up_cells, window_cells, p, q,
          lam1, lam2, horizon, seed, first, n, stream, probe_cells, check):
    """Run replicas ``first .. first + n - 1`` and record probe occupations.

    When ``window_cells`` is non-empty the initial pair is drawn per replica
    from nested Bernoulli(p) / Bernoulli(q) marks on those cells; otherwise
    every replica starts from ``(lo_cells, up_cells)``.

    Returns ``(occ, stats)``: ``occ[k, j]`` is ``lo + 2 * up`` at probe ``j`` at
    the horizon, ``stats[k]`` is the per-replica statistics row.
    """
    lo, up, dlist, dpos, tlist, tpos, slist, spos, counts = (
        np.zeros(width, np.uint8), np.zeros(width, np.uint8),
        np.empty(width, np.int64), np.full(width, -1, np.int64),
        np.empty(2 * width, np.int64), np.full(2 * width, -1, np.int64),
        np.empty(2 * width, np.int64), np.full(2 * width, -1, np.int64),
        np.zeros(4, np.int64))
    occ = np.zeros((n, probe_cells.shape[0]), np.uint8)
    stats = np.zeros((n, N_STAT), np.float64)
    state = np.zeros(1, np.uint64)
    lo_buf = np.empty(window_cells.shape[0], np.int64)
    up_buf = np.empty(window_cells.shape[0], np.int64)
    sampled = window_cells.shape[0] > 0
    for k in range(n):
        rep = first + k
        if sampled:
            state[0] = nb_derive_key3(seed, rep, STREAM_INITIAL)
            n_lo, n_up = _sample_window(window_cells, p, q, state, lo_buf, up_buf)
            init_lo = lo_buf[:n_lo]
            init_up = up_buf[:n_up]
        else:
            init_lo = lo_cells
            init_up = up_cells
        state[0] = nb_derive_key3(seed, rep, stream)
        evolve(lo, up, dlist, dpos, tlist, tpos, slist, spos, counts,
               init_lo, init_up, lam1, lam2, horizon, ring, state, check, stats[k])
        for j in range(probe_cells.shape[0]):
            c = probe_cells[j]
            occ[k, j] = lo[c] + 2 * up[c]
        clear(lo, up, dlist, dpos, tlist, tpos, slist, spos, counts)
    return occ, stats
