"""Loop decomposition of a realisation.

A *leg* is the stretch of a site's time circle between two consecutive
events.  Leg ``p`` starts at timeline entry ``p`` and runs upward to the
next entry of the same site (cyclically), so legs and entries share one
index space.  The leg starting at a site's last entry wraps through the
period boundary and carries the site's time-0 point.  Sites without events
form loops of their own and have no legs.

Traversal state is ``(leg, direction)``.  Moving up a leg we hit the event
at its top entry, moving down we hit the event at its bottom entry; we then
jump to the partner entry on the neighbouring site.  A cross keeps the
direction, a double bar reverses it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .realisation import CROSS

_OK = 0
_REVISIT = 1
_BAD_CLOSE = 2


@numba.njit(cache=True)
def _leg_tables(n_sites, site_start, ent_event, ev_time, beta):
    n_ent = len(ent_event)
    nxt = np.empty(n_ent, dtype=np.int64)
    prv = np.empty(n_ent, dtype=np.int64)
    length = np.empty(n_ent, dtype=np.float64)
    wrap_site = np.full(n_ent, -1, dtype=np.int64)
    for s in range(n_sites):
        a = site_start[s]
        b = site_start[s + 1]
        for p in range(a, b):
            n = p + 1 if p + 1 < b else a
            nxt[p] = n
            prv[n] = p
            t0 = ev_time[ent_event[p]]
            t1 = ev_time[ent_event[n]]
            if n > p:
                length[p] = t1 - t0
            else:
                length[p] = t1 + beta - t0
                wrap_site[p] = s
    return nxt, prv, length, wrap_site


@numba.njit(cache=True)
def _trace(n_sites, site_start, ent_event, ent_partner, ev_time, ev_kind, beta):
    nxt, prv, leg_len, wrap_site = _leg_tables(n_sites, site_start, ent_event, ev_time, beta)
    n_ent = len(ent_event)
    leg_loop = np.full(n_ent, -1, dtype=np.int64)
    site_loop = np.full(n_sites, -1, dtype=np.int64)
    cap = n_ent + n_sites
    vlen = np.zeros(cap, dtype=np.float64)
    shadow = np.zeros(cap, dtype=np.int64)
    k = 0
    for s in range(n_sites):
        if site_start[s] == site_start[s + 1]:
            vlen[k] = beta
            shadow[k] = 1
            site_loop[s] = k
            k += 1
    for p in range(n_ent):
        if leg_loop[p] >= 0:
            continue
        leg = p
        up = True
        total = 0.0
        while True:
            if leg_loop[leg] >= 0:
                return _REVISIT, leg_loop, site_loop, vlen[:k], shadow[:k]
            leg_loop[leg] = k
            total += leg_len[leg]
            if wrap_site[leg] >= 0:
                shadow[k] += 1
                site_loop[wrap_site[leg]] = k
            e = nxt[leg] if up else leg
            q = ent_partner[e]
            if ev_kind[ent_event[e]] == CROSS:
                leg = q if up else prv[q]
            elif up:
                leg = prv[q]
                up = False
            else:
                leg = q
                up = True
            if leg == p:
                if not up:
                    return _BAD_CLOSE, leg_loop, site_loop, vlen[:k], shadow[:k]
                break
        vlen[k] = total
        k += 1
    return _OK, leg_loop, site_loop, vlen[:k], shadow[:k]


class TraceError(RuntimeError):
    """Loop traversal found an inconsistent timeline structure."""


@dataclass(frozen=True, eq=False)
class LoopSet:
    """Loops of one realisation.

    Attributes
    ----------
    vertical_length : ndarray of float
        Time extent of each loop.
    shadow_count : ndarray of int
        Number of sites whose time-0 point lies on each loop.
    site_loop : ndarray of int
        Loop index containing ``(x, 0)`` for each site ``x``.
    leg_loop : ndarray of int
        Loop index of every leg (legs indexed like timeline entries).
    """

    vertical_length: np.ndarray
    shadow_count: np.ndarray
    site_loop: np.ndarray
    leg_loop: np.ndarray
    beta: float
    n_sites: int

    @property
    def loop_count(self):
        return len(self.vertical_length)

    @property
    def site_count(self):
        return self.n_sites


def trace_loops(realisation):
    """Decompose ``realisation`` into loops."""
    r = realisation
    status, leg_loop, site_loop, vlen, shadow = _trace(
        r.lattice.n_sites, r.site_start, r.ent_event, r.ent_partner, r.time, r.kind, r.beta
    )
    if status == _REVISIT:
        raise TraceError("a leg was visited twice; timelines are corrupt")
    if status == _BAD_CLOSE:
        raise TraceError("traversal returned to its start leg with reversed direction")
    return LoopSet(vlen.copy(), shadow.copy(), site_loop, leg_loop, r.beta, r.lattice.n_sites)


def shadow_partition(loopset):
    """Positive shadow counts in decreasing order."""
    s = loopset.shadow_count
    return np.sort(s[s > 0])[::-1]


def length_partition(loopset):
    """Vertical lengths of all loops in decreasing order."""
    return np.sort(loopset.vertical_length)[::-1]


def follow_loop(realisation, start_leg, upward=True):
    """Legs visited by the loop through ``start_leg``, in traversal order.

    Pure-Python walk, independent of the compiled tracer; used to check it.
    """
    r = realisation
    starts = r.site_start
    site_of = np.repeat(np.arange(r.lattice.n_sites), np.diff(starts))

    def nxt(p):
        s = site_of[p]
        return p + 1 if p + 1 < starts[s + 1] else starts[s]

    def prv(p):
        s = site_of[p]
        return p - 1 if p > starts[s] else starts[s + 1] - 1

    legs = []
    leg, up = start_leg, upward
    while True:
        legs.append(int(leg))
        e = nxt(leg) if up else leg
        q = r.ent_partner[e]
        if r.kind[r.ent_event[e]] == CROSS:
            leg = q if up else prv(q)
        else:
            leg, up = (prv(q), False) if up else (q, True)
        if leg == start_leg and up == upward:
            return legs
        if len(legs) > len(r.ent_event):
            raise TraceError("walk did not close")
