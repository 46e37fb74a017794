"""Marked Poisson process of crosses and double bars on ``edges x [0, beta)``.

Each edge carries a Poisson(beta) number of events with i.i.d. uniform
times; every event is independently a cross with probability ``u`` and a
double bar otherwise.  Events are stored grouped by edge and time-sorted.
The per-site timelines used by the loop tracer are stored as flat "entry"
arrays: every event produces one entry at each endpoint of its edge, and
entries are grouped by site (CSR offsets in ``site_start``) and sorted by
time within a site.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numba
import numpy as np

from .lattice import Lattice

BAR = 0
CROSS = 1
KIND_NAMES = {BAR: "bar", CROSS: "cross"}
KIND_CODES = {v: k for k, v in KIND_NAMES.items()}


class Event(NamedTuple):
    edge: int
    time: float
    kind: int


def sample_rng(seed, index):
    """Random stream for sample ``index`` of a run with master seed ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


@numba.njit(cache=True)
def _build_timelines(n_sites, ev_a, ev_b, ev_time):
    n_ev = len(ev_time)
    counts = np.zeros(n_sites + 1, dtype=np.int64)
    for i in range(n_ev):
        counts[ev_a[i] + 1] += 1
        counts[ev_b[i] + 1] += 1
    start = np.cumsum(counts)
    fill = start[:-1].copy()
    ent_event = np.empty(2 * n_ev, dtype=np.int64)
    for i in range(n_ev):
        ent_event[fill[ev_a[i]]] = i
        fill[ev_a[i]] += 1
        ent_event[fill[ev_b[i]]] = i
        fill[ev_b[i]] += 1
    # insertion sort per site; timelines are short (about 6*beta entries)
    for s in range(n_sites):
        for p in range(start[s] + 1, start[s + 1]):
            e = ent_event[p]
            t = ev_time[e]
            q = p - 1
            while q >= start[s] and ev_time[ent_event[q]] > t:
                ent_event[q + 1] = ent_event[q]
                q -= 1
            ent_event[q + 1] = e
    # partner entry: the other endpoint of the same event
    first = np.full(n_ev, -1, dtype=np.int64)
    partner = np.empty(2 * n_ev, dtype=np.int64)
    for p in range(2 * n_ev):
        e = ent_event[p]
        if first[e] < 0:
            first[e] = p
        else:
            partner[p] = first[e]
            partner[first[e]] = p
    # strictness check: index of first tied pair, or -1
    tie = -1
    for s in range(n_sites):
        for p in range(start[s] + 1, start[s + 1]):
            if ev_time[ent_event[p]] == ev_time[ent_event[p - 1]]:
                tie = ent_event[p]
                break
        if tie >= 0:
            break
    return start, ent_event, partner, tie


@numba.njit(cache=True)
def _sort_groups(group_start, time, kind):
    for g in range(len(group_start) - 1):
        for p in range(group_start[g] + 1, group_start[g + 1]):
            t = time[p]
            k = kind[p]
            q = p - 1
            while q >= group_start[g] and time[q] > t:
                time[q + 1] = time[q]
                kind[q + 1] = kind[q]
                q -= 1
            time[q + 1] = t
            kind[q + 1] = k


@dataclass(frozen=True, eq=False)
class Realisation:
    """One sample of the event process together with its site timelines.

    ``edge``, ``time`` and ``kind`` are per-event arrays sorted by
    ``(edge, time)``.  ``site_start``, ``ent_event`` and ``ent_partner``
    describe the timelines (see module docstring).
    """

    lattice: Lattice
    beta: float
    u: float
    edge: np.ndarray
    time: np.ndarray
    kind: np.ndarray
    site_start: np.ndarray = field(repr=False)
    ent_event: np.ndarray = field(repr=False)
    ent_partner: np.ndarray = field(repr=False)

    @classmethod
    def from_events(cls, lattice, beta, u, events):
        """Build a realisation from explicit ``(edge, time, kind)`` triples.

        Raises ``ValueError`` for out-of-range times or edges, or if two
        events share a time on the same site line.
        """
        events = list(events)
        edge = np.array([e[0] for e in events], dtype=np.int64)
        time = np.array([e[1] for e in events], dtype=np.float64)
        kind = np.array([e[2] for e in events], dtype=np.int8)
        _check_params(beta, u)
        if len(events):
            if edge.min() < 0 or edge.max() >= lattice.n_edges:
                raise ValueError("event on a nonexistent edge")
            if time.min() < 0 or time.max() >= beta:
                raise ValueError("event times must lie in [0, beta)")
            if not np.isin(kind, (BAR, CROSS)).all():
                raise ValueError("event kind must be CROSS or BAR")
        order = np.lexsort((time, edge))
        edge, time, kind = edge[order], time[order], kind[order]
        tie = _tie_on_edge(edge, time)
        if tie >= 0:
            raise ValueError(f"duplicate event time {time[tie]!r} on edge {edge[tie]}")
        real, tie = _assemble(lattice, beta, u, edge, time, kind)
        if tie >= 0:
            raise ValueError(f"two events at time {time[tie]!r} on one site line")
        return real

    @property
    def n_events(self):
        return len(self.time)

    def events(self):
        for e, t, k in zip(self.edge, self.time, self.kind):
            yield Event(int(e), float(t), int(k))

    def timeline(self, site):
        """``(time, partner site, kind)`` triples for one site, sorted by time."""
        a, b = self.site_start[site], self.site_start[site + 1]
        out = []
        for ev in self.ent_event[a:b]:
            x, y = self.lattice.edges[self.edge[ev]]
            out.append((float(self.time[ev]), int(y if x == site else x), int(self.kind[ev])))
        return out


def _check_params(beta, u):
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    if not 0 <= u <= 1:
        raise ValueError(f"u must lie in [0, 1], got {u!r}")


def _tie_on_edge(edge, time):
    same = (edge[1:] == edge[:-1]) & (time[1:] == time[:-1])
    hits = np.flatnonzero(same)
    return int(hits[0]) + 1 if len(hits) else -1


def _assemble(lattice, beta, u, edge, time, kind):
    ends = lattice.edges[edge]
    start, ent_event, partner, tie = _build_timelines(
        lattice.n_sites,
        np.ascontiguousarray(ends[:, 0]),
        np.ascontiguousarray(ends[:, 1]),
        time,
    )
    for a in (edge, time, kind, start, ent_event, partner):
        a.setflags(write=False)
    return Realisation(lattice, float(beta), float(u), edge, time, kind, start, ent_event, partner), tie


def sample_realisation(lattice, beta, u, rng):
    """Draw one realisation.

    Per edge: a Poisson(beta) count, uniform times on ``[0, beta)``, and an
    independent cross/bar mark with cross probability ``u``.  Exact time
    collisions on a site line are redrawn.
    """
    _check_params(beta, u)
    counts = rng.poisson(beta, size=lattice.n_edges)
    edge = np.repeat(np.arange(lattice.n_edges, dtype=np.int64), counts)
    time = rng.random(len(edge)) * beta
    kind = (rng.random(len(edge)) < u).astype(np.int8)
    edge_start = np.zeros(lattice.n_edges + 1, dtype=np.int64)
    np.cumsum(counts, out=edge_start[1:])
    while True:
        bad = time >= beta  # rounding of U*beta up to beta
        if bad.any():
            time[bad] = rng.random(bad.sum()) * beta
            continue
        # events stay grouped by edge; only times (and their marks) move
        _sort_groups(edge_start, time, kind)
        tie = _tie_on_edge(edge, time)
        if tie >= 0:
            time[tie] = rng.random() * beta
            continue
        real, tie = _assemble(lattice, beta, u, edge.copy(), time.copy(), kind.copy())
        if tie < 0:
            return real
        time[tie] = rng.random() * beta


def event_count(realisation):
    return realisation.n_events


# -- text dump ---------------------------------------------------------------
#
# Format, one event per line after a header:
#
#   # loopsoup-realisation v1
#   # n_sites=<int> side_length=<int|none> bc=<str> beta=<float> u=<float>
#   <site_a> <site_b> <time> <cross|bar>
#
# Times are written with repr() so a load reproduces them bit for bit.

_MAGIC = "# loopsoup-realisation v1"


def dump_realisation(realisation, fh):
    lat = realisation.lattice
    fh.write(_MAGIC + "\n")
    fh.write(
        f"# n_sites={lat.n_sites} side_length={lat.side_length if lat.side_length else 'none'} "
        f"bc={lat.bc} beta={realisation.beta!r} u={realisation.u!r}\n"
    )
    for ev in realisation.events():
        a, b = lat.edges[ev.edge]
        fh.write(f"{a} {b} {ev.time!r} {KIND_NAMES[ev.kind]}\n")


def load_realisation(fh, lattice=None):
    """Inverse of `dump_realisation`.

    The lattice is rebuilt from the header unless one is supplied.
    """
    from .lattice import build_lattice

    lines = iter(fh)
    if next(lines).rstrip("\n") != _MAGIC:
        raise ValueError("not a realisation dump")
    header = dict(item.split("=", 1) for item in next(lines).lstrip("# ").split())
    beta, u = float(header["beta"]), float(header["u"])
    if lattice is None:
        if header["side_length"] == "none":
            raise ValueError("dump of a diagnostic graph needs an explicit lattice")
        lattice = build_lattice(int(header["side_length"]), header["bc"])
    if lattice.n_sites != int(header["n_sites"]):
        raise ValueError("lattice does not match dump header")
    lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(lattice.edges)}
    events = []
    for line in lines:
        if not line.strip():
            continue
        a, b, t, k = line.split()
        a, b = sorted((int(a), int(b)))
        events.append((lookup[a, b], float(t), KIND_CODES[k]))
    return Realisation.from_events(lattice, beta, u, events)
