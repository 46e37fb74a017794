"""Cubic lattice geometry.

Sites of the L x L x L cube are numbered row-major with x fastest,
``site = x + L*y + L*L*z``.  Edges are listed direction by direction
(x, then y, then z), and within a direction by the index of their lower
endpoint, so indexings are stable for a given ``(L, bc)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PERIODIC = "periodic"
FREE = "free"
BOUNDARY_CONDITIONS = (PERIODIC, FREE)


@dataclass(frozen=True, eq=False)
class Lattice:
    """Immutable graph of sites and nearest-neighbour edges.

    Attributes
    ----------
    side_length : int or None
        Sites per axis; ``None`` for a diagnostic graph built by `from_edges`.
    bc : str
        ``"periodic"``, ``"free"`` or ``"graph"``.
    edges : ndarray, shape (n_edges, 2)
        Endpoint site indices, lower index first.
    """

    side_length: int | None
    bc: str
    n_sites: int
    edges: np.ndarray
    _adj_start: np.ndarray = field(repr=False)
    _adj_edge: np.ndarray = field(repr=False)
    _adj_site: np.ndarray = field(repr=False)

    @classmethod
    def from_edges(cls, n_sites, edges, *, side_length=None, bc="graph"):
        """Build a lattice object from an explicit edge list.

        Used for small diagnostic graphs (e.g. two sites joined by one edge).
        """
        if n_sites < 1:
            raise ValueError("a lattice needs at least one site")
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n_sites):
            raise ValueError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loops are not allowed")
        edges = np.sort(edges, axis=1)

        n_edges = len(edges)
        ends = np.concatenate([edges[:, 0], edges[:, 1]])
        others = np.concatenate([edges[:, 1], edges[:, 0]])
        eidx = np.concatenate([np.arange(n_edges), np.arange(n_edges)])
        # incident lists ordered by edge index
        order = np.lexsort((eidx, ends))
        counts = np.bincount(ends, minlength=n_sites)
        start = np.zeros(n_sites + 1, dtype=np.int64)
        np.cumsum(counts, out=start[1:])

        arrays = [edges, start, eidx[order], others[order]]
        for a in arrays:
            a.setflags(write=False)
        return cls(side_length, bc, int(n_sites), *arrays)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def degrees(self):
        return np.diff(self._adj_start)

    def coords(self, site):
        """(x, y, z) of a site on a cubic lattice."""
        L = self._require_cubic()
        return site % L, (site // L) % L, site // (L * L)

    def site_index(self, x, y, z):
        L = self._require_cubic()
        return x + L * (y + L * z)

    def antipode(self, site):
        """Site displaced by L//2 along every axis (with wrap)."""
        L = self._require_cubic()
        x, y, z = self.coords(site)
        h = L // 2
        return self.site_index((x + h) % L, (y + h) % L, (z + h) % L)

    def _require_cubic(self):
        if self.side_length is None:
            raise ValueError("operation requires a cubic lattice")
        return self.side_length


def build_lattice(L, bc=PERIODIC):
    """Cubic lattice with ``L**3`` sites.

    Periodic lattices need ``L >= 3``; for smaller sides the wrapped bond
    would duplicate (L=2) or close on itself (L=1).
    """
    if int(L) != L or L < 1:
        raise ValueError(f"side length must be a positive integer, got {L!r}")
    if bc not in BOUNDARY_CONDITIONS:
        raise ValueError(f"unknown boundary condition {bc!r}")
    if bc == PERIODIC and L < 3:
        raise ValueError("periodic boundary conditions require L >= 3")
    L = int(L)

    sites = np.arange(L**3, dtype=np.int64)
    coords = np.stack([sites % L, (sites // L) % L, sites // (L * L)])
    stride = np.array([1, L, L * L], dtype=np.int64)

    blocks = []
    for d in range(3):
        c = coords[d]
        if bc == PERIODIC:
            src = sites
            dst = sites + ((c + 1) % L - c) * stride[d]
        else:
            src = sites[c < L - 1]
            dst = src + stride[d]
        blocks.append(np.stack([src, dst], axis=1))
    edges = np.concatenate(blocks)
    return Lattice.from_edges(L**3, edges, side_length=L, bc=bc)


def incident_edges(lattice, site):
    """Incident ``(edge index, neighbour site)`` pairs, ordered by edge index."""
    if not 0 <= site < lattice.n_sites:
        raise IndexError(f"site {site} out of range for {lattice.n_sites} sites")
    a, b = lattice._adj_start[site], lattice._adj_start[site + 1]
    return [(int(e), int(s)) for e, s in zip(lattice._adj_edge[a:b], lattice._adj_site[a:b])]
