import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopsoup.lattice import FREE, PERIODIC, Lattice, build_lattice, incident_edges

sizes_bc = st.one_of(
    st.tuples(st.integers(1, 7), st.just(FREE)),
    st.tuples(st.integers(3, 7), st.just(PERIODIC)),
)


@pytest.mark.parametrize(
    "L, bc, n_sites, n_edges",
    [(3, PERIODIC, 27, 81), (2, FREE, 8, 12), (1, FREE, 1, 0), (4, FREE, 64, 144), (5, PERIODIC, 125, 375)],
)
def test_counts(L, bc, n_sites, n_edges):
    lat = build_lattice(L, bc)
    assert lat.n_sites == n_sites
    assert lat.n_edges == n_edges


@pytest.mark.parametrize("L, bc", [(0, FREE), (0, PERIODIC), (2, PERIODIC), (1, PERIODIC), (-1, FREE), (2.5, FREE)])
def test_rejects_bad_sizes(L, bc):
    with pytest.raises(ValueError):
        build_lattice(L, bc)


def test_rejects_unknown_bc():
    with pytest.raises(ValueError):
        build_lattice(3, "twisted")


def test_incident_edges_examples():
    assert len(incident_edges(build_lattice(3, PERIODIC), 13)) == 6
    assert len(incident_edges(build_lattice(2, FREE), 0)) == 3
    lat = build_lattice(3, FREE)
    assert len(incident_edges(lat, lat.site_index(1, 1, 1))) == 6
    with pytest.raises(IndexError):
        incident_edges(lat, 27)


@settings(max_examples=30, deadline=None)
@given(sizes_bc)
def test_edge_count_formula(args):
    L, bc = args
    lat = build_lattice(L, bc)
    expected = 3 * L**3 if bc == PERIODIC else 3 * L * L * (L - 1)
    assert lat.n_edges == expected


@settings(max_examples=30, deadline=None)
@given(sizes_bc)
def test_unit_distance_with_wrap(args):
    L, bc = args
    lat = build_lattice(L, bc)
    a = np.stack(lat.coords(lat.edges[:, 0]), axis=1)
    b = np.stack(lat.coords(lat.edges[:, 1]), axis=1)
    diff = np.abs(a - b)
    if bc == PERIODIC:
        diff = np.minimum(diff, L - diff)
    assert np.all(diff.sum(axis=1) == 1)
    # no duplicate edges
    assert len({tuple(e) for e in lat.edges.tolist()}) == lat.n_edges


@settings(max_examples=30, deadline=None)
@given(sizes_bc)
def test_degrees_and_handshake(args):
    L, bc = args
    lat = build_lattice(L, bc)
    deg = lat.degrees
    assert deg.sum() == 2 * lat.n_edges
    if bc == PERIODIC:
        assert np.all(deg == 6)
    elif L > 1:
        assert deg.min() == 3 and deg.max() == (6 if L > 2 else 3)


@settings(max_examples=20, deadline=None)
@given(sizes_bc)
def test_edge_symmetry(args):
    lat = build_lattice(*args)
    for e, (x, y) in enumerate(lat.edges.tolist()):
        assert (e, y) in incident_edges(lat, x)
        assert (e, x) in incident_edges(lat, y)


def test_deterministic_indexing():
    a, b = build_lattice(5, PERIODIC), build_lattice(5, PERIODIC)
    assert np.array_equal(a.edges, b.edges)
    assert all(incident_edges(a, s) == incident_edges(b, s) for s in range(a.n_sites))


def test_row_major_x_fastest():
    lat = build_lattice(4, FREE)
    assert lat.site_index(1, 0, 0) == 1
    assert lat.site_index(0, 1, 0) == 4
    assert lat.site_index(0, 0, 1) == 16
    assert lat.coords(1 + 4 * 2 + 16 * 3) == (1, 2, 3)


def test_immutable():
    lat = build_lattice(3)
    with pytest.raises(ValueError):
        lat.edges[0, 0] = 5


def test_antipode():
    lat = build_lattice(6)
    s = lat.site_index(1, 2, 5)
    assert lat.coords(lat.antipode(s)) == (4, 5, 2)


def test_diagnostic_graph():
    g = Lattice.from_edges(2, [(1, 0)])
    assert g.n_edges == 1 and g.edges.tolist() == [[0, 1]]
    assert incident_edges(g, 1) == [(0, 0)]
    with pytest.raises(ValueError):
        g.antipode(0)
    with pytest.raises(ValueError):
        Lattice.from_edges(2, [(0, 0)])
