"""Acceptance criteria 1-10.

Each test carries a ``criterion`` marker; conftest prints one pass/fail line
per criterion after the run.  The desk-scale samples (L=24, beta=1, 2000
per u) are drawn once per session and shared by criteria 5, 6, 7 and 9.
"""

import itertools
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopsoup.experiment import (
    BETA_C_PERCOLATION,
    COL,
    ExperimentConfig,
    collect,
    estimate,
    estimate_beta_c,
    mass_values,
    theta_discrimination,
)
from loopsoup.lattice import FREE, PERIODIC, Lattice, build_lattice
from loopsoup.looptracer import trace_loops
from loopsoup.observables import cluster_count, default_theta, percolation_projection
from loopsoup.pdref import gem_sticks, kingman_fractions, pd_moment_exact
from loopsoup.realisation import BAR, CROSS, Realisation, sample_realisation, sample_rng

DESK_L = 24
DESK_SAMPLES = 2000
DESK_SEED = 2024
US = (0.0, 0.5, 1.0)

# m_n, n = 2..5, at beta = 1, L = 160
REFERENCE_M = {
    0.0: (0.8925, 0.8968, 0.8815, 0.8930),
    0.5: (0.9585, 0.9587, 0.9595, 0.9528),
    1.0: (0.9310, 0.9276, 0.9217, 0.9356),
}


@pytest.fixture(scope="session")
def desk_data():
    workers = max(1, min(8, os.cpu_count() or 1))
    return {u: collect(DESK_L, PERIODIC, 1.0, u, DESK_SEED, DESK_SAMPLES, workers=workers) for u in US}


def m_single_values(data, theta):
    return [mass_values(data, (n,), theta)[0] for n in (2, 3, 4, 5)]


def sweep():
    for L in range(3, 9):
        for bc in (PERIODIC, FREE):
            lat = build_lattice(L, bc)
            for u, beta in itertools.product(US, (0.2, 1.0, 3.0)):
                for i in range(10):
                    yield lat, sample_realisation(lat, beta, u, sample_rng(i, [L, int(bc == FREE)]))


@pytest.mark.criterion(1, "conservation: sum of lengths = beta|Lambda| (rel 1e-9), sum of shadows = |Lambda|")
def test_criterion_1_conservation():
    n = 0
    for lat, r in sweep():
        ls = trace_loops(r)
        assert math.fsum(ls.vertical_length) == pytest.approx(r.beta * lat.n_sites, rel=1e-9)
        assert int(ls.shadow_count.sum()) == lat.n_sites
        n += 1
    assert n >= 1000


def _two_site(events, beta):
    return trace_loops(Realisation.from_events(Lattice.from_edges(2, [(0, 1)]), beta, 0.5, events))


def _summary(ls):
    return sorted(zip(ls.shadow_count.tolist(), ls.vertical_length.tolist()))


@pytest.mark.criterion(2, "hand-trace oracle for the four single-edge configurations (1e-12)")
@settings(max_examples=200, deadline=None)
@given(
    st.floats(0.05, 20.0),
    st.floats(0.0, 1.0, exclude_max=True),
    st.floats(0.0, 1.0, exclude_max=True),
)
def test_criterion_2_hand_traces(beta, a, b):
    t1, t2 = sorted((a * beta, b * beta))
    tol = 1e-12 * max(1.0, beta)
    empty = _summary(_two_site([], beta))
    assert [s for s, _ in empty] == [1, 1]
    assert all(abs(v - beta) <= tol for _, v in empty)
    (s, v), = _summary(_two_site([(0, t1, CROSS)], beta))
    assert s == 2 and abs(v - 2 * beta) <= tol
    if t1 == t2:
        return
    (s0, v0), (s2, v2) = _summary(_two_site([(0, t1, BAR), (0, t2, BAR)], beta))
    assert (s0, s2) == (0, 2)
    assert abs(v0 - 2 * (t2 - t1)) <= tol and abs(v2 - (2 * beta - 2 * (t2 - t1))) <= tol
    for kinds in ((CROSS, BAR), (BAR, CROSS)):
        (s, v), = _summary(_two_site([(0, t1, kinds[0]), (0, t2, kinds[1])], beta))
        assert s == 2 and abs(v - 2 * beta) <= tol


@pytest.mark.criterion(3, "percolation bound: clusters <= loops, zero violations over the criterion 1 sweep")
def test_criterion_3_percolation_bound():
    violations = 0
    for lat, r in sweep():
        violations += cluster_count(percolation_projection(r), lat) > trace_loops(r).loop_count
    assert violations == 0


def _moment(rows, exps):
    s = lambda n: (rows**n).sum(axis=1)
    if len(exps) == 1:
        return s(exps[0])
    a, b = exps
    return s(a) * s(b) - s(a + b)


@pytest.mark.criterion(4, "GEM and Kingman reproduce exact PD moments within 3 sigma at 1e5 samples")
def test_criterion_4_pd_oracle():
    assert pd_moment_exact(1.0, (2,)) == pytest.approx(1 / 2)
    assert pd_moment_exact(1.0, (3,)) == pytest.approx(1 / 3)
    assert pd_moment_exact(1.0, (2, 2)) == pytest.approx(1 / 24)
    bad = []
    for theta in (0.5, 1.0):
        rng = np.random.default_rng(int(theta * 10))
        gem = np.concatenate([gem_sticks(theta, 200, 25_000, rng)[0] for _ in range(4)])
        king = kingman_fractions(theta, 10_000, 100_000, rng, cutoff=80.0)
        for name, rows in (("gem", gem), ("kingman", king)):
            for exps in ((2,), (3,), (2, 2)):
                x = _moment(rows, exps)
                exact = pd_moment_exact(theta, exps)
                se = x.std(ddof=1) / math.sqrt(len(x))
                if abs(x.mean() - exact) >= 3 * se:
                    bad.append((name, theta, exps, x.mean(), exact, se))
    assert not bad, bad


@pytest.mark.slow
@pytest.mark.criterion(5, "PD emergence at L=24: m_2..m_5 pairwise within 0.05 and within 0.06 of the L=160 reference values")
def test_criterion_5_pd_emergence(desk_data):
    bad = []
    for u in US:
        theta = default_theta(u)
        vals = m_single_values(desk_data[u], theta)
        print(f"u={u} theta={theta} m_n={np.round(vals, 4).tolist()}")
        if max(vals) - min(vals) > 0.05:
            bad.append((u, "pairwise", vals))
        for v, ref in zip(vals, REFERENCE_M[u]):
            if abs(v - ref) > 0.06:
                bad.append((u, "reference", v, ref))
    assert not bad, bad


@pytest.mark.slow
@pytest.mark.criterion(6, "theta discrimination at u=1/2: smaller spread under theta=1/2, monotone >3 sigma drift under theta=1")
def test_criterion_6_theta_discrimination(desk_data):
    data = desk_data[0.5]
    right = theta_discrimination(data, 0.5)
    wrong = theta_discrimination(data, 1.0)
    print(f"theta=1/2 m_n={np.round(right['values'], 4).tolist()} spread={right['spread']:.4f}")
    print(
        f"theta=1   m_n={np.round(wrong['values'], 4).tolist()} spread={wrong['spread']:.4f} "
        f"drift={wrong['drift']:+.4f} +- {wrong['drift_stderr']:.4f} monotone={wrong['monotone']}"
    )
    assert right["spread"] < wrong["spread"]
    assert wrong["monotone"], "theta=1 sequence is not monotone in n"
    assert abs(wrong["drift"]) > 3 * wrong["drift_stderr"]


@pytest.mark.slow
@pytest.mark.criterion(7, "pair moments m_{a,b}, 2 <= a <= b <= 4, within 0.05 of m_2 for each u")
def test_criterion_7_pair_moments(desk_data):
    bad = []
    for u in US:
        theta = default_theta(u)
        m2 = mass_values(desk_data[u], (2,), theta)[0]
        for a in (2, 3, 4):
            for b in range(a, 5):
                m = mass_values(desk_data[u], (a, b), theta)[0]
                if abs(m - m2) > 0.05:
                    bad.append((u, a, b, m, m2))
    assert not bad, bad


@pytest.fixture(scope="module")
def beta_c_estimates():
    out = {}
    for u in US:
        cfg = ExperimentConfig(
            mode="betac", size=12, u=u, beta_min=0.25, beta_max=0.45,
            samples=300, max_samples=1200, tol=0.01, seed=DESK_SEED,
        )
        out[u] = estimate_beta_c(cfg, sizes=(12, 24))
    return out


@pytest.mark.slow
@pytest.mark.criterion(8, "beta_c brackets above 0.286, overlapping [0.30, 0.40], center(1/2) below center(0) and center(1)")
def test_criterion_8_beta_c(beta_c_estimates):
    est = beta_c_estimates
    for u in US:
        e = est[u]
        print(f"u={u} bracket=[{e.lo:.4f}, {e.hi:.4f}] resolved={e.resolved} n={e.n_samples}")
        assert e.lo > BETA_C_PERCOLATION
        assert e.lo < 0.40 and e.hi > 0.30
        assert e.lo <= e.beta_c <= e.hi
    assert est[0.5].beta_c < est[0.0].beta_c
    assert est[0.5].beta_c < est[1.0].beta_c


@pytest.mark.slow
@pytest.mark.criterion(9, "antipodal connectivity at u=1 equals m^2/(theta+1) within 10%")
def test_criterion_9_connectivity(desk_data):
    data = desk_data[1.0]
    m = mass_values(data, (2,), 1.0)[0]
    conn = estimate(data, "conn")
    target = m**2 / 2
    print(f"connectivity={conn.mean:.4f} +- {conn.stderr:.4f}, m^2/2={target:.4f}")
    assert abs(conn.mean - target) <= 0.1 * target
    assert np.all(np.isfinite(data[:, COL["conn"]]))


@pytest.mark.long_run
@pytest.mark.criterion(10, "L=160 u=1 matches the m_n reference values to +-0.01 (opt-in, hours)")
@pytest.mark.skipif(os.environ.get("LOOPSOUP_LONG_RUN") != "1", reason="set LOOPSOUP_LONG_RUN=1 to run")
def test_criterion_10_long_run():
    n = int(os.environ.get("LOOPSOUP_LONG_SAMPLES", "400"))
    workers = int(os.environ.get("LOOPSOUP_WORKERS", str(os.cpu_count() or 1)))
    data = collect(160, PERIODIC, 1.0, 1.0, DESK_SEED, n, workers=workers)
    vals = m_single_values(data, 1.0)
    print(f"L=160 u=1 m_n={np.round(vals, 4).tolist()}")
    for v, ref in zip(vals, REFERENCE_M[1.0]):
        assert abs(v - ref) <= 0.01
