"""Estimators built on loop partitions.

Power sums, sums over distinct indices, the macroscopic-mass estimators
derived from Poisson-Dirichlet moments, two-point connectivity, and the
bond-percolation projection of a realisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .pdref import pd_moment_exact


@dataclass(frozen=True, eq=False)
class PartitionSample:
    """Decreasing fractions summing to one.

    ``total`` is the normalisation (``|Λ|`` for shadow partitions,
    ``beta*|Λ|`` for length partitions), so ``fractions * total`` recovers
    the raw loop sizes.
    """

    fractions: np.ndarray
    total: float
    kind: str = "shadow"

    def __post_init__(self):
        f = np.asarray(self.fractions, dtype=np.float64)
        if f.ndim != 1:
            raise ValueError("fractions must be one-dimensional")
        if len(f) > 1 and np.any(np.diff(f) > 0):
            f = np.sort(f)[::-1]
        object.__setattr__(self, "fractions", f)

    def __len__(self):
        return len(self.fractions)


def shadow_fractions(loopset):
    s = loopset.shadow_count
    return PartitionSample(np.sort(s[s > 0])[::-1] / loopset.n_sites, loopset.n_sites, "shadow")


def length_fractions(loopset):
    total = loopset.beta * loopset.n_sites
    return PartitionSample(np.sort(loopset.vertical_length)[::-1] / total, total, "length")


def _fractions(partition):
    if isinstance(partition, PartitionSample):
        return partition.fractions
    return np.asarray(partition, dtype=np.float64)


def power_sum(partition, n):
    """Sum of ``f**n`` over the parts."""
    if n < 1:
        raise ValueError("power sums need n >= 1; n = 0 counts loops and diverges")
    f = _fractions(partition)
    return math.fsum(f**n)


def _check_exponents(exponents):
    exponents = tuple(int(n) for n in exponents)
    if not exponents:
        raise ValueError("need at least one exponent")
    if min(exponents) < 2:
        raise ValueError("exponents below 2 are dominated by microscopic loops; use n >= 2")
    return exponents


def distinct_moment(partition, exponents):
    """Sum over ordered tuples of distinct parts of ``prod f_j**n_i``.

    One or two exponents go through power sums (``S(a)S(b) - S(a+b)`` for a
    pair); longer tuples use a subset DP over the parts, which sums only
    products of distinct parts and so avoids cancellation.
    """
    exponents = _check_exponents(exponents)
    f = _fractions(partition)
    if len(exponents) == 1:
        return power_sum(f, exponents[0])
    if len(exponents) == 2:
        a, b = exponents
        return power_sum(f, a) * power_sum(f, b) - power_sum(f, a + b)
    return float(_distinct_dp(f, np.array(exponents, dtype=np.int64)))


@numba.njit(cache=True)
def _distinct_dp(f, exps):
    k = len(exps)
    full = (1 << k) - 1
    dp = np.zeros(full + 1)
    dp[0] = 1.0
    for x in f:
        # descending masks so each part fills at most one slot
        for mask in range(full, 0, -1):
            acc = 0.0
            for i in range(k):
                if mask & (1 << i):
                    acc += dp[mask ^ (1 << i)] * x ** exps[i]
            dp[mask] += acc
    return dp[full]


@dataclass(frozen=True)
class MomentEstimate:
    label: str
    mean: float
    stderr: float
    n_samples: int

    @classmethod
    def from_samples(cls, label, values):
        v = np.asarray(values, dtype=np.float64)
        n = len(v)
        if n == 0:
            raise ValueError("no samples")
        mean = math.fsum(v) / n
        if n > 1:
            var = math.fsum((v - mean) ** 2) / (n - 1)
            err = math.sqrt(var / n)
        else:
            err = float("nan")
        return cls(label, mean, err, n)


def default_theta(u):
    """Poisson-Dirichlet parameter for cross fraction ``u``: 1 at u in {0, 1}, else 1/2."""
    return 1.0 if u in (0, 1) else 0.5


def _mean_and_err(moment):
    if isinstance(moment, MomentEstimate):
        return moment.mean, moment.stderr
    return float(moment), float("nan")


def mass_estimate(moment, exponents, theta):
    """Mass ``m`` solving ``E = m**sum(n) * PD moment``, with a delta-method error.

    Returns ``(m, stderr)``; the error is NaN when the input carries none.
    """
    exponents = _check_exponents(exponents)
    mean, err = _mean_and_err(moment)
    if mean < 0:
        raise ValueError(f"moment estimate must be nonnegative, got {mean}")
    total = sum(exponents)
    m = (mean / pd_moment_exact(theta, exponents)) ** (1.0 / total)
    if mean == 0:
        return m, float("nan")
    return m, m * err / (total * mean)


def m_from_second_moment(E2, theta):
    """Mass from ``E(sum f_j**2)``: ``sqrt((theta + 1) * E2)``, clamped to [0, 1]."""
    if E2 < 0:
        raise ValueError("second moment must be nonnegative")
    if theta <= 0:
        raise ValueError("theta must be positive")
    val = (theta + 1.0) * E2
    if val > 1.0 + 1e-9:
        raise ValueError(f"(theta+1)*E2 = {val} exceeds 1; mass cannot exceed 1")
    return min(1.0, math.sqrt(val))


def m_single(moment, n1, theta):
    return mass_estimate(moment, (n1,), theta)[0]


def m_pair(moment, n1, n2, theta):
    return mass_estimate(moment, (n1, n2), theta)[0]


def connected(loopset, x, y):
    """Whether ``(x, 0)`` and ``(y, 0)`` lie on the same loop."""
    return bool(loopset.site_loop[x] == loopset.site_loop[y])


def two_point_connectivity(samples, x, y):
    """Fraction of loop sets in which ``(x, 0)`` and ``(y, 0)`` share a loop."""
    if x == y:
        raise ValueError("need two distinct sites")
    return MomentEstimate.from_samples(
        f"P({x}<->{y})", [float(connected(ls, x, y)) for ls in samples]
    )


def antipodal_pairs(lattice):
    """Arrays ``(x, antipode(x))`` over all sites."""
    x = np.arange(lattice.n_sites)
    return x, lattice.antipode(x)


def pair_connectivity_fraction(loopset, xs, ys):
    """Per-sample fraction of the given pairs that are connected at time 0.

    Averaging over all translates of a pair keeps the estimator unbiased on
    a periodic lattice and cuts its variance.
    """
    sl = loopset.site_loop
    return float(np.count_nonzero(sl[xs] == sl[ys])) / len(xs)


def percolation_projection(realisation):
    """Open bonds: edges carrying at least one event."""
    eta = np.zeros(realisation.lattice.n_edges, dtype=bool)
    eta[realisation.edge] = True
    return eta


@numba.njit(cache=True)
def _find(parent, a):
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


@numba.njit(cache=True)
def _count_components(n_sites, src, dst):
    parent = np.arange(n_sites)
    size = np.ones(n_sites, dtype=np.int64)
    count = n_sites
    for i in range(len(src)):
        a = _find(parent, src[i])
        b = _find(parent, dst[i])
        if a != b:
            if size[a] < size[b]:
                a, b = b, a
            parent[b] = a
            size[a] += size[b]
            count -= 1
    return count


def cluster_count(eta, lattice):
    """Connected components of the open-bond graph, isolated sites included."""
    eta = np.asarray(eta, dtype=bool)
    if len(eta) != lattice.n_edges:
        raise ValueError("bond configuration does not match the lattice")
    open_edges = lattice.edges[eta]
    return int(
        _count_components(
            lattice.n_sites,
            np.ascontiguousarray(open_edges[:, 0]),
            np.ascontiguousarray(open_edges[:, 1]),
        )
    )


def mesoscopic_mass(partition, micro_cutoff, macro_fraction):
    """Mass carried by loops with ``k < size < eps * total``."""
    if micro_cutoff < 1:
        raise ValueError("micro cutoff must be at least 1")
    if not 0 < macro_fraction < 1:
        raise ValueError("macro fraction must lie in (0, 1)")
    if not isinstance(partition, PartitionSample):
        raise TypeError("mesoscopic_mass needs a PartitionSample (it uses the total)")
    f = partition.fractions
    sizes = f * partition.total
    if partition.kind == "shadow":
        sizes = np.rint(sizes)
    sel = (sizes > micro_cutoff) & (f < macro_fraction)
    return math.fsum(f[sel])
