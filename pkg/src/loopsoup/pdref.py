"""Poisson-Dirichlet reference distributions.

Two samplers (GEM stick breaking and Kingman's normalised Gamma
construction) and the closed-form mixed moments of PD(theta), used as the
analytic oracle for loop-length moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True)
class StickPartition:
    sticks: np.ndarray
    residual: float

    def sorted(self):
        return np.sort(self.sticks)[::-1]


def _check_theta(theta):
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta!r}")


def gem_sticks(theta, truncation, size, rng):
    """Batch of truncated GEM sequences, shape ``(size, truncation)``, plus residuals.

    Beta(1, theta) sticks are drawn by inversion, ``X = 1 - U**(1/theta)``.
    """
    _check_theta(theta)
    if truncation < 1:
        raise ValueError("truncation must be at least 1")
    x = 1.0 - rng.random((size, truncation)) ** (1.0 / theta)
    remain = np.cumprod(1.0 - x, axis=1)
    before = np.concatenate([np.ones((size, 1)), remain[:, :-1]], axis=1)
    return x * before, remain[:, -1]


def sample_gem(theta, truncation, rng):
    sticks, residual = gem_sticks(theta, truncation, 1, rng)
    return StickPartition(sticks[0], float(residual[0]))


def kingman_log_weights(theta, N, size, rng):
    """Logs of i.i.d. Gamma(theta/N) variables, shape ``(size, N)``.

    For shape ``a < 1`` a direct draw underflows; we use
    ``Gamma(a) = Gamma(a + 1) * U**(1/a)`` and stay in log space.
    """
    _check_theta(theta)
    if N < 1:
        raise ValueError("N must be at least 1")
    a = theta / N
    g = rng.standard_gamma(a + 1.0, size=(size, N))
    return np.log(g) + np.log(rng.random((size, N))) / a


def kingman_fractions(theta, N, size, rng, cutoff=None):
    """Unsorted normalised Gamma vectors, one row per sample.

    With ``cutoff=None`` all N variables are drawn, shape ``(size, N)``.
    Otherwise only variables with ``-log(U)/a < cutoff`` are kept (the rest
    are below ``exp(-cutoff)`` times a Gamma(a+1) factor and are dropped as
    zero); their number is Binomial(N, 1 - exp(-cutoff*a)), about
    ``cutoff*theta``, which makes large N affordable for moment estimates.
    Rows are padded with zeros to a common width.
    """
    if cutoff is None:
        logz = kingman_log_weights(theta, N, size, rng)
    else:
        _check_theta(theta)
        a = theta / N
        p = -math.expm1(-cutoff * a)
        counts = rng.binomial(N, p, size=size)
        counts = np.maximum(counts, 1)  # P(no survivor) = exp(-cutoff*theta)
        width = int(counts.max())
        # -log U conditioned on being below cutoff*a
        e = -np.log1p(-p * rng.random((size, width)))
        logz = np.log(rng.standard_gamma(a + 1.0, size=(size, width))) - e / a
        logz[np.arange(width) >= counts[:, None]] = -np.inf
    return np.exp(logz - logsumexp(logz, axis=1, keepdims=True))


def sample_pd_kingman(theta, N, rng):
    """Approximate PD(theta) partition from N normalised Gamma(theta/N) variables.

    The bias of moments is O(1/N).
    """
    return np.sort(kingman_fractions(theta, N, 1, rng)[0])[::-1]


def pd_moment_exact(theta, exponents, m=1.0):
    """``E sum_{distinct j} prod Y_j**n_i`` for PD(theta) on ``[0, m]``.

    Equals ``m**sum(n) * theta**k Gamma(theta) prod Gamma(n_i) / Gamma(theta + sum n)``.
    Exponents of 1 are accepted, though loop comparisons use ``n >= 2``.
    """
    _check_theta(theta)
    exponents = tuple(int(n) for n in exponents)
    if not exponents or min(exponents) < 1:
        raise ValueError("exponents must be positive integers")
    k = len(exponents)
    total = sum(exponents)
    log_val = (
        k * math.log(theta)
        + math.lgamma(theta)
        + sum(math.lgamma(n) for n in exponents)
        - math.lgamma(theta + total)
    )
    return m**total * math.exp(log_val)


def beta_squared_moments(theta):
    """``(E (1-X)**2, E X**2)`` for ``X ~ Beta(1, theta)``."""
    _check_theta(theta)
    return theta / (theta + 2.0), 2.0 / ((theta + 1.0) * (theta + 2.0))


def same_block_probability(theta, terms=None):
    """Probability that two uniform points fall in the same GEM block.

    Sums the geometric series ``sum_j E((1-X)^2)^(j-1) E(X^2)``; with
    ``terms=None`` the closed form ``1/(theta+1)`` is returned instead.
    """
    q, p = beta_squared_moments(theta)
    if terms is None:
        return p / (1.0 - q)
    return math.fsum(p * q**j for j in range(terms))
