"""Sample farms, scans, moment tables and critical-point estimation.

Every sample ``i`` of a run with master seed ``s`` is drawn from the stream
``sample_rng(s, i)``, so results do not depend on how samples are spread
over worker processes.  Per-sample observables are collected into a
feature matrix (one row per sample, columns named in `FEATURES`) and
reduced in sample order.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .lattice import PERIODIC, build_lattice
from .looptracer import trace_loops
from .observables import (
    MomentEstimate,
    default_theta,
    length_fractions,
    mass_estimate,
    pair_connectivity_fraction,
    shadow_fractions,
)
from .pdref import pd_moment_exact
from .realisation import sample_realisation, sample_rng

log = logging.getLogger(__name__)

# reference constants quoted for comparison only; none is simulated here
P_C_PERCOLATION = 0.2488
BETA_C_PERCOLATION = 0.286
BETA_C_RANDOM_CLUSTER_Q2 = 0.443
BETA_C_BAND = (0.313, 0.361)
BETA_C_WEIGHTED = {0.0: 0.53, 0.5: 0.496, 1.0: 0.59}

POWERS = tuple(range(2, 11))
ORDERS = (2, 3, 4, 5)
PAIRS = tuple((a, b) for a in ORDERS for b in ORDERS if a <= b)
FEATURES = (
    [f"S{n}" for n in POWERS]
    + [f"D{a}_{b}" for a, b in PAIRS]
    + ["S2_length", "l1", "conn", "loops", "events"]
)
COL = {name: i for i, name in enumerate(FEATURES)}

MODES = ("scan", "moments", "betac", "partition-dump", "pd-check")
FORMATS = ("csv", "json")
LONG_RUNNING_SIZE = 64


class ConfigError(ValueError):
    pass


class BracketError(RuntimeError):
    """The crossing criterion does not change sign over the search interval."""


@dataclass
class ExperimentConfig:
    size: int = 24
    bc: str = PERIODIC
    u: float = 1.0
    beta: float = 1.0
    beta_min: float | None = None
    beta_max: float | None = None
    beta_steps: int = 11
    theta: str = "auto"
    samples: int = 200
    max_samples: int | None = None
    target_stderr: float | None = None
    seed: int = 0
    workers: int = 1
    mode: str = "moments"
    out: str | None = None
    format: str = "csv"
    scatter: bool = False
    tol: float = 0.01
    crossing_exponent: float = 0.75
    z: float = 2.0

    def validate(self):
        if int(self.size) != self.size or self.size < 1:
            raise ConfigError("size must be a positive integer")
        if self.bc == PERIODIC and self.size < 3:
            raise ConfigError("periodic boundary conditions require size >= 3")
        if not 0 <= self.u <= 1:
            raise ConfigError("u must lie in [0, 1]")
        if not self.beta > 0:
            raise ConfigError("beta must be positive")
        if self.samples < 1:
            raise ConfigError("samples must be at least 1")
        if self.max_samples is not None and self.max_samples < self.samples:
            raise ConfigError("max_samples must be at least samples")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        self.thetas()
        if self.mode in ("scan", "betac"):
            if self.beta_min is None or self.beta_max is None:
                raise ConfigError(f"mode {self.mode} needs beta_min and beta_max")
            if not 0 < self.beta_min < self.beta_max:
                raise ConfigError("need 0 < beta_min < beta_max")
            if self.beta_steps < 2 and self.mode == "scan":
                raise ConfigError("a scan needs at least two grid points")
        if self.mode == "betac" and not self.tol > 0:
            raise ConfigError("tol must be positive")
        return self

    def thetas(self):
        """Poisson-Dirichlet parameters requested for the estimators."""
        t = str(self.theta)
        if t == "auto":
            return (default_theta(self.u),)
        if t == "both":
            return (0.5, 1.0)
        try:
            val = float(t)
        except ValueError:
            raise ConfigError(f"theta must be auto, both or a positive number, got {t!r}") from None
        if not val > 0:
            raise ConfigError("theta must be positive")
        return (val,)

    def beta_grid(self):
        return np.linspace(self.beta_min, self.beta_max, self.beta_steps)

    def provenance(self, beta=None, size=None):
        return {
            "u": self.u,
            "beta": self.beta if beta is None else float(beta),
            "L": self.size if size is None else size,
            "bc": self.bc,
            "seed": self.seed,
        }


# -- sample farm --------------------------------------------------------------


def sample_features(lattice, beta, u, seed, index, pairs=None):
    """Observables of one realisation as a row aligned with `FEATURES`."""
    real = sample_realisation(lattice, beta, u, sample_rng(seed, index))
    loops = trace_loops(real)
    f = shadow_fractions(loops).fractions
    row = np.empty(len(FEATURES))
    fp = {n: f**n for n in POWERS}
    sums = {n: math.fsum(fp[n]) for n in POWERS}
    for n in POWERS:
        row[COL[f"S{n}"]] = sums[n]
    for a, b in PAIRS:
        row[COL[f"D{a}_{b}"]] = sums[a] * sums[b] - sums[a + b]
    row[COL["S2_length"]] = math.fsum(length_fractions(loops).fractions ** 2)
    row[COL["l1"]] = f[0]
    row[COL["conn"]] = pair_connectivity_fraction(loops, *pairs) if pairs is not None else np.nan
    row[COL["loops"]] = loops.loop_count
    row[COL["events"]] = real.n_events
    return row


def _pairs_for(lattice):
    if lattice.side_length is None or lattice.side_length < 2:
        return None
    x = np.arange(lattice.n_sites)
    return x, lattice.antipode(x)


def _collect_block(args):
    size, bc, beta, u, seed, start, stop = args
    lattice = build_lattice(size, bc)
    pairs = _pairs_for(lattice)
    return np.array([sample_features(lattice, beta, u, seed, i, pairs) for i in range(start, stop)])


def collect(size, bc, beta, u, seed, stop, start=0, workers=1):
    """Feature rows for samples ``start .. stop-1``, in sample order."""
    if stop <= start:
        return np.empty((0, len(FEATURES)))
    if workers == 1:
        return _collect_block((size, bc, beta, u, seed, start, stop))
    n_blocks = min(stop - start, 4 * workers)
    edges = np.linspace(start, stop, n_blocks + 1).astype(int)
    jobs = [(size, bc, beta, u, seed, int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return np.concatenate(list(pool.map(_collect_block, jobs)))


def collect_adaptive(size, bc, beta, u, seed, n0, target=None, cap=None, workers=1):
    """Collect ``n0`` samples, then keep doubling until the stderr of ``S2``
    drops to ``target`` or ``cap`` samples are reached."""
    data = collect(size, bc, beta, u, seed, n0, workers=workers)
    if target is None:
        return data
    cap = cap if cap is not None else n0
    while len(data) < cap:
        est = estimate(data, "S2")
        if est.stderr <= target:
            break
        n = min(2 * len(data), cap)
        data = np.concatenate([data, collect(size, bc, beta, u, seed, n, start=len(data), workers=workers)])
    return data


# -- reductions -----------------------------------------------------------------


def estimate(data, name):
    return MomentEstimate.from_samples(name, data[:, COL[name]])


def _moment_column(exponents):
    if len(exponents) == 1:
        return f"S{exponents[0]}"
    a, b = sorted(exponents)
    return f"D{a}_{b}"


def mass_values(data, exponents, theta):
    """``(m, stderr)`` of the mass estimator for one exponent tuple."""
    return mass_estimate(estimate(data, _moment_column(exponents)), exponents, theta)


def theta_discrimination(data, theta, orders=ORDERS):
    """How constant ``m_n`` is across ``n`` under a given theta.

    Returns a dict with the values, their errors, the spread (max - min),
    the end-to-end drift ``m_last - m_first`` with a delta-method error that
    accounts for the correlation between power sums of the same samples, and
    whether the sequence is monotone.
    """
    cols = [COL[f"S{n}"] for n in orders]
    x = data[:, cols]
    means = x.mean(axis=0)
    vals = np.array([mass_estimate(float(m), (n,), theta)[0] for m, n in zip(means, orders)])
    # d m_n / d E_n = m_n / (n E_n)
    grads = vals / (np.array(orders) * means)
    cov = np.atleast_2d(np.cov(x, rowvar=False)) / len(x)
    errs = np.sqrt(np.diag(cov)) * grads
    g = np.zeros(len(orders))
    g[0], g[-1] = -grads[0], grads[-1]
    steps = np.diff(vals)
    return {
        "theta": theta,
        "orders": tuple(orders),
        "values": vals,
        "errors": errs,
        "spread": float(vals.max() - vals.min()),
        "drift": float(vals[-1] - vals[0]),
        "drift_stderr": float(math.sqrt(g @ cov @ g)),
        "monotone": bool(np.all(steps > 0) or np.all(steps < 0)),
    }


def crossing_statistic(data, size, exponent):
    """``sqrt(E sum f_j**2) * L**exponent`` with its delta-method error."""
    est = estimate(data, "S2")
    val = math.sqrt(est.mean) * size**exponent
    return val, val * est.stderr / (2.0 * est.mean)


# -- modes --------------------------------------------------------------------

ROW_FIELDS = ("label", "u", "beta", "L", "mean", "stderr", "n_samples", "bc", "seed", "theta")


def _row(cfg, label, mean, stderr, n, theta=None, beta=None, size=None):
    row = {"label": label, **cfg.provenance(beta, size)}
    row.update(mean=float(mean), stderr=float(stderr), n_samples=int(n), theta=theta if theta is not None else "")
    return {k: row[k] for k in ROW_FIELDS}


def _warn_scale(cfg):
    if cfg.size >= LONG_RUNNING_SIZE:
        log.warning("L=%d is a long-running size; expect hours and large memory use", cfg.size)


def run_scan(cfg):
    """Second moment of the shadow partition and the derived mass over a beta grid."""
    cfg.validate()
    _warn_scale(cfg)
    rows = []
    for beta in cfg.beta_grid():
        data = collect_adaptive(
            cfg.size, cfg.bc, float(beta), cfg.u, cfg.seed, cfg.samples,
            cfg.target_stderr, cfg.max_samples, cfg.workers,
        )
        s2 = estimate(data, "S2")
        rows.append(_row(cfg, "S2", s2.mean, s2.stderr, s2.n_samples, beta=beta))
        for theta in cfg.thetas():
            m, err = mass_estimate(s2, (2,), theta)
            rows.append(_row(cfg, "m", m, err, s2.n_samples, theta, beta=beta))
        if cfg.scatter:
            for i, v in enumerate(data[:, COL["S2"]]):
                rows.append(_row(cfg, f"S2#{i}", v, float("nan"), 1, beta=beta))
    return rows


def moment_rows(cfg, data, thetas):
    rows = []
    n = len(data)
    for name in [f"S{k}" for k in ORDERS] + [f"D{a}_{b}" for a, b in PAIRS]:
        est = estimate(data, name)
        rows.append(_row(cfg, name, est.mean, est.stderr, n))
    conn = estimate(data, "conn")
    rows.append(_row(cfg, "conn_antipodal", conn.mean, conn.stderr, n))
    for theta in thetas:
        for k in ORDERS:
            m, err = mass_values(data, (k,), theta)
            rows.append(_row(cfg, f"m_{k}", m, err, n, theta))
        for a, b in PAIRS:
            m, err = mass_values(data, (a, b), theta)
            rows.append(_row(cfg, f"m_{a}_{b}", m, err, n, theta))
    return rows


def run_moments(cfg, data=None):
    """Tables of ``m_n`` and ``m_{a,b}`` at one beta, with raw moments."""
    cfg.validate()
    _warn_scale(cfg)
    if data is None:
        data = collect_adaptive(
            cfg.size, cfg.bc, cfg.beta, cfg.u, cfg.seed, cfg.samples,
            cfg.target_stderr, cfg.max_samples, cfg.workers,
        )
    return moment_rows(cfg, data, cfg.thetas())


PD_CHECK_SETS = ((2,), (3,), (4,), (5,), (2, 2), (3, 2), (3, 3), (5, 5))


def run_pd_check(cfg, data=None):
    """Ratios of simulated distinct moments to ``m**sum(n)`` times the PD value.

    ``m`` is taken from the second moment under each theta, so the ``(2,)``
    ratio is one by construction and the others test the PD shape.
    """
    cfg.validate()
    if data is None:
        data = collect_adaptive(
            cfg.size, cfg.bc, cfg.beta, cfg.u, cfg.seed, cfg.samples,
            cfg.target_stderr, cfg.max_samples, cfg.workers,
        )
    n = len(data)
    rows = []
    for theta in (0.5, 1.0):
        m, _ = mass_values(data, (2,), theta)
        for exps in PD_CHECK_SETS:
            est = estimate(data, _moment_column(exps))
            ref = pd_moment_exact(theta, exps, m)
            label = "ratio_" + "_".join(map(str, exps))
            rows.append(_row(cfg, label, est.mean / ref, est.stderr / ref, n, theta))
        disc = theta_discrimination(data, theta)
        rows.append(_row(cfg, "spread_m_n", disc["spread"], float("nan"), n, theta))
        rows.append(_row(cfg, "drift_m_n", disc["drift"], disc["drift_stderr"], n, theta))
    return rows


def dump_partitions(cfg, lengths=True):
    """Yield one record per sample with its sorted fraction lists."""
    cfg.validate()
    _warn_scale(cfg)
    lattice = build_lattice(cfg.size, cfg.bc)
    for i in range(cfg.samples):
        loops = trace_loops(sample_realisation(lattice, cfg.beta, cfg.u, sample_rng(cfg.seed, i)))
        rec = {"sample": i, **cfg.provenance()}
        rec["shadow"] = shadow_fractions(loops).fractions.tolist()
        if lengths:
            rec["length"] = length_fractions(loops).fractions.tolist()
        yield rec


@dataclass
class BetaCEstimate:
    u: float
    beta_c: float
    lo: float
    hi: float
    sizes: tuple
    criterion: str
    resolved: bool
    n_samples: int
    trace: list = field(default_factory=list)

    @property
    def width(self):
        return self.hi - self.lo


BETAC_FIELDS = ("u", "beta_c", "lo", "hi", "sizes", "criterion", "resolved", "n_samples", "bc", "seed")


def estimate_beta_c(cfg, sizes=None):
    """Bisection on the crossing of ``sqrt(E S2) * L**a`` between two sizes.

    Below the transition the statistic falls with L, above it grows (the
    mass is size independent, so it scales like ``L**a``).  A midpoint is
    classified only when the gap between the two sizes exceeds ``z``
    standard errors; otherwise the sample count is doubled up to
    ``max_samples``, and if the sign is still unresolved the search stops
    and reports its current bracket with ``resolved=False``.
    """
    cfg.validate()
    sizes = tuple(sizes) if sizes is not None else (cfg.size, 2 * cfg.size)
    if len(sizes) != 2 or sizes[0] >= sizes[1]:
        raise ConfigError("beta_c estimation needs two increasing sizes")
    a = cfg.crossing_exponent
    descriptor = f"crossing of sqrt(E[sum f^2])*L^{a:g} between L={sizes[0]} and L={sizes[1]}"
    cap = cfg.max_samples or cfg.samples
    used = 0
    trace = []

    def gap(beta):
        nonlocal used
        n = cfg.samples
        cache = {}
        while True:
            vals = []
            for L in sizes:
                seed = [cfg.seed, L]
                old = cache.get(L)
                start = 0 if old is None else len(old)
                new = collect(L, cfg.bc, beta, cfg.u, seed, n, start=start, workers=cfg.workers)
                cache[L] = new if old is None else np.concatenate([old, new])
                vals.append(crossing_statistic(cache[L], L, a))
            g = vals[1][0] - vals[0][0]
            err = math.hypot(vals[0][1], vals[1][1])
            if abs(g) > cfg.z * err or n >= cap:
                used += 2 * n
                trace.append((beta, g, err, n))
                log.info("beta=%.5f gap=%+.4g +- %.2g (n=%d)", beta, g, err, n)
                return g, err
            n = min(2 * n, cap)

    lo, hi = cfg.beta_min, cfg.beta_max
    g_lo, _ = gap(lo)
    g_hi, _ = gap(hi)
    if not (g_lo < 0 < g_hi):
        raise BracketError(
            f"crossing not bracketed on [{lo}, {hi}]: gap {g_lo:+.4g} at beta_min, {g_hi:+.4g} at beta_max"
        )
    resolved = True
    while hi - lo > cfg.tol:
        mid = 0.5 * (lo + hi)
        g, err = gap(mid)
        if abs(g) <= cfg.z * err:
            resolved = False
            break
        if g < 0:
            lo = mid
        else:
            hi = mid
    return BetaCEstimate(cfg.u, 0.5 * (lo + hi), lo, hi, sizes, descriptor, resolved, used, trace)


def betac_row(cfg, est):
    return {
        "u": est.u,
        "beta_c": est.beta_c,
        "lo": est.lo,
        "hi": est.hi,
        "sizes": " ".join(map(str, est.sizes)),
        "criterion": est.criterion,
        "resolved": est.resolved,
        "n_samples": est.n_samples,
        "bc": cfg.bc,
        "seed": cfg.seed,
    }


# -- output -------------------------------------------------------------------


def write_rows(rows, fh, fmt, fields=ROW_FIELDS):
    if fmt == "csv":
        writer = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in fields})
    else:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_partitions(records, fh, fmt):
    """JSON lines, or CSV rows of provenance plus space-separated fractions."""
    if fmt == "json":
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
        return
    fields = ["sample", "u", "beta", "L", "bc", "seed", "shadow", "length"]
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(fields)
    for rec in records:
        writer.writerow(
            [rec[k] for k in fields[:6]]
            + [" ".join(repr(x) for x in rec[k]) if k in rec else "" for k in fields[6:]]
        )


def run(cfg, fh=None):
    """Dispatch on ``cfg.mode`` and write the output."""
    cfg.validate()
    own = fh is None
    if own:
        fh = open(cfg.out, "w", newline="") if cfg.out else sys.stdout
    try:
        if cfg.mode == "scan":
            write_rows(run_scan(cfg), fh, cfg.format)
        elif cfg.mode == "moments":
            write_rows(run_moments(cfg), fh, cfg.format)
        elif cfg.mode == "pd-check":
            write_rows(run_pd_check(cfg), fh, cfg.format)
        elif cfg.mode == "partition-dump":
            write_partitions(dump_partitions(cfg), fh, cfg.format)
        elif cfg.mode == "betac":
            est = estimate_beta_c(cfg)
            write_rows([betac_row(cfg, est)], fh, cfg.format, BETAC_FIELDS)
    finally:
        if own and fh is not sys.stdout:
            fh.close()


def config_from_dict(d):
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    clean = {k.replace("-", "_"): v for k, v in d.items()}
    unknown = set(clean) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**clean)


def config_to_dict(cfg):
    return asdict(cfg)
