"""Sampling configurations from the density and testing that they stay there.

Sampling is exact inverse-CDF sampling of the piecewise-constant cell
measure: the spin-summed node density defines a discrete weight per grid
cell, one uniform variate picks the cell, and a second places the point
uniformly inside it.  The same piecewise-linear marginal CDF that this
construction implies is what the Kolmogorov-Smirnov check compares
against, so the test statistic has its textbook null distribution at
time zero by construction.

The equivariance experiment closes the loop: draw an ensemble from
``|Psi_0|^2``, transport every point along the guidance field while the
state itself is propagated, and check each coordinate's marginal of the
transported ensemble against ``|Psi_T|^2``.  A deliberately corrupted
velocity field (``velocity_scale != 1``) should and does fail this.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigError, StateError
from .guidance import integrate_ensemble

# Two-sided Kolmogorov-Smirnov acceptance thresholds c(alpha) / sqrt(n).
KS_COEFFICIENTS = {0.01: 1.63, 0.05: 1.36, 0.10: 1.22}

MIN_KS_SAMPLES = 100


@dataclass
class SampleSet:
    """Configurations drawn from a state's density."""

    configurations: np.ndarray
    seed: int
    time_tag: float = 0.0

    @property
    def n(self):
        return self.configurations.shape[0]


@dataclass
class FitReport:
    """Outcome of one distributional check.

    ``passed`` is always equivalent to ``statistic <= threshold``;
    ``aborted_count`` records trajectories excluded upstream when the
    check runs on transported ensembles.
    """

    kind: str
    dim: int
    n: int
    statistic: float
    threshold: float
    passed: bool
    alpha: float = 0.01
    aborted_count: int | None = None

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim, "n": self.n,
                "statistic": self.statistic, "threshold": self.threshold,
                "pass": self.passed, "alpha": self.alpha,
                "aborted_count": self.aborted_count}


def sample(wf, n, seed):
    """Draw ``n`` configurations from the state's density.

    Deterministic for a given seed: one block of uniforms picks cells by
    inverse CDF, a second block jitters uniformly within each cell (in
    that order).  Sampled points always lie strictly inside the box.
    """
    n = int(n)
    if n < 1:
        raise ConfigError(f"need at least one sample, got {n}")
    g = wf.grid
    weights = wf.density().reshape(-1)
    cum = np.cumsum(weights)
    total = float(cum[-1])
    if not np.isfinite(total) or total <= 0.0:
        raise StateError(f"cannot sample from a state with total density "
                         f"{total}")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    jitter = rng.random((n, g.ndim))
    idx = np.searchsorted(cum, u * total, side="right")
    idx = np.minimum(idx, g.size - 1)
    cells = np.column_stack(np.unravel_index(idx, g.npoints)).astype(float)
    coords = g.lower + (cells + jitter) * g.spacing
    return SampleSet(configurations=coords, seed=int(seed),
                     time_tag=wf.time_tag)


def marginal_weights(wf, dim):
    """Normalized per-cell mass of one coordinate's marginal."""
    rho = wf.density()
    axes = tuple(d for d in range(wf.grid.ndim) if d != dim)
    w = np.sum(rho, axis=axes) if axes else rho.copy()
    total = float(np.sum(w))
    if total <= 0.0:
        raise StateError("marginal has no mass")
    return w / total


def marginal_cdf(wf, dim):
    """Piecewise-linear CDF of the sampling measure's marginal.

    Returns a vectorized callable on coordinates; exactly the law of
    `sample` projected to ``dim``, i.e. linear across each cell.
    """
    g = wf.grid
    w = marginal_weights(wf, dim)
    cum = np.concatenate([[0.0], np.cumsum(w)])
    lo = g.lower[dim]
    inv_dq = 1.0 / g.spacing[dim]
    npts = g.npoints[dim]

    def cdf(x):
        s = (np.asarray(x, dtype=float) - lo) * inv_dq
        s = np.clip(s, 0.0, float(npts))
        j = np.minimum(s.astype(np.int64), npts - 1)
        frac = s - j
        return cum[j] + w[j] * frac

    return cdf


def ks_statistic(values, cdf):
    """Two-sided Kolmogorov-Smirnov distance of a sample from a CDF."""
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    f = cdf(x)
    grid_hi = np.arange(1, n + 1) / n
    grid_lo = np.arange(0, n) / n
    return float(np.max(np.maximum(grid_hi - f, f - grid_lo)))


def ks_marginal(points, wf, dim, alpha=0.01, aborted_count=None):
    """KS check of one coordinate of ``points`` against the state's marginal.

    ``points`` may be a SampleSet or a plain ``(n, d)`` array.  Requires
    at least 100 points so the asymptotic threshold coefficient is
    defensible.
    """
    coords = points.configurations if isinstance(points, SampleSet) \
        else np.atleast_2d(np.asarray(points, dtype=float))
    if alpha not in KS_COEFFICIENTS:
        raise ConfigError(f"no KS coefficient for alpha={alpha}; "
                          f"known: {sorted(KS_COEFFICIENTS)}")
    n = coords.shape[0]
    if n < MIN_KS_SAMPLES:
        raise ConfigError(f"KS check needs at least {MIN_KS_SAMPLES} "
                          f"points, got {n}")
    if not 0 <= dim < wf.grid.ndim:
        raise ConfigError(f"dimension {dim} out of range")
    stat = ks_statistic(coords[:, dim], marginal_cdf(wf, dim))
    threshold = KS_COEFFICIENTS[alpha] / np.sqrt(n)
    return FitReport(kind="ks", dim=dim, n=n, statistic=stat,
                     threshold=float(threshold), passed=bool(stat <= threshold),
                     alpha=alpha, aborted_count=aborted_count)


@dataclass
class EquivarianceResult:
    """Transported-ensemble distribution check, one report per dimension."""

    reports: list
    n: int
    aborted_count: int
    max_abort_frac: float
    velocity_scale: float
    endpoints: np.ndarray = dc_field(repr=False, default=None)

    @property
    def valid(self):
        """Too many aborts mean the experiment itself is compromised."""
        return self.aborted_count <= self.max_abort_frac * self.n

    @property
    def passed(self):
        return self.valid and all(r.passed for r in self.reports)


def equivariance_experiment(series, nsteps, dt_traj, n, seed,
                            velocity_scale=1.0, threads=1, alpha=0.01,
                            max_abort_frac=1e-3):
    """Sample, transport, and compare marginals against the evolved state.

    ``series`` must be a SnapshotSeries covering ``nsteps`` trajectory
    steps from its origin (the series is reusable across seeds: the
    propagation does not depend on the sampled ensemble).
    """
    nsteps = int(nsteps)
    wf0 = series.states[0]
    t_end = series.t0 + nsteps * dt_traj
    target = series.state_at(t_end)
    drawn = sample(wf0, n, seed)
    res = integrate_ensemble(series, drawn.configurations, nsteps, dt_traj,
                             velocity_scale=velocity_scale, threads=threads)
    endpoints = res.endpoints(completed_only=True)
    aborted = res.aborted_count
    if endpoints.shape[0] < MIN_KS_SAMPLES:
        raise StateError(f"only {endpoints.shape[0]} trajectories survived; "
                         "the experiment is meaningless")
    reports = [ks_marginal(endpoints, target, d, alpha=alpha,
                           aborted_count=aborted)
               for d in range(wf0.grid.ndim)]
    return EquivarianceResult(reports=reports, n=int(n),
                              aborted_count=aborted,
                              max_abort_frac=max_abort_frac,
                              velocity_scale=velocity_scale,
                              endpoints=endpoints)


def points_to_csv(points, path, header=None):
    """Write an ``(n, d)`` coordinate array as CSV."""
    pts = points.configurations if isinstance(points, SampleSet) else points
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    cols = header or [f"q{d}" for d in range(pts.shape[1])]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for row in pts:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
