"""Density sampling, marginal CDFs, KS checks, transported ensembles."""

import numpy as np
import pytest
import scipy.stats

import bohmlab as bl
from bohmlab.equilibrium import (KS_COEFFICIENTS, equivariance_experiment,
                                 ks_marginal, ks_statistic, marginal_cdf,
                                 points_to_csv, sample)
from bohmlab.errors import ConfigError
from bohmlab.guidance import SnapshotSeries


def test_sample_reproducible_and_inside_box():
    g = bl.GridSpec(extents=[(-10.0, 10.0), (-6.0, 6.0)], npoints=[64, 32])
    wf = bl.make_gaussian(g, center=[1.0, -1.0], width=[1.5, 1.0])
    a = sample(wf, 500, seed=42)
    b = sample(wf, 500, seed=42)
    c = sample(wf, 500, seed=43)
    assert np.array_equal(a.configurations, b.configurations)
    assert not np.array_equal(a.configurations, c.configurations)
    assert a.n == 500 and a.seed == 42
    pts = a.configurations
    assert np.all(pts >= g.lower) and np.all(pts < g.upper)


def test_sample_point_mass_stays_in_cell():
    g = bl.GridSpec(extents=[(-8.0, 8.0), (-8.0, 8.0)], npoints=[32, 32])
    amps = np.zeros(g.npoints + (1,), dtype=complex)
    amps[10, 7, 0] = 1.0
    wf = bl.WaveFunction(g, amps)
    pts = sample(wf, 200, seed=1).configurations
    lo = g.lower + np.array([10, 7]) * g.spacing
    hi = lo + g.spacing
    assert np.all(pts >= lo) and np.all(pts < hi)


def test_sample_two_cell_weights():
    g = bl.GridSpec(extents=[(0.0, 16.0)], npoints=[16])
    amps = np.zeros((16, 1), dtype=complex)
    amps[3, 0] = 1.0
    amps[12, 0] = np.sqrt(3.0)          # 25% / 75% split
    wf = bl.WaveFunction(g, amps)
    pts = sample(wf, 20000, seed=7).configurations[:, 0]
    n_low = int(np.sum(pts < 8.0))
    assert abs(n_low - 5000) < 250      # ~4 sigma of the binomial


def test_ks_statistic_matches_scipy():
    g = bl.GridSpec(extents=[(-10.0, 10.0)], npoints=[128])
    wf = bl.make_gaussian(g, center=[0.5], width=[1.2])
    cdf = marginal_cdf(wf, 0)
    vals = sample(wf, 800, seed=3).configurations[:, 0]
    ours = ks_statistic(vals, cdf)
    ref = scipy.stats.kstest(vals, cdf).statistic
    assert ours == pytest.approx(ref, abs=1e-12)


def test_marginal_cdf_shape():
    g = bl.GridSpec(extents=[(-10.0, 10.0)], npoints=[128])
    wf = bl.make_gaussian(g, center=[0.0], width=[1.5])
    cdf = marginal_cdf(wf, 0)
    assert cdf(-10.0) == 0.0
    assert cdf(10.0) == pytest.approx(1.0, abs=1e-12)
    x = np.linspace(-10.0, 10.0, 500)
    f = cdf(x)
    assert np.all(np.diff(f) >= 0.0)
    # linear across a cell: the midpoint value is the average
    x0 = -10.0 + 64 * g.spacing[0]
    assert cdf(x0 + 0.5 * g.spacing[0]) == pytest.approx(
        0.5 * (cdf(x0) + cdf(x0 + g.spacing[0])), abs=1e-14)


def test_ks_accepts_the_sampling_law():
    g = bl.GridSpec(extents=[(-10.0, 10.0)], npoints=[128])
    wf = bl.make_gaussian(g, center=[0.5], width=[1.2])
    rep = ks_marginal(sample(wf, 5000, seed=11), wf, 0)
    assert rep.passed
    assert rep.threshold == KS_COEFFICIENTS[0.01] / np.sqrt(5000)
    assert rep.kind == "ks" and rep.dim == 0 and rep.n == 5000
    d = rep.to_dict()
    assert d["pass"] is True and d["alpha"] == 0.01


def test_ks_rejects_a_displaced_state():
    g = bl.GridSpec(extents=[(-10.0, 10.0)], npoints=[128])
    wf = bl.make_gaussian(g, center=[0.0], width=[1.0])
    shifted = bl.make_gaussian(g, center=[1.0], width=[1.0])
    rep = ks_marginal(sample(wf, 2000, seed=5), shifted, 0)
    assert not rep.passed
    assert rep.statistic > 5.0 * rep.threshold


def test_ks_validation():
    g = bl.GridSpec(extents=[(-10.0, 10.0)], npoints=[128])
    wf = bl.make_gaussian(g, center=[0.0], width=[1.0])
    with pytest.raises(ConfigError):
        ks_marginal(sample(wf, 99, seed=1), wf, 0)
    pts = sample(wf, 200, seed=1)
    with pytest.raises(ConfigError):
        ks_marginal(pts, wf, 0, alpha=0.02)
    with pytest.raises(ConfigError):
        ks_marginal(pts, wf, 1)


def test_equivariance_detects_corrupted_flow():
    # A drifting packet: transported samples must track the moving
    # density, and a 1.5x velocity overshoots it detectably.
    g = bl.GridSpec(extents=[(-24.0, 24.0)], npoints=[512])
    wf = bl.make_gaussian(g, center=[-2.0], width=[1.5], wavevector=[2.0])
    h = bl.HamiltonianSpec.free(g)
    series = SnapshotSeries.evolve(wf, h, half_step=0.025, nhalf=40,
                                   dt=0.0125)
    good = equivariance_experiment(series, nsteps=20, dt_traj=0.05,
                                   n=300, seed=99)
    assert good.passed and good.valid
    assert good.aborted_count == 0
    bad = equivariance_experiment(series, nsteps=20, dt_traj=0.05,
                                  n=300, seed=99, velocity_scale=1.5)
    assert not bad.passed
    assert bad.reports[0].statistic > 2.0 * bad.reports[0].threshold


def test_points_csv_roundtrip(tmp_path):
    g = bl.GridSpec(extents=[(-10.0, 10.0), (-6.0, 6.0)], npoints=[64, 32])
    wf = bl.make_gaussian(g, center=[0.0, 0.0], width=[1.5, 1.0])
    s = sample(wf, 50, seed=2)
    path = tmp_path / "pts.csv"
    points_to_csv(s, path, header=["x", "y"])
    assert path.read_text().splitlines()[0] == "x,y"
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(data, s.configurations)
