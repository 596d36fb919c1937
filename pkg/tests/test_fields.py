"""Grids, states, interpolation, inner products, snapshot round-trips."""

import io
import os

import numpy as np
import pytest

import bohmlab as bl
from bohmlab.errors import GridError, OutOfDomainError, StateError


def test_grid_basic_geometry():
    g = bl.GridSpec(extents=[(-8.0, 8.0), (0.0, 4.0)], npoints=[64, 16])
    assert g.ndim == 2
    assert g.nparticles == 2
    np.testing.assert_allclose(g.spacing, [0.25, 0.25])
    ax = g.axis(0)
    assert ax[0] == -8.0
    assert ax[-1] == 8.0 - 0.25          # upper edge excluded (periodic)
    assert g.cell_volume == 0.25 * 0.25
    assert g.size == 64 * 16


def test_grid_validation():
    with pytest.raises(GridError):
        bl.GridSpec(extents=[(1.0, 1.0)], npoints=[8])
    with pytest.raises(GridError):
        bl.GridSpec(extents=[(0.0, 1.0)], npoints=[1])
    with pytest.raises(GridError):
        bl.GridSpec(extents=[(0.0, 1.0)], npoints=[8], masses=[-1.0])
    with pytest.raises(GridError):
        bl.GridSpec(extents=[(0.0, np.inf)], npoints=[8])
    with pytest.raises(GridError):  # total point budget
        bl.GridSpec(extents=[(0.0, 1.0)] * 4, npoints=[4096] * 4)


def test_grid_particle_map_and_subgrid():
    g = bl.GridSpec(extents=[(-1.0, 1.0)] * 4, npoints=[8, 8, 8, 8],
                    particle_map=[0, 0, 1, 1], masses=[2.0, 3.0])
    np.testing.assert_allclose(g.mass_per_dim, [2.0, 2.0, 3.0, 3.0])
    sub = g.subgrid([2, 3])
    assert sub.ndim == 2
    np.testing.assert_allclose(sub.mass_per_dim, [3.0, 3.0])
    with pytest.raises(GridError):
        g.subgrid([0, 2])  # splits particle 0


def test_wavenumbers_match_fft_convention():
    g = bl.GridSpec(extents=[(0.0, 2 * np.pi)], npoints=[16])
    k = g.wavenumbers(0)
    np.testing.assert_allclose(k, 2 * np.pi * np.fft.fftfreq(16, g.spacing[0]))
    assert k[1] == pytest.approx(1.0)   # box of length 2*pi


def test_gaussian_norm_and_frozen_overlap():
    g = bl.GridSpec(extents=[(-40.0, 40.0)], npoints=[2048])
    a = bl.make_gaussian(g, center=[-5.0], width=[1.0])
    b = bl.make_gaussian(g, center=[5.0], width=[1.0])
    assert bl.norm(a) == pytest.approx(1.0, abs=1e-12)
    # Closed form for unit Gaussians separated by d: |<a,b>| = exp(-d^2/8w^2).
    # d = 10 widths -> exp(-12.5); frozen value:
    assert abs(bl.inner(a, b)) == pytest.approx(3.726653172078671e-06,
                                                rel=1e-6)
    # The overlap only drops below 1e-10 around 13.6 widths; at 14:
    c = bl.make_gaussian(g, center=[-9.0], width=[1.0])
    assert abs(bl.inner(b, c)) == pytest.approx(2.289734845645553e-11,
                                                rel=1e-4)
    assert abs(bl.inner(b, c)) < 1e-10


def test_inner_properties():
    g = bl.GridSpec(extents=[(-10.0, 10.0)], npoints=[256])
    rng = np.random.default_rng(0)
    mk = lambda: bl.WaveFunction(g, rng.normal(size=(256,))
                                 + 1j * rng.normal(size=(256,)))
    a, b, c = mk(), mk(), mk()
    assert bl.inner(a, a).real == pytest.approx(bl.norm(a) ** 2, rel=1e-12)
    assert bl.inner(a, b) == np.conj(bl.inner(b, a))
    al, be = 0.3 - 1.1j, -0.7 + 0.2j
    lin = bl.WaveFunction(g, al * b.amplitudes + be * c.amplitudes)
    assert bl.inner(a, lin) == pytest.approx(
        al * bl.inner(a, b) + be * bl.inner(a, c), rel=1e-12)
    # norm homogeneity
    scaled = bl.WaveFunction(g, (2.7 - 0.4j) * a.amplitudes)
    assert bl.norm(scaled) == pytest.approx(abs(2.7 - 0.4j) * bl.norm(a),
                                            rel=1e-12)


def test_spinor_states_and_density():
    g = bl.GridSpec(extents=[(-5.0, 5.0)], npoints=[64])
    amps = np.zeros((64, 2), dtype=complex)
    amps[:, 0] = 1.0
    amps[:, 1] = 1.0j
    wf = bl.WaveFunction(g, amps)
    np.testing.assert_allclose(wf.density(), 2.0 * np.ones(64))
    assert bl.norm(wf) == pytest.approx(np.sqrt(2.0 * 10.0))


def test_wavefunction_rejects_bad_shapes():
    g = bl.GridSpec(extents=[(-5.0, 5.0)], npoints=[64])
    with pytest.raises(StateError):
        bl.WaveFunction(g, np.ones(65, dtype=complex))
    with pytest.raises(StateError):
        bl.WaveFunction(g, np.full(64, np.nan, dtype=complex))
    wf = bl.WaveFunction(g, np.ones(64, dtype=complex))
    with pytest.raises(ValueError):
        wf.amplitudes[0] = 0.0  # amplitudes are read-only


def test_evaluate_exact_on_nodes():
    g = bl.GridSpec(extents=[(-8.0, 8.0), (-8.0, 8.0)], npoints=[32, 32])
    rng = np.random.default_rng(1)
    amps = rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32))
    wf = bl.WaveFunction(g, amps)
    ij = rng.integers(0, 32, size=(50, 2))
    pts = g.lower + ij * g.spacing
    for (i, j), q in zip(ij, pts):
        got = bl.evaluate(wf, q)
        assert got[0] == amps[i, j]   # bitwise: nodes are snapped


def test_evaluate_reproduces_affine_fields():
    g = bl.GridSpec(extents=[(-8.0, 8.0), (-4.0, 4.0)], npoints=[64, 32])
    mx, my = g.meshes()
    field = (0.3 + 0.25 * mx - 0.75 * my).astype(complex)
    wf = bl.WaveFunction(g, field)
    rng = np.random.default_rng(2)
    # interior points, one cell away from the wrap seam
    pts = np.column_stack([rng.uniform(-7.5, 7.2, 200),
                           rng.uniform(-3.5, 3.2, 200)])
    for q in pts:
        want = 0.3 + 0.25 * q[0] - 0.75 * q[1]
        assert bl.evaluate(wf, q)[0].real == pytest.approx(want, abs=1e-12)


def test_evaluate_node_snap_window():
    g = bl.GridSpec(extents=[(0.0, 1.0)], npoints=[16])
    amps = np.arange(16, dtype=complex)
    wf = bl.WaveFunction(g, amps)
    dq = g.spacing[0]
    # within the snap window the node value is returned exactly
    assert bl.evaluate(wf, [3 * dq + 1e-12])[0] == amps[3]
    # beyond it, plain linear interpolation
    off = bl.evaluate(wf, [3 * dq + 1e-6])[0].real
    assert off == pytest.approx(3.0 + 1e-6 / dq, rel=1e-6)


def test_domain_check_half_open():
    g = bl.GridSpec(extents=[(-2.0, 2.0)], npoints=[16])
    bl.check_in_domain(g, np.array([-2.0]))      # lower edge included
    with pytest.raises(OutOfDomainError):
        bl.check_in_domain(g, np.array([2.0]))   # upper edge excluded
    with pytest.raises(OutOfDomainError):
        bl.check_in_domain(g, np.array([np.nan]))


def test_edge_mass_and_density_floor():
    g = bl.GridSpec(extents=[(-20.0, 20.0)], npoints=[512])
    centered = bl.make_gaussian(g, center=[0.0], width=[1.0])
    assert bl.edge_mass(centered) < 1e-12
    shifted = bl.make_gaussian(g, center=[-19.0], width=[1.0])
    assert bl.edge_mass(shifted) > 0.1
    floor = bl.density_floor(centered)
    assert floor == pytest.approx(1e-12 * bl.mean_density(centered))


def test_product_state_concatenates():
    ga = bl.GridSpec(extents=[(-8.0, 8.0)], npoints=[64])
    gb = bl.GridSpec(extents=[(-4.0, 4.0)], npoints=[32], masses=[3.0])
    a = bl.make_gaussian(ga, center=[1.0], width=[1.0])
    b = bl.make_gaussian(gb, center=[-1.0], width=[0.5])
    ab = bl.product_state(a, b)
    assert ab.grid.ndim == 2
    assert ab.grid.nparticles == 2
    np.testing.assert_allclose(ab.grid.mass_per_dim, [1.0, 3.0])
    assert bl.norm(ab) == pytest.approx(bl.norm(a) * bl.norm(b), rel=1e-12)
    np.testing.assert_array_equal(
        ab.amplitudes[:, :, 0],
        np.outer(a.amplitudes[:, 0], b.amplitudes[:, 0]))


def test_snapshot_roundtrip(tmp_path):
    g = bl.GridSpec(extents=[(-8.0, 8.0), (-4.0, 4.0)], npoints=[32, 16],
                    particle_map=[0, 0], masses=[1.5])
    rng = np.random.default_rng(3)
    amps = (rng.normal(size=(32, 16, 2))
            + 1j * rng.normal(size=(32, 16, 2))).astype(np.complex64)
    wf = bl.WaveFunction(g, amps.astype(np.complex128), time_tag=1.25)
    path = os.fspath(tmp_path / "state.wf")
    bl.save_snapshot(wf, path)
    back = bl.load_snapshot(path)
    assert back.grid == wf.grid
    assert back.time_tag == 1.25
    # payload is complex64 on disk; the round trip is exact at that width
    np.testing.assert_array_equal(back.amplitudes,
                                  amps.astype(np.complex128))


def test_snapshot_rejects_garbage(tmp_path):
    path = os.fspath(tmp_path / "bad.wf")
    with open(path, "wb") as fh:
        fh.write(b"NOTAWAVE" + b"\x00" * 64)
    with pytest.raises(StateError):
        bl.load_snapshot(path)
    g = bl.GridSpec(extents=[(0.0, 1.0)], npoints=[16])
    wf = bl.WaveFunction(g, np.ones(16, dtype=complex))
    good = os.fspath(tmp_path / "good.wf")
    bl.save_snapshot(wf, good)
    blob = open(good, "rb").read()
    with open(good, "wb") as fh:
        fh.write(blob[:-8])   # truncate payload
    with pytest.raises(StateError):
        bl.load_snapshot(good)


def test_wavefunction_csv(tmp_path):
    g = bl.GridSpec(extents=[(0.0, 1.0)], npoints=[4])
    wf = bl.WaveFunction(g, np.array([1.0, 2.0, 3.0, 4.0], dtype=complex))
    path = os.fspath(tmp_path / "wf.csv")
    bl.wavefunction_to_csv(wf, path)
    lines = open(path).read().strip().splitlines()
    assert lines[0] == "q0,re0,im0"
    assert len(lines) == 5
    q, re, im = (float(tok) for tok in lines[2].split(","))
    assert (q, re, im) == (0.25, 2.0, 0.0)
