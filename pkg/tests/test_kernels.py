"""Backend parity: compiled kernels must match the numpy reference bitwise."""

import os
import subprocess
import sys

import numpy as np
import pytest

import bohmlab as bl
from bohmlab._kernels import (BACKEND, _ref, available_backends,
                              velocity_many)

try:
    from bohmlab._kernels import _core
except ImportError:
    _core = None

needs_core = pytest.mark.skipif(_core is None,
                                reason="compiled backend not built")


def descriptors(g):
    """Raw (npoints, strides, lowers, inv_dq) arrays the kernels take."""
    return (np.asarray(g.npoints, dtype=np.int64), g.strides, g.lower,
            1.0 / g.spacing)


def random_values(rng, size, nspin):
    a = rng.standard_normal((size, nspin)) \
        + 1j * rng.standard_normal((size, nspin))
    return np.ascontiguousarray(a)


def query_points(rng, g, n):
    """Interior points plus nodes, near-node offsets, and wrapped copies."""
    span = g.upper - g.lower
    pts = [rng.uniform(g.lower, g.upper, size=(n, g.ndim))]
    nodes = np.stack([m.reshape(-1) for m in g.meshes()], axis=1)
    idx = rng.integers(0, nodes.shape[0], size=12)
    pts.append(nodes[idx])
    pts.append(nodes[idx] + 0.5e-9 * g.spacing)   # inside the snap window
    pts.append(nodes[idx] + 5e-9 * g.spacing)     # just outside it
    pts.append(pts[0][:8] + span)                 # periodic images
    pts.append(pts[0][:8] - span)
    return np.ascontiguousarray(np.concatenate(pts))


def test_backend_report():
    assert "numpy" in available_backends()
    assert BACKEND in available_backends()
    assert bl.backend() == BACKEND


def test_locate_snap_and_wrap():
    npoints = np.array([8], dtype=np.int64)
    lowers = np.array([0.0])
    inv_dq = np.array([1.0])
    pts = np.array([[3.0 + 5e-10], [3.0 + 2e-9], [-1.0], [8.25],
                    [8.0 - 5e-10]])
    i0, frac = _ref.locate(pts, npoints, lowers, inv_dq)
    assert i0[0, 0] == 3 and frac[0, 0] == 0.0    # snapped onto the node
    assert i0[1, 0] == 3 and frac[1, 0] > 0.0     # outside the snap window
    assert i0[2, 0] == 7 and frac[2, 0] == 0.0    # wraps below the box
    assert i0[3, 0] == 0 and frac[3, 0] == 0.25   # wraps above the box
    assert i0[4, 0] == 0 and frac[4, 0] == 0.0    # snap across the seam


@needs_core
@pytest.mark.parametrize("seed,nspin,extents,npoints", [
    (11, 1, [(-3.0, 5.0), (-2.0, 2.0)], [24, 16]),
    (12, 2, [(-3.0, 5.0), (-2.0, 2.0)], [24, 16]),
    (13, 1, [(0.0, 1.0), (-1.0, 1.0), (2.0, 3.0)], [12, 10, 8]),
])
def test_interp_backends_identical(seed, nspin, extents, npoints):
    rng = np.random.default_rng(seed)
    g = bl.GridSpec(extents=extents, npoints=npoints)
    values = random_values(rng, g.size, nspin)
    pts = query_points(rng, g, 200)
    desc = descriptors(g)
    a = _ref.interp_batch(values, *desc, pts)
    b = np.asarray(_core.interp_batch(values, *desc, pts))
    assert np.array_equal(a, b)


@needs_core
@pytest.mark.parametrize("seed,nspin,extents,npoints", [
    (21, 1, [(-3.0, 5.0), (-2.0, 2.0)], [24, 16]),
    (22, 2, [(-3.0, 5.0), (-2.0, 2.0)], [24, 16]),
    (23, 1, [(0.0, 1.0), (-1.0, 1.0), (2.0, 3.0)], [12, 10, 8]),
])
def test_velocity_backends_identical(seed, nspin, extents, npoints):
    rng = np.random.default_rng(seed)
    g = bl.GridSpec(extents=extents, npoints=npoints,
                    masses=[1.0 + 0.5 * p for p in range(len(extents))])
    values = random_values(rng, g.size, nspin)
    grads = np.ascontiguousarray(
        np.stack([random_values(rng, g.size, nspin) for _ in range(g.ndim)]))
    inv_mass = 1.0 / g.mass_per_dim
    pts = query_points(rng, g, 200)
    desc = descriptors(g)
    v1, r1 = _ref.velocity_batch(values, grads, *desc, inv_mass, pts)
    v2, r2 = _core.velocity_batch(values, grads, *desc, inv_mass, pts)
    assert np.array_equal(v1, np.asarray(v2))
    assert np.array_equal(r1, np.asarray(r2))


@needs_core
def test_core_accepts_readonly_buffers():
    # Wave-function amplitude arrays are handed out write-protected, so
    # the compiled kernels must take read-only buffers.
    rng = np.random.default_rng(31)
    g = bl.GridSpec(extents=[(-2.0, 2.0)] * 2, npoints=[16, 16])
    values = random_values(rng, g.size, 1)
    pts = np.ascontiguousarray(rng.uniform(-2.0, 2.0, size=(20, 2)))
    for arr in (values, pts):
        arr.setflags(write=False)
    desc = descriptors(g)
    a = _ref.interp_batch(values, *desc, pts)
    b = np.asarray(_core.interp_batch(values, *desc, pts))
    assert np.array_equal(a, b)


@needs_core
def test_core_dimension_cap():
    d = 17
    npoints = np.full(d, 2, dtype=np.int64)
    strides = np.ones(d, dtype=np.int64)
    for j in range(d - 2, -1, -1):
        strides[j] = strides[j + 1] * npoints[j + 1]
    lowers = np.zeros(d)
    inv_dq = np.ones(d)
    values = np.zeros((2 ** d, 1), dtype=np.complex128)
    pts = np.full((1, d), 0.5)
    with pytest.raises(ValueError):
        _core.interp_batch(values, npoints, strides, lowers, inv_dq, pts)


def test_velocity_many_threads_bitwise():
    rng = np.random.default_rng(41)
    g = bl.GridSpec(extents=[(-4.0, 4.0), (-4.0, 4.0)], npoints=[32, 32])
    values = random_values(rng, g.size, 1)
    grads = np.ascontiguousarray(
        np.stack([random_values(rng, g.size, 1) for _ in range(2)]))
    inv_mass = np.ones(2)
    pts = np.ascontiguousarray(rng.uniform(-4.0, 4.0, size=(101, 2)))
    npts, strides, lowers, inv_dq = descriptors(g)
    v1, r1 = velocity_many(values, grads, npts, strides, lowers, inv_dq,
                           inv_mass, pts, threads=1)
    v3, r3 = velocity_many(values, grads, npts, strides, lowers, inv_dq,
                           inv_mass, pts, threads=3)
    assert np.array_equal(np.asarray(v1), np.asarray(v3))
    assert np.array_equal(np.asarray(r1), np.asarray(r3))


def test_pure_python_env_forces_numpy_backend():
    env = dict(os.environ, BOHMLAB_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import bohmlab; print(bohmlab.backend())"],
        capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "numpy"
