"""Pure-numpy kernels: periodic multilinear interpolation and velocities.

These are the reference semantics.  The compiled extension in ``_core.pyx``
mirrors every operation in the same order (and is built without fused
multiply-adds), so both backends produce identical values and either can
be used interchangeably.

All kernels take the flattened node array plus raw grid descriptors so
they stay importable without the rest of the package.
"""

import numpy as np

from ..fields import NODE_SNAP


def locate(pts, npoints, lowers, inv_dq):
    """Lattice cell and fractional offset for each point.

    Points within NODE_SNAP lattice units of a node snap onto it, which
    keeps node evaluations exact.  Indices are wrapped periodically.

    Returns ``(i0, frac)`` with shapes ``(n, d)``; the owning cell spans
    nodes ``i0`` and ``(i0 + 1) % npoints`` in each dimension.
    """
    s = (pts - lowers) * inv_dq
    r = np.rint(s)
    s = np.where(np.abs(s - r) <= NODE_SNAP, r, s)
    i0 = np.floor(s)
    frac = s - i0
    i0 = i0.astype(np.int64) % npoints
    return i0, frac


def interp_batch(values, npoints, strides, lowers, inv_dq, pts):
    """Multilinear interpolation of ``values`` at each point.

    Parameters
    ----------
    values : complex128 array, shape (P, S)
        Flattened (C order) node array with S trailing components.
    npoints, strides : int64 arrays, shape (d,)
    lowers, inv_dq : float64 arrays, shape (d,)
    pts : float64 array, shape (n, d)

    Returns
    -------
    complex128 array, shape (n, S)
    """
    n, d = pts.shape
    i0, frac = locate(pts, npoints, lowers, inv_dq)
    i1 = (i0 + 1) % npoints
    out = np.zeros((n, values.shape[1]), dtype=np.complex128)
    for corner in range(1 << d):
        w = None
        flat = np.zeros(n, dtype=np.int64)
        for j in range(d):
            if (corner >> j) & 1:
                t = frac[:, j]
                flat += i1[:, j] * strides[j]
            else:
                t = 1.0 - frac[:, j]
                flat += i0[:, j] * strides[j]
            w = t if w is None else w * t
        out += w[:, np.newaxis] * values[flat]
    return out


def velocity_batch(psi, grads, npoints, strides, lowers, inv_dq,
                   inv_mass, pts):
    """Guidance velocities and interpolated densities at each point.

    Interpolates the state and its precomputed gradients, then forms
    ``v_j = Im(sum_s conj(a_s) g_{j,s}) / (sum_s |a_s|^2) / m_j`` with
    hbar = 1.  No floor policy here: the raw density comes back so the
    caller can decide what is too small.

    Parameters
    ----------
    psi : complex128 array, shape (P, S)
    grads : complex128 array, shape (d, P, S)
        Per-dimension spectral gradients, flattened like ``psi``.
    inv_mass : float64 array, shape (d,)
        Reciprocal mass of the particle owning each dimension.
    pts : float64 array, shape (n, d)

    Returns
    -------
    (v, rho) : float64 arrays of shapes (n, d) and (n,)
    """
    n, d = pts.shape
    nspin = psi.shape[1]
    i0, frac = locate(pts, npoints, lowers, inv_dq)
    i1 = (i0 + 1) % npoints
    a = np.zeros((n, nspin), dtype=np.complex128)
    g = np.zeros((d, n, nspin), dtype=np.complex128)
    for corner in range(1 << d):
        w = None
        flat = np.zeros(n, dtype=np.int64)
        for j in range(d):
            if (corner >> j) & 1:
                t = frac[:, j]
                flat += i1[:, j] * strides[j]
            else:
                t = 1.0 - frac[:, j]
                flat += i0[:, j] * strides[j]
            w = t if w is None else w * t
        wcol = w[:, np.newaxis]
        a += wcol * psi[flat]
        for k in range(d):
            g[k] += wcol * grads[k][flat]
    rho = a[:, 0].real ** 2 + a[:, 0].imag ** 2
    for s in range(1, nspin):
        rho += a[:, s].real ** 2 + a[:, s].imag ** 2
    v = np.empty((n, d))
    for k in range(d):
        im = a[:, 0].real * g[k][:, 0].imag - a[:, 0].imag * g[k][:, 0].real
        for s in range(1, nspin):
            im += (a[:, s].real * g[k][:, s].imag
                   - a[:, s].imag * g[k][:, s].real)
        v[:, k] = im / rho * inv_mass[k]
    return v, rho
