# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled interpolation and velocity kernels.

Operation-for-operation mirror of ``_ref`` (which documents the
semantics); compiled with -ffp-contract=off so no fused multiply-adds
sneak in and results stay identical to the numpy fallback.  The inner
loops release the GIL, which is what makes the row-split threading in
the package wrapper worthwhile.

NODE_SNAP below must stay in sync with bohmlab.fields.NODE_SNAP.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, floor, rint

cnp.import_array()

DEF MAXD = 16

cdef double NODE_SNAP = 1e-9


def interp_batch(const double complex[:, ::1] values,
                 const cnp.int64_t[::1] npoints,
                 const cnp.int64_t[::1] strides,
                 const double[::1] lowers,
                 const double[::1] inv_dq,
                 const double[:, ::1] pts):
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t d = pts.shape[1]
    cdef Py_ssize_t nspin = values.shape[1]
    if d > MAXD:
        raise ValueError("more than %d dimensions not supported" % MAXD)
    out_arr = np.zeros((n, nspin), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    cdef cnp.int64_t base0[MAXD]
    cdef cnp.int64_t base1[MAXD]
    cdef double frac[MAXD]
    cdef Py_ssize_t i, j, s, c, ncorner = 1 << d
    cdef cnp.int64_t i0, nj, flat
    cdef double sval, r, fl, w, t
    with nogil:
        for i in range(n):
            for j in range(d):
                sval = (pts[i, j] - lowers[j]) * inv_dq[j]
                r = rint(sval)
                if fabs(sval - r) <= NODE_SNAP:
                    sval = r
                fl = floor(sval)
                frac[j] = sval - fl
                nj = npoints[j]
                i0 = (<cnp.int64_t> fl) % nj
                if i0 < 0:
                    i0 += nj
                base0[j] = i0
                base1[j] = 0 if i0 + 1 == nj else i0 + 1
            for c in range(ncorner):
                w = 1.0
                flat = 0
                for j in range(d):
                    if (c >> j) & 1:
                        t = frac[j]
                        flat = flat + base1[j] * strides[j]
                    else:
                        t = 1.0 - frac[j]
                        flat = flat + base0[j] * strides[j]
                    w = w * t
                for s in range(nspin):
                    out[i, s] = out[i, s] + w * values[flat, s]
    return out_arr


def velocity_batch(const double complex[:, ::1] psi,
                   const double complex[:, :, ::1] grads,
                   const cnp.int64_t[::1] npoints,
                   const cnp.int64_t[::1] strides,
                   const double[::1] lowers,
                   const double[::1] inv_dq,
                   const double[::1] inv_mass,
                   const double[:, ::1] pts):
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t d = pts.shape[1]
    cdef Py_ssize_t nspin = psi.shape[1]
    if d > MAXD:
        raise ValueError("more than %d dimensions not supported" % MAXD)
    v_arr = np.empty((n, d))
    rho_arr = np.empty(n)
    cdef double[:, ::1] v = v_arr
    cdef double[::1] rho_out = rho_arr
    # Per-call scratch keeps concurrent calls independent.
    a_arr = np.zeros(nspin, dtype=np.complex128)
    g_arr = np.zeros((d, nspin), dtype=np.complex128)
    cdef double complex[::1] a = a_arr
    cdef double complex[:, ::1] g = g_arr
    cdef cnp.int64_t base0[MAXD]
    cdef cnp.int64_t base1[MAXD]
    cdef double frac[MAXD]
    cdef Py_ssize_t i, j, s, c, k, ncorner = 1 << d
    cdef cnp.int64_t i0, nj, flat
    cdef double sval, r, fl, w, t, rho, im
    with nogil:
        for i in range(n):
            for s in range(nspin):
                a[s] = 0
            for k in range(d):
                for s in range(nspin):
                    g[k, s] = 0
            for j in range(d):
                sval = (pts[i, j] - lowers[j]) * inv_dq[j]
                r = rint(sval)
                if fabs(sval - r) <= NODE_SNAP:
                    sval = r
                fl = floor(sval)
                frac[j] = sval - fl
                nj = npoints[j]
                i0 = (<cnp.int64_t> fl) % nj
                if i0 < 0:
                    i0 += nj
                base0[j] = i0
                base1[j] = 0 if i0 + 1 == nj else i0 + 1
            for c in range(ncorner):
                w = 1.0
                flat = 0
                for j in range(d):
                    if (c >> j) & 1:
                        t = frac[j]
                        flat = flat + base1[j] * strides[j]
                    else:
                        t = 1.0 - frac[j]
                        flat = flat + base0[j] * strides[j]
                    w = w * t
                for s in range(nspin):
                    a[s] = a[s] + w * psi[flat, s]
                for k in range(d):
                    for s in range(nspin):
                        g[k, s] = g[k, s] + w * grads[k, flat, s]
            rho = a[0].real * a[0].real + a[0].imag * a[0].imag
            for s in range(1, nspin):
                rho = rho + (a[s].real * a[s].real + a[s].imag * a[s].imag)
            rho_out[i] = rho
            for k in range(d):
                im = a[0].real * g[k, 0].imag - a[0].imag * g[k, 0].real
                for s in range(1, nspin):
                    im = im + (a[s].real * g[k, s].imag
                               - a[s].imag * g[k, s].real)
                v[i, k] = im / rho * inv_mass[k]
    return v_arr, rho_arr
