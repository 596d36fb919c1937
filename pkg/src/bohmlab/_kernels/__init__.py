"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

The Cython extension ``_core`` is imported dynamically so that source-only
installs (no compiler, no prebuilt wheel) still work; in that case the
numpy reference implementation takes over.  Set ``BOHMLAB_PURE_PYTHON=1``
to force the fallback even when the extension is available, e.g. to
benchmark the two against each other.  Both backends are kept
operation-for-operation identical, so switching never changes results.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _ref

if os.environ.get("BOHMLAB_PURE_PYTHON", "") not in ("", "0"):
    _backend = _ref
    BACKEND = "numpy"
else:
    try:
        from . import _core as _backend
        BACKEND = "cython"
    except ImportError:
        _backend = _ref
        BACKEND = "numpy"

# Cell location is cheap python-level plumbing shared by both backends;
# only the gather/accumulate loops are worth compiling.
locate = _ref.locate
interp_batch = _backend.interp_batch
velocity_batch = _backend.velocity_batch


def available_backends():
    """Names of importable backends ("numpy" always, "cython" if built)."""
    names = ["numpy"]
    try:
        from . import _core  # noqa: F401
        names.append("cython")
    except ImportError:
        pass
    return names


def velocity_many(psi, grads, npoints, strides, lowers, inv_dq, inv_mass,
                  pts, threads=1):
    """`velocity_batch` split row-wise over a thread pool.

    Rows are independent, so any split reproduces the single-threaded
    result exactly; threads only buy time when the compiled backend is
    active (it releases the GIL in its inner loops).
    """
    n = pts.shape[0]
    if threads <= 1 or n < 2 * threads:
        return velocity_batch(psi, grads, npoints, strides, lowers,
                              inv_dq, inv_mass, pts)
    v = np.empty((n, pts.shape[1]))
    rho = np.empty(n)
    bounds = np.linspace(0, n, threads + 1).astype(int)

    def work(lo, hi):
        v[lo:hi], rho[lo:hi] = velocity_batch(
            psi, grads, npoints, strides, lowers, inv_dq, inv_mass,
            pts[lo:hi])

    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(work, bounds[i], bounds[i + 1])
                   for i in range(threads)]
        for f in futures:
            f.result()
    return v, rho
