"""Benchmark the compiled interpolation kernels against the numpy fallback.

Times ``interp_batch`` and ``velocity_batch`` on a 2D state for a sweep
of query-batch sizes, in one process (both backends are importable side
by side).  With ``--end-to-end`` it also times a full trajectory-ensemble
integration under each backend by re-invoking itself in a subprocess with
``BOHMLAB_PURE_PYTHON`` toggled, since the package picks its backend at
import time.

Usage::

    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --batches 1000 100000 --repeats 9
    python benchmarks/bench_kernels.py --end-to-end
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

import bohmlab as bl
from bohmlab._kernels import available_backends, _ref


def make_workload(npts, batch, seed):
    """A rotor state plus a batch of in-box query points."""
    g = bl.GridSpec(extents=[(-8.0, 8.0)] * 2, npoints=[npts, npts])
    wf = bl.stationary_rotor(g, omega=1.0)
    field = bl.VelocityField(wf)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-7.5, 7.5, (batch, 2))
    return field, np.ascontiguousarray(pts)


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_kernels(args):
    backends = [("numpy", _ref)]
    if "cython" in available_backends():
        from bohmlab._kernels import _core
        backends.append(("cython", _core))
    else:
        print("compiled backend not built; timing the fallback only")

    field, _ = make_workload(args.grid, 1, seed=1)
    print(f"grid {args.grid}x{args.grid}, best of {args.repeats} runs, "
          f"times in ms")
    header = f"{'kernel':<15}{'batch':>9}" + "".join(
        f"{name:>12}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)

    for batch in args.batches:
        _, pts = make_workload(args.grid, batch, seed=batch)
        rows = {
            "interp_batch": lambda mod: mod.interp_batch(
                field._psi, field._npoints, field.grid.strides,
                field.grid.lower, field._inv_dq, pts),
            "velocity_batch": lambda mod: mod.velocity_batch(
                field._psi, field._grads, field._npoints,
                field.grid.strides, field.grid.lower, field._inv_dq,
                field._hbar_over_m, pts),
        }
        for label, call in rows.items():
            outs = [call(mod) for _, mod in backends]
            if len(outs) == 2:            # backends must agree bitwise
                a, b = outs
                same = (np.array_equal(a, b) if isinstance(a, np.ndarray)
                        else all(np.array_equal(x, y)
                                 for x, y in zip(a, b)))
                if not same:
                    raise SystemExit(f"{label}: backends disagree")
            t = [best_of(lambda m=mod: call(m), args.repeats)
                 for _, mod in backends]
            line = f"{label:<15}{batch:>9}" + "".join(
                f"{1e3 * x:>12.3f}" for x in t)
            if len(t) == 2:
                line += f"{t[0] / t[1]:>9.1f}x"
            print(line)


def run_ensemble(threads):
    """The end-to-end workload: a rotor ensemble under the active backend."""
    g = bl.GridSpec(extents=[(-8.0, 8.0)] * 2, npoints=[256, 256])
    wf = bl.stationary_rotor(g, omega=1.0)
    source = bl.StationarySource(wf)
    pts = bl.sample(wf, 2000, seed=7).configurations
    t0 = time.perf_counter()
    res = bl.integrate_ensemble(source, pts, nsteps=40, dt_traj=0.05,
                                threads=threads)
    elapsed = time.perf_counter() - t0
    return elapsed, res.aborted_count


def bench_end_to_end(args):
    from bohmlab._kernels import BACKEND
    print(f"\nensemble of 2000 rotor trajectories, 40 RK4 steps, "
          f"threads={args.threads}")
    for name in available_backends():
        if name == BACKEND:
            elapsed, aborted = run_ensemble(args.threads)
        else:
            env = dict(os.environ)
            env["BOHMLAB_PURE_PYTHON"] = "1" if name == "numpy" else "0"
            out = subprocess.run(
                [sys.executable, os.path.abspath(__file__), "--_worker",
                 str(args.threads)],
                env=env, capture_output=True, text=True, check=True)
            elapsed, aborted = (float(x) for x in out.stdout.split())
        print(f"{name:>8}: {elapsed:8.3f} s   (aborted trajectories: "
              f"{int(aborted)})")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=256,
                    help="grid points per dimension (default 256)")
    ap.add_argument("--batches", type=int, nargs="+",
                    default=[100, 10000, 1000000],
                    help="query batch sizes to sweep")
    ap.add_argument("--repeats", type=int, default=5,
                    help="timing repeats; the best is reported")
    ap.add_argument("--threads", type=int, default=1,
                    help="threads for the end-to-end ensemble")
    ap.add_argument("--end-to-end", action="store_true",
                    help="also time a full ensemble under each backend")
    ap.add_argument("--_worker", type=int, default=None,
                    help=argparse.SUPPRESS)
    args = ap.parse_args(argv)

    if args._worker is not None:
        elapsed, aborted = run_ensemble(args._worker)
        print(elapsed, aborted)
        return 0

    from bohmlab._kernels import BACKEND
    print(f"active backend: {BACKEND} "
          f"(available: {', '.join(available_backends())})")
    bench_kernels(args)
    if args.end_to_end:
        bench_end_to_end(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
