"""Trajectories guided by the wave function.

The velocity of the particle owning dimension ``k`` is

    v_k(q) = (hbar / m_k) * Im( psi(q)^dag  d_k psi(q) )  /  psi(q)^dag psi(q)

with spin components contracted in both the numerator and the density.
Derivatives are taken spectrally on the grid (exact for band-limited
fields) and then interpolated to ``q`` with the same periodic multilinear
rule used for the state itself; the quotient is formed once, at the end,
so multiplying the state by any nonzero complex constant cancels
algebraically instead of relying on floating-point luck.

Trajectories integrate this field with classic fixed-step RK4.  Time
dependence enters through a *source* that hands out the wave function at
the step, half-step and full-step times; sources are either a frozen
state (`StationarySource`) or a ladder of propagated snapshots spaced by
half a trajectory step (`SnapshotSeries`).

A trajectory aborts, rather than silently degrading, when any RK4 stage
lands within one grid cell of the box faces or where the interpolated
density falls below the floor (1e-12 times the mean node density).
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, NodeProximityError, StateError
from .evolve import Propagator
from .fields import HBAR, Configuration, check_in_domain, density_floor

COMPLETED = "completed"
ABORTED_NODE = "aborted-node"
ABORTED_BOUNDARY = "aborted-boundary"

_STATUS_CODES = {0: COMPLETED, 1: ABORTED_NODE, 2: ABORTED_BOUNDARY}


def spectral_gradient(wf, dim):
    """Partial derivative of the amplitudes along one dimension.

    Computed as ``ifft(i k fft(psi))`` on that axis.  The Nyquist mode
    (present for even point counts) is dropped from the derivative: it
    carries no sign information for a real sequence, and zeroing it is
    what makes the spectral derivative of a real field exactly real.
    """
    g = wf.grid
    k = g.wavenumbers(dim)
    n = g.npoints[dim]
    if n % 2 == 0:
        k = k.copy()
        k[n // 2] = 0.0
    shape = [1] * (g.ndim + 1)
    shape[dim] = n
    ahat = np.fft.fft(wf.amplitudes, axis=dim)
    return np.fft.ifft((1j * k.reshape(shape)) * ahat, axis=dim)


class VelocityField:
    """Guidance field of a fixed wave function, ready for batch queries.

    Precomputes the flattened amplitudes and all spectral gradients once;
    evaluation is then pure interpolation.  `velocities` is the raw batch
    interface used by the integrator (it returns densities and leaves the
    floor policy to the caller); `velocity` is the strict pointwise one.
    """

    def __init__(self, wf):
        if not np.any(wf.amplitudes):
            raise StateError("velocity field undefined for a zero state")
        g = wf.grid
        self.wf = wf
        self.grid = g
        self.floor = density_floor(wf)
        flat = wf.amplitudes.reshape(g.size, wf.nspin)
        self._psi = np.ascontiguousarray(flat)
        grads = np.empty((g.ndim, g.size, wf.nspin), dtype=np.complex128)
        for d in range(g.ndim):
            grads[d] = spectral_gradient(wf, d).reshape(g.size, wf.nspin)
        self._grads = np.ascontiguousarray(grads)
        self._npoints = np.asarray(g.npoints, dtype=np.int64)
        self._inv_dq = 1.0 / g.spacing
        self._hbar_over_m = HBAR / g.mass_per_dim

    def velocities(self, pts, threads=1):
        """Velocities and interpolated densities for a batch of points.

        No domain or floor checks here; returns ``(v, rho)`` of shapes
        ``(n, d)`` and ``(n,)``.  Rows are independent, so ``threads``
        never changes the result.
        """
        pts = np.ascontiguousarray(pts, dtype=float)
        return _kernels.velocity_many(
            self._psi, self._grads, self._npoints, self.grid.strides,
            self.grid.lower, self._inv_dq, self._hbar_over_m, pts,
            threads=threads)

    def velocity(self, q):
        """Velocity at a single configuration.

        Raises OutOfDomainError outside the box and NodeProximityError
        where the density is below the floor.
        """
        coords = q.coords if isinstance(q, Configuration) else \
            np.atleast_1d(np.asarray(q, dtype=float))
        check_in_domain(self.grid, coords)
        v, rho = self.velocities(coords.reshape(1, -1))
        if rho[0] < self.floor:
            raise NodeProximityError(
                f"density {rho[0]:.3e} below floor {self.floor:.3e} at "
                f"{coords}", density=float(rho[0]), floor=self.floor)
        return v[0]


class StationarySource:
    """Fixed wave function handed out for every requested time.

    This is the right source when the universal state is a stationary
    eigenstate: nothing about the field changes, only the configuration
    moves.
    """

    def __init__(self, wf):
        self.grid = wf.grid
        self._wf = wf
        self._field = None

    def state_at(self, t):
        return self._wf

    def field_at(self, t):
        if self._field is None:
            self._field = VelocityField(self._wf)
        return self._field


class SnapshotSeries:
    """Propagated states on a uniform half-step ladder.

    Stores the state at ``t0 + m * half_step`` for ``m = 0..nhalf``;
    velocity fields are built lazily and kept in a small LRU cache since
    integration walks the ladder monotonically.  Building the series is
    the only propagation cost, so one series can serve any number of
    trajectory ensembles (they are read-only consumers).
    """

    def __init__(self, states, t0, half_step):
        if not states:
            raise StateError("empty snapshot series")
        self.states = list(states)
        self.t0 = float(t0)
        self.half_step = float(half_step)
        self.grid = states[0].grid
        self._fields = OrderedDict()
        self._cache_size = 4

    @classmethod
    def evolve(cls, wf, h, half_step, nhalf, dt, check_every=50):
        """Propagate ``wf`` and record ``nhalf + 1`` half-step snapshots.

        ``dt`` must divide ``half_step`` (see `validate_step_compat`).
        """
        nsub = validate_step_compat(dt, 2.0 * half_step)
        t0 = wf.time_tag
        states = [wf]
        prop = Propagator(wf, h, dt, check_every=check_every)
        for m in range(1, int(nhalf) + 1):
            prop.advance(nsub)
            states.append(prop.snapshot(t0 + m * half_step))
        prop.check()
        return cls(states, t0, half_step)

    def index_of(self, t):
        m = int(round((t - self.t0) / self.half_step))
        t_m = self.t0 + m * self.half_step
        if abs(t - t_m) > 1e-6 * max(1.0, abs(self.half_step)):
            raise StateError(f"time {t} is not on the snapshot ladder "
                             f"(t0={self.t0}, half_step={self.half_step})")
        if not 0 <= m < len(self.states):
            raise StateError(f"time {t} outside the recorded range "
                             f"[{self.t0}, "
                             f"{self.t0 + (len(self.states) - 1) * self.half_step}]")
        return m

    def state_at(self, t):
        return self.states[self.index_of(t)]

    def field_at(self, t):
        m = self.index_of(t)
        if m in self._fields:
            self._fields.move_to_end(m)
            return self._fields[m]
        f = VelocityField(self.states[m])
        self._fields[m] = f
        if len(self._fields) > self._cache_size:
            self._fields.popitem(last=False)
        return f


def validate_step_compat(dt, dt_traj):
    """Require the evolution step to divide half the trajectory step.

    RK4 needs the field at step midpoints, so snapshots live on a
    ``dt_traj / 2`` ladder and ``dt`` must tile it exactly.  Returns the
    number of evolution steps per half trajectory step.
    """
    if dt <= 0 or dt_traj <= 0:
        raise ConfigError(f"steps must be positive: dt={dt}, "
                          f"dt_traj={dt_traj}")
    half = 0.5 * dt_traj
    ratio = half / dt
    nsub = int(round(ratio))
    if nsub < 1 or abs(ratio - nsub) > 1e-9 * max(1.0, ratio):
        raise ConfigError(
            f"evolution step dt={dt} does not divide half the trajectory "
            f"step (dt_traj/2={half}); their ratio is {ratio}")
    return nsub


@dataclass
class EnsembleResult:
    """Outcome of transporting a batch of configurations.

    ``paths`` holds every recorded position; aborted rows stop moving at
    their last trusted position.  ``status`` uses the module's string
    constants; ``abort_step`` is -1 for completed rows, otherwise the
    step index at which the abort happened.
    """

    times: np.ndarray
    paths: np.ndarray
    status: list
    abort_step: np.ndarray
    velocity_scale: float = 1.0

    @property
    def n(self):
        return self.paths.shape[0]

    @property
    def completed_mask(self):
        return np.array([s == COMPLETED for s in self.status])

    @property
    def aborted_count(self):
        return int(np.sum(~self.completed_mask))

    def endpoints(self, completed_only=True):
        """Final positions, by default only of completed trajectories."""
        pts = self.paths[:, -1, :]
        return pts[self.completed_mask] if completed_only else pts


@dataclass
class Trajectory:
    times: np.ndarray
    points: np.ndarray
    status: str
    abort_step: int


def _in_margin(grid, pts):
    """True for rows at least one grid cell away from every box face."""
    lo = grid.lower + grid.spacing
    hi = grid.upper - grid.spacing
    return np.all((pts >= lo) & (pts < hi), axis=1)


def integrate_ensemble(source, q0, nsteps, dt_traj, t0=None,
                       velocity_scale=1.0, threads=1):
    """Transport configurations along the guidance field with RK4.

    Parameters
    ----------
    source : StationarySource or SnapshotSeries
        Provides the state at step, mid-step and end-step times.
    q0 : array (n, d)
        Starting configurations.
    nsteps : int
        Number of trajectory steps.
    dt_traj : float
        Trajectory step; the source must resolve multiples of half of it.
    t0 : float, optional
        Start time; defaults to the source's origin (or 0 for a
        stationary source).
    velocity_scale : float, optional
        Multiplies every stage velocity.  1.0 is the physical dynamics;
        anything else deliberately corrupts it (useful as a negative
        control).
    threads : int, optional
        Row-split parallelism for the stage evaluations.

    Returns
    -------
    EnsembleResult
    """
    q0 = np.atleast_2d(np.asarray(q0, dtype=float))
    grid = source.grid
    if q0.shape[1] != grid.ndim:
        raise StateError(f"configurations have {q0.shape[1]} coordinates, "
                         f"grid has {grid.ndim}")
    if t0 is None:
        t0 = getattr(source, "t0", 0.0)
    nsteps = int(nsteps)
    dt = float(dt_traj)
    half = 0.5 * dt
    n = q0.shape[0]

    times = t0 + dt * np.arange(nsteps + 1)
    paths = np.empty((n, nsteps + 1, grid.ndim))
    paths[:, 0, :] = q0
    code = np.zeros(n, dtype=np.int8)
    abort_step = np.full(n, -1, dtype=np.int64)
    pos = q0.copy()

    def stage(fld, pts, dead, why):
        # Rows already dead keep zero velocity and skip the checks; the
        # first failing stage of a step decides the abort reason.
        v = np.zeros_like(pts)
        oob = ~dead & ~_in_margin(grid, pts)
        why[oob] = 2
        dead |= oob
        alive = np.nonzero(~dead)[0]
        if alive.size:
            vv, rho = fld.velocities(pts[alive], threads=threads)
            low = rho < fld.floor
            if np.any(low):
                bad = alive[low]
                why[bad] = 1
                dead[bad] = True
                vv[low] = 0.0
            v[alive] = vv
        if velocity_scale != 1.0:
            v = v * velocity_scale
        return v

    active = code == 0
    for j in range(nsteps):
        if not np.any(active):
            paths[:, j + 1:, :] = pos[:, np.newaxis, :]
            break
        fa = source.field_at(times[j])
        fm = source.field_at(t0 + (2 * j + 1) * half)
        fb = source.field_at(times[j + 1])
        idx = np.nonzero(active)[0]
        q = pos[idx]
        dead = np.zeros(idx.size, dtype=bool)
        why = np.zeros(idx.size, dtype=np.int8)
        k1 = stage(fa, q, dead, why)
        k2 = stage(fm, q + (0.5 * dt) * k1, dead, why)
        k3 = stage(fm, q + (0.5 * dt) * k2, dead, why)
        k4 = stage(fb, q + dt * k3, dead, why)
        qn = q + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.any(dead):
            sel = idx[dead]
            code[sel] = why[dead]
            abort_step[sel] = j
            active[sel] = False
            qn[dead] = q[dead]
        pos[idx] = qn
        paths[:, j + 1, :] = pos
    # Endpoints feed downstream statistics, so vet them like a stage.
    idx = np.nonzero(active)[0]
    if idx.size:
        inb = _in_margin(grid, pos[idx])
        sel = idx[~inb]
        code[sel] = 2
        abort_step[sel] = nsteps
        keep = idx[inb]
        if keep.size:
            fb = source.field_at(times[-1])
            _, rho = fb.velocities(pos[keep], threads=threads)
            low = keep[rho < fb.floor]
            code[low] = 1
            abort_step[low] = nsteps
    status = [_STATUS_CODES[int(c)] for c in code]
    return EnsembleResult(times=times, paths=paths, status=status,
                          abort_step=abort_step,
                          velocity_scale=velocity_scale)


def integrate_trajectory(source, q0, nsteps, dt_traj, t0=None,
                         velocity_scale=1.0):
    """Single-trajectory convenience wrapper around `integrate_ensemble`."""
    coords = q0.coords if isinstance(q0, Configuration) else q0
    res = integrate_ensemble(source, np.atleast_2d(coords), nsteps,
                             dt_traj, t0=t0, velocity_scale=velocity_scale)
    return Trajectory(times=res.times, points=res.paths[0],
                      status=res.status[0],
                      abort_step=int(res.abort_step[0]))


def rk4_convergence(source, q0, total_time, dt_list, refine=4):
    """Endpoint error of the integrator against a refined reference.

    For each ``dt`` the error is the distance between the endpoint at
    that step size and the endpoint with ``dt / refine``; the returned
    slope is the least-squares fit of log error versus log dt and should
    sit near 4 for a smooth field.  The source must resolve the refined
    half-steps too, so in practice this wants a stationary source.

    Returns ``(dts, errors, slope)``.
    """
    errs = []
    dts = []
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    for dt in dt_list:
        nsteps = int(round(total_time / dt))
        if abs(nsteps * dt - total_time) > 1e-9 * max(1.0, total_time):
            raise ConfigError(f"dt={dt} does not tile the horizon "
                              f"{total_time}")
        a = integrate_trajectory(source, q0, nsteps, dt)
        b = integrate_trajectory(source, q0, nsteps * refine, dt / refine)
        if a.status != COMPLETED or b.status != COMPLETED:
            raise StateError(f"convergence study trajectory aborted "
                             f"({a.status}, {b.status}); choose a safer "
                             "starting point")
        errs.append(float(np.linalg.norm(a.points[-1] - b.points[-1])))
        dts.append(float(dt))
    errs = np.asarray(errs)
    dts = np.asarray(dts)
    if np.any(errs == 0.0):
        raise StateError("degenerate convergence study: zero error")
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    return dts, errs, slope


def trajectory_to_csv(traj, path):
    """Write one trajectory as CSV: time, coordinates, trailing status."""
    d = traj.points.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write("time," + ",".join(f"q{k}" for k in range(d)) + "\n")
        for t, row in zip(traj.times, traj.points):
            fh.write(repr(float(t)) + ","
                     + ",".join(repr(float(x)) for x in row) + "\n")
        fh.write(f"# status,{traj.status},abort_step,{traj.abort_step}\n")


def ensemble_to_csv(result, path):
    """Write an ensemble as one CSV with a trajectory-id column.

    Status lines for every trajectory follow the data as comments.
    """
    n, _, d = result.paths.shape
    with open(path, "w", newline="") as fh:
        fh.write("traj,time," + ",".join(f"q{k}" for k in range(d)) + "\n")
        for i in range(n):
            for t, row in zip(result.times, result.paths[i]):
                fh.write(f"{i}," + repr(float(t)) + ","
                         + ",".join(repr(float(x)) for x in row) + "\n")
        for i in range(n):
            fh.write(f"# status,{i},{result.status[i]},"
                     f"{int(result.abort_step[i])}\n")
