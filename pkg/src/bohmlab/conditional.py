"""Subsystem states carved out of a larger wave function.

Given a split of the grid dimensions into a system block ``x`` and an
environment block ``y``, the conditional state of the system at an
environment point ``Y`` is the slice ``psi(x) = Psi(x, Y)``, evaluated
by interpolating in the ``y`` coordinates only.  The slice is linear in
``Psi``, lives on the system subgrid, and is exact when ``Y`` sits on
environment nodes.

Three experiments build on slices:

* `collapse_experiment` couples a two-branch system to a pointer with an
  impulsive interaction and follows an ensemble of configurations
  through it.  Each trajectory ends up with a conditional state pinned
  to one branch, with frequencies matching the branch weights, and stays
  there while the branches remain separated.
* `decoupling_experiment` checks that with no interaction term the
  conditional state of a product wave function follows its own
  single-particle propagation exactly, and that switching a coupling on
  breaks this.
* `timeless_experiment` uses a stationary eigenstate whose guidance
  field still moves configurations: nothing in the big state depends on
  time, yet the conditional states seen along a moving trajectory do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _kernels
from .errors import ConfigError, GridError, InconclusiveError, StateError
from .evolve import HamiltonianSpec, Propagator, measurement_kick
from .fields import WaveFunction, density_floor, inner, norm, normalized, \
    product_state
from .guidance import COMPLETED, SnapshotSeries, StationarySource, \
    VelocityField, integrate_ensemble, integrate_trajectory, \
    validate_step_compat
from .equilibrium import sample


@dataclass(frozen=True)
class SubsystemSplit:
    """Partition of grid dimensions into system and environment blocks."""

    x_dims: tuple
    y_dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "x_dims",
                           tuple(int(d) for d in self.x_dims))
        object.__setattr__(self, "y_dims",
                           tuple(int(d) for d in self.y_dims))
        if tuple(sorted(self.x_dims)) != self.x_dims \
                or tuple(sorted(self.y_dims)) != self.y_dims:
            raise GridError("split dimension blocks must be sorted")

    def validate(self, grid):
        both = sorted(self.x_dims + self.y_dims)
        if both != list(range(grid.ndim)):
            raise GridError(f"split {self.x_dims} | {self.y_dims} is not a "
                            f"partition of the {grid.ndim} grid dimensions")
        # subgrid() rejects splits that cut a particle in half.
        grid.subgrid(self.x_dims)
        grid.subgrid(self.y_dims)


@dataclass
class ConditionalSlice:
    """System-state slice of a bigger state at one environment point.

    ``raw`` keeps the unnormalized amplitudes (linear in the parent
    state); ``unit`` is the normalized version, or None when the slice
    has no usable mass (``normalizable`` False).
    """

    raw: WaveFunction
    y_point: np.ndarray
    parent_time: float
    weight: float
    normalizable: bool

    @property
    def unit(self):
        if not self.normalizable:
            return None
        return normalized(self.raw)


def conditional_state(wf, split, y_point):
    """Slice the state at an environment configuration.

    Interpolates only in the environment dimensions (periodic
    multilinear, same rule as pointwise evaluation), so on environment
    nodes the result is exactly a stored sub-array of the parent state.

    ``weight`` is the squared norm of the raw slice, i.e. the relative
    density of the environment point; the slice is flagged
    non-normalizable when its peak density falls below the parent's
    density floor.
    """
    split.validate(wf.grid)
    g = wf.grid
    y_point = np.atleast_1d(np.asarray(y_point, dtype=float))
    if y_point.shape != (len(split.y_dims),):
        raise StateError(f"expected {len(split.y_dims)} environment "
                         f"coordinates, got shape {y_point.shape}")
    y_lower = g.lower[list(split.y_dims)]
    y_upper = g.upper[list(split.y_dims)]
    if np.any(y_point < y_lower) or np.any(y_point >= y_upper):
        raise StateError(f"environment point {y_point} outside the box")

    ynp = np.asarray([g.npoints[d] for d in split.y_dims], dtype=np.int64)
    inv_dq = 1.0 / np.asarray([g.spacing[d] for d in split.y_dims])
    i0, frac = _kernels.locate(y_point.reshape(1, -1), ynp, y_lower, inv_dq)
    i0, frac = i0[0], frac[0]
    i1 = (i0 + 1) % ynp

    # Bring environment axes to the back, then contract them corner by
    # corner with the interpolation weights.
    order = tuple(split.x_dims) + tuple(split.y_dims) + (g.ndim,)
    moved = np.transpose(wf.amplitudes, order)
    x_shape = tuple(g.npoints[d] for d in split.x_dims)
    dy = len(split.y_dims)
    out = None
    for corner in range(1 << dy):
        w = 1.0
        idx = []
        for j in range(dy):
            if (corner >> j) & 1:
                w = w * frac[j]
                idx.append(int(i1[j]))
            else:
                w = w * (1.0 - frac[j])
                idx.append(int(i0[j]))
        block = moved[(slice(None),) * len(x_shape) + tuple(idx)]
        term = w * block
        out = term if out is None else out + term
    x_grid = g.subgrid(split.x_dims)
    raw = WaveFunction(x_grid, out, time_tag=wf.time_tag)
    weight = float(np.sum(raw.density()) * x_grid.cell_volume)
    peak = float(np.max(raw.density()))
    normalizable = peak > density_floor(wf)
    return ConditionalSlice(raw=raw, y_point=y_point,
                            parent_time=wf.time_tag, weight=weight,
                            normalizable=normalizable)


def fidelity(a, b):
    """|<a, b>| between unit rays: phase- and scale-insensitive."""
    na, nb = norm(a), norm(b)
    if na == 0.0 or nb == 0.0:
        raise StateError("fidelity undefined for a zero state")
    return abs(inner(a, b)) / (na * nb)


def ray_distance(a, b):
    """Distance between rays: min over phases of ||a/|a| - e^{i t} b/|b|||."""
    return math.sqrt(max(0.0, 2.0 - 2.0 * fidelity(a, b)))


@dataclass
class ConsistencyReport:
    """Joint-state versus conditional-state velocities at test points."""

    deviations: np.ndarray
    v_joint: np.ndarray
    v_conditional: np.ndarray
    skipped: int

    @property
    def max_deviation(self):
        return float(np.max(self.deviations)) if self.deviations.size \
            else float("nan")


def subsystem_velocity_consistency(wf, split, points, threads=1):
    """Compare system velocities computed two ways at each configuration.

    The guidance field of the full state, restricted to the system
    dimensions, must agree with the guidance field of the conditional
    slice at the same system point: differentiation acts only on ``x``
    and slicing only on ``y``, so the two readings are the same formula
    evaluated through different code paths.

    Points whose slice is non-normalizable are skipped and counted.
    """
    split.validate(wf.grid)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    joint = VelocityField(wf)
    vj_all, _ = joint.velocities(pts, threads=threads)
    xcols = list(split.x_dims)
    ycols = list(split.y_dims)
    devs, vjs, vcs = [], [], []
    skipped = 0
    for i in range(pts.shape[0]):
        sl = conditional_state(wf, split, pts[i, ycols])
        if not sl.normalizable:
            skipped += 1
            continue
        cond = VelocityField(sl.raw)
        vc = cond.velocities(pts[i, xcols].reshape(1, -1))[0][0]
        vj = vj_all[i, xcols]
        devs.append(np.max(np.abs(vj - vc)))
        vjs.append(vj)
        vcs.append(vc)
    return ConsistencyReport(deviations=np.asarray(devs),
                             v_joint=np.asarray(vjs),
                             v_conditional=np.asarray(vcs),
                             skipped=skipped)


def kick_map(points, profile, pointer_col, strength, duration):
    """Impulsive-kick transport of configurations.

    Mirrors `measurement_kick` on the particle side: during the impulse
    the pointer coordinate flows at rate ``strength * profile(rest)``
    while everything else is frozen, so the exact update is a shift of
    the pointer column.  The map is volume preserving, which is what
    keeps the ensemble in equilibrium across the kick.
    """
    pts = np.array(np.atleast_2d(np.asarray(points, dtype=float)))
    rest = [c for c in range(pts.shape[1]) if c != pointer_col]
    shift = float(strength) * float(duration) \
        * np.asarray(profile(*[pts[:, c] for c in rest]), dtype=float)
    pts[:, pointer_col] = pts[:, pointer_col] + shift
    return pts


# ---------------------------------------------------------------------------
# Collapse
# ---------------------------------------------------------------------------

@dataclass
class CollapseResult:
    """Ensemble statistics of the measurement experiment."""

    n: int
    n_assigned: int
    n_ambiguous: int
    counts: tuple
    expected_p1: float
    freq1: float
    freq_sigma: float
    checkpoint_times: np.ndarray
    fidelity_mean: np.ndarray        # (2, n_checkpoints + 1)
    fidelity_min: np.ndarray
    permanence_margin: float
    aborted_trajectories: int
    excluded_slices: int
    branch_overlap: float
    pointer_overlap: float
    per_trial_branch: np.ndarray = dc_field(repr=False, default=None)
    per_trial_pointer: np.ndarray = dc_field(repr=False, default=None)
    per_trial_fidelity: np.ndarray = dc_field(repr=False, default=None)

    def freq_within(self, nsigma=3.0):
        return abs(self.freq1 - self.expected_p1) <= nsigma * self.freq_sigma


def collapse_experiment(branch1, branch2, c1, c2, pointer, profile,
                        strength, duration, n, seed, t_post, dt, dt_traj,
                        n_checkpoints=4, v_system=None, v_pointer=None,
                        guard_widths=3.0, threads=1):
    """Measure a two-branch superposition with a pointer and keep score.

    Builds ``Psi_0 = (c1 b1 + c2 b2) (x) chi`` on the combined grid,
    draws ``n`` configurations from it, applies the impulsive coupling
    to both the state and the configurations, assigns each trial to the
    branch whose pointer target it landed near (within
    ``guard_widths`` pointer widths; others count as ambiguous), then
    propagates everything to ``t_post`` and records the conditional
    fidelity of every trial against its own branch, evolved separately,
    at each checkpoint.

    Both subsystems must be one-dimensional.  Raises InconclusiveError
    when the displaced pointer branches overlap by more than 1e-6 (the
    assignment would be meaningless).
    """
    if branch1.grid != branch2.grid:
        raise GridError("branches must share a grid")
    if branch1.grid.ndim != 1 or pointer.grid.ndim != 1:
        raise GridError("collapse experiment wants 1D system and pointer")
    n = int(n)
    nsteps = int(round(t_post / dt_traj))
    if abs(nsteps * dt_traj - t_post) > 1e-9 * max(1.0, t_post):
        raise ConfigError(f"dt_traj={dt_traj} does not tile t_post={t_post}")
    if n_checkpoints < 1 or nsteps % n_checkpoints:
        raise ConfigError(f"{n_checkpoints} checkpoints do not tile "
                          f"{nsteps} trajectory steps")
    validate_step_compat(dt, dt_traj)

    b1, b2, chi = normalized(branch1), normalized(branch2), \
        normalized(pointer)
    wsum = abs(c1) ** 2 + abs(c2) ** 2
    expected_p1 = abs(c1) ** 2 / wsum
    system = normalized(b1.with_amplitudes(c1 * b1.amplitudes
                                           + c2 * b2.amplitudes))
    psi0 = product_state(system, chi)
    g = psi0.grid
    split = SubsystemSplit((0,), (1,))

    xs = branch1.grid.axis(0)
    rho1 = b1.density()
    rho2 = b2.density()
    center1 = float(np.sum(xs * rho1) / np.sum(rho1))
    center2 = float(np.sum(xs * rho2) / np.sum(rho2))
    ys = pointer.grid.axis(0)
    rho_p = chi.density()
    mu = float(np.sum(ys * rho_p) / np.sum(rho_p))
    sigma = math.sqrt(float(np.sum((ys - mu) ** 2 * rho_p)
                            / np.sum(rho_p)))

    total = float(strength) * float(duration)
    t1 = total * float(profile(np.asarray([center1]))[0])
    t2 = total * float(profile(np.asarray([center2]))[0])
    if abs(t1 - t2) < 6.0 * sigma:
        raise ConfigError(
            f"pointer targets {t1:.3g} and {t2:.3g} are closer than six "
            f"pointer widths (sigma={sigma:.3g}); the kick cannot resolve "
            "the branches")
    shifted1 = measurement_kick(chi, lambda: 1.0, 0, t1, 1.0)
    shifted2 = measurement_kick(chi, lambda: 1.0, 0, t2, 1.0)
    pointer_overlap = abs(inner(shifted1, shifted2))
    branch_overlap = abs(inner(b1, b2))
    if pointer_overlap > 1e-6:
        raise InconclusiveError(
            f"displaced pointer branches overlap by {pointer_overlap:.3g} "
            "> 1e-6; branch assignment would be meaningless")

    drawn = sample(psi0, n, seed)
    kicked_wf = measurement_kick(psi0, profile, 1, strength, duration)
    kicked_pts = kick_map(drawn.configurations, profile, 1, strength,
                          duration)

    # Branch assignment from the pointer coordinate right after the kick.
    ypts = kicked_pts[:, 1]
    mid = 0.5 * (t1 + t2)
    ambiguous = np.abs(ypts - (mu + mid)) <= guard_widths * sigma
    to1 = np.abs(ypts - (mu + t1)) < np.abs(ypts - (mu + t2))
    branch_of = np.where(to1, 0, 1)
    n_ambiguous = int(np.sum(ambiguous))

    def joint_potential(x, y):
        v = np.zeros(np.broadcast(x, y).shape)
        if v_system is not None:
            v = v + v_system(x)
        if v_pointer is not None:
            v = v + v_pointer(y)
        return v

    h_joint = HamiltonianSpec.from_callable(g, joint_potential,
                                            label="measurement-free")
    series = SnapshotSeries.evolve(kicked_wf, h_joint, 0.5 * dt_traj,
                                   2 * nsteps, dt)
    transported = integrate_ensemble(series, kicked_pts, nsteps, dt_traj,
                                     threads=threads)
    aborted_mask = ~transported.completed_mask
    aborted = int(np.sum(aborted_mask))

    # Branch references evolve on the system grid alone.
    hx = HamiltonianSpec.free(branch1.grid) if v_system is None else \
        HamiltonianSpec.from_callable(branch1.grid, v_system)
    stride = nsteps // n_checkpoints
    cp_steps = np.arange(0, nsteps + 1, stride)
    checkpoint_times = transported.times[cp_steps]
    refs = {0: [b1], 1: [b2]}
    for b, wf0 in ((0, b1), (1, b2)):
        prop = Propagator(wf0, hx, dt)
        nsub = validate_step_compat(dt, dt_traj)
        for c in range(1, len(cp_steps)):
            prop.advance(2 * nsub * stride)
            refs[b].append(normalized(prop.snapshot()))

    floor = density_floor(kicked_wf)
    usable = ~ambiguous & ~aborted_mask
    fid = np.full((n, len(cp_steps)), np.nan)
    excluded = 0
    x_dq = branch1.grid.spacing[0]
    for ci, step in enumerate(cp_steps):
        state = series.state_at(transported.times[step])
        amps2d = state.amplitudes[:, :, 0]
        ypos = transported.paths[:, step, 1]
        ynp = np.asarray([g.npoints[1]], dtype=np.int64)
        i0, frac = _kernels.locate(ypos.reshape(-1, 1), ynp,
                                   np.asarray([g.lower[1]]),
                                   np.asarray([1.0 / g.spacing[1]]))
        i0 = i0[:, 0]
        frac = frac[:, 0]
        i1 = (i0 + 1) % g.npoints[1]
        slices = amps2d[:, i0] * (1.0 - frac) + amps2d[:, i1] * frac
        norms = np.sqrt(np.sum(np.abs(slices) ** 2, axis=0) * x_dq)
        peak = np.max(np.abs(slices) ** 2, axis=0)
        ok = usable & (peak > floor)
        excluded += int(np.sum(usable & ~(peak > floor)))
        for b in (0, 1):
            refb = refs[b][ci].amplitudes[:, 0]
            sel = ok & (branch_of == b)
            if np.any(sel):
                ov = np.abs(refb.conj() @ slices[:, sel]) * x_dq
                fid[sel, ci] = ov / norms[sel]

    assigned = usable
    n_assigned = int(np.sum(assigned))
    if n_assigned == 0:
        raise InconclusiveError("no usable trials survived assignment")
    counts = (int(np.sum(assigned & (branch_of == 0))),
              int(np.sum(assigned & (branch_of == 1))))
    freq1 = counts[0] / n_assigned
    freq_sigma = math.sqrt(expected_p1 * (1.0 - expected_p1) / n_assigned)

    fmean = np.full((2, len(cp_steps)), np.nan)
    fmin = np.full((2, len(cp_steps)), np.nan)
    for b in (0, 1):
        sel = assigned & (branch_of == b)
        if np.any(sel):
            block = fid[sel]
            with np.errstate(invalid="ignore"):
                fmean[b] = np.nanmean(block, axis=0)
                fmin[b] = np.nanmin(block, axis=0)
    diffs = np.diff(fid[assigned], axis=1)
    permanence_margin = float(np.nanmin(diffs)) if diffs.size else 0.0

    return CollapseResult(
        n=n, n_assigned=n_assigned, n_ambiguous=n_ambiguous, counts=counts,
        expected_p1=expected_p1, freq1=float(freq1),
        freq_sigma=float(freq_sigma), checkpoint_times=checkpoint_times,
        fidelity_mean=fmean, fidelity_min=fmin,
        permanence_margin=permanence_margin,
        aborted_trajectories=aborted, excluded_slices=excluded,
        branch_overlap=float(branch_overlap),
        pointer_overlap=float(pointer_overlap),
        per_trial_branch=branch_of, per_trial_pointer=ypts,
        per_trial_fidelity=fid)


# ---------------------------------------------------------------------------
# Decoupling
# ---------------------------------------------------------------------------

@dataclass
class DecouplingResult:
    """Conditional state versus autonomous single-particle propagation."""

    times: np.ndarray
    deviations: np.ndarray
    max_deviation: float
    trajectory_status: str
    coupled: bool


def decoupling_experiment(phi, chi, t_total, dt, dt_traj, seed=0,
                          n_checkpoints=10, v_x=None, v_y=None,
                          coupling=None, q0=None, threads=1):
    """Track one trajectory's conditional state against the 1D reference.

    With ``coupling`` None the joint potential separates, the product
    structure survives propagation, and the conditional state at any
    environment point follows the autonomous propagation of ``phi``
    exactly; the returned deviations measure ``1 - |<phi_t, psi_t>|`` at
    the checkpoints.  A nonzero ``coupling`` entangles the factors and
    the same deviations grow away from zero.
    """
    if phi.grid.ndim != 1 or chi.grid.ndim != 1:
        raise GridError("decoupling experiment wants 1D factors")
    nsteps = int(round(t_total / dt_traj))
    if abs(nsteps * dt_traj - t_total) > 1e-9 * max(1.0, t_total):
        raise ConfigError(f"dt_traj={dt_traj} does not tile "
                          f"t_total={t_total}")
    if n_checkpoints < 1 or nsteps % n_checkpoints:
        raise ConfigError(f"{n_checkpoints} checkpoints do not tile "
                          f"{nsteps} trajectory steps")

    psi0 = product_state(normalized(phi), normalized(chi))

    def vjoint(x, y):
        v = np.zeros(np.broadcast(x, y).shape)
        if v_x is not None:
            v = v + v_x(x)
        if v_y is not None:
            v = v + v_y(y)
        if coupling is not None:
            v = v + coupling(x, y)
        return v

    h2 = HamiltonianSpec.from_callable(psi0.grid, vjoint, label="joint")
    hx = HamiltonianSpec.free(phi.grid) if v_x is None else \
        HamiltonianSpec.from_callable(phi.grid, v_x)

    series = SnapshotSeries.evolve(psi0, h2, 0.5 * dt_traj, 2 * nsteps, dt)
    if q0 is None:
        q0 = sample(psi0, 1, seed).configurations[0]
    traj = integrate_trajectory(series, np.asarray(q0, dtype=float), nsteps,
                                dt_traj)
    if traj.status != COMPLETED:
        raise StateError(f"reference trajectory aborted: {traj.status} at "
                         f"step {traj.abort_step}")

    split = SubsystemSplit((0,), (1,))
    stride = nsteps // n_checkpoints
    cp_steps = np.arange(0, nsteps + 1, stride)
    nsub = validate_step_compat(dt, dt_traj)
    prop = Propagator(normalized(phi), hx, dt)
    devs = []
    for ci, step in enumerate(cp_steps):
        if ci > 0:
            prop.advance(2 * nsub * stride)
        ref = prop.snapshot()
        state = series.state_at(traj.times[step])
        sl = conditional_state(state, split, traj.points[step, 1:])
        if not sl.normalizable:
            raise StateError(f"conditional slice lost its mass at "
                             f"t={traj.times[step]}")
        devs.append(1.0 - fidelity(sl.raw, ref))
    devs = np.asarray(devs)
    return DecouplingResult(times=traj.times[cp_steps], deviations=devs,
                            max_deviation=float(np.max(devs)),
                            trajectory_status=traj.status,
                            coupled=coupling is not None)


# ---------------------------------------------------------------------------
# Stationary state, moving configuration
# ---------------------------------------------------------------------------

@dataclass
class TimelessResult:
    """What a stationary universal state looks like from inside."""

    stationarity_overlap_dev: float
    stationarity_density_drift: float
    displacement_max: float
    ray_change_max: float
    q0: np.ndarray
    resamples: int
    velocity_floor_met: bool
    trajectory_status: str
    times: np.ndarray
    checkpoint_times: np.ndarray


def timeless_experiment(wf, h, t_total, dt_traj, dt_check, seed=0,
                        n_checkpoints=8, split=None, v_floor=1e-8,
                        max_resample=20, threads=1):
    """Run the stationary-state experiment end to end.

    Three measurements:

    1. Stationarity of the state itself: propagate ``wf`` under ``h``
       with step ``dt_check`` across the horizon and record the worst
       deviation of ``|<Psi_t, Psi_0>|`` from 1 and of the node density
       from its initial values.
    2. Configuration motion: transport one equilibrium-sampled point
       through the frozen guidance field and record the largest
       displacement from the start.
    3. Conditional-state motion: at checkpoints along that trajectory,
       slice the state at the current environment coordinates and record
       the largest ray distance from the initial slice.

    The starting point is resampled (up to ``max_resample`` times) while
    its speed is below ``v_floor``; if no draw ever clears the floor the
    experiment proceeds with the last draw and reports
    ``velocity_floor_met=False`` (a real-valued state legitimately has
    zero velocity everywhere, and the control runs want exactly that).
    """
    if split is None:
        split = SubsystemSplit((0,), tuple(range(1, wf.grid.ndim)))
    split.validate(wf.grid)
    wf = normalized(wf)
    nsteps = int(round(t_total / dt_traj))
    if abs(nsteps * dt_traj - t_total) > 1e-9 * max(1.0, t_total):
        raise ConfigError(f"dt_traj={dt_traj} does not tile "
                          f"t_total={t_total}")
    if n_checkpoints < 1 or nsteps % n_checkpoints:
        raise ConfigError(f"{n_checkpoints} checkpoints do not tile "
                          f"{nsteps} trajectory steps")

    # 1. Stationarity sweep.
    steps_per_cp = int(round((t_total / n_checkpoints) / dt_check))
    if steps_per_cp < 1 or abs(steps_per_cp * dt_check * n_checkpoints
                               - t_total) > 1e-6 * max(1.0, t_total):
        raise ConfigError(f"dt_check={dt_check} does not tile the horizon "
                          f"{t_total} across {n_checkpoints} checkpoints")
    rho0 = wf.density()
    overlap_dev = 0.0
    density_drift = 0.0
    prop = Propagator(wf, h, dt_check)
    for _ in range(n_checkpoints):
        prop.advance(steps_per_cp)
        now = prop.state
        overlap_dev = max(overlap_dev, abs(1.0 - abs(inner(wf, now))))
        density_drift = max(density_drift,
                            float(np.max(np.abs(now.density() - rho0))))

    # 2. One configuration through the frozen field.
    source = StationarySource(wf)
    fld = source.field_at(0.0)
    rng_seed = int(seed)
    q0 = None
    resamples = 0
    floor_met = False
    for attempt in range(max_resample + 1):
        cand = sample(wf, 1, rng_seed + attempt).configurations[0]
        speed = float(np.linalg.norm(fld.velocities(
            cand.reshape(1, -1))[0][0]))
        sl = conditional_state(wf, split, cand[list(split.y_dims)])
        if speed >= v_floor and sl.normalizable:
            q0 = cand
            floor_met = True
            break
        resamples += 1
        q0 = cand
    traj = integrate_trajectory(source, q0, nsteps, dt_traj)
    disp = np.linalg.norm(traj.points - traj.points[0], axis=1)
    last = traj.points.shape[0] if traj.status == COMPLETED \
        else max(1, traj.abort_step)
    displacement_max = float(np.max(disp[:last]))

    # 3. Conditional slices along the way.
    stride = nsteps // n_checkpoints
    cp_steps = np.arange(0, nsteps + 1, stride)
    base = conditional_state(wf, split, q0[list(split.y_dims)])
    ray_change = 0.0
    for step in cp_steps[1:]:
        if traj.status != COMPLETED and step > traj.abort_step:
            break
        sl = conditional_state(wf, split,
                               traj.points[step, list(split.y_dims)])
        if not sl.normalizable:
            continue
        ray_change = max(ray_change, ray_distance(base.raw, sl.raw))

    return TimelessResult(
        stationarity_overlap_dev=float(overlap_dev),
        stationarity_density_drift=float(density_drift),
        displacement_max=displacement_max,
        ray_change_max=float(ray_change), q0=q0, resamples=resamples,
        velocity_floor_met=floor_met, trajectory_status=traj.status,
        times=traj.times, checkpoint_times=traj.times[cp_steps])
