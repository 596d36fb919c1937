"""Command-line scenario runner.

Scenarios are INI files (``configparser`` dialect, ``#`` comments) with a
``[scenario]`` section naming the experiment kind plus kind-specific
sections; numeric keys carry their unit in the suffix (``_time``,
``_length``, ``_invlength``, ``_rate``).  A catalogue of ready-made
scenarios ships inside the package:

    bohmlab list
    bohmlab describe timeless-rotor
    bohmlab run timeless-rotor --out runs/rotor
    bohmlab run my-scenario.cfg --seed 7 --threads 4

Every run writes its artifacts (report.json, CSV tables, snapshots) plus
a manifest.json with a SHA-256 per artifact.  Reports and artifacts are
byte-for-byte reproducible for a given scenario and seed; the only
volatile values (wall-clock timestamp and elapsed seconds) are confined
to the manifest.

Exit codes: 0 all criteria passed, 1 criteria failed, 2 invalid
configuration or usage, 3 computation aborted (numerics or experiment
preconditions).
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import sys
from datetime import datetime, timezone
from importlib import resources

import numpy as np

from .conditional import SubsystemSplit, collapse_experiment, \
    decoupling_experiment, subsystem_velocity_consistency, \
    timeless_experiment
from .equilibrium import equivariance_experiment, points_to_csv, sample
from .errors import AbortError, ConfigError, ValidationError
from .evolve import HamiltonianSpec, Propagator, expectation_energy, \
    oscillator_eigenstate, stationary_rotor
from .fields import GridSpec, HBAR, edge_mass, make_gaussian, norm, \
    save_snapshot
from .guidance import SnapshotSeries, StationarySource, ensemble_to_csv, \
    integrate_ensemble, rk4_convergence

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_ABORT = 3

_REQUIRED = object()


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------

def _get(cfg, section, key, default=_REQUIRED):
    if cfg.has_option(section, key):
        return cfg.get(section, key)
    if default is _REQUIRED:
        raise ConfigError(f"missing key '{key}' in section [{section}]")
    return default


def _float(cfg, section, key, default=_REQUIRED):
    raw = _get(cfg, section, key, default)
    if raw is None or isinstance(raw, float):
        return raw
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a number")


def _int(cfg, section, key, default=_REQUIRED):
    raw = _get(cfg, section, key, default)
    if raw is None:
        return raw
    try:
        if isinstance(raw, int):
            return raw
        value = float(raw)
        if value != int(value):
            raise ValueError
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"[{section}] {key} = {raw!r} is not an integer")


def _floats(cfg, section, key, default=_REQUIRED):
    raw = _get(cfg, section, key, default)
    if raw is None:
        return None
    if isinstance(raw, (list, tuple, np.ndarray)):
        return np.asarray(raw, dtype=float)
    try:
        return np.asarray([float(tok) for tok in str(raw).split(",")])
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a "
                          "comma-separated number list")


def _ints(cfg, section, key, default=_REQUIRED):
    vals = _floats(cfg, section, key, default)
    if vals is None:
        return None
    out = vals.astype(int)
    if np.any(out != vals):
        raise ConfigError(f"[{section}] {key} must be integers")
    return out


def _bool(cfg, section, key, default=False):
    raw = _get(cfg, section, key, None)
    if raw is None:
        return default
    if str(raw).strip().lower() in ("1", "true", "yes", "on"):
        return True
    if str(raw).strip().lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{section}] {key} = {raw!r} is not a boolean")


def build_grid(cfg, section="grid"):
    if not cfg.has_section(section):
        raise ConfigError(f"missing section [{section}]")
    lower = _floats(cfg, section, "lower_length")
    upper = _floats(cfg, section, "upper_length")
    npoints = _ints(cfg, section, "npoints")
    if not (len(lower) == len(upper) == len(npoints)):
        raise ConfigError(f"[{section}] lower/upper/npoints lengths differ")
    masses = _floats(cfg, section, "masses", None)
    pmap = _ints(cfg, section, "particle_map", None)
    return GridSpec(extents=list(zip(lower, upper)), npoints=npoints,
                    particle_map=pmap, masses=masses)


def build_state(cfg, grid, section="state"):
    recipe = _get(cfg, section, "recipe", "gaussian").strip().lower()
    if recipe == "gaussian":
        return make_gaussian(
            grid,
            center=_floats(cfg, section, "center_length"),
            width=_floats(cfg, section, "width_length"),
            wavevector=_floats(cfg, section, "wavevector_invlength", None))
    if recipe == "rotor":
        return stationary_rotor(grid, omega=_float(cfg, section, "omega", 1.0))
    if recipe == "oscillator":
        return oscillator_eigenstate(
            grid, quanta=_ints(cfg, section, "quanta"),
            omega=_float(cfg, section, "omega", 1.0))
    raise ConfigError(f"[{section}] unknown state recipe {recipe!r}")


def potential_callable(cfg, section, mass):
    """1D potential recipe as a callable (None means free)."""
    if not cfg.has_section(section):
        return None
    recipe = _get(cfg, section, "recipe", "free").strip().lower()
    if recipe == "free":
        return None
    if recipe == "harmonic":
        omega = _float(cfg, section, "omega", 1.0)
        center = _float(cfg, section, "center_length", 0.0)
        return lambda q: 0.5 * mass * omega**2 * (q - center) ** 2
    raise ConfigError(f"[{section}] unknown potential recipe {recipe!r}")


def build_hamiltonian(cfg, grid, section="potential"):
    recipe = "free"
    if cfg.has_section(section):
        recipe = _get(cfg, section, "recipe", "free").strip().lower()
    if recipe == "free":
        return HamiltonianSpec.free(grid)
    if recipe == "harmonic":
        center = _floats(cfg, section, "center_length", None)
        if center is None:
            center = 0.0
        return HamiltonianSpec.harmonic(
            grid, omega=_float(cfg, section, "omega", 1.0), center=center)
    raise ConfigError(f"[{section}] unknown potential recipe {recipe!r}")


def coupling_callable(cfg, section="coupling"):
    if not cfg.has_section(section):
        return None
    recipe = _get(cfg, section, "recipe", "none").strip().lower()
    if recipe in ("none", ""):
        return None
    if recipe == "bilinear":
        g = _float(cfg, section, "strength")
        return lambda x, y: g * x * y
    raise ConfigError(f"[{section}] unknown coupling recipe {recipe!r}")


def profile_callable(name):
    name = name.strip().lower()
    if name == "sign":
        return lambda x: np.sign(x)
    if name == "linear":
        return lambda x: x
    if name == "constant":
        return lambda *args: 1.0
    raise ConfigError(f"unknown kick profile {name!r}")


def _crit(name, value, threshold, op="<="):
    value = float(value)
    threshold = float(threshold)
    if op == "<=":
        ok = value <= threshold
    elif op == ">=":
        ok = value >= threshold
    else:
        raise ValueError(f"bad op {op}")
    return {"name": name, "value": value, "threshold": threshold,
            "op": op, "pass": bool(ok)}


class _OutDir:
    """Artifact directory with a running list of files for the manifest."""

    def __init__(self, root):
        self.root = root
        os.makedirs(root, exist_ok=True)
        self.names = []

    def path(self, name):
        self.names.append(name)
        return os.path.join(self.root, name)

    def write_json(self, name, payload):
        with open(self.path(name), "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")


# ---------------------------------------------------------------------------
# Kind runners: each returns (criteria, payload)
# ---------------------------------------------------------------------------

def _run_evolve(cfg, out, seed, threads, snapshot_every):
    grid = build_grid(cfg)
    wf0 = build_state(cfg, grid)
    h = build_hamiltonian(cfg, grid)
    t_total = _float(cfg, "run", "T_time")
    dt = _float(cfg, "run", "dt_time")
    nsteps = int(round(t_total / dt))
    if abs(nsteps * dt - t_total) > 1e-9 * max(1.0, t_total):
        raise ConfigError(f"dt_time={dt} does not tile T_time={t_total}")
    log_every = _int(cfg, "run", "log_every", max(1, nsteps // 100))

    prop = Propagator(wf0, h, dt)
    norm0 = norm(wf0)
    rows = [(0, 0.0, norm0, expectation_energy(wf0, h), edge_mass(wf0))]
    worst_drift = 0.0
    done = 0
    while done < nsteps:
        take = min(log_every, nsteps - done)
        prop.advance(take)
        done += take
        state = prop.snapshot(done * dt)
        rows.append((done, done * dt, norm(state),
                     expectation_energy(state, h), edge_mass(state)))
        worst_drift = max(worst_drift, abs(rows[-1][2] - 1.0))
        if snapshot_every and done % snapshot_every == 0 and done < nsteps:
            save_snapshot(state, out.path(f"snapshot_{done:06d}.wf"))
    final = prop.snapshot(nsteps * dt)
    save_snapshot(final, out.path("state_final.wf"))

    with open(out.path("evolution_log.csv"), "w", newline="") as fh:
        fh.write("step,time,norm,energy,edge_mass\n")
        for row in rows:
            fh.write(f"{row[0]}," + ",".join(repr(float(x))
                                             for x in row[1:]) + "\n")

    criteria = [_crit("norm_drift_max", worst_drift,
                      _float(cfg, "criteria", "max_norm_drift", 1e-10))]
    payload = {"steps": nsteps, "norm_drift_max": worst_drift,
               "edge_mass_final": rows[-1][4],
               "energy_final": rows[-1][3]}

    if _bool(cfg, "criteria", "check_free_packet_width"):
        rho = final.density()
        mesh = grid.meshes()[0]
        total = float(np.sum(rho))
        mu = float(np.sum(mesh * rho) / total)
        width = math.sqrt(float(np.sum((mesh - mu) ** 2 * rho) / total))
        w0 = float(_floats(cfg, "state", "width_length")[0])
        m = grid.mass_per_dim[0]
        predicted = w0 * math.sqrt(
            1.0 + (HBAR * t_total / (2.0 * m * w0**2)) ** 2)
        rel = abs(width / predicted - 1.0)
        criteria.append(_crit("packet_width_rel_error", rel,
                              _float(cfg, "criteria", "width_rel_tol", 1e-6)))
        payload.update({"packet_width": width,
                        "packet_width_predicted": predicted})
    return criteria, payload


def _stationary_series_or_source(cfg, grid, wf0):
    """Frozen field for stationary states, snapshot ladder otherwise."""
    if _bool(cfg, "run", "stationary"):
        return StationarySource(wf0), None
    dt = _float(cfg, "run", "dt_time")
    return None, dt


def _run_trajectories(cfg, out, seed, threads, snapshot_every):
    grid = build_grid(cfg)
    wf0 = build_state(cfg, grid)
    t_total = _float(cfg, "run", "T_time")
    dt_traj = _float(cfg, "run", "dt_traj_time")
    nsteps = int(round(t_total / dt_traj))
    if abs(nsteps * dt_traj - t_total) > 1e-9 * max(1.0, t_total):
        raise ConfigError(f"dt_traj_time={dt_traj} does not tile "
                          f"T_time={t_total}")

    conv_dts = _floats(cfg, "run", "convergence_dts_time", None)
    source, dt = _stationary_series_or_source(cfg, grid, wf0)
    if source is None:
        if conv_dts is not None:
            raise ConfigError("step-size convergence studies need "
                              "[run] stationary = true (a frozen field "
                              "supports every step size)")
        h = build_hamiltonian(cfg, grid)
        source = SnapshotSeries.evolve(wf0, h, 0.5 * dt_traj, 2 * nsteps, dt)

    criteria = []
    payload = {}

    if conv_dts is not None:
        q0 = _floats(cfg, "run", "q0_length")
        dts, errs, slope = rk4_convergence(source, q0, t_total, conv_dts)
        with open(out.path("convergence.csv"), "w", newline="") as fh:
            fh.write("dt,endpoint_error\n")
            for d, e in zip(dts, errs):
                fh.write(f"{d!r},{e!r}\n")
        criteria.append(_crit("rk4_slope_min", slope,
                              _float(cfg, "criteria", "slope_min", 3.5),
                              op=">="))
        criteria.append(_crit("rk4_slope_max", slope,
                              _float(cfg, "criteria", "slope_max", 4.5)))
        payload.update({"rk4_slope": slope, "dts": list(map(float, dts)),
                        "errors": list(map(float, errs))})
        return criteria, payload

    n_traj = _int(cfg, "run", "n_traj")
    drawn = sample(wf0, n_traj, seed)
    res = integrate_ensemble(source, drawn.configurations, nsteps, dt_traj,
                             threads=threads)
    ensemble_to_csv(res, out.path("trajectories.csv"))
    abort_frac = res.aborted_count / res.n
    disp = np.linalg.norm(res.paths[:, -1, :] - res.paths[:, 0, :], axis=1)
    criteria.append(_crit("abort_frac", abort_frac,
                          _float(cfg, "criteria", "max_abort_frac", 0.0)))
    min_disp = _float(cfg, "criteria", "min_displacement_length", None)
    if min_disp is not None:
        survived = disp[res.completed_mask]
        value = float(np.min(survived)) if survived.size else 0.0
        criteria.append(_crit("min_displacement", value, min_disp, op=">="))
    payload.update({"n": res.n, "aborted": res.aborted_count,
                    "displacement_mean": float(np.mean(disp))})
    return criteria, payload


def _run_velocity_check(cfg, out, seed, threads, snapshot_every):
    grid = build_grid(cfg)
    wf = build_state(cfg, grid)
    n_points = _int(cfg, "run", "n_points", 100)
    drawn = sample(wf, n_points, seed)
    x_dims = _ints(cfg, "run", "x_dims", None)
    if x_dims is None:
        x_dims = [0]
    y_dims = [d for d in range(grid.ndim) if d not in set(int(x)
                                                          for x in x_dims)]
    split = SubsystemSplit(tuple(int(x) for x in x_dims), tuple(y_dims))
    rep = subsystem_velocity_consistency(wf, split, drawn.configurations,
                                         threads=threads)
    with open(out.path("velocity_check.csv"), "w", newline="") as fh:
        fh.write("point,deviation\n")
        for i, dev in enumerate(rep.deviations):
            fh.write(f"{i},{float(dev)!r}\n")
    criteria = [_crit("velocity_consistency_max_dev", rep.max_deviation,
                      _float(cfg, "criteria", "max_deviation", 1e-8))]
    payload = {"n_points": n_points, "skipped_slices": rep.skipped,
               "max_deviation": rep.max_deviation}
    return criteria, payload


def _run_equivariance(cfg, out, seed, threads, snapshot_every):
    grid = build_grid(cfg)
    wf0 = build_state(cfg, grid)
    h = build_hamiltonian(cfg, grid)
    t_total = _float(cfg, "run", "T_time")
    dt = _float(cfg, "run", "dt_time")
    dt_traj = _float(cfg, "run", "dt_traj_time")
    n = _int(cfg, "run", "n_samples")
    nsteps = int(round(t_total / dt_traj))
    if abs(nsteps * dt_traj - t_total) > 1e-9 * max(1.0, t_total):
        raise ConfigError(f"dt_traj_time={dt_traj} does not tile "
                          f"T_time={t_total}")
    alpha = _float(cfg, "criteria", "ks_alpha", 0.01)
    max_abort = _float(cfg, "criteria", "max_abort_frac", 1e-3)
    scale = _float(cfg, "run", "velocity_scale", 1.0)

    series = SnapshotSeries.evolve(wf0, h, 0.5 * dt_traj, 2 * nsteps, dt)
    result = equivariance_experiment(series, nsteps, dt_traj, n, seed,
                                     velocity_scale=scale, threads=threads,
                                     alpha=alpha, max_abort_frac=max_abort)
    points_to_csv(result.endpoints, out.path("endpoints.csv"))
    criteria = [_crit(f"ks_dim{r.dim}", r.statistic, r.threshold)
                for r in result.reports]
    criteria.append(_crit("abort_frac", result.aborted_count / n, max_abort))
    payload = {"fits": [r.to_dict() for r in result.reports],
               "aborted": result.aborted_count,
               "velocity_scale": scale, "n": n}
    return criteria, payload


def _run_collapse(cfg, out, seed, threads, snapshot_every):
    sys_grid = build_grid(cfg, "grid")
    ptr_grid = build_grid(cfg, "pointer_grid")
    if sys_grid.ndim != 1 or ptr_grid.ndim != 1:
        raise ConfigError("collapse scenarios use 1D system and pointer "
                          "grids")
    b1 = make_gaussian(sys_grid,
                       center=_float(cfg, "state", "branch1_center_length"),
                       width=_float(cfg, "state", "branch1_width_length"),
                       wavevector=_float(cfg, "state",
                                         "branch1_wavevector_invlength", 0.0))
    b2 = make_gaussian(sys_grid,
                       center=_float(cfg, "state", "branch2_center_length"),
                       width=_float(cfg, "state", "branch2_width_length"),
                       wavevector=_float(cfg, "state",
                                         "branch2_wavevector_invlength", 0.0))
    p1 = _float(cfg, "state", "c1_abs2")
    if not 0.0 < p1 < 1.0:
        raise ConfigError(f"[state] c1_abs2 must be in (0, 1), got {p1}")
    pointer = make_gaussian(
        ptr_grid, center=_float(cfg, "state", "pointer_center_length", 0.0),
        width=_float(cfg, "state", "pointer_width_length"))
    profile = profile_callable(_get(cfg, "kick", "profile", "sign"))
    strength = _float(cfg, "kick", "strength_rate")
    duration = _float(cfg, "kick", "duration_time")

    result = collapse_experiment(
        b1, b2, math.sqrt(p1), math.sqrt(1.0 - p1), pointer, profile,
        strength, duration,
        n=_int(cfg, "run", "n_trials"), seed=seed,
        t_post=_float(cfg, "run", "t_post_time"),
        dt=_float(cfg, "run", "dt_time"),
        dt_traj=_float(cfg, "run", "dt_traj_time"),
        n_checkpoints=_int(cfg, "run", "n_checkpoints", 4),
        v_system=potential_callable(cfg, "potential",
                                    sys_grid.mass_per_dim[0]),
        v_pointer=potential_callable(cfg, "pointer_potential",
                                     ptr_grid.mass_per_dim[0]),
        guard_widths=_float(cfg, "run", "guard_widths", 3.0),
        threads=threads)

    with open(out.path("trials.csv"), "w", newline="") as fh:
        ncp = result.per_trial_fidelity.shape[1]
        fh.write("trial,branch,pointer_y,"
                 + ",".join(f"fidelity_t{c}" for c in range(ncp)) + "\n")
        for i in range(result.n):
            fids = ",".join(repr(float(x))
                            for x in result.per_trial_fidelity[i])
            fh.write(f"{i},{int(result.per_trial_branch[i]) + 1},"
                     f"{float(result.per_trial_pointer[i])!r},{fids}\n")

    nsig = _float(cfg, "criteria", "freq_nsigma", 3.0)
    fdef = _float(cfg, "criteria", "fidelity_deficit_max", 1e-4)
    slack = _float(cfg, "criteria", "permanence_slack", 1e-6)
    with np.errstate(invalid="ignore"):
        worst_mean_deficit = float(np.nanmax(1.0 - result.fidelity_mean))
    criteria = [
        _crit("branch_freq_dev_sigmas",
              abs(result.freq1 - result.expected_p1) / result.freq_sigma,
              nsig),
        _crit("mean_fidelity_deficit", worst_mean_deficit, fdef),
        _crit("permanence_margin", result.permanence_margin, -slack,
              op=">="),
        _crit("ambiguous_frac", result.n_ambiguous / result.n,
              _float(cfg, "criteria", "max_ambiguous_frac", 0.01)),
        _crit("abort_frac", result.aborted_trajectories / result.n,
              _float(cfg, "criteria", "max_abort_frac", 1e-3)),
    ]
    payload = {
        "n": result.n, "n_assigned": result.n_assigned,
        "n_ambiguous": result.n_ambiguous, "counts": list(result.counts),
        "expected_p1": result.expected_p1, "freq1": result.freq1,
        "freq_sigma": result.freq_sigma,
        "checkpoint_times": [float(t) for t in result.checkpoint_times],
        "fidelity_mean": [[None if np.isnan(x) else float(x) for x in row]
                          for row in result.fidelity_mean],
        "permanence_margin": result.permanence_margin,
        "aborted": result.aborted_trajectories,
        "excluded_slices": result.excluded_slices,
        "branch_overlap": result.branch_overlap,
        "pointer_overlap": result.pointer_overlap,
    }
    return criteria, payload


def _run_decoupling(cfg, out, seed, threads, snapshot_every):
    x_grid = build_grid(cfg, "grid")
    y_grid = build_grid(cfg, "env_grid")
    phi = build_state(cfg, x_grid, "state")
    chi = build_state(cfg, y_grid, "env_state")
    result = decoupling_experiment(
        phi, chi,
        t_total=_float(cfg, "run", "T_time"),
        dt=_float(cfg, "run", "dt_time"),
        dt_traj=_float(cfg, "run", "dt_traj_time"),
        seed=seed,
        n_checkpoints=_int(cfg, "run", "n_checkpoints", 10),
        v_x=potential_callable(cfg, "potential", x_grid.mass_per_dim[0]),
        v_y=potential_callable(cfg, "env_potential",
                               y_grid.mass_per_dim[0]),
        coupling=coupling_callable(cfg), threads=threads)
    with open(out.path("deviations.csv"), "w", newline="") as fh:
        fh.write("time,deviation\n")
        for t, d in zip(result.times, result.deviations):
            fh.write(f"{float(t)!r},{float(d)!r}\n")
    criteria = []
    max_dev = _float(cfg, "criteria", "max_deviation", None)
    if max_dev is not None:
        criteria.append(_crit("conditional_deviation_max",
                              result.max_deviation, max_dev))
    min_dev = _float(cfg, "criteria", "min_deviation", None)
    if min_dev is not None:
        criteria.append(_crit("conditional_deviation_min",
                              result.max_deviation, min_dev, op=">="))
    if not criteria:
        raise ConfigError("[criteria] needs max_deviation or min_deviation")
    payload = {"max_deviation": result.max_deviation,
               "coupled": result.coupled,
               "deviations": [float(d) for d in result.deviations]}
    return criteria, payload


def _run_timeless(cfg, out, seed, threads, snapshot_every):
    grid = build_grid(cfg)
    wf = build_state(cfg, grid)
    h = build_hamiltonian(cfg, grid)
    result = timeless_experiment(
        wf, h,
        t_total=_float(cfg, "run", "T_time"),
        dt_traj=_float(cfg, "run", "dt_traj_time"),
        dt_check=_float(cfg, "run", "dt_check_time"),
        seed=seed,
        n_checkpoints=_int(cfg, "run", "n_checkpoints", 8),
        threads=threads)
    crit = []
    tol = _float(cfg, "criteria", "stationarity_tol", 1e-8)
    crit.append(_crit("stationarity_overlap_dev",
                      result.stationarity_overlap_dev, tol))
    crit.append(_crit("stationarity_density_drift",
                      result.stationarity_density_drift, tol))
    mind = _float(cfg, "criteria", "min_displacement_length", None)
    if mind is not None:
        crit.append(_crit("displacement", result.displacement_max, mind,
                          op=">="))
    maxd = _float(cfg, "criteria", "max_displacement_length", None)
    if maxd is not None:
        crit.append(_crit("displacement_max", result.displacement_max, maxd))
    minr = _float(cfg, "criteria", "min_ray_change", None)
    if minr is not None:
        crit.append(_crit("conditional_ray_change", result.ray_change_max,
                          minr, op=">="))
    maxr = _float(cfg, "criteria", "max_ray_change", None)
    if maxr is not None:
        crit.append(_crit("conditional_ray_change_max",
                          result.ray_change_max, maxr))
    payload = {
        "stationarity_overlap_dev": result.stationarity_overlap_dev,
        "stationarity_density_drift": result.stationarity_density_drift,
        "displacement_max": result.displacement_max,
        "ray_change_max": result.ray_change_max,
        "q0": [float(x) for x in result.q0],
        "resamples": result.resamples,
        "velocity_floor_met": result.velocity_floor_met,
        "trajectory_status": result.trajectory_status,
    }
    return crit, payload


_RUNNERS = {
    "evolve": _run_evolve,
    "trajectories": _run_trajectories,
    "velocity-check": _run_velocity_check,
    "equivariance": _run_equivariance,
    "collapse": _run_collapse,
    "decoupling": _run_decoupling,
    "timeless": _run_timeless,
}


# ---------------------------------------------------------------------------
# Scenario resolution and the run driver
# ---------------------------------------------------------------------------

def _catalogue():
    root = resources.files("bohmlab") / "scenarios"
    names = sorted(p.name[:-4] for p in root.iterdir()
                   if p.name.endswith(".cfg"))
    return names


def _scenario_text(target):
    """Load scenario text from a shipped name or a filesystem path.

    Only an actual file counts as a path: a stray directory named like a
    scenario (e.g. a previous run's output dir) must not shadow the
    shipped config.
    """
    if os.path.sep in target or target.endswith(".cfg") \
            or os.path.isfile(target):
        if not os.path.isfile(target):
            raise ConfigError(f"scenario file not found: {target}")
        name = os.path.splitext(os.path.basename(target))[0]
        with open(target) as fh:
            return name, fh.read()
    entry = resources.files("bohmlab") / "scenarios" / f"{target}.cfg"
    if not entry.is_file():
        known = ", ".join(_catalogue())
        raise ConfigError(f"unknown scenario {target!r}; shipped scenarios: "
                          f"{known}")
    return target, entry.read_text()


def _parse(text):
    cfg = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cfg.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed scenario file: {exc}")
    if not cfg.has_section("scenario"):
        raise ConfigError("scenario file needs a [scenario] section")
    kind = _get(cfg, "scenario", "kind").strip().lower()
    if kind not in _RUNNERS:
        raise ConfigError(f"unknown scenario kind {kind!r}; known kinds: "
                          f"{', '.join(sorted(_RUNNERS))}")
    return cfg, kind


def run_scenario(target, out_dir=None, seed=None, threads=1,
                 snapshot_every=0):
    """Run one scenario end to end; returns ``(exit_code, report)``.

    This is the same entry point the ``run`` subcommand uses, split out
    so tests and notebooks can call it directly.
    """
    name, text = _scenario_text(target)
    cfg, kind = _parse(text)
    if seed is None:
        seed = _int(cfg, "run", "seed", 0)
    if out_dir is None:
        base = os.environ.get("BOHMLAB_OUT", "bohmlab-runs")
        out_dir = os.path.join(base, name)
    out = _OutDir(out_dir)
    status = "pass"
    code = EXIT_PASS
    report = {
        "scenario": name,
        "kind": kind,
        "seed": int(seed),
        "threads": int(threads),
        "criteria": [],
    }
    try:
        criteria, payload = _RUNNERS[kind](cfg, out, int(seed),
                                           int(threads),
                                           int(snapshot_every))
        report["criteria"] = criteria
        report.update(payload)
        passed = all(c["pass"] for c in criteria)
        report["pass"] = passed
        if not passed:
            status, code = "fail", EXIT_FAIL
    except AbortError as exc:
        report.update({"pass": False, "error": str(exc)})
        status, code = "abort", EXIT_ABORT
    except ValidationError as exc:
        report.update({"pass": False, "error": str(exc)})
        status, code = "config-error", EXIT_CONFIG
    out.write_json("report.json", report)
    _write_manifest(out, name, status, code)
    return code, report


def _write_manifest(out, name, status, code):
    # The timestamp below is the single volatile value a run produces;
    # everything else (report, CSVs, snapshots, hashes) is reproducible
    # byte for byte for a given scenario and seed.
    artifacts = []
    for fname in sorted(set(out.names)):
        full = os.path.join(out.root, fname)
        if not os.path.exists(full):
            continue
        with open(full, "rb") as fh:
            blob = fh.read()
        artifacts.append({"name": fname, "bytes": len(blob),
                          "sha256": hashlib.sha256(blob).hexdigest()})
    manifest = {
        "scenario": name,
        "status": status,
        "exit_code": code,
        "generated_utc": datetime.now(timezone.utc).isoformat(),
        "artifacts": artifacts,
    }
    with open(os.path.join(out.root, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# argparse front end
# ---------------------------------------------------------------------------

def _cmd_list(args):
    for name in _catalogue():
        _, text = _scenario_text(name)
        cfg, kind = _parse(text)
        desc = _get(cfg, "scenario", "description", "")
        print(f"{name:32s} {kind:14s} {desc}")
    return EXIT_PASS


def _cmd_describe(args):
    name, text = _scenario_text(args.scenario)
    cfg, kind = _parse(text)
    print(f"scenario: {name}")
    print(f"kind:     {kind}")
    desc = _get(cfg, "scenario", "description", "")
    if desc:
        print(f"about:    {desc}")
    print()
    print(text, end="")
    return EXIT_PASS


def _cmd_run(args):
    code, report = run_scenario(args.scenario, out_dir=args.out,
                                seed=args.seed, threads=args.threads,
                                snapshot_every=args.snapshot_every)
    for c in report.get("criteria", []):
        verdict = "PASS" if c["pass"] else "FAIL"
        print(f"  [{verdict}] {c['name']}: {c['value']:.6g} "
              f"{c['op']} {c['threshold']:.6g}")
    if "error" in report:
        print(f"  [ERROR] {report['error']}", file=sys.stderr)
    overall = {EXIT_PASS: "PASS", EXIT_FAIL: "FAIL",
               EXIT_CONFIG: "CONFIG-ERROR", EXIT_ABORT: "ABORT"}[code]
    print(f"{report['scenario']}: {overall}")
    return code


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="bohmlab",
        description="Run packaged or custom pilot-wave scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="list shipped scenarios")

    p_desc = sub.add_parser("describe", help="print one scenario's config")
    p_desc.add_argument("scenario")

    p_run = sub.add_parser("run", help="run a scenario")
    p_run.add_argument("scenario",
                       help="shipped scenario name or path to a .cfg file")
    p_run.add_argument("--out", default=None,
                       help="artifact directory (default: "
                            "$BOHMLAB_OUT/<name> or bohmlab-runs/<name>)")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
    p_run.add_argument("--threads", type=int, default=1,
                       help="row-split threads for velocity batches")
    p_run.add_argument("--snapshot-every", type=int, default=0,
                       help="write intermediate snapshots every N steps "
                            "(evolve scenarios)")

    args = parser.parse_args(argv)
    try:
        if args.command == "list":
            return _cmd_list(args)
        if args.command == "describe":
            return _cmd_describe(args)
        return _cmd_run(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AbortError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
