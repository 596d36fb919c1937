"""Numerical laboratory for pilot-wave dynamics on configuration-space grids.

The package evolves a wave function for the whole model universe with a
split-step spectral integrator, guides point particles along the flow
lines of the quantum probability current, and packages the experiments
that probe what emerges for subsystems: velocity consistency of
conditional states, effective collapse with Born-rule branch weights,
autonomous subsystem evolution for product states, and time-dependent
subsystem dynamics inside a globally stationary state.

Quick tour::

    import bohmlab as bl

    grid = bl.GridSpec(extents=[(-8.0, 8.0)] * 2, npoints=[128, 128])
    psi = bl.stationary_rotor(grid)           # stationary 2D excited state
    field = bl.VelocityField(psi)
    field.velocity([1.2, 0.0])                # guiding velocity at a point

Heavy per-point kernels (multilinear interpolation, guiding-velocity
contraction) run in a compiled extension when it built at install time;
``bohmlab.backend()`` reports which implementation is active and the
``BOHMLAB_PURE_PYTHON=1`` environment variable forces the NumPy one.
"""

from ._kernels import BACKEND, available_backends
from .conditional import CollapseResult, ConditionalSlice, \
    ConsistencyReport, DecouplingResult, SubsystemSplit, TimelessResult, \
    collapse_experiment, conditional_state, decoupling_experiment, \
    fidelity, kick_map, ray_distance, subsystem_velocity_consistency, \
    timeless_experiment
from .equilibrium import EquivarianceResult, FitReport, SampleSet, \
    equivariance_experiment, ks_marginal, ks_statistic, marginal_cdf, \
    marginal_weights, points_to_csv, sample
from .errors import AbortError, BohmLabError, ConfigError, GridError, \
    InconclusiveError, NodeProximityError, NumericalAbortError, \
    OutOfDomainError, StateError, SupportLeakError, ValidationError
from .evolve import EdgeMassWarning, HamiltonianSpec, Propagator, \
    RelaxationResult, StabilityWarning, eigenstate_residual, \
    expectation_energy, ground_state, measurement_kick, \
    oscillator_eigenstate, overlap_magnitude, split_step, stationary_rotor
from .fields import Configuration, GridSpec, HBAR, WaveFunction, \
    check_in_domain, density_floor, edge_mass, evaluate, inner, \
    load_snapshot, make_gaussian, mean_density, norm, normalized, \
    product_state, save_snapshot, wavefunction_to_csv
from .guidance import ABORTED_BOUNDARY, ABORTED_NODE, COMPLETED, \
    EnsembleResult, SnapshotSeries, StationarySource, Trajectory, \
    VelocityField, ensemble_to_csv, integrate_ensemble, \
    integrate_trajectory, rk4_convergence, spectral_gradient, \
    trajectory_to_csv, validate_step_compat

__version__ = "0.1.0"


def backend():
    """Name of the active kernel backend: ``"cython"`` or ``"numpy"``."""
    return BACKEND


__all__ = [
    "ABORTED_BOUNDARY", "ABORTED_NODE", "AbortError", "BACKEND",
    "BohmLabError", "COMPLETED", "CollapseResult", "ConditionalSlice",
    "ConfigError", "Configuration", "ConsistencyReport", "DecouplingResult",
    "EdgeMassWarning", "EnsembleResult", "EquivarianceResult", "FitReport",
    "GridError", "GridSpec", "HBAR", "HamiltonianSpec", "InconclusiveError",
    "NodeProximityError", "NumericalAbortError", "OutOfDomainError",
    "Propagator", "RelaxationResult", "SampleSet", "SnapshotSeries",
    "StabilityWarning", "StateError", "StationarySource", "SupportLeakError",
    "Trajectory", "ValidationError", "VelocityField", "WaveFunction",
    "available_backends", "backend", "check_in_domain", "collapse_experiment",
    "conditional_state", "decoupling_experiment", "density_floor",
    "edge_mass", "eigenstate_residual", "ensemble_to_csv",
    "equivariance_experiment", "evaluate", "expectation_energy", "fidelity",
    "ground_state", "inner", "integrate_ensemble", "integrate_trajectory",
    "kick_map", "ks_marginal", "ks_statistic", "load_snapshot",
    "make_gaussian", "marginal_cdf", "marginal_weights", "mean_density",
    "measurement_kick", "norm", "normalized", "oscillator_eigenstate",
    "overlap_magnitude", "points_to_csv", "product_state", "ray_distance",
    "rk4_convergence", "sample", "save_snapshot", "spectral_gradient",
    "split_step", "stationary_rotor", "subsystem_velocity_consistency",
    "timeless_experiment", "trajectory_to_csv", "validate_step_compat",
    "wavefunction_to_csv",
]
