"""Time evolution on the grid.

Propagation uses Strang splitting: a half-step phase from the potential,
a full kinetic step applied in Fourier space, and another half potential
phase.  Each piece is unitary, so the norm is conserved to rounding
regardless of the step size; the splitting error is second order in dt.
With a zero potential the kinetic phase alone is the exact propagator of
the periodic problem, to machine precision.

Also here: imaginary-time relaxation to the ground state, closed-form
oscillator eigenstates (and the rotating two-dimensional superposition
built from them), and an impulsive measurement coupling implemented as
an exact conditional displacement of the pointer dimension.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import GridError, NumericalAbortError, StateError, \
    SupportLeakError
from .fields import HBAR, WaveFunction, edge_mass, inner, norm, normalized

# Probability mass near the box faces above which open-space results stop
# being trustworthy; the propagator warns when it is crossed.
EDGE_MASS_TOL = 1e-6

# Potential phase accumulated in a single step beyond which the splitting
# is unlikely to resolve the dynamics.
PHASE_PER_STEP_WARN = math.pi


class EdgeMassWarning(UserWarning):
    """Probability mass is reaching the periodic boundary."""


class StabilityWarning(UserWarning):
    """Step size is too coarse for the potential."""


class HamiltonianSpec(object):
    """Kinetic term fixed by the grid masses plus a node-sampled potential.

    Build with one of the classmethods; `harmonic` also records the
    frequency so oscillator-specific constructions can check against it.
    """

    def __init__(self, grid, potential, label="custom", omega=None):
        potential = np.asarray(potential, dtype=float)
        if potential.shape != grid.npoints:
            raise StateError(f"potential shape {potential.shape} does not "
                             f"match grid nodes {grid.npoints}")
        if not np.all(np.isfinite(potential)):
            raise StateError("potential contains non-finite values")
        potential.setflags(write=False)
        self.grid = grid
        self.potential = potential
        self.label = label
        self.omega = omega

    @classmethod
    def free(cls, grid):
        return cls(grid, np.zeros(grid.npoints), label="free")

    @classmethod
    def harmonic(cls, grid, omega, center=0.0):
        """Isotropic oscillator ``sum_d m_d omega^2 (q_d - c_d)^2 / 2``."""
        omega = float(omega)
        center = np.broadcast_to(np.asarray(center, float), (grid.ndim,))
        v = np.zeros(grid.npoints)
        for d, mesh in enumerate(grid.meshes()):
            v = v + 0.5 * grid.mass_per_dim[d] * omega**2 \
                * (mesh - center[d]) ** 2
        return cls(grid, v, label="harmonic", omega=omega)

    @classmethod
    def from_callable(cls, grid, fn, label="custom"):
        """Potential sampled from ``fn(*meshes)`` on the node lattice."""
        v = np.asarray(fn(*grid.meshes()), dtype=float)
        v = np.broadcast_to(v, grid.npoints)
        return cls(grid, np.array(v), label=label)

    def kinetic_mesh(self):
        """``sum_d hbar^2 k_d^2 / (2 m_d)`` over the Fourier lattice."""
        g = self.grid
        t = np.zeros(g.npoints)
        for d in range(g.ndim):
            k = g.wavenumbers(d)
            shape = [1] * g.ndim
            shape[d] = g.npoints[d]
            t = t + (HBAR**2 * k**2 / (2.0 * g.mass_per_dim[d])) \
                .reshape(shape)
        return t


def _grid_axes(grid):
    return tuple(range(grid.ndim))


def expectation_energy(wf, h):
    """Rayleigh quotient <psi|H|psi> / <psi|psi>."""
    a = wf.amplitudes
    axes = _grid_axes(wf.grid)
    ahat = np.fft.fftn(a, axes=axes)
    w = ahat.real**2 + ahat.imag**2
    tnum = float(np.sum(h.kinetic_mesh()[..., np.newaxis] * w))
    tden = float(np.sum(w))
    rho = wf.density()
    vnum = float(np.sum(h.potential * rho))
    vden = float(np.sum(rho))
    if vden == 0.0:
        raise StateError("energy undefined for a zero state")
    return tnum / tden + vnum / vden


def apply_hamiltonian(wf, h):
    """Node values of ``H psi`` (spectral kinetic term plus potential)."""
    a = wf.amplitudes
    axes = _grid_axes(wf.grid)
    ahat = np.fft.fftn(a, axes=axes)
    kin = np.fft.ifftn(h.kinetic_mesh()[..., np.newaxis] * ahat, axes=axes)
    return kin + h.potential[..., np.newaxis] * a


def eigenstate_residual(wf, h):
    """Relative residual ``|H psi - E psi| / |psi|`` with Rayleigh E.

    Returns ``(residual, energy)``; small residuals certify that the
    state is numerically an eigenstate of the discretized Hamiltonian.
    """
    hpsi = apply_hamiltonian(wf, h)
    a = wf.amplitudes
    den = float(np.sum(a.real**2 + a.imag**2))
    energy = float(np.sum(np.conj(a) * hpsi).real) / den
    res = hpsi - energy * a
    residual = math.sqrt(float(np.sum(res.real**2 + res.imag**2)) / den)
    return residual, energy


class Propagator:
    """Stateful Strang-splitting stepper.

    Precomputes the phase factors for a fixed ``dt`` and advances the
    state in place; `state` materializes the current WaveFunction.
    Periodically checks finiteness (raising NumericalAbortError) and the
    boundary monitor (warning once per crossing).  Negative ``dt`` is
    allowed and propagates backwards.
    """

    def __init__(self, wf, h, dt, check_every=50):
        if wf.grid != h.grid:
            raise GridError("state and Hamiltonian live on different grids")
        if dt == 0.0 or not np.isfinite(dt):
            raise StateError(f"dt must be finite and nonzero, got {dt}")
        if not np.any(wf.amplitudes):
            raise StateError("cannot propagate a zero state")
        self.h = h
        self.dt = float(dt)
        self.check_every = int(check_every)
        span = float(np.max(h.potential) - np.min(h.potential))
        if span * abs(dt) > PHASE_PER_STEP_WARN:
            warnings.warn(
                f"potential phase per step is {span * abs(dt):.3g} rad; "
                f"dt={dt} is too coarse for this potential",
                StabilityWarning, stacklevel=2)
        self._vhalf = np.exp(h.potential * (-0.5j * dt / HBAR))[..., None]
        self._kfull = np.exp(h.kinetic_mesh() * (-1j * dt / HBAR))[..., None]
        self._axes = _grid_axes(wf.grid)
        self._amps = np.array(wf.amplitudes)
        self._grid = wf.grid
        self.time = wf.time_tag
        self.steps_taken = 0
        self._edge_warned = False

    @property
    def state(self):
        return self.snapshot()

    def snapshot(self, time_tag=None):
        """Current state; ``time_tag`` overrides the accumulated time."""
        t = self.time if time_tag is None else float(time_tag)
        return WaveFunction(self._grid, self._amps, time_tag=t)

    def advance(self, nsteps):
        """Take ``nsteps`` splitting steps."""
        for _ in range(int(nsteps)):
            a = self._amps
            a = self._vhalf * a
            a = np.fft.ifftn(self._kfull * np.fft.fftn(a, axes=self._axes),
                             axes=self._axes)
            a = self._vhalf * a
            self._amps = a
            self.steps_taken += 1
            if self.steps_taken % self.check_every == 0:
                self.check()
        self.time += self.dt * int(nsteps)
        return self

    def check(self):
        """Run the finiteness and boundary monitors immediately."""
        if not np.all(np.isfinite(self._amps.view(np.float64))):
            raise NumericalAbortError(
                f"non-finite amplitudes after {self.steps_taken} steps "
                f"(dt={self.dt})")
        if not self._edge_warned:
            em = edge_mass(self.state)
            if em > EDGE_MASS_TOL:
                warnings.warn(
                    f"edge mass {em:.3g} exceeds {EDGE_MASS_TOL:.0e} after "
                    f"{self.steps_taken} steps; periodic images are no "
                    "longer negligible", EdgeMassWarning, stacklevel=3)
                self._edge_warned = True


def split_step(wf, h, dt, nsteps, check_every=50):
    """Propagate ``nsteps`` steps of size ``dt`` and return the result."""
    prop = Propagator(wf, h, dt, check_every=check_every)
    prop.advance(nsteps)
    prop.check()
    return prop.state


@dataclass
class RelaxationResult:
    state: WaveFunction
    energy: float
    steps: int


def ground_state(h, relax_dt=0.02, tol=1e-10, max_steps=100000,
                 check_every=10, seed=0, start=None):
    """Imaginary-time relaxation to the ground state of ``h``.

    Starts from seeded complex noise (or ``start``), applies the
    split-step map with ``dt -> -i relax_dt`` while renormalizing, and
    stops when the Rayleigh quotient changes by less than ``tol``
    between successive checks.  The relaxed state keeps whatever global
    phase it converged with; for a real ground state that phase is
    constant across the grid but arbitrary.

    Raises NumericalAbortError when the budget runs out or the state
    collapses numerically to zero.
    """
    g = h.grid
    if start is None:
        rng = np.random.default_rng(seed)
        a = rng.standard_normal(g.npoints + (1,)) \
            + 1j * rng.standard_normal(g.npoints + (1,))
        start = WaveFunction(g, a)
    wf = normalized(start)
    decay_v = np.exp(h.potential * (-0.5 * relax_dt / HBAR))[..., None]
    decay_k = np.exp(h.kinetic_mesh() * (-relax_dt / HBAR))[..., None]
    axes = _grid_axes(g)
    amps = np.array(wf.amplitudes)
    energy = expectation_energy(wf, h)
    for step in range(1, int(max_steps) + 1):
        amps = decay_v * amps
        amps = np.fft.ifftn(decay_k * np.fft.fftn(amps, axes=axes),
                            axes=axes)
        amps = decay_v * amps
        nrm = math.sqrt(float(np.sum(amps.real**2 + amps.imag**2))
                        * g.cell_volume)
        if nrm == 0.0 or not np.isfinite(nrm):
            raise NumericalAbortError(
                f"imaginary-time relaxation lost the state (norm={nrm}); "
                f"relax_dt={relax_dt} is too aggressive for this potential")
        amps = amps / nrm
        if step % check_every == 0:
            wf = WaveFunction(g, amps, time_tag=wf.time_tag)
            new_energy = expectation_energy(wf, h)
            if abs(new_energy - energy) < tol * max(1.0, abs(new_energy)):
                return RelaxationResult(wf, new_energy, step)
            energy = new_energy
    raise NumericalAbortError(
        f"imaginary-time relaxation did not converge within {max_steps} "
        f"steps (tol={tol})")


def oscillator_eigenstate(grid, quanta, omega, center=0.0):
    """Product of 1D oscillator eigenfunctions, one factor per dimension.

    ``quanta`` gives the excitation number along each dimension; the
    mass comes from the particle owning that dimension.  Uses the
    Hermite-function closed form and normalizes on the grid.
    """
    quanta = tuple(int(n) for n in np.broadcast_to(quanta, (grid.ndim,)))
    if any(n < 0 for n in quanta):
        raise StateError(f"quanta must be non-negative: {quanta}")
    omega = float(omega)
    if omega <= 0:
        raise StateError(f"omega must be positive: {omega}")
    center = np.broadcast_to(np.asarray(center, float), (grid.ndim,))
    amps = np.ones(grid.npoints)
    for d, mesh in enumerate(grid.meshes()):
        m = grid.mass_per_dim[d]
        xi = np.sqrt(m * omega / HBAR) * (mesh - center[d])
        n = quanta[d]
        coeffs = np.zeros(n + 1)
        coeffs[n] = 1.0
        hn = np.polynomial.hermite.hermval(xi, coeffs)
        amps = amps * hn * np.exp(-0.5 * xi**2)
    return normalized(WaveFunction(grid, amps.astype(np.complex128)))


def stationary_rotor(grid, omega=1.0):
    """Complex oscillator superposition with a circulating current.

    On a two-dimensional grid with equal masses this is the unit-norm
    combination of the (0,1) and (1,0) oscillator levels with a relative
    factor of i.  Both levels share the energy ``2 hbar omega``, so the
    state is stationary (its density never moves), yet its phase winds
    around the origin and the guidance field circulates.
    """
    if grid.ndim != 2:
        raise GridError(f"rotor state needs a 2-dimensional grid, got "
                        f"{grid.ndim} dimensions")
    if grid.mass_per_dim[0] != grid.mass_per_dim[1]:
        raise GridError("rotor state needs equal masses along both "
                        f"dimensions, got {tuple(grid.mass_per_dim)}")
    a = oscillator_eigenstate(grid, (0, 1), omega)
    b = oscillator_eigenstate(grid, (1, 0), omega)
    amps = a.amplitudes + 1j * b.amplitudes
    return normalized(WaveFunction(grid, amps))


def measurement_kick(wf, profile, pointer_dim, strength, duration):
    """Impulsive pointer displacement conditioned on the rest of the grid.

    Models a measurement interaction turned on for a short ``duration``
    with the kinetic term frozen: the pointer dimension is displaced by
    ``strength * duration * profile(...)`` where ``profile`` is a
    function of the mesh coordinates of all other dimensions.  The
    displacement is applied exactly, as a linear phase in the pointer's
    Fourier coordinate, so the map is unitary.

    Raises SupportLeakError if the displaced state puts more than 1e-6
    of its mass near the box faces (the shift wrapped around).
    """
    g = wf.grid
    pointer_dim = int(pointer_dim)
    if not 0 <= pointer_dim < g.ndim:
        raise GridError(f"pointer dimension {pointer_dim} out of range")
    total = float(strength) * float(duration)
    if total == 0.0:
        return wf
    other = [d for d in range(g.ndim) if d != pointer_dim]
    sub = np.meshgrid(*[g.axis(d) for d in other], indexing="ij") \
        if other else []
    shift = np.asarray(profile(*sub), dtype=float)
    shift = np.broadcast_to(shift, tuple(g.npoints[d] for d in other))
    if not np.all(np.isfinite(shift)):
        raise StateError("shift profile produced non-finite values")
    shift = total * shift
    # Insert the pointer axis back so the phase broadcasts over it.
    shift = np.expand_dims(shift, axis=pointer_dim)
    k = g.wavenumbers(pointer_dim)
    kshape = [1] * g.ndim
    kshape[pointer_dim] = g.npoints[pointer_dim]
    phase = np.exp(-1j * k.reshape(kshape) * shift)[..., np.newaxis]
    ahat = np.fft.fft(wf.amplitudes, axis=pointer_dim)
    kicked = np.fft.ifft(phase * ahat, axis=pointer_dim)
    out = WaveFunction(g, kicked, time_tag=wf.time_tag)
    em = edge_mass(out)
    if em > EDGE_MASS_TOL:
        raise SupportLeakError(
            f"pointer displacement pushed {em:.3g} of the mass to the box "
            "faces; enlarge the box or reduce the kick")
    return out


def overlap_magnitude(a, b):
    """|<a, b>| for unit-comparison convenience."""
    return abs(inner(a, b)) / (norm(a) * norm(b))
