"""States on periodic configuration-space grids.

A `GridSpec` describes a rectangular box with periodic identification of
opposite faces, sampled on a regular lattice: dimension ``j`` has nodes
``lower_j + i * dq_j`` for ``i = 0 .. n_j - 1`` with
``dq_j = (upper_j - lower_j) / n_j`` (the upper face is the same node as
the lower one).  Each dimension belongs to a particle, and each particle
has a mass, so grids double as a bookkeeping device for many-body
configuration space.

A `WaveFunction` stores complex amplitudes of shape ``(*npoints, S)``
where ``S`` is the number of spin components, together with the grid and
a time tag.  Off-lattice values come from periodic multilinear
interpolation (see `evaluate`), which is exact at the nodes.

Units: hbar = 1 throughout; masses are configurable per particle.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import GridError, OutOfDomainError, StateError

HBAR = 1.0

# Interpolation offsets this close to an integer lattice index snap onto it,
# which makes node hits reproduce stored amplitudes bit-for-bit.  The window
# is far below every physical tolerance in the package but well above the
# rounding error of the index computation on any grid the budget allows.
NODE_SNAP = 1e-9

# Relative density floor: velocities are not trusted where the interpolated
# density falls below this multiple of the mean node density.
DENSITY_FLOOR_REL = 1e-12

# Default cap on grid nodes; a complex128 field at the cap is 256 MiB, and
# velocity evaluation holds one gradient array per dimension on top of that.
DEFAULT_MAX_POINTS = 2**24

_SNAPSHOT_MAGIC = b"BLWF0001"


class GridSpec:
    """Periodic rectangular grid over configuration space.

    Parameters
    ----------
    extents : sequence of (float, float)
        Per-dimension (lower, upper) box edges; upper must exceed lower.
        Opposite faces are identified.
    npoints : sequence of int
        Nodes per dimension, at least 2 each.
    particle_map : sequence of int, optional
        Particle index owning each dimension.  Defaults to one particle
        per dimension.  Indices must cover 0..P-1 with no gaps.
    masses : sequence of float, optional
        One positive mass per particle; defaults to 1 for everyone.
    max_points : int, optional
        Memory budget in total grid nodes.
    """

    def __init__(self, extents, npoints, particle_map=None, masses=None,
                 max_points=DEFAULT_MAX_POINTS):
        extents = tuple((float(lo), float(hi)) for lo, hi in extents)
        npoints = tuple(int(n) for n in npoints)
        if len(extents) != len(npoints) or not extents:
            raise GridError("extents and npoints must be non-empty and of "
                            f"equal length, got {len(extents)} extents and "
                            f"{len(npoints)} npoints")
        for d, ((lo, hi), n) in enumerate(zip(extents, npoints)):
            if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
                raise GridError(f"dimension {d}: extent ({lo}, {hi}) must be "
                                "finite with upper > lower")
            if n < 2:
                raise GridError(f"dimension {d}: need at least 2 points, "
                                f"got {n}")
        total = 1
        for n in npoints:
            total *= n
        if total > max_points:
            raise GridError(f"grid has {total} nodes, exceeding the budget "
                            f"of {max_points}")

        if particle_map is None:
            particle_map = tuple(range(len(npoints)))
        else:
            particle_map = tuple(int(p) for p in particle_map)
        if len(particle_map) != len(npoints):
            raise GridError("particle_map must assign one particle per "
                            "dimension")
        nparticles = max(particle_map) + 1
        if min(particle_map) < 0 or set(particle_map) != set(range(nparticles)):
            raise GridError(f"particle_map {particle_map} must use indices "
                            "0..P-1 without gaps")

        if masses is None:
            masses = (1.0,) * nparticles
        else:
            masses = tuple(float(m) for m in masses)
        if len(masses) != nparticles:
            raise GridError(f"expected {nparticles} masses, got {len(masses)}")
        if any(not np.isfinite(m) or m <= 0 for m in masses):
            raise GridError(f"masses must be positive and finite: {masses}")

        self.extents = extents
        self.npoints = npoints
        self.particle_map = particle_map
        self.masses = masses
        self.ndim = len(npoints)
        self.nparticles = nparticles
        self.size = total
        self.lower = np.array([lo for lo, _ in extents])
        self.upper = np.array([hi for _, hi in extents])
        self.spacing = (self.upper - self.lower) / np.array(npoints, float)
        self.cell_volume = float(np.prod(self.spacing))
        self.mass_per_dim = np.array([masses[p] for p in particle_map])
        # Row-major element strides into the flattened node array.
        strides = np.ones(self.ndim, dtype=np.int64)
        for d in range(self.ndim - 2, -1, -1):
            strides[d] = strides[d + 1] * npoints[d + 1]
        self.strides = strides

    def axis(self, dim):
        """Node coordinates along one dimension."""
        lo, _ = self.extents[dim]
        return lo + self.spacing[dim] * np.arange(self.npoints[dim])

    def wavenumbers(self, dim):
        """Angular wavenumbers matching numpy's FFT ordering."""
        return 2.0 * np.pi * np.fft.fftfreq(self.npoints[dim],
                                            d=self.spacing[dim])

    def meshes(self):
        """Coordinate arrays of shape ``npoints``, one per dimension."""
        axes = [self.axis(d) for d in range(self.ndim)]
        return np.meshgrid(*axes, indexing="ij")

    def subgrid(self, dims):
        """Grid restricted to a subset of dimensions.

        Particles are renumbered compactly in order of first appearance;
        every kept dimension must bring all dimensions of its particle
        with it (particles cannot be split across a subgrid boundary).
        """
        dims = tuple(int(d) for d in dims)
        if len(set(dims)) != len(dims) or not dims:
            raise GridError(f"subgrid dims {dims} must be non-empty and "
                            "distinct")
        if any(d < 0 or d >= self.ndim for d in dims):
            raise GridError(f"subgrid dims {dims} out of range for a "
                            f"{self.ndim}-dimensional grid")
        kept_particles = {self.particle_map[d] for d in dims}
        for d in range(self.ndim):
            if self.particle_map[d] in kept_particles and d not in dims:
                raise GridError(f"dimension {d} belongs to particle "
                                f"{self.particle_map[d]} which the subgrid "
                                "keeps; particles cannot be split")
        renumber = {}
        new_map = []
        for d in dims:
            p = self.particle_map[d]
            renumber.setdefault(p, len(renumber))
            new_map.append(renumber[p])
        new_masses = [0.0] * len(renumber)
        for old, new in renumber.items():
            new_masses[new] = self.masses[old]
        return GridSpec(extents=[self.extents[d] for d in dims],
                        npoints=[self.npoints[d] for d in dims],
                        particle_map=new_map, masses=new_masses)

    def __eq__(self, other):
        if not isinstance(other, GridSpec):
            return NotImplemented
        return (self.extents == other.extents
                and self.npoints == other.npoints
                and self.particle_map == other.particle_map
                and self.masses == other.masses)

    def __hash__(self):
        return hash((self.extents, self.npoints, self.particle_map,
                     self.masses))

    def __repr__(self):
        return (f"GridSpec(extents={self.extents}, npoints={self.npoints}, "
                f"particle_map={self.particle_map}, masses={self.masses})")


class WaveFunction:
    """Complex amplitudes on a grid, with spin components and a time tag.

    The amplitude array is copied and frozen; propagation and other
    transformations return new instances.
    """

    def __init__(self, grid, amplitudes, time_tag=0.0):
        amplitudes = np.asarray(amplitudes, dtype=np.complex128)
        if amplitudes.shape == grid.npoints:
            amplitudes = amplitudes[..., np.newaxis]
        if amplitudes.ndim != grid.ndim + 1 or amplitudes.shape[:-1] != grid.npoints:
            raise StateError(f"amplitude shape {amplitudes.shape} does not "
                             f"match grid nodes {grid.npoints} plus a spin "
                             "axis")
        if amplitudes.shape[-1] < 1:
            raise StateError("need at least one spin component")
        if not np.all(np.isfinite(amplitudes.view(np.float64))):
            raise StateError("amplitudes contain non-finite values")
        amplitudes = np.ascontiguousarray(amplitudes)
        amplitudes.setflags(write=False)
        self.grid = grid
        self.amplitudes = amplitudes
        self.nspin = amplitudes.shape[-1]
        self.time_tag = float(time_tag)

    def density(self):
        """Node values of the spin-summed density ``sum_s |psi_s|^2``."""
        a = self.amplitudes
        return np.sum(a.real**2 + a.imag**2, axis=-1)

    def with_amplitudes(self, amplitudes, time_tag=None):
        t = self.time_tag if time_tag is None else time_tag
        return WaveFunction(self.grid, amplitudes, time_tag=t)

    def __repr__(self):
        return (f"WaveFunction(npoints={self.grid.npoints}, "
                f"nspin={self.nspin}, time_tag={self.time_tag})")


@dataclass
class Configuration:
    """A point in configuration space at a given time."""

    coords: np.ndarray
    time_tag: float = 0.0

    def __post_init__(self):
        self.coords = np.atleast_1d(np.asarray(self.coords, dtype=float))
        if self.coords.ndim != 1:
            raise StateError("configuration coordinates must be a flat "
                             "vector")
        if not np.all(np.isfinite(self.coords)):
            raise StateError(f"non-finite configuration: {self.coords}")


def _coords_of(q):
    return q.coords if isinstance(q, Configuration) else \
        np.atleast_1d(np.asarray(q, dtype=float))


def norm(wf):
    """L2 norm of the state: sqrt of density integrated over the box."""
    return float(np.sqrt(np.sum(wf.density()) * wf.grid.cell_volume))


def inner(a, b):
    """Inner product <a, b>, antilinear in the first argument.

    Spin components are contracted as well, so for spinor fields this is
    sum over nodes and components of conj(a) * b times the cell volume.
    """
    if a.grid != b.grid:
        raise StateError("inner product requires states on the same grid")
    if a.nspin != b.nspin:
        raise StateError(f"spin mismatch: {a.nspin} vs {b.nspin} components")
    # Assembled from real products rather than complex multiplies: the
    # complex-multiply kernel may fuse operations asymmetrically, and this
    # form keeps inner(a, b) == conj(inner(b, a)) exact, not just close.
    ar, ai = a.amplitudes.real, a.amplitudes.imag
    br, bi = b.amplitudes.real, b.amplitudes.imag
    re = float(np.sum(ar * br + ai * bi))
    im = float(np.sum(ar * bi - ai * br))
    cv = a.grid.cell_volume
    return complex(re * cv, im * cv)


def normalized(wf):
    """Unit-norm copy of the state."""
    n = norm(wf)
    if n == 0.0 or not np.isfinite(n):
        raise StateError(f"cannot normalize state with norm {n}")
    return wf.with_amplitudes(wf.amplitudes / n)


def mean_density(wf):
    """Average of the node densities; sets the scale for the floor."""
    return float(np.mean(wf.density()))


def density_floor(wf):
    """Density below which velocities are considered untrustworthy."""
    return DENSITY_FLOOR_REL * mean_density(wf)


def check_in_domain(grid, coords):
    """Raise OutOfDomainError unless lower <= q < upper in every dimension."""
    coords = np.asarray(coords, dtype=float)
    if coords.shape[-1] != grid.ndim:
        raise StateError(f"expected {grid.ndim} coordinates, got shape "
                         f"{coords.shape}")
    if not np.all(np.isfinite(coords)) or np.any(coords < grid.lower) \
            or np.any(coords >= grid.upper):
        raise OutOfDomainError(f"configuration outside the box "
                               f"[{grid.lower}, {grid.upper}): {coords}")


def evaluate(wf, q):
    """Interpolated amplitudes at an off-lattice point.

    Periodic multilinear interpolation over the 2^d surrounding nodes;
    exact when ``q`` sits on a node.  Returns the spin vector at ``q``.

    Raises
    ------
    OutOfDomainError
        If ``q`` is not strictly inside the box.
    """
    coords = _coords_of(q)
    check_in_domain(wf.grid, coords)
    from . import _kernels
    flat = wf.amplitudes.reshape(wf.grid.size, wf.nspin)
    out = _kernels.interp_batch(flat, np.asarray(wf.grid.npoints, np.int64),
                                wf.grid.strides, wf.grid.lower,
                                1.0 / wf.grid.spacing,
                                coords.reshape(1, wf.grid.ndim))
    return out[0]


def edge_mass(wf, margin_frac=0.05):
    """Fraction of probability within ``margin_frac`` of any box face.

    The periodic propagator is only a faithful model of open-space
    dynamics while this stays negligible; callers warn when it grows
    past 1e-6.
    """
    rho = wf.density()
    total = np.sum(rho)
    if total == 0.0:
        raise StateError("edge mass undefined for a zero state")
    mask = np.zeros(wf.grid.npoints, dtype=bool)
    for d in range(wf.grid.ndim):
        n = wf.grid.npoints[d]
        m = max(1, int(np.ceil(margin_frac * n)))
        idx = [slice(None)] * wf.grid.ndim
        idx[d] = slice(0, m)
        mask[tuple(idx)] = True
        idx[d] = slice(n - m, n)
        mask[tuple(idx)] = True
    return float(np.sum(rho[mask]) / total)


def make_gaussian(grid, center, width, wavevector=None, spinor=None,
                  time_tag=0.0):
    """Normalized Gaussian packet ``exp(i k.q - |q - c|^2 / 4 w^2) * chi``.

    Parameters
    ----------
    grid : GridSpec
    center, width, wavevector : scalars or per-dimension sequences
        ``width`` is the position-space standard deviation of the
        density in each dimension.
    spinor : sequence of complex, optional
        Spin amplitudes; normalized internally.  Defaults to a single
        component.
    """
    center = np.broadcast_to(np.asarray(center, float), (grid.ndim,))
    width = np.broadcast_to(np.asarray(width, float), (grid.ndim,))
    if np.any(width <= 0):
        raise StateError(f"widths must be positive: {width}")
    if wavevector is None:
        wavevector = np.zeros(grid.ndim)
    wavevector = np.broadcast_to(np.asarray(wavevector, float), (grid.ndim,))

    phase = np.zeros(grid.npoints)
    envelope = np.zeros(grid.npoints)
    for d, mesh in enumerate(grid.meshes()):
        envelope = envelope - (mesh - center[d]) ** 2 / (4.0 * width[d] ** 2)
        phase = phase + wavevector[d] * mesh
    scalar = np.exp(envelope + 1j * phase)

    if spinor is None:
        spinor = np.array([1.0 + 0.0j])
    spinor = np.asarray(spinor, dtype=np.complex128).ravel()
    if spinor.shape[0] < 1 or not np.all(np.isfinite(spinor.view(np.float64))):
        raise StateError("spinor must be a finite, non-empty vector")
    s_norm = np.sqrt(np.sum(np.abs(spinor) ** 2))
    if s_norm == 0.0:
        raise StateError("spinor must not be the zero vector")
    spinor = spinor / s_norm

    amps = scalar[..., np.newaxis] * spinor
    wf = WaveFunction(grid, amps, time_tag=time_tag)
    return normalized(wf)


def product_state(a, b, time_tag=0.0):
    """Tensor product of two single-component states on a combined grid.

    The combined grid concatenates dimensions of ``a`` then ``b``;
    particles of ``b`` are renumbered after those of ``a``.
    """
    if a.nspin != 1 or b.nspin != 1:
        raise StateError("product_state supports single-component factors")
    ga, gb = a.grid, b.grid
    offset = ga.nparticles
    grid = GridSpec(extents=ga.extents + gb.extents,
                    npoints=ga.npoints + gb.npoints,
                    particle_map=ga.particle_map
                    + tuple(p + offset for p in gb.particle_map),
                    masses=ga.masses + gb.masses)
    fa = a.amplitudes[..., 0].reshape(-1)
    fb = b.amplitudes[..., 0].reshape(-1)
    amps = np.outer(fa, fb).reshape(grid.npoints)
    return WaveFunction(grid, amps, time_tag=time_tag)


# ---------------------------------------------------------------------------
# Snapshot I/O
#
# Binary layout (all little-endian):
#   8 bytes   magic "BLWF0001"
#   uint32    ndim
#   uint32    nspin
#   uint32    nparticles
#   uint32    reserved (zero)
#   float64   time_tag
#   per dim:  float64 lower, float64 upper, uint64 npoints, uint32 particle,
#             uint32 pad (zero)
#   per particle: float64 mass
#   payload:  complex64 amplitudes, C order over (*npoints, nspin)
# ---------------------------------------------------------------------------

def save_snapshot(wf, path):
    """Write the state to ``path`` in the binary snapshot format."""
    g = wf.grid
    header = bytearray()
    header += _SNAPSHOT_MAGIC
    header += struct.pack("<IIII", g.ndim, wf.nspin, g.nparticles, 0)
    header += struct.pack("<d", wf.time_tag)
    for d in range(g.ndim):
        lo, hi = g.extents[d]
        header += struct.pack("<ddQII", lo, hi, g.npoints[d],
                              g.particle_map[d], 0)
    for m in g.masses:
        header += struct.pack("<d", m)
    payload = np.ascontiguousarray(wf.amplitudes.astype("<c8"))
    with open(path, "wb") as fh:
        fh.write(bytes(header))
        fh.write(payload.tobytes())


def load_snapshot(path, max_points=DEFAULT_MAX_POINTS):
    """Read a state previously written by `save_snapshot`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8 or raw[:8] != _SNAPSHOT_MAGIC:
        raise StateError(f"{path}: not a wave-function snapshot (bad magic)")
    off = 8
    ndim, nspin, nparticles, _ = struct.unpack_from("<IIII", raw, off)
    off += 16
    (time_tag,) = struct.unpack_from("<d", raw, off)
    off += 8
    extents, npoints, particle_map = [], [], []
    for _ in range(ndim):
        lo, hi, n, p, _pad = struct.unpack_from("<ddQII", raw, off)
        off += 32
        extents.append((lo, hi))
        npoints.append(int(n))
        particle_map.append(int(p))
    masses = list(struct.unpack_from(f"<{nparticles}d", raw, off))
    off += 8 * nparticles
    grid = GridSpec(extents, npoints, particle_map, masses,
                    max_points=max_points)
    expected = grid.size * nspin * 8
    if len(raw) - off != expected:
        raise StateError(f"{path}: payload is {len(raw) - off} bytes, "
                         f"expected {expected}")
    amps = np.frombuffer(raw, dtype="<c8", count=grid.size * nspin,
                         offset=off)
    amps = amps.reshape(grid.npoints + (nspin,)).astype(np.complex128)
    return WaveFunction(grid, amps, time_tag=time_tag)


def wavefunction_to_csv(wf, path):
    """Dump node coordinates and amplitudes as CSV.

    Columns: one coordinate per dimension, then alternating real and
    imaginary parts per spin component; rows iterate nodes in C order.
    """
    g = wf.grid
    cols = [f"q{d}" for d in range(g.ndim)]
    for s in range(wf.nspin):
        cols += [f"re{s}", f"im{s}"]
    meshes = [m.reshape(-1) for m in g.meshes()]
    flat = wf.amplitudes.reshape(g.size, wf.nspin)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(g.size):
            row = [repr(float(m[i])) for m in meshes]
            for s in range(wf.nspin):
                row.append(repr(float(flat[i, s].real)))
                row.append(repr(float(flat[i, s].imag)))
            fh.write(",".join(row) + "\n")
