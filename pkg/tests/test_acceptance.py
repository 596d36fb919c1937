"""End-to-end acceptance checks for the whole laboratory.

Each test exercises one headline capability at its stated tolerance and
prints a single ``[PASS]``/``[FAIL]`` verdict line with the measured
value and the wall-clock time.  The lines bypass pytest's capture so
they always land in the console or log.

These tests are deliberately redundant with the per-module suites: they
run the shipped scenarios and the public API exactly the way a user
would, and they enforce runtime budgets so performance regressions fail
loudly instead of rotting quietly.
"""

import json
import math
import os
import time

import numpy as np
import pytest

import bohmlab as bl
from bohmlab.cli import _catalogue, run_scenario


def _verdict(capsys, num, label, ok, detail, elapsed):
    tag = "PASS" if ok else "FAIL"
    with capsys.disabled():
        print(f"[{tag}] {num:02d} {label}: {detail}  [{elapsed:.1f}s]",
              flush=True)


def _criterion(report, name):
    for c in report["criteria"]:
        if c["name"] == name:
            return c
    raise KeyError(name)


# ---------------------------------------------------------------------------
# 1. Unitarity of split-step evolution
# ---------------------------------------------------------------------------

def test_01_unitarity_thousand_steps(capsys):
    t0 = time.perf_counter()
    g = bl.GridSpec(extents=[(-12.0, 12.0)], npoints=[512])
    wf = bl.make_gaussian(g, center=[1.5], width=[0.9], wavevector=[2.0])
    h = bl.HamiltonianSpec.harmonic(g, omega=1.0)
    prop = bl.Propagator(wf, h, dt=0.002)
    worst = 0.0
    for _ in range(10):
        prop.advance(100)
        worst = max(worst, abs(bl.norm(prop.state) - 1.0))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and elapsed < 5.0
    _verdict(capsys, 1, "unitarity over 1000 steps", ok,
             f"max |norm-1| = {worst:.2e} (tol 1e-10)", elapsed)
    assert worst < 1e-10
    assert elapsed < 5.0


# ---------------------------------------------------------------------------
# 2. Free-packet spreading against the closed-form width
# ---------------------------------------------------------------------------

def test_02_free_packet_width_oracle(capsys):
    t0 = time.perf_counter()
    g = bl.GridSpec(extents=[(-40.0, 40.0)], npoints=[1024])
    w0, mass, t_final = 1.5, 1.0, 2.0
    wf = bl.make_gaussian(g, center=[0.0], width=[w0])
    prop = bl.Propagator(wf, bl.HamiltonianSpec.free(g), dt=0.005)
    prop.advance(400)
    rho = prop.state.density()
    q = g.meshes()[0]
    mean = float(np.sum(rho * q) / np.sum(rho))
    width = math.sqrt(float(np.sum(rho * (q - mean) ** 2) / np.sum(rho)))
    expected = w0 * math.sqrt(1.0 + (t_final / (2.0 * mass * w0 ** 2)) ** 2)
    rel = abs(width - expected) / expected
    elapsed = time.perf_counter() - t0
    ok = rel < 1e-6 and elapsed < 5.0
    _verdict(capsys, 2, "free-packet width at t=2", ok,
             f"relative error = {rel:.2e} (tol 1e-6)", elapsed)
    assert rel < 1e-6
    assert elapsed < 5.0


# ---------------------------------------------------------------------------
# 3. Algebraic identities of the velocity field, 100 random states each
# ---------------------------------------------------------------------------

def test_03_guiding_equation_identities(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(20260814)
    g = bl.GridSpec(extents=[(-20.0, 20.0)], npoints=[256])
    q = g.meshes()[0]
    span = 40.0

    # (a) real states carry zero velocity.  Positive mixtures of three
    # Gaussians keep the density node-free so every sampled point is legal.
    worst_real = 0.0
    for i in range(100):
        amps = np.zeros(256)
        for c, w, a in zip(rng.uniform(-4.0, 4.0, 3),
                           rng.uniform(0.8, 2.0, 3),
                           rng.uniform(0.3, 1.7, 3)):
            amps += a * np.exp(-((q - c) ** 2) / (4.0 * w * w))
        wf = bl.normalized(bl.WaveFunction(g, amps[..., np.newaxis]))
        pts = bl.sample(wf, 5, seed=1000 + i).configurations
        v, _ = bl.VelocityField(wf).velocities(pts)
        worst_real = max(worst_real, float(np.max(np.abs(v))))

    # (b) plane waves move at exactly hbar*k/m.
    worst_plane = 0.0
    for i in range(100):
        n = 0
        while n == 0:
            n = int(rng.integers(-40, 41))
        k = 2.0 * np.pi * n / span
        mass = float(rng.uniform(0.5, 3.0))
        gm = bl.GridSpec(extents=[(-20.0, 20.0)], npoints=[256],
                         masses=[mass])
        wf = bl.normalized(bl.WaveFunction(
            gm, np.exp(1j * k * q)[..., np.newaxis]))
        pts = rng.uniform(-20.0, 20.0, (5, 1))
        v, _ = bl.VelocityField(wf).velocities(pts)
        worst_plane = max(worst_plane,
                          float(np.max(np.abs(v - bl.HBAR * k / mass))))

    # (c) counter-propagating spinor components cancel exactly.
    worst_spinor = 0.0
    for i in range(100):
        n = int(rng.integers(1, 41))
        k = 2.0 * np.pi * n / span
        amps = np.stack([np.exp(1j * k * q), np.exp(-1j * k * q)],
                        axis=-1) / math.sqrt(2.0)
        wf = bl.normalized(bl.WaveFunction(g, amps))
        pts = rng.uniform(-20.0, 20.0, (5, 1))
        v, _ = bl.VelocityField(wf).velocities(pts)
        worst_spinor = max(worst_spinor, float(np.max(np.abs(v))))

    # (d) scaling the state by +-2^k or +-i*2^k leaves every velocity
    # bit-identical: the scale cancels inside a single complex ratio and
    # those factors are exact in binary floating point.
    scalars = [2.0, 0.25, -4.0, 1j, 2j, -0.5j, -8.0, 0.125j]
    bitwise_ok = True
    for i in range(100):
        c1, c2 = rng.uniform(-5.0, 5.0, 2)
        k1, k2 = rng.uniform(-2.0, 2.0, 2)
        w1, w2 = rng.uniform(0.8, 2.0, 2)
        mix = rng.uniform(0.5, 1.5) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        amps = (np.exp(-((q - c1) ** 2) / (4 * w1 * w1) + 1j * k1 * q)
                + mix * np.exp(-((q - c2) ** 2) / (4 * w2 * w2)
                               + 1j * k2 * q))
        wf = bl.normalized(bl.WaveFunction(g, amps[..., np.newaxis]))
        pts = bl.sample(wf, 5, seed=2000 + i).configurations
        v_base, _ = bl.VelocityField(wf).velocities(pts)
        scaled = bl.WaveFunction(g, scalars[i % len(scalars)]
                                 * wf.amplitudes)
        v_scaled, _ = bl.VelocityField(scaled).velocities(pts)
        bitwise_ok = bitwise_ok and np.array_equal(v_base, v_scaled)

    elapsed = time.perf_counter() - t0
    ok = (worst_real < 1e-10 and worst_plane < 1e-8
          and worst_spinor < 1e-8 and bitwise_ok and elapsed < 10.0)
    _verdict(capsys, 3, "guiding-equation identities", ok,
             f"real {worst_real:.1e} (tol 1e-10), plane {worst_plane:.1e} "
             f"(tol 1e-8), spinor {worst_spinor:.1e} (tol 1e-8), "
             f"scalar bitwise {'yes' if bitwise_ok else 'NO'}", elapsed)
    assert worst_real < 1e-10
    assert worst_plane < 1e-8
    assert worst_spinor < 1e-8
    assert bitwise_ok
    assert elapsed < 10.0


# ---------------------------------------------------------------------------
# 4. Conditional-state velocities match the joint state
# ---------------------------------------------------------------------------

def test_04_velocity_consistency_three_states(capsys):
    t0 = time.perf_counter()
    gx = bl.GridSpec(extents=[(-10.0, 10.0)], npoints=[64])
    gy = bl.GridSpec(extents=[(-8.0, 8.0)], npoints=[48])
    p1 = bl.product_state(
        bl.make_gaussian(gx, center=[1.0], width=[1.5], wavevector=[1.0]),
        bl.make_gaussian(gy, center=[-1.0], width=[1.0], wavevector=[0.5]))
    p2 = bl.product_state(
        bl.make_gaussian(gx, center=[-2.0], width=[1.0], wavevector=[-0.5]),
        bl.make_gaussian(gy, center=[2.0], width=[1.5], wavevector=[-1.0]))
    entangled = bl.normalized(bl.WaveFunction(
        p1.grid, p1.amplitudes + p2.amplitudes))
    rotor = bl.stationary_rotor(
        bl.GridSpec(extents=[(-8.0, 8.0)] * 2, npoints=[128, 128]),
        omega=1.0)

    worst = {}
    for label, wf in [("product", p1), ("entangled", entangled),
                      ("rotor", rotor)]:
        pts = bl.sample(wf, 100, seed=20260814).configurations
        rep = bl.subsystem_velocity_consistency(
            wf, bl.SubsystemSplit((0,), (1,)), pts)
        assert rep.skipped == 0
        worst[label] = rep.max_deviation
    elapsed = time.perf_counter() - t0
    top = max(worst.values())
    ok = top < 1e-8 and elapsed < 30.0
    _verdict(capsys, 4, "velocity consistency at 100 points", ok,
             ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
             + " (tol 1e-8)", elapsed)
    assert top < 1e-8
    assert elapsed < 30.0


# ---------------------------------------------------------------------------
# 5. Equivariance across 100 seeds, with a corrupted-flow control
# ---------------------------------------------------------------------------

def test_05_equivariance_hundred_seeds(capsys):
    t0 = time.perf_counter()
    outcomes = {}
    for label in ("free", "harmonic"):
        if label == "free":
            g = bl.GridSpec(extents=[(-40.0, 40.0)], npoints=[2048])
            wf = bl.make_gaussian(g, center=[-5.0], width=[1.5],
                                  wavevector=[3.0])
            h = bl.HamiltonianSpec.free(g)
            dt, dt_traj, nsteps, base = 0.0125, 0.05, 50, 20260814
        else:
            g = bl.GridSpec(extents=[(-16.0, 16.0)], npoints=[1024])
            wf = bl.make_gaussian(g, center=[3.0],
                                  width=[0.7071067811865476])
            h = bl.HamiltonianSpec.harmonic(g, omega=1.0)
            dt, dt_traj, nsteps, base = 0.01, 0.04, 40, 20260815
        series = bl.SnapshotSeries.evolve(wf, h, 0.5 * dt_traj,
                                          2 * nsteps, dt)
        passes = sum(
            bl.equivariance_experiment(series, nsteps, dt_traj, 10000,
                                       base + i).passed
            for i in range(100))
        corrupted = bl.equivariance_experiment(series, nsteps, dt_traj,
                                               10000, base,
                                               velocity_scale=1.1)
        outcomes[label] = (passes, corrupted.passed)
    elapsed = time.perf_counter() - t0
    ok = (all(p >= 97 and not c for p, c in outcomes.values())
          and elapsed < 600.0)
    _verdict(capsys, 5, "equivariance, 100 seeds each", ok,
             ", ".join(f"{k} {p}/100 (need >=97), +10% flow "
                       f"{'fails' if not c else 'PASSES'}"
                       for k, (p, c) in outcomes.items()), elapsed)
    for label, (passes, corrupted_passed) in outcomes.items():
        assert passes >= 97, label
        assert not corrupted_passed, label
    assert elapsed < 600.0


# ---------------------------------------------------------------------------
# 6. Born statistics from effective collapse
# ---------------------------------------------------------------------------

def test_06_born_statistics(tmp_path, capsys):
    t0 = time.perf_counter()
    details = []
    ok = True
    for name in ("born-statistics-25-75", "born-statistics-50-50"):
        code, report = run_scenario(name, out_dir=str(tmp_path / name))
        assert code == 0, name
        assert report["n"] == 10000
        freq = _criterion(report, "branch_freq_dev_sigmas")
        fid = _criterion(report, "mean_fidelity_deficit")
        perm = _criterion(report, "permanence_margin")
        assert freq["threshold"] == 3.0
        assert fid["threshold"] == 1e-4
        assert perm["threshold"] == -1e-6
        ok = ok and freq["pass"] and fid["pass"] and perm["pass"]
        details.append(f"{name}: {freq['value']:.2f} sigma, fidelity "
                       f"deficit {fid['value']:.1e}, permanence "
                       f"{perm['value']:+.1e}")
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 600.0
    _verdict(capsys, 6, "Born statistics, n=10000", ok, "; ".join(details), elapsed)
    assert ok
    assert elapsed < 600.0


# ---------------------------------------------------------------------------
# 7. Emergent subsystem evolution and its coupled control
# ---------------------------------------------------------------------------

def test_07_subsystem_schrodinger_evolution(tmp_path, capsys):
    t0 = time.perf_counter()
    code, rep = run_scenario("decoupled-free-gaussians",
                             out_dir=str(tmp_path / "free"))
    assert code == 0
    code_c, rep_c = run_scenario("coupled-negative-control",
                                 out_dir=str(tmp_path / "coupled"))
    assert code_c == 0
    dev, dev_c = rep["max_deviation"], rep_c["max_deviation"]
    elapsed = time.perf_counter() - t0
    ok = dev < 1e-9 and dev_c > 1e-3 and elapsed < 120.0
    _verdict(capsys, 7, "conditional state follows its own equation", ok,
             f"decoupled deviation {dev:.1e} (tol 1e-9), coupled control "
             f"{dev_c:.1e} (must exceed 1e-3)", elapsed)
    assert dev < 1e-9
    assert dev_c > 1e-3
    assert elapsed < 120.0


# ---------------------------------------------------------------------------
# 8. Motion under a stationary wave function, with a real-state control
# ---------------------------------------------------------------------------

def test_08_stationary_state_dynamics(tmp_path, capsys):
    t0 = time.perf_counter()
    code, rep = run_scenario("timeless-rotor", out_dir=str(tmp_path / "rot"))
    assert code == 0
    code_c, rep_c = run_scenario("timeless-real-control",
                                 out_dir=str(tmp_path / "ctl"))
    assert code_c == 0
    stat = max(rep["stationarity_overlap_dev"],
               rep["stationarity_density_drift"],
               rep_c["stationarity_overlap_dev"],
               rep_c["stationarity_density_drift"])

    # The real-eigenstate control must carry a strictly vanishing flow,
    # checked directly on the velocity field, not just via displacements.
    g = bl.GridSpec(extents=[(-8.0, 8.0)] * 2, npoints=[128, 128])
    ctl = bl.oscillator_eigenstate(g, quanta=(0, 1), omega=1.0)
    pts = bl.sample(ctl, 100, seed=20260814).configurations
    v, _ = bl.VelocityField(ctl).velocities(pts)
    vmax = float(np.max(np.abs(v)))

    elapsed = time.perf_counter() - t0
    ok = (stat < 1e-8 and rep["displacement_max"] > 0.1
          and rep["ray_change_max"] > 0.1
          and rep_c["displacement_max"] < 1e-6
          and vmax < 1e-10 and elapsed < 120.0)
    _verdict(capsys, 8, "stationary state, moving configuration", ok,
             f"stationarity {stat:.1e} (tol 1e-8), rotor displacement "
             f"{rep['displacement_max']:.2f} / ray change "
             f"{rep['ray_change_max']:.2f} (need >0.1), control speed "
             f"{vmax:.1e} (tol 1e-10)", elapsed)
    assert stat < 1e-8
    assert rep["displacement_max"] > 0.1
    assert rep["ray_change_max"] > 0.1
    assert rep_c["displacement_max"] < 1e-6
    assert vmax < 1e-10
    assert elapsed < 120.0


# ---------------------------------------------------------------------------
# 9. Integrator order on the rotor orbit
# ---------------------------------------------------------------------------

def test_09_rk4_convergence_order(tmp_path, capsys):
    t0 = time.perf_counter()
    code, rep = run_scenario("rotor-rk4-order", out_dir=str(tmp_path / "rk"))
    assert code == 0
    slope = rep["rk4_slope"]
    elapsed = time.perf_counter() - t0
    ok = 3.5 <= slope <= 4.5 and elapsed < 60.0
    _verdict(capsys, 9, "RK4 endpoint-error order", ok,
             f"log-log slope = {slope:.3f} (need 3.5..4.5)", elapsed)
    assert 3.5 <= slope <= 4.5
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# 10. Bytewise determinism of every shipped scenario
# ---------------------------------------------------------------------------

def test_10_catalogue_determinism(tmp_path, capsys):
    t0 = time.perf_counter()
    mismatches = []
    names = _catalogue()
    for name in names:
        dirs = [tmp_path / name / "a", tmp_path / name / "b"]
        for d in dirs:
            code, _ = run_scenario(name, out_dir=str(d))
            assert code == 0, name
        files = sorted(os.listdir(dirs[0]))
        assert files == sorted(os.listdir(dirs[1])), name
        for fname in files:
            blobs = [(d / fname).read_bytes() for d in dirs]
            if fname == "manifest.json":
                parsed = [json.loads(b) for b in blobs]
                for p in parsed:
                    p.pop("generated_utc")
                if parsed[0] != parsed[1]:
                    mismatches.append(f"{name}/{fname}")
            elif blobs[0] != blobs[1]:
                mismatches.append(f"{name}/{fname}")
    elapsed = time.perf_counter() - t0
    ok = not mismatches
    _verdict(capsys, 10, "determinism across reruns", ok,
             f"{len(names)} scenarios byte-identical"
             + (f"; MISMATCH in {mismatches}" if mismatches else ""),
             elapsed)
    assert not mismatches
