"""End-to-end acceptance checks; each prints one PASS/FAIL line.

Tolerances are pinned below. A criterion that the physics does not support is
still checked as stated and allowed to fail; the separate ``diagnostic`` tests
report what the computation does establish.
"""
import math

import numpy as np
import pytest

from boxdyn.analytic import (GaussianParams, SpectralCoefficients, basis_physical, basis_tilde,
                             gaussian_closed_form, gaussian_initial, ratio_static_moving, rebase_at_reversal)
from boxdyn.model import BasisIndex, Grid, PhysicalParams, WallTrajectory, WaveField, eigenstate, eigenvalue, wall_length
from boxdyn.numeric import PropagatorConfig, propagate_series, to_physical
from boxdyn.observables import (ProbePoint, bohm_trajectory, continuity_residual, current, current_basis_closed,
                                snapshot_provider, weak_scan)
from boxdyn.theta import identity_residuals, sample_arguments

THETA_SAMPLES = 1000
THETA_SEED = 20240601
THETA_TOL = 1e-12
RATIO_TOL = 1e-8
ORACLE_TOL = 1e-6
DRIFT_TOL = 1e-8
CURRENT_TOL = 1e-8
J0_SPOT = 2.5e-7
SIGNATURE_FACTOR = 1e3
CONTINUITY_TOL = 1e-5
COEFF_FLOOR = 1e-6
REBASE_NORM_TOL = 1e-8
COMOVING_TOL = 1e-6

PROBES = (35.0, 40.0, 45.0)
BETAS = (1e2, 1e3, 1e4)
SCAN_TIMES = np.round(np.arange(1001) * 1e-4, 15)
N_POINTS = 4096
PARAMS = PhysicalParams()


@pytest.fixture
def verdict(capsys):
    def emit(label, ok, detail):
        with capsys.disabled():
            print(f"\n{label}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return emit


def test_criterion_1_theta_identity(verdict):
    z, kappa = sample_arguments(np.random.default_rng(THETA_SEED), THETA_SAMPLES)
    worst = float(identity_residuals(z, kappa).max())
    ok = verdict("criterion 1", worst < THETA_TOL and z.size >= 1000,
                 f"max relative residual {worst:.3e} over {z.size} samples (limit {THETA_TOL:g})")
    assert ok


def _ratio_scan(q, t_values, xs):
    g = GaussianParams(1.0)
    traj = WallTrajectory.linear(100.0, q)
    worst, first = 0.0, None
    for t in t_values:
        dev = ratio_static_moving(g, traj, xs, t).max_deviation()
        worst = max(worst, dev)
        if first is None and dev >= RATIO_TOL:
            first = t
    return worst, first


def test_criterion_2_strong_nonlocality_null(verdict):
    xs = np.linspace(-25.0, 25.0, 1000)
    ts = np.linspace(0.0, 1e3, 100)
    parts, ok = [], True
    for q in (1e-4, 1e-3, 1e-2):
        worst, first = _ratio_scan(q, ts, xs)
        ok &= worst < RATIO_TOL
        parts.append(f"q={q:g}: max |ratio-1| {worst:.3e}" + (f" (first at t={first:.4g})" if first else ""))
    verdict("criterion 2", ok, "; ".join(parts) + f" (limit {RATIO_TOL:g})")
    assert ok


def test_diagnostic_2_localized_window(verdict):
    # over |x| <= 25 the spreading packet stays clear of the walls for t up to about 15
    xs = np.linspace(-25.0, 25.0, 1000)
    ts = np.linspace(0.0, 15.0, 31)
    worst = max(_ratio_scan(q, ts, xs)[0] for q in (1e-4, 1e-3, 1e-2))
    verdict("diagnostic 2 (t <= 15)", worst < RATIO_TOL, f"max |ratio-1| {worst:.3e}")
    assert worst < RATIO_TOL


# criterion 3 and its continuity/unitarity share one long propagation
LINEAR = WallTrajectory.linear(100.0, 1e-4)
DELTA = 1e-3
ORACLE_TIMES = [10.0, 100.0, 1000.0, 2500.0 - DELTA, 2500.0, 2500.0 + DELTA, 5000.0, 7500.0,
                1e4 - 2 * DELTA, 1e4 - DELTA, 1e4]


@pytest.fixture(scope="module")
def oracle_run():
    grid = Grid.transformed(LINEAR, N_POINTS)
    states = [basis_tilde(BasisIndex(0), LINEAR, 0.0, grid), gaussian_initial(GaussianParams(1.0), grid)]
    cfg = PropagatorConfig(n_points=N_POINTS, space_order=6)
    snaps, stats = propagate_series(states, LINEAR, ORACLE_TIMES, cfg)
    phys = [[to_physical(s, LINEAR, s.t) for s in row] for row in snaps]
    return phys, stats


@pytest.mark.slow
def test_criterion_3_oracle_equivalence(oracle_run, verdict):
    phys, stats = oracle_run
    err_b = err_g = 0.0
    for basis, gauss in phys:
        err_b = max(err_b, float(np.max(np.abs(basis.samples - basis_physical(BasisIndex(0), LINEAR, basis.t,
                                                                              basis.grid).samples))))
        err_g = max(err_g, float(np.max(np.abs(gauss.samples - gaussian_closed_form(
            GaussianParams(1.0), LINEAR, gauss.t, gauss.grid).samples))))
    drift = max(stats.max_norm_drift, max(abs(f.norm_sq() - 1) for row in phys for f in row))
    ok = err_b < ORACLE_TOL and err_g < ORACLE_TOL and drift < DRIFT_TOL
    verdict("criterion 3", ok, f"L-inf error basis {err_b:.3e}, Gaussian {err_g:.3e} (limit {ORACLE_TOL:g}); "
                               f"norm drift {drift:.3e} (limit {DRIFT_TOL:g}); {stats.steps} steps")
    assert ok


def test_criterion_4_current_equivalence(verdict):
    worst = 0.0
    for n in (0, 1, 5, 10):
        for t in (0.0, 1e3, 1e4):
            psi = basis_physical(BasisIndex(n), LINEAR, t, Grid.physical(LINEAR, t, N_POINTS))
            exact = current_basis_closed(BasisIndex(n), LINEAR, psi.grid.x, t)
            worst = max(worst, float(np.max(np.abs(current(psi) - exact))))
    spot = current_basis_closed(BasisIndex(0), LINEAR, 25.0, 0.0)
    ok = worst < CURRENT_TOL and math.isclose(spot, J0_SPOT, rel_tol=1e-12)
    verdict("criterion 4", ok, f"L-inf gap {worst:.3e} (limit {CURRENT_TOL:g}); j0(25, 0) = {spot:.6e}")
    assert ok


# criterion 5: reference scenario at the default resolution

def superposition(grid, L0=100.0):
    return (eigenstate(BasisIndex(10), L0, grid) - eigenstate(BasisIndex(1), L0, grid)) * (2 ** -0.5)


def exact_static(t, n_points):
    grid = Grid.physical(WallTrajectory.static(100.0), t, n_points)
    a = eigenstate(BasisIndex(10), 100.0, grid).samples * np.exp(-1j * eigenvalue(BasisIndex(10), 100.0) * t)
    b = eigenstate(BasisIndex(1), 100.0, grid).samples * np.exp(-1j * eigenvalue(BasisIndex(1), 100.0) * t)
    return WaveField((a - b) * (2 ** -0.5), grid, t)


def fig1_fields(traj, cfg):
    grid = Grid.transformed(traj, cfg.n_points)
    snaps, stats = propagate_series(superposition(grid), traj, SCAN_TIMES, cfg)
    return [to_physical(s, traj, s.t) for s in snaps], stats


@pytest.fixture(scope="module")
def fig1_runs():
    cfg = PropagatorConfig(dt=1e-4, n_points=N_POINTS, space_order=4)
    probes = [ProbePoint.at(x, 100.0) for x in PROBES]
    control, cstats = fig1_fields(WallTrajectory.static(100.0), cfg)
    runs = {"control": (control, cstats, weak_scan(snapshot_provider(control), probes, SCAN_TIMES))}
    for beta in BETAS:
        fields, stats = fig1_fields(WallTrajectory.smooth(100.0, 1e-4, beta), cfg)
        runs[beta] = (fields, stats, weak_scan(snapshot_provider(fields), probes, SCAN_TIMES))
    return runs


def signature_ratios(series, control):
    out = []
    for s, c in zip(series, control):
        before = ~s.inside_light_cone & s.defined
        out.append(float(np.nanmax(np.abs(s.re_pw[before]))) / float(np.nanmax(np.abs(c.re_pw))))
    return out


def test_criterion_5_weak_nonlocality_signature(fig1_runs, verdict):
    control = fig1_runs["control"][2]
    start = max(abs(s.re_pw[0]) for s in fig1_runs[1e3][2])
    ok_a = start == 0.0
    per_beta = {beta: signature_ratios(fig1_runs[beta][2], control) for beta in BETAS}
    ok_b = all(r > SIGNATURE_FACTOR for r in per_beta[1e3])
    ok_c = all(r > SIGNATURE_FACTOR for beta in BETAS for r in per_beta[beta])
    text = "; ".join(f"beta={beta:g}: " + ", ".join(f"x={x:g} {r:.3g}" for x, r in zip(PROBES, per_beta[beta]))
                     for beta in BETAS)
    verdict("criterion 5", ok_a and ok_b and ok_c,
            f"(a) max |Re P_w(0)| = {start:.1e} [{'ok' if ok_a else 'no'}]; "
            f"(b)/(c) peak before t_c over control maximum (required > {SIGNATURE_FACTOR:g}): {text}")
    assert ok_a and ok_b and ok_c


@pytest.mark.slow
def test_diagnostic_5_resolved_signal_above_floor(verdict):
    # the signal needs wavenumbers above m c / hbar, so refine until they are represented
    n = 16384
    cfg = PropagatorConfig(n_points=n, space_order=6)
    probes = [ProbePoint.at(x, 100.0) for x in PROBES]
    moving, _ = fig1_fields(WallTrajectory.smooth(100.0, 1e-4, 1e3), cfg)
    static, _ = fig1_fields(WallTrajectory.static(100.0), cfg)
    sq = weak_scan(snapshot_provider(moving), probes, SCAN_TIMES)
    s0 = weak_scan(snapshot_provider(static), probes, SCAN_TIMES)
    se = weak_scan(lambda t: exact_static(t, n), probes, SCAN_TIMES)
    parts, ratios = [], []
    for a, b, c in zip(sq, s0, se):
        before = ~a.inside_light_cone
        signal = float(np.max(np.abs(a.re_pw - b.re_pw)[before]))
        floor = float(np.max(np.abs(b.re_pw - c.re_pw)))
        ratios.append(signal / floor)
        parts.append(f"x={a.probe.x:g} signal {signal:.2e} floor {floor:.2e} ratio {signal / floor:.3g}")
    ok = min(ratios) > 10
    verdict(f"diagnostic 5 ({n} points, difference from control over its error)", ok, "; ".join(parts))
    assert ok


def test_criterion_6_continuity_and_unitarity(fig1_runs, oracle_run, verdict):
    drift, residual = 0.0, 0.0
    for key, (fields, stats, _) in fig1_runs.items():
        drift = max(drift, stats.max_norm_drift)
        provide = snapshot_provider(fields)
        for t in (1e-4, 0.01, 0.05, 0.0999):
            residual = max(residual, continuity_residual(provide, t, 1e-4))
    phys, stats = oracle_run
    drift = max(drift, stats.max_norm_drift)
    for j in range(2):
        provide = snapshot_provider([row[j] for row in phys])
        for t in (2500.0, 1e4 - DELTA):
            residual = max(residual, continuity_residual(provide, t, DELTA))
    ok = drift < DRIFT_TOL and residual < CONTINUITY_TOL
    verdict("criterion 6", ok, f"norm drift {drift:.3e} (limit {DRIFT_TOL:g}); "
                               f"L1 continuity residual {residual:.3e} (limit {CONTINUITY_TOL:g})")
    assert ok


def test_criterion_7_reversal(verdict):
    traj = WallTrajectory.reversal(100.0, 1e-2, 2000.0)
    start = SpectralCoefficients(np.array([1.0 + 0j]), WallTrajectory.linear(100.0, 1e-2), 0.0)
    rebased = rebase_at_reversal(start, traj, 8193)
    count = int(np.sum(np.abs(rebased.coeffs) > COEFF_FLOOR))
    gap = abs(rebased.norm_sq() - 1)
    ok = count > 1 and gap < REBASE_NORM_TOL
    verdict("criterion 7", ok, f"{count} coefficients above {COEFF_FLOOR:g}; |norm - 1| = {gap:.3e} "
                               f"(limit {REBASE_NORM_TOL:g}); q = 1e-2, T = 2000")
    assert ok


def test_criterion_8_bohmian_comoving(verdict):
    provide = lambda t: basis_physical(BasisIndex(0), LINEAR, t, Grid.physical(LINEAR, t, N_POINTS))
    worst = 0.0
    for x0 in (-30.0, 10.0, 25.0, 40.0):
        path = bohm_trajectory(provide, x0, 0.0, 1e4, 100.0)
        expected = x0 * wall_length(LINEAR, path.t) / 100.0
        worst = max(worst, float(np.max(np.abs(path.x / expected - 1))))
    ok = worst < COMOVING_TOL
    verdict("criterion 8", ok, f"max relative deviation {worst:.3e} (limit {COMOVING_TOL:g})")
    assert ok
