import cmath
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from boxdyn._accel import HAVE_NUMBA
from boxdyn.analytic import (GaussianParams, basis_physical, basis_tilde, gaussian_closed_form, gaussian_coefficients,
                             gaussian_initial, propagate_spectral)
from boxdyn.model import (BasisIndex, Grid, GridMismatchError, Parity, WallTrajectory, WaveField, eigenstate,
                          eigenvalue, inner_product)
from boxdyn.numeric import (CayleyPropagator, ConfigError, PropagatorConfig, TransformedOperator,
                            kinetic_max_eigenvalue, propagate_numeric, propagate_series, resolve_dt, to_physical,
                            to_transformed, transformed_residual, transformed_rhs)

LINEAR = WallTrajectory.linear(100.0, 1e-4)
STATIC = WallTrajectory.static(100.0)


def gaussian_state(traj, n, d=1.0):
    return gaussian_initial(GaussianParams(d), Grid.transformed(traj, n))


class TestOperator:
    @pytest.mark.parametrize("order", [2, 4, 6])
    def test_hermitian(self, order, rng):
        g = Grid.transformed(WallTrajectory.smooth(10.0, 0.3, 1.0), 64)
        op = TransformedOperator.at(WallTrajectory.smooth(10.0, 0.3, 1.0), 0.7, g, order=order)
        u = np.zeros(64, complex)
        v = np.zeros(64, complex)
        u[1:-1] = rng.normal(size=62) + 1j * rng.normal(size=62)
        v[1:-1] = rng.normal(size=62) + 1j * rng.normal(size=62)
        assert np.vdot(u, op.apply(v)) == pytest.approx(np.vdot(op.apply(u), v), rel=1e-12)

    def test_rhs_closures_agree_in_the_bulk(self):
        g = Grid.transformed(LINEAR, 2049)
        psi = basis_tilde(BasisIndex(3), LINEAR, 10.0, g)
        a = transformed_rhs(psi, LINEAR, 10.0, order=6).samples
        b = transformed_rhs(psi, LINEAR, 10.0, order=6, closure="hermitian").samples
        assert np.max(np.abs(a - b)[10:-10]) < 1e-9
        with pytest.raises(ValueError):
            transformed_rhs(psi, LINEAR, 10.0, closure="other")

    def test_basis_state_solves_the_equation(self):
        g = Grid.transformed(LINEAR, 2049)
        res = transformed_residual(lambda s: basis_tilde(BasisIndex(2), LINEAR, s, g), LINEAR, 5.0, g,
                                   order=6, delta=1e-2)
        assert np.max(np.abs(res)) < 1e-9

    def test_max_eigenvalue_matches_dense_spectrum(self):
        g = Grid.transformed(STATIC, 41)
        op = TransformedOperator.at(STATIC, 0.0, g, order=4)
        dense = np.array([op.apply(e)[1:-1] for e in np.eye(41)[:, :]]).T[:, 1:-1]
        assert np.max(np.linalg.eigvalsh(dense)) == pytest.approx(kinetic_max_eigenvalue(g, 4), rel=1e-12)


class TestConfig:
    def test_cfl_rejection(self):
        g = Grid.transformed(LINEAR, 4096)
        limit = 0.5 / kinetic_max_eigenvalue(g, 6)
        with pytest.raises(ConfigError, match="largest admissible"):
            resolve_dt(PropagatorConfig(dt=1.01 * limit, space_order=6), g)
        assert resolve_dt(PropagatorConfig(dt=0.99 * limit, space_order=6), g) == 0.99 * limit
        assert resolve_dt(PropagatorConfig(space_order=6), g) == pytest.approx(0.9 * limit)

    @pytest.mark.parametrize("kwargs", [dict(dt=-1.0), dict(space_order=3), dict(cfl=0.6), dict(backend="gpu"),
                                        dict(n_points=5, space_order=6)])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            PropagatorConfig(**kwargs)

    def test_grid_checks(self):
        psi = gaussian_state(LINEAR, 257)
        with pytest.raises(GridMismatchError):
            CayleyPropagator(LINEAR, psi.grid, PropagatorConfig(n_points=256))
        with pytest.raises(GridMismatchError):
            propagate_numeric(psi, LINEAR, 1.0, 2.0, PropagatorConfig(n_points=257))
        with pytest.raises(ValueError):
            propagate_series(psi, LINEAR, [2.0, 1.0], PropagatorConfig(n_points=257))


class TestPropagation:
    def test_static_eigenstate_keeps_its_phase(self):
        g = Grid.transformed(STATIC, 1025)
        idx = BasisIndex(0)
        phi = eigenstate(idx, 100.0, g)
        out = propagate_numeric(phi, STATIC, 0.0, 200.0, PropagatorConfig(n_points=1025))
        overlap = inner_product(eigenstate(idx, 100.0, g, t=200.0), out)
        assert abs(abs(overlap) - 1) < 1e-8
        expected = -eigenvalue(idx, 100.0) * 200.0
        assert abs(cmath.phase(overlap) - expected) < 1e-6

    def test_second_order_in_time(self):
        psi = gaussian_state(LINEAR, 513)
        out = []
        for dt in (4e-3, 2e-3, 1e-3):
            cfg = PropagatorConfig(n_points=513, dt=dt)
            out.append(propagate_numeric(psi, LINEAR, 0.0, 1.0, cfg).samples)
        ratio = np.max(np.abs(out[0] - out[1])) / np.max(np.abs(out[1] - out[2]))
        assert 3.6 < ratio < 4.4

    def test_unitary(self):
        psi = gaussian_state(LINEAR, 1025)
        snaps, stats = propagate_series(psi, LINEAR, [10.0, 50.0], PropagatorConfig(n_points=1025))
        for s in snaps:
            # roundoff accumulates over about 3e4 steps
            assert abs(s.norm_sq() - psi.norm_sq()) < 1e-10
        assert stats.max_norm_drift < 1e-10

    def test_refinement_removes_norm_bias(self):
        # reused factors lose the same sliver of norm every step unless each solve is refined
        g = Grid.transformed(LINEAR, 1025)
        psi = basis_tilde(BasisIndex(0), LINEAR, 0.0, g)
        drift = {}
        for refine in (False, True):
            cfg = PropagatorConfig(n_points=1025, space_order=6, refine=refine)
            drift[refine] = propagate_series(psi, LINEAR, [200.0], cfg)[1].max_norm_drift
        assert drift[True] < 1e-12 < drift[False]

    def test_static_gaussian_against_closed_form(self):
        psi = gaussian_state(STATIC, 4096)
        q0 = WallTrajectory.linear(100.0, 0.0)
        out = propagate_numeric(psi, STATIC, 0.0, 5.0, PropagatorConfig(space_order=6))
        exact = gaussian_closed_form(GaussianParams(1.0), q0, 5.0, Grid.physical(q0, 5.0, 4096))
        assert np.max(np.abs(out.samples - exact.samples)) < 1e-6

    def test_moving_basis_state(self):
        g = Grid.transformed(LINEAR, 2049)
        psi = basis_tilde(BasisIndex(1), LINEAR, 0.0, g)
        out = propagate_numeric(psi, LINEAR, 0.0, 100.0, PropagatorConfig(n_points=2049, space_order=6))
        assert np.max(np.abs(out.samples - basis_tilde(BasisIndex(1), LINEAR, 100.0, g).samples)) < 1e-8

    def test_gaussian_against_spectral_sum(self):
        traj = WallTrajectory.linear(100.0, 1e-2)
        psi = gaussian_state(traj, 4096)
        out = propagate_numeric(psi, traj, 0.0, 3.0, PropagatorConfig(space_order=6))
        coeffs = gaussian_coefficients(GaussianParams(1.0), traj, tail_tol=1e-24)
        ref = propagate_spectral(coeffs, 3.0, Grid.transformed(traj, 4096))
        assert np.max(np.abs(out.samples - ref.samples)) < 1e-6

    def test_odd_and_mixed_states(self):
        g = Grid.transformed(STATIC, 513)
        odd = eigenstate(BasisIndex(2, Parity.ODD), 100.0, g)
        even = eigenstate(BasisIndex(0), 100.0, g)
        mix = (odd + even) * (2 ** -0.5)
        cfg = PropagatorConfig(n_points=513)
        (a, b, c), = propagate_series([odd, even, mix], STATIC, [30.0], cfg)[0]
        assert np.max(np.abs(((a + b) * (2 ** -0.5) - c).samples)) < 1e-13
        ea = eigenvalue(BasisIndex(2, Parity.ODD), 100.0)
        assert abs(inner_product(eigenstate(BasisIndex(2, Parity.ODD), 100.0, g, t=30.0), a)
                   - cmath.exp(-1j * ea * 30.0)) < 1e-6

    def test_snapshots_match_restarts(self):
        psi = gaussian_state(LINEAR, 257, d=3.0)
        cfg = PropagatorConfig(n_points=257, dt=0.01)
        (a, b), _ = propagate_series(psi, LINEAR, [1.0, 2.0], cfg)
        restart = propagate_numeric(a, LINEAR, 1.0, 2.0, cfg)
        assert np.max(np.abs(restart.samples - b.samples)) < 1e-12

    def test_reversal_returns_to_start_width(self):
        traj = WallTrajectory.reversal(100.0, 1e-2, 200.0)
        psi = gaussian_state(traj, 1025, d=3.0)
        snaps, stats = propagate_series(psi, traj, [100.0, 200.0], PropagatorConfig(n_points=1025))
        assert stats.max_norm_drift < 1e-10
        phys = to_physical(snaps[1], traj, 200.0)
        assert phys.grid.width == pytest.approx(100.0)

    @pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")
    def test_backends_agree(self):
        psi = gaussian_state(LINEAR, 1025)
        a = propagate_numeric(psi, LINEAR, 0.0, 2.0, PropagatorConfig(n_points=1025, backend="numba"))
        b = propagate_numeric(psi, LINEAR, 0.0, 2.0, PropagatorConfig(n_points=1025, backend="numpy"))
        assert np.max(np.abs(a.samples - b.samples)) < 1e-12

    @pytest.mark.slow
    def test_long_run_on_coarse_grid(self):
        # well-resolved ground state over a long window
        g = Grid.transformed(LINEAR, 257)
        psi = basis_tilde(BasisIndex(0), LINEAR, 0.0, g)
        out = propagate_numeric(psi, LINEAR, 0.0, 1e5, PropagatorConfig(n_points=257, space_order=6))
        phys = to_physical(out, LINEAR, 1e5)
        ref = basis_physical(BasisIndex(0), LINEAR, 1e5, phys.grid)
        assert np.max(np.abs(phys.samples - ref.samples)) < 1e-6


def test_numba_flag_selects_numpy():
    env = dict(os.environ, BOXDYN_NO_NUMBA="1")
    code = ("import json, boxdyn._accel as a, boxdyn.numeric as n, boxdyn.model as m;"
            "g = m.Grid.transformed(m.WallTrajectory.static(1.0), 33);"
            "p = n.CayleyPropagator(m.WallTrajectory.static(1.0), g, n.PropagatorConfig(n_points=33));"
            "print(json.dumps([a.backend(), p.backend]))")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert json.loads(out.stdout) == ["numpy", "numpy"]


class TestFrameMaps:
    def test_identity_at_start(self):
        psi = gaussian_state(LINEAR, 257)
        phys = to_physical(psi, LINEAR, 0.0)
        assert np.array_equal(phys.samples, psi.samples)

    def test_round_trip(self):
        g = Grid.transformed(LINEAR, 1025)
        psi = basis_tilde(BasisIndex(2), LINEAR, 500.0, g)
        back = to_transformed(to_physical(psi, LINEAR, 500.0), LINEAR, 500.0)
        assert np.max(np.abs(back.samples - psi.samples)) < 1e-12

    def test_basis_maps_to_physical_basis(self):
        g = Grid.transformed(LINEAR, 1025)
        psi = basis_tilde(BasisIndex(4), LINEAR, 1e3, g)
        phys = to_physical(psi, LINEAR, 1e3)
        ref = basis_physical(BasisIndex(4), LINEAR, 1e3, phys.grid)
        assert np.max(np.abs(phys.samples - ref.samples)) < 1e-12
        assert phys.norm_sq() == pytest.approx(1.0, abs=1e-10)

    def test_interpolated_grid(self):
        g = Grid.transformed(LINEAR, 2049)
        psi = basis_tilde(BasisIndex(1), LINEAR, 1e3, g)
        target = Grid.physical(LINEAR, 1e3, 1001)
        phys = to_physical(psi, LINEAR, 1e3, target)
        ref = basis_physical(BasisIndex(1), LINEAR, 1e3, target)
        assert np.max(np.abs(phys.samples - ref.samples)) < 1e-8

    def test_checks(self):
        psi = gaussian_state(LINEAR, 65)
        with pytest.raises(GridMismatchError):
            to_physical(psi, LINEAR, 1.0)
        with pytest.raises(GridMismatchError):
            to_transformed(psi, LINEAR, 0.0)
        with pytest.raises(GridMismatchError):
            to_physical(psi, LINEAR, 0.0, Grid.physical(LINEAR, 1e4, 65))
        late = WaveField(np.ones(65), Grid.physical(LINEAR, 1e4, 65), 0.0)
        with pytest.raises(GridMismatchError):
            to_transformed(late, LINEAR, 0.0)
