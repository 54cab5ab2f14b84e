import cmath
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from boxdyn.theta import (ThetaArgument, ThetaConvergenceError, ThetaDomainError, identity_residuals,
                          jacobi_transform_theta2, prefers_transform, sample_arguments, theta2, theta2_series,
                          theta2_split, theta4, theta4_series)

# frozen from an independent 50-term partial sum in 50-digit arithmetic
THETA2_Z0_K4I = 0.08642783652859562
THETA4_Z0_KI = 0.9135791381561168


def mp_theta2(z, kappa, terms=400):
    mpmath.mp.dps = 40
    k = mpmath.mpc(kappa.real, kappa.imag)
    z = mpmath.mpc(z.real, z.imag)
    # exponentiate the full exponent; q**power would pick the principal log branch
    return complex(sum(2 * mpmath.exp(1j * mpmath.pi * k * (n + mpmath.mpf(1) / 2) ** 2) * mpmath.cos((2 * n + 1) * z)
                       for n in range(terms)))


kappas = st.builds(complex, st.floats(-2, 2), st.floats(0.05, 50))
zs = st.builds(complex, st.floats(-math.pi, math.pi), st.floats(-1, 1)).filter(lambda z: abs(z) <= math.pi)


def test_oracle_values():
    assert theta2(0, 4j) == pytest.approx(THETA2_Z0_K4I, rel=1e-14)
    assert theta2(0, 4j) == pytest.approx(2 * math.exp(-math.pi) * (1 + math.exp(-8 * math.pi)), rel=1e-12)
    assert theta4(0, 1j) == pytest.approx(THETA4_Z0_KI, rel=1e-14)
    partial = sum((-1) ** n * math.exp(-math.pi * n * n) for n in range(-30, 31))
    assert theta4(0, 1j).real == pytest.approx(partial, rel=1e-15)


def test_theta2_zero_at_half_pi():
    for kappa in (1j, 0.3 + 0.2j, 2j, -1.5 + 7j):
        assert abs(theta2(math.pi / 2, kappa)) < 1e-12
    assert abs(jacobi_transform_theta2(math.pi / 2, 2j)) < 1e-12


def test_theta4_near_one_for_large_imaginary_kappa():
    for z in (0.0, 0.7, 1.0 + 0.5j):
        assert abs(theta4(z, 10j) - 1) <= 2 * math.exp(-10 * math.pi) * math.cosh(2 * 0.5) * 1.01


def test_transform_examples():
    assert jacobi_transform_theta2(0, 1j) == pytest.approx(theta2_series(0, 1j), rel=1e-12)
    z, k = 0.3 + 0.1j, 0.2 + 0.5j
    assert abs(jacobi_transform_theta2(z, k) - theta2_series(z, k)) < 1e-12 * max(1, abs(theta2_series(z, k)))


def test_against_high_precision_near_real_axis():
    # small Im(kappa): slowly decaying nome, where plain double accumulation loses digits
    for z, k in [(0.3 + 0.9j, 1.7 + 0.06j), (-2.5 + 0.2j, -0.4 + 0.05j), (1.0, 0.01 + 0.08j)]:
        ref = mp_theta2(z, k, terms=600)
        assert abs(theta2_series(z, k) - ref) <= 1e-13 * max(1.0, abs(ref))


@given(zs, kappas)
def test_identity_property(z, kappa):
    assert identity_residuals([z], [kappa])[0] < 1e-12


@given(zs, kappas)
def test_parity_and_periodicity(z, kappa):
    scale2 = max(1.0, abs(theta2(z, kappa)))
    assert abs(theta2(-z, kappa) - theta2(z, kappa)) <= 1e-13 * scale2
    assert abs(theta2(z + math.pi, kappa) + theta2(z, kappa)) <= 1e-12 * scale2
    scale4 = max(1.0, abs(theta4(z, kappa)))
    assert abs(theta4(-z, kappa) - theta4(z, kappa)) <= 1e-13 * scale4
    assert abs(theta4(z + math.pi, kappa) - theta4(z, kappa)) <= 1e-12 * scale4


@given(st.builds(complex, st.floats(-1, 1), st.floats(0.02, 0.05)), st.floats(-3, 3), st.floats(-0.02, 0.02))
def test_localized_tail_bound(kappa, zr, zi):
    # theta4 on the dual lattice is 1 up to the first neglected terms
    dual = -1 / kappa
    if dual.imag < 20:
        return
    w = complex(zr, zi)
    bound = 3 * math.exp(-math.pi * dual.imag) * math.exp(2 * abs(w.imag))
    assert abs(theta4(w, dual) - 1) <= max(bound, 1e-16)


def test_vectorized_matches_scalar(rng):
    z = rng.uniform(-3, 3, 50) + 1j * rng.uniform(-1, 1, 50)
    k = 0.4 + 0.3j
    vec = theta2(z, k)
    assert np.allclose(vec, [theta2(complex(v), k) for v in z], rtol=1e-15, atol=0)


def test_split_recombines():
    for k in (0.01 + 0.02j, 2j, 0.5 + 0.5j):
        e, f = theta2_split(0.4 - 0.2j, k)
        assert cmath.exp(e) * f == pytest.approx(theta2_series(0.4 - 0.2j, k), rel=1e-12)


def test_method_selection():
    assert prefers_transform(0.01j)
    assert not prefers_transform(4j)
    assert theta2(0.2, 0.01j, method="series") == pytest.approx(theta2(0.2, 0.01j), rel=1e-12)
    with pytest.raises(ValueError):
        theta2(0, 1j, method="bogus")
    with pytest.raises(ValueError):
        theta4(0, 1j, method="transform")


def test_domain_errors():
    with pytest.raises(ThetaDomainError):
        theta2(0, 1.0)
    with pytest.raises(ThetaDomainError):
        theta4(0, -1j)


def test_convergence_failure_is_reported():
    with pytest.raises(ThetaConvergenceError) as info:
        theta2_series(0.1, 1e-14j)
    assert info.value.achieved_bound > 0


def test_argument_type():
    arg = ThetaArgument(0.1 + 0j, 0.01j)
    assert arg.dual_imag == pytest.approx(100.0)


def test_randomized_suite_sampler():
    z, k = sample_arguments(np.random.default_rng(7), 200)
    assert np.all(np.abs(z) <= math.pi) and np.all(np.abs(z.imag) <= 1)
    assert np.all((k.imag >= 0.05) & (k.imag <= 50))
    assert identity_residuals(z, k).max() < 1e-12
