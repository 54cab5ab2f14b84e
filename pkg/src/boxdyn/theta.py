"""Jacobi theta functions theta2 and theta4 for complex argument and lattice parameter.

Conventions (nome e^{i pi kappa}, Im kappa > 0):

    theta2(z, kappa) = 2 sum_{n>=0} exp(i pi kappa (n+1/2)^2) cos((2n+1) z)
    theta4(z, kappa) = sum_{n in Z} (-1)^n exp(i pi kappa n^2) exp(2 i n z)

Terms are formed from a single complex exponent so that large |Im z| never
overflows an intermediate cosine. Summation stops once a rigorous bound on the
remaining tail drops below ``RTOL`` times the partial sum.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

RTOL = 1e-16
MAX_TERMS = 1_000_000
_BLOCK = 32
_TINY = 1e-300
# Terms are accumulated in extended precision: near the real axis the direct
# series has terms far larger than its sum, and double rounding of each term
# would otherwise dominate the error budget.
_EXT = np.clongdouble
_PI = np.longdouble("3.14159265358979323846264338327950288")


class ThetaDomainError(ValueError):
    """Im(kappa) <= 0: the lattice sums diverge."""


class ThetaConvergenceError(ArithmeticError):
    def __init__(self, message, achieved_bound):
        super().__init__(f"{message} (achieved tail bound {achieved_bound:.3e})")
        self.achieved_bound = achieved_bound


@dataclass(frozen=True)
class ThetaArgument:
    z: complex | np.ndarray
    kappa: complex

    def __post_init__(self):
        kappa = complex(self.kappa)
        _check_kappa(kappa)
        object.__setattr__(self, "kappa", kappa)

    @property
    def dual_imag(self) -> float:
        """Im(-1/kappa), the decay rate of the transformed series."""
        return (-1.0 / self.kappa).imag


def _check_kappa(kappa: complex):
    if not kappa.imag > 0:
        raise ThetaDomainError(f"theta series need Im(kappa) > 0, got kappa={kappa}")


def _tail_bound(a, b, n_next):
    """Bound on sum_{k>=n_next} exp(-a k^2 + b k) for k past the peak, a > 0.

    Successive ratios after n_next are at most r = exp(-a (2 n_next + 1) + b);
    the tail is dominated by a geometric series once r < 1.
    """
    log_first = -a * n_next * n_next + b * n_next
    log_ratio = -a * (2 * n_next + 1) + b
    ratio = np.exp(np.minimum(log_ratio, 0.0))
    with np.errstate(over="ignore", divide="ignore"):
        bound = np.exp(log_first) / (1.0 - ratio)
    return np.where(log_ratio < 0, bound, np.inf)


def _lattice_sum(w, tau, offset, alternate, leading):
    """Sum over n >= start of s_n [exp(i pi tau (n+offset)^2 + 2 i (n+offset) w) + (w -> -w)].

    ``offset`` is 1/2 for theta2 (start at 0) and 0 for theta4 (start at 1, with
    ``leading`` = 1 for the n = 0 term). ``alternate`` applies (-1)^n.
    """
    w = np.asarray(w, dtype=complex)
    flat = w.ravel()
    flat_ext = flat.astype(_EXT)
    tau_ext = _EXT(tau)
    total = np.full(flat.shape, leading, dtype=_EXT)
    a = np.pi * tau.imag
    b = 2.0 * np.abs(flat.imag)
    start = 0 if offset else 1
    active = np.ones(flat.shape, dtype=bool)
    bound = np.full(flat.shape, np.inf)
    n0 = start
    while n0 - start < MAX_TERMS:
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        ks = np.arange(n0, n0 + _BLOCK, dtype=np.longdouble) + np.longdouble(offset)
        sign = np.where((np.arange(n0, n0 + _BLOCK) % 2 == 1) & alternate, -1.0, 1.0)
        base = _EXT(1j) * _PI * tau_ext * ks * ks
        ww = flat_ext[idx, None]
        arg = _EXT(2j) * ks[None, :] * ww
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            terms = sign * (np.exp(base + arg) + np.exp(base - arg))
        total[idx] += terms.sum(axis=1)
        n0 += _BLOCK
        k_next = n0 + offset
        tb = 2.0 * _tail_bound(a, b[idx], k_next)
        bound[idx] = tb
        scale = np.maximum(np.abs(total[idx]), _TINY)
        done = (tb <= RTOL * scale) & np.isfinite(total[idx])
        active[idx[done]] = False
    if np.any(active):
        raise ThetaConvergenceError(
            f"theta series hit the {MAX_TERMS}-term cap", float(np.max(bound[active]))
        )
    return total.astype(complex).reshape(w.shape)


def _as_output(value, z):
    return complex(value) if np.ndim(z) == 0 else value


def theta2_series(z, kappa) -> complex | np.ndarray:
    """Direct lattice sum for theta2."""
    kappa = complex(kappa)
    _check_kappa(kappa)
    return _as_output(_lattice_sum(z, kappa, 0.5, False, 0.0), z)


def theta4_series(z, kappa) -> complex | np.ndarray:
    """Direct lattice sum for theta4."""
    kappa = complex(kappa)
    _check_kappa(kappa)
    return _as_output(_lattice_sum(z, kappa, 0.0, True, 1.0), z)


def prefers_transform(kappa: complex) -> bool:
    """True when the dual series (lattice parameter -1/kappa) decays faster."""
    kappa = complex(kappa)
    return (-1.0 / kappa).imag > kappa.imag


def theta2_split(z, kappa):
    """Return ``(exponent, factor)`` with theta2(z, kappa) = exp(exponent) * factor.

    Keeping the Gaussian prefactor of the transformed route as an exponent lets
    callers merge it with their own exponentials before evaluating, which avoids
    spurious underflow or overflow far from the packet centre.
    """
    kappa = complex(kappa)
    _check_kappa(kappa)
    z_arr = np.asarray(z, dtype=complex)
    if prefers_transform(kappa):
        exponent = -1j * z_arr * z_arr / (kappa * np.pi)
        factor = _lattice_sum(z_arr / kappa, -1.0 / kappa, 0.0, True, 1.0) / cmath.sqrt(-1j * kappa)
    else:
        exponent = np.zeros_like(z_arr)
        factor = _lattice_sum(z_arr, kappa, 0.5, False, 0.0)
    if z_arr.ndim == 0:
        return complex(exponent), complex(factor)
    return exponent, factor


def theta2(z, kappa, method: str = "auto"):
    """theta2(z, kappa); ``method`` is "auto", "series" or "transform"."""
    if method == "series":
        return theta2_series(z, kappa)
    if method == "transform":
        return jacobi_transform_theta2(z, kappa)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    exponent, factor = theta2_split(z, kappa)
    return _as_output(np.exp(exponent) * factor, z)


def theta4(z, kappa, method: str = "series"):
    """theta4(z, kappa). Only the direct series is provided."""
    if method != "series":
        raise ValueError("theta4 is evaluated by its direct series only")
    return theta4_series(z, kappa)


def jacobi_transform_theta2(z, kappa):
    """theta2 evaluated through the modular transformation to a theta4 series.

    theta2(z, kappa) = exp(-i z^2 / (pi kappa)) / sqrt(-i kappa) * theta4(z/kappa, -1/kappa)

    With Im(kappa) > 0, -i kappa lies in the open right half plane, so the
    principal square root is continuous there and no branch choice arises.
    """
    kappa = complex(kappa)
    _check_kappa(kappa)
    z_arr = np.asarray(z, dtype=complex)
    dual = theta4_series(z_arr / kappa, -1.0 / kappa)
    value = np.exp(-1j * z_arr * z_arr / (kappa * np.pi)) / cmath.sqrt(-1j * kappa) * dual
    return _as_output(value, z)


def sample_arguments(rng: np.random.Generator, count: int, imag_kappa=(0.05, 50.0),
                     real_kappa=(-2.0, 2.0), z_radius: float = math.pi, z_imag: float = 1.0):
    """Random (z, kappa) pairs for identity checks.

    Im(kappa) is drawn log-uniformly so both the slowly converging (small
    Im kappa) and the rapidly converging ends are covered. z is uniform on the
    strip |Im z| <= z_imag, restricted to |z| <= z_radius by rejection.
    """
    lo, hi = imag_kappa
    if not 0 < lo <= hi:
        raise ValueError("need 0 < min Im(kappa) <= max Im(kappa)")
    kappa = rng.uniform(*real_kappa, count) + 1j * np.exp(rng.uniform(math.log(lo), math.log(hi), count))
    z = np.empty(count, dtype=complex)
    filled = 0
    while filled < count:
        cand = rng.uniform(-z_radius, z_radius, count) + 1j * rng.uniform(-z_imag, z_imag, count)
        cand = cand[np.abs(cand) <= z_radius][: count - filled]
        z[filled: filled + cand.size] = cand
        filled += cand.size
    return z, kappa


def identity_residuals(z, kappa) -> np.ndarray:
    """|series - transform| / max(1, |theta2|) for each pair, both routes evaluated independently."""
    out = np.empty(len(z))
    for i, (zi, ki) in enumerate(zip(z, kappa)):
        direct = theta2_series(zi, ki)
        out[i] = abs(jacobi_transform_theta2(zi, ki) - direct) / max(1.0, abs(direct))
    return out
