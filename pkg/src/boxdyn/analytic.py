"""Exact solutions for linearly moving walls.

Moving-wall basis (transformed frame y in [-L0/2, L0/2], Phi(t) = int_0^t L^-2):

    psi~_n(y, t) = sqrt(2/L0) exp(i m y^2 L Ldot / (2 hbar L0^2) - i hbar pi^2 k_n^2 Phi / (2 m)) cos(k_n pi y / L0)

with k_n = 2n + 1. In the physical frame the chirp becomes i m x^2 Ldot / (2 hbar L)
and the cosine argument k_n pi x / L. An initial Gaussian packet is propagated
either by summing this basis or in closed form through theta2.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .model import (
    BasisIndex,
    Domain,
    Grid,
    GridMismatchError,
    ModelError,
    Parity,
    PhysicalParams,
    Variant,
    WallTrajectory,
    WaveField,
    inner_product,
    phase_integral,
    wall_length,
    wall_velocity,
)
from .theta import ThetaArgument, theta2_split, theta4_series

TAIL_TOL = 1e-12
MAX_TERMS = 512
NODE_THRESHOLD = 1e-30
_TAIL_GUARD = 4


class AnalyticError(ValueError):
    """Input outside the validity domain of the exact solutions."""


class TruncationError(AnalyticError):
    """The spectral tail bound could not be met within the term cap."""


class NodeError(ArithmeticError):
    """Quantity undefined because the wavefunction vanishes at the point."""


@dataclass(frozen=True)
class GaussianParams:
    d: float

    def __post_init__(self):
        if not self.d > 0:
            raise AnalyticError("Gaussian width d must be positive")

    def check_localized(self, L0: float):
        if self.d > L0 / 10:
            raise AnalyticError(f"packet width d={self.d} exceeds L0/10={L0 / 10}; not localized")


@dataclass(frozen=True, eq=False)
class SpectralCoefficients:
    """Coefficients over the even moving-wall basis of one linear branch.

    ``traj`` is the branch law in local time s = t - t_ref.
    """

    coeffs: np.ndarray
    traj: WallTrajectory
    t_ref: float = 0.0
    parity: Parity = Parity.EVEN
    tail_tol: float = TAIL_TOL
    box_error_bound: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def n_terms(self) -> int:
        return self.coeffs.size

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.coeffs) ** 2))


def _require_linear(traj: WallTrajectory):
    if not traj.is_linear:
        raise AnalyticError(f"exact basis solutions need constant wall speed, got {traj.variant.value}")


def _require_even(idx: BasisIndex):
    if idx.parity is not Parity.EVEN:
        raise AnalyticError("only even moving-wall solutions are implemented")


def _mode_factors(ns, traj, t, params):
    """Return (k_n, temporal phase factor per mode)."""
    ns = np.asarray(ns)
    k = 2 * ns + 1
    phi = phase_integral(traj, t)
    phase = np.exp(-1j * params.hbar * math.pi ** 2 * (k.astype(float) ** 2) * phi / (2 * params.m))
    return k, phase


def _basis_rows(ns, traj, t, grid, params):
    """Rows psi_n(x, t) for every n in ``ns`` on ``grid`` (either frame)."""
    _require_linear(traj)
    L = wall_length(traj, t)
    Ld = wall_velocity(traj, t)
    x = grid.x
    if grid.domain is Domain.TRANSFORMED:
        if grid.width != traj.L0:
            raise GridMismatchError(f"transformed grid must span L0={traj.L0}, spans {grid.width}")
        width = traj.L0
        chirp = np.exp(1j * params.m * x * x * L * Ld / (2 * params.hbar * traj.L0 ** 2))
    else:
        if not np.isclose(grid.width, L, rtol=1e-14, atol=0):
            raise GridMismatchError(f"physical grid must span L(t)={L}, spans {grid.width}")
        width = L
        chirp = np.exp(1j * params.m * x * x * Ld / (2 * params.hbar * L))
    k, phase = _mode_factors(ns, traj, t, params)
    cos = np.cos(np.outer(k * math.pi / width, x))
    cos[:, 0] = 0.0
    cos[:, -1] = 0.0
    return math.sqrt(2.0 / width) * chirp[None, :] * (phase[:, None] * cos)


def basis_tilde(idx: BasisIndex, traj: WallTrajectory, t: float, grid: Grid,
                params: PhysicalParams = PhysicalParams()) -> WaveField:
    """Moving-wall basis solution on the fixed transformed domain."""
    _require_even(idx)
    if grid.domain is not Domain.TRANSFORMED:
        raise GridMismatchError("basis_tilde needs a transformed grid")
    return WaveField(_basis_rows([idx.n], traj, t, grid, params)[0], grid, t)


def basis_physical(idx: BasisIndex, traj: WallTrajectory, t: float, grid: Grid,
                   params: PhysicalParams = PhysicalParams()) -> WaveField:
    """Moving-wall basis solution on the physical box [-L(t)/2, L(t)/2]."""
    _require_even(idx)
    if grid.domain is not Domain.PHYSICAL or grid.t != float(t):
        raise GridMismatchError("basis_physical needs the physical grid of the same time")
    return WaveField(_basis_rows([idx.n], traj, t, grid, params)[0], grid, t)


def _tail_ok(c, tol):
    tail = np.abs(c[-_TAIL_GUARD:]) ** 2
    return bool(np.all(tail <= tol))


def expand_initial(psi0: WaveField, traj: WallTrajectory, n_terms: int | None = None,
                   tail_tol: float = TAIL_TOL, params: PhysicalParams = PhysicalParams(),
                   t_ref: float = 0.0) -> SpectralCoefficients:
    """Project a transformed-frame state at local time 0 onto the moving-wall basis.

    The number of terms starts at ``n_terms`` (default 16) and doubles until
    the last few coefficients satisfy |c|^2 <= tail_tol, up to 512 terms.
    """
    _require_linear(traj)
    if psi0.grid.domain is not Domain.TRANSFORMED or psi0.grid.width != traj.L0:
        raise GridMismatchError("initial state must live on the transformed grid of the trajectory")
    n = max(int(n_terms or 16), _TAIL_GUARD)
    h = psi0.grid.spacing
    while True:
        n = min(n, MAX_TERMS)
        rows = _basis_rows(np.arange(n), traj, 0.0, psi0.grid, params)
        c = integrate.simpson(np.conj(rows) * psi0.samples[None, :], dx=h, axis=1)
        if _tail_ok(c, tail_tol):
            break
        if n == MAX_TERMS:
            raise TruncationError(
                f"tail |c|^2 = {np.max(np.abs(c[-_TAIL_GUARD:]) ** 2):.3e} above {tail_tol:.1e} at the {MAX_TERMS}-term cap"
            )
        n *= 2
    total = inner_product(psi0, psi0).real
    captured = float(np.sum(np.abs(c) ** 2))
    if abs(captured - total) > 1e-6 * max(total, 1e-300):
        raise AnalyticError(
            f"expansion captures {captured:.9f} of norm {total:.9f}; the state has odd-parity "
            "content or is not resolved by the grid"
        )
    return SpectralCoefficients(c, traj, t_ref, tail_tol=tail_tol)


def gaussian_prefactor(g: GaussianParams) -> complex:
    """Constant in front of exp(-x^2 / 4 d^2) in the initial packet (principal branch)."""
    return (1 - 1j) / (2 ** 0.75 * math.pi ** 0.25 * cmath.sqrt(-1j * g.d))


def gaussian_initial(g: GaussianParams, grid: Grid) -> WaveField:
    """Unit-norm Gaussian packet centred at 0 (wall samples set to zero)."""
    x = grid.x
    values = gaussian_prefactor(g) * np.exp(-x * x / (4 * g.d * g.d))
    t = grid.t if grid.t is not None else 0.0
    return WaveField(values, grid, t)


def gaussian_coefficients(g: GaussianParams, traj: WallTrajectory, n_terms: int | None = None,
                          tail_tol: float = TAIL_TOL,
                          params: PhysicalParams = PhysicalParams()) -> SpectralCoefficients:
    """Closed-form overlaps of the Gaussian packet with the moving-wall basis at t = 0.

    The overlap integral is extended to the whole line:

        g_n = sqrt(2/L0) C sqrt(pi/a) exp(-kappa_n^2 / (4 a)),
        a = 1/(4 d^2) + i m q / (2 hbar L0),  kappa_n = (2n+1) pi / L0,

    where C is the packet prefactor. Dropping the parts beyond the walls costs
    at most exp(-L0^2 / (32 d^2)).
    """
    _require_linear(traj)
    g.check_localized(traj.L0)
    q = wall_velocity(traj, 0.0)
    a = 1 / (4 * g.d ** 2) + 1j * params.m * q / (2 * params.hbar * traj.L0)
    ns = np.arange(MAX_TERMS)
    wavenumber = (2 * ns + 1) * math.pi / traj.L0
    c = math.sqrt(2 / traj.L0) * gaussian_prefactor(g) * np.sqrt(math.pi / a) * np.exp(-wavenumber ** 2 / (4 * a))
    small = np.abs(c) ** 2 <= tail_tol
    if not np.any(small):
        raise TruncationError(f"Gaussian spectrum does not reach {tail_tol:.1e} within {MAX_TERMS} terms")
    # |g_n| decreases monotonically in n, so the first small term bounds the rest
    n_needed = int(np.argmax(small)) + 1
    n = max(int(n_terms or 0), n_needed, _TAIL_GUARD)
    if n > MAX_TERMS:
        raise TruncationError(f"requested {n} terms exceeds the cap of {MAX_TERMS}")
    bound = math.exp(-traj.L0 ** 2 / (32 * g.d ** 2))
    return SpectralCoefficients(c[:n], traj, 0.0, tail_tol=tail_tol, box_error_bound=bound)


def propagate_spectral(coeffs: SpectralCoefficients, t: float, grid: Grid,
                       params: PhysicalParams = PhysicalParams()) -> WaveField:
    """Sum the expansion at time t on a transformed or physical grid."""
    s = float(t) - coeffs.t_ref
    if s < 0:
        raise AnalyticError(f"t={t} precedes the expansion time {coeffs.t_ref}")
    if grid.domain is Domain.PHYSICAL and grid.t != float(t):
        raise GridMismatchError("physical grid time stamp differs from t")
    local = grid
    if grid.domain is Domain.PHYSICAL and coeffs.t_ref:
        local = Grid(grid.n_points, grid.width, Domain.PHYSICAL, s)
    rows = _basis_rows(np.arange(coeffs.n_terms), coeffs.traj, s, local, params)
    return WaveField(coeffs.coeffs @ rows, grid, float(t))


def kappa_z(g: GaussianParams, traj: WallTrajectory, x, t: float,
            params: PhysicalParams = PhysicalParams()) -> ThetaArgument:
    """Theta argument and lattice parameter of the evolving Gaussian packet."""
    _require_linear(traj)
    hbar, m, d, L0 = params.hbar, params.m, g.d, traj.L0
    q = wall_velocity(traj, 0.0)
    kappa = (4 * math.pi * hbar * d * d / (L0 * (2 * d * d * m * q - 1j * hbar * L0))
             - 2 * math.pi * hbar / m * phase_integral(traj, t))
    if not kappa.imag > 0:
        raise AnalyticError(f"Im(kappa) = {kappa.imag} <= 0: parameters outside the valid domain")
    z = math.pi * np.asarray(x, dtype=float) / wall_length(traj, t)
    return ThetaArgument(z if z.ndim else complex(z), kappa)


def _gaussian_amplitude(g, traj, t, L, params):
    q = wall_velocity(traj, 0.0)
    inner = cmath.sqrt(1 / g.d ** 2 + 2j * params.m * q / (params.hbar * traj.L0))
    return (1 - 1j) * (2 * math.pi) ** 0.25 / (cmath.sqrt(-1j * g.d * traj.L0 * L) * inner)


def gaussian_closed_form(g: GaussianParams, traj: WallTrajectory, t: float, grid: Grid,
                         params: PhysicalParams = PhysicalParams()) -> WaveField:
    """Evolved Gaussian packet in the physical box from a single theta2 evaluation."""
    if grid.domain is not Domain.PHYSICAL or grid.t != float(t):
        raise GridMismatchError("closed form is evaluated on the physical grid of time t")
    L = wall_length(traj, t)
    q = wall_velocity(traj, 0.0)
    x = grid.x
    arg = kappa_z(g, traj, x, t, params)
    exponent, factor = theta2_split(arg.z, arg.kappa)
    chirp = 1j * params.m * q * x * x / (2 * params.hbar * L)
    values = _gaussian_amplitude(g, traj, t, L, params) * np.exp(chirp + exponent) * factor
    return WaveField(values, grid, t)


@dataclass(frozen=True)
class RatioResult:
    """psi(x, t; q = 0) / psi(x, t; q) by two algebraically equivalent routes."""

    x: np.ndarray
    t: float
    via_theta2: np.ndarray
    via_theta4: np.ndarray

    @property
    def route_mismatch(self) -> float:
        scale = np.maximum(1.0, np.abs(self.via_theta4))
        return float(np.max(np.abs(self.via_theta2 - self.via_theta4) / scale))

    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.via_theta4 - 1.0)))


def ratio_static_moving(g: GaussianParams, traj: WallTrajectory, x, t: float,
                        params: PhysicalParams = PhysicalParams()) -> RatioResult:
    """Static-wall over moving-wall packet amplitude at the same (x, t).

    The theta2 route multiplies the ratio of the two theta2 values by the
    Gaussian and square-root factors; the theta4 route uses the modular
    transformation, where those factors cancel and only the ratio of two
    theta4 values remains. A vanishing theta4 in the denominator marks a node
    of the moving-wall packet, and the ratio is then undefined.
    """
    _require_linear(traj)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    static = traj.with_speed(0.0)
    a0 = kappa_z(g, static, x, t, params)
    aq = kappa_z(g, traj, x, t, params)

    d0 = theta4_series(a0.z / a0.kappa, -1.0 / a0.kappa)
    dq = theta4_series(aq.z / aq.kappa, -1.0 / aq.kappa)
    if np.any(np.abs(dq) < NODE_THRESHOLD):
        bad = x[np.argmin(np.abs(dq))]
        raise NodeError(f"moving-wall packet has a node near x={bad} at t={t}")
    via_theta4 = d0 / dq

    e0, f0 = theta2_split(a0.z, a0.kappa)
    eq, fq = theta2_split(aq.z, aq.kappa)
    gauss = (1j * a0.z ** 2 / (math.pi * a0.kappa) - 1j * aq.z ** 2 / (math.pi * aq.kappa))
    via_theta2 = np.exp(gauss + e0 - eq) * np.sqrt(a0.kappa / aq.kappa) * f0 / fq
    return RatioResult(x, float(t), via_theta2, via_theta4)


def ratio_tail_bound(g: GaussianParams, traj: WallTrajectory, x, t: float,
                     params: PhysicalParams = PhysicalParams()) -> np.ndarray:
    """Bound on |ratio - 1| from the first neglected terms of both theta4 series."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    for tr in (traj.with_speed(0.0), traj):
        a = kappa_z(g, tr, x, t, params)
        w = a.z / a.kappa
        out = out + 3 * np.exp(-math.pi * a.dual_imag + 2 * np.abs(np.imag(w)))
    return out


def rebase_at_reversal(coeffs: SpectralCoefficients, traj: WallTrajectory, n_points: int = 8193,
                       tail_tol: float = TAIL_TOL,
                       params: PhysicalParams = PhysicalParams()) -> SpectralCoefficients:
    """Re-expand an expanding-branch state in the contracting-branch basis at T/2.

    The state is evaluated on the physical box at T/2, which is exactly the
    transformed domain of the contracting branch (initial width L(T/2), speed -q).
    """
    if traj.variant is not Variant.REVERSAL:
        raise AnalyticError("rebasing needs a reversal trajectory")
    expanding = WallTrajectory.linear(traj.L0, traj.q) if traj.q else WallTrajectory.static(traj.L0)
    if coeffs.traj != expanding or coeffs.t_ref != 0.0:
        raise AnalyticError("coefficients must belong to the expanding branch, referenced at t = 0")
    half = traj.T / 2
    Lh = wall_length(traj, half)
    contracting = WallTrajectory.linear(Lh, -traj.q) if traj.q else WallTrajectory.static(Lh)
    psi_half = propagate_spectral(coeffs, half, Grid.physical(expanding, half, n_points), params)
    start = WaveField(psi_half.samples, Grid.transformed(contracting, n_points), 0.0)
    try:
        rebased = expand_initial(start, contracting, max(coeffs.n_terms, 16), tail_tol, params, t_ref=half)
    except TruncationError as exc:
        raise TruncationError(f"rebased expansion: {exc}") from exc
    return rebased
