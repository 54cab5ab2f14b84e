"""Physical parameters, wall laws, grids, the fixed-wall eigenbasis and quadrature."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import integrate

SPEED_OF_LIGHT_AU = 137.035999
PHASE_INTEGRAL_RTOL = 1e-12


class ModelError(ValueError):
    """Raised for inputs outside the domain of the physical model."""


class GridMismatchError(ModelError):
    """Raised when two fields or a field and a box do not share a grid."""


@dataclass(frozen=True)
class PhysicalParams:
    m: float = 1.0
    hbar: float = 1.0
    c: float = SPEED_OF_LIGHT_AU

    def __post_init__(self):
        for name in ("m", "hbar", "c"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ModelError(f"{name} must be positive and finite, got {value!r}")


class Variant(str, Enum):
    STATIC = "static"
    LINEAR = "linear"
    SMOOTH = "smooth"
    REVERSAL = "reversal"


@dataclass(frozen=True)
class WallTrajectory:
    """Law for the box width L(t).

    static    L = L0
    linear    L = L0 + q t
    smooth    L = L0 + q t (1 - exp(-beta t))
    reversal  L = L0 + q t for t <= T/2, L0 + q (T - t) afterwards
    """

    variant: Variant
    L0: float
    q: float = 0.0
    beta: float | None = None
    T: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not (math.isfinite(self.L0) and self.L0 > 0):
            raise ModelError(f"L0 must be positive, got {self.L0!r}")
        if not math.isfinite(self.q):
            raise ModelError("q must be finite")
        if self.variant is Variant.STATIC and self.q != 0.0:
            raise ModelError("a static trajectory has q = 0")
        if self.variant is Variant.SMOOTH:
            if self.beta is None or not self.beta > 0:
                raise ModelError("smooth turn-on needs beta > 0")
        if self.variant is Variant.REVERSAL:
            if self.T is None or not self.T > 0:
                raise ModelError("reversal needs a period T > 0")
            if self.L0 + self.q * self.T / 2 <= 0:
                raise ModelError("reversal collapses the box before T/2")

    @classmethod
    def static(cls, L0):
        return cls(Variant.STATIC, L0)

    @classmethod
    def linear(cls, L0, q):
        return cls(Variant.LINEAR, L0, q)

    @classmethod
    def smooth(cls, L0, q, beta):
        return cls(Variant.SMOOTH, L0, q, beta=beta)

    @classmethod
    def reversal(cls, L0, q, T):
        return cls(Variant.REVERSAL, L0, q, T=T)

    @property
    def is_linear(self) -> bool:
        """True when the exact moving-wall basis applies (constant wall speed)."""
        return self.variant in (Variant.STATIC, Variant.LINEAR)

    def with_speed(self, q: float) -> "WallTrajectory":
        """Same law with a different wall speed (q = 0 gives the static twin)."""
        if self.is_linear:
            return WallTrajectory.static(self.L0) if q == 0 else WallTrajectory.linear(self.L0, q)
        return replace(self, q=q)

    def as_params(self) -> tuple:
        """Flat numeric encoding used by compiled kernels."""
        code = list(Variant).index(self.variant)
        return (code, float(self.L0), float(self.q), float(self.beta or 0.0), float(self.T or 0.0))


def _raw_length(traj: WallTrajectory, t):
    t = np.asarray(t, dtype=float)
    v = traj.variant
    if v is Variant.STATIC:
        return np.full_like(t, traj.L0)
    if v is Variant.LINEAR:
        return traj.L0 + traj.q * t
    if v is Variant.SMOOTH:
        return traj.L0 + traj.q * t * -np.expm1(-traj.beta * t)
    half = traj.T / 2
    return np.where(t <= half, traj.L0 + traj.q * t, traj.L0 + traj.q * (traj.T - t))


def wall_length(traj: WallTrajectory, t):
    """Box width L(t); scalar in, float out, array in, array out."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ModelError("time must be non-negative")
    L = _raw_length(traj, t_arr)
    if np.any(L <= 0):
        bad = float(np.ravel(t_arr)[np.argmin(np.ravel(L))])
        raise ModelError(f"box width is non-positive at t={bad}")
    return float(L) if L.ndim == 0 else L


def wall_velocity(traj: WallTrajectory, t, side: str | None = None):
    """Analytic dL/dt.

    For the reversal law the derivative jumps at T/2; pass ``side="left"`` or
    ``side="right"`` to get the one-sided value there.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ModelError("time must be non-negative")
    v = traj.variant
    if v is Variant.STATIC:
        out = np.zeros_like(t_arr)
    elif v is Variant.LINEAR:
        out = np.full_like(t_arr, traj.q)
    elif v is Variant.SMOOTH:
        e = np.exp(-traj.beta * t_arr)
        out = traj.q * (-np.expm1(-traj.beta * t_arr)) + traj.q * traj.beta * t_arr * e
    else:
        half = traj.T / 2
        at_kink = t_arr == half
        if np.any(at_kink) and side not in ("left", "right"):
            raise ModelError("wall velocity is discontinuous at T/2; pass side='left' or 'right'")
        before = (t_arr < half) | (at_kink & (side == "left"))
        out = np.where(before, traj.q, -traj.q)
    return float(out) if out.ndim == 0 else out


def phase_integral(traj: WallTrajectory, t: float) -> float:
    """Integral of 1/L(s)^2 for s in [0, t]."""
    t = float(t)
    if t < 0:
        raise ModelError("time must be non-negative")
    if t == 0:
        return 0.0
    L0 = traj.L0
    if traj.variant is Variant.STATIC:
        return t / (L0 * L0)
    if traj.variant is Variant.LINEAR:
        return t / (L0 * wall_length(traj, t))
    if traj.variant is Variant.REVERSAL:
        half = traj.T / 2
        first = min(t, half)
        value = first / (L0 * (L0 + traj.q * first))
        if t > half:
            # contracting branch: d/ds(1/(q L)) = 1/L^2 with L = L0 + q(T - s)
            Lh = L0 + traj.q * half
            Lt = wall_length(traj, t)
            value += (t - half) / (Lh * Lt)
        return value
    return _quad_phase_integral(traj, t)


def _quad_phase_integral(traj: WallTrajectory, t: float) -> float:
    def integrand(s):
        L = float(_raw_length(traj, s))
        return 1.0 / (L * L)

    # split where the turn-on is still changing quickly so quad sees smooth pieces
    knots = [0.0]
    if traj.beta:
        k = 1.0 / traj.beta
        while k < t and len(knots) < 8:
            knots.append(k)
            k *= 8.0
    knots.append(t)
    total = 0.0
    err_total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        val, err = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=PHASE_INTEGRAL_RTOL, limit=200)
        total += val
        err_total += err
    if err_total > PHASE_INTEGRAL_RTOL * abs(total) * 10:
        raise ModelError(
            f"phase integral quadrature did not converge: estimated relative error {err_total / abs(total):.3e}"
        )
    return total


class Domain(str, Enum):
    PHYSICAL = "physical"
    TRANSFORMED = "transformed"


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform grid on [-W/2, W/2] with exact endpoints and exact mirror symmetry."""

    n_points: int
    width: float
    domain: Domain = Domain.TRANSFORMED
    t: float | None = None
    x: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_points < 3:
            raise ModelError("a grid needs at least 3 points")
        if not self.width > 0:
            raise ModelError("grid width must be positive")
        object.__setattr__(self, "domain", Domain(self.domain))
        if self.domain is Domain.PHYSICAL and self.t is None:
            raise ModelError("a physical grid carries its time stamp")
        n = self.n_points
        half = self.width / 2
        # build the right half and mirror it so that x[i] == -x[n-1-i] bit for bit
        k = np.arange(n)
        x = (2 * k - (n - 1)) * (half / (n - 1))
        x = 0.5 * (x - x[::-1])
        x[0], x[-1] = -half, half
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def spacing(self) -> float:
        return self.width / (self.n_points - 1)

    @classmethod
    def transformed(cls, traj: WallTrajectory, n_points: int) -> "Grid":
        return cls(n_points, traj.L0, Domain.TRANSFORMED)

    @classmethod
    def physical(cls, traj: WallTrajectory, t: float, n_points: int) -> "Grid":
        return cls(n_points, wall_length(traj, t), Domain.PHYSICAL, float(t))

    def same_as(self, other: "Grid") -> bool:
        return (
            self.n_points == other.n_points
            and self.width == other.width
            and self.domain is other.domain
            and self.t == other.t
        )

    def __eq__(self, other):
        return isinstance(other, Grid) and self.same_as(other)

    def __hash__(self):
        return hash((self.n_points, self.width, self.domain, self.t))


@dataclass(frozen=True, eq=False)
class WaveField:
    """Complex samples on a grid at time t; the wall samples are pinned to zero."""

    samples: np.ndarray
    grid: Grid
    t: float

    def __post_init__(self):
        s = np.array(self.samples, dtype=complex)
        if s.shape != (self.grid.n_points,):
            raise GridMismatchError(f"expected {self.grid.n_points} samples, got shape {s.shape}")
        s[0] = 0.0
        s[-1] = 0.0
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "t", float(self.t))

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def norm_sq(self) -> float:
        """Trapezoid norm (a diagnostic; wall samples are zero so this is h * sum |psi|^2)."""
        return float(self.grid.spacing * np.sum(np.abs(self.samples) ** 2))

    def replace(self, samples) -> "WaveField":
        return WaveField(samples, self.grid, self.t)

    def __add__(self, other: "WaveField") -> "WaveField":
        _check_compatible(self, other)
        return self.replace(self.samples + other.samples)

    def __sub__(self, other: "WaveField") -> "WaveField":
        _check_compatible(self, other)
        return self.replace(self.samples - other.samples)

    def __mul__(self, scalar) -> "WaveField":
        return self.replace(self.samples * scalar)

    __rmul__ = __mul__


class Parity(str, Enum):
    EVEN = "even"
    ODD = "odd"


@dataclass(frozen=True)
class BasisIndex:
    n: int
    parity: Parity = Parity.EVEN

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise ModelError(f"basis index must be a non-negative integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "parity", Parity(self.parity))

    @property
    def wavenumber_factor(self) -> int:
        """Integer k such that the fixed-wall mode is cos or sin of k*pi*x/L."""
        return 2 * self.n + 1 if self.parity is Parity.EVEN else 2 * (self.n + 1)


def eigenstate(idx: BasisIndex, L: float, grid: Grid, t: float | None = None) -> WaveField:
    """Fixed-wall eigenfunction of a box of width L sampled on ``grid``."""
    if not np.isclose(grid.width, L, rtol=1e-14, atol=0):
        raise GridMismatchError(f"grid spans width {grid.width}, box has width {L}")
    k = idx.wavenumber_factor * math.pi / L
    amp = math.sqrt(2.0 / L)
    x = grid.x
    values = amp * (np.cos(k * x) if idx.parity is Parity.EVEN else np.sin(k * x))
    if t is None:
        t = grid.t if grid.t is not None else 0.0
    return WaveField(values, grid, t)


def eigenvalue(idx: BasisIndex, L: float, params: PhysicalParams = PhysicalParams()) -> float:
    if not L > 0:
        raise ModelError("box width must be positive")
    k = idx.wavenumber_factor
    return k * k * params.hbar ** 2 * math.pi ** 2 / (2 * params.m * L * L)


def _check_compatible(a: WaveField, b: WaveField):
    if not a.grid.same_as(b.grid):
        raise GridMismatchError("fields live on different grids")
    if a.t != b.t:
        raise GridMismatchError(f"fields carry different times ({a.t} vs {b.t})")


def inner_product(a: WaveField, b: WaveField) -> complex:
    """Composite Simpson estimate of the integral of conj(a) * b."""
    _check_compatible(a, b)
    integrand = np.conj(a.samples) * b.samples
    return complex(integrate.simpson(integrand, dx=a.grid.spacing))


def trapezoid_norm_sq(field_: WaveField) -> float:
    return field_.norm_sq()
