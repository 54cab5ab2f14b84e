"""Density, current, Bohmian velocity and weak momentum values in the physical box."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analytic import NODE_THRESHOLD, NodeError
from .model import BasisIndex, Domain, Parity, PhysicalParams, WallTrajectory, WaveField, wall_length, wall_velocity
from .stencils import derivative, interpolate

DERIVATIVE_ORDER = 4
ROUTE_TOL = 1e-8


class ConsistencyError(ArithmeticError):
    """Two routes to the same quantity disagree beyond tolerance."""


def _require_physical(psi: WaveField):
    if psi.grid.domain is not Domain.PHYSICAL:
        raise ValueError("observables are defined on physical-domain fields")


def density(psi: WaveField) -> np.ndarray:
    _require_physical(psi)
    return np.abs(psi.samples) ** 2


def gradient(psi: WaveField) -> np.ndarray:
    """d psi / dx by fourth-order differences (one-sided next to the walls)."""
    return derivative(psi.samples, psi.grid.spacing, 1, DERIVATIVE_ORDER)


def current(psi: WaveField, params: PhysicalParams = PhysicalParams()) -> np.ndarray:
    """Probability current (hbar/m) Im(conj(psi) dpsi/dx)."""
    _require_physical(psi)
    return params.hbar / params.m * np.imag(np.conj(psi.samples) * gradient(psi))


def current_basis_closed(idx: BasisIndex, traj: WallTrajectory, x, t: float):
    """Current carried by one moving-wall basis state of a linearly moving box."""
    if idx.parity is not Parity.EVEN:
        raise ValueError("closed-form current is given for even states")
    if not traj.is_linear:
        raise ValueError("closed-form current needs constant wall speed")
    L = wall_length(traj, t)
    q = wall_velocity(traj, t)
    x = np.asarray(x, dtype=float)
    out = 2 * q * x * np.cos(math.pi * (2 * idx.n + 1) * x / L) ** 2 / L ** 2
    return float(out) if out.ndim == 0 else out


def point_values(psi: WaveField, x) -> tuple[np.ndarray, np.ndarray]:
    """psi and dpsi/dx at arbitrary points, by six-point interpolation of grid values."""
    _require_physical(psi)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    half = psi.grid.width / 2
    if np.any(np.abs(x) > half):
        raise ValueError(f"point outside the box [-{half}, {half}]")
    x0, h = psi.grid.x[0], psi.grid.spacing
    return interpolate(psi.samples, x0, h, x), interpolate(gradient(psi), x0, h, x)


def _checked(psi: WaveField, x):
    value, slope = point_values(psi, x)
    rho = np.abs(value) ** 2
    if np.any(rho < NODE_THRESHOLD):
        bad = np.atleast_1d(x)[np.argmin(rho)]
        raise NodeError(f"|psi|^2 below {NODE_THRESHOLD:.0e} at x={bad}, t={psi.t}")
    return value, slope, rho


def bohm_velocity(psi: WaveField, x, params: PhysicalParams = PhysicalParams()):
    """Guidance velocity j / |psi|^2 at the given point(s)."""
    value, slope, rho = _checked(psi, x)
    v = params.hbar / params.m * np.imag(np.conj(value) * slope) / rho
    return float(v[0]) if np.ndim(x) == 0 else v


def weak_momentum(psi: WaveField, x, params: PhysicalParams = PhysicalParams()):
    """Real part of the weak value of momentum post-selected at x.

    Computed as m v; the direct form Re(-i hbar psi'/psi) is evaluated from the
    same samples and must agree.
    """
    value, slope, rho = _checked(psi, x)
    via_velocity = params.hbar * np.imag(np.conj(value) * slope) / rho
    direct = np.real(-1j * params.hbar * slope / value)
    gap = np.max(np.abs(via_velocity - direct))
    if gap > ROUTE_TOL:
        raise ConsistencyError(f"weak momentum routes differ by {gap:.3e}")
    return float(via_velocity[0]) if np.ndim(x) == 0 else via_velocity


def light_cone_time(x: float, L0: float, params: PhysicalParams = PhysicalParams()) -> float:
    """Earliest arrival at x of a luminal signal sent from a wall at t = 0."""
    if abs(x) > L0 / 2:
        raise ValueError(f"probe x={x} lies outside the box of width {L0}")
    return (L0 / 2 - abs(x)) / params.c


@dataclass(frozen=True)
class ProbePoint:
    x: float
    t_c: float

    @classmethod
    def at(cls, x: float, L0: float, params: PhysicalParams = PhysicalParams()) -> "ProbePoint":
        if not abs(x) < L0 / 2:
            raise ValueError(f"probe x={x} must lie strictly inside the box")
        return cls(float(x), light_cone_time(x, L0, params))


@dataclass(frozen=True, eq=False)
class ObservableSeries:
    """Time records at one probe; undefined records (near nodes) carry NaN values."""

    probe: ProbePoint
    t: np.ndarray
    density: np.ndarray
    j: np.ndarray
    v: np.ndarray
    re_pw: np.ndarray
    defined: np.ndarray

    @property
    def inside_light_cone(self) -> np.ndarray:
        return self.t >= self.probe.t_c

    def __len__(self):
        return self.t.size


def weak_scan(state_provider, probes, times, params: PhysicalParams = PhysicalParams()) -> list[ObservableSeries]:
    """Evaluate density, current, velocity and Re P_w at every probe and time.

    ``state_provider(t)`` returns the physical field at time t.
    """
    times = np.asarray(times, dtype=float)
    if times.size and (times[0] != 0.0 or np.any(np.diff(times) <= 0)):
        raise ValueError("scan times must start at 0 and increase strictly")
    xs = np.array([p.x for p in probes], dtype=float)
    shape = (len(probes), times.size)
    rho, j, v, pw = (np.full(shape, np.nan) for _ in range(4))
    defined = np.zeros(shape, dtype=bool)
    for k, t in enumerate(times):
        psi = state_provider(t)
        value, slope = point_values(psi, xs)
        r = np.abs(value) ** 2
        flux = params.hbar / params.m * np.imag(np.conj(value) * slope)
        rho[:, k] = r
        j[:, k] = flux
        ok = r >= NODE_THRESHOLD
        defined[:, k] = ok
        if np.any(ok):
            xv = xs[ok]
            v[ok, k] = flux[ok] / r[ok]
            pw[ok, k] = weak_momentum(psi, xv, params)
    return [ObservableSeries(p, times.copy(), rho[i], j[i], v[i], pw[i], defined[i]) for i, p in enumerate(probes)]


def snapshot_provider(fields, rel_tol: float = 1e-9):
    """Wrap precomputed physical fields as a ``state_provider``.

    A request matches the stored snapshot nearest in time when it lies within
    ``rel_tol`` of the smallest spacing between stored times, so times rebuilt
    by arithmetic (``t + dt``) still resolve.
    """
    fields = sorted(fields, key=lambda f: f.t)
    stamps = np.array([f.t for f in fields], dtype=float)
    spacing = np.min(np.diff(stamps)) if len(stamps) > 1 else 1.0
    window = rel_tol * max(spacing, np.finfo(float).tiny)

    def provide(t):
        k = int(np.argmin(np.abs(stamps - float(t))))
        if abs(stamps[k] - float(t)) > window:
            raise KeyError(f"no snapshot stored for t={t}")
        return fields[k]

    return provide


def continuity_residual(state_provider, t: float, delta: float,
                        params: PhysicalParams = PhysicalParams()) -> float:
    """L1 norm over the box of d|psi|^2/dt + dj/dx at time t.

    The time derivative is a central difference over [t - delta, t + delta] at
    fixed physical positions (the grids at t +- delta are interpolated onto the
    grid at t).
    """
    now = state_provider(t)
    _require_physical(now)
    x = now.grid.x

    def rho_at(field):
        # the density vanishes outside the box of that instant
        keep = np.abs(x) <= field.grid.width / 2
        out = np.zeros_like(x)
        out[keep] = np.abs(interpolate(field.samples, field.grid.x[0], field.grid.spacing, x[keep])) ** 2
        return out

    drho = (rho_at(state_provider(t + delta)) - rho_at(state_provider(t - delta))) / (2 * delta)
    dj = derivative(current(now, params), now.grid.spacing, 1, DERIVATIVE_ORDER)
    return float(np.trapezoid(np.abs(drho + dj), dx=now.grid.spacing))


@dataclass(frozen=True)
class BohmPath:
    t: np.ndarray
    x: np.ndarray


def _velocity_cubic(psi: WaveField, x: float, params: PhysicalParams) -> float:
    """Velocity at x by cubic interpolation of nodal velocities on the four nearest nodes."""
    grid = psi.grid
    h = grid.spacing
    i = int(np.clip(math.floor((x - grid.x[0]) / h) - 1, 0, grid.n_points - 4))
    lo, hi = max(0, i - 3), min(grid.n_points, i + 7)
    value = psi.samples[i: i + 4]
    slope = derivative(psi.samples[lo:hi], h, 1, DERIVATIVE_ORDER)[i - lo: i - lo + 4]
    rho = np.abs(value) ** 2
    if np.any(rho < NODE_THRESHOLD):
        raise NodeError(f"trajectory entered a node neighbourhood at x={x}, t={psi.t}")
    vel = params.hbar / params.m * np.imag(np.conj(value) * slope) / rho
    return float(interpolate(vel, grid.x[i], h, [x], width=4)[0])


def bohm_trajectory(state_provider, x0: float, t0: float, t1: float, dt: float,
                    params: PhysicalParams = PhysicalParams()) -> BohmPath:
    """Integrate dx/dt = v(x, t) with classical fourth-order Runge-Kutta."""
    if not dt > 0 or not t1 > t0:
        raise ValueError("need t1 > t0 and dt > 0")
    n = int(math.ceil((t1 - t0) / dt - 1e-12))
    ts = t0 + (t1 - t0) * np.arange(n + 1) / n
    xs = np.empty(n + 1)
    xs[0] = x0

    def vel(x, t):
        psi = state_provider(t)
        half = psi.grid.width / 2
        if not abs(x) < half:
            raise NodeError(f"trajectory reached the wall at x={x}, t={t}")
        return _velocity_cubic(psi, x, params)

    for k in range(n):
        t, x, step = ts[k], xs[k], ts[k + 1] - ts[k]
        k1 = vel(x, t)
        k2 = vel(x + 0.5 * step * k1, t + 0.5 * step)
        k3 = vel(x + 0.5 * step * k2, t + 0.5 * step)
        k4 = vel(x + step * k3, t + step)
        xs[k + 1] = x + step * (k1 + 2 * k2 + 2 * k3 + k4) / 6
    return BohmPath(ts, xs)
