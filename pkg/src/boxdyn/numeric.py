"""Finite-difference propagation of the dilated, fixed-domain Schrodinger equation.

On y in [-L0/2, L0/2] the dilated wavefunction obeys

    i hbar d/dt psi~ = H~ psi~,
    H~ = -(hbar^2 / 2m) (L0/L)^2 d^2/dy^2 + i hbar (Ldot/L) (y d/dy + 1/2),

with Dirichlet walls. The dilation term is discretised in the symmetric form
(Y D1 + D1 Y)/2 with an antisymmetric D1, and the Laplacian with odd wall
reflection, so the discrete H~ is Hermitian and each Cayley step is unitary.

Steps are uniform in transformed time tau = int (L0/L)^2 dt: the kinetic part
of the step matrix is then constant and its LU factors are reused; only the
small dilation coefficient changes, and factors are refreshed when it drifts.
Mirror symmetry of the grid splits every state into even and odd halves that
are stepped as independent systems of half the size.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import lapack

from . import _kernels
from ._accel import backend as default_backend
from .model import (
    Domain,
    Grid,
    GridMismatchError,
    PhysicalParams,
    Variant,
    WallTrajectory,
    WaveField,
    wall_length,
    wall_velocity,
)
from .stencils import (
    band_matvec,
    derivative,
    fold_band,
    gradient_band,
    half_width,
    laplacian_band,
    second_derivative_weights,
)

log = logging.getLogger(__name__)

CFL_LIMIT = 0.5


class PropagationError(RuntimeError):
    """Linear solve failure or loss of unitarity during propagation."""


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PropagatorConfig:
    """Discretisation and stepping controls.

    dt            nominal step in transformed time; None picks cfl / E_max
    n_points      grid size including both walls
    space_order   2, 4 or 6 (the time step is always second order)
    cfl           target for dt * E_max / hbar when dt is None
    refactor_tol  allowed drift of the dilation coefficient times ||S||_inf
    norm_abort    relative norm drift that aborts a run
    chunk_steps   steps between norm checks
    backend       "numba", "numpy" or None for the import-time default
    refine        one round of iterative refinement per step; removes the norm
                  bias that reused LU factors otherwise add (about 1e-16 per step)
    """

    dt: float | None = None
    n_points: int = 4096
    space_order: int = 4
    cfl: float = 0.45
    refactor_tol: float = 1e-15
    norm_abort: float = 1e-6
    chunk_steps: int = 200_000
    backend: str | None = None
    refine: bool = True

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.n_points < 3 + self.space_order:
            raise ConfigError("too few grid points for the stencil")
        if self.space_order not in (2, 4, 6):
            raise ConfigError("space_order must be 2, 4 or 6")
        if not 0 < self.cfl < CFL_LIMIT:
            raise ConfigError(f"cfl target must lie in (0, {CFL_LIMIT})")
        if self.backend not in (None, "numba", "numpy"):
            raise ConfigError(f"unknown backend {self.backend!r}")


def kinetic_max_eigenvalue(grid: Grid, order: int, params: PhysicalParams = PhysicalParams()) -> float:
    """Largest eigenvalue of the discrete kinetic operator at unit scaling (L = L0).

    The reflected Laplacian is diagonalised by sine modes j pi / (N-1), so its
    spectrum is the stencil symbol sampled at those angles.
    """
    w = second_derivative_weights(order)
    theta = np.arange(1, grid.n_points - 1) * math.pi / (grid.n_points - 1)
    symbol = -(w[0] + 2 * sum(w[k] * np.cos(k * theta) for k in range(1, w.size)))
    return float(params.hbar ** 2 / (2 * params.m) * symbol.max() / grid.spacing ** 2)


def resolve_dt(cfg: PropagatorConfig, grid: Grid, params: PhysicalParams = PhysicalParams()) -> float:
    e_max = kinetic_max_eigenvalue(grid, cfg.space_order, params)
    if cfg.dt is None:
        return cfg.cfl * params.hbar / e_max
    if cfg.dt * e_max / params.hbar >= CFL_LIMIT:
        raise ConfigError(
            f"dt={cfg.dt} violates dt*E_max/hbar < {CFL_LIMIT} (E_max={e_max:.6g}); "
            f"largest admissible dt is {CFL_LIMIT * params.hbar / e_max:.6g}"
        )
    return cfg.dt


@dataclass(frozen=True, eq=False)
class TransformedOperator:
    """Discrete H~ at one instant, Hermitian in the plain grid inner product."""

    grid: Grid
    kinetic: float
    scaling: float
    t: float
    order: int = 4
    laplacian: np.ndarray = field(init=False, repr=False)
    dilation: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.grid.domain is not Domain.TRANSFORMED:
            raise GridMismatchError("operator lives on the transformed grid")
        n = self.grid.n_points - 2
        h = self.grid.spacing
        object.__setattr__(self, "laplacian", laplacian_band(n, self.order) / (h * h))
        object.__setattr__(self, "dilation", dilation_band(self.grid, self.order))

    @classmethod
    def at(cls, traj: WallTrajectory, t: float, grid: Grid, params: PhysicalParams = PhysicalParams(),
           order: int = 4) -> "TransformedOperator":
        L = wall_length(traj, t)
        kinetic = (traj.L0 / L) ** 2 * params.hbar ** 2 / (2 * params.m)
        scaling = wall_velocity(traj, t, side="right") / L
        return cls(grid, kinetic, scaling, float(t), order)

    def apply(self, samples: np.ndarray, hbar: float = 1.0) -> np.ndarray:
        u = np.asarray(samples, dtype=complex)[1:-1]
        out = np.zeros(self.grid.n_points, dtype=complex)
        out[1:-1] = -self.kinetic * band_matvec(self.laplacian, u) + 1j * hbar * self.scaling * band_matvec(
            self.dilation, u
        )
        return out

    def dilation_apply(self, samples: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.n_points, dtype=complex)
        out[1:-1] = band_matvec(self.dilation, np.asarray(samples, dtype=complex)[1:-1])
        return out


def dilation_band(grid: Grid, order: int) -> np.ndarray:
    """(Y D1 + D1 Y)/2 on interior points: a real antisymmetric band."""
    n = grid.n_points - 2
    p = half_width(order)
    y = grid.x[1:-1]
    g = gradient_band(n, order) / grid.spacing
    band = np.zeros_like(g)
    for j in range(-p, p + 1):
        lo, hi = max(0, -j), min(n, n - j)
        band[lo:hi, p + j] = 0.5 * (y[lo:hi] + y[lo + j: hi + j]) * g[lo:hi, p + j]
    return band


def transformed_rhs(psi_tilde: WaveField, traj: WallTrajectory, t: float,
                    params: PhysicalParams = PhysicalParams(), order: int = 4,
                    closure: str = "one-sided") -> WaveField:
    """H~ psi~ at time t (the value of i hbar d/dt psi~).

    ``closure="one-sided"`` uses one-sided stencils next to the walls and is
    pointwise accurate to the stencil order; ``closure="hermitian"`` applies
    the symmetric operator used by the propagator.
    """
    grid = psi_tilde.grid
    if grid.domain is not Domain.TRANSFORMED or grid.width != traj.L0:
        raise GridMismatchError("transformed_rhs needs the transformed grid of the trajectory")
    if closure == "hermitian":
        op = TransformedOperator.at(traj, t, grid, params, order)
        return psi_tilde.replace(op.apply(psi_tilde.samples, params.hbar))
    if closure != "one-sided":
        raise ValueError(f"unknown closure {closure!r}")
    L = wall_length(traj, t)
    kinetic = (traj.L0 / L) ** 2 * params.hbar ** 2 / (2 * params.m)
    scaling = wall_velocity(traj, t, side="right") / L
    f = psi_tilde.samples
    h = grid.spacing
    d1 = derivative(f, h, 1, order)
    d2 = derivative(f, h, 2, order)
    out = -kinetic * d2 + 1j * params.hbar * scaling * (grid.x * d1 + 0.5 * f)
    return psi_tilde.replace(out)


def transformed_residual(solution, traj: WallTrajectory, t: float, grid: Grid,
                         params: PhysicalParams = PhysicalParams(), order: int = 4,
                         delta: float = 1e-3) -> np.ndarray:
    """i hbar d/dt psi~ - H~ psi~ for a callable ``solution(t) -> WaveField``.

    The time derivative uses a fourth-order central difference with step ``delta``.
    """
    f = lambda s: solution(s).samples
    if t - 2 * delta < 0:
        dfdt = (-25 * f(t) + 48 * f(t + delta) - 36 * f(t + 2 * delta) + 16 * f(t + 3 * delta)
                - 3 * f(t + 4 * delta)) / (12 * delta)
    else:
        dfdt = (f(t - 2 * delta) - 8 * f(t - delta) + 8 * f(t + delta) - f(t + 2 * delta)) / (12 * delta)
    rhs = transformed_rhs(solution(t), traj, t, params, order).samples
    res = 1j * params.hbar * dfdt - rhs
    res[0] = res[-1] = 0.0
    return res


# ----------------------------------------------------------------------------- propagation


@dataclass
class RunStats:
    steps: int = 0
    factorizations: int = 0
    dt_nominal: float = 0.0
    backend: str = ""
    max_norm_drift: float = 0.0


class CayleyPropagator:
    """Advances a batch of transformed-frame states that share one trajectory and grid."""

    def __init__(self, traj: WallTrajectory, grid: Grid, cfg: PropagatorConfig = PropagatorConfig(),
                 params: PhysicalParams = PhysicalParams()):
        if grid.domain is not Domain.TRANSFORMED or grid.width != traj.L0:
            raise GridMismatchError("propagation runs on the transformed grid of the trajectory")
        if grid.n_points != cfg.n_points:
            raise GridMismatchError(f"grid has {grid.n_points} points, config expects {cfg.n_points}")
        self.traj, self.grid, self.cfg, self.params = traj, grid, cfg, params
        self.backend = cfg.backend or default_backend()
        if self.backend == "numba" and default_backend() != "numba":
            raise ConfigError("numba backend requested but numba is unavailable or disabled")
        self.dtau = resolve_dt(cfg, grid, params)
        order = cfg.space_order
        n = grid.n_points - 2
        lap = laplacian_band(n, order) / grid.spacing ** 2
        dil = dilation_band(grid, order)
        self.split = n % 2 == 0
        if self.split:
            self.lap = np.stack([fold_band(lap, 1), fold_band(lap, -1)])
            self.dil = np.stack([fold_band(dil, 1), fold_band(dil, -1)])
        else:
            self.lap, self.dil = lap[None], dil[None]
        self.snorm = float(np.max(np.abs(self.dil).sum(axis=2)))
        n_sec, m, width = self.lap.shape
        self._lower = np.zeros((n_sec, m, _kernels.MAX_HALF_WIDTH), dtype=complex)
        self._upper = np.zeros((n_sec, m, _kernels.MAX_HALF_WIDTH), dtype=complex)
        self._dinv = np.zeros((n_sec, m), dtype=complex)
        self._band = np.zeros((n_sec, m, 2 * _kernels.MAX_HALF_WIDTH + 1), dtype=complex)
        self._lapack = [None] * n_sec
        self._traj_vec = np.array(traj.as_params(), dtype=float)

    # state <-> sector rows
    def _split(self, samples):
        u = np.asarray(samples, dtype=complex)[1:-1]
        if not self.split:
            return [(0, u.copy())]
        m = u.size // 2
        hi, lo = u[m:], u[m - 1::-1]
        return [(0, 0.5 * (hi + lo)), (1, 0.5 * (hi - lo))]

    def _join(self, parts):
        n = self.grid.n_points
        out = np.zeros(n, dtype=complex)
        if not self.split:
            out[1:-1] = parts[0]
            return out
        m = (n - 2) // 2
        even, odd = parts
        out[1 + m: n - 1] = even + odd
        out[1: 1 + m] = (even - odd)[::-1]
        return out

    def _breakpoints(self, t0, t1):
        if self.traj.variant is Variant.REVERSAL:
            half = self.traj.T / 2
            if t0 < half < t1:
                return [half]
        return []

    def run(self, states, t0: float, times) -> tuple[list[list[WaveField]], RunStats]:
        """Propagate ``states`` (transformed fields at t0) and snapshot them at ``times``.

        Returns ``snapshots[k][j]``: state j at times[k].
        """
        times = [float(t) for t in times]
        if any(b <= a for a, b in zip(times, times[1:])) or (times and times[0] < t0):
            raise ValueError("output times must be strictly increasing and not precede t0")
        for s in states:
            if not s.grid.same_as(self.grid) or s.t != t0:
                raise GridMismatchError("every state must live on the propagator grid at t0")

        n_sec, m, _ = self.lap.shape
        columns = [[] for _ in range(n_sec)]
        layout = []
        for j, s in enumerate(states):
            for sec, part in self._split(s.samples):
                if np.any(part):
                    layout.append((j, sec, len(columns[sec])))
                    columns[sec].append(part)
        counts = np.array([len(c) for c in columns], dtype=np.int64)
        X = np.zeros((n_sec, m, max(1, counts.max())), dtype=complex)
        for sec, cols in enumerate(columns):
            for b, col in enumerate(cols):
                X[sec, :, b] = col
        weight = 2.0 if self.split else 1.0
        norms0 = self._norms(X, weight)

        stats = RunStats(dt_nominal=self.dtau, backend=self.backend)
        state = np.array([t0, 0.0, 0.0, 0.0])
        snapshots = []
        targets = sorted(set(times) | set(self._breakpoints(t0, times[-1] if times else t0)))
        for target in targets:
            while state[0] < target:
                steps, facs = self._advance(X, counts, state, target, self.cfg.chunk_steps)
                stats.steps += steps
                stats.factorizations += facs
                self._check_norm(X, norms0, weight, state[0], stats)
            if target in times:
                snapshots.append(self._collect(X, layout, len(states), target))
        return snapshots, stats

    def _collect(self, X, layout, n_states, t):
        n_sec, m, _ = X.shape
        parts = [[np.zeros(m, dtype=complex) for _ in range(n_sec)] for _ in range(n_states)]
        for j, sec, b in layout:
            parts[j][sec] = X[sec, :, b].copy()
        return [WaveField(self._join(p), self.grid, t) for p in parts]

    @staticmethod
    def _norms(X, weight):
        return weight * np.einsum("sib,sib->sb", X.conj(), X).real

    def _check_norm(self, X, norms0, weight, t, stats):
        norms = self._norms(X, weight)
        live = norms0 > 0
        if not np.any(live):
            return
        drift = float(np.max(np.abs(norms[live] - norms0[live]) / norms0[live]))
        stats.max_norm_drift = max(stats.max_norm_drift, drift)
        if not np.all(np.isfinite(norms)) or drift > self.cfg.norm_abort:
            raise PropagationError(
                f"norm drift {drift:.3e} exceeds {self.cfg.norm_abort:.1e} at t={t:.6g} "
                f"after {stats.steps} steps (dtau={self.dtau:.3e}, backend={self.backend})"
            )

    def _advance(self, X, counts, state, target, max_steps):
        ck_unit = self.params.hbar / (4 * self.params.m)
        if self.backend == "numba":
            steps, facs = _kernels.advance(
                self.lap, self.dil, X, counts, self._traj_vec, state, target, self.dtau, ck_unit,
                self.snorm, self.cfg.refactor_tol, max_steps, self._lower, self._upper, self._dinv,
                self._band, self.cfg.refine,
            )
            return int(steps), int(facs)
        return self._advance_numpy(X, counts, state, target, max_steps, ck_unit)

    def _advance_numpy(self, X, counts, state, target, max_steps, ck_unit):
        """Same stepping rule as the compiled kernel, with LAPACK band solves."""
        code, L0, q, beta, T = self._traj_vec
        code = int(code)
        p = self.lap.shape[2] // 2
        m = self.lap.shape[1]
        t = state[0]
        steps = facs = 0
        while steps < max_steps and target - t > 0:
            remaining = target - t
            dt = _kernels.step_for(code, L0, q, beta, T, t, self.dtau)
            last = dt >= remaining * (1 - 1e-12)
            if last:
                dt = remaining
            tm = t + 0.5 * dt
            Lm = _kernels.length(code, L0, q, beta, T, tm)
            ck = ck_unit * dt * (L0 / Lm) ** 2 if last else ck_unit * self.dtau
            eps = 0.5 * dt * _kernels.velocity(code, L0, q, beta, T, tm) / Lm
            if state[3] == 0.0 or ck != state[2] or abs(eps - state[1]) * self.snorm > self.cfg.refactor_tol:
                for s in range(self.lap.shape[0]):
                    band = -1j * ck * self.lap[s] - eps * self.dil[s]
                    band[:, p] += 1.0
                    ab = np.zeros((3 * p + 1, m), dtype=complex)
                    for j in range(-p, p + 1):
                        idx = np.arange(max(0, -j), min(m, m - j))
                        ab[2 * p - j, idx + j] = band[idx, p + j]
                    lu, piv, info = lapack.zgbtrf(ab, p, p)
                    if info != 0:
                        raise PropagationError(f"band factorization failed (info={info}) at t={t}")
                    self._lapack[s] = (lu, piv, band)
                state[1], state[2], state[3] = eps, ck, 1.0
                facs += 1
            for s in range(self.lap.shape[0]):
                c = counts[s]
                if c == 0:
                    continue
                lu, piv, band = self._lapack[s]
                x = X[s, :, :c]
                z, info = lapack.zgbtrs(lu, p, p, x, piv)
                if info == 0 and self.cfg.refine:
                    r = x - np.stack([band_matvec(band, z[:, b]) for b in range(c)], axis=1)
                    dz, info = lapack.zgbtrs(lu, p, p, r, piv)
                    z = z + dz
                if info != 0:
                    raise PropagationError(f"band solve failed (info={info}) at t={t}")
                X[s, :, :c] = 2 * z - x
            t = target if last else t + dt
            steps += 1
        state[0] = t
        return steps, facs


def propagate_series(psi0, traj: WallTrajectory, times, cfg: PropagatorConfig = PropagatorConfig(),
                     params: PhysicalParams = PhysicalParams()):
    """Propagate one field or a list of fields from their common time to every entry of ``times``.

    Returns (snapshots, stats); ``snapshots[k]`` is a field (or list of fields) at times[k].
    """
    single = isinstance(psi0, WaveField)
    states = [psi0] if single else list(psi0)
    prop = CayleyPropagator(traj, states[0].grid, cfg, params)
    snaps, stats = prop.run(states, states[0].t, times)
    if single:
        snaps = [s[0] for s in snaps]
    return snaps, stats


def propagate_numeric(psi0: WaveField, traj: WallTrajectory, t0: float, t1: float,
                      cfg: PropagatorConfig = PropagatorConfig(),
                      params: PhysicalParams = PhysicalParams()) -> WaveField:
    if psi0.t != float(t0):
        raise GridMismatchError(f"initial field is stamped t={psi0.t}, expected t0={t0}")
    snaps, stats = propagate_series(psi0, traj, [t1], cfg, params)
    log.info("propagated to t=%g in %d steps (%d factorizations, %s)", t1, stats.steps,
             stats.factorizations, stats.backend)
    return snaps[0]


# ----------------------------------------------------------------------------- frame maps


def _physical_grid_for(psi_tilde: WaveField, traj: WallTrajectory, t: float) -> Grid:
    return Grid.physical(traj, t, psi_tilde.grid.n_points)


def to_physical(psi_tilde: WaveField, traj: WallTrajectory, t: float, grid_phys: Grid | None = None) -> WaveField:
    """psi(x, t) = sqrt(L0/L) psi~(L0 x / L, t).

    On the scaled image of the transformed grid this is a pure rescaling;
    other physical grids are served by cubic-spline interpolation (error of
    order h^4 times the fourth derivative).
    """
    if psi_tilde.grid.domain is not Domain.TRANSFORMED or psi_tilde.grid.width != traj.L0:
        raise GridMismatchError("input must be on the transformed grid of the trajectory")
    if psi_tilde.t != float(t):
        raise GridMismatchError("field time stamp differs from t")
    L = wall_length(traj, t)
    grid_phys = grid_phys or _physical_grid_for(psi_tilde, traj, t)
    if grid_phys.domain is not Domain.PHYSICAL or not np.isclose(grid_phys.width, L, rtol=1e-14, atol=0):
        raise GridMismatchError(f"physical grid must span L(t)={L}")
    scale = math.sqrt(traj.L0 / L)
    if grid_phys.n_points == psi_tilde.grid.n_points:
        return WaveField(scale * psi_tilde.samples, grid_phys, t)
    y = grid_phys.x * (traj.L0 / L)
    return WaveField(scale * _spline(psi_tilde.grid.x, psi_tilde.samples, y, traj.L0), grid_phys, t)


def to_transformed(psi: WaveField, traj: WallTrajectory, t: float, grid_tilde: Grid | None = None) -> WaveField:
    """Inverse of ``to_physical``: psi~(y) = sqrt(L/L0) psi(L y / L0)."""
    if psi.grid.domain is not Domain.PHYSICAL or psi.t != float(t):
        raise GridMismatchError("input must be a physical field at time t")
    L = wall_length(traj, t)
    if not np.isclose(psi.grid.width, L, rtol=1e-14, atol=0):
        raise GridMismatchError(f"physical grid must span L(t)={L}")
    grid_tilde = grid_tilde or Grid.transformed(traj, psi.grid.n_points)
    scale = math.sqrt(L / traj.L0)
    if grid_tilde.n_points == psi.grid.n_points:
        return WaveField(scale * psi.samples, grid_tilde, t)
    x = grid_tilde.x * (L / traj.L0)
    return WaveField(scale * _spline(psi.grid.x, psi.samples, x, L), grid_tilde, t)


def _spline(x, f, xq, width):
    if np.any(np.abs(xq) > width / 2 * (1 + 1e-13)):
        raise GridMismatchError("interpolation point outside the box")
    spline = CubicSpline(x, f, bc_type="not-a-knot")
    return spline(np.clip(xq, x[0], x[-1]))
