"""Compiled inner loops of the Cayley propagator.

Every function here is plain Python over scalars and arrays; ``njit`` compiles
it when numba is available. ``advance`` is the hot loop: it applies

    (I - i ck D2 - eps S) x_new = (I + i ck D2 + eps S) x

per step, where ck is fixed by a constant transformed-time increment and eps
follows the wall velocity. LU factors are reused until eps drifts by more than
a tolerance, measured through the infinity norm of S.

Reused factors carry a fixed rounding error, which makes every step lose norm
by the same tiny amount (about 1e-16). One round of iterative refinement per
step against the exact band turns that bias into unbiased roundoff.
"""
import math

import numpy as np

from ._accel import njit

STATIC, LINEAR, SMOOTH, REVERSAL = 0, 1, 2, 3


@njit
def length(code, L0, q, beta, T, t):
    if code == STATIC:
        return L0
    if code == LINEAR:
        return L0 + q * t
    if code == SMOOTH:
        return L0 - q * t * math.expm1(-beta * t)
    if t <= 0.5 * T:
        return L0 + q * t
    return L0 + q * (T - t)


@njit
def velocity(code, L0, q, beta, T, t):
    """dL/dt; for the reversal law the branch is chosen by t < T/2 (steps never straddle it)."""
    if code == STATIC:
        return 0.0
    if code == LINEAR:
        return q
    if code == SMOOTH:
        e = math.exp(-beta * t)
        return -q * math.expm1(-beta * t) + q * beta * t * e
    if t < 0.5 * T:
        return q
    return -q


@njit
def step_for(code, L0, q, beta, T, t, dtau):
    """Step dt with dt * (L0 / L(t + dt/2))^2 == dtau, by fixed-point iteration."""
    L = length(code, L0, q, beta, T, t)
    dt = dtau * (L / L0) ** 2
    for _ in range(60):
        Lm = length(code, L0, q, beta, T, t + 0.5 * dt)
        new = dtau * (Lm / L0) ** 2
        if abs(new - dt) <= 1e-16 * new:
            return new
        dt = new
    return dt


MAX_HALF_WIDTH = 3


@njit
def factor(D2, S, ck, eps, lower, upper, dinv, band):
    """Band LU (no pivoting) of A = I - i ck D2 - eps S.

    A is also stored in ``band`` (n, 2 MAX_HALF_WIDTH + 1), centred and
    zero-padded, for the refinement residual.

    A's Hermitian part is the identity, so elimination without pivoting is
    stable. ``lower`` and ``upper`` always have MAX_HALF_WIDTH columns; slots
    outside the band (or outside the matrix) stay zero so the sweeps need no
    bounds checks.
    """
    n, width = D2.shape
    p = width // 2
    W = np.empty((n, width), dtype=np.complex128)
    for i in range(n):
        for j in range(width):
            a = -1j * ck * D2[i, j] - eps * S[i, j]
            if j == p:
                a += 1.0
            W[i, j] = a
    band[:, :] = 0.0
    shift = MAX_HALF_WIDTH - p
    for i in range(n):
        for j in range(width):
            if 0 <= i + j - p < n:
                band[i, shift + j] = W[i, j]
    lower[:, :] = 0.0
    upper[:, :] = 0.0
    for i in range(n):
        dinv[i] = 1.0 / W[i, p]
        for r in range(1, p + 1):
            row = i + r
            if row >= n:
                break
            l = W[row, p - r] * dinv[i]
            lower[row, r - 1] = l
            for c in range(1, p + 1):
                if i + c >= n:
                    break
                W[row, p - r + c] -= l * W[i, p + c]
        for c in range(1, p + 1):
            if i + c < n:
                upper[i, c - 1] = W[i, p + c]


@njit
def _cayley_pair(lower, upper, dinv, band, X, U, work, b, c, refine):
    """Cayley step x <- A^{-1}(2I - A) x = 2 A^{-1} x - x for columns b and c of X.

    The two columns are interleaved for instruction-level parallelism; a single
    column is handled with c == b. U and work carry three zero rows of padding
    on each side. With ``refine`` the residual x - A u is formed inside the
    forward sweep of the correction solve.
    """
    n = X.shape[0]
    h = MAX_HALF_WIDTH
    a1 = a2 = a3 = 0j
    e1 = e2 = e3 = 0j
    for i in range(n):
        l0 = lower[i, 0]
        l1 = lower[i, 1]
        l2 = lower[i, 2]
        u = X[i, b] - l1 * a2 - l2 * a3 - l0 * a1
        v = X[i, c] - l1 * e2 - l2 * e3 - l0 * e1
        work[i + h, b] = u
        work[i + h, c] = v
        a3, a2, a1 = a2, a1, u
        e3, e2, e1 = e2, e1, v
    a1 = a2 = a3 = 0j
    e1 = e2 = e3 = 0j
    for i in range(n - 1, -1, -1):
        u0 = upper[i, 0]
        u1 = upper[i, 1]
        u2 = upper[i, 2]
        d = dinv[i]
        u = (work[i + h, b] - u1 * a2 - u2 * a3 - u0 * a1) * d
        v = (work[i + h, c] - u1 * e2 - u2 * e3 - u0 * e1) * d
        U[i + h, b] = u
        U[i + h, c] = v
        a3, a2, a1 = a2, a1, u
        e3, e2, e1 = e2, e1, v
    if refine:
        a1 = a2 = a3 = 0j
        e1 = e2 = e3 = 0j
        for i in range(n):
            w0 = band[i, 0]
            w1 = band[i, 1]
            w2 = band[i, 2]
            w3 = band[i, 3]
            w4 = band[i, 4]
            w5 = band[i, 5]
            w6 = band[i, 6]
            ru = X[i, b] - (w0 * U[i, b] + w1 * U[i + 1, b] + w2 * U[i + 2, b] + w3 * U[i + 3, b]
                            + w4 * U[i + 4, b] + w5 * U[i + 5, b] + w6 * U[i + 6, b])
            rv = X[i, c] - (w0 * U[i, c] + w1 * U[i + 1, c] + w2 * U[i + 2, c] + w3 * U[i + 3, c]
                            + w4 * U[i + 4, c] + w5 * U[i + 5, c] + w6 * U[i + 6, c])
            l0 = lower[i, 0]
            l1 = lower[i, 1]
            l2 = lower[i, 2]
            u = ru - l1 * a2 - l2 * a3 - l0 * a1
            v = rv - l1 * e2 - l2 * e3 - l0 * e1
            work[i + h, b] = u
            work[i + h, c] = v
            a3, a2, a1 = a2, a1, u
            e3, e2, e1 = e2, e1, v
        a1 = a2 = a3 = 0j
        e1 = e2 = e3 = 0j
        for i in range(n - 1, -1, -1):
            u0 = upper[i, 0]
            u1 = upper[i, 1]
            u2 = upper[i, 2]
            d = dinv[i]
            u = (work[i + h, b] - u1 * a2 - u2 * a3 - u0 * a1) * d
            v = (work[i + h, c] - u1 * e2 - u2 * e3 - u0 * e1) * d
            a3, a2, a1 = a2, a1, u
            e3, e2, e1 = e2, e1, v
            # read both before writing so a single column (c == b) is corrected once
            ub = U[i + h, b] + u
            uc = U[i + h, c] + v
            U[i + h, b] = ub
            U[i + h, c] = uc
    for i in range(n):
        xb = X[i, b]
        xc = X[i, c]
        X[i, b] = 2.0 * U[i + h, b] - xb
        X[i, c] = 2.0 * U[i + h, c] - xc


@njit
def cayley_apply(lower, upper, dinv, band, X, U, work, count, refine):
    """One Cayley step for the first ``count`` columns of X (shape (n, nb))."""
    b = 0
    while b + 1 < count:
        _cayley_pair(lower, upper, dinv, band, X, U, work, b, b + 1, refine)
        b += 2
    if b < count:
        _cayley_pair(lower, upper, dinv, band, X, U, work, b, b, refine)


@njit
def advance(D2, S, X, counts, traj, state, t_end, dtau, ck_unit, snorm, tol, max_steps,
            lower, upper, dinv, band, refine):
    """Step every state column from state[0] toward t_end.

    D2, S      (n_sectors, n, width) real bands per parity sector
    X          (n_sectors, n, nb) complex; the first counts[s] columns of sector s are live
    state      [t, eps_ref, ck_ref, factored_flag]; updated in place
    ck_unit    ck per unit transformed time (hbar / 4m)
    band       (n_sectors, n, 2 MAX_HALF_WIDTH + 1) complex; receives A at each factorization
    Returns (steps taken, factorizations performed). Stops early after max_steps.
    """
    code = int(traj[0])
    L0, q, beta, T = traj[1], traj[2], traj[3], traj[4]
    n_sectors = D2.shape[0]
    work = np.zeros((X.shape[1] + 6, X.shape[2]), dtype=np.complex128)
    U = np.zeros((X.shape[1] + 6, X.shape[2]), dtype=np.complex128)
    t = state[0]
    steps = 0
    factorizations = 0
    while steps < max_steps:
        remaining = t_end - t
        if remaining <= 0.0:
            break
        dt = step_for(code, L0, q, beta, T, t, dtau)
        last = False
        if dt >= remaining * (1.0 - 1e-12):
            dt = remaining
            last = True
        tm = t + 0.5 * dt
        Lm = length(code, L0, q, beta, T, tm)
        # regular steps share ck exactly so the factorization can be reused
        ck = ck_unit * dt * (L0 / Lm) ** 2 if last else ck_unit * dtau
        eps = 0.5 * dt * velocity(code, L0, q, beta, T, tm) / Lm
        if state[3] == 0.0 or ck != state[2] or abs(eps - state[1]) * snorm > tol:
            for s in range(n_sectors):
                if counts[s] > 0:
                    factor(D2[s], S[s], ck, eps, lower[s], upper[s], dinv[s], band[s])
            state[1] = eps
            state[2] = ck
            state[3] = 1.0
            factorizations += 1
        for s in range(n_sectors):
            if counts[s] > 0:
                cayley_apply(lower[s], upper[s], dinv[s], band[s], X[s], U, work, counts[s], refine)
        t = t_end if last else t + dt
        steps += 1
    state[0] = t
    return steps, factorizations
