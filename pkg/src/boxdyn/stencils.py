"""Finite-difference stencils on uniform grids with Dirichlet walls.

Two families are provided:

* central stencils with the wall closures needed by a Hermitian propagator
  (odd reflection for the second derivative, plain truncation for the
  antisymmetric first derivative), assembled as banded matrices;
* pointwise-accurate derivatives that switch to one-sided stencils next to the
  walls, used where local accuracy matters more than exact symmetry.
"""
from __future__ import annotations

import math

import numpy as np

SUPPORTED_ORDERS = (2, 4, 6)

# central weights for offsets 0..p (second derivative) and 1..p (first derivative)
_SECOND = {
    2: np.array([-2.0, 1.0]),
    4: np.array([-5 / 2, 4 / 3, -1 / 12]),
    6: np.array([-49 / 18, 3 / 2, -3 / 20, 1 / 90]),
}
_FIRST = {
    2: np.array([1 / 2]),
    4: np.array([2 / 3, -1 / 12]),
    6: np.array([3 / 4, -3 / 20, 1 / 60]),
}


def _check_order(order):
    if order not in SUPPORTED_ORDERS:
        raise ValueError(f"stencil order must be one of {SUPPORTED_ORDERS}, got {order}")


def half_width(order: int) -> int:
    _check_order(order)
    return order // 2


def second_derivative_weights(order: int) -> np.ndarray:
    _check_order(order)
    return _SECOND[order]


def first_derivative_weights(order: int) -> np.ndarray:
    _check_order(order)
    return _FIRST[order]


def fornberg_weights(x0: float, nodes: np.ndarray, derivative: int) -> np.ndarray:
    """Finite-difference weights for the given derivative at x0 (Fornberg's recursion)."""
    nodes = np.asarray(nodes, dtype=float)
    n = nodes.size
    c = np.zeros((n, derivative + 1))
    c1, c4 = 1.0, nodes[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, derivative)
        c2, c5, c4 = 1.0, c4, nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, derivative]


def derivative(f: np.ndarray, h: float, which: int, order: int = 4) -> np.ndarray:
    """First or second derivative of samples ``f`` (walls included).

    Central stencils in the bulk, one-sided stencils of the same order within
    ``order // 2`` points of either end.
    """
    _check_order(order)
    f = np.asarray(f)
    n = f.size
    p = order // 2
    if which == 1:
        w = first_derivative_weights(order)
        width = order + 1
    elif which == 2:
        w = second_derivative_weights(order)
        width = order + 2
    else:
        raise ValueError("only first and second derivatives are provided")
    if n < width + 1:
        raise ValueError(f"need at least {width + 1} samples for order {order}")
    out = np.zeros_like(f)
    core = slice(p, n - p)
    if which == 1:
        for k, wk in enumerate(w, start=1):
            out[core] += wk * (f[p + k: n - p + k] - f[p - k: n - p - k])
        out[core] /= h
    else:
        out[core] = w[0] * f[core]
        for k, wk in enumerate(w[1:], start=1):
            out[core] += wk * (f[p + k: n - p + k] + f[p - k: n - p - k])
        out[core] /= h * h
    nodes = np.arange(width, dtype=float)
    for r in range(p):
        wts = fornberg_weights(float(r), nodes, which) / h ** which
        out[r] = wts @ f[:width]
        out[n - 1 - r] = (-1) ** which * (wts @ f[::-1][:width])
    return out


def laplacian_band(n_interior: int, order: int) -> np.ndarray:
    """Second-derivative matrix on interior points, odd reflection at the walls.

    Banded storage ``B[i, p + j]`` holds entry (i, i + j), |j| <= p, with unit
    spacing. Reflecting the ghost samples as psi(-x) = -psi(x) about each wall
    keeps the matrix symmetric, and the discrete sine transform diagonalises it.
    """
    p = half_width(order)
    w = second_derivative_weights(order)
    n_full = n_interior + 2
    band = np.zeros((n_interior, 2 * p + 1))
    for i in range(n_interior):
        r = i + 1
        for off in range(-p, p + 1):
            f = r + off
            coeff = w[abs(off)]
            if f == 0 or f == n_full - 1:
                continue
            if f < 0:
                f, coeff = -f, -coeff
            elif f > n_full - 1:
                f, coeff = 2 * (n_full - 1) - f, -coeff
            band[i, p + (f - 1 - i)] += coeff
    return band


def gradient_band(n_interior: int, order: int) -> np.ndarray:
    """Antisymmetric first-derivative matrix on interior points (unit spacing).

    Stencil entries that reach the walls or beyond are dropped; the walls hold
    zero and dropping the ghosts keeps the matrix exactly antisymmetric.
    """
    p = half_width(order)
    w = first_derivative_weights(order)
    band = np.zeros((n_interior, 2 * p + 1))
    for k, wk in enumerate(w, start=1):
        band[: n_interior - k, p + k] = wk
        band[k:, p - k] = -wk
    return band


def band_matvec(band: np.ndarray, v: np.ndarray) -> np.ndarray:
    n, width = band.shape
    p = width // 2
    out = band[:, p] * v
    for j in range(1, p + 1):
        out[:-j] += band[:-j, p + j] * v[j:]
        out[j:] += band[j:, p - j] * v[:-j]
    return out


def band_to_dense(band: np.ndarray) -> np.ndarray:
    n, width = band.shape
    p = width // 2
    dense = np.zeros((n, n), dtype=band.dtype)
    for j in range(-p, p + 1):
        idx = np.arange(max(0, -j), min(n, n - j))
        dense[idx, idx + j] = band[idx, p + j]
    return dense


def band_transpose(band: np.ndarray) -> np.ndarray:
    n, width = band.shape
    p = width // 2
    out = np.zeros_like(band)
    for j in range(-p, p + 1):
        idx = np.arange(max(0, -j), min(n, n - j))
        out[idx + j, p - j] = band[idx, p + j]
    return out


def fold_band(band: np.ndarray, sign: int) -> np.ndarray:
    """Restrict a mirror-symmetric banded operator to one parity sector.

    For an interior vector of even length 2m that is even (sign=+1) or odd
    (sign=-1) under reversal, the operator acts on the upper half as the
    returned m x m banded matrix.
    """
    n, width = band.shape
    if n % 2:
        raise ValueError("parity folding needs an even number of interior points")
    p = width // 2
    m = n // 2
    out = np.zeros((m, width), dtype=band.dtype)
    for j in range(-p, p + 1):
        rows = np.arange(m, n)
        cols = rows + j
        keep = (cols >= 0) & (cols < n)
        rows, cols = rows[keep], cols[keep]
        vals = band[rows, p + j]
        u = rows - m
        upper = cols >= m
        v = np.where(upper, cols - m, m - 1 - cols)
        s = np.where(upper, 1.0, float(sign))
        np.add.at(out, (u, p + v - u), s * vals)
    return out


def interpolation_weights(x0: float, h: float, xq: np.ndarray, n: int, width: int = 6):
    """Local Lagrange interpolation on a uniform grid x0 + h*k, k = 0..n-1.

    Returns (start indices, weights) such that f(xq) ~ sum_j w[:, j] f[start + j].
    """
    xq = np.atleast_1d(np.asarray(xq, dtype=float))
    width = min(width, n)
    pos = (xq - x0) / h
    start = np.clip(np.floor(pos).astype(int) - (width // 2 - 1), 0, n - width)
    local = pos - start
    nodes = np.arange(width, dtype=float)
    # barycentric form of the Lagrange basis on equispaced nodes
    diff = local[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-14, rtol=0)
    bary = np.array([(-1.0) ** j / (math.factorial(j) * math.factorial(width - 1 - j)) for j in range(width)])
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = bary[None, :] / diff
        w = raw / raw.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    if np.any(hit):
        w[hit] = exact[hit].astype(float)
    return start, w


def interpolate(f: np.ndarray, x0: float, h: float, xq, width: int = 6) -> np.ndarray:
    """Evaluate samples ``f`` (uniform grid from x0 with spacing h) at ``xq``."""
    f = np.asarray(f)
    start, w = interpolation_weights(x0, h, xq, f.size, width)
    idx = start[:, None] + np.arange(w.shape[1])[None, :]
    return np.sum(w * f[idx], axis=1)
