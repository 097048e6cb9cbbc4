"""Numeric hot loops behind the simulator and the matching engine.

Two interchangeable backends compute the same arrays:

* ``numba``: @njit-compiled loops (default when numba imports cleanly)
* ``numpy``: vectorized fallback, no compilation step

Select explicitly with the ``CELLTRACE_BACKEND`` environment variable
(``numba`` or ``numpy``). Both paths use the identical arithmetic
(``sqrt(dx*dx + dy*dy)``, no fastmath, no reassociation) so a scenario
produces the same floats on either backend. ``benchmarks/bench_kernels.py``
times them side by side.
"""

from __future__ import annotations

import os

import numpy as np

_ENV_FLAG = "CELLTRACE_BACKEND"


def _pick_backend() -> str:
    want = os.environ.get(_ENV_FLAG, "").strip().lower()
    if want == "numpy":
        return "numpy"
    if want == "numba":
        import numba  # noqa: F401  let a bad install fail loudly when forced

        return "numba"
    if want:
        raise ValueError(f"{_ENV_FLAG} must be 'numba' or 'numpy', got {want!r}")
    try:
        import numba  # noqa: F401

        return "numba"
    except ImportError:
        return "numpy"


BACKEND = _pick_backend()


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _np_pair_distances(pos: np.ndarray) -> np.ndarray:
    dx = pos[:, 0][:, None] - pos[:, 0][None, :]
    dy = pos[:, 1][:, None] - pos[:, 1][None, :]
    return np.sqrt(dx * dx + dy * dy)


def _np_blocked_matrix(pos: np.ndarray, obstacles: np.ndarray) -> np.ndarray:
    """blocked[i, j] = segment pos_i -> pos_j strictly crosses any obstacle."""
    n = pos.shape[0]
    blocked = np.zeros((n, n), dtype=np.bool_)
    ax = pos[:, 0][:, None]
    ay = pos[:, 1][:, None]
    bx = pos[:, 0][None, :]
    by = pos[:, 1][None, :]
    for k in range(obstacles.shape[0]):
        cx, cy, ex, ey = obstacles[k]
        o1 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        o2 = (bx - ax) * (ey - ay) - (by - ay) * (ex - ax)
        o3 = (ex - cx) * (ay - cy) - (ey - cy) * (ax - cx)
        o4 = (ex - cx) * (by - cy) - (ey - cy) * (bx - cx)
        blocked |= (o1 * o2 < 0.0) & (o3 * o4 < 0.0)
    return blocked


def _np_polar_distance_batch(rho1, theta1, rho2, theta2) -> np.ndarray:
    sq = rho1 * rho1 + rho2 * rho2 - 2.0 * rho1 * rho2 * np.cos(theta1 - theta2)
    return np.sqrt(np.maximum(sq, 0.0))


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if BACKEND == "numba":
    from numba import njit

    @njit(cache=True)
    def _nb_pair_distances(pos):
        n = pos.shape[0]
        out = np.empty((n, n), dtype=np.float64)
        for i in range(n):
            out[i, i] = 0.0
            for j in range(i + 1, n):
                dx = pos[i, 0] - pos[j, 0]
                dy = pos[i, 1] - pos[j, 1]
                d = np.sqrt(dx * dx + dy * dy)
                out[i, j] = d
                out[j, i] = d
        return out

    @njit(cache=True)
    def _nb_blocked_matrix(pos, obstacles):
        n = pos.shape[0]
        m = obstacles.shape[0]
        blocked = np.zeros((n, n), dtype=np.bool_)
        for i in range(n):
            for j in range(i + 1, n):
                ax, ay = pos[i, 0], pos[i, 1]
                bx, by = pos[j, 0], pos[j, 1]
                hit = False
                for k in range(m):
                    cx, cy, ex, ey = obstacles[k, 0], obstacles[k, 1], obstacles[k, 2], obstacles[k, 3]
                    o1 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
                    o2 = (bx - ax) * (ey - ay) - (by - ay) * (ex - ax)
                    o3 = (ex - cx) * (ay - cy) - (ey - cy) * (ax - cx)
                    o4 = (ex - cx) * (by - cy) - (ey - cy) * (bx - cx)
                    if o1 * o2 < 0.0 and o3 * o4 < 0.0:
                        hit = True
                        break
                if hit:
                    blocked[i, j] = True
                    blocked[j, i] = True
        return blocked

    @njit(cache=True)
    def _nb_polar_distance_batch(rho1, theta1, rho2, theta2):
        n = rho1.shape[0]
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            sq = (
                rho1[i] * rho1[i]
                + rho2[i] * rho2[i]
                - 2.0 * rho1[i] * rho2[i] * np.cos(theta1[i] - theta2[i])
            )
            out[i] = np.sqrt(sq) if sq > 0.0 else 0.0
        return out


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------

def pair_distances(pos: np.ndarray) -> np.ndarray:
    """(n, n) Euclidean distance matrix for an (n, 2) position array."""
    pos = np.ascontiguousarray(pos, dtype=np.float64)
    if BACKEND == "numba":
        return _nb_pair_distances(pos)
    return _np_pair_distances(pos)


def blocked_matrix(pos: np.ndarray, obstacles: np.ndarray) -> np.ndarray:
    """(n, n) bool: line of sight between i and j strictly crosses a wall.

    Obstacles are (m, 4) rows of (x1, y1, x2, y2) segments. Grazing an
    endpoint does not count as a crossing.
    """
    pos = np.ascontiguousarray(pos, dtype=np.float64)
    obstacles = np.ascontiguousarray(obstacles, dtype=np.float64).reshape(-1, 4)
    if obstacles.shape[0] == 0:
        return np.zeros((pos.shape[0], pos.shape[0]), dtype=np.bool_)
    if BACKEND == "numba":
        return _nb_blocked_matrix(pos, obstacles)
    return _np_blocked_matrix(pos, obstacles)


def link_matrix(pos: np.ndarray, obstacles: np.ndarray, ble_range: float) -> tuple[np.ndarray, np.ndarray]:
    """Distance matrix plus the radio-link mask (in range, unobstructed)."""
    dist = pair_distances(pos)
    linked = dist <= ble_range
    np.fill_diagonal(linked, False)
    blocked = blocked_matrix(pos, obstacles)
    linked &= ~blocked
    return dist, linked


def polar_distance_batch(rho1, theta1, rho2, theta2) -> np.ndarray:
    """Vectorized law-of-cosines distance for coordinate pairs sharing a pole."""
    rho1 = np.ascontiguousarray(rho1, dtype=np.float64)
    theta1 = np.ascontiguousarray(theta1, dtype=np.float64)
    rho2 = np.ascontiguousarray(rho2, dtype=np.float64)
    theta2 = np.ascontiguousarray(theta2, dtype=np.float64)
    if BACKEND == "numba":
        return _nb_polar_distance_batch(rho1, theta1, rho2, theta2)
    return _np_polar_distance_batch(rho1, theta1, rho2, theta2)
