"""Solvers for the back-projection problem on the hypercube.

For ``y`` in R^d and ``B`` with orthonormal rows, the back-projection is

    x* = argmin ||x - B^T y||^2  subject to  B x = y,  -1 <= x <= 1.

Its KKT conditions give ``x* = clip(B^T w)`` for a multiplier-shifted
``w`` in R^d solving the piecewise-linear equation ``B clip(B^T w) = y``.
That equation is the gradient of the convex, piecewise-quadratic function

    m(w) = sum_j huber(B_j^T w) - <w, y>,   huber(t) = t^2/2 or |t| - 1/2,

which is bounded below exactly when ``y`` lies in the zonotope ``B [-1,1]^D``.
:func:`solve_backprojection` minimizes ``m`` with a regularized semismooth
Newton method and an exact line search, vectorized over many points. Each
point ends with a certificate: a feasible ``x`` (inside), a separating
direction ``u`` with ``<u, y> > ||B^T u||_1`` (outside), or neither
(undecided, handled by :func:`zonotope_gauge`).

:func:`dykstra_backprojection` solves the same problem by Dykstra's
alternating projections; it is slow but shares no code with the Newton path.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

INSIDE = 1
OUTSIDE = 0
UNDECIDED = -1


class BackProjection(NamedTuple):
    x: np.ndarray          # (P, D), NaN rows unless status == INSIDE
    w: np.ndarray          # (P, d) final dual iterate
    status: np.ndarray     # (P,) INSIDE / OUTSIDE / UNDECIDED
    residual: np.ndarray   # (P,) ||B x - y||
    iterations: int


def _line_search(T, V, c, eps):
    """Exact minimization of the merit along ``w + a * delta``, a >= 0.

    ``T = B^T w`` and ``V = B^T delta`` row-wise, ``c = <y, delta>``. The
    directional derivative ``g(a) = sum_j clip(t_j + a v_j) v_j - c`` is
    nondecreasing and piecewise linear with breakpoints where a coordinate
    enters or leaves the band [-1, 1].

    Returns the step, a flag for rays along which ``g`` stays negative, and
    the separation margin ``c - ||V||_1`` (positive means ``y`` is outside).
    """
    P = T.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        a1 = (-1.0 - T) / V
        a2 = (1.0 - T) / V
    moving = V != 0
    lo = np.where(moving, np.minimum(a1, a2), np.inf)
    hi = np.where(moving, np.maximum(a1, a2), -np.inf)
    v2 = V * V
    slope0 = np.sum(np.where((lo <= 0) & (hi > 0), v2, 0.0), axis=1)
    enter = lo > 0
    leave = hi > 0
    pos = np.concatenate([np.where(enter, lo, np.inf), np.where(leave, hi, np.inf)], axis=1)
    dlt = np.concatenate([np.where(enter, v2, 0.0), np.where(leave, -v2, 0.0)], axis=1)
    order = np.argsort(pos, axis=1, kind="stable")
    pos = np.take_along_axis(pos, order, axis=1)
    dlt = np.take_along_axis(dlt, order, axis=1)

    finite = np.isfinite(pos)
    zeros = np.zeros((P, 1))
    prev = np.concatenate([zeros, np.where(finite, pos, 0.0)[:, :-1]], axis=1)
    seg = np.where(finite, pos - prev, 0.0)
    slopes = slope0[:, None] + np.concatenate([zeros, np.cumsum(dlt, axis=1)[:, :-1]], axis=1)
    g0 = np.sum(np.clip(T, -1.0, 1.0) * V, axis=1) - c
    g_end = g0[:, None] + np.cumsum(slopes * seg, axis=1)
    g_start = np.concatenate([g0[:, None], g_end[:, :-1]], axis=1)

    cross = (g_end >= -eps[:, None]) & finite
    bounded = np.any(cross, axis=1)
    k = np.argmax(cross, axis=1)
    rows = np.arange(P)
    s = slopes[rows, k]
    gs = g_start[rows, k]
    with np.errstate(divide="ignore", invalid="ignore"):
        step_in_seg = np.where(s > 0, -gs / s, np.inf)
    alpha = prev[rows, k] + np.minimum(np.maximum(step_in_seg, 0.0), seg[rows, k])
    alpha = np.where(g0 >= -eps, 0.0, alpha)
    bounded |= g0 >= -eps
    margin = c - np.sum(np.abs(V), axis=1)
    return np.where(bounded, alpha, 0.0), ~bounded, margin


def solve_backprojection(Y, B, tol=1e-9, w0=None, max_iter=60, reg=1e-10) -> BackProjection:
    """Back-project a batch of points ``Y`` (shape (P, d)) onto the hypercube.

    Parameters
    ----------
    Y : array_like, shape (P, d) or (d,)
    B : ndarray, shape (d, D), orthonormal rows.
    tol : float
        Feasibility tolerance: a point is reported inside when
        ``||B x - y|| <= tol`` and outside when a separating hyperplane sits
        farther than ``tol`` from it.
    w0 : array_like, optional
        Warm start for the dual variable (defaults to ``Y``, which returns
        ``B^T y`` immediately when that already lies in the hypercube).
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    P, d = Y.shape
    D = B.shape[1]
    W = Y.copy() if w0 is None else np.array(np.atleast_2d(w0), dtype=float)
    status = np.full(P, UNDECIDED, dtype=np.int8)
    residual = np.full(P, np.inf)
    ynorm = np.linalg.norm(Y, axis=1)
    stop_tol = 1e-13 * (1.0 + ynorm)
    eye = reg * np.eye(d)
    active = np.arange(P)
    it = 0
    for it in range(1, max_iter + 1):
        if active.size == 0:
            break
        Wa, Ya = W[active], Y[active]
        T = Wa @ B
        R = Ya - np.clip(T, -1.0, 1.0) @ B.T
        rn = np.linalg.norm(R, axis=1)
        residual[active] = rn
        done = rn <= stop_tol[active]
        status[active[done]] = INSIDE

        # a separating direction from the iterate itself
        wn = np.linalg.norm(Wa, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            sep_w = (np.sum(Wa * Ya, axis=1) - np.sum(np.abs(T), axis=1)) / wn
        out_w = ~done & (wn > 0) & (sep_w > tol)
        status[active[out_w]] = OUTSIDE

        keep = ~(done | out_w)
        active, T, R, Ya, rn = active[keep], T[keep], R[keep], Ya[keep], rn[keep]
        if active.size == 0:
            break
        free = (np.abs(T) < 1.0).astype(float)
        H = (B[None, :, :] * free[:, None, :]) @ B.T + eye
        delta = np.linalg.solve(H, R[:, :, None])[:, :, 0]
        V = delta @ B
        c = np.sum(Ya * delta, axis=1)
        dn = np.linalg.norm(delta, axis=1)
        eps = 1e-14 * dn * (1.0 + ynorm[active])
        # full step when the derivative there already vanishes (active set unchanged)
        g1 = np.sum(np.clip(T + V, -1.0, 1.0) * V, axis=1) - c
        full = np.abs(g1) <= 1e2 * eps
        alpha = np.ones(active.size)
        unbounded = np.zeros(active.size, dtype=bool)
        margin = np.zeros(active.size)
        rest = np.flatnonzero(~full)
        if rest.size:
            alpha[rest], unbounded[rest], margin[rest] = _line_search(T[rest], V[rest], c[rest], eps[rest])

        out_d = unbounded & (margin > tol * dn)
        status[active[out_d]] = OUTSIDE
        # rays that descend forever but separate by less than tol stay undecided
        W[active[~unbounded]] += alpha[~unbounded, None] * delta[~unbounded]
        active = active[~unbounded]

    if active.size:
        T = W[active] @ B
        rn = np.linalg.norm(Y[active] - np.clip(T, -1.0, 1.0) @ B.T, axis=1)
        residual[active] = rn
    near = (status == UNDECIDED) & (residual <= tol)
    status[near] = INSIDE

    X = np.full((P, D), np.nan)
    ins = status == INSIDE
    X[ins] = np.clip(W[ins] @ B, -1.0, 1.0)
    return BackProjection(X, W, status, residual, it)


def zonotope_gauge(y, B) -> float:
    """Gauge of ``y`` with respect to ``B [-1,1]^D`` by linear programming.

    Returns ``min t`` subject to ``B x = y`` and ``|x_j| <= t``. The point
    lies in the zonotope iff the value is at most 1.
    """
    y = np.asarray(y, dtype=float)
    d, D = B.shape
    c = np.zeros(D + 1)
    c[-1] = 1.0
    eye = np.eye(D)
    ones = np.ones((D, 1))
    A_ub = np.block([[eye, -ones], [-eye, -ones]])
    b_ub = np.zeros(2 * D)
    A_eq = np.hstack([B, np.zeros((d, 1))])
    bounds = [(None, None)] * D + [(0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=y, bounds=bounds,
                  method="highs")
    if res.status != 0:
        raise RuntimeError(f"gauge LP failed: {res.message}")
    return float(res.x[-1])


def dykstra_backprojection(Y, B, tol=1e-10, max_iter=10_000):
    """Back-projection by Dykstra's alternating projections.

    Alternates between the hypercube (clamp) and the affine set
    ``{x : B x = y}`` (closed form ``x - B^T (B x - y)``), starting from
    ``B^T y``. Stops when successive iterates move less than ``tol``.

    Returns the iterates clamped to the hypercube, shape (P, D), and the
    number of sweeps used.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    x = Y @ B
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for k in range(1, max_iter + 1):
        u = np.clip(x + p, -1.0, 1.0)
        p = x + p - u
        v = u + q
        x_new = v - (v @ B.T - Y) @ B
        q = v - x_new
        moved = np.max(np.linalg.norm(x_new - x, axis=1))
        x = x_new
        if moved < tol:
            break
    return np.clip(x, -1.0, 1.0), k
