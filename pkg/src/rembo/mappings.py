"""Maps from the low-dimensional search space into the hypercube.

``phi`` is the classical clamp of ``A y``. ``gamma`` is the back-projection:
the point of ``[-1, 1]^D`` closest to ``B^T y`` among those projecting onto
``B^T y``, which is a bijection from the zonotope ``Z`` onto the clamp image.
The two warps turn either map into a feature vector in ``R^D`` whose
distances are used by the projected kernels.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .embedding import Embedding
from .errors import DomainError
from .geometry import _as_points, _unwrap, enclosing_box, zonotope_domain
from .qp import INSIDE, UNDECIDED, dykstra_backprojection, solve_backprojection, zonotope_gauge

log = logging.getLogger(__name__)

MAPPING_KINDS = ("phi", "gamma")


def phi(y, emb: Embedding):
    """Clamp map ``clip(A y)``; accepts one point or an (n, d) array."""
    Y, single = _as_points(y, emb.d)
    return _unwrap(np.clip(Y @ emb.A.T, -1.0, 1.0), single)


def gamma_batch(y, emb: Embedding, tol=1e-9, w0=None, exact=True, max_iter=60):
    """Back-project points, reporting those outside the zonotope.

    With ``exact=False`` points the Newton solver leaves undecided after
    ``max_iter`` iterations are reported outside instead of being settled
    by linear programming; every point reported inside is still certified.

    Returns
    -------
    X : ndarray, shape (n, D)
        Back-projections, NaN rows for points outside ``Z``.
    inside : ndarray of bool, shape (n,)
    W : ndarray, shape (n, d)
        Dual iterates, reusable as warm starts for nearby queries.
    """
    Y, _ = _as_points(y, emb.d)
    n = Y.shape[0]
    X = np.full((n, emb.D), np.nan)
    W = np.array(Y if w0 is None else np.atleast_2d(w0), dtype=float)
    inside = np.zeros(n, dtype=bool)
    cand = np.flatnonzero(zonotope_domain(emb).screen(Y, tol))
    if cand.size == 0:
        return X, inside, W
    res = solve_backprojection(Y[cand], emb.B, tol=tol, w0=W[cand], max_iter=max_iter)
    X[cand], W[cand] = res.x, res.w
    inside[cand] = res.status == INSIDE
    if not exact:
        return X, inside, W
    for k in cand[res.status == UNDECIDED]:
        t = zonotope_gauge(Y[k], emb.B)
        if t > 1.0 + tol:
            continue
        # boundary point: solve at the radial projection onto Z
        yk = Y[k] / max(t, 1.0)
        sub = solve_backprojection(yk, emb.B, tol=tol, max_iter=200)
        if sub.status[0] == INSIDE:
            X[k], W[k] = sub.x[0], sub.w[0]
        else:
            X[k] = dykstra_backprojection(yk, emb.B)[0][0]
        inside[k] = True
    return X, inside, W


def gamma(y, emb: Embedding, tol=1e-9, w0=None):
    """Back-projection of points of the zonotope onto the hypercube.

    Solves ``min ||x - B^T y||`` over ``x`` in ``[-1, 1]^D`` with
    ``B x = y``.

    Raises
    ------
    DomainError
        If any point lies outside the zonotope by more than ``tol``.
    """
    Y, single = _as_points(y, emb.d)
    X, inside, _ = gamma_batch(Y, emb, tol=tol, w0=w0)
    if not np.all(inside):
        bad = Y[np.flatnonzero(~inside)[0]]
        raise DomainError(f"point {bad} lies outside the zonotope")
    return _unwrap(X, single)


def _distort(X, Z):
    zmax = np.max(np.abs(Z), axis=1, keepdims=True)
    Zp = Z / np.maximum(1.0, zmax)
    nz = np.linalg.norm(Zp, axis=1)
    out = Z.copy()
    ok = nz > 0
    if not np.all(ok):
        log.debug("warp at a point with zero projection; returning the projection")
    factor = 1.0 + np.linalg.norm(X[ok] - Zp[ok], axis=1) / nz[ok]
    out[ok] = factor[:, None] * Zp[ok]
    return out


def psi_warp(y, emb: Embedding):
    """Distorted projection of the clamp image, a feature vector in R^D.

    ``z = B^T B phi(y)`` is rescaled into the hypercube as
    ``z' = z / max(1, max|z_i|)`` and stretched by
    ``1 + ||phi(y) - z'|| / ||z'||``, so that points clamped far from the
    embedding plane are pushed apart.
    """
    Y, single = _as_points(y, emb.d)
    X = np.clip(Y @ emb.A.T, -1.0, 1.0)
    Z = (X @ emb.B.T) @ emb.B
    return _unwrap(_distort(X, Z), single)


def psi_prime_warp(y, emb: Embedding, tol=1e-9, x=None):
    """Distorted projection for the back-projection, using ``z = B^T y``.

    ``x`` may carry precomputed back-projections of ``y``.

    Raises
    ------
    DomainError
        If a point lies outside the zonotope.
    """
    Y, single = _as_points(y, emb.d)
    X = gamma(Y, emb, tol=tol) if x is None else np.atleast_2d(x)
    Z = Y @ emb.B
    return _unwrap(_distort(X, Z), single)


@dataclass(frozen=True, eq=False)
class Mapping:
    """A low-dimensional search domain together with its map into X.

    ``kind == "phi"`` searches the box ``[-r, r]^d`` (default
    ``r = sqrt(d)``) through the clamp map. ``kind == "gamma"`` searches the
    zonotope through the back-projection, with the enclosing box as outer
    search box.
    """

    kind: str
    emb: Embedding
    box_half_width: float | None = None

    def __post_init__(self):
        if self.kind not in MAPPING_KINDS:
            raise ValueError(f"mapping must be one of {MAPPING_KINDS}, got {self.kind!r}")

    @property
    def half_widths(self) -> np.ndarray:
        """Half-widths of the box searched by the acquisition optimizer."""
        if self.kind == "phi":
            r = math.sqrt(self.emb.d) if self.box_half_width is None else self.box_half_width
            return np.full(self.emb.d, float(r))
        return enclosing_box(self.emb)

    def contains(self, y):
        Y, single = _as_points(y, self.emb.d)
        if self.kind == "phi":
            return _unwrap(np.all(np.abs(Y) <= self.half_widths, axis=1), single)
        return zonotope_domain(self.emb).contains(Y)

    def to_x(self, y):
        """Map points to the hypercube; raises DomainError outside Z for gamma."""
        if self.kind == "phi":
            return phi(y, self.emb)
        return gamma(y, self.emb)

    def features(self, y, x=None):
        """Projected-kernel features, the matching warp of ``y``."""
        if self.kind == "phi":
            return psi_warp(y, self.emb)
        return psi_prime_warp(y, self.emb, x=x)

