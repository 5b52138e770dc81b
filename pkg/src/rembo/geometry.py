"""Geometric objects in the low-dimensional space R^d.

For an embedding ``(A, B)`` this module provides membership tests for

* the strips ``S_i = {y : |A_i y| <= 1}``,
* their intersection ``I`` and the union ``U`` of all d-fold intersections
  (the parallelotopes ``P_I``), which is where the clamp map is onto its
  image without redundancy,
* the zonotope ``Z = B [-1, 1]^D``, the domain of the back-projection,

along with Monte-Carlo volume estimation, the surface-area density of the
clamp image ``E = clip(A R^d)`` and the pre-image of a point of ``E``.
"""

from __future__ import annotations

import itertools
import logging
import math
import weakref
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import linprog

from .embedding import Embedding
from .errors import NoPreimageError
from .qp import INSIDE, UNDECIDED, solve_backprojection, zonotope_gauge

log = logging.getLogger(__name__)

# facet enumeration for the exact zonotope test stays below this count
MAX_FACET_NORMALS = 5000
# parallelotope enumeration for bounding boxes stays below this count
MAX_PARALLELOTOPES = 200_000
# fixed random directions for the support-function screen
N_SCREEN_DIRECTIONS = 64
N_SCREEN_FACETS = 512
# saturated coordinates of a clamp image are those within this of +-1
BOUNDARY_SLACK = 1e-9


def _as_points(y, d):
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    Y = np.atleast_2d(y)
    if Y.shape[-1] != d:
        raise ValueError(f"expected points of dimension {d}, got {Y.shape[-1]}")
    return Y, single


def _unwrap(result, single):
    return result[0] if single else result


def in_strip(y, emb: Embedding, i: int, tol=1e-12):
    """Membership in the strip ``|A_i y| <= 1``."""
    Y, single = _as_points(y, emb.d)
    return _unwrap(np.abs(Y @ emb.A[i]) <= 1.0 + tol, single)


def in_intersection(y, emb: Embedding, tol=1e-12):
    """Membership in the intersection of all strips, ``||A y||_inf <= 1``."""
    Y, single = _as_points(y, emb.d)
    return _unwrap(np.max(np.abs(Y @ emb.A.T), axis=1) <= 1.0 + tol, single)


def in_union(y, emb: Embedding, tol=1e-12):
    """Membership in the union of parallelotopes.

    A point lies in some ``P_I = {y : |A_I y|_inf <= 1}`` with ``|I| = d``
    iff at least ``d`` strips contain it.
    """
    Y, single = _as_points(y, emb.d)
    count = np.sum(np.abs(Y @ emb.A.T) <= 1.0 + tol, axis=1)
    return _unwrap(count >= emb.d, single)


@dataclass(frozen=True)
class Strip:
    """Slab ``{y : |<a, y>| <= |delta|}`` between two parallel hyperplanes."""

    a: np.ndarray
    delta: float = 1.0

    def contains(self, y, tol=1e-12):
        return np.abs(np.asarray(y, dtype=float) @ self.a) <= abs(self.delta) + tol


@dataclass(frozen=True)
class Parallelotope:
    """Intersection of the ``d`` strips of ``A`` indexed by ``index_set``."""

    index_set: tuple
    rows: np.ndarray

    @classmethod
    def from_embedding(cls, emb: Embedding, index_set) -> "Parallelotope":
        index_set = tuple(int(i) for i in index_set)
        if len(index_set) != emb.d:
            raise ValueError(f"index set must have {emb.d} elements")
        return cls(index_set, emb.A[list(index_set)])

    def contains(self, y, tol=1e-12):
        Y = np.asarray(y, dtype=float)
        return np.max(np.abs(Y @ self.rows.T), axis=-1) <= 1.0 + tol

    def vertices(self) -> np.ndarray:
        """The ``2^d`` corners ``A_I^{-1} s`` for sign vectors ``s``."""
        d = self.rows.shape[0]
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=d)))
        return np.linalg.solve(self.rows, signs.T).T


def strips(emb: Embedding) -> list:
    """The ``D`` strips ``|A_i y| <= 1`` of an embedding."""
    return [Strip(emb.A[i].copy()) for i in range(emb.D)]


def enclosing_box(emb: Embedding) -> np.ndarray:
    """Half-widths of the smallest axis-aligned box containing the zonotope.

    The box is ``prod_i [-r_i, r_i]`` with ``r_i = sum_j |B_ij|``.
    """
    return np.sum(np.abs(emb.B), axis=1)


def zonotope_vertices_bruteforce(emb: Embedding) -> np.ndarray:
    """Images ``B s`` of all ``2^D`` sign vectors (only for small D)."""
    if emb.D > 20:
        raise ValueError("vertex enumeration is limited to D <= 20")
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=emb.D)))
    return signs @ emb.B.T


def _facet_normals(G: np.ndarray) -> np.ndarray | None:
    """Unit normals orthogonal to every (d-1)-subset of generator columns."""
    d, D = G.shape
    if d == 1:
        return np.ones((1, 1))
    if math.comb(D, d - 1) > MAX_FACET_NORMALS:
        return None
    if d == 2:
        N = np.stack([-G[1], G[0]], axis=1)
    else:
        idx = np.array(list(itertools.combinations(range(D), d - 1)))
        sub = np.transpose(G[:, idx], (1, 0, 2))  # (M, d, d-1)
        if d == 3:
            N = np.cross(sub[:, :, 0], sub[:, :, 1])
        else:
            U, _, _ = np.linalg.svd(sub, full_matrices=True)
            N = U[:, :, -1]
    norms = np.linalg.norm(N, axis=1)
    keep = norms > 1e-12
    return N[keep] / norms[keep, None]


def _screen_directions(G, n_random=N_SCREEN_DIRECTIONS, n_facets=N_SCREEN_FACETS):
    """Random unit directions plus normals of randomly chosen facets."""
    d, D = G.shape
    rng = np.random.default_rng(0)
    U = rng.standard_normal((n_random, d))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    if d < 2:
        return U
    idx = np.array([rng.choice(D, d - 1, replace=False) for _ in range(n_facets)])
    sub = np.transpose(G[:, idx], (1, 0, 2))
    N = np.linalg.svd(sub, full_matrices=True)[0][:, :, -1]
    return np.vstack([U, N])


class ZonotopeDomain:
    """Membership oracle for ``Z = B [-1, 1]^D``.

    For small ``d`` and moderate ``D`` the zonotope is stored through its
    facet inequalities ``|n^T y| <= ||B^T n||_1``, which gives an exact and
    fast test. Otherwise membership is decided by the back-projection
    solver, with a linear program for points it leaves undecided.
    """

    def __init__(self, emb: Embedding, tol: float = 1e-9, use_facets: bool = True):
        self.emb = emb
        self.tol = tol
        self.half_widths = enclosing_box(emb)
        self.normals = None
        self.offsets = None
        if use_facets and emb.d <= 3:
            N = _facet_normals(emb.B)
            if N is not None:
                self.normals = N
                self.offsets = np.sum(np.abs(N @ emb.B), axis=1)
        if self.normals is None:
            self._screen = _screen_directions(emb.B)
            self._screen_offsets = np.sum(np.abs(self._screen @ emb.B), axis=1)

    @property
    def has_facets(self) -> bool:
        return self.normals is not None

    def screen(self, Y, tol=None):
        """Cheap test on an (n, d) array: False rows are outside for sure.

        With facet inequalities available the test is exact; otherwise it
        checks the enclosing box and a fixed set of support directions.
        """
        tol = self.tol if tol is None else tol
        ok = np.all(np.abs(Y) <= self.half_widths + tol, axis=1)
        idx = np.flatnonzero(ok)
        if idx.size:
            if self.has_facets:
                N, h = self.normals, self.offsets
            else:
                N, h = self._screen, self._screen_offsets
            ok[idx] = np.all(np.abs(Y[idx] @ N.T) <= h + tol, axis=1)
        return ok

    def contains(self, y, tol=None):
        tol = self.tol if tol is None else tol
        Y, single = _as_points(y, self.emb.d)
        inside = self.screen(Y, tol)
        if not self.has_facets:
            idx = np.flatnonzero(inside)
            if idx.size:
                inside[idx] = self._certified(Y[idx], tol)
        return _unwrap(inside, single)

    def _certified(self, Y, tol):
        res = solve_backprojection(Y, self.emb.B, tol=tol)
        out = res.status == INSIDE
        for k in np.flatnonzero(res.status == UNDECIDED):
            out[k] = zonotope_gauge(Y[k], self.emb.B) <= 1.0 + tol
        return out


_DOMAINS: "weakref.WeakKeyDictionary[Embedding, ZonotopeDomain]" = weakref.WeakKeyDictionary()


def zonotope_domain(emb: Embedding) -> ZonotopeDomain:
    """Cached :class:`ZonotopeDomain` for an embedding."""
    dom = _DOMAINS.get(emb)
    if dom is None:
        dom = ZonotopeDomain(emb)
        _DOMAINS[emb] = dom
    return dom


def in_zonotope(y, emb: Embedding, tol=1e-9):
    """Membership in the zonotope ``B [-1, 1]^D`` up to ``tol``."""
    return zonotope_domain(emb).contains(y, tol=tol)


def _index_sets(D, d):
    if math.comb(D, d) > MAX_PARALLELOTOPES:
        return None
    return np.array(list(itertools.combinations(range(D), d)))


def parallelotope_half_widths(emb: Embedding) -> np.ndarray | None:
    """Bounding half-widths of every parallelotope ``P_I``, shape (M, d).

    ``P_I = A_I^{-1} [-1, 1]^d`` so its box has ``r_k = sum_l |(A_I^{-1})_kl|``.
    Returns None when there are too many index sets to enumerate.
    """
    idx = _index_sets(emb.D, emb.d)
    if idx is None:
        return None
    sub = emb.A[idx]
    dets = np.abs(np.linalg.det(sub))
    sub = sub[dets > 1e-12]
    return np.sum(np.abs(np.linalg.inv(sub)), axis=2)


def union_bounding_box(emb: Embedding) -> np.ndarray:
    """Half-widths of a box containing the union of parallelotopes."""
    hw = parallelotope_half_widths(emb)
    if hw is None:
        raise ValueError("too many parallelotopes to enumerate")
    return np.max(hw, axis=0)


def intersection_bounding_box(emb: Embedding) -> np.ndarray:
    """Half-widths of the exact bounding box of the strip intersection.

    Solves ``max y_k`` subject to ``|A y|_inf <= 1`` for each axis; the set
    is symmetric so the minimum is the negated maximum.
    """
    d = emb.d
    A_ub = np.vstack([emb.A, -emb.A])
    b_ub = np.ones(2 * emb.D)
    out = np.empty(d)
    for k in range(d):
        c = np.zeros(d)
        c[k] = -1.0
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * d, method="highs")
        if res.status != 0:
            raise RuntimeError(f"bounding-box LP failed: {res.message}")
        out[k] = -res.fun
    return out


def clamp_area_density(y, emb: Embedding):
    """Area element of the clamp image at ``y``.

    On the piece where the rows ``J = {i : |A_i y| < 1}`` are unsaturated the
    clamp map is affine with Jacobian ``A_J`` (other rows constant), so the
    d-dimensional area element is ``sqrt(det(A_J^T A_J))``. Points with
    fewer than ``d`` unsaturated rows map to a lower-dimensional face and
    contribute zero.
    """
    Y, single = _as_points(y, emb.d)
    free = np.abs(Y @ emb.A.T) < 1.0
    G = np.einsum("pi,ik,il->pkl", free.astype(float), emb.A, emb.A)
    det = np.linalg.det(G)
    dens = np.sqrt(np.maximum(det, 0.0))
    dens[free.sum(axis=1) < emb.d] = 0.0
    return _unwrap(dens, single)


def clamp_preimage(x, emb: Embedding, tol=1e-8) -> np.ndarray:
    """Return ``y`` in the union of parallelotopes with ``clip(A y) = x``.

    Rows where ``|x_i| < 1`` pin ``A_i y = x_i`` exactly. If at least ``d``
    such rows exist the solution is unique. Otherwise a linear program over
    the saturated rows pushes ``A_i y`` toward the face it must lie on; its
    vertex solution has ``d`` tight rows, hence lies in some ``P_I``.

    Raises
    ------
    NoPreimageError
        If ``x`` is not in the clamp image.
    """
    x = np.asarray(x, dtype=float)
    A = emb.A
    if x.shape != (emb.D,):
        raise ValueError(f"expected a vector of length {emb.D}")
    if np.any(np.abs(x) > 1.0 + tol):
        raise NoPreimageError("point lies outside the hypercube")
    interior = np.abs(x) < 1.0 - BOUNDARY_SLACK
    if interior.sum() >= emb.d:
        y, *_ = np.linalg.lstsq(A[interior], x[interior], rcond=None)
    else:
        y = _saturated_preimage(x, A, interior)
    y = _polish_preimage(x, A, y)
    if np.max(np.abs(np.clip(A @ y, -1.0, 1.0) - x)) > tol:
        raise NoPreimageError("point is not in the image of the clamp map")
    return y


def _saturated_preimage(x, A, interior):
    d = A.shape[1]
    sat = ~interior
    sign = np.sign(x[sat])
    S = sign[:, None] * A[sat]
    # minimize the total overshoot past the faces; a simplex vertex has d tight rows
    res = linprog(S.sum(axis=0), A_ub=-S, b_ub=np.full(S.shape[0], BOUNDARY_SLACK - 1.0),
                  A_eq=A[interior] if interior.any() else None,
                  b_eq=x[interior] if interior.any() else None,
                  bounds=[(None, None)] * d, method="highs-ds")
    if res.status != 0:
        raise NoPreimageError(f"no pre-image found ({res.message})")
    return res.x


def _polish_preimage(x, A, y):
    """Re-solve on the rows that are tight at ``y`` to remove LP round-off."""
    t = A @ y
    interior = np.abs(x) < 1.0 - BOUNDARY_SLACK
    rows = interior | (np.abs(np.abs(t) - 1.0) <= 1e-7)
    if np.linalg.matrix_rank(A[rows]) < A.shape[1]:
        return y
    target = np.where(interior, x, np.sign(x))
    y2, *_ = np.linalg.lstsq(A[rows], target[rows], rcond=None)
    err = lambda v: np.max(np.abs(np.clip(A @ v, -1.0, 1.0) - x))
    return y2 if err(y2) <= err(y) else y


class VolumeEstimate(NamedTuple):
    estimate: float
    stderr: float
    n_samples: int
    hits: int
    degenerate: bool


def _box_bounds(box, d=None):
    if isinstance(box, tuple) and len(box) == 2:
        lo, hi = (np.asarray(b, dtype=float) for b in box)
    else:
        hi = np.asarray(box, dtype=float)
        lo = -hi
    return lo, hi


def mc_volume(indicator: Callable, box, n_samples: int = 100_000, seed=None,
              chunk: int = 65_536) -> VolumeEstimate:
    """Monte-Carlo estimate of ``integral_box f(y) dy``.

    Parameters
    ----------
    indicator : callable
        Maps an ``(n, d)`` array to booleans (volume) or nonnegative weights
        (weighted volume, e.g. an area density).
    box : array_like or (lo, hi)
        Symmetric half-widths or explicit lower and upper corners.
    n_samples : int
    seed : int, SeedSequence or None
        Chunks use independent child streams of this seed.

    Returns
    -------
    VolumeEstimate
        ``estimate = vol(box) * mean(f)`` with standard error
        ``vol(box) * std(f) / sqrt(n)``. ``degenerate`` is set when no
        sample had a nonzero value.
    """
    lo, hi = _box_bounds(box)
    vol = float(np.prod(hi - lo))
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    n_chunks = max(1, math.ceil(n_samples / chunk))
    total = 0.0
    total_sq = 0.0
    hits = 0
    done = 0
    for child in ss.spawn(n_chunks):
        m = min(chunk, n_samples - done)
        rng = np.random.default_rng(child)
        Y = rng.uniform(lo, hi, size=(m, lo.size))
        f = np.asarray(indicator(Y), dtype=float)
        total += f.sum()
        total_sq += np.dot(f, f)
        hits += int(np.count_nonzero(f))
        done += m
    mean = total / done
    var = max(total_sq / done - mean * mean, 0.0)
    degenerate = hits == 0
    if degenerate:
        log.warning("volume estimate has no hits in %d samples", done)
    return VolumeEstimate(vol * mean, vol * math.sqrt(var / done), done, hits, degenerate)
