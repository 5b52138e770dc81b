"""Random embedding matrices and the two elementary projections.

An :class:`Embedding` bundles the random ``D x d`` matrix ``A`` used by the
classical clamp map and the ``d x D`` matrix ``B`` whose rows are an
orthonormal basis of ``Ran(A)``, obtained by Gram-Schmidt on the columns of
``A`` (column order preserved).
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidDimensionError

ROW_MODES = ("gaussian", "sphere")

# exhaustive check of d x d row-submatrices only below this count
MAX_SUBMATRIX_CHECK = 10_000


@dataclass(frozen=True, eq=False)
class Embedding:
    """Pair of matrices defining a random embedding of R^d into R^D.

    Attributes
    ----------
    A : ndarray, shape (D, d)
        Random embedding matrix.
    B : ndarray, shape (d, D)
        Orthonormal basis of ``Ran(A)`` stored as rows, ``B @ B.T = I_d``.
    seed : int or None
        Seed used to draw ``A`` (None for injected matrices).
    row_mode : str
        ``"gaussian"``, ``"sphere"`` or ``"fixed"`` for injected matrices.
    """

    A: np.ndarray
    B: np.ndarray
    seed: int | None = None
    row_mode: str = "gaussian"

    def __post_init__(self):
        for arr in (self.A, self.B):
            arr.setflags(write=False)

    @property
    def D(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    def orthonormality_error(self) -> float:
        """Max-norm deviation of ``B B^T`` from the identity."""
        return float(np.max(np.abs(self.B @ self.B.T - np.eye(self.d))))

    @classmethod
    def from_matrix(cls, A, seed=None, row_mode="fixed") -> "Embedding":
        """Build an embedding from a given ``D x d`` matrix."""
        A = np.array(A, dtype=float)
        if A.ndim == 1:
            A = A[:, None]
        _check_dims(*A.shape)
        Q = gram_schmidt(A)
        return cls(A=A, B=Q.T.copy(), seed=seed, row_mode=row_mode)


def _check_dims(D, d):
    if int(d) != d or int(D) != D:
        raise InvalidDimensionError(f"dimensions must be integers, got D={D}, d={d}")
    if d < 1 or D < 1:
        raise InvalidDimensionError(f"dimensions must be positive, got D={D}, d={d}")
    if d > D:
        raise InvalidDimensionError(f"embedding dimension d={d} exceeds D={D}")


def gram_schmidt(A) -> np.ndarray:
    """Orthonormalize the columns of ``A`` with classical Gram-Schmidt, twice.

    The second pass restores orthogonality lost to cancellation, which keeps
    ``||Q^T Q - I||`` near machine precision even for D in the hundreds.

    Raises
    ------
    InvalidDimensionError
        If the columns are numerically dependent.
    """
    A = np.asarray(A, dtype=float)
    D, d = A.shape
    Q = np.zeros((D, d))
    for k in range(d):
        v = A[:, k].copy()
        for _ in range(2):
            v -= Q[:, :k] @ (Q[:, :k].T @ v)
        nv = np.linalg.norm(v)
        if nv <= 1e-12 * max(1.0, np.linalg.norm(A[:, k])):
            raise InvalidDimensionError("columns of A are linearly dependent")
        Q[:, k] = v / nv
    return Q


def has_full_rank_submatrices(A, threshold=1e-12) -> bool | None:
    """Check that every ``d x d`` row-submatrix of ``A`` is invertible.

    Returns None when the number of submatrices exceeds
    ``MAX_SUBMATRIX_CHECK`` and the check is skipped.
    """
    A = np.asarray(A, dtype=float)
    D, d = A.shape
    if math.comb(D, d) > MAX_SUBMATRIX_CHECK:
        return None
    idx = np.array(list(itertools.combinations(range(D), d)))
    dets = np.linalg.det(A[idx])
    return bool(np.all(np.abs(dets) > threshold))


def sample_embedding(D: int, d: int, seed=None, row_mode: str = "gaussian",
                     max_redraws: int = 10) -> Embedding:
    """Draw a random embedding.

    Parameters
    ----------
    D, d : int
        Ambient and embedding dimensions, ``1 <= d <= D``.
    seed : int, SeedSequence or None
        Anything accepted by :func:`numpy.random.default_rng`.
    row_mode : {"gaussian", "sphere"}
        ``"gaussian"`` draws i.i.d. standard normal entries. ``"sphere"``
        draws rows uniformly on the sphere, all scaled to norm ``sqrt(d/D)``.
    max_redraws : int
        Number of redraws allowed when a small instance fails the
        submatrix-invertibility check (a probability-zero event).
    """
    _check_dims(D, d)
    if row_mode not in ROW_MODES:
        raise ValueError(f"row_mode must be one of {ROW_MODES}, got {row_mode!r}")
    rng = np.random.default_rng(seed)
    for _ in range(max_redraws + 1):
        A = rng.standard_normal((D, d))
        if row_mode == "sphere":
            A *= math.sqrt(d / D) / np.linalg.norm(A, axis=1, keepdims=True)
        if has_full_rank_submatrices(A) is not False:
            break
    else:
        raise InvalidDimensionError("could not draw a matrix with invertible submatrices")
    return Embedding.from_matrix(A, seed=_seed_repr(seed), row_mode=row_mode)


def _seed_repr(seed):
    if seed is None or isinstance(seed, (int, np.integer)):
        return None if seed is None else int(seed)
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1)[0])
    return None


def equal_norm_tight_frame(D: int, d: int, seed=None, max_iter=5000,
                           tol=1e-13) -> Embedding:
    """Embedding whose ``A`` has orthonormal columns and rows of equal norm.

    Alternates between the nearest matrix with orthonormal columns (polar
    factor) and row normalization to ``sqrt(d/D)``, starting from a Gaussian
    draw. The result satisfies both properties to about ``tol``.
    """
    _check_dims(D, d)
    rng = np.random.default_rng(seed)
    target = math.sqrt(d / D)
    A = rng.standard_normal((D, d))
    for _ in range(max_iter):
        A *= target / np.linalg.norm(A, axis=1, keepdims=True)
        U, _, Vt = np.linalg.svd(A, full_matrices=False)
        A = U @ Vt
        if np.max(np.abs(np.linalg.norm(A, axis=1) - target)) < tol:
            break
    return Embedding.from_matrix(A, seed=_seed_repr(seed), row_mode="tight-frame")


def convex_project(x) -> np.ndarray:
    """Coordinatewise clamp onto the hypercube ``[-1, 1]^D``."""
    return np.clip(np.asarray(x, dtype=float), -1.0, 1.0)


def orth_project(x, emb: Embedding) -> np.ndarray:
    """Orthogonal projection ``B^T B x`` onto ``Ran(A)``.

    Accepts a single vector of length D or an array of shape (n, D).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != emb.D:
        raise ValueError(f"expected last dimension {emb.D}, got {x.shape[-1]}")
    return (x @ emb.B.T) @ emb.B


def save_embedding(emb: Embedding, path) -> None:
    """Write ``A`` as plain text, one row per line, 17 significant digits."""
    Path(path).write_text(embedding_to_text(emb))


def embedding_to_text(emb: Embedding) -> str:
    buf = io.StringIO()
    header = f"D={emb.D} d={emb.d} seed={emb.seed} row_mode={emb.row_mode}"
    np.savetxt(buf, emb.A, fmt="%.17g", header=header)
    return buf.getvalue()


def load_embedding(path) -> Embedding:
    """Read an embedding written by :func:`save_embedding`.

    ``B`` is recomputed from ``A``; 17 significant digits round-trip doubles
    exactly, so the reconstruction is bit-identical on the same platform.
    """
    text = Path(path).read_text()
    meta = {}
    first = text.splitlines()[0]
    if first.startswith("#"):
        for tok in first[1:].split():
            k, _, v = tok.partition("=")
            meta[k] = v
    A = np.loadtxt(io.StringIO(text), ndmin=2)
    seed = meta.get("seed")
    seed = None if seed in (None, "None") else int(seed)
    return Embedding.from_matrix(A, seed=seed, row_mode=meta.get("row_mode", "fixed"))
