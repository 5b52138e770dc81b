"""Gaussian-process surrogate with warped stationary kernels.

Kernels are stationary functions of a scaled distance ``r`` between feature
vectors. The features depend on the warp:

* ``"identity"`` uses the low-dimensional point ``y`` itself with one
  lengthscale per coordinate,
* ``"mapped"`` uses its image ``x`` in the hypercube (clamp map or
  back-projection) with a single lengthscale,
* ``"projected"`` uses the distorted projection of that image, again with a
  single lengthscale.

The model has a constant trend estimated by generalized least squares and a
process variance profiled out of the likelihood. All linear algebra works on
the correlation matrix ``R = K / sigma^2`` plus a relative jitter, factorized
once by Cholesky and extended by one row per new observation between refits.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import ConditioningError, InvalidDataError

log = logging.getLogger(__name__)

FAMILIES = ("matern52", "se")
WARPS = ("identity", "mapped", "projected")

JITTER = 1e-8
MAX_JITTER = 1e-4
N_MULTISTART = 50
N_LOCAL = 3
SIGMA2_BOUNDS = (1e-6, 1e2)
LENGTHSCALE_BOUNDS = (1e-2, 10.0)

_SQRT5 = math.sqrt(5.0)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family, warp and hyperparameters.

    ``lengthscales`` holds one value per feature for the identity warp and a
    single value otherwise; None means not fitted yet.
    """

    family: str = "matern52"
    warp: str = "identity"
    lengthscales: tuple | None = None
    variance: float = 1.0
    jitter: float = JITTER

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"kernel family must be one of {FAMILIES}, got {self.family!r}")
        if self.warp not in WARPS:
            raise ValueError(f"kernel warp must be one of {WARPS}, got {self.warp!r}")
        if self.variance <= 0:
            raise ValueError("variance must be positive")
        if self.lengthscales is not None:
            ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
            if any(v <= 0 for v in ls):
                raise ValueError("lengthscales must be positive")
            object.__setattr__(self, "lengthscales", ls)

    @property
    def isotropic(self) -> bool:
        return self.warp != "identity"


def _corr_from_r2(r2, family):
    if family == "se":
        return np.exp(-r2)
    r = np.sqrt(r2)
    return (1.0 + _SQRT5 * r + (5.0 / 3.0) * r2) * np.exp(-_SQRT5 * r)


def _dcorr_factor(r2, family):
    """``dk/dlog(theta_k) = factor * (delta_k / theta_k)^2``."""
    if family == "se":
        return 2.0 * np.exp(-r2)
    r = np.sqrt(r2)
    return (5.0 / 3.0) * (1.0 + _SQRT5 * r) * np.exp(-_SQRT5 * r)


def _scaled_sqdist(F1, F2, lengthscales):
    ls = np.asarray(lengthscales, dtype=float)
    G1, G2 = F1 / ls, F2 / ls
    r2 = (np.sum(G1 * G1, axis=1)[:, None] + np.sum(G2 * G2, axis=1)[None, :]
          - 2.0 * G1 @ G2.T)
    return np.maximum(r2, 0.0)


def correlation(F1, F2, lengthscales, family="matern52"):
    """Correlation matrix between two sets of feature vectors."""
    F1, F2 = np.atleast_2d(F1), np.atleast_2d(F2)
    return _corr_from_r2(_scaled_sqdist(F1, F2, lengthscales), family)


def warp_features(warp, y, mapping=None, x=None):
    """Feature vectors for the kernel warp.

    ``mapping`` is a :class:`rembo.mappings.Mapping`; ``x`` optionally holds
    precomputed images of ``y`` in the hypercube.
    """
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    if warp == "identity":
        return Y
    if mapping is None:
        raise ValueError(f"warp {warp!r} needs a mapping")
    if warp == "mapped":
        return np.atleast_2d(mapping.to_x(Y)) if x is None else np.atleast_2d(x)
    return np.atleast_2d(mapping.features(Y, x=x))


def kernel_eval(spec: KernelSpec, y, y2, mapping=None) -> float:
    """Covariance ``sigma^2 k(r)`` between two low-dimensional points."""
    F = warp_features(spec.warp, np.vstack([np.atleast_1d(y), np.atleast_1d(y2)]), mapping)
    ls = spec.lengthscales if spec.lengthscales is not None else (1.0,)
    return float(spec.variance * correlation(F[:1], F[1:], ls, spec.family)[0, 0])


def _cholesky(R, jitter):
    """Cholesky of ``R + jitter I`` with tenfold escalation up to MAX_JITTER."""
    n = R.shape[0]
    j = jitter
    while j <= MAX_JITTER * (1 + 1e-12):
        try:
            L = np.linalg.cholesky(R + j * np.eye(n))
        except np.linalg.LinAlgError:
            L = None
        if L is not None and np.min(np.diag(L)) ** 2 >= 0.5 * j:
            if j > jitter:
                log.info("jitter escalated to %.1e", j)
            return L, j
        j *= 10.0
    raise ConditioningError(f"covariance not positive definite with jitter up to {MAX_JITTER}")


@dataclass(frozen=True)
class _Profile:
    L: np.ndarray
    jitter: float
    mu: float
    sigma2: float
    alpha: np.ndarray
    loglik: float


def _profile(R, f, jitter, sigma2_range):
    """Factor ``R``, estimate trend and variance, evaluate the log-likelihood."""
    L, j = _cholesky(R, jitter)
    return _profile_from_factor(L, j, f, sigma2_range=sigma2_range)


def _profile_from_factor(L, jitter, f, sigma2=None, sigma2_range=None):
    """GLS trend and log-likelihood; ``sigma2`` is profiled when not given."""
    n = f.size
    ones = np.ones(n)
    Ri1 = cho_solve((L, True), ones)
    Rif = cho_solve((L, True), f)
    mu = float(ones @ Rif / (ones @ Ri1))
    alpha = Rif - mu * Ri1
    quad = float((f - mu) @ alpha)
    if sigma2 is None:
        lo, hi = sigma2_range
        sigma2 = min(max(quad / n, lo), hi)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    loglik = -0.5 * (quad / sigma2 + logdet + n * math.log(2 * math.pi * sigma2))
    return _Profile(L, jitter, mu, sigma2, alpha, loglik)


def _sigma2_range(f):
    v = float(np.var(f))
    if v <= 0:
        v = 1.0
    return SIGMA2_BOUNDS[0] * v, SIGMA2_BOUNDS[1] * v


class GPModel:
    """Fitted Gaussian process on feature vectors.

    Use :func:`fit` to build one and :meth:`update` to add observations.
    Instances are not modified after construction.

    Attributes
    ----------
    spec : KernelSpec
        Kernel with fitted lengthscales and variance.
    features : ndarray, shape (n, p)
        Warped training inputs.
    y : ndarray, shape (n, d)
        Training inputs in the low-dimensional space.
    f : ndarray, shape (n,)
    mu : float
        Constant trend.
    loglik : float
        Log marginal likelihood at the fitted hyperparameters.
    """

    def __init__(self, spec, y, features, f, profile: _Profile, mapping=None, diameter=None):
        self.spec = replace(spec, variance=profile.sigma2, jitter=profile.jitter)
        self.y = y
        self.features = features
        self.f = f
        self.mapping = mapping
        self.diameter = diameter
        self._p = profile

    @property
    def mu(self) -> float:
        return self._p.mu

    @property
    def loglik(self) -> float:
        return self._p.loglik

    @property
    def factor(self) -> np.ndarray:
        """Lower Cholesky factor of the jittered correlation matrix."""
        return self._p.L

    @property
    def n(self) -> int:
        return self.f.size

    def covariance_matrix(self) -> np.ndarray:
        """``sigma^2 (R + jitter I)``, the matrix the factor represents."""
        R = correlation(self.features, self.features, self.spec.lengthscales, self.spec.family)
        return self.spec.variance * (R + self.spec.jitter * np.eye(self.n))

    def features_of(self, y, x=None):
        return warp_features(self.spec.warp, y, self.mapping, x=x)

    def predict(self, y, x=None):
        """Posterior mean and variance at low-dimensional points ``y``."""
        return self.predict_features(self.features_of(y, x=x))

    def predict_features(self, F):
        """Posterior mean and variance at already-warped inputs."""
        F = np.atleast_2d(F)
        r = correlation(F, self.features, self.spec.lengthscales, self.spec.family)
        mean = self.mu + r @ self._p.alpha
        v = solve_triangular(self._p.L, r.T, lower=True)
        var = self.spec.variance * (1.0 - np.sum(v * v, axis=0))
        return mean, np.maximum(var, 0.0)

    def update(self, y_new, f_new, x_new=None) -> "GPModel":
        """Model with one more observation and the same hyperparameters.

        The Cholesky factor is extended by one row; if that loses positive
        definiteness the whole matrix is refactored with escalated jitter.
        """
        f_new = float(f_new)
        if not math.isfinite(f_new):
            raise InvalidDataError(f"non-finite observation {f_new}")
        y_new = np.atleast_2d(np.asarray(y_new, dtype=float))
        F_new = self.features_of(y_new, x=x_new)
        F = np.vstack([self.features, F_new])
        Y = np.vstack([self.y, y_new])
        f = np.append(self.f, f_new)
        ls, fam, j = self.spec.lengthscales, self.spec.family, self.spec.jitter
        r = correlation(F_new, self.features, ls, fam)[0]
        L0 = self._p.L
        l = solve_triangular(L0, r, lower=True)
        d2 = 1.0 + j - l @ l
        n = f.size
        if d2 >= 0.5 * j:
            L = np.zeros((n, n))
            L[:-1, :-1] = L0
            L[-1, :-1] = l
            L[-1, -1] = math.sqrt(d2)
        else:
            R = correlation(F, F, ls, fam)
            L, j = _cholesky(R, j)
        prof = _profile_from_factor(L, j, f, sigma2=self.spec.variance)
        return GPModel(replace(self.spec, jitter=j), Y, F, f, prof, self.mapping, self.diameter)


def predict(model: GPModel, y, x=None):
    """Posterior mean and variance of ``model`` at ``y``."""
    return model.predict(y, x=x)


def update(model: GPModel, y_new, f_new, x_new=None) -> GPModel:
    """``model`` conditioned on one more observation."""
    return model.update(y_new, f_new, x_new=x_new)


def log_likelihood(log_ls, F, f, family, jitter=JITTER, grad=False, sigma2_range=None):
    """Profiled log marginal likelihood as a function of log-lengthscales.

    The trend and variance are set to their maximum-likelihood values given
    the lengthscales, so by the envelope theorem the gradient only involves
    the correlation matrix:
    ``dL/dlog(theta_k) = alpha^T dR alpha / (2 sigma^2) - tr(R^{-1} dR) / 2``.
    """
    F = np.atleast_2d(F)
    log_ls = np.atleast_1d(np.asarray(log_ls, dtype=float))
    ls = np.exp(log_ls)
    sr = _sigma2_range(f) if sigma2_range is None else sigma2_range
    r2 = _scaled_sqdist(F, F, ls)
    R = _corr_from_r2(r2, family)
    prof = _profile(R, f, jitter, sr)
    if not grad:
        return prof.loglik
    n = f.size
    Rinv = cho_solve((prof.L, True), np.eye(n))
    W = np.outer(prof.alpha, prof.alpha) / prof.sigma2 - Rinv
    fac = _dcorr_factor(r2, family)
    if log_ls.size == 1:
        dR = fac * r2
        g = np.array([0.5 * np.sum(W * dR)])
    else:
        g = np.empty(log_ls.size)
        for k in range(log_ls.size):
            delta = (F[:, k][:, None] - F[:, k][None, :]) / ls[k]
            g[k] = 0.5 * np.sum(W * (fac * delta * delta))
    return prof.loglik, g


def fit(y, f, spec: KernelSpec = KernelSpec(), mapping=None, diameter=None,
        seed=None, optimize=True, features=None, x=None) -> GPModel:
    """Fit a GP by maximum likelihood over the lengthscales.

    Parameters
    ----------
    y : array_like, shape (n, d)
        Low-dimensional inputs.
    f : array_like, shape (n,)
        Observed values, all finite.
    spec : KernelSpec
        Kernel family and warp; its lengthscales (if set) are used as an
        extra warm start, or directly when ``optimize`` is False.
    mapping : Mapping, optional
        Needed for the mapped and projected warps.
    diameter : float, optional
        Diameter of the feature domain setting the lengthscale bounds
        ``[1e-2, 10] * diameter``; defaults to the spread of the features.
    seed : int or Generator, optional
        Drives the space-filling multistart in log-lengthscale space.
    features, x : ndarray, optional
        Precomputed warped inputs or hypercube images.

    Raises
    ------
    InvalidDataError
        On non-finite values of ``f``.
    ConditioningError
        If the correlation matrix stays singular after jitter escalation.
    """
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    f = np.asarray(f, dtype=float).ravel()
    if not np.all(np.isfinite(f)):
        raise InvalidDataError("observations contain non-finite values")
    if Y.shape[0] != f.size:
        raise ValueError("y and f have different lengths")
    F = warp_features(spec.warp, Y, mapping, x=x) if features is None else np.atleast_2d(features)
    p = 1 if spec.isotropic else F.shape[1]
    if diameter is None:
        span = np.ptp(F, axis=0) if F.shape[0] > 1 else np.ones(F.shape[1])
        diameter = float(np.linalg.norm(span)) or 1.0
    lo = math.log(LENGTHSCALE_BOUNDS[0] * diameter)
    hi = math.log(LENGTHSCALE_BOUNDS[1] * diameter)
    sr = _sigma2_range(f)

    if spec.lengthscales is not None:
        warm = np.clip(np.log(np.broadcast_to(spec.lengthscales, (p,))), lo, hi)
    else:
        warm = None
    if not optimize or f.size < 2:
        log_ls = warm if warm is not None else np.full(p, math.log(0.5 * diameter))
    else:
        log_ls = _maximize_likelihood(F, f, spec, p, lo, hi, sr, warm, seed)
    ls = np.exp(log_ls)
    R = correlation(F, F, ls, spec.family)
    prof = _profile(R, f, spec.jitter, sr)
    return GPModel(replace(spec, lengthscales=tuple(ls)), Y, F, f, prof, mapping, diameter)


def _maximize_likelihood(F, f, spec, p, lo, hi, sr, warm, seed):
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    sampler = qmc.LatinHypercube(d=p, seed=rng)
    starts = lo + (hi - lo) * sampler.random(N_MULTISTART)

    def value(t):
        try:
            return log_likelihood(t, F, f, spec.family, spec.jitter, sigma2_range=sr)
        except ConditioningError:
            return -np.inf

    def neg(t):
        try:
            v, g = log_likelihood(t, F, f, spec.family, spec.jitter, grad=True, sigma2_range=sr)
        except ConditioningError:
            return 1e300, np.zeros_like(t)
        return -v, -g

    vals = np.array([value(t) for t in starts])
    order = np.argsort(-vals)
    cands = [starts[i] for i in order[:N_LOCAL]]
    if warm is not None:
        cands.append(warm)
    best_t, best_v = starts[order[0]], vals[order[0]]
    for t0 in cands:
        res = minimize(neg, t0, jac=True, method="L-BFGS-B", bounds=[(lo, hi)] * p)
        if np.isfinite(res.fun) and -res.fun > best_v:
            best_t, best_v = res.x, -res.fun
    return np.asarray(best_t, dtype=float)
