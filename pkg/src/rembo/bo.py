"""Bayesian optimization through a random embedding, and uniform search.

The loop draws an embedding, evaluates a space-filling design in the
low-dimensional domain, then repeatedly maximizes expected improvement of a
GP surrogate and evaluates the objective at the image of the maximizer.
With the back-projection, the acquisition is searched over the enclosing
box of the zonotope and replaced by ``-||y||`` outside the zonotope.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import ndtr
from scipy.stats import qmc

from .benchmarks import name_key
from .embedding import Embedding, sample_embedding
from .errors import ConditioningError, InvalidDataError
from .geometry import zonotope_domain
from .gp import GPModel, KernelSpec, fit
from .mappings import Mapping, gamma_batch

log = logging.getLogger(__name__)

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
# Newton iterations per acquisition batch; undecided candidates are skipped
ACQ_NEWTON_ITER = 20


def ei_from_moments(mean, var, f_min):
    """Closed-form expected improvement below ``f_min``.

    Falls back to ``max(f_min - mean, 0)`` where the standard deviation is
    at most 1e-12.
    """
    mean = np.asarray(mean, dtype=float)
    s = np.sqrt(np.maximum(np.asarray(var, dtype=float), 0.0))
    diff = f_min - mean
    out = np.maximum(diff, 0.0)
    ok = s > 1e-12
    u = diff[ok] / s[ok]
    out[ok] = diff[ok] * ndtr(u) + s[ok] * _INV_SQRT_2PI * np.exp(-0.5 * u * u)
    return np.maximum(out, 0.0)


def expected_improvement(model: GPModel, y, f_min=None, x=None):
    """Expected improvement of the model at points ``y``."""
    f_min = float(np.min(model.f)) if f_min is None else f_min
    mean, var = model.predict(y, x=x)
    return ei_from_moments(mean, var, f_min)


def ei_ext(model: GPModel, y, mapping: Mapping, f_min=None):
    """Expected improvement inside the zonotope, ``-||y||`` outside.

    Returns the values and the back-projections (NaN rows outside).
    """
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    f_min = float(np.min(model.f)) if f_min is None else f_min
    X, inside, _ = gamma_batch(Y, mapping.emb)
    vals = -np.linalg.norm(Y, axis=1)
    if inside.any():
        vals[inside] = expected_improvement(model, Y[inside], f_min, x=X[inside])
    return vals, X


class _Acquisition:
    """Batched acquisition values with warm-started back-projections."""

    def __init__(self, model, mapping, f_min):
        self.model = model
        self.mapping = mapping
        self.f_min = f_min
        self.n_evals = 0
        self.n_outside = 0

    def __call__(self, Y, w0=None):
        self.n_evals += Y.shape[0]
        if self.mapping.kind == "phi":
            vals = expected_improvement(self.model, Y, self.f_min)
            return vals, None, None
        X, inside, W = gamma_batch(Y, self.mapping.emb, w0=w0, exact=False,
                                   max_iter=ACQ_NEWTON_ITER)
        self.n_outside += int(np.count_nonzero(~inside))
        vals = -np.linalg.norm(Y, axis=1)
        if inside.any():
            vals[inside] = expected_improvement(self.model, Y[inside], self.f_min, x=X[inside])
        return vals, X, W


@dataclass
class AcquisitionResult:
    y: np.ndarray
    value: float
    x: np.ndarray | None
    fraction_outside: float
    n_evals: int


def maximize_acquisition(model: GPModel, mapping: Mapping, restarts=None, seed=None,
                         f_min=None, pool_size=None, rounds=30, extra_starts=None
                         ) -> AcquisitionResult:
    """Maximize the acquisition over the mapping's search box.

    A uniform candidate pool is scored and the best ``restarts`` points
    (default ``20 d``) seed a compass search: each round tries a step of
    the current size along every positive and negative coordinate
    direction, moves to the best improvement and halves the step when none
    improves. For the back-projection the result always lies in the
    zonotope; if no candidate does, the best initial-design-style sample is
    returned instead.
    """
    emb = mapping.emb
    d = emb.d
    hw = mapping.half_widths
    rng = np.random.default_rng(seed)
    restarts = 20 * d if restarts is None else int(restarts)
    pool_size = max(1000, 10 * restarts) if pool_size is None else int(pool_size)
    f_min = float(np.min(model.f)) if f_min is None else f_min
    acq = _Acquisition(model, mapping, f_min)

    pool = rng.uniform(-hw, hw, size=(pool_size, d))
    if mapping.kind == "gamma":
        # Z can fill a tiny fraction of its box: add shadows of hypercube samples
        inner = rng.uniform(-1.0, 1.0, size=(pool_size // 4, emb.D)) @ emb.B.T
        pool = np.vstack([pool, inner])
    if extra_starts is not None:
        pool = np.vstack([np.atleast_2d(extra_starts), pool])
    pvals, pX, pW = acq(pool)
    order = np.argsort(-pvals, kind="stable")[:max(1, restarts)]
    S, vals = pool[order].copy(), pvals[order].copy()
    W = None if pW is None else pW[order].copy()
    Xs = None if pX is None else pX[order].copy()

    dirs = np.vstack([np.eye(d), -np.eye(d)]) * hw
    steps = np.full(S.shape[0], 0.1)
    for _ in range(rounds):
        act = np.flatnonzero(steps > 1e-3)
        if act.size == 0:
            break
        C = S[act, None, :] + steps[act, None, None] * dirs[None, :, :]
        C = np.clip(C, -hw, hw).reshape(-1, d)
        w0 = None if W is None else np.repeat(W[act], 2 * d, axis=0)
        cv, cX, cW = acq(C, w0=w0)
        cv = cv.reshape(act.size, 2 * d)
        best = np.argmax(cv, axis=1)
        bv = cv[np.arange(act.size), best]
        better = bv > vals[act]
        moved = act[better]
        flat = np.arange(act.size)[better] * 2 * d + best[better]
        S[moved] = C[flat]
        vals[moved] = bv[better]
        if W is not None:
            W[moved] = cW[flat]
            Xs[moved] = cX[flat]
        steps[act[~better]] *= 0.5

    k = int(np.argmax(vals))
    frac = acq.n_outside / max(acq.n_evals, 1)
    if mapping.kind == "gamma":
        log.debug("acquisition: %.1f%% of evaluations outside the zonotope", 100 * frac)
        if vals[k] < 0:
            inside = np.flatnonzero(pvals >= 0)
            if inside.size:
                j = inside[np.argmax(pvals[inside])]
                return AcquisitionResult(pool[j], float(pvals[j]), pX[j], frac, acq.n_evals)
            y = emb.B @ rng.uniform(-1.0, 1.0, emb.D)
            X, _, _ = gamma_batch(y, emb)
            return AcquisitionResult(y, 0.0, X[0], frac, acq.n_evals)
        return AcquisitionResult(S[k], float(vals[k]), Xs[k], frac, acq.n_evals)
    return AcquisitionResult(S[k], float(vals[k]), None, 0.0, acq.n_evals)


def _greedy_maximin(cands, n, rng):
    """Farthest-point selection of ``n`` rows, starting from a random one."""
    chosen = [int(rng.integers(cands.shape[0]))]
    dmin = cdist(cands, cands[chosen]).ravel()
    for _ in range(n - 1):
        j = int(np.argmax(dmin))
        chosen.append(j)
        dmin = np.minimum(dmin, cdist(cands, cands[j:j + 1]).ravel())
    return cands[chosen]


def initial_design(n0: int, mapping: Mapping, seed=None, n_lhs=50,
                   max_candidates=1_000_000, min_acceptance=1e-3):
    """Space-filling initial points in the mapping's domain.

    For the clamp map the best of ``n_lhs`` Latin hypercube designs under the
    maximin distance criterion is returned. For the back-projection,
    uniform candidates in the enclosing box are filtered by zonotope
    membership and subselected greedily for maximin distance; if fewer than
    ``min_acceptance`` of the candidates fall inside, points ``B x`` with
    ``x`` uniform in the hypercube are used instead.

    Returns
    -------
    Y : ndarray, shape (n0, d)
    info : dict
        ``{"design": "lhs" | "rejection" | "projection", "acceptance": ...}``
    """
    if n0 < 1:
        raise ValueError("n0 must be positive")
    emb = mapping.emb
    d = emb.d
    hw = mapping.half_widths
    rng = np.random.default_rng(seed)
    if mapping.kind == "phi":
        best, best_score = None, -np.inf
        for _ in range(n_lhs):
            U = qmc.LatinHypercube(d=d, seed=rng).random(n0)
            Y = -hw + 2.0 * hw * U
            score = np.min(cdist(Y, Y)[np.triu_indices(n0, 1)]) if n0 > 1 else 0.0
            if score > best_score:
                best, best_score = Y, score
        return best, {"design": "lhs", "acceptance": 1.0}

    dom = zonotope_domain(emb)
    target = max(50 * n0, 1000)
    accepted = []
    n_seen = n_in = 0
    chunk = 20_000
    while n_seen < max_candidates and n_in < target:
        C = rng.uniform(-hw, hw, size=(chunk, d))
        ok = dom.contains(C)
        accepted.append(C[ok])
        n_in += int(ok.sum())
        n_seen += chunk
        if n_seen >= 100_000 and n_in / n_seen < min_acceptance:
            break
    acceptance = n_in / n_seen
    if acceptance < min_acceptance or n_in < n0:
        X = rng.uniform(-1.0, 1.0, size=(target, emb.D))
        cands = X @ emb.B.T
        info = {"design": "projection", "acceptance": acceptance}
    else:
        cands = np.vstack(accepted)
        info = {"design": "rejection", "acceptance": acceptance}
    return _greedy_maximin(cands, n0, rng), info


@dataclass
class RunConfig:
    """Settings of one optimization run.

    ``restarts``, ``pool_size`` and ``acq_rounds`` control the acquisition
    search; ``refit_every`` is the number of iterations between full
    hyperparameter refits (rank-one updates in between).
    """

    d: int
    D: int
    budget: int = 100
    n0: int | None = None
    mapping: str = "gamma"
    kernel: KernelSpec = field(default_factory=KernelSpec)
    seed: int = 0
    restarts: int | None = None
    pool_size: int | None = None
    acq_rounds: int = 30
    refit_every: int = 5
    box_half_width: float | None = None
    row_mode: str = "gaussian"

    def __post_init__(self):
        if self.n0 is None:
            self.n0 = max(4, 2 * self.d)
        if not 1 <= self.n0 < self.budget:
            raise ValueError(f"need 1 <= n0 < budget, got n0={self.n0}, budget={self.budget}")


@dataclass
class Incumbent:
    best_y: np.ndarray | None
    best_x: np.ndarray
    best_f: float
    history: np.ndarray


@dataclass
class RunRecord:
    """Per-evaluation trace of one run.

    ``y`` is None for uniform search. ``loglik`` and ``hyper`` describe the
    surrogate that proposed each point (NaN and empty for design points).
    """

    y: np.ndarray | None
    x: np.ndarray
    f: np.ndarray
    best_f: np.ndarray
    wall: np.ndarray
    loglik: np.ndarray
    hyper: list
    meta: dict
    status: str = "ok"
    message: str = ""

    def __len__(self):
        return self.f.size


def derive_seed(seed: int, *parts) -> np.random.SeedSequence:
    """Child seed of ``seed`` named by strings or integers."""
    ent = [int(seed)] + [name_key(p) if isinstance(p, str) else int(p) for p in parts]
    return np.random.SeedSequence(ent)


def embedding_for(config: RunConfig) -> Embedding:
    """The embedding of a run; shared by every method using the same seed."""
    ss = derive_seed(config.seed, "embedding", config.d, config.D)
    return sample_embedding(config.D, config.d, seed=ss, row_mode=config.row_mode)


def _finish(ys, xs, fs, walls, ll, hyper, meta, status="ok", message=""):
    f = np.asarray(fs, dtype=float)
    best = np.minimum.accumulate(f) if f.size else f
    Y = None if ys is None else np.asarray(ys, dtype=float).reshape(len(fs), -1)
    X = np.asarray(xs, dtype=float).reshape(len(fs), -1)
    rec = RunRecord(Y, X, f, best, np.asarray(walls), np.asarray(ll, dtype=float),
                    list(hyper), meta, status, message)
    if f.size:
        k = int(np.argmin(f))
        inc = Incumbent(None if Y is None else Y[k], X[k], float(f[k]), best)
    else:
        inc = Incumbent(None, np.empty(0), math.inf, best)
    return inc, rec


def _evaluate(objective, x):
    v = float(objective(x))
    if not math.isfinite(v):
        raise InvalidDataError(f"objective returned {v}")
    return v


def rembo_run(config: RunConfig, objective, emb: Embedding | None = None):
    """Optimize ``objective`` over ``[-1, 1]^D`` through a random embedding.

    Exactly ``config.budget`` evaluations are made unless the objective
    returns a non-finite value, in which case the run stops and the record
    carries ``status == "aborted"``.

    Returns
    -------
    (Incumbent, RunRecord)
    """
    emb = embedding_for(config) if emb is None else emb
    mapping = Mapping(config.mapping, emb, config.box_half_width)
    spec = config.kernel
    if spec.warp == "identity":
        diameter = float(np.linalg.norm(2.0 * mapping.half_widths))
    else:
        diameter = 2.0 * math.sqrt(config.D)
    t0 = time.perf_counter()
    ys, xs, fs, walls, ll, hyper = [], [], [], [], [], []
    meta = {"method": "rembo", "mapping": config.mapping, "kernel_family": spec.family,
            "kernel_warp": spec.warp, "d": config.d, "D": config.D, "seed": config.seed,
            "n0": config.n0, "budget": config.budget, "embedding_seed": emb.seed,
            "row_mode": emb.row_mode}

    Y0, info = initial_design(config.n0, mapping, seed=derive_seed(config.seed, "design"))
    meta["initial_design"] = info
    X0 = np.atleast_2d(mapping.to_x(Y0))
    try:
        for y, x in zip(Y0, X0):
            fs.append(_evaluate(objective, x))
            ys.append(y)
            xs.append(x)
            walls.append(time.perf_counter() - t0)
            ll.append(math.nan)
            hyper.append("")
        model = fit(np.array(ys), np.array(fs), spec, mapping, diameter,
                    seed=np.random.default_rng(derive_seed(config.seed, "fit", 0)))
        outside = []
        for it in range(config.n0, config.budget):
            acq_seed = derive_seed(config.seed, "acquisition", it)
            best_k = int(np.argmin(fs))
            res = maximize_acquisition(model, mapping, restarts=config.restarts, seed=acq_seed,
                                       pool_size=config.pool_size, rounds=config.acq_rounds,
                                       extra_starts=ys[best_k])
            outside.append(res.fraction_outside)
            y = res.y
            x = res.x if res.x is not None else mapping.to_x(y)
            v = _evaluate(objective, x)
            ys.append(y)
            xs.append(x)
            fs.append(v)
            walls.append(time.perf_counter() - t0)
            ll.append(model.loglik)
            hyper.append(_hyper_string(model))
            if it + 1 == config.budget:
                break
            model = model.update(y, v, x_new=x)
            if (it - config.n0 + 1) % config.refit_every == 0:
                model = fit(model.y, model.f, replace(model.spec, jitter=spec.jitter), mapping,
                            diameter, features=model.features,
                            seed=np.random.default_rng(derive_seed(config.seed, "fit", it)))
        if config.mapping == "gamma":
            meta["mean_fraction_outside"] = float(np.mean(outside)) if outside else 0.0
    except (InvalidDataError, ConditioningError) as exc:
        log.error("run aborted: %s", exc)
        return _finish(ys, xs, fs, walls, ll, hyper, meta, "aborted", str(exc))
    return _finish(ys, xs, fs, walls, ll, hyper, meta)


def _hyper_string(model: GPModel) -> str:
    ls = ";".join(f"{v:.6g}" for v in model.spec.lengthscales)
    return f"ls={ls} var={model.spec.variance:.6g} mu={model.mu:.6g}"


def random_search_run(config: RunConfig, objective):
    """Uniform random search over the hypercube with the same trace layout."""
    rng = np.random.default_rng(derive_seed(config.seed, "random"))
    t0 = time.perf_counter()
    xs, fs, walls = [], [], []
    meta = {"method": "random", "D": config.D, "seed": config.seed, "budget": config.budget}
    try:
        for _ in range(config.budget):
            x = rng.uniform(-1.0, 1.0, config.D)
            fs.append(_evaluate(objective, x))
            xs.append(x)
            walls.append(time.perf_counter() - t0)
    except InvalidDataError as exc:
        return _finish(None, xs, fs, walls, [math.nan] * len(fs), [""] * len(fs), meta,
                       "aborted", str(exc))
    n = len(fs)
    return _finish(None, xs, fs, walls, [math.nan] * n, [""] * n, meta)
