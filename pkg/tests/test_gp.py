import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import qmc

from rembo.embedding import sample_embedding
from rembo.errors import ConditioningError, InvalidDataError
from rembo.gp import (JITTER, KernelSpec, _cholesky, _sigma2_range, correlation, fit,
                      kernel_eval, log_likelihood, predict, update, warp_features)
from rembo.mappings import Mapping

from oracles import corr_matrix, gp_posterior_dense, profiled_loglik_dense

FAMILIES = ["se", "matern52"]


def toy_data(n=15, d=2, seed=0):
    rng = np.random.default_rng(seed)
    Y = rng.uniform(-1, 1, size=(n, d))
    f = np.sin(3 * Y[:, 0]) + Y[:, -1] ** 2
    return Y, f


class TestKernel:
    @pytest.mark.parametrize("family", FAMILIES)
    def test_zero_distance(self, family):
        spec = KernelSpec(family=family, lengthscales=(0.3, 0.7), variance=2.5)
        assert kernel_eval(spec, [0.2, 0.1], [0.2, 0.1]) == 2.5

    def test_se_at_one_lengthscale(self):
        spec = KernelSpec(family="se", lengthscales=(0.4,), variance=3.0)
        assert math.isclose(kernel_eval(spec, [0.0], [0.4]), 3.0 * math.exp(-1), rel_tol=1e-14)

    def test_matern_formula(self):
        spec = KernelSpec(family="matern52", lengthscales=(2.0,), variance=1.0)
        r = 0.8 / 2.0
        want = (1 + math.sqrt(5) * r + 5 * r * r / 3) * math.exp(-math.sqrt(5) * r)
        assert math.isclose(kernel_eval(spec, [0.1], [0.9]), want, rel_tol=1e-13)

    def test_mapped_kernel_identifies_shared_images(self, line_emb):
        spec = KernelSpec(family="matern52", warp="mapped", lengthscales=(0.5,), variance=1.7)
        m = Mapping("phi", line_emb)
        assert kernel_eval(spec, [5.0], [6.0], mapping=m) == 1.7

    def test_mapped_kernel_under_back_projection_depends_on_images(self):
        emb = sample_embedding(6, 2, seed=1)
        m = Mapping("gamma", emb)
        spec = KernelSpec(warp="mapped", lengthscales=(0.9,))
        rng = np.random.default_rng(0)
        y1, y2 = (rng.uniform(-1, 1, 6) @ emb.B.T for _ in range(2))
        y1b = y1 + 1e-13
        assert abs(kernel_eval(spec, y1, y2, m) - kernel_eval(spec, y1b, y2, m)) < 1e-10
        F = m.to_x(np.vstack([y1, y2]))
        want = correlation(F[:1], F[1:], (0.9,), "matern52")[0, 0]
        assert math.isclose(kernel_eval(spec, y1, y2, m), want, rel_tol=1e-12)

    @given(st.integers(0, 10_000))
    def test_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        spec = KernelSpec(family=FAMILIES[seed % 2], lengthscales=tuple(rng.uniform(0.1, 2, 3)))
        a, b = rng.standard_normal(3), rng.standard_normal(3)
        assert kernel_eval(spec, a, b) == pytest.approx(kernel_eval(spec, b, a), rel=1e-14)

    def test_correlation_matches_oracle(self):
        rng = np.random.default_rng(3)
        F1, F2 = rng.standard_normal((7, 4)), rng.standard_normal((5, 4))
        ls = rng.uniform(0.3, 2, 4)
        for fam in FAMILIES:
            np.testing.assert_allclose(correlation(F1, F2, ls, fam), corr_matrix(F1, F2, ls, fam),
                                       rtol=1e-12, atol=1e-14)

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            KernelSpec(family="rbf")
        with pytest.raises(ValueError):
            KernelSpec(warp="x")
        with pytest.raises(ValueError):
            KernelSpec(lengthscales=(1.0, -1.0))


class TestFit:
    def test_constant_trend(self):
        model = fit(np.array([[-0.5], [0.5]]), np.array([3.0, 3.0]), seed=0)
        assert model.mu == pytest.approx(3.0, abs=1e-12)

    def test_non_finite(self):
        with pytest.raises(InvalidDataError):
            fit(np.zeros((3, 1)) + [[0], [1], [2]], np.array([1.0, np.nan, 2.0]))

    @pytest.mark.parametrize("family", FAMILIES)
    def test_fitted_likelihood_dominates_multistart(self, family):
        Y, f = toy_data(20, 2, seed=4)
        model = fit(Y, f, KernelSpec(family=family), diameter=2 * math.sqrt(2), seed=9)
        lo, hi = math.log(1e-2 * 2 * math.sqrt(2)), math.log(10 * 2 * math.sqrt(2))
        starts = lo + (hi - lo) * qmc.LatinHypercube(d=2, seed=np.random.default_rng(9)).random(50)
        vals = [log_likelihood(t, Y, f, family) for t in starts]
        assert model.loglik >= max(vals) - 1e-9

    def test_loglik_matches_dense_oracle(self):
        Y, f = toy_data(25, 3, seed=1)
        for fam in FAMILIES:
            ls = np.array([0.4, 0.9, 1.3])
            got = log_likelihood(np.log(ls), Y, f, fam)
            want, s2 = profiled_loglik_dense(Y, f, ls, fam, JITTER)
            lo, hi = _sigma2_range(f)
            assert lo <= s2 <= hi
            assert got == pytest.approx(want, rel=1e-9)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        done = 0
        for k in range(400):
            if done == 20:
                break
            d = 1 + k % 4
            iso = k % 3 == 0
            Y = rng.uniform(-1, 1, size=(12 + k, d))
            f = np.cos(2 * Y).sum(axis=1) + 0.1 * rng.standard_normal(Y.shape[0])
            t = rng.uniform(math.log(0.2), math.log(2.0), 1 if iso else d)
            fam = FAMILIES[k % 2]
            # finite differences are meaningless once the correlation matrix is numerically singular
            if np.linalg.cond(corr_matrix(Y, Y, np.exp(t), fam)) > 1e8:
                continue
            # the clamped variance has a kink where the profiled value hits its bound
            lo, hi = _sigma2_range(f)
            if not 2 * lo <= profiled_loglik_dense(Y, f, np.exp(t), fam, JITTER)[1] <= hi / 2:
                continue
            done += 1
            _, g = log_likelihood(t, Y, f, fam, grad=True)
            h = 1e-5
            fd = np.array([(log_likelihood(t + h * e, Y, f, fam) - log_likelihood(t - h * e, Y, f, fam))
                           / (2 * h) for e in np.eye(t.size)])
            assert np.max(np.abs(g - fd)) <= 1e-4 * max(np.max(np.abs(fd)), 1e-3)
        assert done == 20

    def test_recovers_lengthscale(self):
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            Y = rng.uniform(-1, 1, size=(80, 2))
            K = corr_matrix(Y, Y, np.array([0.5, 0.5]), "se") + 1e-10 * np.eye(80)
            f = np.linalg.cholesky(K) @ rng.standard_normal(80)
            model = fit(Y, f, KernelSpec(family="se"), diameter=2 * math.sqrt(2), seed=seed)
            ls = np.array(model.spec.lengthscales)
            hits += bool(np.all((ls >= 0.25) & (ls <= 1.0)))
        assert hits >= 18

    def test_lengthscale_bounds(self):
        Y, f = toy_data(10, 2)
        model = fit(Y, f, diameter=1.0, seed=0)
        assert all(1e-2 - 1e-12 <= v <= 10 + 1e-12 for v in model.spec.lengthscales)

    def test_projected_warp_is_isotropic(self):
        emb = sample_embedding(10, 2, seed=2)
        m = Mapping("gamma", emb)
        rng = np.random.default_rng(1)
        Y = rng.uniform(-1, 1, size=(12, 10)) @ emb.B.T
        f = np.sum(Y ** 2, axis=1)
        model = fit(Y, f, KernelSpec(warp="projected"), mapping=m, seed=0)
        assert len(model.spec.lengthscales) == 1
        assert model.features.shape == (12, 10)


class TestPredict:
    @pytest.mark.parametrize("family", FAMILIES)
    def test_interpolates(self, family):
        Y, f = toy_data(20, 2, seed=2)
        model = fit(Y, f, KernelSpec(family=family), seed=0)
        mean, var = predict(model, Y)
        # the nugget leaves a residual jitter * (R + jitter I)^-1 (f - mu)
        j = model.spec.jitter
        R = corr_matrix(Y, Y, np.array(model.spec.lengthscales), family) + j * np.eye(20)
        alpha = np.linalg.solve(R, f - model.mu)
        assert np.max(np.abs(mean - f)) <= j * np.max(np.abs(alpha)) + 1e-6 * np.ptp(f)
        assert np.all(var <= 10 * j * model.spec.variance)

    def test_prior_reversion(self):
        Y, f = toy_data(10, 2, seed=3)
        model = fit(Y, f, KernelSpec(family="se", lengthscales=(0.2, 0.2)), optimize=False)
        mean, var = predict(model, np.array([[50.0, 50.0]]))
        assert mean[0] == pytest.approx(model.mu, abs=1e-12)
        assert var[0] == pytest.approx(model.spec.variance, rel=1e-12)

    def test_single_point(self):
        spec = KernelSpec(family="se", lengthscales=(0.7,), variance=1.0)
        model = fit(np.array([[0.3]]), np.array([2.0]), spec, optimize=False)
        y = np.array([[0.9]])
        k = kernel_eval(replace_variance(model.spec), [0.9], [0.3])
        s2 = model.spec.variance
        want = model.mu + k / (s2 * (1 + model.spec.jitter)) * (2.0 - model.mu)
        assert predict(model, y)[0][0] == pytest.approx(want, rel=1e-12)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_matches_dense_solve(self, family):
        Y, f = toy_data(40, 3, seed=5)
        model = fit(Y, f, KernelSpec(family=family), seed=1)
        Ys = np.random.default_rng(7).uniform(-1, 1, size=(30, 3))
        mean, var = predict(model, Ys)
        m2, v2, mu = gp_posterior_dense(Y, f, Ys, np.array(model.spec.lengthscales), family,
                                        model.spec.variance, model.spec.jitter)
        assert model.mu == pytest.approx(mu, abs=1e-8)
        np.testing.assert_allclose(mean, m2, atol=1e-8)
        np.testing.assert_allclose(var, np.maximum(v2, 0), atol=1e-8)

    def test_factor_reconstructs_covariance(self):
        Y, f = toy_data(30, 2, seed=8)
        model = fit(Y, f, seed=0)
        L = model.factor
        R = correlation(model.features, model.features, model.spec.lengthscales, model.spec.family)
        Rj = R + model.spec.jitter * np.eye(30)
        assert np.max(np.abs(L @ L.T - Rj)) <= 1e-8 * np.max(np.abs(Rj))

    def test_factor_diagonal_floor(self):
        rng = np.random.default_rng(0)
        emb = sample_embedding(8, 2, seed=0)
        for warp in ("identity", "mapped", "projected"):
            for kind in ("phi", "gamma"):
                m = Mapping(kind, emb)
                for family in FAMILIES:
                    for _ in range(100):
                        n = int(rng.integers(2, 15))
                        Y = rng.uniform(-1, 1, size=(n, 8)) @ emb.B.T
                        F = warp_features(warp, Y, m)
                        ls = rng.uniform(0.05, 3.0, 1 if warp != "identity" else 2)
                        L, j = _cholesky(correlation(F, F, ls, family), JITTER)
                        assert np.min(np.diag(L)) >= math.sqrt(j) * (1 - 1e-6)

    def test_conditioning_error(self):
        R = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(ConditioningError):
            _cholesky(R, JITTER)


def replace_variance(spec):
    from dataclasses import replace
    return replace(spec, variance=1.0)


class TestUpdate:
    def test_interpolates_new_point(self):
        Y, f = toy_data(12, 2, seed=1)
        model = fit(Y, f, seed=0)
        new = update(model, [0.123, -0.456], 0.789)
        mean, var = predict(new, np.array([[0.123, -0.456]]))
        assert mean[0] == pytest.approx(0.789, abs=1e-5)
        assert new.n == 13

    def test_matches_refit_with_fixed_hyperparameters(self):
        Y, f = toy_data(12, 2, seed=1)
        model = fit(Y, f, seed=0)
        new = update(model, [0.5, 0.5], 0.1)
        base = fit(np.vstack([Y, [0.5, 0.5]]), np.append(f, 0.1), model.spec, optimize=False)
        Ys = np.random.default_rng(2).uniform(-1, 1, size=(20, 2))
        # the variance is carried over, not re-profiled
        np.testing.assert_allclose(predict(new, Ys)[0], predict(base, Ys)[0], atol=1e-8)

    def test_duplicate_point(self):
        Y, f = toy_data(12, 2, seed=3)
        model = fit(Y, f, seed=0)
        new = update(model, Y[4], f[4])
        assert new.spec.jitter >= model.spec.jitter
        Ys = np.random.default_rng(5).uniform(-1, 1, size=(20, 2))
        np.testing.assert_allclose(predict(new, Ys)[0], predict(model, Ys)[0], atol=1e-6)

    def test_variance_does_not_increase(self):
        Y, f = toy_data(10, 2, seed=6)
        model = fit(Y, f, seed=0)
        Ys = np.random.default_rng(8).uniform(-1, 1, size=(50, 2))
        v0 = predict(model, Ys)[1]
        new = update(model, [0.0, 0.3], 1.0)
        assert np.all(predict(new, Ys)[1] <= v0 + 1e-8)

    def test_rejects_non_finite(self):
        Y, f = toy_data(5, 1, seed=0)
        with pytest.raises(InvalidDataError):
            update(fit(Y, f, seed=0), [0.2], np.inf)
