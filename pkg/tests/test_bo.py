import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rembo.bo import (RunConfig, ei_ext, ei_from_moments, embedding_for, expected_improvement,
                      initial_design, maximize_acquisition, random_search_run, rembo_run)
from rembo.embedding import Embedding, sample_embedding
from rembo.geometry import in_zonotope
from rembo.gp import KernelSpec, fit
from rembo.mappings import Mapping

from conftest import LINE_A
from oracles import ei_closed_form, ei_monte_carlo


class Constant:
    def __init__(self, D, c=3.5):
        self.D, self.c = D, c

    def __call__(self, x):
        assert np.shape(x) == (self.D,)
        return self.c


def second_coordinate(x):
    return (x[1] - 0.52) ** 2


class TestExpectedImprovement:
    def test_zero_spread(self):
        assert ei_from_moments(np.array([2.0]), np.array([0.0]), 1.0)[0] == 0.0
        assert ei_from_moments(np.array([0.5]), np.array([1e-30]), 1.0)[0] == 0.5

    def test_at_incumbent(self):
        v = ei_from_moments(np.array([1.0]), np.array([1.0]), 1.0)[0]
        assert v == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-14)
        assert v == pytest.approx(0.398942, abs=1e-6)

    @given(st.floats(-5, 5), st.floats(1e-6, 10), st.floats(-5, 5))
    def test_bounds(self, mean, var, f_min):
        v = ei_from_moments(np.array([mean]), np.array([var]), f_min)[0]
        assert v >= 0 and v >= f_min - mean - 1e-12

    def test_closed_form_vs_monte_carlo(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            mean, sd, f_min = rng.normal(), rng.uniform(0.1, 1.5), rng.normal()
            got = ei_from_moments(np.array([mean]), np.array([sd * sd]), f_min)[0]
            assert got == pytest.approx(ei_closed_form(mean, sd, f_min), abs=1e-12)
            assert abs(got - ei_monte_carlo(mean, sd, f_min, 20, rng)) <= 1e-3


def fitted(emb, n=6, seed=0, warp="projected"):
    rng = np.random.default_rng(seed)
    m = Mapping("gamma", emb)
    Y = rng.uniform(-1, 1, size=(n, emb.D)) @ emb.B.T
    f = np.sum(Y ** 2, axis=1)
    return fit(Y, f, KernelSpec(warp=warp), mapping=m, seed=seed), m


class TestExtendedAcquisition:
    def test_inside_equals_ei(self):
        emb = sample_embedding(10, 2, seed=1)
        model, m = fitted(emb)
        Y = np.random.default_rng(3).uniform(-1, 1, size=(20, 10)) @ emb.B.T
        vals, X = ei_ext(model, Y, m)
        np.testing.assert_allclose(vals, expected_improvement(model, Y, x=X), atol=1e-14)

    def test_outside_penalty(self, line_emb):
        model, m = fitted(line_emb)
        vals, X = ei_ext(model, np.array([[3.0], [-3.0]]), m)
        np.testing.assert_array_equal(vals, [-3.0, -3.0])
        assert np.isnan(X).all()

    def test_along_ray(self):
        emb = sample_embedding(8, 2, seed=2)
        model, m = fitted(emb)
        u = np.array([0.6, 0.8])
        ts = np.linspace(0.01, 3 * np.max(m.half_widths), 400)
        vals, _ = ei_ext(model, ts[:, None] * u, m)
        inside = in_zonotope(ts[:, None] * u, emb)
        assert np.all(vals[inside] >= 0)
        assert np.all(np.diff(vals[~inside]) < 0)


class TestMaximizeAcquisition:
    def test_dominates_probe_points(self):
        emb = sample_embedding(6, 2, seed=4)
        m = Mapping("phi", emb)
        model = fit(np.array([[0.2, -0.3]]), np.array([1.0]),
                    KernelSpec(lengthscales=(5.0, 5.0)), optimize=False)
        res = maximize_acquisition(model, m, seed=0, f_min=1.2)
        probes = np.random.default_rng(1).uniform(-m.half_widths, m.half_widths, size=(1000, 2))
        assert res.value >= np.max(expected_improvement(model, probes, f_min=1.2)) - 1e-12

    def test_more_restarts_do_not_hurt(self):
        emb = sample_embedding(10, 2, seed=5)
        model, m = fitted(emb, n=8)
        one = maximize_acquisition(model, m, restarts=1, seed=7, pool_size=1000)
        many = maximize_acquisition(model, m, restarts=20, seed=7, pool_size=1000)
        assert many.value >= one.value

    def test_gamma_result_in_zonotope(self):
        emb = sample_embedding(25, 3, seed=6)
        model, m = fitted(emb, n=8)
        res = maximize_acquisition(model, m, seed=1)
        assert in_zonotope(res.y, emb)
        assert np.max(np.abs(emb.B @ res.x - res.y)) <= 1e-6
        assert 0.0 <= res.fraction_outside <= 1.0


class TestInitialDesign:
    def test_phi_design_in_box(self):
        emb = sample_embedding(10, 3, seed=0)
        Y, info = initial_design(8, Mapping("phi", emb), seed=1)
        assert Y.shape == (8, 3) and info["design"] == "lhs"
        assert np.all(np.abs(Y) <= math.sqrt(3))
        # one point per stratum along each axis
        strata = np.floor((Y + math.sqrt(3)) / (2 * math.sqrt(3)) * 8)
        for k in range(3):
            assert sorted(strata[:, k]) == list(range(8))

    def test_gamma_design_in_zonotope(self):
        emb = sample_embedding(25, 2, seed=0)
        Y, info = initial_design(6, Mapping("gamma", emb), seed=1)
        assert info["design"] == "rejection"
        assert in_zonotope(Y, emb).all()

    def test_projection_fallback(self):
        emb = sample_embedding(80, 10, seed=0)
        Y, info = initial_design(20, Mapping("gamma", emb), seed=1, min_acceptance=0.05)
        assert info["design"] == "projection" and info["acceptance"] < 0.05
        assert in_zonotope(Y, emb).all()

    def test_two_points_on_a_line(self, line_emb):
        for kind in ("phi", "gamma"):
            m = Mapping(kind, line_emb)
            Y, _ = initial_design(2, m, seed=3)
            assert abs(Y[0, 0] - Y[1, 0]) >= m.half_widths[0]

    def test_deterministic(self):
        emb = sample_embedding(12, 2, seed=0)
        a, _ = initial_design(5, Mapping("gamma", emb), seed=11)
        b, _ = initial_design(5, Mapping("gamma", emb), seed=11)
        assert a.tobytes() == b.tobytes()


class TestRuns:
    def test_constant_objective(self):
        cfg = RunConfig(d=2, D=6, budget=8, seed=0)
        inc, rec = rembo_run(cfg, Constant(6))
        assert inc.best_f == 3.5 and len(rec) == 8
        inc, rec = random_search_run(cfg, Constant(6))
        assert inc.best_f == 3.5 and len(rec) == 8

    def test_synthetic_line_objective(self):
        emb = Embedding.from_matrix(LINE_A)
        solved = 0
        for seed in range(25):
            cfg = RunConfig(d=1, D=2, budget=30, mapping="gamma",
                            kernel=KernelSpec(warp="projected"), seed=seed)
            inc, rec = rembo_run(cfg, second_coordinate, emb=emb)
            solved += inc.best_f <= 1e-2
        assert solved >= 20

    @pytest.mark.parametrize("mapping,warp", [("gamma", "projected"), ("gamma", "mapped"),
                                              ("phi", "identity"), ("phi", "projected")])
    def test_contract(self, mapping, warp):
        cfg = RunConfig(d=2, D=12, budget=14, mapping=mapping, kernel=KernelSpec(warp=warp),
                        seed=3, restarts=8, pool_size=500, acq_rounds=10)
        f = lambda x: float(np.sum((x[:3] - 0.2) ** 2))
        inc, rec = rembo_run(cfg, f)
        assert len(rec) == 14 and rec.status == "ok"
        assert np.all(np.diff(rec.best_f) <= 0)
        assert inc.best_f == np.min(rec.f) == rec.best_f[-1]
        assert np.all(np.abs(rec.x) <= 1.0)
        emb = embedding_for(cfg)
        if mapping == "gamma":
            assert np.max(np.abs(rec.x @ emb.B.T - rec.y)) <= 1e-6
            assert in_zonotope(rec.y, emb).all()
        else:
            np.testing.assert_allclose(rec.x, np.clip(rec.y @ emb.A.T, -1, 1), atol=1e-14)
        assert np.isnan(rec.loglik[:cfg.n0]).all() and np.isfinite(rec.loglik[cfg.n0:]).all()

    def test_replay_is_bitwise(self):
        cfg = RunConfig(d=2, D=10, budget=12, seed=5, restarts=6, pool_size=300, acq_rounds=8)
        f = lambda x: float(np.sum(np.sin(3 * x[:2])))
        _, a = rembo_run(cfg, f)
        _, b = rembo_run(cfg, f)
        assert a.y.tobytes() == b.y.tobytes() and a.f.tobytes() == b.f.tobytes()
        assert a.hyper == b.hyper

    def test_same_embedding_across_methods(self):
        a = embedding_for(RunConfig(d=2, D=25, mapping="gamma", seed=4))
        b = embedding_for(RunConfig(d=2, D=25, mapping="phi", kernel=KernelSpec(warp="mapped"), seed=4))
        assert a.A.tobytes() == b.A.tobytes()

    def test_non_finite_aborts(self):
        calls = []

        def f(x):
            calls.append(1)
            return math.nan if len(calls) == 6 else 1.0

        inc, rec = rembo_run(RunConfig(d=1, D=3, budget=10, seed=0, restarts=4), f)
        assert rec.status == "aborted" and len(rec) == 5 and "nan" in rec.message

    def test_random_search_squares(self):
        inc, rec = random_search_run(RunConfig(d=1, D=2, budget=10_000, seed=1),
                                     lambda x: float(x @ x))
        assert inc.best_f <= 0.01
        _, rec2 = random_search_run(RunConfig(d=1, D=2, budget=10_000, seed=1),
                                    lambda x: float(x @ x))
        assert rec.x.tobytes() == rec2.x.tobytes()
        assert rec.y is None

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            RunConfig(d=2, D=10, budget=4, n0=4)
