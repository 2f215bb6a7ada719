import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphdim.errors import EstimationFailedError, InvalidInputError
from graphdim.estimators import (
    EstimatorConfig,
    LocalEstimate,
    aggregate_mean,
    aggregate_weighted,
    estimate,
    local_estimates,
    local_pca_estimate,
    pca_local,
    pmax,
    qe_estimate,
    qe_local,
    qe_select,
    tls_estimate,
    tls_local,
    tls_select,
    twonn_estimate,
    twonn_from_ratios,
)
from graphdim.manifolds import SampleConfig, benchmark_manifold, random_orthogonal, sample
from graphdim.neighborhood import LocalChart, local_chart
from graphdim.regression import QuadraticFit, n_quadratic_terms


def chart_from_coords(coords, eigenvalues=None):
    coords = np.asarray(coords, dtype=float)
    n, p = coords.shape
    lam = np.ones(p) if eigenvalues is None else np.asarray(eigenvalues, dtype=float)
    return LocalChart(0, np.arange(1, n), np.zeros(p), np.eye(p), lam, coords)


def quadratic_graph(seed, n, d, p, curvature=0.3):
    """Noiseless d-dimensional quadratic graph over [-1, 1]^d, zero-padded to R^p."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, (n, d))
    a = curvature * rng.standard_normal((d, d))
    pts = np.zeros((n, p))
    pts[:, :d] = u
    pts[:, d] = np.einsum("ij,jk,ik->i", u, a, u)
    return pts, u


def fake_fit(j, p_value, adj_r2):
    return QuadraticFit(j, n_quadratic_terms(j), 50, 1.0, 1.0, adj_r2, adj_r2, 1.0, p_value)


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [{"K": 2}, {"K": 10, "alpha": 0.0}, {"K": 10, "alpha": 1.0}, {"K": 10, "pca_alpha": 1.5},
         {"K": 10, "twonn_trim": 0.5}, {"K": 10, "rel_tol": 0.0}, {"K": 10.5}],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(InvalidInputError):
            EstimatorConfig(**kwargs)

    def test_defaults(self):
        cfg = EstimatorConfig(K=20)
        assert (cfg.alpha, cfg.rel_tol, cfg.pca_alpha, cfg.twonn_trim) == (0.01, 1e-8, 0.05, 0.1)


class TestPmax:
    def test_capped_by_ambient(self):
        assert pmax(3, 3, 1000) == 2

    def test_degrees_of_freedom(self):
        # m = 4: 14 <= 19, m = 5: 20 > 19
        assert pmax(40, 40, 20) == 4

    def test_capped_by_ambient_large_k(self):
        assert pmax(10, 10, 100) == 9

    def test_capped_by_nonconstant_index(self):
        assert pmax(10, 6, 100) == 6
        assert pmax(10, 1, 100) == 1
        assert pmax(10, 0, 100) == 0

    def test_small_k(self):
        # m = 1 needs 2 <= K - 1
        assert pmax(5, 5, 3) == 1

    @settings(max_examples=200, deadline=None)
    @given(p=st.integers(2, 60), q=st.integers(0, 60), K=st.integers(3, 2000))
    def test_feasibility(self, p, q, K):
        m = pmax(p, q, K)
        assert 0 <= m <= p - 1
        if m >= 1:
            assert n_quadratic_terms(m) + 1 <= K
            assert m <= q
        # maximal: one more model would break a constraint
        assert m + 1 > p - 1 or m + 1 > q or n_quadratic_terms(m + 1) + 1 > K

    def test_rejects_bad_input(self):
        with pytest.raises(InvalidInputError):
            pmax(1, 1, 10)


class TestQeLocal:
    def test_unit_circle(self):
        theta = np.linspace(0.0, 2.0 * np.pi, 200, endpoint=False)
        pts = np.column_stack([np.cos(theta), np.sin(theta)])
        est = qe_local(local_chart(pts, 0, 20), EstimatorConfig(K=20))
        assert est.d_k == 1
        assert est.weight == pytest.approx(1.0, abs=1e-3)

    def test_parabola_with_tiny_noise(self):
        rng = np.random.default_rng(0)
        x = np.linspace(-1.0, 1.0, 101)
        pts = np.column_stack([x, x * x + 1e-6 * rng.standard_normal(101)])
        est = qe_local(local_chart(pts, 50, 20), EstimatorConfig(K=20))
        assert est.d_k == 1
        assert est.weight > 0.99

    def test_flat_plane_takes_zero_weight_path(self):
        rng = np.random.default_rng(1)
        pts = np.zeros((200, 4))
        pts[:, :2] = rng.uniform(-1.0, 1.0, (200, 2))
        chart = local_chart(pts, 0, 30)
        est = qe_local(chart, EstimatorConfig(K=30))
        assert est.weight == 0.0
        assert est.d_k == pmax(4, 2, 30) == 2
        # j = 2 regresses the constant third coordinate
        assert est.fits[1].p_value == 1.0 and est.fits[1].adj_r2 == 0.0

    def test_line_reports_one(self):
        pts = np.zeros((30, 3))
        pts[:, 0] = np.arange(30.0)
        est = qe_local(local_chart(pts, 0, 10), EstimatorConfig(K=10))
        assert (est.d_k, est.weight) == (1, 0.0)

    def test_padded_sphere_ignores_constant_response(self):
        pts = sample(benchmark_manifold("M11"), SampleConfig(n=500, seed=2)).points
        est = qe_local(local_chart(pts, 0, 50), EstimatorConfig(K=50))
        assert len(est.fits) == 6 and est.fits[-1].p_value == 1.0
        assert est.d_k == 5 and est.weight > 0.9

    @pytest.mark.parametrize("name,seed", [("M41", 0), ("M41", 1), ("M11", 2), ("M21", 3), ("M7", 4)])
    def test_selection_predicate(self, name, seed):
        pts = sample(benchmark_manifold(name), SampleConfig(n=300, seed=seed)).points
        cfg = EstimatorConfig(K=40)
        for est in local_estimates(pts, cfg, "qe")[::7]:
            # constant-response fits (zero total sum of squares) carry no evidence
            fits = [f for f in est.fits if f.tss > 0]
            ok = [f.adj_r2 > 0 and all(g.p_value < cfg.alpha for g in fits[i:]) for i, f in enumerate(fits)]
            if any(ok):
                first = ok.index(True)
                assert est.d_k == first + 1
                assert est.weight == fits[first].adj_r2 > 0
            else:
                assert (est.d_k, est.weight) == (len(est.fits), 0.0)


class TestQeSelect:
    def test_picks_smallest_qualifying(self):
        fits = [fake_fit(1, 0.5, 0.1), fake_fit(2, 1e-4, 0.8), fake_fit(3, 1e-6, 0.9)]
        assert qe_select(fits, 0.01) == (2, 0.8)

    def test_later_insignificant_model_blocks(self):
        fits = [fake_fit(1, 1e-5, 0.9), fake_fit(2, 0.2, 0.1), fake_fit(3, 1e-6, 0.9)]
        assert qe_select(fits, 0.01) == (3, 0.9)

    def test_needs_positive_adjusted_r2(self):
        fits = [fake_fit(1, 1e-5, -0.1), fake_fit(2, 1e-5, 0.0)]
        assert qe_select(fits, 0.01) == (2, 0.0)

    def test_fallback(self):
        assert qe_select([fake_fit(1, 0.3, 0.2), fake_fit(2, 0.9, 0.0)], 0.01) == (2, 0.0)

    def test_uninformative_tail_does_not_block(self):
        fits = [fake_fit(1, 0.4, 0.1), fake_fit(2, 1e-8, 0.95), fake_fit(3, 1.0, 0.0)]
        assert qe_select(fits, 0.01) == (3, 0.0)
        assert qe_select(fits, 0.01, n_informative=2) == (2, 0.95)
        assert qe_select(fits[:1], 0.01, n_informative=0) == (1, 0.0)


class TestAggregation:
    def test_weighted(self):
        local = [LocalEstimate(0, 2, 0.5), LocalEstimate(1, 2, 0.5), LocalEstimate(2, 4, 0.0)]
        est = aggregate_weighted(local)
        assert est.d_hat == 2.0 and est.n_weighted == 2 and est.n_local == 3

    def test_all_zero_weights(self):
        local = [LocalEstimate(0, 3, 0.0), LocalEstimate(1, 5, 0.0)]
        assert aggregate_weighted(local).d_hat == 4.0

    def test_unweighted(self):
        assert aggregate_mean([LocalEstimate(k, 3, 1.0) for k in range(3)]).d_hat == 3.0
        assert aggregate_mean([LocalEstimate(0, 2, 1.0), LocalEstimate(1, 4, 1.0)]).d_hat == 3.0

    def test_skips_and_invalid_are_ignored(self):
        local = [None, LocalEstimate(1, 9, 1.0, valid=False), LocalEstimate(2, 3, 1.0)]
        assert aggregate_mean(local).d_hat == 3.0

    def test_nothing_usable(self):
        with pytest.raises(EstimationFailedError):
            aggregate_weighted([None, LocalEstimate(0, 1, 0.0, valid=False)])

    def test_rounding(self):
        est = aggregate_mean([LocalEstimate(0, 2, 1.0), LocalEstimate(1, 3, 1.0)])
        assert est.d_rounded == 3  # half rounds up

    def test_all_degenerate_cloud(self):
        pts = np.zeros((20, 3))
        with pytest.raises(EstimationFailedError):
            qe_estimate(pts, EstimatorConfig(K=5))


class TestTls:
    def test_tie_breaks_to_smallest(self):
        assert tls_select([4.0, 2.0, 1.0, 0.9]) == 2

    def test_clear_peak(self):
        assert tls_select([1.0, 0.9, 0.01, 0.008]) == 3

    def test_bent_plane(self):
        rng = np.random.default_rng(2)
        pts = np.zeros((200, 4))
        pts[:, :2] = rng.uniform(-1.0, 1.0, (200, 2))
        x, y = pts[:, 0], pts[:, 1]
        pts[:, 2] = 0.4 * x * x + 0.3 * x * y - 0.5 * y * y
        for k in (0, 50, 150):
            assert tls_local(local_chart(pts, k, 30), EstimatorConfig(K=30)).d_k == 2

    def test_skip_when_fewer_than_two_models(self):
        theta = np.linspace(0.0, 2.0 * np.pi, 50, endpoint=False)
        pts = np.column_stack([np.cos(theta), np.sin(theta)])
        assert tls_local(local_chart(pts, 0, 10), EstimatorConfig(K=10)) is None

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), p=st.integers(3, 8), K=st.integers(8, 40))
    def test_never_returns_one(self, seed, p, K):
        pts = np.random.default_rng(seed).standard_normal((K + 10, p))
        for est in local_estimates(pts, EstimatorConfig(K=K), "tls")[:5]:
            assert est is None or est.d_k >= 2


class TestLocalPca:
    def test_threshold(self):
        chart = chart_from_coords(np.zeros((5, 4)), [1.0, 0.9, 0.001, 0.0005])
        assert pca_local(chart, EstimatorConfig(K=4)).d_k == 2

    def test_equal_eigenvalues(self):
        chart = chart_from_coords(np.zeros((6, 5)), np.ones(5))
        assert pca_local(chart, EstimatorConfig(K=5)).d_k == 5

    def test_plane(self):
        rng = np.random.default_rng(3)
        pts = np.zeros((150, 5))
        pts[:, :2] = rng.uniform(-1.0, 1.0, (150, 2))
        local = local_estimates(pts, EstimatorConfig(K=20), "local_pca")
        assert {e.d_k for e in local} == {2}
        assert local_pca_estimate(pts, EstimatorConfig(K=20)).d_hat == 2.0


class TestTwoNN:
    def test_constant_ratio(self):
        assert twonn_from_ratios(np.full(100, math.exp(1.0 / 3.0)), trim=0.0) == pytest.approx(3.0, rel=1e-12)
        assert twonn_from_ratios(np.full(100, math.e), trim=0.0) == pytest.approx(1.0, rel=1e-12)

    def test_trimming_censors_rather_than_drops(self):
        # trim = 0.2 keeps 8 of 10; the two largest enter at the 8th log ratio
        mu = np.exp(np.arange(1, 11, dtype=float))
        assert twonn_from_ratios(mu, trim=0.2) == pytest.approx(8.0 / (36.0 + 2 * 8.0), rel=1e-12)

    def test_undefined_ratios(self):
        with pytest.raises(EstimationFailedError):
            twonn_from_ratios([np.nan, np.inf])
        with pytest.raises(EstimationFailedError):
            twonn_from_ratios(np.ones(5), trim=0.0)

    def test_unit_square(self):
        pts = np.random.default_rng(4).uniform(0.0, 1.0, (2000, 2))
        assert 1.8 <= twonn_estimate(pts, EstimatorConfig(K=10)).d_hat <= 2.2

    def test_sphere(self):
        pts = sample(benchmark_manifold("M11"), SampleConfig(n=1000, seed=5)).points
        assert abs(twonn_estimate(pts, EstimatorConfig(K=10)).d_hat - 5.0) < 0.7


class TestGlobal:
    @pytest.mark.parametrize("d,p,K", [(1, 2, 10), (2, 3, 20), (2, 4, 20), (3, 4, 30), (3, 6, 40), (4, 5, 40)])
    @pytest.mark.parametrize("seed", range(3))
    def test_exact_quadratic_graph(self, d, p, K, seed):
        pts, u = quadratic_graph(seed, 300, d, p)
        cfg = EstimatorConfig(K=K)
        assert K >= n_quadratic_terms(d) + 2
        local = local_estimates(pts, cfg, "qe")
        interior = [e for e in local if np.max(np.abs(u[e.center_index])) < 0.6]
        assert interior and all(e.d_k == d and e.weight > 0.9 for e in interior)
        est = aggregate_weighted(local)
        assert est.d_rounded == d
        assert abs(est.d_hat - d) < 0.01

    @pytest.mark.parametrize("method", ["qe", "tls"])
    def test_isometry_invariance(self, method):
        rng = np.random.default_rng(6)
        pts = sample(benchmark_manifold("M11"), SampleConfig(n=300, seed=3)).points
        moved = pts @ random_orthogonal(10, rng).T + rng.standard_normal(10)
        cfg = EstimatorConfig(K=40)
        assert abs(estimate(pts, method, cfg).d_hat - estimate(moved, method, cfg).d_hat) < 1e-6

    @pytest.mark.parametrize("method", ["qe", "tls", "local_pca"])
    def test_worker_count_is_bit_identical(self, method):
        pts = sample(benchmark_manifold("M41"), SampleConfig(n=200, seed=7)).points
        cfg = EstimatorConfig(K=30)
        base = estimate(pts, method, cfg, workers=1)
        for w in (4, 16):
            assert estimate(pts, method, cfg, workers=w) == base

    def test_dispatch_names(self):
        pts = sample(benchmark_manifold("M5"), SampleConfig(n=150, seed=8)).points
        cfg = EstimatorConfig(K=20)
        assert estimate(pts, "local-pca", cfg) == estimate(pts, "local_pca", cfg)
        with pytest.raises(InvalidInputError):
            estimate(pts, "danco", cfg)

    def test_too_few_points(self):
        with pytest.raises(InvalidInputError):
            tls_estimate(np.random.default_rng(9).standard_normal((10, 3)), EstimatorConfig(K=10))

    def test_sphere_qe(self):
        pts = sample(benchmark_manifold("M11"), SampleConfig(n=500, seed=10)).points
        est = qe_estimate(pts, EstimatorConfig(K=50))
        assert est.d_hat == pytest.approx(5.0, abs=0.01)
