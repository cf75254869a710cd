"""Subspace construction, perturbed inverse, error probe, and the driver."""

import dataclasses
import math

import numpy as np
import pytest

from spanopt import (
    ANALYTIC,
    CENTRAL_FD,
    Dataset,
    ObjectiveConfig,
    RangeConfig,
    SpanConfig,
    SpanState,
    apply_inverse,
    assemble_subspace,
    batch_gradient,
    build_subspace,
    dense_hessian,
    hessian_error_probe,
    recommended_batch_size,
    run_span,
    span_step,
)
from spanopt import linalg
from spanopt.errors import IndefiniteBlock
from spanopt.span import subspace_with_lambda


def quadratic(spectrum):
    return ObjectiveConfig("quadratic", quadratic_spectrum=np.asarray(spectrum, dtype=float))


def explicit_perturbed_hessian(s, h):
    p = s.u @ s.u.T
    return p @ h @ p + s.lam * (np.eye(h.shape[0]) - p)


def newton_optimum(cfg, data, d, tol=1e-12):
    x = np.zeros(d)
    for _ in range(100):
        g = batch_gradient(cfg, data, None, x)
        if np.linalg.norm(g) <= tol:
            break
        x = x - np.linalg.solve(dense_hessian(cfg, data, None, x), g)
    return x


class TestBuildSubspace:
    def test_full_width_block_is_similar_to_hessian(self):
        cfg = quadratic([1.0, 2.0, 3.0, 4.0])
        s = build_subspace(cfg, None, None, np.zeros(4), RangeConfig(l=4, q=1, m=0), seed=2, mode=ANALYTIC)
        eigs = np.sort(np.linalg.eigvalsh(s.small_block))[::-1]
        np.testing.assert_allclose(eigs, [4.0, 3.0, 2.0, 1.0], atol=1e-8)

    def test_isotropic_operator_safeguard(self):
        c = 2.0
        cfg = quadratic([c] * 6)
        s = build_subspace(cfg, None, None, np.zeros(6), RangeConfig(l=3, q=1, m=0), seed=1, mode=ANALYTIC)
        assert s.lambda_min == pytest.approx(c / 2, rel=1e-10)
        assert s.lam == pytest.approx(c / 2, rel=1e-10)

    def test_safeguard_postcondition(self):
        rng = np.random.default_rng(0)
        for seed in range(10):
            d = 20
            spectrum = np.sort(rng.uniform(0.5, 8.0, size=d))[::-1]
            rc = RangeConfig(l=8, q=1, m=4)
            s = build_subspace(quadratic(spectrum), None, None, np.zeros(d), rc, seed=seed, mode=ANALYTIC)
            assert 0.0 < s.lam <= s.lambda_min
            assert np.abs(s.u.T @ s.u - np.eye(8)).max() <= 1e-10
            assert np.abs(s.small_block - s.small_block.T).max() <= 1e-8 * np.abs(s.small_block).max()

    def test_indefinite_block_raises(self):
        u = np.eye(3)[:, :2]
        z = np.diag([-1.0, 2.0, 0.0])[:, :2]  # captured block diag(-1, 2)
        with pytest.raises(IndefiniteBlock):
            assemble_subspace(u, z, 0)


class TestApplyInverse:
    def test_full_rank_is_exact_newton_inverse(self):
        cfg = quadratic([2.0, 4.0])
        s = build_subspace(cfg, None, None, np.zeros(2), RangeConfig(l=2, q=1, m=0), seed=5, mode=ANALYTIC)
        np.testing.assert_allclose(apply_inverse(s, np.array([1.0, 1.0])), [0.5, 0.25], atol=1e-10)

    def test_zero_gradient(self):
        cfg = quadratic([1.0, 2.0, 3.0])
        s = build_subspace(cfg, None, None, np.zeros(3), RangeConfig(l=2, q=1, m=0), seed=1, mode=ANALYTIC)
        np.testing.assert_array_equal(apply_inverse(s, np.zeros(3)), np.zeros(3))

    def test_inverts_explicit_construction(self):
        spectrum = np.linspace(9.0, 1.0, 10)
        cfg = quadratic(spectrum)
        s = build_subspace(cfg, None, None, np.zeros(10), RangeConfig(l=6, q=2, m=2), seed=7, mode=ANALYTIC)
        h_hat = explicit_perturbed_hessian(s, np.diag(spectrum))
        rng = np.random.default_rng(8)
        for _ in range(20):
            v = rng.standard_normal(10)
            np.testing.assert_allclose(apply_inverse(s, h_hat @ v), v, atol=1e-8 * np.linalg.norm(v))

    def test_spectrum_split(self):
        # The explicit construction has exactly l eigenvalues from the
        # captured block and d - l copies of lambda.
        d, l = 12, 5
        spectrum = np.linspace(6.0, 1.0, d)
        cfg = quadratic(spectrum)
        s = build_subspace(cfg, None, None, np.zeros(d), RangeConfig(l=l, q=2, m=1), seed=3, mode=ANALYTIC)
        h_hat = explicit_perturbed_hessian(s, np.diag(spectrum))
        eigs = np.sort(np.linalg.eigvalsh(h_hat))
        block_eigs = np.sort(np.linalg.eigvalsh(s.small_block))
        expected = np.sort(np.concatenate([block_eigs, np.full(d - l, s.lam)]))
        np.testing.assert_allclose(eigs, expected, atol=1e-8 * spectrum[0])


class TestHessianErrorProbe:
    def test_full_capture_is_exact(self):
        spectrum = np.linspace(5.0, 1.0, 8)
        cfg = quadratic(spectrum)
        s = build_subspace(cfg, None, None, np.zeros(8), RangeConfig(l=8, q=1, m=0), seed=2, mode=ANALYTIC)
        err = hessian_error_probe(s, cfg, None, None, np.zeros(8), mode=ANALYTIC, seed=1)
        assert err <= 1e-8

    def test_violated_safeguard_breaks_bound(self):
        # Setting lambda to sigma_1 blows the error past 3 sigma_{m+1},
        # demonstrating why the safeguard caps it.
        spectrum = np.array([100.0] + [1.0] * 11)
        cfg = quadratic(spectrum)
        rc = RangeConfig(l=6, q=2, m=2)
        s = build_subspace(cfg, None, None, np.zeros(12), rc, seed=3, mode=ANALYTIC)
        sigma_m1 = spectrum[rc.m]
        good_err = hessian_error_probe(s, cfg, None, None, np.zeros(12), mode=ANALYTIC, seed=1)
        assert good_err <= 3.0 * sigma_m1
        bad = subspace_with_lambda(s, float(spectrum[0]))
        bad_err = hessian_error_probe(bad, cfg, None, None, np.zeros(12), mode=ANALYTIC, seed=1)
        assert bad_err > 3.0 * sigma_m1

    def test_probe_matches_dense_difference(self):
        spectrum = np.linspace(10.0, 1.0, 15)
        cfg = quadratic(spectrum)
        s = build_subspace(cfg, None, None, np.zeros(15), RangeConfig(l=6, q=2, m=2), seed=9, mode=ANALYTIC)
        probed = hessian_error_probe(s, cfg, None, None, np.zeros(15), mode=ANALYTIC, seed=5)
        dense = np.abs(
            np.linalg.eigvalsh(explicit_perturbed_hessian(s, np.diag(spectrum)) - np.diag(spectrum))
        ).max()
        assert probed == pytest.approx(dense, rel=1e-5)


class TestSpanStep:
    def test_one_step_exact_newton_full_width(self):
        d = 12
        cfg = quadratic(np.linspace(10.0, 1.0, d))
        span_cfg = SpanConfig(t_max=1, m=0, l=d, q=1, b=1, eta=1.0, seed=0, hvp_mode=ANALYTIC)
        x1, trace = run_span(span_cfg, cfg, None, np.arange(1.0, d + 1.0))
        assert np.linalg.norm(x1) <= 1e-8
        assert len(trace) == 1

    def test_zero_gradient_fixed_point(self):
        cfg = quadratic([2.0, 3.0])
        span_cfg = SpanConfig(t_max=1, m=0, l=2, q=1, b=1, eta=1.0, seed=0, hvp_mode=ANALYTIC)
        state = SpanState(x=np.zeros(2))
        new_state, _ = span_step(state, cfg, None, span_cfg)
        np.testing.assert_array_equal(new_state.x, np.zeros(2))

    def test_toy_logistic_matches_newton_oracle(self):
        feats = np.array([[1.0, 0.2], [-0.3, 1.0], [0.8, -0.5], [-1.0, -0.6]])
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        data = Dataset(features=feats, labels=np.array([1.0, -1.0, 1.0, -1.0]))
        cfg = ObjectiveConfig("logistic", reg_a=0.3)
        x_star = newton_optimum(cfg, data, 2)
        span_cfg = SpanConfig(t_max=20, m=0, l=2, q=1, b=4, eta=0.5, seed=0, hvp_mode=CENTRAL_FD)
        x_final, _ = run_span(span_cfg, cfg, data, np.zeros(2))
        assert np.linalg.norm(x_final - x_star) <= 1e-6


class TestRunSpan:
    def test_zero_iterations(self):
        cfg = quadratic([1.0, 2.0])
        span_cfg = SpanConfig(t_max=0, m=0, l=2, q=1, b=1, eta=1.0, seed=0)
        x0 = np.array([3.0, 4.0])
        x, trace = run_span(span_cfg, cfg, None, x0)
        np.testing.assert_array_equal(x, x0)
        assert trace == []

    def test_controlled_spectrum_converges(self):
        # Decaying head, flat tail just under the safeguard: gradient norm
        # reaches 1e-6 within 30 full-batch unit steps.
        spectrum = np.concatenate([np.linspace(10.0, 2.5, 16), np.full(34, 1.25)])
        cfg = quadratic(spectrum)
        span_cfg = SpanConfig(t_max=30, m=10, l=16, q=1, b=1, eta=1.0, seed=3, hvp_mode=ANALYTIC)
        x0 = linalg.gaussian_matrix(50, 1, 99)[:, 0]
        _, trace = run_span(span_cfg, cfg, None, x0)
        assert trace[-1].grad_norm <= 1e-6

    def test_grad_tol_stops_early(self):
        spectrum = np.concatenate([np.linspace(10.0, 2.5, 16), np.full(34, 1.25)])
        cfg = quadratic(spectrum)
        span_cfg = SpanConfig(t_max=30, m=10, l=16, q=1, b=1, eta=1.0, seed=3, hvp_mode=ANALYTIC, grad_tol=1e-4)
        x0 = linalg.gaussian_matrix(50, 1, 99)[:, 0]
        _, trace = run_span(span_cfg, cfg, None, x0)
        assert len(trace) < 30
        assert trace[-1].grad_norm <= 1e-4

    def test_same_seed_identical_traces(self):
        rng = np.random.default_rng(1)
        feats = rng.standard_normal((30, 8))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        data = Dataset(features=feats, labels=np.where(rng.random(30) < 0.5, 1.0, -1.0))
        cfg = ObjectiveConfig("logistic", reg_a=0.05)
        span_cfg = SpanConfig(t_max=5, m=0, l=4, q=1, b=10, eta=0.8, seed=42, hvp_mode=CENTRAL_FD)
        _, first = run_span(span_cfg, cfg, data, np.zeros(8))
        _, second = run_span(span_cfg, cfg, data, np.zeros(8))
        for a, b in zip(first, second):
            assert a.iteration == b.iteration
            assert a.loss == b.loss  # bitwise
            assert a.grad_norm == b.grad_norm
            assert a.lambda_used == b.lambda_used

    def test_wall_clock_non_decreasing(self):
        cfg = quadratic(np.linspace(4.0, 1.0, 10))
        span_cfg = SpanConfig(t_max=6, m=0, l=4, q=1, b=1, eta=0.5, seed=0, hvp_mode=ANALYTIC)
        _, trace = run_span(span_cfg, cfg, None, np.ones(10))
        stamps = [r.wall_clock_s for r in trace]
        assert all(b >= a for a, b in zip(stamps, stamps[1:]))

    def test_auto_step_schedule_runs(self):
        spectrum = np.concatenate([np.linspace(10.0, 2.5, 16), np.full(34, 1.25)])
        cfg = quadratic(spectrum)
        span_cfg = SpanConfig(t_max=5, m=10, l=16, q=1, b=1, eta="auto", seed=3, hvp_mode=ANALYTIC)
        x0 = linalg.gaussian_matrix(50, 1, 99)[:, 0]
        _, trace = run_span(span_cfg, cfg, None, x0)
        assert len(trace) == 5
        assert trace[-1].loss < trace[0].loss

    def test_per_iteration_schedule(self):
        cfg = quadratic(np.linspace(4.0, 1.0, 10))
        span_cfg = SpanConfig(t_max=3, m=0, l=4, q=1, b=1, eta=[0.9, 0.5, 0.1], seed=0, hvp_mode=ANALYTIC)
        _, trace = run_span(span_cfg, cfg, None, np.ones(10))
        assert len(trace) == 3


class TestContractionBound:
    def test_per_step_ratio_within_contraction_bound(self):
        # Full batch on a strongly convex quadratic with a step inside the
        # admissible range computed from the known spectrum; quadratics have
        # zero Hessian-Lipschitz constant, so only the linear term remains.
        d = 30
        spectrum = np.linspace(4.0, 1.0, d)
        cfg = quadratic(spectrum)
        sigma_1, sigma_d = spectrum[0], spectrum[-1]
        eta = sigma_d / (48.0 * sigma_1 - 16.0 * sigma_d)  # valid for any lambda_min <= sigma_1 / 2
        sigma_m1 = spectrum[6]
        span_cfg = SpanConfig(t_max=10, m=6, l=10, q=2, b=1, eta=eta, seed=0, hvp_mode=ANALYTIC)
        for seed in range(3):
            state = SpanState(x=linalg.gaussian_matrix(d, 1, 500 + seed)[:, 0])
            cfg_seeded = dataclasses.replace(span_cfg, seed=seed)
            for _ in range(10):
                prev = np.linalg.norm(state.x)
                state, _ = span_step(state, cfg, None, cfg_seeded)
                lam_min = state.subspace.lambda_min
                assert lam_min <= 2.0 * sigma_m1 + 1e-9
                ratio = np.linalg.norm(state.x) / prev
                assert ratio <= 1.0 - eta * sigma_d**2 / (36.0 * lam_min**2) + 1e-6


class TestRecommendedBatchSize:
    def test_direct_evaluation(self):
        k, eps, l, m, d, n = 1.0, 1.0, 5, 1, 100, 10_000
        expected = math.ceil(16.0 * k**2 / eps**2 * (l - m + math.log(2 * d)))
        assert recommended_batch_size(k, eps, l, m, d, n) == expected == 149

    def test_cap_at_dataset_size(self):
        assert recommended_batch_size(1.0, 1.0, 5, 1, 100, 50) == 50

    def test_monotone_decreasing_in_eps(self):
        sizes = [recommended_batch_size(1.0, eps, 8, 2, 200, 10**9) for eps in (0.5, 1.0, 2.0, 100.0)]
        assert sizes == sorted(sizes, reverse=True)
        assert sizes[-1] >= 1

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            recommended_batch_size(1.0, 0.0, 5, 1, 100, 10)
        with pytest.raises(ValueError):
            recommended_batch_size(1.0, 1.0, 5, 5, 100, 10)
