import math

import numpy as np
import pytest

from activest.classifier import init_model
from activest.cloud import AugmentParams
from activest.ensemble import (predict_ensemble, summary_from_bytes,
                               summary_to_bytes, uncertainty_of)

from conftest import random_cloud


def brute_force_reduce(probs):
    """Independent loop implementation of the ensemble statistics."""
    k, n, c = probs.shape
    mean = np.zeros((n, c))
    top = np.zeros(n, int)
    conf = np.zeros(n)
    unc = np.zeros(n)
    for i in range(n):
        for j in range(c):
            mean[i, j] = sum(probs[v, i, j] for v in range(k)) / k
        best, best_p = 0, mean[i, 0]
        for j in range(1, c):
            if mean[i, j] > best_p:
                best, best_p = j, mean[i, j]
        top[i] = best
        conf[i] = best_p
        acc = 0.0
        for v in range(k):
            acc += (probs[v, i, best] - best_p) ** 2
        unc[i] = math.sqrt(acc / k)
    return mean, top, unc, conf


def random_stack(rng, k, n, c):
    raw = rng.random((k, n, c))
    return raw / raw.sum(axis=2, keepdims=True)


class TestUncertaintyOf:
    @pytest.mark.parametrize("k,n,c", [(1, 5, 3), (2, 8, 4), (5, 16, 6)])
    def test_matches_brute_force(self, k, n, c):
        rng = np.random.default_rng(k * 100 + n)
        probs = random_stack(rng, k, n, c)
        mean, top, unc, conf = uncertainty_of(probs)
        bmean, btop, bunc, bconf = brute_force_reduce(probs)
        np.testing.assert_allclose(mean, bmean, atol=1e-12)
        np.testing.assert_array_equal(top, btop)
        np.testing.assert_allclose(unc, bunc, atol=1e-12)
        np.testing.assert_allclose(conf, bconf, atol=1e-12)

    def test_worked_two_version_example(self):
        probs = np.array([[[0.8, 0.2]], [[0.6, 0.4]]])
        mean, top, unc, conf = uncertainty_of(probs)
        np.testing.assert_allclose(mean[0], [0.7, 0.3], atol=1e-15)
        assert top[0] == 0
        assert abs(unc[0] - 0.1) < 1e-12
        assert abs(conf[0] - 0.7) < 1e-12

    def test_identical_one_hot_versions(self):
        probs = np.tile(np.eye(3)[[1]], (4, 1, 1))
        _, top, unc, conf = uncertainty_of(probs)
        assert unc[0] == 0.0 and conf[0] == 1.0 and top[0] == 1

    def test_exact_zero_when_versions_agree(self):
        rng = np.random.default_rng(0)
        one = random_stack(rng, 1, 10, 4)[0]
        probs = np.stack([one] * 5)
        _, _, unc, _ = uncertainty_of(probs)
        assert np.all(unc == 0.0)

    def test_permutation_of_versions_invariant(self):
        rng = np.random.default_rng(1)
        probs = random_stack(rng, 5, 12, 4)
        perm = probs[rng.permutation(5)]
        for a, b in zip(uncertainty_of(probs), uncertainty_of(perm)):
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_uncertainty_bounded_by_half(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            _, _, unc, _ = uncertainty_of(random_stack(rng, 6, 20, 5))
            assert unc.max() <= 0.5 + 1e-12

    def test_ties_take_lowest_class(self):
        probs = np.array([[[0.5, 0.5], [0.25, 0.75]]])
        _, top, _, _ = uncertainty_of(probs)
        assert top[0] == 0 and top[1] == 1

    def test_rejects_bad_shapes_and_rows(self):
        with pytest.raises(ValueError, match="K, N, C"):
            uncertainty_of(np.zeros((3, 4)))
        with pytest.raises(ValueError, match="stochastic"):
            uncertainty_of(np.full((2, 3, 4), 0.5))


class TestPredictEnsemble:
    def test_identity_augmentation_zero_uncertainty(self, small_scene):
        model = init_model(0, (13, 16, 6))
        summary = predict_ensemble(model, small_scene, AugmentParams.identity(),
                                   k_versions=3, seed=5)
        assert np.all(summary.uncertainty == 0.0)
        np.testing.assert_allclose(summary.mean_probs.sum(axis=1), 1.0, atol=1e-9)

    def test_default_k_five_recorded(self, small_scene):
        model = init_model(0, (13, 16, 6))
        summary = predict_ensemble(model, small_scene, AugmentParams(seed=0),
                                   k_versions=5, seed=5)
        assert summary.k_versions == 5
        assert len(summary.seeds) == 5

    def test_deterministic_in_master_seed(self, small_scene):
        model = init_model(0, (13, 16, 6))
        a = predict_ensemble(model, small_scene, AugmentParams(), 3, seed=9)
        b = predict_ensemble(model, small_scene, AugmentParams(), 3, seed=9)
        np.testing.assert_array_equal(a.mean_probs, b.mean_probs)
        np.testing.assert_array_equal(a.uncertainty, b.uncertainty)

    def test_top_class_consistent_with_mean(self, small_scene):
        model = init_model(3, (13, 16, 6))
        s = predict_ensemble(model, small_scene, AugmentParams(), 4, seed=2)
        np.testing.assert_array_equal(s.top_class, np.argmax(s.mean_probs, axis=1))
        rows = np.arange(s.n)
        np.testing.assert_allclose(s.confidence, s.mean_probs[rows, s.top_class])

    def test_fast_precision_close_to_float64(self, small_scene):
        model = init_model(1, (13, 16, 6))
        slow = predict_ensemble(model, small_scene, AugmentParams(), 3, seed=4,
                                precision="float64")
        fast = predict_ensemble(model, small_scene, AugmentParams(), 3, seed=4,
                                precision="float32")
        np.testing.assert_allclose(fast.mean_probs, slow.mean_probs, atol=1e-5)
        np.testing.assert_allclose(fast.mean_probs.sum(axis=1), 1.0, atol=1e-9)

    def test_rejects_zero_versions(self, small_scene):
        model = init_model(0, (13, 16, 6))
        with pytest.raises(ValueError):
            predict_ensemble(model, small_scene, AugmentParams(), 0, seed=1)


def test_summary_stream_roundtrip(small_scene):
    model = init_model(2, (13, 16, 6))
    summary = predict_ensemble(model, small_scene, AugmentParams(), 2, seed=7)
    mean, unc, top = summary_from_bytes(summary_to_bytes(summary))
    np.testing.assert_allclose(mean, summary.mean_probs, atol=1e-7)
    np.testing.assert_allclose(unc, summary.uncertainty, atol=1e-7)
    np.testing.assert_array_equal(top, summary.top_class)
