"""Kernel evaluation, weighted/LOO KDE, and bandwidth selection."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from vwkde.core import Dataset, SeedSpec, make_gaussian, sample_gaussian
from vwkde.errors import InsufficientDataError, InvalidConfigError
from vwkde.kde import (
    KernelSpec,
    WeightedKde,
    default_bandwidth_grid,
    kde_eval,
    kde_loo_eval,
    kernel_eval,
    loo_log_likelihood,
    loo_log_likelihood_grid,
    select_bandwidth,
)

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class TestKernel:
    def test_peak_value_1d(self):
        assert kernel_eval(KernelSpec(1.0), [0.0], [0.0]) == pytest.approx(INV_SQRT_2PI)

    def test_symmetry_exact(self):
        spec = KernelSpec(0.7)
        x = np.array([0.3, -1.2])
        y = np.array([1.0, 0.4])
        assert kernel_eval(spec, x, y) == kernel_eval(spec, y, x)

    def test_integrates_to_one_by_quadrature(self):
        spec = KernelSpec(1.0)
        val, _ = quad(lambda u: kernel_eval(spec, [0.3], [u]), -12, 12, epsabs=1e-10)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_nonpositive_bandwidth_rejected(self):
        with pytest.raises(InvalidConfigError):
            KernelSpec(0.0)
        with pytest.raises(InvalidConfigError):
            KernelSpec(-0.5)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidConfigError):
            kernel_eval(KernelSpec(1.0), [0.0], [0.0, 1.0])


class TestWeightedKde:
    def _support(self):
        return Dataset(np.array([[0.0], [1.0], [2.5]]))

    def test_unit_weights_match_unweighted_mean(self):
        sup = self._support()
        kde = WeightedKde(sup, np.ones(3), KernelSpec(0.8))
        x = np.array([0.7])
        expected = np.mean([kernel_eval(KernelSpec(0.8), x, p) for p in sup.points])
        assert kde_eval(kde, x) == pytest.approx(expected, rel=1e-12)

    def test_weight_scaling_multiplies_output(self):
        sup = self._support()
        base = WeightedKde(sup, np.ones(3), KernelSpec(0.8))
        scaled = WeightedKde(sup, np.full(3, 3.7), KernelSpec(0.8))
        for x in ([0.2], [1.4], [-3.0]):
            assert kde_eval(scaled, np.array(x)) == pytest.approx(
                3.7 * kde_eval(base, np.array(x)), rel=1e-12
            )

    def test_single_point_peak(self):
        kde = WeightedKde(Dataset(np.array([[0.0]])), np.ones(1), KernelSpec(1.0))
        assert kde_eval(kde, np.array([0.0])) == pytest.approx(INV_SQRT_2PI)

    def test_density_integrates_to_one(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(60, 1))
        h = 0.4
        kde = WeightedKde(Dataset(pts), np.ones(60), KernelSpec(h))
        lo, hi = pts.min() - 6 * h, pts.max() + 6 * h
        grid = np.linspace(lo, hi, 4001)
        vals = np.exp(kde.log_eval(grid[:, None]))
        total = np.trapezoid(vals, grid)
        assert total == pytest.approx(1.0, abs=1e-4)

    def test_lipschitz_spot_check(self):
        rng = np.random.default_rng(6)
        pts = rng.normal(size=(40, 1))
        h = 0.5
        w = rng.uniform(0.5, 2.0, size=40)
        kde = WeightedKde(Dataset(pts), w, KernelSpec(h))
        # sup |dk/dx| for the 1-D Gaussian kernel is at distance h
        lip = w.max() * kernel_eval(KernelSpec(h), [0.0], [h]) / h
        for x in rng.uniform(-3, 3, size=10):
            delta = 1e-3
            diff = abs(kde_eval(kde, np.array([x + delta])) - kde_eval(kde, np.array([x])))
            assert diff <= lip * delta * (1 + 1e-6)

    def test_weights_must_be_positive(self):
        with pytest.raises(InvalidConfigError):
            WeightedKde(self._support(), np.array([1.0, 0.0, 1.0]), KernelSpec(1.0))

    def test_weight_length_checked(self):
        with pytest.raises(InvalidConfigError):
            WeightedKde(self._support(), np.ones(2), KernelSpec(1.0))


class TestLeaveOneOut:
    def test_two_point_hand_value(self):
        kde = WeightedKde(Dataset(np.array([[0.0], [1.0]])), np.ones(2), KernelSpec(1.0))
        # single remaining kernel: k(0, 1) = exp(-1/2) / sqrt(2 pi)
        expected = math.exp(-0.5) * INV_SQRT_2PI
        assert kde_loo_eval(kde, 0) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.24197, abs=5e-6)

    def test_matches_eval_on_reduced_support(self):
        rng = np.random.default_rng(7)
        pts = rng.normal(size=(12, 2))
        w = rng.uniform(0.5, 2.0, size=12)
        kde = WeightedKde(Dataset(pts), w, KernelSpec(0.6))
        for i in (0, 5, 11):
            reduced = WeightedKde(
                Dataset(np.delete(pts, i, axis=0)),
                np.delete(w, i),
                KernelSpec(0.6),
            )
            assert kde.log_loo_eval(i) == pytest.approx(
                float(reduced.log_eval(pts[i])), abs=1e-12
            )

    def test_constant_weights_scale_loo(self):
        pts = np.array([[0.0], [0.4], [1.1]])
        base = WeightedKde(Dataset(pts), np.ones(3), KernelSpec(0.5))
        scaled = WeightedKde(Dataset(pts), np.full(3, 2.5), KernelSpec(0.5))
        assert kde_loo_eval(scaled, 1) == pytest.approx(2.5 * kde_loo_eval(base, 1), rel=1e-12)

    def test_single_point_insufficient(self):
        kde = WeightedKde(Dataset(np.array([[0.0]])), np.ones(1), KernelSpec(1.0))
        with pytest.raises(InsufficientDataError):
            kde.log_loo_eval(0)


class TestLooLogLikelihood:
    def test_permutation_invariance(self):
        rng = np.random.default_rng(8)
        pts = rng.normal(size=(30, 1))
        perm = rng.permutation(30)
        a = loo_log_likelihood(pts, 0.4)
        b = loo_log_likelihood(pts[perm], 0.4)
        assert a == pytest.approx(b, rel=1e-12)

    def test_underflow_sentinel(self):
        pts = np.array([[0.0], [1e200]])
        assert loo_log_likelihood(pts, 1e-3) == -np.inf

    def test_maximizer_near_silverman_order(self):
        data = sample_gaussian(make_gaussian([0.0], [[1.0]]), 500, SeedSpec(21))
        grid = np.geomspace(0.05, 2.0, 40)
        lls = loo_log_likelihood_grid(data, grid)
        h_star = grid[int(np.argmax(lls))]
        silverman = 1.06 * data.points.std() * 500 ** (-0.2)
        assert 0.5 < h_star / silverman < 2.0
        assert 0.15 < h_star < 0.6


class TestSelectBandwidth:
    def test_full_fraction_is_plain_maximizer(self):
        data = sample_gaussian(make_gaussian([0.0], [[1.0]]), 200, SeedSpec(33))
        grid = [0.1, 0.2, 0.4, 0.8]
        lls = loo_log_likelihood_grid(data, grid)
        expected = grid[int(np.argmax(lls))]
        assert select_bandwidth(data, grid, 1.0, SeedSpec(0)) == expected

    def test_single_entry_grid(self):
        data = sample_gaussian(make_gaussian([0.0], [[1.0]]), 50, SeedSpec(1))
        assert select_bandwidth(data, [0.37], 1.0, SeedSpec(0)) == 0.37

    def test_quarter_subsample_selects_wider_bandwidth(self):
        data = sample_gaussian(make_gaussian([0.0], [[1.0]]), 2000, SeedSpec(31))
        grid = np.geomspace(0.05, 2.0, 30)
        h_full = select_bandwidth(data, grid, 1.0, SeedSpec(32))
        h_quarter = select_bandwidth(data, grid, 0.25, SeedSpec(32))
        assert h_quarter >= h_full

    def test_empty_grid_rejected(self):
        with pytest.raises(InvalidConfigError):
            select_bandwidth(np.zeros((10, 1)), [], 1.0, SeedSpec(0))

    def test_bad_fraction_rejected(self):
        with pytest.raises(InvalidConfigError):
            select_bandwidth(np.zeros((10, 1)), [0.5], 0.0, SeedSpec(0))

    def test_tiny_subsample_rejected(self):
        data = np.random.default_rng(2).normal(size=(4, 1))
        with pytest.raises(InsufficientDataError):
            select_bandwidth(data, [0.5], 0.25, SeedSpec(0))

    def test_default_grid_shape_and_positivity(self):
        data = np.random.default_rng(3).normal(size=(100, 3))
        grid = default_bandwidth_grid(data)
        assert len(grid) == 30
        assert np.all(np.diff(grid) > 0)
        assert grid[0] > 0
