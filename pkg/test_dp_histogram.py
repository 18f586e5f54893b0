#!/usr/bin/env python3
"""
Tests for exact counting and the naive / linear-time DP histograms
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from src.dp_histogram import (LINEAR, NAIVE, HistogramLimits, SparseHistogram, _sample_complement,
                              build_linear, build_naive, choose_theta, dump_histogram,
                              exact_counts, histogram_error)
from src.dp_noise import gamma_laplace
from src.errors import CapacityError, ParameterError, ResourceError
from src.grid import GridSpec, cell_ids


@pytest.fixture
def line4():
    """Four cells on [0, 1]"""
    return GridSpec.create(1, 0.25, 1.0)


def test_exact_counts(line4):
    freqs = exact_counts([[0.1], [0.15], [0.6], [1.0]], line4)
    assert dict(freqs) == {(0,): 2, (2,): 1, (3,): 1}
    assert freqs.total == 4
    assert len(freqs) == 3
    assert list(freqs) == [(0,), (2,), (3,)]
    with pytest.raises(KeyError):
        freqs[(1,)]
    assert np.array_equal(freqs.counts_at([0, 1, 2, 3]), [2, 0, 1, 1])


def test_exact_counts_of_no_points(line4):
    freqs = exact_counts(np.empty((0, 1)), line4)
    assert len(freqs) == 0
    assert freqs.total == 0


def test_naive_histogram_is_dense_and_unbiased():
    grid = GridSpec.create(2, 0.1, 1.0)
    rng = np.random.default_rng(0)
    points = rng.random((300, 2))
    freqs = exact_counts(points, grid)
    hist = build_naive(freqs, grid, 1.0, rng)
    assert hist.is_dense
    assert hist.mode == NAIVE
    assert len(hist) == grid.universe_size
    exact = np.zeros(grid.universe_size)
    exact[freqs.ids] = freqs.counts
    assert np.mean(hist.values - exact) == pytest.approx(0.0, abs=0.3)
    assert hist.get((0, 0)) == pytest.approx(hist.values[0])


def test_naive_histogram_respects_capacity_guard():
    grid = GridSpec.create(2, 0.01, 1.0)
    freqs = exact_counts([[0.5, 0.5]], grid)
    with pytest.raises(CapacityError):
        build_naive(freqs, grid, 1.0, np.random.default_rng(0), HistogramLimits(max_naive_cells=1000))


def test_linear_histogram_keeps_only_values_above_theta():
    grid = GridSpec.create(2, 0.02, 1.0)
    rng = np.random.default_rng(1)
    points = rng.random((400, 2))
    freqs = exact_counts(points, grid)
    theta = choose_theta(grid, 400, 1.0)
    assert theta == pytest.approx(math.log(grid.universe_size / 400))
    hist = build_linear(freqs, grid, 1.0, theta, rng)
    assert hist.mode == LINEAR
    assert not hist.is_dense
    assert np.all(hist.values >= theta)
    assert np.all(np.diff(hist.ids) > 0)
    assert hist.values_at(np.array([-1 + grid.universe_size])).shape == (1,)
    absent = np.setdiff1d(np.arange(grid.universe_size), hist.ids)[:5]
    assert np.all(hist.values_at(absent) == 0.0)
    assert len(hist.entries) == len(hist)


def test_linear_histogram_rejects_non_positive_theta(line4):
    freqs = exact_counts([[0.1]], line4)
    with pytest.raises(ParameterError):
        build_linear(freqs, line4, 1.0, 0.0, np.random.default_rng(0))


def test_phantom_draw_guard():
    grid = GridSpec.create(2, 0.001, 1.0)
    freqs = exact_counts(np.full((10, 2), 0.5), grid)
    limits = HistogramLimits(phantom_ratio_limit=64, phantom_floor=1000)
    with pytest.raises(ResourceError):
        build_linear(freqs, grid, 1.0, 0.01, np.random.default_rng(0), limits)


@pytest.mark.parametrize("universe, excluded, m", [
    (20, np.array([1, 5, 7]), 10),
    (10 ** 7, np.arange(0, 10 ** 6, 7), 5000),
])
def test_complement_sample_is_distinct_and_avoids_occupied(universe, excluded, m):
    drawn = _sample_complement(np.random.default_rng(2), universe, excluded, m)
    assert drawn.size == m
    assert np.unique(drawn).size == m
    assert not np.isin(drawn, excluded).any()
    assert drawn.min() >= 0 and drawn.max() < universe


def _states(values, theta):
    """0 = absent, 1 = in [theta, theta + 1), 2 = at least theta + 1"""
    state = np.where(values < theta, 0, np.where(values < theta + 1.0, 1, 2))
    return state @ np.array([27, 9, 3, 1])


def test_linear_law_matches_truncated_naive(line4):
    trials, eps, theta = 100_000, 1.0, 1.0
    freqs = exact_counts([[0.1], [0.1], [0.6]], line4)
    exact = np.array([2.0, 0.0, 1.0, 0.0])

    rng = np.random.default_rng(2024)
    naive_codes = _states(exact + rng.laplace(0.0, 1.0 / eps, size=(trials, 4)), theta)

    linear_values = np.empty((trials, 4))
    all_ids = np.arange(4)
    for t in range(trials):
        linear_values[t] = build_linear(freqs, line4, eps, theta, rng).values_at(all_ids)
    # absent cells read as 0, below theta
    linear_codes = _states(linear_values, theta)

    table = np.array([np.bincount(naive_codes, minlength=81),
                      np.bincount(linear_codes, minlength=81)])
    rare = table.sum(axis=0) < 20
    merged = np.column_stack([table[:, ~rare], table[:, rare].sum(axis=1)])
    merged = merged[:, merged.sum(axis=0) > 0]
    _, pvalue, _, _ = stats.chi2_contingency(merged)
    assert pvalue > 0.01


def test_histogram_error_is_usually_within_gamma():
    grid = GridSpec.create(1, 1 / 256, 1.0)
    assert grid.universe_size == 256
    rng = np.random.default_rng(17)
    points = rng.random((50, 1))
    freqs = exact_counts(points, grid)
    gamma = gamma_laplace(1.0, 256, 1 / 3)
    theta = choose_theta(grid, 50, 1.0)
    naive_fail = linear_fail = 0
    for _ in range(1000):
        naive_fail += histogram_error(build_naive(freqs, grid, 1.0, rng), freqs) > gamma
        linear_fail += histogram_error(build_linear(freqs, grid, 1.0, theta, rng), freqs) > theta + gamma
    assert naive_fail / 1000 <= 1 / 3 + 0.05
    assert linear_fail / 1000 <= 1 / 3 + 0.05


def test_linear_histogram_stays_linear_in_n():
    grid = GridSpec.create(2, 4.47e-4, 1.0)
    assert 9e6 < grid.universe_size < 1.1e7
    rng = np.random.default_rng(4)
    n = 100_000
    freqs = exact_counts(rng.random((n, 2)), grid)
    hist = build_linear(freqs, grid, 1.0, choose_theta(grid, n, 1.0), rng)
    assert len(hist) <= 4 * n
    with pytest.raises(CapacityError):
        build_naive(freqs, grid, 1.0, rng, HistogramLimits(max_naive_cells=10 ** 6))


def _phantom_mask(hist, freqs):
    return ~np.isin(hist.ids, freqs.ids)


def test_phantom_count_has_binomial_mean():
    grid = GridSpec.create(1, 1 / 64, 1.0)
    freqs = exact_counts([[0.01], [0.5], [0.5], [0.9]], grid)
    eps, theta, trials = 1.0, 1.0, 4000
    empty_cells = grid.universe_size - len(freqs)
    mean = empty_cells * 0.5 * math.exp(-eps * theta)
    rng = np.random.default_rng(77)
    counts = [np.count_nonzero(_phantom_mask(build_linear(freqs, grid, eps, theta, rng), freqs))
              for _ in range(trials)]
    assert abs(np.mean(counts) - mean) <= 3 * math.sqrt(mean / trials)


def test_phantom_values_are_independent_of_occupied_values():
    grid = GridSpec.create(1, 1 / 64, 1.0)
    freqs = exact_counts(np.full((50, 1), 0.3), grid)
    occupied = freqs.ids[0]
    rng = np.random.default_rng(78)
    kept, phantom_count, phantom_mean = [], [], []
    for _ in range(30_000):
        hist = build_linear(freqs, grid, 1.0, 1.0, rng)
        phantoms = hist.values[hist.ids != occupied]
        kept.append(hist.values_at(np.array([occupied]))[0])
        phantom_count.append(phantoms.size)
        phantom_mean.append(phantoms.mean() if phantoms.size else np.nan)
    kept, phantom_count, phantom_mean = map(np.asarray, (kept, phantom_count, phantom_mean))
    assert abs(np.corrcoef(kept, phantom_count)[0, 1]) <= 0.02
    drawn = ~np.isnan(phantom_mean)
    assert abs(np.corrcoef(kept[drawn], phantom_mean[drawn])[0, 1]) <= 0.02


def test_linear_output_size_is_bounded_by_points_plus_phantoms():
    grid = GridSpec.create(2, 0.0142, 1.0)
    rng = np.random.default_rng(79)
    n = 100
    freqs = exact_counts(rng.random((n, 2)), grid)
    theta = choose_theta(grid, n, 1.0)
    assert theta > 0
    fewer = 0
    for _ in range(500):
        hist = build_linear(freqs, grid, 1.0, theta, rng)
        m = int(np.count_nonzero(_phantom_mask(hist, freqs)))
        assert len(hist) <= n + m
        fewer += m < n
    assert fewer / 500 >= 0.99


def test_linear_histogram_on_a_million_points():
    grid = GridSpec.create(2, 4.47e-4, 1.0)
    rng = np.random.default_rng(80)
    n = 10 ** 6
    points = rng.random((n, 2))
    start = time.perf_counter()
    freqs = exact_counts(points, grid)
    hist = build_linear(freqs, grid, 1.0, choose_theta(grid, n, 1.0), rng)
    elapsed = time.perf_counter() - start
    assert len(hist) <= 4 * n
    assert elapsed < 60.0


def test_choose_theta_prefers_naive_for_dense_data(line4):
    assert choose_theta(line4, 3, 1.0) == 0.0
    assert choose_theta(line4, 1, 2.0) == pytest.approx(math.log(4) / 2)
    with pytest.raises(ParameterError):
        choose_theta(line4, -1, 1.0)


def test_digest_is_reproducible(line4):
    freqs = exact_counts([[0.1], [0.6]], line4)
    first = build_naive(freqs, line4, 1.0, np.random.default_rng(8))
    again = build_naive(freqs, line4, 1.0, np.random.default_rng(8))
    other = build_naive(freqs, line4, 1.0, np.random.default_rng(9))
    assert first.digest() == again.digest()
    assert first.digest() != other.digest()


def test_dump_histogram_writes_one_line_per_entry(tmp_path):
    grid = GridSpec.create(2, 0.5, 1.0)
    values = np.array([1.5, -0.25, 0.0, 3.0, 2.0, 0.5, 0.0, 0.0, 0.0])
    hist = SparseHistogram(grid, values[:grid.universe_size], theta=0.0, epsilon_spent=1.0, mode=NAIVE)
    path = dump_histogram(hist, tmp_path / "hist.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == grid.universe_size
    assert lines[0] == "0,0,1.5"
    assert lines[1] == "0,1,-0.25"


def test_sparse_values_lookup_by_cell(line4):
    hist = SparseHistogram(line4, np.array([4.0, 2.5]), theta=1.0, epsilon_spent=1.0, mode=LINEAR,
                           ids=cell_ids(line4, [[1], [3]]))
    assert hist.get((1,)) == 4.0
    assert hist.get((2,)) == 0.0
    assert hist.entries == {(1,): 4.0, (3,): 2.5}


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
