#!/usr/bin/env python3
"""
Tests for the synthetic dataset generators
"""

import numpy as np
import pandas as pd
import pytest

from src.config import Config
from src.datagen import DEFAULT_NOISE_SD, SynthSpec, generate, generate_with_transform, write_csv
from src.dbscan_oracle import DbscanParams, exact_dbscan
from src.errors import ParameterError
from src.evaluation import ari


@pytest.mark.parametrize("kind, clusters", [("moons", 2), ("circles", 2), ("blobs", 3)])
def test_shapes_fill_the_cube_with_margin(kind, clusters):
    points, labels = generate(SynthSpec(kind, 400, noise_sd=0.05, seed=1))
    assert points.shape == (400, 2)
    assert points.min() >= 0.05 - 1e-12
    assert points.max() <= 0.95 + 1e-12
    assert np.isclose(points.max(axis=0) - points.min(axis=0), 0.9).any()
    assert labels.num_clusters == clusters
    assert labels.labels.min() == 1


def test_same_seed_same_points():
    first, _ = generate(SynthSpec("circles", 300, noise_sd=0.05, seed=3))
    again, _ = generate(SynthSpec("circles", 300, noise_sd=0.05, seed=3))
    other, _ = generate(SynthSpec("circles", 300, noise_sd=0.05, seed=4))
    assert np.array_equal(first, again)
    assert not np.array_equal(first, other)


def test_noiseless_moons_are_two_dbscan_clusters():
    points, truth, transform = generate_with_transform(SynthSpec("moons", 400, noise_sd=0.0, seed=0))
    alpha = transform.normalize_length(0.2)
    found = exact_dbscan(points, DbscanParams(alpha, 7))
    assert found.num_clusters == 2
    assert ari(truth, found) == pytest.approx(1.0)


@pytest.mark.parametrize("kind, min_pts, clusters", [("moons", 7, 2), ("circles", 10, 2), ("blobs", 7, 3)])
def test_default_shapes_have_their_dbscan_cluster_count(kind, min_pts, clusters):
    for seed in range(5):
        points, _, transform = generate_with_transform(
            SynthSpec(kind, 2000, noise_sd=DEFAULT_NOISE_SD[kind], seed=seed))
        found = exact_dbscan(points, DbscanParams(transform.normalize_length(0.2), min_pts))
        assert found.num_clusters == clusters


def test_coincident_points_sit_in_the_middle():
    points, labels = generate(SynthSpec("coincident", 50, d=3))
    assert points.shape == (50, 3)
    assert np.allclose(points, 0.5)
    assert labels.num_clusters == 1


def test_uniform_in_higher_dimension():
    points, _ = generate(SynthSpec("uniform", 200, d=4, seed=2))
    assert points.shape == (200, 4)
    assert points.min() >= 0.0 and points.max() <= 1.0


def test_empty_dataset():
    points, labels, _ = generate_with_transform(SynthSpec("moons", 0))
    assert points.shape == (0, 2)
    assert len(labels) == 0


@pytest.mark.parametrize("kwargs", [
    dict(kind="spirals", n=10),
    dict(kind="moons", n=-1),
    dict(kind="moons", n=10, d=3),
    dict(kind="uniform", n=10, d=0),
    dict(kind="moons", n=10, noise_sd=-0.1),
    dict(kind="moons", n=10, margin=0.5),
    dict(kind="moons", n=10, spread=0.0),
    dict(kind="circles", n=10, circles_outer_fraction=1.0),
])
def test_invalid_specs(kwargs):
    with pytest.raises(ParameterError):
        SynthSpec(**kwargs)


def test_spec_from_config_uses_defaults(tmp_path):
    config = Config(str(tmp_path / "missing.yaml"))
    spec = SynthSpec.from_config("blobs", config, n=120)
    assert spec.n == 120
    assert spec.noise_sd == 0.1
    assert spec.effective_spread == 1.0
    assert spec.seed == 0
    assert SynthSpec.from_config("moons", config).effective_spread == 1.4
    assert SynthSpec("uniform", 5).effective_spread == 1.0


def test_noiseless_circles_lie_on_two_rings():
    points, labels = generate(SynthSpec("circles", 900, noise_sd=0.0, seed=7))
    center = points.mean(axis=0)
    radii = np.linalg.norm(points - center, axis=1)
    outer, inner = radii[labels.labels == 1], radii[labels.labels == 2]
    assert len(outer) == 600 and len(inner) == 300
    assert np.abs(outer - outer[0]).max() < 1e-12
    assert np.abs(inner - 0.5 * outer[0]).max() < 1e-12


def test_rings_have_equal_point_density():
    _, labels = generate(SynthSpec("circles", 2000, seed=0))
    outer, inner = np.bincount(labels.labels)[1:]
    # twice the circumference, twice the points
    assert outer == pytest.approx(2 * inner, abs=2)


def test_blobs_are_standardized_and_round():
    points, labels, transform = generate_with_transform(SynthSpec("blobs", 3000, noise_sd=0.1, seed=4))
    raw = transform.invert(points)
    assert np.allclose(raw.mean(axis=0), 0.0, atol=1e-9)
    assert np.allclose(raw.std(axis=0), 1.0, atol=1e-9)
    for label in (1, 2, 3):
        spread = raw[labels.labels == label].std(axis=0)
        assert spread[0] == pytest.approx(spread[1], rel=0.15)


def test_write_csv_round_trip(tmp_path):
    points, labels = generate(SynthSpec("moons", 60, noise_sd=0.05, seed=5))
    path = write_csv(points, labels, tmp_path / "data" / "moons.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["x0", "x1", "label"]
    assert np.allclose(frame[["x0", "x1"]].to_numpy(), points)
    assert frame["label"].tolist() == labels.labels.tolist()


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
