"""Corpus generator tests: determinism, slicing, statistical shape."""

import numpy as np
import pytest

from stagex.errors import ConfigError
from stagex.synth import CorpusSpec, generate, rank_counts, rank_slice


def ks_distance_from_uniform(samples, upper):
    """Kolmogorov-Smirnov statistic against U(0, upper), computed directly."""
    x = np.sort(np.asarray(samples, dtype=np.float64)) / upper
    n = x.size
    grid = np.arange(1, n + 1) / n  # ECDF just above each sample
    return max(np.max(grid - x), np.max(x - (grid - 1.0 / n)))


# critical value at alpha = 0.01 (asymptotic): reject uniformity above this
def ks_critical(n):
    return 1.628 / np.sqrt(n)


def test_same_spec_same_bytes():
    spec = CorpusSpec(n_particles=5000, seed=42)
    a, b = generate(spec), generate(spec)
    for var in ("x", "y", "z", "id"):
        assert a[var].tobytes() == b[var].tobytes()


def test_different_seeds_differ():
    a = generate(CorpusSpec(n_particles=1000, seed=1))
    b = generate(CorpusSpec(n_particles=1000, seed=2))
    assert a["x"].tobytes() != b["x"].tobytes()


def test_shapes_dtypes_and_ids():
    c = generate(CorpusSpec(n_particles=1234, seed=0))
    for var in ("x", "y", "z"):
        assert c[var].dtype == np.float64
        assert c[var].shape == (1234,)
    assert c["id"].dtype == np.int64
    assert c["id"].tolist() == list(range(1234))


def test_empty_corpus():
    c = generate(CorpusSpec(n_particles=0))
    assert all(c[v].size == 0 for v in ("x", "y", "z", "id"))


def test_coordinates_inside_box():
    spec = CorpusSpec(n_particles=20000, box_size=100.0, seed=3)
    c = generate(spec)
    for var in ("x", "y", "z"):
        assert c[var].min() >= 0.0
        assert c[var].max() < 100.0


def test_pure_background_is_uniform():
    spec = CorpusSpec(n_particles=20000, background_fraction=1.0, seed=7)
    c = generate(spec)
    for var in ("x", "y", "z"):
        assert ks_distance_from_uniform(c[var], spec.box_size) < ks_critical(20000)


def test_clustered_corpus_is_not_uniform():
    spec = CorpusSpec(n_particles=20000, n_halos=5, background_fraction=0.2, seed=7)
    c = generate(spec)
    d = ks_distance_from_uniform(c["x"], spec.box_size)
    assert d > 2 * ks_critical(20000)


def test_rank_counts_balance():
    assert rank_counts(10, 4) == [3, 3, 2, 2]
    assert rank_counts(8, 4) == [2, 2, 2, 2]
    assert rank_counts(0, 3) == [0, 0, 0]
    for n, r in ((1001, 7), (5, 8)):
        counts = rank_counts(n, r)
        assert sum(counts) == n
        assert max(counts) - min(counts) <= 1


def test_rank_slices_partition_ids():
    spec = CorpusSpec(n_particles=1003, seed=5)
    merged = np.concatenate(
        [rank_slice(spec, r, 4, step=2)["id"] for r in range(4)]
    )
    assert merged.tolist() == list(range(1003))


def test_rank_slice_deterministic_and_step_dependent():
    spec = CorpusSpec(n_particles=400, seed=5)
    again = rank_slice(spec, 1, 4, step=2)
    assert rank_slice(spec, 1, 4, step=2)["x"].tobytes() == again["x"].tobytes()
    assert rank_slice(spec, 1, 4, step=3)["x"].tobytes() != again["x"].tobytes()
    assert rank_slice(spec, 2, 4, step=2)["x"].tobytes() != again["x"].tobytes()


def test_spec_validation():
    with pytest.raises(ConfigError):
        CorpusSpec(n_particles=-1)
    with pytest.raises(ConfigError):
        CorpusSpec(n_halos=0)
    with pytest.raises(ConfigError):
        CorpusSpec(background_fraction=1.5)
    with pytest.raises(ConfigError):
        CorpusSpec(box_size=0.0)
    with pytest.raises(ConfigError):
        rank_slice(CorpusSpec(n_particles=10), 4, 4)
    with pytest.raises(ConfigError):
        rank_counts(10, 0)
