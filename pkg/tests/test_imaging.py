"""Projection and SSIM tests, including a brute-force SSIM oracle."""

import numpy as np
import pytest

from stagex.imaging import ProjectionImage, project, ssim, write_pgm
from stagex.synth import CorpusSpec, generate


def make_particles(x, y, z):
    return {
        "x": np.asarray(x, dtype=np.float64),
        "y": np.asarray(y, dtype=np.float64),
        "z": np.asarray(z, dtype=np.float64),
    }


# ---------------------------------------------------------------------------
# projection


def test_counts_conserve_particles():
    corpus = generate(CorpusSpec(n_particles=5000, seed=1))
    img = project(corpus, axis="z")
    assert img.counts.sum() == 5000
    assert img.n_projected == 5000


def test_projection_is_order_independent():
    corpus = generate(CorpusSpec(n_particles=3000, seed=2))
    perm = np.random.default_rng(0).permutation(3000)
    shuffled = {k: corpus[k][perm] for k in ("x", "y", "z")}
    assert np.array_equal(project(corpus, "z").counts, project(shuffled, "z").counts)


def test_single_particle_single_cell():
    img = project(make_particles([128.5], [128.5], [128.5]), axis="z")
    assert img.counts.sum() == 1
    assert np.count_nonzero(img.counts) == 1
    assert img.normalized.max() == 1.0


def test_axis_selection_hand_placed():
    p = make_particles([10.5], [20.5], [30.5])
    # rows follow the second kept axis, columns the first
    assert project(p, "z").counts[20, 10] == 1  # keeps (x, y)
    assert project(p, "x").counts[30, 20] == 1  # keeps (y, z)
    assert project(p, "y").counts[30, 10] == 1  # keeps (x, z)


def test_out_of_box_coordinates_clamp():
    # decompressed values can poke out of the box by up to the bound
    img = project(make_particles([-0.002, 256.001], [5.0, 5.0], [0.0, 0.0]), "z")
    assert img.counts.sum() == 2
    assert img.counts[5, 0] == 1
    assert img.counts[5, 255] == 1


def test_empty_projection():
    img = project(make_particles([], [], []), "z")
    assert img.counts.sum() == 0
    assert img.normalized.max() == 0.0


def test_bad_axis_and_mismatched_lengths():
    with pytest.raises(ValueError):
        project(make_particles([1.0], [1.0], [1.0]), "w")
    with pytest.raises(ValueError):
        project(make_particles([1.0, 2.0], [1.0], [1.0]), "z")


def test_write_pgm_golden_bytes(tmp_path):
    img = np.array([[0.0, 0.5, 1.0], [1.0, 0.25, 0.0]])
    path = tmp_path / "img.pgm"
    write_pgm(path, img)
    data = path.read_bytes()
    assert data == b"P5\n3 2\n255\n" + bytes([0, 128, 255, 255, 64, 0])


# ---------------------------------------------------------------------------
# ssim


def gaussian_kernel():
    offs = np.arange(11, dtype=np.float64) - 5.0
    g = np.exp(-(offs**2) / (2.0 * 1.5**2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim_bruteforce(a, b, dynamic_range=1.0):
    """Direct loop over every 11x11 window; the oracle for the fast path."""
    k = gaussian_kernel()
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    h, w = a.shape
    scores = []
    for i in range(h - 10):
        for j in range(w - 10):
            pa = a[i : i + 11, j : j + 11]
            pb = b[i : i + 11, j : j + 11]
            mu_a = float((pa * k).sum())
            mu_b = float((pb * k).sum())
            va = float((pa * pa * k).sum()) - mu_a**2
            vb = float((pb * pb * k).sum()) - mu_b**2
            cov = float((pa * pb * k).sum()) - mu_a * mu_b
            scores.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2))
            )
    return float(np.mean(scores))


def test_ssim_identity_is_exactly_one():
    rng = np.random.default_rng(3)
    a = rng.uniform(0, 1, (32, 48))
    assert ssim(a, a) == 1.0


def test_ssim_is_symmetric_exactly():
    rng = np.random.default_rng(4)
    a = rng.uniform(0, 1, (24, 24))
    b = rng.uniform(0, 1, (24, 24))
    assert ssim(a, b) == ssim(b, a)


def test_ssim_never_exceeds_one():
    rng = np.random.default_rng(5)
    for _ in range(5):
        a = rng.uniform(0, 1, (16, 16))
        b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        assert ssim(a, b) <= 1.0


def test_ssim_matches_bruteforce_oracle():
    rng = np.random.default_rng(6)
    a = rng.uniform(0, 1, (16, 20))
    b = np.clip(a + rng.normal(0, 0.2, a.shape), 0, 1)
    assert ssim(a, b) == pytest.approx(ssim_bruteforce(a, b), abs=1e-12)
    assert ssim(a, a) == pytest.approx(ssim_bruteforce(a, a), abs=1e-12)


def test_ssim_inverted_binary_image_strongly_negative():
    rng = np.random.default_rng(7)
    # blocky two-level image: strong local structure to invert
    blocks = rng.integers(0, 2, (8, 8)).astype(np.float64)
    a = np.kron(blocks, np.ones((4, 4)))
    inverted = 1.0 - a
    got = ssim(a, inverted)
    assert got == pytest.approx(ssim_bruteforce(a, inverted), abs=1e-12)
    assert got < -0.2


def test_ssim_degrades_with_noise_but_stays_high_when_small():
    rng = np.random.default_rng(8)
    a = rng.uniform(0, 1, (64, 64))
    slightly = np.clip(a + rng.normal(0, 0.01, a.shape), 0, 1)
    badly = np.clip(a + rng.normal(0, 0.5, a.shape), 0, 1)
    assert ssim(a, slightly) > ssim(a, badly)
    assert ssim(a, slightly) > 0.9


def test_ssim_shape_errors():
    a = np.zeros((16, 16))
    with pytest.raises(ValueError):
        ssim(a, np.zeros((16, 17)))
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))  # smaller than the window


def test_projection_image_fields():
    corpus = generate(CorpusSpec(n_particles=100, seed=9))
    img = project(corpus, "z", width=64, height=32)
    assert isinstance(img, ProjectionImage)
    assert img.counts.shape == (32, 64)
    assert img.normalized.shape == (32, 64)
    assert 0.0 <= img.normalized.min() and img.normalized.max() <= 1.0
