"""Density projections and SSIM, the fidelity metrics for lossy staging.

A projection flattens particles along one axis into a W x H count grid, a
cheap deterministic stand-in for a rendered view.  SSIM then compares the
projection of decompressed data against the original's: 11x11 Gaussian
window (sigma 1.5), C1 = (0.01 R)^2, C2 = (0.03 R)^2 over normalized images
(R = 1), valid-mode windows, plain numpy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_WINDOW = 11
_SIGMA = 1.5
_K1 = 0.01
_K2 = 0.03

_AXES = {"x": (1, 2), "y": (0, 2), "z": (0, 1)}  # axis dropped -> axes kept


@dataclass(frozen=True)
class ProjectionImage:
    counts: np.ndarray  # (H, W) int64 raw particle counts per cell
    normalized: np.ndarray  # counts / counts.max(), in [0, 1]
    n_projected: int


def project(particles: dict, axis: str = "z", width: int = 256, height: int = 256,
            box_size: float = 256.0) -> ProjectionImage:
    """Orthographic count-binning of the two axes perpendicular to `axis`."""
    if axis not in _AXES:
        raise ValueError(f"axis must be one of x, y, z, got {axis!r}")
    names = ("x", "y", "z")
    a_keep, b_keep = (names[i] for i in _AXES[axis])
    u = np.asarray(particles[a_keep], dtype=np.float64)
    v = np.asarray(particles[b_keep], dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError("coordinate arrays differ in length")
    # decompressed coordinates may poke out of the box by up to the bound
    u = np.clip(u, 0.0, np.nextafter(box_size, 0.0))
    v = np.clip(v, 0.0, np.nextafter(box_size, 0.0))
    counts, _, _ = np.histogram2d(
        v, u, bins=(height, width), range=((0.0, box_size), (0.0, box_size))
    )
    counts = counts.astype(np.int64)
    peak = counts.max() if counts.size else 0
    normalized = counts / peak if peak else np.zeros_like(counts, dtype=np.float64)
    return ProjectionImage(counts=counts, normalized=normalized, n_projected=u.size)


def write_pgm(path, image: np.ndarray) -> None:
    """8-bit binary PGM (P5) of an array with values in [0, 1]."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    h, w = img.shape
    gray = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())


def _gaussian_window() -> np.ndarray:
    offsets = np.arange(_WINDOW, dtype=np.float64) - (_WINDOW - 1) / 2.0
    g = np.exp(-(offsets**2) / (2.0 * _SIGMA**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def ssim(a: np.ndarray, b: np.ndarray, dynamic_range: float = 1.0) -> float:
    """Mean structural similarity over all fully interior windows."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 2 or min(a.shape) < _WINDOW:
        raise ValueError(f"images must be 2-D and at least {_WINDOW}x{_WINDOW}")

    kernel = _gaussian_window()
    wa = np.lib.stride_tricks.sliding_window_view(a, (_WINDOW, _WINDOW))
    wb = np.lib.stride_tricks.sliding_window_view(b, (_WINDOW, _WINDOW))
    mu_a = np.einsum("ijkl,kl->ij", wa, kernel)
    mu_b = np.einsum("ijkl,kl->ij", wb, kernel)
    ea2 = np.einsum("ijkl,ijkl,kl->ij", wa, wa, kernel)
    eb2 = np.einsum("ijkl,ijkl,kl->ij", wb, wb, kernel)
    eab = np.einsum("ijkl,ijkl,kl->ij", wa, wb, kernel)
    var_a = ea2 - mu_a**2
    var_b = eb2 - mu_b**2
    cov = eab - mu_a * mu_b

    c1 = (_K1 * dynamic_range) ** 2
    c2 = (_K2 * dynamic_range) ** 2
    score = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )
    return float(score.mean())
