"""Synthetic particle corpus: Gaussian halos plus a uniform background.

Stands in for cosmology snapshot data: most particles clump into compact
halos, the rest spread uniformly through the box.  Points are stored
halo by halo, so coordinates arrive in spatially correlated runs, which is
what gives the lossy codec realistic traction.  Everything is driven by
seeded generators: one spec always yields byte-identical arrays, and each
(step, rank) pair gets an independent stream derived from the base seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

VARIABLES = ("x", "y", "z", "id")


@dataclass(frozen=True)
class CorpusSpec:
    """Recipe for one particle set; same spec, same particles."""

    n_particles: int = 2_000_000
    n_halos: int = 40
    box_size: float = 256.0
    sigma: float | None = None  # halo spread; defaults to box_size / 64
    background_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 0:
            raise ConfigError(f"n_particles must be >= 0, got {self.n_particles}")
        if self.n_halos < 1:
            raise ConfigError(f"n_halos must be >= 1, got {self.n_halos}")
        if not self.box_size > 0:
            raise ConfigError(f"box_size must be > 0, got {self.box_size}")
        if not 0.0 <= self.background_fraction <= 1.0:
            raise ConfigError(
                f"background_fraction must be in [0, 1], got {self.background_fraction}"
            )
        if self.sigma is not None and not self.sigma > 0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")

    @property
    def effective_sigma(self) -> float:
        return self.box_size / 64.0 if self.sigma is None else self.sigma


def _positions(rng: np.random.Generator, n: int, spec: CorpusSpec) -> np.ndarray:
    """(n, 3) coordinates in [0, box); halo points first, halo by halo."""
    box = spec.box_size
    n_background = int(round(n * spec.background_fraction))
    n_clustered = n - n_background
    centers = rng.uniform(0.0, box, (spec.n_halos, 3))
    base, extra = divmod(n_clustered, spec.n_halos)
    parts = []
    for i in range(spec.n_halos):
        count = base + (1 if i < extra else 0)
        if count:
            parts.append(centers[i] + rng.normal(0.0, spec.effective_sigma, (count, 3)))
    if n_background:
        parts.append(rng.uniform(0.0, box, (n_background, 3)))
    if not parts:
        return np.empty((0, 3))
    points = np.concatenate(parts)
    # clamp halo tails back into [0, box)
    return np.clip(points, 0.0, np.nextafter(box, 0.0))


def _corpus(rng: np.random.Generator, n: int, spec: CorpusSpec, id_start: int) -> dict:
    points = _positions(rng, n, spec)
    return {
        "x": np.ascontiguousarray(points[:, 0]),
        "y": np.ascontiguousarray(points[:, 1]),
        "z": np.ascontiguousarray(points[:, 2]),
        "id": np.arange(id_start, id_start + n, dtype=np.int64),
    }


def generate(spec: CorpusSpec) -> dict:
    """Whole corpus as {"x", "y", "z": f64 arrays, "id": i64 0..n-1}."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    return _corpus(rng, spec.n_particles, spec, id_start=0)


def rank_counts(n_particles: int, num_ranks: int) -> list[int]:
    """Split n particles over ranks; counts differ by at most one."""
    if num_ranks < 1:
        raise ConfigError(f"num_ranks must be >= 1, got {num_ranks}")
    base, extra = divmod(n_particles, num_ranks)
    return [base + (1 if r < extra else 0) for r in range(num_ranks)]


def rank_slice(spec: CorpusSpec, rank: int, num_ranks: int, step: int = 0) -> dict:
    """One rank's share for one step, reproducible by anyone with the spec.

    Streams are independent per (step, rank), so ranks need no coordination;
    ids partition 0..n-1 across ranks in rank order.
    """
    counts = rank_counts(spec.n_particles, num_ranks)
    if not 0 <= rank < num_ranks:
        raise ConfigError(f"rank must be in [0, {num_ranks}), got {rank}")
    rng = np.random.default_rng(
        np.random.SeedSequence(spec.seed, spawn_key=(step, rank))
    )
    return _corpus(rng, counts[rank], spec, id_start=sum(counts[:rank]))
