"""Benchmarks and fidelity reports, all emitting stable-schema JSON dicts.

Three report producers live here: put/get latency over payload sizes,
codec ratio/throughput per variable, and the projection-SSIM comparison.
Throughput numbers are always derivable from the raw fields next to them
(mb_per_s = bytes / seconds / 1e6), so a report can be audited after the
fact.  MB means 10^6 bytes.
"""

from __future__ import annotations

import os
import statistics
import time

import numpy as np

from . import codec, imaging, synth
from .codec import BoundMode, Codec, CompressionSpec
from .errors import ConfigError, TransportError
from .server import ServerConfig, StoreServer, tune_malloc_for_large_values
from .synth import CorpusSpec
from .transport import Connection

_MB = 1e6


def _mb_per_s(n_bytes: int, seconds: float) -> float:
    if n_bytes == 0:
        return 0.0
    return n_bytes / max(seconds, 1e-9) / _MB


DEFAULT_PUTGET_SIZES = [2**i * 2**20 for i in range(0, 9)]  # 1 MiB .. 256 MiB


def bench_putget(
    endpoint: str, sizes=None, repetitions: int = 3, seed: int = 0, warmup: int = 1
) -> dict:
    """Time PUT then GET of a random payload at each size; medians reported.

    Rounds are interleaved across sizes (round 1 touches every size, then
    round 2, ...) so a transient slowdown lands on single repetitions of
    many sizes instead of poisoning one size's whole sample.  Each size
    gets ``warmup`` untimed rounds first so the timed repetitions measure
    steady state (TCP windows, allocator, page cache) rather than
    first-touch costs.  Every GET is compared against the payload it
    should return, and the keys are deleted afterwards so the server's
    footprint stays flat.  Tunes this process's allocator for large
    buffers (see tune_malloc_for_large_values).
    """
    if repetitions < 1:
        raise ConfigError(f"repetitions must be >= 1, got {repetitions}")
    if warmup < 0:
        raise ConfigError(f"warmup must be >= 0, got {warmup}")
    sizes = DEFAULT_PUTGET_SIZES if sizes is None else list(sizes)
    for size in sizes:
        if size < 0:
            raise ConfigError(f"payload size must be >= 0, got {size}")
    tune_malloc_for_large_values()
    rng = np.random.default_rng(seed)
    payloads = {size: rng.bytes(size) for size in sizes}
    keys = {size: f"bench/putget/{size}".encode() for size in sizes}
    put_times = {size: [] for size in sizes}
    get_times = {size: [] for size in sizes}
    with Connection(endpoint, timeout=300.0) as conn:
        try:
            for _ in range(warmup):
                for size in sizes:
                    conn.put(keys[size], payloads[size])
                    conn.get(keys[size])
            for _ in range(repetitions):
                for size in sizes:
                    t0 = time.perf_counter()
                    conn.put(keys[size], payloads[size])
                    put_times[size].append(time.perf_counter() - t0)
                    t0 = time.perf_counter()
                    back = conn.get(keys[size])
                    get_times[size].append(time.perf_counter() - t0)
                    if back != payloads[size]:
                        raise TransportError(
                            endpoint, f"GET returned wrong bytes for {keys[size]!r}"
                        )
        finally:
            for size in set(sizes):
                conn.delete(keys[size])
    results = []
    for size in sizes:
        put_med = statistics.median(put_times[size])
        get_med = statistics.median(get_times[size])
        results.append(
            {
                "bytes": size,
                "put_seconds_median": put_med,
                "put_seconds_all": put_times[size],
                "put_mb_per_s": _mb_per_s(size, put_med),
                "get_seconds_median": get_med,
                "get_seconds_all": get_times[size],
                "get_mb_per_s": _mb_per_s(size, get_med),
            }
        )
    return {
        "operation": "putget",
        "endpoint": endpoint,
        "repetitions": repetitions,
        "warmup": warmup,
        "results": results,
    }


def default_codec_specs(bound: float = 0.003) -> list[CompressionSpec]:
    """Coordinates lossy at the given absolute bound, ids lossless."""
    if bound == 0:
        raise ConfigError(
            "a zero error bound is not a lossy setting; use the lossless "
            "compressor instead"
        )
    return [
        CompressionSpec("x", Codec.LOSSY, BoundMode.ABS, bound),
        CompressionSpec("y", Codec.LOSSY, BoundMode.ABS, bound),
        CompressionSpec("z", Codec.LOSSY, BoundMode.ABS, bound),
        CompressionSpec("id", Codec.LOSSLESS),
    ]


def bench_codec(corpus_spec: CorpusSpec, specs=None, endpoint: str | None = None) -> dict:
    """Per-variable compression ratio, codec throughput, and max error.

    End-to-end numbers (compress + PUT over TCP) use the given server, or a
    throwaway in-process one when none is given.
    """
    specs = default_codec_specs() if specs is None else list(specs)
    corpus = synth.generate(corpus_spec)
    own_server = None
    if endpoint is None:
        own_server = StoreServer(ServerConfig(host="127.0.0.1", port=0))
        endpoint = own_server.start_background()
    variables = []
    try:
        with Connection(endpoint, timeout=300.0) as conn:
            for spec in specs:
                if spec.name not in corpus:
                    raise ConfigError(
                        f"no corpus variable {spec.name!r}; have {sorted(corpus)}"
                    )
                values = corpus[spec.name]

                t0 = time.perf_counter()
                container = codec.compress(values, spec)
                dt_compress = time.perf_counter() - t0
                t0 = time.perf_counter()
                decoded, header = codec.decompress(container)
                dt_decode = time.perf_counter() - t0

                if spec.codec is Codec.LOSSY and values.size:
                    max_err = float(np.max(np.abs(decoded - values)))
                    bit_exact = False
                else:
                    max_err = 0.0
                    bit_exact = decoded.tobytes() == np.ascontiguousarray(values).tobytes()
                    if not bit_exact:
                        raise ConfigError(
                            f"variable {spec.name!r}: exact codec failed to round-trip"
                        )

                t0 = time.perf_counter()
                again = codec.compress(values, spec)
                conn.put(f"bench/codec/{spec.name}".encode(), again)
                dt_e2e = time.perf_counter() - t0
                conn.delete(f"bench/codec/{spec.name}".encode())

                original = header.original_size
                variables.append(
                    {
                        "name": spec.name,
                        "compressor": spec.compressor_name,
                        "mode": spec.mode.value if spec.mode else None,
                        "value": spec.value,
                        "eps": header.bound,
                        "count": header.count,
                        "original_bytes": original,
                        "compressed_bytes": len(container),
                        "ratio": original / len(container) if original else 0.0,
                        "compress_seconds": dt_compress,
                        "compress_mb_per_s": _mb_per_s(original, dt_compress),
                        "decode_seconds": dt_decode,
                        "decode_mb_per_s": _mb_per_s(original, dt_decode),
                        "e2e_seconds": dt_e2e,
                        "e2e_mb_per_s": _mb_per_s(original, dt_e2e),
                        "max_abs_error": max_err,
                        "bit_exact": bit_exact,
                    }
                )
    finally:
        if own_server is not None:
            own_server.stop()
    return {
        "operation": "codec",
        "corpus": {
            "n_particles": corpus_spec.n_particles,
            "n_halos": corpus_spec.n_halos,
            "box_size": corpus_spec.box_size,
            "sigma": corpus_spec.effective_sigma,
            "background_fraction": corpus_spec.background_fraction,
            "seed": corpus_spec.seed,
        },
        "variables": variables,
    }


def project_ssim(
    corpus_spec: CorpusSpec,
    bound: float = 0.003,
    axis: str = "z",
    width: int = 256,
    height: int = 256,
    pgm_dir=None,
) -> dict:
    """SSIM between projections of the corpus before and after lossy staging."""
    if bound == 0:
        raise ConfigError(
            "a zero error bound is not a lossy setting; use the lossless "
            "compressor instead"
        )
    corpus = synth.generate(corpus_spec)
    decoded = dict(corpus)
    for var in ("x", "y", "z"):
        spec = CompressionSpec(var, Codec.LOSSY, BoundMode.ABS, bound)
        decoded[var], _ = codec.decompress(codec.compress(corpus[var], spec))
    box = corpus_spec.box_size
    original = imaging.project(corpus, axis, width, height, box)
    staged = imaging.project(decoded, axis, width, height, box)
    score = imaging.ssim(original.normalized, staged.normalized)
    written = []
    if pgm_dir is not None:
        os.makedirs(pgm_dir, exist_ok=True)
        for tag, img in (("original", original), ("staged", staged)):
            path = os.path.join(pgm_dir, f"{tag}.pgm")
            imaging.write_pgm(path, img.normalized)
            written.append(path)
    return {
        "operation": "project-ssim",
        "bound": bound,
        "axis": axis,
        "width": width,
        "height": height,
        "n_particles": corpus_spec.n_particles,
        "seed": corpus_spec.seed,
        "ssim": score,
        "pgm_files": written,
    }
