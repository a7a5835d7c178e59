"""Benchmark report tests: schema stability and internal consistency."""

import statistics

import numpy as np
import pytest

from stagex.bench import bench_codec, bench_putget, default_codec_specs, project_ssim
from stagex.codec import BoundMode, Codec, CompressionSpec
from stagex.errors import ConfigError
from stagex.synth import CorpusSpec

SMALL = CorpusSpec(n_particles=30000, seed=3)


def assert_throughput_consistent(mb_per_s, n_bytes, seconds):
    if n_bytes == 0:
        assert mb_per_s == 0.0
    else:
        assert mb_per_s == pytest.approx(n_bytes / max(seconds, 1e-9) / 1e6, rel=1e-9)


# ---------------------------------------------------------------------------
# putget


def test_putget_report_schema_and_consistency(local_server):
    sizes = [0, 1024, 65536]
    report = bench_putget(local_server, sizes, repetitions=3, seed=1)
    assert report["operation"] == "putget"
    assert report["endpoint"] == local_server
    assert [r["bytes"] for r in report["results"]] == sizes
    for r in report["results"]:
        for op in ("put", "get"):
            times = r[f"{op}_seconds_all"]
            assert len(times) == 3
            assert r[f"{op}_seconds_median"] == statistics.median(times)
            assert_throughput_consistent(
                r[f"{op}_mb_per_s"], r["bytes"], r[f"{op}_seconds_median"]
            )


def test_putget_cleans_up_after_itself(local_server):
    from stagex.transport import Connection

    bench_putget(local_server, [2048], repetitions=2)
    with Connection(local_server) as conn:
        assert conn.list_prefix(b"bench/") == []


def test_putget_rejects_bad_arguments(local_server):
    with pytest.raises(ConfigError):
        bench_putget(local_server, [1024], repetitions=0)
    with pytest.raises(ConfigError):
        bench_putget(local_server, [-1])


# ---------------------------------------------------------------------------
# codec bench


def test_codec_report_fields_and_bounds():
    report = bench_codec(SMALL)  # uses a throwaway in-process server
    assert report["operation"] == "codec"
    assert report["corpus"]["n_particles"] == 30000
    by_name = {v["name"]: v for v in report["variables"]}
    assert set(by_name) == {"x", "y", "z", "id"}
    for var in ("x", "y", "z"):
        v = by_name[var]
        assert v["compressor"] == "SZ3"
        assert v["eps"] == 0.003
        assert v["max_abs_error"] <= 0.003
        assert v["ratio"] > 1.0
        assert v["original_bytes"] == 30000 * 8
        assert_throughput_consistent(
            v["compress_mb_per_s"], v["original_bytes"], v["compress_seconds"]
        )
        assert_throughput_consistent(
            v["e2e_mb_per_s"], v["original_bytes"], v["e2e_seconds"]
        )
    ids = by_name["id"]
    assert ids["compressor"] == "BLOSC"
    assert ids["bit_exact"] is True
    assert ids["max_abs_error"] == 0.0
    assert ids["ratio"] > 1.0  # sequential ids delta well after the shuffle


def test_codec_bench_against_external_server(local_server):
    report = bench_codec(SMALL, endpoint=local_server)
    assert {v["name"] for v in report["variables"]} == {"x", "y", "z", "id"}


def test_codec_bench_unknown_variable():
    with pytest.raises(ConfigError, match="corpus variable"):
        bench_codec(SMALL, [CompressionSpec("vx", Codec.NONE)])


def test_default_specs_reject_zero_bound():
    with pytest.raises(ConfigError, match="zero error bound"):
        default_codec_specs(0.0)


def test_codec_bench_respects_custom_specs():
    specs = [CompressionSpec("x", Codec.LOSSY, BoundMode.REL, 0.001)]
    report = bench_codec(SMALL, specs)
    (v,) = report["variables"]
    assert v["mode"] == "rel"
    assert v["eps"] > 0
    assert v["max_abs_error"] <= v["eps"]


# ---------------------------------------------------------------------------
# projection ssim


def test_project_ssim_report(tmp_path):
    report = project_ssim(SMALL, bound=0.003, pgm_dir=str(tmp_path / "imgs"))
    assert report["operation"] == "project-ssim"
    assert report["bound"] == 0.003
    # 0.003 displacement on 1-unit cells barely moves any particle
    assert report["ssim"] > 0.9
    assert len(report["pgm_files"]) == 2
    for path in report["pgm_files"]:
        head = open(path, "rb").read(2)
        assert head == b"P5"


def test_project_ssim_degrades_with_huge_bound():
    fine = project_ssim(SMALL, bound=0.003)
    coarse = project_ssim(SMALL, bound=64.0)
    assert coarse["ssim"] < fine["ssim"]


def test_project_ssim_zero_bound_rejected():
    with pytest.raises(ConfigError, match="zero error bound"):
        project_ssim(SMALL, bound=0.0)
