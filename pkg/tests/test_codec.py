"""Codec tests: container format, lossless stage, error-bounded lossy stage."""

import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stagex.codec import (
    HEADER_SIZE,
    BoundMode,
    Codec,
    CompressionSpec,
    byte_shuffle,
    byte_unshuffle,
    compress,
    compress_lossless,
    decompress,
    decompress_lossless,
    dtype_name,
    effective_abs_bound,
    parse_compression_entry,
    parse_header,
)
from stagex.errors import ConfigError, IntegrityError

ABS_3E3 = CompressionSpec("v", Codec.LOSSY, BoundMode.ABS, 0.003)


def lossy(value, mode=BoundMode.ABS):
    return CompressionSpec("v", Codec.LOSSY, mode, value)


# ---------------------------------------------------------------------------
# Container format


def test_header_is_42_bytes():
    assert HEADER_SIZE == 42


def test_none_container_layout_frozen():
    # Hand-assembled container for u8 payload [1, 2, 3]; CRC-32 of the body
    # is 1438416925 (computed with the reference zlib implementation).
    got = compress(b"\x01\x02\x03", CompressionSpec("v", Codec.NONE))
    want = struct.pack(
        "<4sBBQdQQI", b"SXC1", 0, 5, 3, 0.0, 3, 3, 1438416925
    ) + b"\x01\x02\x03"
    assert got == want


def test_header_fields_roundtrip():
    arr = np.arange(10, dtype=np.float64)
    blob = compress(arr, CompressionSpec("v", Codec.LOSSLESS))
    h = parse_header(blob)
    assert h.codec is Codec.LOSSLESS
    assert h.dtype_name == "f64"
    assert h.count == 10
    assert h.bound == 0.0
    assert h.original_size == 80
    assert h.body_size == len(blob) - HEADER_SIZE


def test_bad_magic_rejected():
    blob = bytearray(compress(b"abc", CompressionSpec("v", Codec.NONE)))
    blob[:4] = b"XXC1"
    with pytest.raises(IntegrityError):
        decompress(bytes(blob))


def test_truncated_container_rejected():
    blob = compress(np.arange(100, dtype=np.float32), CompressionSpec("v", Codec.LOSSLESS))
    with pytest.raises(IntegrityError):
        decompress(blob[: HEADER_SIZE - 1])
    with pytest.raises(IntegrityError):
        decompress(blob[:-1])


def test_body_corruption_rejected():
    blob = compress(np.arange(100, dtype=np.float32), CompressionSpec("v", Codec.LOSSLESS))
    for pos in (HEADER_SIZE, HEADER_SIZE + 5, len(blob) - 1):
        bad = bytearray(blob)
        bad[pos] ^= 0x40
        with pytest.raises(IntegrityError):
            decompress(bytes(bad))


def test_unknown_codec_and_dtype_ids_rejected():
    blob = bytearray(compress(b"abc", CompressionSpec("v", Codec.NONE)))
    bad_codec = bytearray(blob)
    bad_codec[4] = 9
    with pytest.raises(IntegrityError):
        parse_header(bytes(bad_codec))
    bad_dtype = bytearray(blob)
    bad_dtype[5] = 0
    with pytest.raises(IntegrityError):
        parse_header(bytes(bad_dtype))


def test_empty_input_all_codecs():
    for spec in (
        CompressionSpec("v", Codec.NONE),
        CompressionSpec("v", Codec.LOSSLESS),
        ABS_3E3,
    ):
        blob = compress(np.empty(0, dtype=np.float64), spec)
        values, h = decompress(blob)
        assert h.count == 0
        assert h.body_size == 0
        assert values.size == 0


# ---------------------------------------------------------------------------
# Lossless stage


def test_byte_shuffle_hand_example():
    # two 4-byte elements: transpose groups byte planes
    data = bytes([0xA0, 0xA1, 0xA2, 0xA3, 0xB0, 0xB1, 0xB2, 0xB3])
    assert byte_shuffle(data, 4) == bytes([0xA0, 0xB0, 0xA1, 0xB1, 0xA2, 0xB2, 0xA3, 0xB3])
    assert byte_unshuffle(byte_shuffle(data, 4), 4) == data


def test_shuffle_element_size_one_is_identity():
    data = b"hello world"
    assert byte_shuffle(data, 1) == data


def test_lossless_empty_is_empty_body():
    assert compress_lossless(b"", 8) == b""
    assert decompress_lossless(b"", 8) == b""


def test_lossless_constant_f32_compresses_below_one_percent():
    raw = np.full(10000, 1.0, dtype=np.float32).tobytes()
    body = compress_lossless(raw, 4)
    assert len(body) < len(raw) // 100
    assert decompress_lossless(body, 4) == raw


def test_lossless_random_bytes_roundtrip():
    rng = np.random.default_rng(7)
    raw = rng.integers(0, 256, 64, dtype=np.uint8).tobytes()
    body = compress_lossless(raw, 1)
    assert decompress_lossless(body, 1) == raw


def test_lossless_misaligned_length_rejected():
    with pytest.raises(ValueError):
        compress_lossless(b"12345", 4)


def test_lossless_garbage_body_rejected():
    with pytest.raises(IntegrityError):
        decompress_lossless(b"this is not deflate", 8)


@given(
    st.binary(min_size=0, max_size=2048),
    st.sampled_from([1, 4, 8]),
)
@settings(max_examples=100)
def test_lossless_roundtrip_property(payload, esize):
    payload = payload[: len(payload) - len(payload) % esize]
    assert decompress_lossless(compress_lossless(payload, esize), esize) == payload


@given(st.sampled_from(["f32", "f64", "i32", "i64", "u8"]), st.integers(0, 500))
@settings(max_examples=60)
def test_lossless_container_roundtrip_all_dtypes(name, n):
    rng = np.random.default_rng(n)
    arr = rng.integers(-100, 100, n).astype(name.replace("f", "float").replace("i", "int").replace("u8", "uint8"))
    blob = compress(arr, CompressionSpec("v", Codec.LOSSLESS))
    values, h = decompress(blob)
    assert h.dtype_name == name
    assert values.tobytes() == arr.astype(h.dtype).tobytes()


# ---------------------------------------------------------------------------
# Bound resolution


def test_abs_bound_is_value():
    assert effective_abs_bound(lossy(0.003), np.array([1.0, 9.0])) == 0.003


def test_rel_bound_scales_with_range():
    data = np.array([0.0, 64.0, 256.0])
    assert effective_abs_bound(lossy(0.01, BoundMode.REL), data) == 0.01 * 256.0


def test_psnr_bound_frozen_value():
    # 40 dB over unit range: sqrt(3) * 1.0 * 10^(-2)
    data = np.array([0.0, 1.0])
    got = effective_abs_bound(lossy(40.0, BoundMode.PSNR), data)
    assert got == pytest.approx(0.017320508075688773, rel=0, abs=1e-18)


def test_rel_bound_ignores_non_finite():
    data = np.array([0.0, np.nan, 256.0, np.inf])
    assert effective_abs_bound(lossy(0.01, BoundMode.REL), data) == 0.01 * 256.0


def test_rel_bound_on_constant_data_is_zero():
    assert effective_abs_bound(lossy(0.01, BoundMode.REL), np.full(5, 7.5)) == 0.0


# ---------------------------------------------------------------------------
# Lossy stage


def test_single_step_quantization_example():
    # residual 0.0059 at bound 0.003 quantizes to one step of 0.006,
    # leaving an error of 0.0001
    values, h = decompress(compress(np.array([0.0, 0.0059]), ABS_3E3))
    assert h.codec is Codec.LOSSY
    assert h.bound == 0.003
    assert values[0] == 0.0
    assert values[1] == 0.006
    assert abs(values[1] - 0.0059) <= 0.003


def test_constant_array_compresses_hard():
    arr = np.full(1000, 5.0)
    blob = compress(arr, ABS_3E3)
    assert len(blob) < arr.nbytes // 50
    values, _ = decompress(blob)
    assert np.all(np.abs(values - 5.0) <= 0.003)


def test_ramp_stays_within_bound():
    arr = np.arange(10000) * 0.004
    values, _ = decompress(compress(arr, ABS_3E3))
    assert np.all(np.abs(values - arr) <= 0.003)


def test_f32_bound_checked_in_f32():
    rng = np.random.default_rng(3)
    arr = (rng.normal(0.0, 1.0, 5000).astype(np.float32) * 100).astype(np.float32)
    blob = compress(arr, ABS_3E3)
    values, h = decompress(blob)
    assert values.dtype == np.dtype("<f4")
    assert np.all(np.abs(values.astype(np.float64) - arr.astype(np.float64)) <= 0.003)


def test_non_finite_values_survive_bit_exact():
    arr = np.array([1.0, np.nan, 1.001, np.inf, -np.inf, 1.002, np.nan])
    values, _ = decompress(compress(arr, ABS_3E3))
    finite = np.isfinite(arr)
    assert np.all(np.abs(values[finite] - arr[finite]) <= 0.003)
    assert values.view(np.uint64)[~finite].tolist() == arr.view(np.uint64)[~finite].tolist()


def test_zero_effective_bound_encodes_exactly():
    # rel bound on constant data resolves to 0: every element escapes verbatim
    arr = np.full(100, 7.5)
    blob = compress(arr, lossy(0.01, BoundMode.REL))
    values, h = decompress(blob)
    assert h.bound == 0.0
    assert values.tobytes() == arr.tobytes()


def test_huge_magnitudes_fall_back_to_literals():
    arr = np.array([0.0, 1e300, -1e300, 1e-300, 5.0])
    values, _ = decompress(compress(arr, ABS_3E3))
    assert np.all(np.abs(values - arr) <= 0.003)


def test_lossy_requires_float_dtype():
    with pytest.raises(ConfigError):
        compress(np.arange(10, dtype=np.int64), ABS_3E3)


def test_lossy_zero_abs_bound_rejected_at_spec():
    with pytest.raises(ConfigError):
        CompressionSpec("v", Codec.LOSSY, BoundMode.ABS, 0.0)
    with pytest.raises(ConfigError):
        CompressionSpec("v", Codec.LOSSY, BoundMode.ABS, -1.0)
    with pytest.raises(ConfigError):
        CompressionSpec("v", Codec.LOSSY)


def test_compression_is_deterministic():
    rng = np.random.default_rng(11)
    arr = rng.normal(0.0, 1.0, 20000)
    assert compress(arr, ABS_3E3) == compress(arr, ABS_3E3)
    spec = CompressionSpec("v", Codec.LOSSLESS)
    assert compress(arr, spec) == compress(arr, spec)


def test_looser_bound_never_compresses_worse():
    rng = np.random.default_rng(42)
    centers = rng.uniform(0, 256, 40)
    arr = np.concatenate([rng.normal(c, 4.0, 2500) for c in centers])
    sizes = [len(compress(arr, lossy(b))) for b in (0.0003, 0.003, 0.03)]
    assert sizes[0] > sizes[1] > sizes[2]


def test_clustered_data_beats_2x_at_default_bound():
    rng = np.random.default_rng(1234)
    centers = rng.uniform(0, 256, 40)
    arr = np.concatenate([rng.normal(c, 4.0, 2500) for c in centers])
    blob = compress(arr, ABS_3E3)
    assert arr.nbytes / len(blob) >= 2.0
    values, _ = decompress(blob)
    assert np.all(np.abs(values - arr) <= 0.003)


def test_lossy_body_shorter_than_bitmap_rejected():
    blob = compress(np.zeros(100), ABS_3E3)
    h = parse_header(blob)
    bad_body = zlib.compress(b"\x00\x00")  # 2 bytes < 13-byte bitmap
    bad = blob[:HEADER_SIZE] + bad_body
    bad = bytearray(bad)
    struct.pack_into("<Q", bad, 30, len(bad_body))
    struct.pack_into("<I", bad, 38, zlib.crc32(bad_body))
    with pytest.raises(IntegrityError):
        decompress(bytes(bad))
    assert h.count == 100


FLOATS = st.one_of(
    st.floats(min_value=-1e308, max_value=1e308),
    st.sampled_from([float("nan"), float("inf"), float("-inf"), 0.0, -0.0]),
)


@given(
    st.lists(FLOATS, min_size=0, max_size=300),
    st.sampled_from([0.0003, 0.003, 0.03, 1.5]),
)
@settings(max_examples=150, deadline=None)
def test_lossy_bound_property_f64(xs, bound):
    arr = np.array(xs, dtype=np.float64)
    values, h = decompress(compress(arr, lossy(bound)))
    assert values.size == arr.size
    finite = np.isfinite(arr)
    assert np.all(np.abs(values[finite] - arr[finite]) <= bound)
    if (~finite).any():
        assert (
            values.view(np.uint64)[~finite].tolist()
            == arr.view(np.uint64)[~finite].tolist()
        )


@given(st.lists(FLOATS, min_size=0, max_size=300), st.sampled_from([0.003, 0.5]))
@settings(max_examples=100, deadline=None)
def test_lossy_bound_property_f32(xs, bound):
    with np.errstate(over="ignore"):  # huge f64 values become inf literals
        arr = np.array(xs, dtype=np.float64).astype(np.float32)
    values, _ = decompress(compress(arr, lossy(bound)))
    finite = np.isfinite(arr)
    err = np.abs(values[finite].astype(np.float64) - arr[finite].astype(np.float64))
    assert np.all(err <= bound)
    if (~finite).any():
        assert (
            values.view(np.uint32)[~finite].tolist()
            == arr.view(np.uint32)[~finite].tolist()
        )


@given(
    st.lists(st.floats(min_value=-1e4, max_value=1e4), min_size=1, max_size=200),
    st.sampled_from([BoundMode.REL, BoundMode.PSNR]),
)
@settings(max_examples=80, deadline=None)
def test_relative_modes_resolve_and_hold(xs, mode):
    arr = np.array(xs, dtype=np.float64)
    value = 0.01 if mode is BoundMode.REL else 40.0
    spec = lossy(value, mode)
    blob = compress(arr, spec)
    values, h = decompress(blob)
    assert h.bound == effective_abs_bound(spec, arr)
    if h.bound == 0.0:
        assert values.tobytes() == arr.tobytes()
    else:
        assert np.all(np.abs(values - arr) <= h.bound)


# ---------------------------------------------------------------------------
# Spec parsing


def test_parse_lossless_entry():
    spec = parse_compression_entry({"name": "id", "compressor": "BLOSC"})
    assert spec.codec is Codec.LOSSLESS
    assert spec.name == "id"


def test_parse_lossy_entry():
    spec = parse_compression_entry(
        {"name": "x", "compressor": "SZ3", "mode": "abs", "value": 0.003}
    )
    assert spec == CompressionSpec("x", Codec.LOSSY, BoundMode.ABS, 0.003)


def test_parse_mode_case_insensitive():
    spec = parse_compression_entry(
        {"name": "x", "compressor": "SZ3", "mode": "ABS", "value": 1.0}
    )
    assert spec.mode is BoundMode.ABS


def test_parse_unknown_compressor_names_field():
    with pytest.raises(ConfigError, match="'x'.*'ZFP'"):
        parse_compression_entry({"name": "x", "compressor": "ZFP"})


def test_parse_lossy_missing_mode_or_value():
    with pytest.raises(ConfigError, match="mode"):
        parse_compression_entry({"name": "x", "compressor": "SZ3", "value": 1.0})
    with pytest.raises(ConfigError, match="value"):
        parse_compression_entry({"name": "x", "compressor": "SZ3", "mode": "abs"})
    with pytest.raises(ConfigError, match="mode"):
        parse_compression_entry(
            {"name": "x", "compressor": "SZ3", "mode": "nearly", "value": 1.0}
        )


def test_dtype_aliases():
    assert dtype_name("float") == "f32"
    assert dtype_name("double") == "f64"
    assert dtype_name("int64") == "i64"
    with pytest.raises(ConfigError):
        dtype_name("complex128")
