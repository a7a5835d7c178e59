"""Chunk codec: lossless and error-bounded lossy compression of 1-D arrays.

Every stored chunk is a self-describing container:

    header (42 bytes, little-endian)
        magic          4 bytes  "SXC1"
        codec          u8       0=NONE, 1=LOSSLESS, 2=LOSSY
        dtype          u8       1=f32, 2=f64, 3=i32, 4=i64, 5=u8
        count          u64      number of elements
        bound          f64      absolute error bound enforced (0 if exact)
        original_size  u64      uncompressed payload bytes
        body_size      u64      bytes following the header, exactly
        checksum       u32      CRC-32 of the body
    body           body_size bytes

LOSSLESS bodies are deflate(byte_shuffle(data)): the shuffle transposes the
bytes of each element (all first bytes, then all second bytes, ...), which
groups the low-entropy high-order bytes of numeric data into long runs for
the dictionary stage (zlib).

LOSSY bodies hold a quantized token stream.  Values are predicted from the
previously *reconstructed* value (first prediction is 0); the residual is
quantized to a signed 32-bit code at step 2*bound, so every reconstructed
element lands within `bound` of its original.  Elements that cannot be coded
within the bound (non-finite values, codes outside +/-2^30, float rounding
at extreme magnitudes) are escaped as verbatim literals, reproduced
bit-exactly.  Serialized layout, then deflated as one block:

    bitmap     ceil(count/8) bytes, little bit order; bit=1 marks a literal
    codes      (count - n_literals) * i32, byte-shuffled
    literals   n_literals elements, raw little-endian

All functions here are pure and thread-safe.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np

from .errors import ConfigError, IntegrityError

CONTAINER_MAGIC = b"SXC1"
_HEADER = struct.Struct("<4sBBQdQQI")
HEADER_SIZE = _HEADER.size  # 42

_ZLIB_LEVEL = 6
_MAX_CODE = 1 << 30
_CODE_DTYPE = np.dtype("<i4")


class Codec(IntEnum):
    NONE = 0
    LOSSLESS = 1
    LOSSY = 2


class BoundMode(Enum):
    ABS = "abs"
    REL = "rel"
    PSNR = "psnr"


# dtype code -> (name, numpy dtype). Explicit little-endian so containers are
# byte-identical regardless of host order.
_DTYPES = {
    1: ("f32", np.dtype("<f4")),
    2: ("f64", np.dtype("<f8")),
    3: ("i32", np.dtype("<i4")),
    4: ("i64", np.dtype("<i8")),
    5: ("u8", np.dtype("u1")),
}
_DTYPE_CODE_BY_NAME = {name: code for code, (name, _) in _DTYPES.items()}
_DTYPE_CODE_BY_KIND = {np.dtype(d).str.lstrip("<=|"): c for c, (_, d) in _DTYPES.items()}

# Accepted spellings in caller-facing APIs (simulation codes say "float",
# "double", ...).
DTYPE_ALIASES = {
    "float": "f32", "float32": "f32", "f32": "f32",
    "double": "f64", "float64": "f64", "f64": "f64",
    "int": "i32", "int32": "i32", "i32": "i32",
    "long": "i64", "int64": "i64", "i64": "i64",
    "byte": "u8", "uint8": "u8", "u8": "u8",
}

_COMPRESSOR_NAMES = {"BLOSC": Codec.LOSSLESS, "SZ3": Codec.LOSSY, "NONE": Codec.NONE}
_CODEC_TO_NAME = {Codec.LOSSLESS: "BLOSC", Codec.LOSSY: "SZ3", Codec.NONE: "NONE"}


def dtype_name(alias: str) -> str:
    try:
        return DTYPE_ALIASES[alias.lower()]
    except KeyError:
        raise ConfigError(
            f"unsupported dtype {alias!r}; expected one of {sorted(set(DTYPE_ALIASES))}"
        ) from None


def numpy_dtype(name: str) -> np.dtype:
    return _DTYPES[_DTYPE_CODE_BY_NAME[dtype_name(name)]][1]


@dataclass(frozen=True)
class CompressionSpec:
    """Per-variable codec choice: which compressor, and the error bound."""

    name: str
    codec: Codec
    mode: BoundMode | None = None
    value: float = 0.0

    def __post_init__(self):
        if self.codec is Codec.LOSSY:
            if self.mode is None:
                raise ConfigError(f"field {self.name!r}: lossy compression needs a mode")
            if not self.value > 0:
                raise ConfigError(
                    f"field {self.name!r}: lossy bound must be > 0, got {self.value}"
                )

    @property
    def compressor_name(self) -> str:
        return _CODEC_TO_NAME[self.codec]


def parse_compression_entry(obj: dict) -> CompressionSpec:
    """Parse one entry of the config's "data" list.

    Schema: {"name": ..., "compressor": "BLOSC"|"SZ3"|"NONE",
             "mode": "abs"|"rel"|"psnr", "value": number} with mode/value
    required only for SZ3.
    """
    if not isinstance(obj, dict) or "name" not in obj:
        raise ConfigError(f"compression entry must be an object with a name: {obj!r}")
    name = obj["name"]
    comp = obj.get("compressor", "NONE")
    if comp not in _COMPRESSOR_NAMES:
        raise ConfigError(
            f"field {name!r}: unknown compressor {comp!r} "
            f"(expected one of {sorted(_COMPRESSOR_NAMES)})"
        )
    codec = _COMPRESSOR_NAMES[comp]
    if codec is not Codec.LOSSY:
        return CompressionSpec(name=name, codec=codec)
    mode_raw = obj.get("mode")
    if mode_raw is None:
        raise ConfigError(f"field {name!r}: compressor SZ3 requires a mode")
    try:
        mode = BoundMode(str(mode_raw).lower())
    except ValueError:
        raise ConfigError(
            f"field {name!r}: unknown mode {mode_raw!r} (expected abs, rel, or psnr)"
        ) from None
    if "value" not in obj:
        raise ConfigError(f"field {name!r}: compressor SZ3 requires a value")
    return CompressionSpec(name=name, codec=codec, mode=mode, value=float(obj["value"]))


@dataclass(frozen=True)
class ContainerHeader:
    codec: Codec
    dtype_code: int
    count: int
    bound: float
    original_size: int
    body_size: int
    checksum: int

    @property
    def dtype(self) -> np.dtype:
        return _DTYPES[self.dtype_code][1]

    @property
    def dtype_name(self) -> str:
        return _DTYPES[self.dtype_code][0]


# ---------------------------------------------------------------------------
# Lossless stage


def byte_shuffle(data: bytes, element_size: int) -> bytes:
    """Transpose element bytes: all byte-0s, then all byte-1s, ..."""
    if element_size == 1 or not data:
        return bytes(data)
    return np.frombuffer(data, np.uint8).reshape(-1, element_size).T.tobytes()


def byte_unshuffle(data: bytes, element_size: int) -> bytes:
    if element_size == 1 or not data:
        return bytes(data)
    return np.frombuffer(data, np.uint8).reshape(element_size, -1).T.tobytes()


def _check_element_size(data_len: int, element_size: int) -> None:
    if element_size not in (1, 4, 8):
        raise ValueError(f"element_size must be 1, 4, or 8, got {element_size}")
    if data_len % element_size:
        raise ValueError(f"{data_len} bytes is not a whole number of {element_size}-byte elements")


def compress_lossless(data: bytes, element_size: int) -> bytes:
    """Shuffle + dictionary stage. Empty input stays an empty body."""
    _check_element_size(len(data), element_size)
    if not data:
        return b""
    return zlib.compress(byte_shuffle(data, element_size), _ZLIB_LEVEL)


def decompress_lossless(body: bytes, element_size: int) -> bytes:
    if not body:
        return b""
    try:
        raw = zlib.decompress(body)
    except zlib.error as exc:
        raise IntegrityError(f"lossless body does not inflate: {exc}") from exc
    try:
        _check_element_size(len(raw), element_size)
    except ValueError as exc:
        raise IntegrityError(str(exc)) from exc
    return byte_unshuffle(raw, element_size)


# ---------------------------------------------------------------------------
# Error bound


def effective_abs_bound(spec: CompressionSpec, values: np.ndarray) -> float:
    """Resolve the spec's bound to the absolute bound actually enforced.

    abs: the value itself.  rel: value * finite data range.  psnr: value is
    a dB target; under a uniform quantizer with step 2e the RMSE is e/sqrt(3),
    so e = sqrt(3) * range * 10^(-dB/20).  A zero bound (constant or empty
    data under rel/psnr) signals the caller to escape every element verbatim.
    """
    if spec.mode is BoundMode.ABS:
        return float(spec.value)
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return 0.0
    span = float(finite.max()) - float(finite.min())
    if spec.mode is BoundMode.REL:
        return float(spec.value) * span
    if spec.mode is BoundMode.PSNR:
        return float(np.sqrt(3.0) * span * 10.0 ** (-float(spec.value) / 20.0))
    raise ConfigError(f"field {spec.name!r}: no error mode set")


# ---------------------------------------------------------------------------
# Lossy token stream


def _grid_values(anchor: float, steps: np.ndarray, step_size: float, dtype) -> np.ndarray:
    # The one reconstruction formula shared by encoder and decoder, so both
    # sides land on bit-identical values.  Out-of-range candidates may
    # overflow here; callers reject or overwrite those lanes.
    with np.errstate(over="ignore", invalid="ignore"):
        return (anchor + step_size * steps.astype(np.float64)).astype(dtype)


def _quantize(values: np.ndarray, bound: float) -> tuple[np.ndarray, np.ndarray]:
    """Encode values against the previous reconstructed value.

    Returns (codes int32 over non-literal elements, literal bool mask).
    Quantization indices are taken relative to the last literal (the
    delta recursion telescopes to that), so runs between literals
    vectorize; each candidate is verified in the output dtype and escaped
    to a literal if the bound or the code range would be violated.
    """
    n = values.size
    mask = np.zeros(n, dtype=bool)
    codes_full = np.zeros(n, dtype=np.int64)
    step = 2.0 * bound
    if n == 0:
        return codes_full[:0].astype(_CODE_DTYPE), mask
    if not (step > 0.0) or not np.isfinite(step):
        mask[:] = True
        return codes_full[:0].astype(_CODE_DTYPE), mask

    v64 = values.astype(np.float64)
    pos = 0
    anchor = 0.0  # reconstructed value preceding the window
    prev_index = 0  # quantization index of the previous element on this grid
    window = n
    while pos < n:
        if not np.isfinite(anchor):
            # a non-finite reconstruction poisons the next prediction
            mask[pos] = True
            anchor = float(v64[pos])
            prev_index = 0
            pos += 1
            window = 1
            continue
        end = min(n, pos + window)
        chunk = v64[pos:end]
        with np.errstate(over="ignore", invalid="ignore"):
            raw_index = np.floor((chunk - anchor) / step + 0.5)
            representable = np.isfinite(raw_index) & (np.abs(raw_index) < 2.0**62)
            index = np.where(representable, raw_index, 0.0).astype(np.int64)
            recon = _grid_values(anchor, index, step, values.dtype)
            ok = (
                representable
                & np.isfinite(chunk)
                & (np.abs(recon.astype(np.float64) - chunk) <= bound)
            )
        q = np.diff(index, prepend=np.int64(prev_index))
        ok &= np.abs(q) < _MAX_CODE
        bad = np.nonzero(~ok)[0]
        run = int(bad[0]) if bad.size else chunk.size
        if run:
            codes_full[pos : pos + run] = q[:run]
            prev_index = int(index[run - 1])
            pos += run
        if run == chunk.size:
            window = min(window * 8, n)
            continue
        mask[pos] = True
        anchor = float(v64[pos])
        prev_index = 0
        pos += 1
        window = 1  # stay cheap while literals cluster; grows again on success
    return codes_full[~mask].astype(_CODE_DTYPE), mask


def _dequantize(
    codes: np.ndarray, mask: np.ndarray, literals: np.ndarray, bound: float, dtype
) -> np.ndarray:
    n = mask.size
    out = np.empty(n, dtype=dtype)
    lit_pos = np.nonzero(mask)[0]
    if lit_pos.size == n:
        out[:] = literals
        return out
    step = 2.0 * bound
    deltas = np.zeros(n, dtype=np.int64)
    deltas[~mask] = codes
    index = np.cumsum(deltas)
    # anchor each element on the most recent literal (or 0 before any)
    last_lit = np.maximum.accumulate(np.where(mask, np.arange(n), -1))
    lit_value = np.zeros(n, dtype=np.float64)
    lit_value[lit_pos] = literals.astype(np.float64)
    clamped = np.maximum(last_lit, 0)
    anchors = np.where(last_lit >= 0, lit_value[clamped], 0.0)
    base = np.where(last_lit >= 0, index[clamped], 0)
    out[:] = _grid_values(anchors, index - base, step, dtype)
    out[lit_pos] = literals  # verbatim, bit-exact
    return out


def _pack_lossy(values: np.ndarray, bound: float) -> bytes:
    codes, mask = _quantize(values, bound)
    bitmap = np.packbits(mask, bitorder="little").tobytes()
    shuffled = byte_shuffle(codes.tobytes(), 4)
    literals = np.ascontiguousarray(values[mask]).tobytes()
    payload = bitmap + shuffled + literals
    return zlib.compress(payload, _ZLIB_LEVEL) if payload else b""


def _unpack_lossy(body: bytes, header: ContainerHeader) -> np.ndarray:
    n = header.count
    dtype = header.dtype
    if n == 0:
        return np.empty(0, dtype=dtype)
    try:
        payload = zlib.decompress(body)
    except zlib.error as exc:
        raise IntegrityError(f"lossy body does not inflate: {exc}") from exc
    bitmap_len = (n + 7) // 8
    if len(payload) < bitmap_len:
        raise IntegrityError("lossy body shorter than its escape bitmap")
    mask = np.unpackbits(
        np.frombuffer(payload, np.uint8, count=bitmap_len), count=n, bitorder="little"
    ).astype(bool)
    n_lit = int(mask.sum())
    codes_len = (n - n_lit) * 4
    lit_len = n_lit * dtype.itemsize
    if len(payload) != bitmap_len + codes_len + lit_len:
        raise IntegrityError(
            f"lossy body length {len(payload)} does not match "
            f"{bitmap_len}+{codes_len}+{lit_len}"
        )
    codes = np.frombuffer(
        byte_unshuffle(payload[bitmap_len : bitmap_len + codes_len], 4), _CODE_DTYPE
    )
    literals = np.frombuffer(payload[bitmap_len + codes_len :], dtype)
    return _dequantize(codes, mask, literals, header.bound, dtype)


# ---------------------------------------------------------------------------
# Containers


def _dtype_code_of(arr: np.ndarray) -> int:
    kind = arr.dtype.str.lstrip("<=|>")
    code = _DTYPE_CODE_BY_KIND.get(kind)
    if code is None:
        raise ConfigError(f"unsupported array dtype {arr.dtype}")
    return code


def _as_array(values) -> np.ndarray:
    if isinstance(values, (bytes, bytearray, memoryview)):
        return np.frombuffer(values, np.uint8)
    arr = np.asarray(values)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    return arr


def _build(codec: Codec, dtype_code: int, count: int, bound: float, original: int, body: bytes) -> bytes:
    header = _HEADER.pack(
        CONTAINER_MAGIC, codec, dtype_code, count, bound, original, len(body),
        zlib.crc32(body) & 0xFFFFFFFF,
    )
    return header + body


def compress(values, spec: CompressionSpec) -> bytes:
    """Compress a 1-D array (or raw bytes) into a container per the spec."""
    arr = _as_array(values)
    code = _dtype_code_of(arr)
    dtype = _DTYPES[code][1]
    arr = np.ascontiguousarray(arr, dtype=dtype)  # normalize to little-endian
    raw = arr.tobytes()

    if spec.codec is Codec.NONE:
        return _build(Codec.NONE, code, arr.size, 0.0, len(raw), raw)
    if spec.codec is Codec.LOSSLESS:
        body = compress_lossless(raw, dtype.itemsize)
        return _build(Codec.LOSSLESS, code, arr.size, 0.0, len(raw), body)

    if code not in (1, 2):
        raise ConfigError(
            f"field {spec.name!r}: lossy compression applies to f32/f64 arrays, "
            f"got {dtype}"
        )
    bound = effective_abs_bound(spec, arr)
    if not np.isfinite(bound) or bound < 0:
        bound = 0.0
    body = _pack_lossy(arr, bound)
    return _build(Codec.LOSSY, code, arr.size, bound, len(raw), body)


def parse_header(container: bytes) -> ContainerHeader:
    if len(container) < HEADER_SIZE:
        raise IntegrityError(f"container of {len(container)} bytes is shorter than a header")
    magic, codec, dtype_code, count, bound, original, body_size, crc = _HEADER.unpack_from(
        container
    )
    if magic != CONTAINER_MAGIC:
        raise IntegrityError(f"bad container magic {magic!r}")
    if codec not in (0, 1, 2):
        raise IntegrityError(f"unknown codec id {codec}")
    if dtype_code not in _DTYPES:
        raise IntegrityError(f"unknown dtype id {dtype_code}")
    return ContainerHeader(Codec(codec), dtype_code, count, bound, original, body_size, crc)


def decompress(container: bytes) -> tuple[np.ndarray, ContainerHeader]:
    """Decode a container; lossy data comes back within header.bound."""
    header = parse_header(container)
    body = container[HEADER_SIZE:]
    if len(body) != header.body_size:
        raise IntegrityError(
            f"container body is {len(body)} bytes, header says {header.body_size}"
        )
    if zlib.crc32(body) & 0xFFFFFFFF != header.checksum:
        raise IntegrityError("body checksum mismatch")
    dtype = header.dtype

    if header.codec is Codec.NONE:
        raw = body
    elif header.codec is Codec.LOSSLESS:
        raw = decompress_lossless(body, dtype.itemsize)
    else:
        values = _unpack_lossy(body, header)
        if values.size != header.count:
            raise IntegrityError(
                f"decoded {values.size} elements, header says {header.count}"
            )
        return values, header

    if len(raw) != header.original_size or len(raw) != header.count * dtype.itemsize:
        raise IntegrityError(
            f"decoded {len(raw)} bytes, header says {header.original_size} "
            f"({header.count} x {dtype.itemsize})"
        )
    return np.frombuffer(raw, dtype), header
