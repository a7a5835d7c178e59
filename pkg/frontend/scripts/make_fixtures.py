#!/usr/bin/env python3
"""Generate golden fixtures for the analysis client's test suite.

The store-side package produces every byte sequence checked in here:
frames via its wire codec, containers via its array codec, and a store
dump from a small two-server run.  The client's tests then decode each
without touching the producer, which keeps the two implementations honest
about the shared formats.

Deterministic except for the info record's `created_at` timestamp; run
once and commit the results:

    cd frontend && python3 scripts/make_fixtures.py
"""

from __future__ import annotations

import base64
import json
import sys
from pathlib import Path

import numpy as np

from stagex import codec, protocol, synth
from stagex.errors import IntegrityError
from stagex.minisim import run_rank
from stagex.protocol import Opcode, Request, Response, Status
from stagex.server import ServerConfig, StoreServer
from stagex.transport import Connection

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def b64(data: bytes) -> str:
    return base64.b64encode(bytes(data)).decode("ascii")


# ---------------------------------------------------------------------------
# Wire frames


def frame_fixtures() -> dict:
    cases = []

    def request(name: str, op: Opcode, key: bytes = b"", value: bytes = b""):
        raw = protocol.encode_request(Request(op, key, value))
        cases.append(
            {
                "name": name,
                "kind": "request",
                "hex": raw.hex(),
                "op": int(op),
                "key_b64": b64(key),
                "value_b64": b64(value),
            }
        )

    def response(name: str, status: Status, value: bytes = b""):
        raw = protocol.encode_response(Response(status, value))
        cases.append(
            {
                "name": name,
                "kind": "response",
                "hex": raw.hex(),
                "status": int(status),
                "value_b64": b64(value),
            }
        )

    rng = np.random.default_rng(42)
    blob = rng.bytes(4096)
    request("put-small", Opcode.PUT, b"run/0/0/x/data", b"\x00\x01\x02\xff")
    request("put-4k", Opcode.PUT, b"run/0/1/y/data", blob)
    request("put-empty-value", Opcode.PUT, b"run/empty", b"")
    request("get", Opcode.GET, b"run/info")
    request("exists", Opcode.EXISTS, b"run/0/done/0")
    request("list", Opcode.LIST, b"run/")
    request("delete", Opcode.DELETE, b"run/0/0/x/data")
    request("status", Opcode.STATUS)
    request("ping", Opcode.PING)
    request("key-64k", Opcode.GET, b"k" * protocol.MAX_KEY_LEN)
    response("ok-empty", Status.OK)
    response("ok-value", Status.OK, b"some bytes\n with newline")
    response("ok-4k", Status.OK, blob)
    response("not-found", Status.NOT_FOUND)
    response("malformed", Status.MALFORMED, b"LIST requires a non-empty key")
    response("server-error", Status.SERVER_ERROR, b"store is full")

    put = protocol.encode_request(Request(Opcode.PUT, b"run/k", b"0123456789"))
    invalid = [
        {"name": "bad-magic", "hex": (b"XRX1" + put[4:]).hex()},
        {"name": "empty", "hex": ""},
        {"name": "header-truncated", "hex": put[:5].hex()},
        {"name": "key-truncated", "hex": put[:11].hex()},
        {"name": "value-length-truncated", "hex": put[: 9 + 5 + 4].hex()},
        {"name": "value-truncated", "hex": put[:-1].hex()},
        {
            "name": "key-length-over-limit",
            "hex": (put[:5] + (1 << 20).to_bytes(4, "little")).hex(),
        },
        {
            "name": "value-length-over-limit",
            "hex": (
                put[: 9 + 5] + (5 * 1024**3).to_bytes(8, "little")
            ).hex(),
        },
    ]
    for case in invalid:
        try:
            protocol.parse_frame(bytes.fromhex(case["hex"]))
        except protocol.ProtocolError:
            pass
        else:  # pragma: no cover - generator self-check
            raise AssertionError(f"frame case {case['name']} unexpectedly parsed")
    return {"valid": cases, "invalid": invalid}


# ---------------------------------------------------------------------------
# Containers


def _clustered(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.0, 256.0, 30)
    return rng.normal(rng.choice(centers, n), 4.0)


def container_fixtures() -> dict:
    rng = np.random.default_rng(7)
    snan = np.frombuffer((0x7FF0000000000001).to_bytes(8, "little"), np.float64)[0]

    mixed = _clustered(5000, 3).copy()
    mixed[::97] = np.nan
    mixed[5::501] = np.inf
    mixed[7::503] = -np.inf
    mixed[11] = snan  # non-standard NaN payload must survive bit-for-bit

    jumps = rng.uniform(-1e9, 1e9, 3000)
    extremes = rng.normal(0.0, 1.0, 2000) * 10.0 ** rng.integers(0, 300, 2000)

    def spec(compressor: str, mode: str | None = None, value: float = 0.0):
        entry: dict = {"name": "v", "compressor": compressor}
        if mode is not None:
            entry["mode"] = mode
            entry["value"] = value
        return codec.parse_compression_entry(entry)

    arrays: list[tuple[str, np.ndarray, CompressionSpec]] = [
        ("none-u8", rng.integers(0, 256, 512).astype(np.uint8), spec("NONE")),
        ("none-f64-empty", np.empty(0), spec("NONE")),
        ("lossless-i64-ids", np.arange(1000, dtype=np.int64), spec("BLOSC")),
        ("lossless-f32", _clustered(2000, 5).astype(np.float32), spec("BLOSC")),
        ("lossless-i32-empty", np.empty(0, np.int32), spec("BLOSC")),
        ("lossless-u8", rng.integers(0, 4, 900).astype(np.uint8), spec("BLOSC")),
        ("lossy-f64-clustered", _clustered(20000, 11), spec("SZ3", "abs", 0.003)),
        (
            "lossy-f32-clustered",
            _clustered(8000, 13).astype(np.float32),
            spec("SZ3", "abs", 0.01),
        ),
        ("lossy-f64-nan-inf", mixed, spec("SZ3", "abs", 0.003)),
        ("lossy-f64-constant", np.full(4096, -17.25), spec("SZ3", "abs", 0.003)),
        # rel bound on constant data resolves to 0: everything escapes
        ("lossy-f64-bound-zero", np.full(600, 2.5), spec("SZ3", "rel", 1e-5)),
        ("lossy-f64-single", np.array([3.141592653589793]), spec("SZ3", "abs", 0.1)),
        ("lossy-f64-empty", np.empty(0), spec("SZ3", "abs", 0.003)),
        ("lossy-f64-jumps", jumps, spec("SZ3", "abs", 0.0005)),
        ("lossy-f64-extremes", extremes, spec("SZ3", "abs", 1e-6)),
        ("lossy-f64-rel", _clustered(5000, 19), spec("SZ3", "rel", 1e-5)),
        ("lossy-f32-psnr", _clustered(5000, 23).astype(np.float32), spec("SZ3", "psnr", 80.0)),
        ("lossy-f64-ramp", np.linspace(0.0, 513.7, 10000), spec("SZ3", "abs", 0.003)),
    ]

    valid = []
    for name, arr, cspec in arrays:
        container = codec.compress(arr, cspec)
        values, header = codec.decompress(container)
        case = {
            "name": name,
            "container_b64": b64(container),
            "codec": int(header.codec),
            "dtype": header.dtype_name,
            "count": header.count,
            "bound": header.bound,
            "expected_b64": b64(values.tobytes()),
        }
        if header.codec == codec.Codec.LOSSY:
            case["original_b64"] = b64(
                np.ascontiguousarray(arr, header.dtype).tobytes()
            )
        valid.append(case)

    # corruption cases; every one must already be rejected by the producer
    base = codec.compress(_clustered(4000, 29), spec("SZ3", "abs", 0.003))
    lossless = codec.compress(np.arange(500, dtype=np.int64), spec("BLOSC"))

    import zlib as _zlib

    def patched(raw: bytes, pos: int, new: bytes) -> bytes:
        return raw[:pos] + new + raw[pos + len(new) :]

    def refit(raw: bytes) -> bytes:
        # make body_size and the checksum agree with the (altered) body
        body = raw[codec.HEADER_SIZE :]
        raw = patched(raw, 30, len(body).to_bytes(8, "little"))
        crc = _zlib.crc32(body) & 0xFFFFFFFF
        return patched(raw, 38, crc.to_bytes(4, "little"))

    flipped = bytearray(base)
    flipped[codec.HEADER_SIZE + 10] ^= 0xFF
    short_header = base[: codec.HEADER_SIZE - 5]
    bad_magic = patched(base, 0, b"XXC1")
    bad_codec = patched(base, 4, bytes([9]))
    bad_dtype = patched(base, 5, bytes([77]))
    body_missing = base[:-3]
    garbage_body = refit(base[: codec.HEADER_SIZE] + b"this is not deflate")
    # count inflated by one element: body still valid, size check must fire
    wrong_count = patched(lossless, 6, (501).to_bytes(8, "little"))
    empty_lossy_body = refit(base[: codec.HEADER_SIZE])
    # a valid deflate stream whose payload is shorter than the escape bitmap
    short_bitmap = refit(base[: codec.HEADER_SIZE] + _zlib.compress(b"\x00" * 3, 6))
    # payload sized between bitmap and full token stream
    bad_stream_len = refit(base[: codec.HEADER_SIZE] + _zlib.compress(b"\x00" * 600, 6))

    corrupt_cases = [
        ("body-byte-flipped", bytes(flipped), "checksum mismatch"),
        ("shorter-than-header", short_header, "shorter than a header"),
        ("bad-magic", bad_magic, "bad container magic"),
        ("unknown-codec", bad_codec, "unknown codec id 9"),
        ("unknown-dtype", bad_dtype, "unknown dtype id 77"),
        ("body-truncated", body_missing, "header says"),
        ("lossy-body-not-deflate", garbage_body, "does not inflate"),
        ("lossless-count-mismatch", wrong_count, "header says"),
        ("lossy-empty-body", empty_lossy_body, "does not inflate"),
        ("lossy-short-bitmap", short_bitmap, "shorter than its escape bitmap"),
        ("lossy-stream-length", bad_stream_len, "does not match"),
    ]
    corrupt = []
    for name, raw, needle in corrupt_cases:
        # adjust body_size for cases that change the body's length on purpose
        try:
            codec.decompress(bytes(raw))
        except IntegrityError as exc:
            if needle not in str(exc):  # pragma: no cover - generator self-check
                raise AssertionError(
                    f"corrupt case {name}: producer said {exc!r}, wanted {needle!r}"
                ) from exc
        else:  # pragma: no cover - generator self-check
            raise AssertionError(f"corrupt case {name} unexpectedly decoded")
        corrupt.append(
            {"name": name, "container_b64": b64(bytes(raw)), "error": needle}
        )
    return {"valid": valid, "corrupt": corrupt}


# ---------------------------------------------------------------------------
# Store dump from a small two-server run


def store_dump(out_dir: Path) -> dict:
    sim_id = "fixture-run"
    num_ranks = 2
    steps = 2
    corpus = synth.CorpusSpec(n_particles=1000, seed=77)
    servers = [StoreServer(ServerConfig("127.0.0.1", 0)) for _ in range(2)]
    endpoints = [s.start_background() for s in servers]
    try:
        config = {
            "sim-id": sim_id,
            "databases": [
                {"address": ep, "protocol": "ofi+tcp"} for ep in endpoints
            ],
            "data": [
                {"name": v, "compressor": "SZ3", "mode": "abs", "value": 0.003}
                for v in ("x", "y", "z")
            ]
            + [{"name": "id", "compressor": "BLOSC"}],
        }
        config_path = out_dir / "store_config.json"
        config_path.write_text(json.dumps(config, indent=2, sort_keys=True))
        for rank in range(num_ranks):
            code = run_rank(config_path, rank, num_ranks, steps, corpus)
            assert code == 0, f"rank {rank} failed"

        expected: dict[str, dict] = {}
        for step in range(steps):
            for var in synth.VARIABLES:
                parts = [
                    synth.rank_slice(corpus, rank, num_ranks, step)[var]
                    for rank in range(num_ranks)
                ]
                whole = np.concatenate(parts)
                if var == "id":
                    staged = whole.astype(np.int64)
                else:
                    staged = None  # lossy: client checks the bound instead
                entry = {
                    "count": int(whole.size),
                    "dtype": "i64" if var == "id" else "f64",
                    "original_b64": b64(np.ascontiguousarray(whole).tobytes()),
                }
                if staged is not None:
                    entry["expected_b64"] = b64(staged.tobytes())
                expected[f"{step}/{var}"] = entry

        dumps = []
        for i, (server, ep) in enumerate(zip(servers, endpoints)):
            frames = []
            with Connection(ep) as conn:
                for key in server.store.snapshot_keys():
                    value = conn.get(key)
                    assert value is not None
                    frames.append(
                        protocol.encode_request(Request(Opcode.PUT, key, bytes(value)))
                    )
            name = f"store_dump_{i}.bin"
            (out_dir / name).write_bytes(b"".join(frames))
            dumps.append(name)
    finally:
        for s in servers:
            s.stop()

    return {
        "sim_id": sim_id,
        "num_ranks": num_ranks,
        "steps": steps,
        "variables": list(synth.VARIABLES),
        "eps": {"x": 0.003, "y": 0.003, "z": 0.003, "id": 0.0},
        "dumps": dumps,
        "ready_steps": list(range(steps)),
        "last_step": steps - 1,
        "expected": expected,
    }


def main() -> int:
    FIXTURES.mkdir(exist_ok=True)
    (FIXTURES / "frames.json").write_text(
        json.dumps(frame_fixtures(), indent=1, sort_keys=True) + "\n"
    )
    (FIXTURES / "containers.json").write_text(
        json.dumps(container_fixtures(), indent=1, sort_keys=True) + "\n"
    )
    (FIXTURES / "store.json").write_text(
        json.dumps(store_dump(FIXTURES), indent=1, sort_keys=True) + "\n"
    )
    for name in sorted(p.name for p in FIXTURES.iterdir()):
        size = (FIXTURES / name).stat().st_size
        print(f"wrote fixtures/{name} ({size} bytes)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
