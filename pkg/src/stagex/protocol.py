"""Framed request/response protocol spoken over TCP by clients and servers.

Wire layout, little-endian throughout:

    magic        4 bytes, ASCII "SRX1"
    op/status    unsigned 8-bit
    key_len      unsigned 32-bit
    key          key_len bytes
    val_len      unsigned 64-bit
    value        val_len bytes

Responses reuse the same layout with key_len = 0.  Frames are
self-delimiting; the total length is always 17 + key_len + val_len.
Everything here is a pure function over bytes, safe from any thread.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

from .errors import ProtocolError

MAGIC = b"SRX1"
MAX_KEY_LEN = 64 * 1024
MAX_VAL_LEN = 4 * 1024**3

# Values may arrive as the receive buffer itself (a bytearray) so multi-MiB
# payloads are not copied a second time; equality and len() treat both alike.
Buffer = bytes | bytearray

_PREFIX = struct.Struct("<4sBI")  # magic, op/status, key_len
_VLEN = struct.Struct("<Q")
HEADER_LEN = _PREFIX.size  # 9 bytes, enough to learn key_len


class Opcode(IntEnum):
    PUT = 1
    GET = 2
    EXISTS = 3
    LIST = 4
    DELETE = 5
    STATUS = 6
    PING = 7


class Status(IntEnum):
    OK = 0
    NOT_FOUND = 1
    MALFORMED = 2
    SERVER_ERROR = 3


# Opcodes that are meaningful without a key.
_KEYLESS = frozenset({Opcode.STATUS, Opcode.PING})


@dataclass(frozen=True)
class Request:
    opcode: Opcode
    key: bytes = b""
    value: Buffer = b""


@dataclass(frozen=True)
class Response:
    status: Status
    value: Buffer = b""


def _check_request(req: Request) -> None:
    if len(req.key) > MAX_KEY_LEN:
        raise ProtocolError(f"key length {len(req.key)} exceeds {MAX_KEY_LEN}")
    if len(req.value) > MAX_VAL_LEN:
        raise ProtocolError(f"value length {len(req.value)} exceeds {MAX_VAL_LEN}")
    if not req.key and req.opcode not in _KEYLESS:
        raise ProtocolError(f"{req.opcode.name} requires a non-empty key")
    if req.value and req.opcode is not Opcode.PUT:
        raise ProtocolError(f"{req.opcode.name} must not carry a value")


def encode_request(req: Request) -> bytes:
    """Serialize a request to one frame. Deterministic; validates limits."""
    _check_request(req)
    return b"".join(
        (
            _PREFIX.pack(MAGIC, req.opcode, len(req.key)),
            req.key,
            _VLEN.pack(len(req.value)),
            req.value,
        )
    )


def encode_response(resp: Response) -> bytes:
    if len(resp.value) > MAX_VAL_LEN:
        raise ProtocolError(f"value length {len(resp.value)} exceeds {MAX_VAL_LEN}")
    return b"".join(
        (
            _PREFIX.pack(MAGIC, resp.status, 0),
            _VLEN.pack(len(resp.value)),
            resp.value,
        )
    )


def parse_frame(data: bytes, offset: int = 0) -> tuple[int, bytes, bytes, int]:
    """Parse one raw frame starting at ``offset``.

    Returns (op_or_status_byte, key, value, end_offset).  Raises
    ProtocolError on bad magic, truncation, or length fields beyond the
    protocol limits; never returns a partially decoded frame.
    """
    if len(data) - offset < HEADER_LEN:
        raise ProtocolError("truncated frame: header incomplete")
    magic, op, key_len = _PREFIX.unpack_from(data, offset)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if key_len > MAX_KEY_LEN:
        raise ProtocolError(f"key length {key_len} exceeds {MAX_KEY_LEN}")
    pos = offset + HEADER_LEN
    if len(data) - pos < key_len + _VLEN.size:
        raise ProtocolError("truncated frame: key or length missing")
    key = bytes(data[pos : pos + key_len])
    pos += key_len
    (val_len,) = _VLEN.unpack_from(data, pos)
    if val_len > MAX_VAL_LEN:
        raise ProtocolError(f"value length {val_len} exceeds {MAX_VAL_LEN}")
    pos += _VLEN.size
    if len(data) - pos < val_len:
        raise ProtocolError("truncated frame: value incomplete")
    value = bytes(data[pos : pos + val_len])
    return op, key, value, pos + val_len


def _request_from_parts(op: int, key: bytes, value: bytes) -> Request:
    try:
        opcode = Opcode(op)
    except ValueError:
        raise ProtocolError(f"unknown opcode {op}") from None
    req = Request(opcode, key, value)
    _check_request(req)
    return req


def decode_request(data: bytes) -> Request:
    """Decode exactly one request frame; trailing bytes are an error."""
    op, key, value, end = parse_frame(data)
    if end != len(data):
        raise ProtocolError(f"{len(data) - end} trailing bytes after frame")
    return _request_from_parts(op, key, value)


def decode_requests(data: bytes) -> list[Request]:
    """Decode a concatenation of request frames."""
    out = []
    offset = 0
    while offset < len(data):
        op, key, value, offset = parse_frame(data, offset)
        out.append(_request_from_parts(op, key, value))
    return out


def _response_from_parts(op: int, key: bytes, value: bytes) -> Response:
    try:
        status = Status(op)
    except ValueError:
        raise ProtocolError(f"unknown status {op}") from None
    if key:
        raise ProtocolError("response frames must have key_len = 0")
    return Response(status, value)


def decode_response(data: bytes) -> Response:
    """Decode exactly one response frame; trailing bytes are an error."""
    op, key, value, end = parse_frame(data)
    if end != len(data):
        raise ProtocolError(f"{len(data) - end} trailing bytes after frame")
    return _response_from_parts(op, key, value)
