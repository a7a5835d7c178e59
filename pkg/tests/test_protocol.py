"""Frame layout and round-trip tests for the wire protocol."""

import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stagex import protocol
from stagex.errors import ProtocolError
from stagex.protocol import (
    Opcode,
    Request,
    Response,
    Status,
    decode_request,
    decode_requests,
    decode_response,
    encode_request,
    encode_response,
    parse_frame,
)

# Hand-assembled per the frame layout: magic "SRX1", op 0x07, key_len=0 (u32),
# val_len=0 (u64).
PING_FRAME = bytes.fromhex("53525831" "07" "00000000" "0000000000000000")


def test_ping_frame_bytes():
    assert encode_request(Request(Opcode.PING)) == PING_FRAME
    assert len(PING_FRAME) == 17


def test_put_single_byte_frame():
    frame = encode_request(Request(Opcode.PUT, b"a", b"\x42"))
    assert len(frame) == 19
    assert frame[4] == 0x01  # opcode byte
    assert frame[5:9] == struct.pack("<I", 1)  # key_len
    assert frame[9:10] == b"a"
    assert frame[10:18] == struct.pack("<Q", 1)
    assert frame[18:] == b"\x42"


def test_get_empty_key_rejected():
    with pytest.raises(ProtocolError):
        encode_request(Request(Opcode.GET, b""))


def test_value_only_for_put():
    with pytest.raises(ProtocolError):
        encode_request(Request(Opcode.GET, b"k", b"v"))


def test_oversize_key_rejected():
    with pytest.raises(ProtocolError):
        encode_request(Request(Opcode.GET, b"x" * (protocol.MAX_KEY_LEN + 1)))


def test_bad_magic_rejected():
    with pytest.raises(ProtocolError):
        decode_request(b"XXXX" + PING_FRAME[4:])


def test_unknown_opcode_rejected():
    frame = bytearray(PING_FRAME)
    frame[4] = 0x63
    with pytest.raises(ProtocolError):
        decode_request(bytes(frame))


def test_huge_val_len_rejected():
    # A frame claiming val_len = 2^40 must be refused before any allocation.
    frame = protocol.MAGIC + bytes([Opcode.GET]) + struct.pack("<I", 1) + b"k"
    frame += struct.pack("<Q", 1 << 40)
    with pytest.raises(ProtocolError):
        decode_request(frame)


def test_ok_empty_response_is_17_bytes():
    frame = encode_response(Response(Status.OK))
    assert frame == bytes.fromhex("53525831" "00" "00000000" "0000000000000000")
    assert len(frame) == 17


def test_unknown_status_rejected():
    frame = bytearray(encode_response(Response(Status.OK)))
    frame[4] = 9
    with pytest.raises(ProtocolError):
        decode_response(bytes(frame))


def test_response_with_key_rejected():
    # Responses must carry key_len = 0; a request-shaped frame is invalid.
    frame = encode_request(Request(Opcode.GET, b"k"))
    frame = bytearray(frame)
    frame[4] = Status.OK
    with pytest.raises(ProtocolError):
        decode_response(bytes(frame))


def _requests():
    keyed = st.sampled_from(
        [Opcode.GET, Opcode.EXISTS, Opcode.LIST, Opcode.DELETE]
    ).flatmap(
        lambda op: st.binary(min_size=1, max_size=128).map(lambda k: Request(op, k))
    )
    puts = st.tuples(
        st.binary(min_size=1, max_size=128), st.binary(max_size=4096)
    ).map(lambda kv: Request(Opcode.PUT, *kv))
    keyless = st.sampled_from([Opcode.STATUS, Opcode.PING]).map(Request)
    return st.one_of(keyed, puts, keyless)


@given(_requests())
@settings(max_examples=200)
def test_request_round_trip(req):
    assert decode_request(encode_request(req)) == req


@given(
    st.sampled_from(list(Status)),
    st.binary(max_size=4096),
)
def test_response_round_trip(status, value):
    assert decode_response(encode_response(Response(status, value))) == Response(
        status, value
    )


@given(_requests(), st.integers(min_value=0, max_value=16))
def test_truncated_prefix_never_decodes(req, cut):
    frame = encode_request(req)
    prefix = frame[: max(0, len(frame) - 1 - cut % max(1, len(frame)))]
    if prefix == frame:
        return
    with pytest.raises(ProtocolError):
        decode_request(prefix)


@given(_requests(), _requests())
def test_frames_are_self_delimiting(a, b):
    blob = encode_request(a) + encode_request(b)
    assert decode_requests(blob) == [a, b]
    # parse_frame walks the same boundaries
    _, _, _, end = parse_frame(blob)
    assert end == len(encode_request(a))


def test_exists_response_forms():
    present = encode_response(Response(Status.OK, b"\x01"))
    absent = encode_response(Response(Status.NOT_FOUND))
    assert decode_response(present).value == b"\x01"
    assert decode_response(absent) == Response(Status.NOT_FOUND, b"")
