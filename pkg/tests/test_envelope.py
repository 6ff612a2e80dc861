import random
import struct

import pytest
from hypothesis import given, strategies as st

from anchor.errors import BadMac, BadMagic, BadVersion, LengthMismatch, MalformedPayload, Truncated
from anchor.protocol import (HEADER_SIZE, OVERHEAD, Envelope, MsgType, decode_envelope,
                             encode_envelope, pack_fields, unpack_fields)

KEY = b"k" * 32
SID = bytes(range(16))


def _env(payload=b"hello", **kw):
    return Envelope(kw.pop("msg_type", MsgType.DATA), SID, kw.pop("counter", 7), payload, **kw).signed(KEY)


def test_layout():
    raw = encode_envelope(_env(b"xyz", flags=1))
    assert raw[:4] == b"ANCH" and raw[4] == 1 and raw[5] == 0x20
    assert struct.unpack(">H", raw[6:8]) == (1,)
    assert raw[8:24] == SID
    assert struct.unpack(">Q", raw[24:32]) == (7,)
    assert struct.unpack(">I", raw[32:36]) == (3,)
    assert raw[HEADER_SIZE:HEADER_SIZE + 3] == b"xyz"
    assert len(raw) == OVERHEAD + 3 == 71
    assert HEADER_SIZE == 36 and OVERHEAD == 68


def test_msg_type_codes():
    assert [int(t) for t in MsgType] == [0x01, 0x02, 0x10, 0x11, 0x12, 0x13, 0x14, 0x20, 0x21]


def test_round_trip_and_verify():
    e = _env()
    d = decode_envelope(encode_envelope(e))
    assert d == e
    d.verify(KEY)
    with pytest.raises(BadMac):
        d.verify(b"j" * 32)


def test_bad_magic():
    raw = bytearray(encode_envelope(_env()))
    raw[:4] = b"XNCH"
    with pytest.raises(BadMagic):
        decode_envelope(bytes(raw))


def test_bad_version():
    raw = bytearray(encode_envelope(_env()))
    raw[4] = 2
    with pytest.raises(BadVersion):
        decode_envelope(bytes(raw))


def test_length_mismatch():
    raw = encode_envelope(_env(b"0123456789"))
    short = raw[:HEADER_SIZE + 9] + raw[-32:]
    with pytest.raises(LengthMismatch):
        decode_envelope(short)


def test_truncated():
    with pytest.raises(Truncated):
        decode_envelope(b"ANCH\x01")
    with pytest.raises(Truncated):
        decode_envelope(encode_envelope(_env(b""))[:-1])


def test_header_validation():
    with pytest.raises(ValueError):
        encode_envelope(Envelope(MsgType.DATA, b"short", 0))
    with pytest.raises(ValueError):
        encode_envelope(Envelope(MsgType.DATA, SID, 1 << 64))


def test_fuzz_round_trip_10k():
    rng = random.Random(1)
    for _ in range(10_000):
        e = Envelope(rng.choice(list(MsgType)), rng.randbytes(16), rng.getrandbits(64),
                     rng.randbytes(rng.randrange(0, 300)), rng.getrandbits(16), rng.randbytes(32))
        raw = encode_envelope(e)
        assert decode_envelope(raw) == e
        assert encode_envelope(decode_envelope(raw)) == raw


@given(st.binary(max_size=200))
def test_decode_arbitrary_bytes_never_crashes(data):
    try:
        decode_envelope(data)
    except (Truncated, BadMagic, BadVersion, LengthMismatch):
        pass


@given(st.lists(st.binary(max_size=100), max_size=5))
def test_fields_round_trip(fields):
    assert unpack_fields(pack_fields(*fields), len(fields)) == fields


def test_fields_malformed():
    with pytest.raises(MalformedPayload):
        unpack_fields(b"\x00\x05ab", 1)
    with pytest.raises(MalformedPayload):
        unpack_fields(pack_fields(b"a") + b"!", 1)
    with pytest.raises(MalformedPayload):
        unpack_fields(b"", 1)
