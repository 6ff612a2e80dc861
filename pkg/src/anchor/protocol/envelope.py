"""Authenticated wire frame.

Layout (big-endian), 36-byte header followed by payload and a 32-byte MAC::

    magic "ANCH" | version 0x01 | msg_type | flags(2) | session_id(16)
    | counter(8) | payload_len(4) | payload | mac(32)

The MAC is HMAC-SHA-256 over every byte that precedes it.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from enum import IntEnum

from ..crypto import ct_equal, mac
from ..errors import BadMac, BadMagic, BadVersion, LengthMismatch, MalformedPayload, Truncated

MAGIC = b"ANCH"
VERSION = 0x01
HEADER_SIZE = 36
MAC_SIZE = 32
OVERHEAD = HEADER_SIZE + MAC_SIZE
SESSION_ID_SIZE = 16

FLAG_ENCRYPTED = 0x0001

_HEADER = struct.Struct(">4sBBH16sQI")
assert _HEADER.size == HEADER_SIZE


class MsgType(IntEnum):
    REG_INIT = 0x01
    REG_REPLY = 0x02
    ASSOC_REQ = 0x10
    ASSOC_GRANT = 0x11
    ASSOC_DELIVER = 0x12
    ASSOC_ACCEPT = 0x13
    ASSOC_CONFIRM = 0x14
    DATA = 0x20
    RATCHET = 0x21


@dataclass(frozen=True)
class Envelope:
    msg_type: int
    session_id: bytes
    counter: int
    payload: bytes = b""
    flags: int = 0
    mac: bytes = bytes(MAC_SIZE)

    def header(self) -> bytes:
        if len(self.session_id) != SESSION_ID_SIZE:
            raise ValueError("session_id must be 16 bytes")
        if not 0 <= self.counter < 1 << 64:
            raise ValueError("counter out of range")
        if not 0 <= self.flags < 1 << 16 or not 0 <= self.msg_type < 256:
            raise ValueError("flags or msg_type out of range")
        return _HEADER.pack(MAGIC, VERSION, self.msg_type, self.flags, self.session_id,
                            self.counter, len(self.payload))

    def signed_bytes(self) -> bytes:
        return self.header() + self.payload

    def signed(self, key: bytes) -> "Envelope":
        return replace(self, mac=mac(key, self.signed_bytes()))

    def verify(self, key: bytes) -> None:
        if not ct_equal(self.mac, mac(key, self.signed_bytes())):
            raise BadMac(f"MAC check failed on {_type_name(self.msg_type)} frame")

    def __len__(self) -> int:
        return OVERHEAD + len(self.payload)


def _type_name(t: int) -> str:
    try:
        return MsgType(t).name
    except ValueError:
        return hex(t)


def encode_envelope(e: Envelope) -> bytes:
    if len(e.mac) != MAC_SIZE:
        raise ValueError("mac must be 32 bytes")
    return e.header() + e.payload + e.mac


def decode_envelope(b: bytes) -> Envelope:
    if len(b) < OVERHEAD:
        raise Truncated(f"frame is {len(b)} bytes, minimum {OVERHEAD}")
    magic, version, msg_type, flags, sid, counter, plen = _HEADER.unpack_from(b)
    if magic != MAGIC:
        raise BadMagic(repr(magic))
    if version != VERSION:
        raise BadVersion(str(version))
    if len(b) != OVERHEAD + plen:
        raise LengthMismatch(f"payload_len {plen} but frame carries {len(b) - OVERHEAD}")
    return Envelope(msg_type, sid, counter, bytes(b[HEADER_SIZE:-MAC_SIZE]), flags, bytes(b[-MAC_SIZE:]))


def pack_fields(*fields: bytes) -> bytes:
    """Concatenate fields, each prefixed by a 2-byte length."""
    out = bytearray()
    for f in fields:
        if len(f) > 0xFFFF:
            raise ValueError("field too long")
        out += len(f).to_bytes(2, "big") + f
    return bytes(out)


def unpack_fields(data: bytes, count: int) -> list[bytes]:
    fields, pos = [], 0
    for _ in range(count):
        if pos + 2 > len(data):
            raise MalformedPayload("payload truncated")
        n = int.from_bytes(data[pos:pos + 2], "big")
        pos += 2
        if pos + n > len(data):
            raise MalformedPayload("payload field overruns")
        fields.append(bytes(data[pos:pos + n]))
        pos += n
    if pos != len(data):
        raise MalformedPayload("trailing bytes in payload")
    return fields
