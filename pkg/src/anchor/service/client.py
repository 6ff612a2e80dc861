"""Blocking TCP client for talking to an anchor server."""
from __future__ import annotations

import socket

from ..errors import HandshakeFailed
from ..prg import Prg
from ..protocol import (Envelope, HandshakeState, Principal, assoc_request, decode_envelope,
                        encode_envelope, reg_finalize, reg_initiate)
from .server import parse_addr
from .transport import recv_frame, send_frame


class AnchorClient:
    def __init__(self, addr: str | tuple[str, int], timeout: float = 10.0):
        self.addr = parse_addr(addr) if isinstance(addr, str) else addr
        self.sock = socket.create_connection(self.addr, timeout=timeout)

    def close(self) -> None:
        self.sock.close()

    def __enter__(self) -> "AnchorClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def exchange(self, env: Envelope) -> Envelope:
        send_frame(self.sock, encode_envelope(env))
        raw = recv_frame(self.sock)
        if raw is None:
            raise HandshakeFailed("anchor closed the connection")
        return decode_envelope(raw)

    def register(self, device_id: str, otk: bytes, prg: Prg) -> bytes:
        hs, m1 = reg_initiate(device_id, otk, prg)
        return reg_finalize(hs, self.exchange(m1))

    def request_association(self, controller: Principal, device_id: str) -> tuple[HandshakeState, Envelope]:
        hs, a1 = assoc_request(controller, device_id)
        return hs, self.exchange(a1)
