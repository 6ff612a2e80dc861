"""4-byte big-endian length-prefixed framing over stream sockets."""
from __future__ import annotations

import socket
import struct
from typing import Optional

MAX_FRAME = 1 << 20
_LEN = struct.Struct(">I")


class FramingError(ConnectionError):
    pass


def _recv_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if buf:
                raise FramingError("connection closed mid-frame")
            return None
        buf += chunk
    return bytes(buf)


def send_frame(sock: socket.socket, data: bytes) -> None:
    sock.sendall(_LEN.pack(len(data)) + data)


def recv_frame(sock: socket.socket) -> Optional[bytes]:
    """Next frame, or None on a clean close at a frame boundary."""
    head = _recv_exact(sock, _LEN.size)
    if head is None:
        return None
    (n,) = _LEN.unpack(head)
    if n > MAX_FRAME:
        raise FramingError(f"frame of {n} bytes exceeds limit")
    body = _recv_exact(sock, n)
    if body is None:
        raise FramingError("connection closed mid-frame")
    return body
