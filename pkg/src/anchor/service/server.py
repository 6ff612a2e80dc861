"""TCP front end of the anchor.

Each connection carries length-framed envelopes. RegInit frames are answered
with RegReply, AssocReq with AssocGrant. Any protocol error is logged and the
connection is closed; the server keeps running.
"""
from __future__ import annotations

import logging
import signal
import socket
import socketserver
import threading
from pathlib import Path
from typing import Optional

from ..entropy import default_pool
from ..errors import AnchorError, BindError
from ..prg import Prg
from ..protocol import AnchorContext, MsgType, assoc_grant, decode_envelope, encode_envelope, reg_respond
from .policy import PolicyRule, load_policy
from .registry import Registry
from .transport import FramingError, recv_frame, send_frame

log = logging.getLogger(__name__)


def parse_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    return host or "127.0.0.1", int(port)


class _Handler(socketserver.BaseRequestHandler):
    server: "_TCPServer"

    def handle(self) -> None:
        peer = self.client_address
        anchor = self.server.anchor
        self.request.settimeout(self.server.conn_timeout)
        try:
            while True:
                raw = recv_frame(self.request)
                if raw is None:
                    return
                env = decode_envelope(raw)
                if env.msg_type == MsgType.REG_INIT:
                    reply, rec = reg_respond(anchor, env)
                    log.info("registered %s (%s)", rec.device_id, rec.kind.value)
                elif env.msg_type == MsgType.ASSOC_REQ:
                    reply = assoc_grant(anchor, env)
                else:
                    log.warning("%s: unexpected message type %#x", peer, env.msg_type)
                    return
                send_frame(self.request, encode_envelope(reply))
        except (AnchorError, ValueError, FramingError, socket.timeout) as exc:
            log.warning("%s: closing connection: %s: %s", peer, type(exc).__name__, exc)
        except OSError as exc:
            log.info("%s: connection error: %s", peer, exc)


class _TCPServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True
    request_queue_size = 128
    anchor: AnchorContext
    conn_timeout: float = 30.0


class AnchorServer:
    """Owns the listening socket, registry and anchor context."""

    def __init__(self, listen: str, registry: Registry, policy: list[PolicyRule],
                 prg: Optional[Prg] = None, conn_timeout: float = 30.0):
        self.registry = registry
        self.anchor = AnchorContext(registry, policy, prg or Prg.from_pool(default_pool()))
        try:
            self._srv = _TCPServer(parse_addr(listen), _Handler)
        except OSError as exc:
            raise BindError(f"cannot bind {listen}: {exc}") from exc
        self._srv.anchor = self.anchor
        self._srv.conn_timeout = conn_timeout
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> tuple[str, int]:
        return self._srv.server_address[:2]

    def start(self) -> "AnchorServer":
        self._thread = threading.Thread(target=self._srv.serve_forever, name="anchor-server", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._srv.serve_forever()

    def stop(self) -> None:
        self._srv.shutdown()
        self._srv.server_close()
        if self._thread is not None:
            self._thread.join()
        # registry appends are fsynced individually; nothing is buffered here
        log.info("anchor stopped with %d registry entries", len(self.registry))

    def __enter__(self) -> "AnchorServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve(listen_addr: str, registry_path: str | Path, policy_path: str | Path,
          storage_key: bytes, entropy_script: Optional[str] = None) -> None:
    """Run until SIGINT/SIGTERM."""
    registry = Registry(registry_path, storage_key)
    for err in registry.corrupt:
        log.warning("registry: skipped %s", err)
    policy = load_policy(policy_path)
    prg = Prg.from_pool(default_pool(entropy_script))
    server = AnchorServer(listen_addr, registry, policy, prg)
    stop = threading.Event()

    def _on_signal(signum, frame):
        log.info("signal %d received, shutting down", signum)
        stop.set()

    signal.signal(signal.SIGINT, _on_signal)
    signal.signal(signal.SIGTERM, _on_signal)
    server.start()
    log.info("anchor listening on %s:%d", *server.address)
    print(f"listening on {server.address[0]}:{server.address[1]}", flush=True)
    stop.wait()
    server.stop()
