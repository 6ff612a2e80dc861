import socket
import struct
import threading
from concurrent.futures import ThreadPoolExecutor

import pytest

from anchor.crypto import H
from anchor.errors import BindError, HandshakeFailed
from anchor.prg import Prg
from anchor.protocol import (Principal, assoc_accept, assoc_confirm, assoc_deliver, device_listen,
                             open_envelope, seal)
from anchor.service import PolicyRule, Registry
from anchor.service.client import AnchorClient
from anchor.service.registry import Kind, RecordStatus, registry_load
from anchor.service.server import AnchorServer, parse_addr
from anchor.service.transport import FramingError, recv_frame, send_frame

KEY = b"\x5a" * 32
ALLOW = [PolicyRule("c*", "s*", True)]


def _server(path, policy=ALLOW):
    return AnchorServer("127.0.0.1:0", Registry(path, KEY), policy,
                        Prg.from_seed(H(b"server", str(path).encode())), conn_timeout=5)


def _enroll(srv, addr, pid, kind):
    otk = H(b"otk", pid.encode())
    srv.registry.provision(pid, kind, otk)
    prg = Prg.from_seed(H(b"prg", pid.encode()))
    with AnchorClient(addr) as cl:
        k = cl.register(pid, otk, prg)
    return Principal(pid, kind, k, prg)


def test_parse_addr():
    assert parse_addr("0.0.0.0:9000") == ("0.0.0.0", 9000)
    assert parse_addr(":7") == ("127.0.0.1", 7)


def test_persistence_across_restart(tmp_path):
    path = tmp_path / "reg.jsonl"
    with _server(path) as srv:
        _enroll(srv, srv.address, "s1", Kind.SWITCH)
    assert registry_load(path, KEY)["s1"].status is RecordStatus.ACTIVE
    with _server(path) as srv:
        assert srv.registry.get("s1").status is RecordStatus.ACTIVE


def test_malformed_frame_keeps_server_up(tmp_path):
    with _server(tmp_path / "reg.jsonl") as srv:
        with socket.create_connection(srv.address) as s:
            send_frame(s, b"garbage that is not an envelope at all" * 3)
            s.settimeout(5)
            assert s.recv(1) == b""
        with socket.create_connection(srv.address) as s:
            s.sendall(struct.pack(">I", 1 << 30))
            s.settimeout(5)
            assert s.recv(1) == b""
        _enroll(srv, srv.address, "s1", Kind.SWITCH)


def test_client_sees_closed_connection(tmp_path):
    with _server(tmp_path / "reg.jsonl") as srv:
        prg = Prg.from_seed(bytes(32))
        with AnchorClient(srv.address) as cl, pytest.raises(HandshakeFailed):
            cl.register("unknown", bytes(32), prg)


def test_bind_error(tmp_path):
    with _server(tmp_path / "a.jsonl") as srv:
        host, port = srv.address
        with pytest.raises(BindError):
            AnchorServer(f"{host}:{port}", Registry(), ALLOW)


def test_framing_round_trip():
    a, b = socket.socketpair()
    with a, b:
        send_frame(a, b"hello")
        send_frame(a, b"")
        assert recv_frame(b) == b"hello"
        assert recv_frame(b) == b""
        a.sendall(b"\x00\x00")
        a.close()
        with pytest.raises(FramingError):
            recv_frame(b)


def test_hundred_concurrent_associations(tmp_path):
    path = tmp_path / "reg.jsonl"
    with _server(path) as srv:
        addr = srv.address
        device = _enroll(srv, addr, "s1", Kind.SWITCH)
        controllers = [_enroll(srv, addr, f"c{i}", Kind.CONTROLLER) for i in range(100)]
        barrier = threading.Barrier(100)

        def run(ctl):
            barrier.wait()
            with AnchorClient(addr) as cl:
                hs, a2 = cl.request_association(ctl, "s1")
            sc, a3 = assoc_deliver(hs, a2)
            return hs, sc, a3

        with ThreadPoolExecutor(100) as pool:
            results = list(pool.map(run, controllers))

    established = 0
    for hs, sc, a3 in results:
        sd, a4 = assoc_accept(device_listen(device), a3)
        assoc_confirm(hs, a4)
        assert sc.established and sd.established and sc.k_session == sd.k_session
        assert open_envelope(sd, seal(sc, b"ping")) == b"ping"
        established += 1
    assert established == 100
    errors = []
    recs = registry_load(path, KEY, errors)
    assert not errors and len(recs) == 101
    assert all(r.status is RecordStatus.ACTIVE for r in recs.values())


def test_policy_denial_over_tcp(tmp_path):
    with _server(tmp_path / "reg.jsonl", policy=[]) as srv:
        _enroll(srv, srv.address, "s1", Kind.SWITCH)
        ctl = _enroll(srv, srv.address, "c1", Kind.CONTROLLER)
        with AnchorClient(srv.address) as cl, pytest.raises(HandshakeFailed):
            cl.request_association(ctl, "s1")
