"""Throughput of the core primitives and of sealed versus plain channels."""
from __future__ import annotations

import socket
import statistics
import threading
import time
from typing import Callable

from .crypto import H, expand
from .errors import AnchorError, HandshakeFailed
from .harness.deployment import build_deployment
from .idvv import idvv_derive, idvv_init, idvv_next
from .prg import Prg
from .protocol import OVERHEAD, associate, decode_envelope, encode_envelope, open_envelope, seal
from .service.transport import recv_frame, send_frame

MODES = ("plain", "sealed", "sealed+encrypt")


def _summarise(op: str, samples_ns: list[int]) -> dict:
    samples = sorted(samples_ns)
    total = sum(samples) or 1
    p99 = samples[min(len(samples) - 1, int(0.99 * len(samples)))]
    return {
        "op": op,
        "ops_per_sec": len(samples) * 1e9 / total,
        "mean_us": statistics.fmean(samples) / 1e3,
        "p99_us": p99 / 1e3,
        "count": len(samples),
    }


def _timed(n: int, fn: Callable[[int], object]) -> list[int]:
    warm = n // 10
    out = []
    clock = time.perf_counter_ns
    for i in range(n + warm):
        t0 = clock()
        fn(i)
        dt = clock() - t0
        if i >= warm:
            out.append(dt)
    return out


def _sessions(seed: bytes = b"bench"):
    dep = build_deployment(seed)
    try:
        return associate(dep.controller, dep.device, dep.anchor)
    except AnchorError as exc:
        raise HandshakeFailed(f"association failed: {exc}") from exc


def bench_primitives(iterations: int = 10_000) -> dict:
    if iterations < 1000:
        raise ValueError("iterations must be at least 1000")
    rows = []

    state = idvv_init(H(b"seed"), H(b"key"))

    def step(_):
        nonlocal state
        _, state = idvv_next(state)
    rows.append(_summarise("idvv_next", _timed(iterations, step)))
    rows.append(_summarise("idvv_derive", _timed(iterations, lambda _: idvv_derive(state, "mac"))))

    sc, sd = _sessions()
    payload = bytes(64)
    frames = []
    rows.append(_summarise("seal", _timed(iterations, lambda _: frames.append(seal(sc, payload)))))
    it = iter(frames)
    rows.append(_summarise("open", _timed(iterations, lambda _: open_envelope(sd, next(it)))))

    # reseeds at the limit like a live generator would
    prg = Prg.from_seed(H(b"bench-prg"), lambda n: expand(H(b"bench-reseed"), n))
    rows.append(_summarise("prg_next(32)", _timed(iterations, lambda _: prg.read(32))))
    return {"benchmark": "primitives", "iterations": iterations, "rows": rows}


def _run_channel(message_count: int, payload_size: int, mode: str) -> dict:
    sealed = mode != "plain"
    encrypt = mode == "sealed+encrypt"
    sc = sd = None
    if sealed:
        sc, sd = _sessions()

    listener = socket.create_server(("127.0.0.1", 0))
    port = listener.getsockname()[1]
    warm = message_count // 10
    result = {"received": 0, "wire_bytes": 0, "errors": 0, "t_start": None, "t_end": None}

    def receiver():
        conn, _ = listener.accept()
        with conn:
            while True:
                raw = recv_frame(conn)
                if raw is None:
                    break
                result["wire_bytes"] += len(raw)
                if sealed:
                    try:
                        body = open_envelope(sd, decode_envelope(raw))
                    except AnchorError:
                        result["errors"] += 1
                        continue
                else:
                    body = raw
                if len(body) != payload_size:
                    result["errors"] += 1
                    continue
                result["received"] += 1
                if result["received"] == warm + 1 or (warm == 0 and result["t_start"] is None):
                    result["t_start"] = time.perf_counter()
        result["t_end"] = time.perf_counter()

    t = threading.Thread(target=receiver, name="bench-receiver")
    t.start()
    payload = bytes(payload_size)
    sent = 0
    with socket.create_connection(("127.0.0.1", port)) as sock:
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        for _ in range(message_count):
            frame = encode_envelope(seal(sc, payload, encrypt=encrypt)) if sealed else payload
            send_frame(sock, frame)
            sent += 1
    t.join()
    listener.close()

    measured = result["received"] - warm
    elapsed = max((result["t_end"] or 0) - (result["t_start"] or 0), 1e-9)
    wire_per_msg = result["wire_bytes"] / max(result["received"] + result["errors"], 1)
    return {
        "mode": mode,
        "messages_sent": sent,
        "messages_received": result["received"],
        "errors": result["errors"],
        "payload_size": payload_size,
        "wire_bytes_per_message": wire_per_msg,
        "overhead_bytes_per_message": wire_per_msg - payload_size,
        "msgs_per_sec": max(measured, 0) / elapsed,
        "elapsed_s": elapsed,
    }


def bench_channel(message_count: int, payload_size: int, mode: str = "sealed") -> dict:
    """Loopback TCP throughput. Sealed modes also run a plain baseline for the ratio."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if message_count < 1 or payload_size < 0:
        raise ValueError("message_count must be positive and payload_size non-negative")
    report = {"benchmark": "channel", **_run_channel(message_count, payload_size, mode),
              "framing_overhead_bytes": OVERHEAD if mode != "plain" else 0}
    if mode != "plain":
        plain = _run_channel(message_count, payload_size, "plain")
        report["plain_msgs_per_sec"] = plain["msgs_per_sec"]
        report["relative_overhead"] = plain["msgs_per_sec"] / max(report["msgs_per_sec"], 1e-9)
    return report


def format_report(report: dict) -> str:
    if report["benchmark"] == "primitives":
        lines = [f"primitives ({report['iterations']} iterations, 10% warm-up excluded)",
                 f"  {'op':<14}{'ops/sec':>14}{'mean us':>11}{'p99 us':>11}"]
        for r in report["rows"]:
            lines.append(f"  {r['op']:<14}{r['ops_per_sec']:>14,.0f}{r['mean_us']:>11.2f}{r['p99_us']:>11.2f}")
        return "\n".join(lines)
    lines = [f"channel mode={report['mode']} payload={report['payload_size']}B",
             f"  sent/received      {report['messages_sent']}/{report['messages_received']}",
             f"  msgs/sec           {report['msgs_per_sec']:,.0f}",
             f"  overhead bytes/msg {report['overhead_bytes_per_message']:.0f}"]
    if "relative_overhead" in report:
        lines.append(f"  plain msgs/sec     {report['plain_msgs_per_sec']:,.0f}")
        lines.append(f"  relative overhead  {report['relative_overhead']:.2f}x")
    return "\n".join(lines)
