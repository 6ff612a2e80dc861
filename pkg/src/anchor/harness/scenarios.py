"""Scripted attacks against live protocol machines."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

from ..crypto import H
from ..errors import AnchorError, NonceMismatch, OtkConsumed, TicketExpired, UnknownScenario
from ..prg import Prg
from ..protocol import (Envelope, MsgType, Phase, close, decode_envelope, encode_envelope,
                        open_envelope, recover, reg_initiate, reg_respond, seal)
from ..service.registry import Kind
from .deployment import build_deployment
from .explorer import forge_candidates
from .knowledge import Knowledge
from .network import CONTROLLER, DEVICE, World, check_properties
from .report import Report


@dataclass
class ScenarioConfig:
    seed: bytes = b"anchor-scenario"
    flips: int = 10_000
    forgeries: int = 10_000
    encrypt: bool = False
    mutants: frozenset = field(default_factory=frozenset)


def _world(cfg: ScenarioConfig) -> World:
    return World(build_deployment(cfg.seed, frozenset(cfg.mutants)), encrypt=cfg.encrypt)


def _established(world: World) -> World:
    world.start()
    world.run_honest(sends=2)
    return world


def _frames_of(world: World, msg_type: MsgType) -> list[int]:
    return [i for i, f in enumerate(world.frames) if decode_envelope(f.raw).msg_type == msg_type]


def _check_properties(report: Report, world: World) -> None:
    bad = check_properties(world)
    report.check("all security properties hold", not bad, "; ".join(f"{l}: {d}" for l, d in bad))


def scenario_replay(cfg: ScenarioConfig) -> Report:
    report = Report("replay")
    world = _established(_world(cfg))
    accepted = []
    for i, f in enumerate(world.frames):
        if world.process(f.raw, f.recipient):
            accepted.append(f"Replay(#{i} -> {f.recipient})")
    report.check("no replayed handshake or data frame accepted", not accepted,
                 f"{len(world.frames)} frames replayed", accepted)

    # A3 into a brand-new device machine: the device's replay cache rejects it
    a3 = world.frames[_frames_of(world, MsgType.ASSOC_DELIVER)[0]].raw
    probe = world.clone()
    probe.process(a3, DEVICE)
    report.check("replayed AssocDeliver into fresh device machine rejected (NonceMismatch)",
                 isinstance(probe.last_error, NonceMismatch), repr(probe.last_error))
    # after expiry the cache entry is gone, but the ticket itself is dead
    probe = world.clone()
    probe.device.clock.advance(probe.anchor.ticket_lifetime + 1)
    probe.process(a3, DEVICE)
    probe.device.clock.advance(-(probe.anchor.ticket_lifetime + 1))
    report.check("replayed AssocDeliver after expiry rejected (TicketExpired)",
                 isinstance(probe.last_error, TicketExpired), repr(probe.last_error))

    # registration messages are single use
    anchor = world.anchor
    otk = anchor.prg.read(32)
    anchor.registry.provision("s-replay", Kind.SWITCH, otk)
    _, m1 = reg_initiate("s-replay", otk, Prg.from_seed(H(b"s-replay", cfg.seed)))
    reg_respond(anchor, m1)
    try:
        reg_respond(anchor, m1)
        err = None
    except AnchorError as exc:
        err = exc
    report.check("replayed RegInit rejected (OtkConsumed)", isinstance(err, OtkConsumed), repr(err))
    _check_properties(report, world)
    return report


def scenario_tamper(cfg: ScenarioConfig) -> Report:
    report = Report("tamper", meta={"flips": cfg.flips})
    rng = random.Random(H(b"tamper", cfg.seed))

    # every representative byte of every handshake frame, one world per flip
    base = _world(cfg)
    base.start()
    established = []
    step = 0
    while True:
        pending = list(base.pending)
        if not pending:
            break
        i = pending[0]
        raw = base.frames[i].raw
        for bit in range(0, len(raw) * 8, 7):
            w = base.clone()
            w.pending.remove(i)
            mod = bytearray(raw)
            mod[bit // 8] ^= 1 << (bit % 8)
            w.process(bytes(mod), base.frames[i].recipient)
            w.run_honest()
            if check_properties(w) or any(e[0] in ("accept", "commit") and e[3] != _n1(base) for e in w.events):
                established.append(f"frame #{i} bit {bit}")
        base.deliver_pending(i)
        step += 1
    report.check("no tampered handshake frame leads to a mismatched or unauthorised session",
                 not established, f"{step} handshake frames, every 7th bit", established[:10])

    # flipping the device's proof of possession aborts the controller
    w = _world(cfg)
    w.start()
    while w.pending and decode_envelope(w.frames[w.pending[0]].raw).msg_type != MsgType.ASSOC_ACCEPT:
        w.deliver_pending(w.pending[0])
    i = w.pending[0]
    mod = bytearray(w.frames[i].raw)
    mod[-33] ^= 0x01  # last payload byte: inside the proof MAC
    w.pending.remove(i)
    w.process(bytes(mod), CONTROLLER)
    hs = next(iter(w.controller.handshakes.values()))
    report.check("no Established on tampered proof", hs.phase is Phase.ABORTED and not hs.session.established,
                 f"controller phase {hs.phase.name}")

    # random single-bit flips on sealed data frames
    world = _established(_world(cfg))
    sender = world.sessions(CONTROLLER)[0]
    receiver = world.sessions(DEVICE)[0]
    frames = [encode_envelope(seal(sender, rng.randbytes(rng.randrange(0, 200)), encrypt=cfg.encrypt))
              for _ in range(8)]
    accepted = 0
    for _ in range(cfg.flips):
        raw = bytearray(rng.choice(frames))
        pos = rng.randrange(len(raw) * 8)
        raw[pos // 8] ^= 1 << (pos % 8)
        try:
            open_envelope(receiver, decode_envelope(bytes(raw)))
            accepted += 1
        except AnchorError:
            pass
    report.check("0 accepted frames after single-bit flips", accepted == 0, f"{accepted}/{cfg.flips} accepted")
    ok = 0
    for raw in frames:
        try:
            open_envelope(receiver, decode_envelope(raw))
            ok += 1
        except AnchorError:
            pass
    report.check("untampered frames still open after the fuzz", ok == len(frames), f"{ok}/{len(frames)}")
    return report


def _n1(world: World) -> bytes:
    return next(e[3] for e in world.events if e[0] == "request")


def scenario_mitm(cfg: ScenarioConfig) -> Report:
    report = Report("mitm")
    world = _world(cfg)
    world.start()
    attempts, accepted = 0, []

    def probe_all(w: World) -> None:
        nonlocal attempts
        for frame, target in forge_candidates(w):
            attempts += 1
            p = w.clone()
            if p.process(frame, target):
                accepted.append(f"Inject({decode_envelope(frame).msg_type:#x} -> {target})")
        # reflection: hand every observed frame back to its own sender
        for f in w.frames:
            attempts += 1
            p = w.clone()
            if f.sender in (CONTROLLER, DEVICE) and p.process(f.raw, f.sender):
                accepted.append(f"Reflect({decode_envelope(f.raw).msg_type:#x} -> {f.sender})")

    probe_all(world)
    while world.pending:
        world.deliver_pending(world.pending[0])
        probe_all(world)
    for _ in range(2):
        world.send(CONTROLLER)
        world.send(DEVICE)
        probe_all(world)
        while world.pending:
            world.deliver_pending(world.pending[0])

    # splice: a second association's ticket swapped into the first's AssocDeliver
    other = _world(ScenarioConfig(seed=cfg.seed + b"/other", mutants=cfg.mutants))
    other.start()
    other.deliver_pending(0)
    other.deliver_pending(1)
    spliced = other.frames[2].raw
    attempts += 1
    if world.clone().process(spliced, DEVICE):
        accepted.append("Splice(AssocDeliver from unrelated deployment)")

    report.check("0 injected, reflected or spliced frames accepted", not accepted,
                 f"{attempts} attempts", accepted[:10])
    report.check("honest association completes despite probing",
                 bool(world.sessions(CONTROLLER)) and bool(world.sessions(DEVICE)))
    _check_properties(report, world)
    report.meta["attempts"] = attempts
    return report


def forge_after_recovery(cfg: ScenarioConfig, attempts: int | None = None) -> tuple[int, int, dict]:
    """Leak the old ``k_cd``, recover, then try to forge frames for the new session.

    Returns ``(accepted, attempts, info)``.
    """
    attempts = cfg.forgeries if attempts is None else attempts
    rng = random.Random(H(b"forge", cfg.seed))
    world = _established(_world(cfg))
    old_c, old_d = world.sessions(CONTROLLER)[0], world.sessions(DEVICE)[0]
    old_k = bytes(old_c.k_session)
    transcript = [f.raw for f in world.frames]

    dep = world.deployment
    fresh = Prg.from_seed(H(b"fresh-entropy", cfg.seed))
    new_c, new_d = recover(dep.controller, dep.device, dep.anchor, fresh, old=(old_c, old_d))
    new_frames = [encode_envelope(seal(new_c, f"after-{i}".encode())) for i in range(3)]
    for raw in new_frames:
        open_envelope(new_d, decode_envelope(raw))

    kn = Knowledge(keys=[old_k], frames=transcript + new_frames)
    keys = kn.mac_keys()
    sids = sorted(set(kn.of_kind("sid")) | {new_c.session_id})
    accepted = 0
    for _ in range(attempts):
        strategy = rng.randrange(3)
        if strategy == 0:
            env = Envelope(MsgType.DATA, rng.choice(sids), rng.randrange(1, 8),
                           rng.randbytes(rng.randrange(0, 32))).signed(rng.choice(keys))
            raw = encode_envelope(env)
        elif strategy == 1:
            raw = bytearray(rng.choice(new_frames + transcript))
            pos = rng.randrange(len(raw) * 8)
            raw[pos // 8] ^= 1 << (pos % 8)
            raw = bytes(raw)
        else:
            raw = rng.choice(transcript + new_frames)
        try:
            open_envelope(new_d, decode_envelope(raw))
            accepted += 1
        except AnchorError:
            pass
    info = {"old_k_cd_differs": old_k != bytes(new_c.k_session), "adversary_keys": len(keys),
            "new_epoch": new_c.epoch}
    return accepted, attempts, info


def scenario_drop_recover(cfg: ScenarioConfig) -> Report:
    report = Report("drop-recover")
    world = _world(cfg)
    world.start()
    while world.pending:
        i = world.pending[0]
        if decode_envelope(world.frames[i].raw).msg_type == MsgType.ASSOC_ACCEPT:
            world.drop(i)
            continue
        world.deliver_pending(i)
    first = next(iter(world.controller.handshakes.values()))
    report.check("dropping AssocAccept leaves the controller unestablished",
                 first.phase is Phase.AWAITING_ACCEPT, first.phase.name)

    # the controller times out and retries the whole association once
    world.start()
    world.run_honest()
    ctl = world.sessions(CONTROLLER)
    dev = [s for s in world.sessions(DEVICE) if ctl and s.session_id == ctl[0].session_id]
    report.check("Established on retry", len(ctl) == 1 and len(dev) == 1)
    report.check("retry keys agree", bool(dev) and ctl[0].k_session == dev[0].k_session)

    # lost data frames are tolerated, reordering is not
    sc, sd = ctl[0], dev[0]
    f1, f2, f3 = (seal(sc, b"m%d" % i) for i in range(3))
    got = open_envelope(sd, f1), open_envelope(sd, f3)
    try:
        open_envelope(sd, f2)
        late = True
    except AnchorError:
        late = False
    report.check("frame after a dropped frame is accepted; the late one is not",
                 got == (b"m0", b"m2") and not late)

    accepted, attempts, info = forge_after_recovery(cfg, cfg.forgeries)
    report.check("0 forgeries against the recovered session by an adversary holding the old k_cd",
                 accepted == 0, f"{accepted}/{attempts} accepted")
    report.check("recovered k_cd differs from the leaked one", info["old_k_cd_differs"])
    _check_properties(report, world)
    return report


SCENARIOS: dict[str, Callable[[ScenarioConfig], Report]] = {
    "replay": scenario_replay,
    "tamper": scenario_tamper,
    "mitm": scenario_mitm,
    "drop-recover": scenario_drop_recover,
}


def run_scenario(name: str, config: ScenarioConfig | None = None) -> Report:
    try:
        fn = SCENARIOS[name]
    except KeyError:
        raise UnknownScenario(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    return fn(config or ScenarioConfig())
