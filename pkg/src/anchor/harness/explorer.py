"""Exhaustive bounded search over adversary behaviour.

Honest steps (starting the handshake, delivering pending frames in any order,
sending one data frame per side) are free; adversary actions (drop, replay,
tamper, inject) each consume one unit of depth. Every reachable state is
checked against the properties in :func:`~anchor.harness.network.check_properties`.
States are deduplicated on a fingerprint together with the remaining budget.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional

from ..crypto import H, mac
from ..errors import AnchorError, DepthTooLarge
from ..protocol import MUTANTS, Envelope, MsgType, decode_envelope, encode_envelope, pack_fields
from ..protocol.envelope import HEADER_SIZE, MAC_SIZE
from .deployment import build_deployment
from .network import (ANCHOR, CONTROLLER, DEVICE, RECIPIENTS, ActionKind, NetAction, World,
                      check_properties)

log = logging.getLogger(__name__)

MAX_DEPTH = 8
ADV_NONCE = H(b"adversary-nonce")[:16]
ADV_KEY = H(b"adversary-key")
TAMPER_MASK = 0x01


@dataclass
class ExploreConfig:
    depth: int = 6
    mutants: frozenset = frozenset()
    sessions: int = 1
    sends: int = 1
    seed: bytes = b"anchor-explorer"
    # principal ids whose long-term keys the adversary starts with
    compromised: frozenset = frozenset()


@dataclass
class Violation:
    lemma: str
    detail: str
    trace: list[NetAction]

    def to_json(self) -> dict:
        return {"lemma": self.lemma, "detail": self.detail, "trace": [a.to_json() for a in self.trace]}

    def __str__(self) -> str:
        steps = "\n    ".join(str(a) for a in self.trace)
        return f"[{self.lemma}] {self.detail}\n    {steps}"


@dataclass
class ExploreStats:
    states: int = 0
    pruned: int = 0
    actions: int = 0


def initial_world(cfg: ExploreConfig) -> World:
    world = World(build_deployment(cfg.seed, frozenset(cfg.mutants)))
    for pid in sorted(cfg.compromised):
        world.knowledge.learn_key(world.anchor.registry.get(pid).k_long_term)
    return world


def honest_actions(world: World, cfg: ExploreConfig) -> Iterator[NetAction]:
    if sum(1 for e in world.events if e[0] == "request") < cfg.sessions:
        yield NetAction(ActionKind.START, CONTROLLER)
    for i in world.pending:
        yield NetAction(ActionKind.DELIVER, world.frames[i].recipient, i)
    for party in (CONTROLLER, DEVICE):
        if world.sent[party] < cfg.sends and world.sessions(party):
            yield NetAction(ActionKind.SEND, party)


def tamper_offsets(raw: bytes) -> list[int]:
    """One representative byte per field: session id, counter, each payload field, MAC."""
    offsets = [8, 31]
    try:
        env = decode_envelope(raw)
    except AnchorError:
        return offsets
    pos = HEADER_SIZE
    end = HEADER_SIZE + len(env.payload)
    if env.msg_type in (MsgType.DATA, MsgType.RATCHET):
        if end > pos:
            offsets.append(pos)
    else:
        while pos + 2 <= end:
            n = int.from_bytes(raw[pos:pos + 2], "big")
            if n:
                offsets.append(pos + 2 + n - 1)
            pos += 2 + n
    offsets.append(len(raw) - MAC_SIZE)
    return offsets


def forge_candidates(world: World) -> list[tuple[bytes, str]]:
    """Type-correct frames the adversary can assemble from its knowledge."""
    kn = world.knowledge
    real_keys = kn.mac_keys()
    keys = real_keys + [ADV_KEY]
    ids = kn.of_kind("id")
    nonces = kn.of_kind("nonce")
    all_nonces = nonces + [ADV_NONCE]
    out: list[tuple[bytes, str]] = []

    def add(t, sid, counter, payload, key, target):
        out.append((encode_envelope(Envelope(t, sid, counter, payload).signed(key)), target))

    for c in ids:
        for d in ids:
            if c == d:
                continue
            for n in all_nonces:
                for k in keys:
                    add(MsgType.ASSOC_REQ, n, 1, pack_fields(c, d, n), k, ANCHOR)
    for blob in kn.of_kind("blob"):
        for ticket in kn.of_kind("ticket"):
            for n in nonces:
                for k in keys:
                    add(MsgType.ASSOC_GRANT, n, 2, pack_fields(blob, ticket), k, CONTROLLER)
    for k in keys:
        n2s = all_nonces if k in real_keys else [ADV_NONCE]
        for n1 in nonces:
            for ticket in kn.of_kind("ticket"):
                for n2 in n2s:
                    add(MsgType.ASSOC_DELIVER, n1, 3, pack_fields(ticket, n2, mac(k, b"\x32", n2)), k, DEVICE)
            for n2 in n2s:
                add(MsgType.ASSOC_ACCEPT, n1, 4, pack_fields(mac(k, b"\x33", n2)), k, CONTROLLER)
                add(MsgType.ASSOC_CONFIRM, n1, 5, pack_fields(mac(k, b"\x39", n1, n2)), k, DEVICE)
    data_sids = sorted(set(kn.of_kind("sid")) - set(nonces))
    for sid in data_sids:
        for k in keys:
            for counter in (1, 2):
                for target in (CONTROLLER, DEVICE):
                    add(MsgType.DATA, sid, counter, b"forged", k, target)
    return out


def adversary_actions(world: World) -> Iterator[NetAction]:
    for i in world.pending:
        yield NetAction(ActionKind.DROP, world.frames[i].recipient, i)
    for i in sorted(world.delivered):
        f = world.frames[i]
        try:
            targets = RECIPIENTS.get(decode_envelope(f.raw).msg_type, ())
        except AnchorError:
            continue
        for t in targets:
            yield NetAction(ActionKind.REPLAY, t, i)
    for i in world.pending:
        f = world.frames[i]
        for off in tamper_offsets(f.raw):
            yield NetAction(ActionKind.TAMPER, f.recipient, i, off, TAMPER_MASK)
    for frame, target in forge_candidates(world):
        yield NetAction(ActionKind.INJECT, target, frame=frame)


def apply(world: World, action: NetAction) -> bool:
    """Perform ``action`` on ``world`` in place. Returns whether a frame was accepted."""
    k = action.kind
    if k is ActionKind.START:
        world.start()
        return True
    if k is ActionKind.SEND:
        world.send(action.target)
        return True
    if k is ActionKind.DELIVER:
        return world.deliver_pending(action.index)
    if k is ActionKind.DROP:
        world.drop(action.index)
        return False
    if k is ActionKind.REPLAY:
        return world.process(world.frames[action.index].raw, action.target)
    if k is ActionKind.TAMPER:
        raw = bytearray(world.frames[action.index].raw)
        raw[action.offset] ^= action.mask
        if action.index in world.pending:
            world.pending.remove(action.index)
            world.delivered.add(action.index)
        return world.process(bytes(raw), action.target)
    if k is ActionKind.INJECT:
        return world.process(action.frame, action.target)
    raise ValueError(f"unknown action {action!r}")


def _session_fp(s) -> tuple:
    if s is None:
        return ()
    return (s.epoch, s.send_idvv.counter, s.recv_idvv.counter, s.highest_recv_counter, s.established)


def fingerprint(world: World) -> tuple:
    hs_fp = lambda hs: (hs.phase, hs.n1, hs.n2, _session_fp(hs.session))
    raw = lambda idx: tuple(sorted(world.frames[i].raw for i in idx))
    return (
        world.anchor.prg.state.S, world.controller.prg.state.S, world.device.prg.state.S,
        frozenset(world.anchor.seen_requests), frozenset(world.device.seen),
        tuple(sorted(hs_fp(h) for h in world.controller.handshakes.values())),
        tuple(sorted(hs_fp(h) for h in world.device_machines)),
        raw(range(len(world.frames))), raw(world.pending), raw(world.delivered),
        tuple(sorted(world.events)), tuple(sorted(world.sent.items())),
    )


def _validate(depth: int, mutants) -> None:
    if depth > MAX_DEPTH:
        raise DepthTooLarge(f"depth {depth} exceeds the cap of {MAX_DEPTH}")
    if depth < 1:
        raise ValueError("depth must be at least 1")
    unknown = set(mutants) - MUTANTS
    if unknown:
        raise ValueError(f"unknown mutant flags: {sorted(unknown)}")


class _Found(Exception):
    pass


def explore_bounded(depth: int = 6, mutants=frozenset(), *, config: Optional[ExploreConfig] = None,
                    stop_at_first: bool = False,
                    stats: Optional[ExploreStats] = None) -> list[Violation]:
    """All distinct property violations reachable with at most ``depth`` adversary actions.

    With ``stop_at_first`` the search ends at the first violating state.
    """
    cfg = config or ExploreConfig(depth=depth, mutants=frozenset(mutants))
    _validate(cfg.depth, cfg.mutants)
    stats = stats if stats is not None else ExploreStats()
    visited: dict[tuple, int] = {}
    found: dict[tuple[str, str], Violation] = {}

    def dfs(world: World, budget: int, trace: list[NetAction]) -> None:
        fp = fingerprint(world)
        if visited.get(fp, -1) >= budget:
            stats.pruned += 1
            return
        visited[fp] = budget
        stats.states += 1
        for lemma, detail in check_properties(world):
            found.setdefault((lemma, detail), Violation(lemma, detail, list(trace)))
        if found and stop_at_first:
            raise _Found
        moves = list(honest_actions(world, cfg))
        if budget > 0:
            moves += list(adversary_actions(world))
        for action in moves:
            stats.actions += 1
            child = world.clone()
            apply(child, action)
            dfs(child, budget - 1 if action.kind.adversarial else budget, trace + [action])

    try:
        dfs(initial_world(cfg), cfg.depth, [])
    except _Found:
        pass
    log.info("explored %d states (%d pruned, %d actions)", stats.states, stats.pruned, stats.actions)
    return sorted(found.values(), key=lambda v: (v.lemma, len(v.trace), v.detail))


def replay_trace(trace: list[NetAction], config: Optional[ExploreConfig] = None,
                 mutants=frozenset()) -> World:
    """Re-execute a recorded trace from the initial state."""
    cfg = config or ExploreConfig(mutants=frozenset(mutants))
    world = initial_world(cfg)
    for action in trace:
        apply(world, action)
    return world
