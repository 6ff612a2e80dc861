"""In-memory adversarial network wrapped around live protocol machines.

A :class:`World` holds one anchor, one controller and one device, every frame
that has crossed the network, and an event log from which the security
properties are checked. All frames pass through the adversary, whose
:class:`Knowledge` grows with each one.
"""
from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Optional

from ..crypto import open_blob
from ..errors import AnchorError
from ..prg import Prg
from ..protocol import (AssociationTicket, HandshakeState, MsgType, Phase, SessionKeys,
                        assoc_accept, assoc_complete, assoc_confirm, assoc_deliver, assoc_grant,
                        assoc_request, decode_envelope, device_listen, encode_envelope,
                        open_envelope, seal, unpack_fields)
from ..protocol.handshake import _ctrl_binding
from .deployment import Deployment
from .knowledge import Knowledge

ANCHOR, CONTROLLER, DEVICE = "anchor", "controller", "device"

RECIPIENTS = {
    MsgType.ASSOC_REQ: (ANCHOR,),
    MsgType.ASSOC_GRANT: (CONTROLLER,),
    MsgType.ASSOC_DELIVER: (DEVICE,),
    MsgType.ASSOC_ACCEPT: (CONTROLLER,),
    MsgType.ASSOC_CONFIRM: (DEVICE,),
    MsgType.DATA: (CONTROLLER, DEVICE),
    MsgType.RATCHET: (CONTROLLER, DEVICE),
}


class ActionKind(enum.Enum):
    START = "Start"        # honest: controller begins an association
    SEND = "Send"          # honest: an established party sends one data frame
    DELIVER = "Deliver"    # honest network delivery of a pending frame
    DROP = "Drop"
    REPLAY = "Replay"
    TAMPER = "Tamper"
    INJECT = "Inject"

    @property
    def adversarial(self) -> bool:
        return self in (ActionKind.DROP, ActionKind.REPLAY, ActionKind.TAMPER, ActionKind.INJECT)


@dataclass(frozen=True)
class NetAction:
    kind: ActionKind
    target: str = ""
    index: Optional[int] = None
    offset: Optional[int] = None
    mask: int = 0
    frame: bytes = b""

    def __str__(self) -> str:
        k = self.kind.value
        if self.kind is ActionKind.START:
            return f"{k}({self.target})"
        if self.kind is ActionKind.SEND:
            return f"{k}({self.target})"
        if self.kind is ActionKind.TAMPER:
            return f"{k}(#{self.index} @{self.offset} ^{self.mask:#04x} -> {self.target})"
        if self.kind is ActionKind.INJECT:
            return f"{k}({_describe(self.frame)} -> {self.target})"
        return f"{k}(#{self.index} -> {self.target})"

    def to_json(self) -> dict:
        d = {"kind": self.kind.value, "target": self.target}
        if self.index is not None:
            d["index"] = self.index
        if self.offset is not None:
            d.update(offset=self.offset, mask=self.mask)
        if self.frame:
            d["frame"] = self.frame.hex()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "NetAction":
        return cls(ActionKind(d["kind"]), d.get("target", ""), d.get("index"), d.get("offset"),
                   d.get("mask", 0), bytes.fromhex(d.get("frame", "")))


def _describe(raw: bytes) -> str:
    try:
        env = decode_envelope(raw)
        return f"{MsgType(env.msg_type).name} sid={env.session_id.hex()[:8]} ctr={env.counter}"
    except (AnchorError, ValueError):
        return f"{len(raw)} raw bytes"


@dataclass
class Frame:
    raw: bytes
    sender: str
    recipient: str


def _copy_session(s: Optional[SessionKeys]) -> Optional[SessionKeys]:
    return None if s is None else replace(s, k_session=bytearray(s.k_session))


def _copy_hs(hs: HandshakeState, principal) -> HandshakeState:
    return replace(hs, principal=principal, session=_copy_session(hs.session),
                   pending_key=None if hs.pending_key is None else bytearray(hs.pending_key))


@dataclass
class World:
    deployment: Deployment
    knowledge: Knowledge = field(default_factory=Knowledge)
    frames: list[Frame] = field(default_factory=list)
    pending: list[int] = field(default_factory=list)
    delivered: set[int] = field(default_factory=set)
    device_machines: list[HandshakeState] = field(default_factory=list)
    events: list[tuple] = field(default_factory=list)
    granted_keys: list[bytes] = field(default_factory=list)
    sent: Counter = field(default_factory=Counter)
    encrypt: bool = False
    last_error: Optional[Exception] = None

    # -- bookkeeping ---------------------------------------------------------

    @property
    def anchor(self):
        return self.deployment.anchor

    @property
    def controller(self):
        return self.deployment.controller

    @property
    def device(self):
        return self.deployment.device

    def clone(self) -> "World":
        a, c, d = self.anchor, self.controller, self.device
        anchor = replace(a, prg=Prg(a.prg.state), seen_requests=dict(a.seen_requests))
        ctl = replace(c, prg=Prg(c.prg.state), seen=dict(c.seen))
        ctl.handshakes = {n1: _copy_hs(hs, ctl) for n1, hs in c.handshakes.items()}
        dev = replace(d, prg=Prg(d.prg.state), seen=dict(d.seen), handshakes={})
        anchor._lock = a._lock
        w = replace(self, deployment=Deployment(anchor, ctl, dev), knowledge=self.knowledge.copy(),
                    frames=list(self.frames), pending=list(self.pending),
                    delivered=set(self.delivered),
                    device_machines=[_copy_hs(hs, dev) for hs in self.device_machines],
                    events=list(self.events), granted_keys=list(self.granted_keys),
                    sent=Counter(self.sent), last_error=None)
        return w

    def emit(self, raw: bytes, sender: str, recipient: str) -> int:
        self.frames.append(Frame(raw, sender, recipient))
        self.pending.append(len(self.frames) - 1)
        self.knowledge.observe(raw)
        return len(self.frames) - 1

    def sessions(self, party: str) -> list[SessionKeys]:
        if party == CONTROLLER:
            machines = self.controller.handshakes.values()
        else:
            machines = self.device_machines
        return [hs.session for hs in machines
                if hs.session is not None and hs.session.established]

    # -- honest behaviour ------------------------------------------------------

    def start(self) -> int:
        hs, a1 = assoc_request(self.controller, self.device.principal_id)
        self.events.append(("request", hs.own_id, hs.peer_id, hs.n1))
        return self.emit(encode_envelope(a1), CONTROLLER, ANCHOR)

    def send(self, party: str, payload: Optional[bytes] = None) -> int:
        session = self.sessions(party)[0]
        if payload is None:
            payload = f"{party}-msg-{self.sent[party]}".encode()
        env = seal(session, payload, encrypt=self.encrypt)
        self.sent[party] += 1
        direction = "c2d" if party == CONTROLLER else "d2c"
        self.events.append(("sent", direction, env.session_id, env.counter, payload))
        return self.emit(encode_envelope(env), party, DEVICE if party == CONTROLLER else CONTROLLER)

    def deliver_pending(self, index: int) -> bool:
        self.pending.remove(index)
        self.delivered.add(index)
        f = self.frames[index]
        return self.process(f.raw, f.recipient)

    def drop(self, index: int) -> None:
        self.pending.remove(index)

    def run_honest(self, sends: int = 0) -> None:
        """Deliver everything in FIFO order, then exchange ``sends`` data frames each way."""
        while self.pending:
            self.deliver_pending(self.pending[0])
        for _ in range(sends):
            for party in (CONTROLLER, DEVICE):
                self.send(party)
                self.deliver_pending(self.pending[-1])

    # -- frame processing ------------------------------------------------------

    def process(self, raw: bytes, target: str) -> bool:
        """Hand ``raw`` to ``target``. Returns True if the recipient accepted it."""
        try:
            self._process(raw, target)
        except AnchorError as exc:
            self.last_error = exc
            return False
        self.last_error = None
        return True

    def _process(self, raw: bytes, target: str) -> None:
        env = decode_envelope(raw)
        t = env.msg_type
        if target == ANCHOR:
            if t != MsgType.ASSOC_REQ:
                raise _Reject("anchor only serves association requests here")
            a2 = assoc_grant(self.anchor, env)
            c, d, n1 = (x for x in unpack_fields(env.payload, 3))
            self.events.append(("grant", c.decode(), d.decode(), n1))
            self._record_grant(a2, c.decode(), d.decode(), n1)
            self.emit(encode_envelope(a2), ANCHOR, CONTROLLER)
        elif target == CONTROLLER:
            if t in (MsgType.DATA, MsgType.RATCHET):
                self._open(CONTROLLER, env)
                return
            hs = self.controller.handshakes.get(env.session_id)
            if hs is None:
                raise _Reject("no controller handshake for this session id")
            if t == MsgType.ASSOC_GRANT:
                _, a3 = assoc_deliver(hs, env)
                self.events.append(("running", hs.own_id, hs.peer_id, hs.n1, hs.n2))
                self.emit(encode_envelope(a3), CONTROLLER, DEVICE)
            elif t == MsgType.ASSOC_ACCEPT:
                a5 = assoc_confirm(hs, env)
                self.events.append(("commit", hs.own_id, hs.peer_id, hs.n1, hs.n2))
                self.emit(encode_envelope(a5), CONTROLLER, DEVICE)
            else:
                raise _Reject("controller does not handle this message type")
        elif target == DEVICE:
            if t in (MsgType.DATA, MsgType.RATCHET):
                self._open(DEVICE, env)
            elif t == MsgType.ASSOC_DELIVER:
                hs = device_listen(self.device)
                _, a4 = assoc_accept(hs, env)
                self.device_machines.append(hs)
                self.events.append(("accept", hs.peer_id, hs.own_id, hs.n1, hs.n2))
                self.emit(encode_envelope(a4), DEVICE, CONTROLLER)
            elif t == MsgType.ASSOC_CONFIRM:
                for hs in self.device_machines:
                    if hs.n1 == env.session_id and hs.phase is Phase.ESTABLISHED:
                        assoc_complete(hs, env)
                        return
                raise _Reject("no device handshake awaiting confirmation")
            else:
                raise _Reject("device does not handle this message type")
        else:
            raise _Reject(f"unknown endpoint {target!r}")

    def _open(self, party: str, env) -> None:
        for s in self.sessions(party):
            if s.session_id == env.session_id:
                payload = open_envelope(s, env)
                direction = "d2c" if party == CONTROLLER else "c2d"
                self.events.append(("recv", direction, env.session_id, env.counter, payload))
                return
        raise _Reject("no session with this id")

    def _record_grant(self, a2, c: str, d: str, n1: bytes) -> None:
        # omniscient bookkeeping: recover k_cd so secrecy can be checked
        ctrl_blob, _ = unpack_fields(a2.payload, 2)
        k_ca = self.anchor.registry.get(c).k_long_term
        self.granted_keys.append(open_blob(k_ca, ctrl_blob, _ctrl_binding(c, d, n1)))


class _Reject(AnchorError):
    """Frame had no machine willing to process it."""


# -- security properties ------------------------------------------------------

SECRECY = "secrecy_k_cd"
AGREE_DEVICE = "injective_agreement_device"
AGREE_CONTROLLER = "injective_agreement_controller"
REQUEST_AUTH = "request_authenticity"
DATA_AUTH = "data_injective_agreement"
LEMMAS = (SECRECY, AGREE_DEVICE, AGREE_CONTROLLER, REQUEST_AUTH, DATA_AUTH)


def _excess(claims: Counter, witnesses: Counter) -> list:
    return sorted(k for k, n in claims.items() if n > witnesses.get(k, 0))


def check_properties(world: World) -> list[tuple[str, str]]:
    """Return ``(lemma, detail)`` for every property the world currently violates."""
    by_kind: dict[str, Counter] = {}
    for ev in world.events:
        by_kind.setdefault(ev[0], Counter())[ev[1:]] += 1
    get = lambda k: by_kind.get(k, Counter())
    out = []
    for k in world.granted_keys:
        if k in world.knowledge.keys or k in world.knowledge.derived:
            out.append((SECRECY, f"adversary knows k_cd {k.hex()[:16]}"))
    for key in _excess(get("accept"), get("running")):
        out.append((AGREE_DEVICE, f"device accepted {key[0]}->{key[1]} n1={key[2].hex()[:8]} "
                                  f"without a distinct matching controller run"))
    for key in _excess(get("commit"), get("accept")):
        out.append((AGREE_CONTROLLER, f"controller committed {key[0]}->{key[1]} n1={key[2].hex()[:8]} "
                                      f"without a distinct matching device run"))
    granted = Counter({k: n for k, n in get("grant").items()})
    for key in _excess(granted, get("request")):
        out.append((REQUEST_AUTH, f"anchor granted {key[0]}->{key[1]} n1={key[2].hex()[:8]} "
                                  f"that the controller did not request"))
    for key in _excess(get("recv"), get("sent")):
        out.append((DATA_AUTH, f"{key[0]} frame ctr={key[2]} accepted without a distinct send"))
    return out
