"""Registration and association state machines.

Registration (device <-> anchor, two messages) turns an out-of-band one-time
key into a long-term key shared with the anchor. Association is a KDC-style
exchange in which the anchor hands the controller a fresh key ``k_cd`` plus a
ticket only the device can open::

    A1  C -> X   AssocReq      {c, d, n1}                        MAC K_ca
    A2  X -> C   AssocGrant    {seal_Kca(k_cd), ticket}          MAC K_ca
    A3  C -> D   AssocDeliver  {ticket, n2, HMAC(k_cd, 32|n2)}   MAC k_cd
    A4  D -> C   AssocAccept   {HMAC(k_cd, 33|n2)}               MAC k_cd
    A5  C -> D   AssocConfirm  {HMAC(k_cd, 39|n1|n2)}            MAC k_cd

Every verification failure moves the machine to ``ABORTED``, which is terminal.
"""
from __future__ import annotations

import contextlib
import enum
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..crypto import H, ct_equal, mac, open_blob, seal_blob
from ..errors import (Aborted, BadConfirm, BadLength, BadMac, DeviceRevoked, NonceMismatch,
                      OtkConsumed, ProtocolError, TicketExpired, Unauthorized, UnexpectedMessage,
                      UnknownDevice)
from ..prg import Prg
from ..service.policy import PolicyRule, authorize
from ..service.registry import Kind, RecordStatus, Registry
from .envelope import Envelope, MsgType, pack_fields, unpack_fields
from .session import NO_COUNTER_CHECK, Role, SessionKeys, close, derive_session

NONCE_SIZE = 16
TICKET_LIFETIME = 300

# test-only mutants; each removes one check
NO_MAC_ON_A1 = "no-mac-on-A1"
REUSED_NONCE = "reused-nonce"
MUTANTS = frozenset({NO_MAC_ON_A1, REUSED_NONCE, NO_COUNTER_CHECK})

_REG_KEY = b"\x30"
_REG_CONFIRM = b"\x31"
_CHALLENGE = b"\x32"
_PROOF = b"\x33"
_CONFIRM = b"\x39"
_CTRL_NONCE = b"\x40"


class Phase(enum.IntEnum):
    IDLE = 0
    AWAITING_REG_REPLY = 1
    REGISTERED = 2
    AWAITING_GRANT = 3
    AWAITING_DELIVER = 4
    AWAITING_ACCEPT = 5
    ESTABLISHED = 6
    CONFIRMED = 7
    ABORTED = 99


@dataclass
class Principal:
    """A controller or switch with its long-term key and local randomness."""

    principal_id: str
    kind: Kind
    k_long_term: bytes
    prg: Prg
    clock: Callable[[], float] = time.time
    mutants: frozenset = frozenset()
    # device-side replay cache: (controller_id, n1) -> ticket expiry
    seen: dict = field(default_factory=dict)
    # controller-side: n1 -> handshake
    handshakes: dict = field(default_factory=dict)


@dataclass
class AnchorContext:
    registry: Registry
    policy: list[PolicyRule]
    prg: Prg
    clock: Callable[[], float] = time.time
    ticket_lifetime: int = TICKET_LIFETIME
    mutants: frozenset = frozenset()
    seen_requests: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


@dataclass(eq=False)
class HandshakeState:
    role: Role
    phase: Phase
    own_id: str
    peer_id: Optional[str] = None
    n1: bytes = b""
    n2: bytes = b""
    pending_key: Optional[bytearray] = None
    principal: Optional[Principal] = None
    session: Optional[SessionKeys] = None
    error: Optional[Exception] = None

    @property
    def aborted(self) -> bool:
        return self.phase is Phase.ABORTED

    def __repr__(self) -> str:
        return f"HandshakeState({self.role.value}, {self.phase.name}, {self.own_id}->{self.peer_id})"


@dataclass(frozen=True)
class AssociationTicket:
    device_id: str
    controller_id: str
    k_cd_sealed: bytes
    expiry: int
    anchor_nonce: bytes

    def encode(self) -> bytes:
        return pack_fields(self.device_id.encode(), self.controller_id.encode(), self.k_cd_sealed,
                           self.expiry.to_bytes(8, "big"), self.anchor_nonce)

    @classmethod
    def decode(cls, raw: bytes) -> "AssociationTicket":
        d, c, sealed, expiry, nonce = unpack_fields(raw, 5)
        if len(expiry) != 8 or len(nonce) != NONCE_SIZE:
            raise BadMac("malformed ticket")
        return cls(d.decode(errors="replace"), c.decode(errors="replace"), sealed,
                   int.from_bytes(expiry, "big"), nonce)

    def binding(self, n1: bytes) -> bytes:
        """Associated data authenticated by the sealed key."""
        return pack_fields(b"ticket", self.device_id.encode(), self.controller_id.encode(),
                           self.expiry.to_bytes(8, "big"), self.anchor_nonce, n1)


def _wipe(buf: Optional[bytearray]) -> None:
    if buf is not None:
        for i in range(len(buf)):
            buf[i] = 0


@contextlib.contextmanager
def _step(hs: HandshakeState, expected: Phase, env: Envelope, msg_type: MsgType):
    if hs.phase is Phase.ABORTED:
        raise Aborted(f"{hs!r} already aborted") from hs.error
    if hs.phase is not expected or env.msg_type != msg_type:
        # stray or replayed frame: reject without disturbing the machine
        raise UnexpectedMessage(f"{MsgType(msg_type).name} not expected by {hs!r}"
                                if env.msg_type == msg_type else
                                f"message type {env.msg_type:#x} not expected by {hs!r}")
    try:
        yield
    except (ProtocolError, ValueError) as exc:
        hs.phase = Phase.ABORTED
        hs.error = exc
        _wipe(hs.pending_key)
        if hs.session is not None:
            close(hs.session)
        raise


def _nonce(n: bytes) -> bytes:
    if len(n) != NONCE_SIZE:
        raise NonceMismatch("nonce must be 16 bytes")
    return n


# --- registration ---------------------------------------------------------

def reg_initiate(device_id: str, otk: bytes, prg: Prg) -> tuple[HandshakeState, Envelope]:
    if len(otk) != 32:
        raise BadLength("one-time key must be 32 bytes")
    n_d = prg.read(NONCE_SIZE)
    hs = HandshakeState(Role.DEVICE, Phase.AWAITING_REG_REPLY, device_id, "anchor", n1=n_d,
                        pending_key=bytearray(otk))
    m1 = Envelope(MsgType.REG_INIT, n_d, 1, pack_fields(device_id.encode(), n_d)).signed(otk)
    return hs, m1


def reg_respond(anchor: AnchorContext, m1: Envelope, registry: Optional[Registry] = None):
    """Anchor side of registration. Returns ``(M_reg2, DeviceRecord)``."""
    registry = registry or anchor.registry
    if m1.msg_type != MsgType.REG_INIT:
        raise UnexpectedMessage("expected RegInit")
    raw_id, n_d = unpack_fields(m1.payload, 2)
    device_id = raw_id.decode(errors="replace")
    if _nonce(n_d) != m1.session_id:
        raise NonceMismatch("session id does not carry the device nonce")
    rec = registry.get(device_id)
    if rec.status is RecordStatus.REVOKED:
        raise DeviceRevoked(device_id)
    if rec.otk_consumed:
        raise OtkConsumed(device_id)
    otk = rec.k_long_term
    m1.verify(otk)
    n_a = anchor.prg.read(NONCE_SIZE)
    k_da = mac(otk, _REG_KEY, n_d, n_a)
    rec = registry.consume_otk(device_id, otk, k_da)
    confirm = mac(k_da, _REG_CONFIRM, n_d)
    m2 = Envelope(MsgType.REG_REPLY, n_d, 2, pack_fields(n_a, confirm)).signed(k_da)
    return m2, rec


def reg_finalize(hs: HandshakeState, m2: Envelope) -> bytes:
    with _step(hs, Phase.AWAITING_REG_REPLY, m2, MsgType.REG_REPLY):
        if m2.session_id != hs.n1:
            raise NonceMismatch("reply is for another registration")
        n_a, confirm = unpack_fields(m2.payload, 2)
        k_da = mac(bytes(hs.pending_key), _REG_KEY, hs.n1, _nonce(n_a))
        if not ct_equal(confirm, mac(k_da, _REG_CONFIRM, hs.n1)):
            raise BadConfirm("anchor key confirmation failed")
        m2.verify(k_da)
        _wipe(hs.pending_key)
        hs.pending_key = None
        hs.phase = Phase.REGISTERED
        return k_da


# --- association ----------------------------------------------------------

def _ctrl_binding(c: str, d: str, n1: bytes) -> bytes:
    return pack_fields(b"ctrl", c.encode(), d.encode(), n1)


def assoc_request(controller: Principal, device_id: str,
                  prg: Optional[Prg] = None) -> tuple[HandshakeState, Envelope]:
    n1 = (prg or controller.prg).read(NONCE_SIZE)
    hs = HandshakeState(Role.CONTROLLER, Phase.AWAITING_GRANT, controller.principal_id, device_id,
                        n1=n1, principal=controller)
    controller.handshakes[n1] = hs
    a1 = Envelope(MsgType.ASSOC_REQ, n1, 1,
                  pack_fields(controller.principal_id.encode(), device_id.encode(), n1))
    return hs, a1.signed(controller.k_long_term)


def _active(registry: Registry, pid: str, kind: Kind):
    rec = registry.get(pid)
    if rec.status is not RecordStatus.ACTIVE or rec.kind is not kind:
        raise UnknownDevice(f"{pid} is not an active {kind.value}")
    return rec


def assoc_grant(anchor: AnchorContext, a1: Envelope, registry: Optional[Registry] = None,
                policy: Optional[list[PolicyRule]] = None) -> Envelope:
    registry = registry or anchor.registry
    policy = anchor.policy if policy is None else policy
    if a1.msg_type != MsgType.ASSOC_REQ:
        raise UnexpectedMessage("expected AssocReq")
    raw_c, raw_d, n1 = unpack_fields(a1.payload, 3)
    c_id, d_id = raw_c.decode(errors="replace"), raw_d.decode(errors="replace")
    if _nonce(n1) != a1.session_id:
        raise NonceMismatch("session id does not carry n1")
    c_rec = _active(registry, c_id, Kind.CONTROLLER)
    if NO_MAC_ON_A1 not in anchor.mutants:
        a1.verify(c_rec.k_long_term)
    d_rec = _active(registry, d_id, Kind.SWITCH)
    if not authorize(policy, c_id, d_id):
        raise Unauthorized(f"policy denies {c_id} -> {d_id}")

    now = anchor.clock()
    with anchor._lock:
        for k, exp in list(anchor.seen_requests.items()):
            if exp < now:
                del anchor.seen_requests[k]
        if (c_id, n1) in anchor.seen_requests:
            raise NonceMismatch("association request replayed")
        anchor.seen_requests[(c_id, n1)] = now + anchor.ticket_lifetime
        k_cd = anchor.prg.read(32)
        anchor_nonce = anchor.prg.read(NONCE_SIZE)

    expiry = int(now) + anchor.ticket_lifetime
    unsealed = AssociationTicket(d_id, c_id, b"", expiry, anchor_nonce)
    ticket = AssociationTicket(d_id, c_id,
                               seal_blob(d_rec.k_long_term, k_cd, anchor_nonce, unsealed.binding(n1)),
                               expiry, anchor_nonce)
    ctrl_blob = seal_blob(c_rec.k_long_term, k_cd, H(_CTRL_NONCE, anchor_nonce)[:16],
                          _ctrl_binding(c_id, d_id, n1))
    a2 = Envelope(MsgType.ASSOC_GRANT, n1, 2, pack_fields(ctrl_blob, ticket.encode()))
    return a2.signed(c_rec.k_long_term)


def assoc_deliver(hs: HandshakeState, a2: Envelope) -> tuple[SessionKeys, Envelope]:
    ctl = hs.principal
    with _step(hs, Phase.AWAITING_GRANT, a2, MsgType.ASSOC_GRANT):
        if a2.session_id != hs.n1:
            raise NonceMismatch("grant is for another request")
        a2.verify(ctl.k_long_term)
        ctrl_blob, raw_ticket = unpack_fields(a2.payload, 2)
        ticket = AssociationTicket.decode(raw_ticket)
        if ticket.device_id != hs.peer_id or ticket.controller_id != hs.own_id:
            raise NonceMismatch("ticket names another controller/device pair")
        k_cd = open_blob(ctl.k_long_term, ctrl_blob, _ctrl_binding(hs.own_id, hs.peer_id, hs.n1))
        n2 = ctl.prg.read(NONCE_SIZE)
        a3 = Envelope(MsgType.ASSOC_DELIVER, hs.n1, 3,
                      pack_fields(raw_ticket, n2, mac(k_cd, _CHALLENGE, n2))).signed(k_cd)
        hs.n2 = n2
        hs.pending_key = bytearray(k_cd)
        hs.session = derive_session(k_cd, hs.n1, n2, Role.CONTROLLER, ctl.mutants)
        hs.phase = Phase.AWAITING_ACCEPT
        return hs.session, a3


def device_listen(device: Principal) -> HandshakeState:
    """A fresh device-side machine waiting for an AssocDeliver."""
    return HandshakeState(Role.DEVICE, Phase.AWAITING_DELIVER, device.principal_id, principal=device)


def assoc_accept(hs: HandshakeState, a3: Envelope) -> tuple[SessionKeys, Envelope]:
    dev = hs.principal
    with _step(hs, Phase.AWAITING_DELIVER, a3, MsgType.ASSOC_DELIVER):
        raw_ticket, n2, challenge = unpack_fields(a3.payload, 3)
        ticket = AssociationTicket.decode(raw_ticket)
        if ticket.device_id != dev.principal_id:
            raise NonceMismatch("ticket is for another device")
        n1 = a3.session_id
        k_cd = open_blob(dev.k_long_term, ticket.k_cd_sealed, ticket.binding(n1))
        now = dev.clock()
        if now > ticket.expiry:
            raise TicketExpired(f"ticket expired at {ticket.expiry}")
        a3.verify(k_cd)
        if not ct_equal(challenge, mac(k_cd, _CHALLENGE, _nonce(n2))):
            raise BadMac("controller challenge does not verify")
        key = (ticket.controller_id, n1)
        for k, exp in list(dev.seen.items()):
            if exp < now:
                del dev.seen[k]
        if key in dev.seen and REUSED_NONCE not in dev.mutants:
            raise NonceMismatch("association nonce already used")
        dev.seen[key] = ticket.expiry

        hs.peer_id, hs.n1, hs.n2 = ticket.controller_id, n1, n2
        hs.pending_key = bytearray(k_cd)
        hs.session = derive_session(k_cd, n1, n2, Role.DEVICE, dev.mutants)
        hs.session.established = True
        hs.phase = Phase.ESTABLISHED
        a4 = Envelope(MsgType.ASSOC_ACCEPT, n1, 4, pack_fields(mac(k_cd, _PROOF, n2)))
        return hs.session, a4.signed(k_cd)


def assoc_confirm(hs: HandshakeState, a4: Envelope) -> Envelope:
    """Verify the device's proof of possession; the controller is then Established.

    Returns the closing AssocConfirm frame for the device.
    """
    with _step(hs, Phase.AWAITING_ACCEPT, a4, MsgType.ASSOC_ACCEPT):
        if a4.session_id != hs.n1:
            raise NonceMismatch("accept is for another association")
        k_cd = bytes(hs.pending_key)
        a4.verify(k_cd)
        (proof,) = unpack_fields(a4.payload, 1)
        if not ct_equal(proof, mac(k_cd, _PROOF, hs.n2)):
            raise BadMac("device proof of possession does not verify")
        hs.session.established = True
        hs.phase = Phase.ESTABLISHED
        a5 = Envelope(MsgType.ASSOC_CONFIRM, hs.n1, 5, pack_fields(mac(k_cd, _CONFIRM, hs.n1, hs.n2)))
        return a5.signed(k_cd)


def assoc_complete(hs: HandshakeState, a5: Envelope) -> None:
    """Device-side key confirmation; optional, the session is usable after accept."""
    with _step(hs, Phase.ESTABLISHED, a5, MsgType.ASSOC_CONFIRM):
        k_cd = bytes(hs.pending_key)
        if a5.session_id != hs.n1:
            raise NonceMismatch("confirm is for another association")
        a5.verify(k_cd)
        (tag,) = unpack_fields(a5.payload, 1)
        if not ct_equal(tag, mac(k_cd, _CONFIRM, hs.n1, hs.n2)):
            raise BadMac("controller key confirmation failed")
        hs.phase = Phase.CONFIRMED


# --- in-process drivers ---------------------------------------------------

def register(device_id: str, otk: bytes, anchor: AnchorContext, prg: Prg) -> bytes:
    hs, m1 = reg_initiate(device_id, otk, prg)
    m2, _ = reg_respond(anchor, m1)
    return reg_finalize(hs, m2)


def associate(controller: Principal, device: Principal,
              anchor: AnchorContext) -> tuple[SessionKeys, SessionKeys]:
    """Run all five association messages in-process."""
    hs_c, a1 = assoc_request(controller, device.principal_id)
    a2 = assoc_grant(anchor, a1)
    _, a3 = assoc_deliver(hs_c, a2)
    hs_d = device_listen(device)
    s_d, a4 = assoc_accept(hs_d, a3)
    a5 = assoc_confirm(hs_c, a4)
    assoc_complete(hs_d, a5)
    controller.handshakes.pop(hs_c.n1, None)
    return hs_c.session, s_d


def recover(controller: Principal, device: Principal, anchor: AnchorContext,
            prg: Optional[Prg] = None,
            old: Optional[tuple[SessionKeys, SessionKeys]] = None) -> tuple[SessionKeys, SessionKeys]:
    """Re-associate after a suspected compromise.

    The anchor's generator is reseeded first (from ``prg`` if given, else
    from its attached entropy source) so the new ``k_cd`` does not depend on
    any state an attacker may have captured.
    """
    if prg is not None:
        anchor.prg.reseed(prg.read(32))
    else:
        anchor.prg.reseed()
    if old is not None:
        for s in old:
            close(s)
    return associate(controller, device, anchor)
