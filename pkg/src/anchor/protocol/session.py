"""Established-session state: sealing, opening and key ratcheting."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

from ..crypto import expand, mac, xor
from ..errors import BadMac, NotEstablished, ReplayDetected, UnexpectedMessage, WindowExceeded
from ..idvv import IdvvState, idvv_derive, idvv_init, idvv_next, idvv_resync
from .envelope import FLAG_ENCRYPTED, Envelope, MsgType

# mutant flag understood by open_envelope (test-only)
NO_COUNTER_CHECK = "no-counter-check"

_SEED = b"\x34"
_KEY = b"\x35"
_RATCHET = b"\x36"
_SID = b"\x37"
C2D = b"\x00"
D2C = b"\x01"


class Role(enum.Enum):
    CONTROLLER = "Controller"
    DEVICE = "Device"
    ANCHOR = "Anchor"


@dataclass(eq=False)
class SessionKeys:
    k_session: bytearray
    send_idvv: IdvvState
    recv_idvv: IdvvState
    session_id: bytes
    role: Role
    n1: bytes
    n2: bytes
    epoch: int = 0
    highest_recv_counter: int = 0
    established: bool = False
    mutants: frozenset = field(default_factory=frozenset)

    def __repr__(self) -> str:
        return (f"SessionKeys(role={self.role.value}, epoch={self.epoch}, "
                f"established={self.established}, sid={self.session_id.hex()[:8]})")


def _chains(k: bytes, n1: bytes, n2: bytes, role: Role) -> tuple[IdvvState, IdvvState, bytes]:
    c2d = idvv_init(mac(k, _SEED, n1, C2D), mac(k, _KEY, n2, C2D))
    d2c = idvv_init(mac(k, _SEED, n1, D2C), mac(k, _KEY, n2, D2C))
    sid = mac(k, _SID, b"session-id")[:16]
    if role is Role.CONTROLLER:
        return c2d, d2c, sid
    return d2c, c2d, sid


def derive_session(k_cd: bytes, n1: bytes, n2: bytes, role: Role,
                   mutants: frozenset = frozenset()) -> SessionKeys:
    send, recv, sid = _chains(k_cd, n1, n2, role)
    return SessionKeys(bytearray(k_cd), send, recv, sid, role, n1, n2, mutants=mutants)


def _require(session: SessionKeys) -> None:
    if not session.established:
        raise NotEstablished("session is not established")


def seal(session: SessionKeys, payload: bytes, *, encrypt: bool = False,
         msg_type: int = MsgType.DATA) -> Envelope:
    """Frame ``payload`` under the next send-side iDVV and advance the chain."""
    _require(session)
    state = session.send_idvv
    flags = 0
    if encrypt:
        payload = xor(payload, expand(idvv_derive(state, "enc"), len(payload)))
        flags |= FLAG_ENCRYPTED
    env = Envelope(msg_type, session.session_id, state.counter + 1, bytes(payload), flags)
    env = env.signed(idvv_derive(state, "mac"))
    _, session.send_idvv = idvv_next(state)
    return env


def open_envelope(session: SessionKeys, env: Envelope) -> bytes:
    """Verify and unwrap a frame from the peer.

    Counters must strictly increase; gaps up to the resync window are
    tolerated (lost frames), reordering is not. A verified ``RATCHET`` frame
    ratchets this side too.
    """
    _require(session)
    check_counter = NO_COUNTER_CHECK not in session.mutants
    if check_counter and env.counter <= session.highest_recv_counter:
        raise ReplayDetected(f"counter {env.counter} <= {session.highest_recv_counter}")
    index = env.counter - 1
    recv = session.recv_idvv
    try:
        if index < recv.counter:
            if check_counter or index < 0:
                raise ReplayDetected(f"counter {env.counter} already consumed")
            # the mutant regenerates old chain positions from the retained seed
            state = idvv_resync(idvv_init(recv.seed, recv.key), index)
        else:
            state = idvv_resync(recv, index)
    except WindowExceeded:
        raise BadMac("counter outside the resync window") from None
    env.verify(idvv_derive(state, "mac"))
    if env.session_id != session.session_id:
        raise BadMac("session id mismatch")
    if env.msg_type not in (MsgType.DATA, MsgType.RATCHET):
        raise UnexpectedMessage(f"message type {env.msg_type:#x} on a data channel")

    payload = env.payload
    if env.flags & FLAG_ENCRYPTED:
        payload = xor(payload, expand(idvv_derive(state, "enc"), len(payload)))
    if state.counter >= recv.counter:
        _, session.recv_idvv = idvv_next(state)
    session.highest_recv_counter = max(session.highest_recv_counter, env.counter)
    if env.msg_type == MsgType.RATCHET:
        ratchet(session)
    return payload


def _wipe(buf: bytearray) -> None:
    for i in range(len(buf)):
        buf[i] = 0


def ratchet(session: SessionKeys) -> SessionKeys:
    """One-way step of the session key; old key bytes are overwritten in place."""
    _require(session)
    new = mac(bytes(session.k_session), _RATCHET, b"ratchet")
    _wipe(session.k_session)
    session.k_session = bytearray(new)
    session.send_idvv, session.recv_idvv, session.session_id = _chains(
        new, session.n1, session.n2, session.role)
    session.epoch += 1
    session.highest_recv_counter = 0
    return session


def request_ratchet(session: SessionKeys) -> Envelope:
    """Seal a RATCHET notice for the peer, then ratchet locally."""
    env = seal(session, b"", msg_type=MsgType.RATCHET)
    ratchet(session)
    return env


def close(session: SessionKeys) -> None:
    _wipe(session.k_session)
    session.established = False
