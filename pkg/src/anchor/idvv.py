"""iDVV chains: one-time values generated in lockstep by two associated peers.

Both ends start from the same ``(seed, key)`` and advance independently; the
n-th value is a pure function of ``(seed, key, n)``, so nothing but derived
material ever has to cross the wire.
"""
from __future__ import annotations

from dataclasses import dataclass

from .crypto import H, mac
from .errors import Backward, BadLength, CounterExhausted, LabelTooLong, WindowExceeded

RESYNC_WINDOW = 1024
COUNTER_LIMIT = 1 << 63
MAX_LABEL = 16

_INIT = b"\x20"
_STEP = b"\x21"
_DERIVE = b"\x22"


@dataclass(frozen=True, slots=True)
class IdvvState:
    seed: bytes
    key: bytes
    idvv: bytes
    counter: int = 0

    def __repr__(self) -> str:
        return f"IdvvState(counter={self.counter})"


def idvv_init(seed: bytes, key: bytes) -> IdvvState:
    if len(seed) != 32 or len(key) != 32:
        raise BadLength("iDVV seed and key must both be 32 bytes")
    return IdvvState(seed, key, H(_INIT, seed, key), 0)


def idvv_next(state: IdvvState) -> tuple[bytes, IdvvState]:
    """Emit the current value and step the chain."""
    if state.counter >= COUNTER_LIMIT:
        raise CounterExhausted("iDVV counter exhausted; re-associate")
    return state.idvv, IdvvState(state.seed, state.key, H(_STEP, state.idvv, state.key),
                                 state.counter + 1)


def idvv_derive(state: IdvvState, label: str | bytes) -> bytes:
    if isinstance(label, str):
        label = label.encode()
    if len(label) > MAX_LABEL:
        raise LabelTooLong(f"label is {len(label)} bytes, limit {MAX_LABEL}")
    return mac(state.idvv, _DERIVE, label)


def idvv_resync(state: IdvvState, target: int) -> IdvvState:
    if target < state.counter:
        raise Backward(f"cannot rewind from {state.counter} to {target}")
    if target - state.counter > RESYNC_WINDOW:
        raise WindowExceeded(f"target {target} is more than {RESYNC_WINDOW} ahead of {state.counter}")
    while state.counter < target:
        _, state = idvv_next(state)
    return state
