"""Forward-secure hash-chain generator.

:class:`PrgState` is an immutable value; ``prg_next`` and ``prg_reseed``
return the successor state. :class:`Prg` is a small mutable wrapper used by
the protocol code, which can pull fresh entropy when the reseed limit is hit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .crypto import H, expand
from .errors import ReseedRequired, SeedTooShort

RESEED_LIMIT = 1 << 20
MAX_REQUEST = 4096

_SEED = b"\x10"
_OUTPUT = b"\x11"
_ADVANCE = b"\x12"
_RESEED = b"\x13"


@dataclass(frozen=True, slots=True)
class PrgState:
    S: bytes
    generated: int = 0
    reseed_epoch: int = 0

    def __repr__(self) -> str:
        return f"PrgState(generated={self.generated}, reseed_epoch={self.reseed_epoch})"


def prg_seed(entropy: bytes) -> PrgState:
    if len(entropy) < 32:
        raise SeedTooShort(f"seed needs at least 32 bytes, got {len(entropy)}")
    return PrgState(H(_SEED, entropy))


def prg_next(state: PrgState, n: int) -> tuple[bytes, PrgState]:
    if not 1 <= n <= MAX_REQUEST:
        raise ValueError(f"request size must be in 1..{MAX_REQUEST}")
    if state.generated + n > RESEED_LIMIT:
        raise ReseedRequired(f"{state.generated} bytes generated since last reseed")
    out = expand(H(_OUTPUT, state.S), n)
    return out, PrgState(H(_ADVANCE, state.S), state.generated + n, state.reseed_epoch)


def prg_reseed(state: PrgState, entropy: bytes) -> PrgState:
    if len(entropy) < 16:
        raise SeedTooShort(f"reseed needs at least 16 bytes, got {len(entropy)}")
    return PrgState(H(_RESEED, state.S, entropy), 0, state.reseed_epoch + 1)


class Prg:
    """Stateful convenience handle around :class:`PrgState`.

    ``entropy`` is an optional callable returning fresh bytes (typically
    ``pool.extract``); when given, the reseed limit is handled transparently.
    """

    def __init__(self, state: PrgState, entropy: Optional[Callable[[int], bytes]] = None):
        self.state = state
        self._entropy = entropy

    @classmethod
    def from_seed(cls, seed: bytes, entropy: Optional[Callable[[int], bytes]] = None) -> "Prg":
        return cls(prg_seed(seed), entropy)

    @classmethod
    def from_pool(cls, pool) -> "Prg":
        return cls(prg_seed(pool.extract(32)), pool.extract)

    def read(self, n: int) -> bytes:
        try:
            out, self.state = prg_next(self.state, n)
        except ReseedRequired:
            if self._entropy is None:
                raise
            self.reseed()
            out, self.state = prg_next(self.state, n)
        return out

    def reseed(self, entropy: bytes | None = None) -> None:
        if entropy is None:
            if self._entropy is None:
                raise ReseedRequired("no entropy source attached")
            entropy = self._entropy(32)
        self.state = prg_reseed(self.state, entropy)
