"""Deterministic one-anchor/one-controller/one-device setups for tests and attacks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from ..crypto import H
from ..prg import Prg
from ..protocol import AnchorContext, Principal, register
from ..service.policy import PolicyRule
from ..service.registry import Kind, Registry

CONTROLLER_ID = "c1"
DEVICE_ID = "s1"
FIXED_TIME = 1_700_000_000.0


class ManualClock:
    """Injectable clock for tests; only moves when told to."""

    def __init__(self, now: float = FIXED_TIME):
        self.now = now

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds


@dataclass
class Deployment:
    anchor: AnchorContext
    controller: Principal
    device: Principal

    @property
    def registry(self) -> Registry:
        return self.anchor.registry


def build_deployment(seed: bytes = b"anchor-harness", mutants: frozenset = frozenset(),
                     clock: Optional[Callable[[], float]] = None,
                     policy: Optional[list[PolicyRule]] = None) -> Deployment:
    """Provision and register one controller and one switch via the real
    registration protocol. Every generator is seeded from ``seed``."""
    clock = clock or ManualClock()
    registry = Registry(clock=clock)
    if policy is None:
        policy = [PolicyRule("c*", "s*", True)]
    anchor = AnchorContext(registry, policy, Prg.from_seed(H(b"anchor", seed)), clock=clock,
                           mutants=mutants)
    principals = []
    for pid, kind in ((CONTROLLER_ID, Kind.CONTROLLER), (DEVICE_ID, Kind.SWITCH)):
        otk = anchor.prg.read(32)
        registry.provision(pid, kind, otk)
        prg = Prg.from_seed(H(pid.encode(), seed))
        k = register(pid, otk, anchor, prg)
        principals.append(Principal(pid, kind, k, prg, clock=clock, mutants=mutants))
    return Deployment(anchor, *principals)
