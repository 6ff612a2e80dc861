"""Ordered allow/deny rules for controller-device associations."""
from __future__ import annotations

import json
from dataclasses import dataclass
from fnmatch import fnmatchcase
from pathlib import Path
from typing import Iterable


@dataclass(frozen=True)
class PolicyRule:
    controller: str
    device: str
    allow: bool

    def matches(self, controller_id: str, device_id: str) -> bool:
        return fnmatchcase(controller_id, self.controller) and fnmatchcase(device_id, self.device)


def authorize(policy: Iterable[PolicyRule], controller_id: str, device_id: str) -> bool:
    """First matching rule decides; no match means deny."""
    for rule in policy:
        if rule.matches(controller_id, device_id):
            return rule.allow
    return False


def load_policy(path: str | Path) -> list[PolicyRule]:
    """Read a JSON array of ``{"controller": ..., "device": ..., "allow": ...}``."""
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, list):
        raise ValueError("policy file must hold a JSON array")
    rules = []
    for i, item in enumerate(raw):
        try:
            rules.append(PolicyRule(str(item["controller"]), str(item["device"]), bool(item["allow"])))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"policy rule {i} is malformed: {exc}") from None
    return rules
