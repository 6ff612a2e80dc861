"""Pass/fail reports shared by the attack scenarios, explorer and benchmarks."""
from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class Assertion:
    label: str
    passed: bool
    detail: str = ""
    trace: list[str] = field(default_factory=list)


@dataclass
class Report:
    name: str
    assertions: list[Assertion] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def check(self, label: str, passed: bool, detail: str = "", trace=()) -> bool:
        self.assertions.append(Assertion(label, bool(passed), detail, [str(t) for t in trace]))
        return bool(passed)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "meta": self.meta,
            "assertions": [
                {"label": a.label, "passed": a.passed, "detail": a.detail, "trace": a.trace}
                for a in self.assertions
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"scenario {self.name}: {'PASS' if self.passed else 'FAIL'}"]
        for a in self.assertions:
            lines.append(f"  [{'pass' if a.passed else 'FAIL'}] {a.label}" + (f" ({a.detail})" if a.detail else ""))
            if not a.passed:
                lines.extend(f"      {t}" for t in a.trace)
        return "\n".join(lines)
