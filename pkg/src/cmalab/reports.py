"""Small serializable report containers shared by the property suites."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

SCHEMA_VERSION = "1.0"

PASS = "pass"
FAIL = "fail"


def _clean(value):
    # JSON cannot carry inf/nan; keep them readable and stable.
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "tolist"):
        return _clean(value.tolist())
    if hasattr(value, "item"):
        return _clean(value.item())
    return value


def to_json(payload: dict, **kwargs) -> str:
    return json.dumps(_clean(payload), sort_keys=True, indent=2, **kwargs) + "\n"


@dataclass
class PropertyResult:
    property: str
    verdict: str
    worst_slack: float
    witness_points: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> dict:
        out = {
            "property": self.property,
            "verdict": self.verdict,
            "worst_slack": float(self.worst_slack),
            "witness_points": list(self.witness_points),
        }
        if self.details:
            out["details"] = self.details
        return _clean(out)


@dataclass
class PropertyReport:
    subject: str
    results: list[PropertyResult] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, name: str) -> PropertyResult:
        for r in self.results:
            if r.property == name:
                return r
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return _clean(
            {
                "schema_version": SCHEMA_VERSION,
                "subject": self.subject,
                "meta": self.meta,
                "results": [r.to_dict() for r in self.results],
            }
        )


def verdict(ok: bool) -> str:
    return PASS if ok else FAIL
