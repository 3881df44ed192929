"""Shared verdict type emitted by every detection algorithm."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .core_model import Combination, Family
from .errors import DomainError


class Verdict(str, Enum):
    TARGETED = "targeted"
    UNTARGETED = "untargeted"
    UNKNOWN = "unknown"


@dataclass(frozen=True, eq=False)
class Prediction:
    """One algorithm's answer for one output.

    ``target`` is a Family (core-family search), a Combination (set
    intersection, single-input Bayes) or None; ``scores`` maps model
    names to scores in [0,1]; ``flags`` carries audit markers such as
    the below-minimum-activity gate or an unsupported conditional test.
    """

    verdict: Verdict
    target: Family | Combination | None = None
    scores: Mapping[str, float] = field(default_factory=dict)
    flags: tuple[str, ...] = ()
    posteriors: Mapping[str, "object"] | None = None

    def __post_init__(self):
        if self.verdict is Verdict.TARGETED:
            if self.target is None or len(self.target) == 0:
                raise DomainError("a TARGETED prediction needs a non-empty target")
        for name, s in self.scores.items():
            if not 0.0 <= s <= 1.0:
                raise DomainError(f"score {name}={s} outside [0,1]")

    def target_family(self) -> Family | None:
        """The target normalized to a Family (singleton for combinations)."""
        if self.target is None:
            return None
        if isinstance(self.target, Family):
            return self.target
        return Family([self.target])

    def to_dict(self) -> dict:
        target: list | None = None
        if isinstance(self.target, Family):
            target = [list(c.inputs) for c in self.target]
        elif isinstance(self.target, Combination):
            target = [list(self.target.inputs)]
        return {
            "verdict": self.verdict.value,
            "target": target,
            "scores": {k: float(v) for k, v in sorted(self.scores.items())},
            "flags": list(self.flags),
        }
