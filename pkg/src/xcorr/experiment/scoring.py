"""Turn per-output verdicts into precision/recall with exact-match credit.

An emission (a TARGETED verdict) is *correct* only when the output really
is targeted and the emitted family equals the true core exactly — partial
overlap earns nothing.  UNKNOWN verdicts are abstentions: they are not
emissions, so they cost precision nothing, but any targeted output left
unexplained still costs recall.

When the service works at coarser granularity than single inputs (overlap
groups), both sides are projected through the group map before comparison,
so naming any input of the right group counts as finding the association.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from ..core_model import Combination, Family
from ..errors import MismatchedUniverse
from ..prediction import Prediction, Verdict


def project_family(fam: Family, group_map: Mapping[int, int]) -> Family:
    """Rewrite every member input through the group map (identity for
    unmapped inputs).  Members that collapse onto each other merge."""
    return Family(
        Combination(sorted({group_map.get(i, i) for i in c.inputs})) for c in fam
    )


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    Stays inside [0,1] and keeps sane width at extreme rates, unlike the
    normal approximation.  An empty sample is total ignorance: (0, 1).
    """
    if n < 0 or successes < 0 or successes > n:
        raise ValueError(f"need 0 <= successes <= n, got ({successes}, {n})")
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass(frozen=True)
class Metrics:
    """Confusion counts and the two headline rates for one scored set.

    ``flags`` marks degenerate denominators: ``empty_emission`` when
    nothing was emitted (precision defaults to 1.0 — silence makes no
    false claims) and ``no_true_associations`` when the workload had
    nothing to find (recall defaults to 1.0).
    """

    n_outputs: int
    true_targeted: int
    emitted: int
    correct: int
    unknown: int
    precision: float
    recall: float
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "n_outputs": self.n_outputs,
            "true_targeted": self.true_targeted,
            "emitted": self.emitted,
            "correct": self.correct,
            "unknown": self.unknown,
            "precision": self.precision,
            "recall": self.recall,
            "flags": list(self.flags),
        }


def precision_recall(
    predictions: Mapping[int, Prediction],
    truth: Mapping[int, Family | None],
    group_map: Mapping[int, int] | None = None,
) -> Metrics:
    """Score one verdict per output against ground truth.

    ``truth`` maps output ID to the true core family, or None for an
    untargeted output.  Both mappings must cover exactly the same IDs;
    anything else raises :class:`MismatchedUniverse` rather than guessing
    which side dropped data.
    """
    missing = sorted(set(truth) - set(predictions))
    extra = sorted(set(predictions) - set(truth))
    if missing or extra:
        raise MismatchedUniverse(
            f"predictions and truth disagree on output IDs "
            f"(unpredicted: {missing}, unknown to truth: {extra})"
        )

    true_targeted = sum(1 for fam in truth.values() if fam is not None)
    emitted = 0
    correct = 0
    unknown = 0
    for oid, pred in predictions.items():
        if pred.verdict is Verdict.UNKNOWN:
            unknown += 1
            continue
        if pred.verdict is not Verdict.TARGETED:
            continue
        emitted += 1
        fam = truth[oid]
        if fam is None:
            continue
        got = pred.target_family()
        if group_map:
            got = project_family(got, group_map)
            fam = project_family(fam, group_map)
        if got == fam:
            correct += 1

    flags: list[str] = []
    if emitted == 0:
        precision = 1.0
        flags.append("empty_emission")
    else:
        precision = correct / emitted
    if true_targeted == 0:
        recall = 1.0
        flags.append("no_true_associations")
    else:
        recall = correct / true_targeted
    return Metrics(
        n_outputs=len(truth),
        true_targeted=true_targeted,
        emitted=emitted,
        correct=correct,
        unknown=unknown,
        precision=precision,
        recall=recall,
        flags=tuple(flags),
    )
