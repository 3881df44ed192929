"""Threshold-based recovery of a targeted input set.

The three published steps: gate on having enough active accounts, keep
the inputs present in more than a threshold fraction of them, then
demand that the same fraction of active accounts contain the whole kept
set at once.  Non-probabilistic — the emitted score is 1 for whatever
verdict is chosen.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core_model import Combination
from .errors import ConfigError
from .placement import PlacementMatrix
from .prediction import Prediction, Verdict

MODEL_NAME = "set_intersection"


@dataclass(frozen=True)
class SetIntersectionConfig:
    min_active_accounts: int = 3
    threshold: float = 0.9
    max_combination_size: int | None = None
    #: draft-only extra step: drop inputs that are also frequent in
    #: inactive accounts (off by default; the published algorithm has
    #: three steps)
    penalize_inactive: bool = False

    def __post_init__(self):
        if self.min_active_accounts < 1:
            raise ConfigError(
                f"min_active_accounts must be >= 1, got {self.min_active_accounts}"
            )
        if not 0.0 < self.threshold <= 1.0:
            raise ConfigError(f"threshold must lie in (0,1], got {self.threshold}")
        if self.max_combination_size is not None and self.max_combination_size < 1:
            raise ConfigError("max_combination_size must be >= 1 when set")


def predict_set_intersection(
    active_accounts: Iterable[int],
    placement: PlacementMatrix,
    cfg: SetIntersectionConfig = SetIntersectionConfig(),
) -> Prediction:
    """Run the three steps on one output's active-account set.

    Below the activity gate the answer is UNKNOWN (not UNTARGETED):
    too little data is a different statement than evidence of no
    targeting, and the harness accounts for the two separately.
    """
    a_k = sorted({int(j) for j in active_accounts})
    if a_k and (a_k[0] < 0 or a_k[-1] >= placement.n_accounts):
        raise ConfigError(
            f"active accounts {a_k} outside 0..{placement.n_accounts - 1}"
        )

    # Step 1: activity gate
    if len(a_k) < cfg.min_active_accounts:
        return Prediction(
            Verdict.UNKNOWN, scores={MODEL_NAME: 1.0}, flags=("below_min_active",)
        )

    mem = placement.membership
    active = mem[a_k]  # |A_k| x N
    frac = active.mean(axis=0)

    # Step 2: inputs present in more than a threshold fraction (strict)
    keep = frac > cfg.threshold
    flags: list[str] = []
    if cfg.penalize_inactive:
        inactive = np.ones(placement.n_accounts, dtype=bool)
        inactive[a_k] = False
        if inactive.any():
            inactive_frac = mem[inactive].mean(axis=0)
            penalized = keep & (inactive_frac > cfg.threshold)
            if penalized.any():
                keep &= ~penalized
                flags.append("inactive_penalty_applied")
    targeted_ids = [int(i) for i in np.nonzero(keep)[0]]
    if not targeted_ids:
        return Prediction(Verdict.UNTARGETED, scores={MODEL_NAME: 1.0}, flags=tuple(flags))
    if (
        cfg.max_combination_size is not None
        and len(targeted_ids) > cfg.max_combination_size
    ):
        flags.append("oversized_set_rejected")
        return Prediction(Verdict.UNTARGETED, scores={MODEL_NAME: 1.0}, flags=tuple(flags))

    # Step 3: the whole set must co-occur in a threshold fraction
    whole = active[:, targeted_ids].all(axis=1).mean()
    if whole < cfg.threshold:
        return Prediction(Verdict.UNTARGETED, scores={MODEL_NAME: 1.0}, flags=tuple(flags))
    return Prediction(
        Verdict.TARGETED,
        target=Combination(targeted_ids),
        scores={MODEL_NAME: 1.0},
        flags=tuple(flags),
    )
