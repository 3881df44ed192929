"""Witness-based detection and core-family recovery.

An output's *ad family* is the multiset of input sets held by the
accounts that saw it.  Targeting is detected by exhibiting a small
combination of inputs that intersects at least a fraction x of the
members; a candidate combination c is tested for containing a core
combination by running the same witness search on the *conditional*
family (members containing c, with c stripped): no residual witness
means the targeting is fully explained inside c.

Two recovery algorithms are built on that test.  The agglomerative
search walks breadth-first from the empty combination and keeps the
minimal positives.  The removal search grows a containing set along
detection witnesses, whittles it down input by input, then restarts
behind exclusion sets to find the remaining members; it needs no bound
on the member order.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable

import numpy as np

from ._kernels import find_witness, pack_bitsets, popcount_u64
from .core_model import EMPTY_COMBINATION, Combination, Family
from .errors import BudgetExceeded, ConfigError, DomainError, EmptyFamily
from .placement import PlacementMatrix
from .prediction import Prediction, Verdict

MODEL_NAME = "core_family"


@dataclass(frozen=True)
class DetectionConfig:
    """Knobs shared by the detection test and both search algorithms.

    ``x`` is the intersecting fraction, ``l_max`` caps both the witness
    size and the number of core members recovered, ``r_max`` caps the
    order of candidate combinations (required by the agglomerative
    search, optional for the removal search), ``test_budget`` caps the
    total number of witness searches, and ``min_members`` is the account
    support below which a conditional test answers unknown instead of
    guessing.
    """

    x: float = 0.95
    l_max: int = 2
    r_max: int | None = None
    test_budget: int | None = None
    min_members: int = 3

    def __post_init__(self):
        if not 0.0 < self.x < 1.0:
            raise ConfigError(f"x must lie in (0,1), got {self.x}")
        if self.l_max < 1:
            raise ConfigError(f"l_max must be >= 1, got {self.l_max}")
        if self.r_max is not None and self.r_max < 1:
            raise ConfigError(f"r_max must be >= 1 when set, got {self.r_max}")
        if self.test_budget is not None and self.test_budget < 1:
            raise ConfigError(f"test_budget must be >= 1 when set, got {self.test_budget}")
        if self.min_members < 1:
            raise ConfigError(f"min_members must be >= 1, got {self.min_members}")


@dataclass(frozen=True)
class AdFamily:
    """The multiset of account input sets behind one output's audience.

    Unlike a core :class:`Family`, members may repeat (two accounts can
    hold the same inputs) and may be empty (an input-less account that
    saw the ad counts against strict targeting).
    """

    members: tuple[Combination, ...]

    def __init__(self, members: Iterable[Combination | Iterable[int]] = ()):
        combos = tuple(
            c if isinstance(c, Combination) else Combination(c) for c in members
        )
        object.__setattr__(self, "members", combos)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def all_inputs(self) -> tuple[int, ...]:
        seen: set[int] = set()
        for c in self.members:
            seen.update(c.inputs)
        return tuple(sorted(seen))

    @classmethod
    def from_placement(
        cls, active_accounts: Iterable[int], placement: PlacementMatrix
    ) -> "AdFamily":
        rows = sorted({int(j) for j in active_accounts})
        if rows and (rows[0] < 0 or rows[-1] >= placement.n_accounts):
            raise DomainError(
                f"active accounts {rows} outside 0..{placement.n_accounts - 1}"
            )
        return cls(placement.account_inputs(j) for j in rows)


def intersect_threshold(x: float, n_members: int) -> int:
    """Smallest member count whose fraction of ``n_members`` reaches x."""
    if not 0.0 < x <= 1.0:
        raise DomainError(f"x must lie in (0,1], got {x}")
    return int(math.ceil(x * n_members - 1e-9))


def _family_bitsets(fam: AdFamily) -> tuple[np.ndarray, list[int]]:
    """Per-input member bitsets plus the sorted input universe."""
    universe = list(fam.all_inputs())
    pos = {i: k for k, i in enumerate(universe)}
    contains = np.zeros((len(fam), len(universe)), dtype=bool)
    for row, member in enumerate(fam):
        for i in member.inputs:
            contains[row, pos[i]] = True
    return pack_bitsets(contains), universe


def find_x_intersecting_subset(
    fam: AdFamily, x: float, l_max: int
) -> Combination | None:
    """First combination of ≤ l_max inputs intersecting ≥ x·|fam| members.

    Candidates are enumerated smallest size first, lexicographic within
    a size, so the witness is minimal-size and deterministic.  Inputs
    absent from every member can never enlarge coverage, so the search
    runs over the family's own input universe.
    """
    if len(fam) == 0:
        raise EmptyFamily("witness search needs a non-empty family")
    if l_max < 1:
        raise DomainError(f"l_max must be >= 1, got {l_max}")
    bitsets, universe = _family_bitsets(fam)
    if not universe:
        return None
    idx = find_witness(bitsets, intersect_threshold(x, len(fam)), l_max)
    if idx is None:
        return None
    return Combination(universe[int(k)] for k in idx)


def conditional_family(fam: AdFamily, c: Combination | Iterable[int]) -> AdFamily:
    """Members containing ``c``, each with ``c``'s inputs stripped."""
    if not isinstance(c, Combination):
        c = Combination(c)
    return AdFamily(m.difference(c) for m in fam if c.issubset(m))


def detect_targeting(fam: AdFamily, cfg: DetectionConfig) -> bool:
    """True iff a witness of size ≤ l_max exists for the whole family.

    Families with fewer than ``cfg.min_members`` members are never
    detected: with only a handful of accounts, some input coincides in
    nearly all of them by chance alone, so a witness at tiny support is
    not evidence.  Callers that need to distinguish "no targeting" from
    "not enough data" should check the support themselves (as
    :func:`predict_core_family` does, reporting UNKNOWN).
    """
    if len(fam) < cfg.min_members:
        return False
    return find_x_intersecting_subset(fam, cfg.x, cfg.l_max) is not None


def contains_core_test(
    c: Combination | Iterable[int], fam: AdFamily, cfg: DetectionConfig
) -> bool | None:
    """Does ``c`` contain a whole core combination?

    True when no residual witness exists among the accounts holding all
    of ``c`` (their audience membership is already explained inside
    ``c``); False when one does.  None — unknown — when fewer than
    ``cfg.min_members`` accounts support the conditional family: the
    dichotomy presumes enough supporting accounts, and too little data
    is a different statement than either answer.
    """
    cond = conditional_family(fam, c)
    if len(cond) < cfg.min_members:
        return None
    return find_x_intersecting_subset(cond, cfg.x, cfg.l_max) is None


@dataclass
class SearchTrace:
    """Audit log of every witness search a recovery run performed."""

    records: list[dict] = field(default_factory=list)
    tests_used: int = 0

    def log(self, kind: str, combo: Combination | None, outcome) -> None:
        self.records.append(
            {
                "kind": kind,
                "combination": list(combo.inputs) if combo is not None else None,
                "outcome": outcome,
            }
        )

    def to_jsonl(self) -> str:
        lines = [json.dumps(r, sort_keys=True) for r in self.records]
        lines.append(
            json.dumps({"kind": "summary", "tests_used": self.tests_used}, sort_keys=True)
        )
        return "\n".join(lines)


class _Budget:
    """Counts witness searches and enforces the optional cap."""

    def __init__(self, cfg: DetectionConfig, trace: SearchTrace | None):
        self.limit = cfg.test_budget
        self.trace = trace
        self.used = 0

    def charge(self) -> None:
        self.used += 1
        if self.trace is not None:
            self.trace.tests_used = self.used
        if self.limit is not None and self.used > self.limit:
            raise BudgetExceeded(
                f"test budget {self.limit} exhausted", tests_used=self.used
            )


class _Tester:
    """Memoized containment tests against one fixed family."""

    def __init__(self, fam: AdFamily, cfg: DetectionConfig, budget: _Budget):
        self.fam = fam
        self.cfg = cfg
        self.budget = budget
        self.unknown_seen = False
        self._memo: dict[tuple[int, ...], bool | None] = {}

    def __call__(self, c: Combination) -> bool | None:
        key = c.inputs
        if key in self._memo:
            return self._memo[key]
        self.budget.charge()
        res = contains_core_test(c, self.fam, self.cfg)
        self._memo[key] = res
        if res is None:
            self.unknown_seen = True
        if self.budget.trace is not None:
            self.budget.trace.log("contains", c, res)
        return res


def _detect_charged(fam: AdFamily, cfg: DetectionConfig, budget: _Budget) -> bool:
    budget.charge()
    res = detect_targeting(fam, cfg)
    if budget.trace is not None:
        budget.trace.log("detect", None, res)
    return res


def _prune_to_antichain(found: Iterable[Combination]) -> Family:
    members = sorted(set(found), key=lambda c: (c.order, c.inputs))
    kept: list[Combination] = []
    for c in members:
        if not any(k.issubset(c) for k in kept):
            kept.append(c)
    return Family(kept)


def agglomerative_core_search(
    fam: AdFamily, cfg: DetectionConfig, trace: SearchTrace | None = None
) -> Family:
    """Breadth-first recovery of the core family.

    The queue starts at the empty combination, whose test doubles as the
    detection test: a residual witness at the root means targeting is
    present and the walk continues.  Positives found smallest-first are
    minimal, hence core members; negatives (and unknowns) spawn their
    one-input extensions up to order ``r_max``; supersets of found
    members are dropped.
    """
    if cfg.r_max is None:
        raise ConfigError("agglomerative search needs r_max")
    if len(fam) == 0:
        raise EmptyFamily("cannot search an empty ad family")
    budget = _Budget(cfg, trace)
    found: list[Combination] = []
    try:
        if not _detect_charged(fam, cfg, budget):
            return Family([])
        universe = fam.all_inputs()
        test = _Tester(fam, cfg, budget)
        queue: deque[Combination] = deque(Combination([i]) for i in universe)
        visited = {c.inputs for c in queue}
        while queue and len(found) < cfg.l_max:
            c = queue.popleft()
            if any(f.issubset(c) for f in found):
                continue
            if test(c) is True:
                found.append(c)
                continue
            if c.order >= cfg.r_max:
                continue
            for i in universe:
                if i in c:
                    continue
                ext = c.union((i,))
                if ext.inputs not in visited:
                    visited.add(ext.inputs)
                    queue.append(ext)
    except BudgetExceeded as e:
        raise BudgetExceeded(
            str(e), partial=_prune_to_antichain(found), tests_used=e.tests_used
        ) from None
    return _prune_to_antichain(found)


def _steering_inputs(
    cond: AdFamily, cfg: DetectionConfig, budget: _Budget
) -> list[int] | None:
    """Witness inputs of a steering family's conditional, ordered by the
    number of members each one hits (descending, then ascending id)."""
    if len(cond) == 0:
        return None
    bitsets, universe = _family_bitsets(cond)
    if not universe:
        return None
    budget.charge()
    idx = find_witness(bitsets, intersect_threshold(cfg.x, len(cond)), cfg.l_max)
    if budget.trace is not None:
        budget.trace.log(
            "steer",
            None,
            None if idx is None else [universe[int(k)] for k in idx],
        )
    if idx is None:
        return None
    coverage = popcount_u64(bitsets).sum(axis=1)
    order = sorted((int(k) for k in idx), key=lambda k: (-int(coverage[k]), universe[k]))
    return [universe[k] for k in order]


def _grow(
    steer_fam: AdFamily,
    test: _Tester,
    cfg: DetectionConfig,
    budget: _Budget,
) -> Combination | None:
    """Depth-first walk from ∅ toward a combination passing the test.

    Extension candidates come from the witness of the steering family's
    conditional at the current combination — under targeting those
    inputs are core inputs with high probability — tried highest
    coverage first.  The containment test itself always runs against the
    tester's full family, where account support is maximal.
    """
    max_depth = cfg.r_max if cfg.r_max is not None else len(steer_fam.all_inputs())
    seen: set[tuple[int, ...]] = set()

    def walk(c: Combination, depth: int) -> Combination | None:
        if c.inputs in seen:
            return None
        seen.add(c.inputs)
        if test(c) is True:
            return c
        if depth >= max_depth:
            return None
        inputs = _steering_inputs(conditional_family(steer_fam, c), cfg, budget)
        if inputs is None:
            return None
        for i in inputs:
            hit = walk(c.union((i,)), depth + 1)
            if hit is not None:
                return hit
        return None

    return walk(EMPTY_COMBINATION, 0)


def _whittle(start: Combination, test: _Tester) -> Combination:
    """One removal pass, ascending input id: keep any removal that
    leaves the containment test positive.  The survivors form a minimal
    positive combination."""
    current = start
    for i in start.inputs:
        trial = current.difference((i,))
        if test(trial) is True:
            current = trial
    return current


def _exclusion_sets(found: list[Combination]) -> list[frozenset[int]]:
    """All ways of excluding one input from every found member (≤ r^l)."""
    out: list[frozenset[int]] = []
    seen: set[frozenset[int]] = set()
    for choice in product(*(f.inputs for f in found)):
        ex = frozenset(choice)
        if ex not in seen:
            seen.add(ex)
            out.append(ex)
    return out


def removal_core_search(
    fam: AdFamily, cfg: DetectionConfig, trace: SearchTrace | None = None
) -> Family:
    """Core recovery that needs no bound on the member order.

    Outline: start from a set that contains a core member, remove
    inputs one at a time keeping the test positive, then restart behind
    exclusion sets (one input dropped from every found member) to
    expose the remaining members.  One refinement: starting sets are
    grown from detection witnesses rather than from the full input
    universe, whose conditional family has no account support at
    realistic budgets.  Exclusion sets screen and steer on the
    subfamily of accounts disjoint from them, but every containment
    test runs against the full family.
    """
    if len(fam) == 0:
        raise EmptyFamily("cannot search an empty ad family")
    budget = _Budget(cfg, trace)
    found: list[Combination] = []
    try:
        if not _detect_charged(fam, cfg, budget):
            return Family([])
        test = _Tester(fam, cfg, budget)
        first = _grow(fam, test, cfg, budget)
        if first is None:
            if trace is not None:
                trace.log("grow_exhausted", None, None)
            return Family([])
        found.append(_whittle(first, test))

        exhausted: set[frozenset[int]] = set()
        progress = True
        while progress and len(found) < cfg.l_max:
            progress = False
            for ex in _exclusion_sets(found):
                if ex in exhausted:
                    continue
                sub = AdFamily(m for m in fam if ex.isdisjoint(m.inputs))
                if len(sub) < cfg.min_members or not _detect_charged(sub, cfg, budget):
                    exhausted.add(ex)
                    continue
                grown = _grow(sub, test, cfg, budget)
                if grown is None:
                    exhausted.add(ex)
                    continue
                member = _whittle(grown, test)
                if member in found:
                    exhausted.add(ex)
                    continue
                found.append(member)
                progress = True
                break
    except BudgetExceeded as e:
        raise BudgetExceeded(
            str(e), partial=_prune_to_antichain(found), tests_used=e.tests_used
        ) from None
    return _prune_to_antichain(found)


def predict_core_family(
    active_accounts: Iterable[int],
    placement: PlacementMatrix,
    cfg: DetectionConfig = DetectionConfig(),
    method: str = "removal",
    trace: SearchTrace | None = None,
) -> Prediction:
    """Verdict wrapper around detection plus one recovery algorithm.

    Below ``min_members`` active accounts the answer is UNKNOWN — the
    witness search is vacuously easy on a couple of accounts, so no
    verdict is sound there.  A positive detection whose search comes
    back empty (possible when every grow path dead-ends) is also
    UNKNOWN, not UNTARGETED.
    """
    if method not in ("removal", "agglomerative"):
        raise ConfigError(f"unknown search method {method!r}")
    fam = AdFamily.from_placement(active_accounts, placement)
    if len(fam) < cfg.min_members:
        return Prediction(
            Verdict.UNKNOWN, scores={MODEL_NAME: 1.0}, flags=("below_min_members",)
        )
    if not detect_targeting(fam, cfg):
        return Prediction(Verdict.UNTARGETED, scores={MODEL_NAME: 1.0})
    search = removal_core_search if method == "removal" else agglomerative_core_search
    members = search(fam, cfg, trace=trace)
    if members.size == 0:
        return Prediction(
            Verdict.UNKNOWN, scores={MODEL_NAME: 1.0}, flags=("search_exhausted",)
        )
    return Prediction(Verdict.TARGETED, target=members, scores={MODEL_NAME: 1.0})
