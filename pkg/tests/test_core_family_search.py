"""Witness search, containment test, and the two recovery algorithms."""

import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xcorr._kernels import HAS_NUMBA, _witness_numpy, find_witness, pack_bitsets, popcount_u64
from xcorr.core_family_search import (
    AdFamily,
    DetectionConfig,
    SearchTrace,
    agglomerative_core_search,
    conditional_family,
    contains_core_test,
    detect_targeting,
    find_x_intersecting_subset,
    intersect_threshold,
    predict_core_family,
    removal_core_search,
)
from xcorr.core_model import Combination, Family
from xcorr.errors import BudgetExceeded, ConfigError, DomainError, EmptyFamily
from xcorr.placement import PlacementConfig, bernoulli_placement
from xcorr.prediction import Verdict
from xcorr.simulator import TargetingSpec, simulate_behavioral


def brute_witness(members, x, l_max, n_universe=10):
    """Literal enumeration over the full 0..n_universe-1 input range.

    Deliberately ignores which inputs actually occur in the family; the
    implementation restricts itself to occurring inputs, and agreement
    here confirms that shortcut changes nothing.
    """
    sets = [set(m) for m in members]
    need = math.ceil(x * len(sets) - 1e-9)
    for s in range(1, l_max + 1):
        for cand in itertools.combinations(range(n_universe), s):
            cs = set(cand)
            if sum(1 for m in sets if cs & m) >= need:
                return cand
    return None


# ---------------------------------------------------------------- witness


def test_witness_examples():
    fam = AdFamily([[1, 2], [1, 3], [4]])
    assert find_x_intersecting_subset(fam, 1.0, 2) == Combination([1, 4])
    assert find_x_intersecting_subset(fam, 1.0, 1) is None
    assert find_x_intersecting_subset(AdFamily([[7], [7], [7]]), 1.0, 1) == Combination([7])


def test_witness_is_minimal_size_and_lexicographic():
    # {0} already covers 2 of 3 members; with x=0.6 the singleton wins
    fam = AdFamily([[0, 1], [0, 2], [3]])
    assert find_x_intersecting_subset(fam, 0.6, 2) == Combination([0])
    # at x=1 a pair is needed and {0,3} precedes {1,3} etc.
    assert find_x_intersecting_subset(fam, 1.0, 2) == Combination([0, 3])


def test_witness_agrees_with_brute_force():
    rng = np.random.default_rng(42)
    checked_some = False
    for _ in range(300):
        k = int(rng.integers(1, 13))
        members = []
        for _ in range(k):
            size = int(rng.integers(0, 5))
            members.append(tuple(rng.choice(10, size=size, replace=False)))
        x = float(rng.choice([0.4, 0.6, 0.9, 1.0]))
        l_max = int(rng.integers(1, 4))
        expect = brute_witness(members, x, l_max)
        got = find_x_intersecting_subset(AdFamily(members), x, l_max)
        if expect is None:
            assert got is None
        else:
            checked_some = True
            assert got is not None and got.inputs == expect
    assert checked_some


def test_witness_empty_family_raises():
    with pytest.raises(EmptyFamily):
        find_x_intersecting_subset(AdFamily([]), 0.9, 2)


def test_witness_x_outside_domain():
    fam = AdFamily([[1]])
    with pytest.raises(DomainError):
        find_x_intersecting_subset(fam, 0.0, 1)
    with pytest.raises(DomainError):
        find_x_intersecting_subset(fam, 1.5, 1)


def test_witness_all_empty_members():
    assert find_x_intersecting_subset(AdFamily([[], []]), 0.9, 3) is None


def test_intersect_threshold_rounding():
    assert intersect_threshold(0.5, 4) == 2  # exact product, no off-by-one
    assert intersect_threshold(0.9, 10) == 9
    assert intersect_threshold(0.95, 19) == 19
    assert intersect_threshold(1.0, 7) == 7
    assert intersect_threshold(0.3, 0) == 0


# lemma: an intersecting subset can be built from any explaining
# subfamily by picking one input per member
@settings(max_examples=60, deadline=None)
@given(st.data())
def test_witness_built_from_subfamily(data):
    n = data.draw(st.integers(2, 8))
    fam = data.draw(
        st.lists(st.sets(st.integers(0, n - 1), min_size=0, max_size=n), min_size=1, max_size=10)
    )
    sub = data.draw(
        st.lists(st.sets(st.integers(0, n - 1), min_size=1, max_size=n), min_size=1, max_size=4)
    )
    covered = sum(1 for m in fam if any(s <= m for s in sub))
    picks = [data.draw(st.sampled_from(sorted(s))) for s in sub]
    c = set(picks)
    hit = sum(1 for m in fam if c & m)
    assert hit >= covered
    assert len(c) <= len(sub)


# ---------------------------------------------------------- conditional


def test_conditional_family_examples():
    fam = AdFamily([[1, 2], [1, 3], [2, 3]])
    cond = conditional_family(fam, Combination([1]))
    assert sorted(m.inputs for m in cond) == [(2,), (3,)]
    ident = conditional_family(fam, Combination([]))
    assert [m.inputs for m in ident] == [m.inputs for m in fam]
    assert len(conditional_family(fam, Combination([9]))) == 0


def test_conditional_family_keeps_duplicates_and_empties():
    fam = AdFamily([[1], [1], [1, 2]])
    cond = conditional_family(fam, Combination([1]))
    assert [m.inputs for m in cond] == [(), (), (2,)]


# -------------------------------------------------------------- contains


FIXTURE = AdFamily([[3], [1, 3], [2, 3], [3, 4], [3, 5], [0, 3]])
CFG = DetectionConfig(x=0.9, l_max=2, r_max=2, min_members=3)


def test_contains_core_fixture():
    # every member holds 3, one holds nothing else: no residual witness
    assert contains_core_test([3], FIXTURE, CFG) is True
    # at the root a witness ({3}) exists, so the empty set contains no core
    assert contains_core_test([], FIXTURE, CFG) is False
    # only one account holds 1: below min_members, refuse to answer
    assert contains_core_test([1], FIXTURE, CFG) is None


def test_contains_core_empty_conditional_is_unknown():
    assert contains_core_test([9], FIXTURE, CFG) is None


# ---------------------------------------------------------------- detect


def test_detect_fixture_and_single_account():
    assert detect_targeting(FIXTURE, CFG) is True
    # one account: any input it holds is a full witness, so detection
    # refuses below min_members; lowering the floor shows the witness
    one = AdFamily([[2, 5]])
    assert detect_targeting(one, DetectionConfig(x=0.5, l_max=1)) is False
    assert detect_targeting(one, DetectionConfig(x=0.5, l_max=1, min_members=1)) is True


def test_detect_strict_targeting_always_fires():
    # p_out = 0: every active account contains the core, completeness is exact
    pm = bernoulli_placement(PlacementConfig(n_inputs=12, n_accounts=80, alpha=0.5, seed=5))
    spec = TargetingSpec.targeted(0, Family([[2, 7]]), p_in=0.8, p_out=0.0)
    cfg = DetectionConfig(x=0.99, l_max=2, r_max=2)
    hits = 0
    for t in range(20):
        obs, _ = simulate_behavioral(pm, [spec], seed=100 + t)
        fam = AdFamily.from_placement(obs.behavioral[0], pm)
        if len(fam) >= cfg.min_members and detect_targeting(fam, cfg):
            hits += 1
    assert hits == 20


def test_detect_sound_on_untargeted_with_support():
    # enough accounts that coverage fractions concentrate: no witness
    pm = bernoulli_placement(PlacementConfig(n_inputs=20, n_accounts=200, alpha=0.3, seed=6))
    spec = TargetingSpec.untargeted(0, p_empty=0.5)
    cfg = DetectionConfig(x=0.95, l_max=2, r_max=2)
    false_alarms = 0
    for t in range(40):
        obs, _ = simulate_behavioral(pm, [spec], seed=200 + t)
        fam = AdFamily.from_placement(obs.behavioral[0], pm)
        assert len(fam) >= cfg.min_members
        if detect_targeting(fam, cfg):
            false_alarms += 1
    assert false_alarms == 0


# --------------------------------------------------------------- budgets


def test_agglomerative_needs_r_max():
    with pytest.raises(ConfigError):
        agglomerative_core_search(FIXTURE, DetectionConfig(x=0.9, l_max=2, r_max=None))


def test_searches_reject_empty_family():
    with pytest.raises(EmptyFamily):
        agglomerative_core_search(AdFamily([]), CFG)
    with pytest.raises(EmptyFamily):
        removal_core_search(AdFamily([]), CFG)


def test_budget_exceeded_carries_partial():
    cfg = DetectionConfig(x=0.9, l_max=2, r_max=2, test_budget=1, min_members=3)
    with pytest.raises(BudgetExceeded) as err:
        agglomerative_core_search(FIXTURE, cfg)
    assert isinstance(err.value.partial, Family)
    assert err.value.tests_used == 2


# -------------------------------------------------------------- searches


def test_agglomerative_fixture_single_member():
    trace = SearchTrace()
    out = agglomerative_core_search(FIXTURE, CFG, trace=trace)
    assert set(out.combinations) == {Combination([3])}
    assert trace.tests_used >= 2
    kinds = {r["kind"] for r in trace.records}
    assert "detect" in kinds and "contains" in kinds


def test_removal_fixture_single_member():
    trace = SearchTrace()
    out = removal_core_search(FIXTURE, CFG, trace=trace)
    assert set(out.combinations) == {Combination([3])}
    assert trace.tests_used <= 1 * 1 * 6  # l * r^l * N for l=r=1, N=6 inputs


def _targeted_family(core, seed, n=12, m=220, alpha=0.5, p_in=0.9, p_out=0.0):
    ss = np.random.SeedSequence(seed)
    s_pm, s_obs = ss.spawn(2)
    pm = bernoulli_placement(PlacementConfig(n_inputs=n, n_accounts=m, alpha=alpha, seed=s_pm))
    spec = TargetingSpec.targeted(0, core, p_in=p_in, p_out=p_out)
    obs, _ = simulate_behavioral(pm, [spec], seed=s_obs)
    return AdFamily.from_placement(obs.behavioral[0], pm), pm


def test_agglomerative_recovers_two_member_core():
    core = Family([[1, 3], [4]])
    cfg = DetectionConfig(x=0.99, l_max=2, r_max=2)
    for seed in range(8):
        fam, _ = _targeted_family(core, 1000 + seed)
        out = agglomerative_core_search(fam, cfg)
        assert set(out.combinations) == set(core.combinations)
        assert out.is_antichain()


def test_removal_recovers_two_member_core_without_r_max():
    core = Family([[1, 3], [4]])
    cfg = DetectionConfig(x=0.99, l_max=2, r_max=None)
    bound = 2 * 2**2 * 12
    for seed in range(8):
        fam, _ = _targeted_family(core, 2000 + seed)
        trace = SearchTrace()
        out = removal_core_search(fam, cfg, trace=trace)
        assert set(out.combinations) == set(core.combinations)
        assert trace.tests_used <= bound


def test_removal_untargeted_returns_empty():
    pm = bernoulli_placement(PlacementConfig(n_inputs=20, n_accounts=200, alpha=0.3, seed=8))
    obs, _ = simulate_behavioral(pm, [TargetingSpec.untargeted(0, p_empty=0.5)], seed=9)
    fam = AdFamily.from_placement(obs.behavioral[0], pm)
    trace = SearchTrace()
    out = removal_core_search(fam, DetectionConfig(x=0.95, l_max=2), trace=trace)
    assert out.size == 0
    assert trace.tests_used == 1  # the root detection test settles it


def test_search_trace_jsonl_roundtrip():
    trace = SearchTrace()
    removal_core_search(FIXTURE, CFG, trace=trace)
    lines = trace.to_jsonl().splitlines()
    docs = [json.loads(line) for line in lines]
    assert docs[-1]["kind"] == "summary"
    assert docs[-1]["tests_used"] == trace.tests_used


# --------------------------------------------------------------- kernels


def test_kernel_paths_agree_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(150):
        k = int(rng.integers(1, 20))
        n = int(rng.integers(1, 10))
        mat = rng.random((k, n)) < 0.35
        bits = pack_bitsets(mat)
        thr = int(rng.integers(1, k + 1))
        l_max = int(rng.integers(1, 4))
        via_numpy = _witness_numpy(bits, thr, l_max)
        via_dispatch = find_witness(bits, thr, l_max)
        if via_numpy is None:
            assert via_dispatch is None
        else:
            assert via_dispatch is not None
            assert np.array_equal(via_numpy, via_dispatch)


def test_kernel_dispatch_uses_numba_when_present():
    import os

    if os.environ.get("XCORR_NO_NUMBA"):
        assert not HAS_NUMBA
    # either way the dispatcher must answer; a missing numba must not break it
    bits = pack_bitsets(np.ones((3, 2), dtype=bool))
    assert find_witness(bits, 3, 1) is not None


def test_popcount_matches_python():
    rng = np.random.default_rng(11)
    vals = rng.integers(0, 2**63, size=200, dtype=np.uint64)
    got = popcount_u64(vals)
    expect = [bin(int(v)).count("1") for v in vals]
    assert got.tolist() == expect


def test_pack_bitsets_column_sums():
    rng = np.random.default_rng(13)
    mat = rng.random((130, 7)) < 0.4  # forces 3 words
    bits = pack_bitsets(mat)
    assert bits.shape == (7, 3)
    assert popcount_u64(bits).sum(axis=1).tolist() == mat.sum(axis=0).tolist()


# --------------------------------------------------------------- predict


def test_predict_below_min_members_is_unknown():
    pm = bernoulli_placement(PlacementConfig(n_inputs=8, n_accounts=20, alpha=0.4, seed=3))
    pred = predict_core_family([0], pm, DetectionConfig(x=0.9, l_max=2, r_max=2))
    assert pred.verdict is Verdict.UNKNOWN
    assert "below_min_members" in pred.flags


def test_predict_untargeted_and_targeted():
    cfg = DetectionConfig(x=0.99, l_max=2, r_max=2)
    core = Family([[1, 3], [4]])
    ss = np.random.SeedSequence(31415)
    s_pm, s_obs = ss.spawn(2)
    pm = bernoulli_placement(
        PlacementConfig(n_inputs=12, n_accounts=220, alpha=0.5, seed=s_pm)
    )
    specs = [
        TargetingSpec.targeted(0, core, p_in=0.9, p_out=0.0),
        TargetingSpec.untargeted(1, p_empty=0.5),
    ]
    obs, _ = simulate_behavioral(pm, specs, seed=s_obs)
    hit = predict_core_family(obs.behavioral[0], pm, cfg)
    assert hit.verdict is Verdict.TARGETED
    assert set(hit.target_family().combinations) == set(core.combinations)
    miss = predict_core_family(obs.behavioral[1], pm, cfg)
    assert miss.verdict is Verdict.UNTARGETED


def test_predict_rejects_unknown_method():
    pm = bernoulli_placement(PlacementConfig(n_inputs=4, n_accounts=10, alpha=0.5, seed=1))
    with pytest.raises(ConfigError):
        predict_core_family([0, 1], pm, method="exhaustive")


def test_predict_rejects_out_of_range_accounts():
    pm = bernoulli_placement(PlacementConfig(n_inputs=4, n_accounts=10, alpha=0.5, seed=1))
    with pytest.raises(DomainError):
        predict_core_family([99], pm)
