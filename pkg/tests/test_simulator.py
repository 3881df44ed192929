import math

import numpy as np
import pytest

from xcorr.core_model import Combination, Family
from xcorr.errors import SpecError
from xcorr.placement import PlacementConfig, PlacementMatrix, bernoulli_placement
from xcorr.simulator import (
    BEHAVIORAL,
    CONTEXTUAL,
    ObservationSet,
    SimulationTrace,
    TargetingSpec,
    in_target_mask,
    simulate_behavioral,
    simulate_contextual,
)


def full_placement(m, n):
    return PlacementMatrix(np.ones((m, n), dtype=bool))


# ----------------------------------------------------------- validation


def test_spec_validation():
    with pytest.raises(SpecError):
        TargetingSpec.targeted(0, [(1,)], p_in=0.5, p_out=0.5)  # not p_out < p_in
    with pytest.raises(SpecError):
        TargetingSpec.targeted(0, [], p_in=0.7, p_out=0.0)  # empty core
    with pytest.raises(SpecError):
        TargetingSpec.targeted(0, [(1,), (1, 2)], p_in=0.7, p_out=0.0)  # chain
    with pytest.raises(SpecError):
        TargetingSpec.untargeted(0, p_empty=0.0)
    with pytest.raises(SpecError):
        TargetingSpec.untargeted(0, p_empty=1.1)
    with pytest.raises(SpecError):
        TargetingSpec.targeted(0, [(1, 2)], p_in=0.7, p_out=0.0, channel=CONTEXTUAL)
    with pytest.raises(SpecError):
        TargetingSpec(output_id=0, core=Family([(1,)]), p_in=0.7, channel="social")
    # order-1, multi-member contextual core is allowed (group ads)
    TargetingSpec.targeted(0, [(1,), (2,)], p_in=0.7, p_out=0.0, channel=CONTEXTUAL)


def test_rounds_and_universe_validation():
    pm = full_placement(3, 2)
    spec = TargetingSpec.targeted(0, [(0,)], p_in=0.9, p_out=0.0)
    with pytest.raises(SpecError):
        simulate_behavioral(pm, [spec], rounds=0)
    bad = TargetingSpec.targeted(1, [(5,)], p_in=0.9, p_out=0.0)
    with pytest.raises(SpecError):
        simulate_behavioral(pm, [bad], rounds=1)
    with pytest.raises(SpecError):
        simulate_behavioral(pm, [spec, spec], rounds=1)  # duplicate ids


# ----------------------------------------------------------- behavioral


def test_strict_targeting_only_hits_in_target():
    cfg = PlacementConfig(n_inputs=12, n_accounts=60, alpha=0.4, seed=3)
    pm = bernoulli_placement(cfg)
    core = Family([(1, 4), (7,)])
    spec = TargetingSpec.targeted(0, core, p_in=0.9, p_out=0.0)
    obs, trace = simulate_behavioral(pm, [spec], rounds=2, seed=11)
    mask = in_target_mask(pm, core)
    for j in obs.behavioral[0]:
        assert mask[j]
    assert trace.out_of_target[0] == frozenset()
    assert trace.in_target[0] == obs.behavioral[0]


def test_certain_coverage():
    pm = full_placement(25, 3)
    spec = TargetingSpec.targeted(0, [(0,)], p_in=1.0, p_out=0.0)
    obs, _ = simulate_behavioral(pm, [spec], rounds=1, seed=0)
    assert obs.behavioral[0] == frozenset(range(25))


def test_coverage_concentration():
    m = 10_000
    pm = full_placement(m, 1)
    spec = TargetingSpec.targeted(0, [(0,)], p_in=0.7, p_out=0.0)
    obs, _ = simulate_behavioral(pm, [spec], rounds=1, seed=42)
    freq = len(obs.behavioral[0]) / m
    sigma = math.sqrt(0.7 * 0.3 / m)
    assert abs(freq - 0.7) < 3 * sigma


def test_rounds_collapse():
    m = 10_000
    pm = full_placement(m, 1)
    spec = TargetingSpec.targeted(0, [(0,)], p_in=0.5, p_out=0.0)
    obs, _ = simulate_behavioral(pm, [spec], rounds=3, seed=9)
    eff = 1 - 0.5**3
    freq = len(obs.behavioral[0]) / m
    assert abs(freq - eff) < 3 * math.sqrt(eff * (1 - eff) / m)


def test_contextual_channel_has_no_behavioral_audience():
    cfg = PlacementConfig(n_inputs=6, n_accounts=400, alpha=0.5, seed=1)
    pm = bernoulli_placement(cfg)
    spec = TargetingSpec.targeted(
        0, [(2,)], p_in=0.9, p_out=0.05, channel=CONTEXTUAL
    )
    obs, trace = simulate_behavioral(pm, [spec], rounds=1, seed=5)
    # appears only at the out-of-context rate, independent of contents
    assert len(obs.behavioral[0]) < 0.15 * 400
    assert trace.in_target[0] == frozenset()


def test_untargeted_independence_chi_squared():
    cfg = PlacementConfig(n_inputs=5, n_accounts=4000, alpha=0.5, seed=2)
    pm = bernoulli_placement(cfg)
    spec = TargetingSpec.untargeted(0, p_empty=0.3)
    obs, _ = simulate_behavioral(pm, [spec], rounds=1, seed=8)
    seen = np.zeros(4000, dtype=bool)
    seen[list(obs.behavioral[0])] = True
    for i in range(5):
        col = pm.membership[:, i]
        chi2 = 0.0
        for s in (True, False):
            for c in (True, False):
                obs_count = int(np.sum((seen == s) & (col == c)))
                exp = np.sum(seen == s) * np.sum(col == c) / 4000
                chi2 += (obs_count - exp) ** 2 / exp
        assert chi2 < 6.6349  # 1 dof, p=0.01


def test_determinism_and_seed_sensitivity():
    cfg = PlacementConfig(n_inputs=8, n_accounts=50, alpha=0.4, seed=4)
    pm = bernoulli_placement(cfg)
    specs = [
        TargetingSpec.targeted(0, [(1,)], p_in=0.7, p_out=0.01),
        TargetingSpec.untargeted(1, p_empty=0.4),
    ]
    a1, t1 = simulate_behavioral(pm, specs, rounds=2, seed=123)
    a2, _ = simulate_behavioral(pm, specs, rounds=2, seed=123)
    a3, _ = simulate_behavioral(pm, specs, rounds=2, seed=124)
    assert a1.behavioral == a2.behavioral
    assert a1.behavioral != a3.behavioral
    for k in (0, 1):
        assert t1.in_target[k] | t1.out_of_target[k] == a1.behavioral[k]
        assert not (t1.in_target[k] & t1.out_of_target[k])


# ----------------------------------------------------------- contextual


def test_contextual_strict():
    spec = TargetingSpec.targeted(
        0, [(5,)], p_in=0.6, p_out=0.0, channel=CONTEXTUAL
    )
    counts = simulate_contextual(
        Combination(range(8)), [spec], displays_per_input=200, seed=3
    )
    x = counts[0]
    assert x[5] > 0
    assert all(x[i] == 0 for i in range(8) if i != 5)


def test_contextual_degenerate_uniform():
    spec = TargetingSpec.untargeted(0, p_empty=0.3)
    counts = simulate_contextual(
        Combination(range(10)), [spec], displays_per_input=500, seed=7
    )
    x = counts[0]
    assert np.all(np.abs(x - 150) < 5 * math.sqrt(500 * 0.3 * 0.7))


def test_contextual_self_ads():
    # several self-advertising outputs: each concentrates on its own input
    specs = [
        TargetingSpec.targeted(
            k, [(k,)], p_in=0.58, p_out=0.04, channel=CONTEXTUAL
        )
        for k in range(4)
    ]
    counts = simulate_contextual(
        Combination(range(6)), specs, displays_per_input=50, seed=1
    )
    for k in range(4):
        assert int(np.argmax(counts[k])) == k


def test_contextual_group_ad_fires_on_all_members():
    spec = TargetingSpec.targeted(
        0, [(0,), (1,), (2,)], p_in=0.9, p_out=0.0, channel=CONTEXTUAL
    )
    counts = simulate_contextual(
        Combination(range(5)), [spec], displays_per_input=100, seed=2
    )
    x = counts[0]
    assert all(x[i] > 50 for i in range(3))
    assert x[3] == 0 and x[4] == 0


def test_behavioral_spec_is_flat_in_contextual_channel():
    spec = TargetingSpec.targeted(0, [(1, 2)], p_in=0.9, p_out=0.05)
    counts = simulate_contextual(
        Combination(range(4)), [spec], displays_per_input=1000, seed=4
    )
    x = counts[0]
    assert np.all(np.abs(x - 50) < 5 * math.sqrt(1000 * 0.05 * 0.95))


def test_observation_set_json_roundtrip():
    pm = full_placement(6, 3)
    specs = [
        TargetingSpec.targeted(0, [(0,)], p_in=0.8, p_out=0.01),
        TargetingSpec.untargeted(1, p_empty=0.5),
    ]
    obs, _ = simulate_behavioral(pm, specs, rounds=2, seed=6)
    ctx = simulate_contextual(Combination(range(3)), specs, 20, seed=6, n_inputs=3)
    obs.merge_contextual(ctx, displays=20)
    back = ObservationSet.from_json(obs.to_json())
    assert back.behavioral == obs.behavioral
    assert set(back.contextual) == set(obs.contextual)
    for k in obs.contextual:
        assert np.array_equal(back.contextual[k], obs.contextual[k])
    assert back.rounds == 2 and back.displays_per_input == 20
