"""Run configured scenarios end to end and report scored results.

One trial: draw the ad workload, optionally cluster inputs from category
ads (matching), build the shadow-account placement, simulate what the
auditor would observe, run every configured detection algorithm on the
same observations, and score each against ground truth.  A scenario is
``trials`` independent trials pooled into one report.

Determinism: a scenario seeds one SeedSequence tree; each trial gets a
spawned child, and each stochastic stage (workload, matching, placement,
behavioral draw, contextual draw) gets its own grandchild.  Reports
serialize to canonical JSON that is byte-identical across reruns of the
same (config, seed).
"""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .. import __version__
from ..bayes import DEFAULT_INIT, ModelParams, bayes_predict, learn_params
from ..core_family_search import DetectionConfig, predict_core_family
from ..core_model import Combination, Family
from ..errors import ConfigError
from ..input_matching import build_signatures, cluster_inputs, cluster_purity
from ..placement import (
    RNG_ALGORITHM,
    PlacementConfig,
    PlacementMatrix,
    bernoulli_placement,
    grouped_placement,
    make_rng,
)
from ..prediction import Prediction, Verdict
from ..set_intersection import SetIntersectionConfig, predict_set_intersection
from ..simulator import ObservationSet, simulate_behavioral, simulate_contextual
from .config import ScenarioConfig, build_specs, matching_specs
from .scoring import Metrics, precision_recall, wilson_interval

if TYPE_CHECKING:
    from .store import CorrelationStore


def _seed_int(ss: np.random.SeedSequence) -> int:
    """Collapse a spawned SeedSequence to a plain int for APIs that store
    their seed in JSON."""
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class TrialResult:
    """Everything one trial produced; artifacts are kept only when the
    caller wants to persist them."""

    metrics: dict[str, Metrics]
    predictions: dict[str, dict[int, Prediction]]
    truth: dict[int, Family | None]
    purity: float | None = None
    n_clusters: int | None = None
    learned: dict | None = None
    placement: PlacementMatrix | None = None
    observations: ObservationSet | None = None


def _reduced_counts(
    counts: np.ndarray, clusters: list[list[int]]
) -> np.ndarray:
    """Pool per-input display counts within each cluster (the reduced
    placement has one column per cluster, so the contextual vector must
    shrink the same way)."""
    return np.array([int(sum(counts[i] for i in c)) for c in clusters], dtype=np.int64)


def _algo_predictions(
    algo: str,
    cfg: ScenarioConfig,
    obs: ObservationSet,
    pm: PlacementMatrix,
    clusters: list[list[int]] | None,
) -> dict[int, Prediction]:
    """Dispatch one algorithm over every observed output."""
    opts = dict(cfg.algo_config.get(algo, {}))
    preds: dict[int, Prediction] = {}
    if algo == "setint":
        si = SetIntersectionConfig(**opts)
        for oid in sorted(obs.behavioral):
            preds[oid] = predict_set_intersection(obs.behavioral[oid], pm, si)
    elif algo in ("bayes", "composite"):
        floor = float(opts.pop("score_floor", 0.5))
        params = ModelParams(
            p_in=float(opts.pop("p_in", cfg.p_in)),
            p_out=float(opts.pop("p_out", cfg.p_out)),
            p_empty=float(opts.pop("p_empty", cfg.p_empty)),
        )
        ctx_opts = opts.pop("contextual", None)
        ctx_params = ModelParams(**ctx_opts) if ctx_opts else None
        if opts:
            raise ConfigError(f"algo_config.{algo}: unknown option(s) {sorted(opts)}")
        use_ctx = algo == "composite" and bool(obs.contextual)
        for oid in sorted(obs.behavioral):
            ctx = obs.contextual.get(oid) if use_ctx else None
            if ctx is not None and clusters is not None:
                ctx = _reduced_counts(ctx, clusters)
            preds[oid] = bayes_predict(
                active_accounts=obs.behavioral[oid],
                contextual_counts=ctx,
                placement=pm,
                params=params,
                contextual_params=ctx_params,
                score_floor=floor,
            )
    elif algo == "corefamily":
        method = opts.pop("method", "removal")
        det = DetectionConfig(**{"x": 0.95, "l_max": 2, "r_max": 2, **opts})
        for oid in sorted(obs.behavioral):
            preds[oid] = predict_core_family(
                obs.behavioral[oid], pm, cfg=det, method=method
            )
    else:
        raise ConfigError(f"unknown algorithm {algo!r}")
    return preds


def _translate(pred: Prediction, reps: list[int] | None) -> Prediction:
    """Map a prediction from reduced (cluster-representative) input IDs
    back to the original universe."""
    if reps is None or pred.verdict is not Verdict.TARGETED:
        return pred
    members = [Combination(reps[i] for i in c.inputs) for c in pred.target_family()]
    return Prediction(
        pred.verdict, target=Family(members), scores=pred.scores, flags=pred.flags
    )


@dataclass
class SimulatedTrial:
    """One trial's observable world, before any detection runs.

    ``detection_placement`` is what the algorithms see: identical to
    ``placement`` normally, reduced to one representative column per
    cluster under matching.  ``reps`` maps reduced column index back to
    the original input ID.
    """

    placement: PlacementMatrix
    detection_placement: PlacementMatrix
    reps: list[int] | None
    clusters: list[list[int]] | None
    purity: float | None
    observations: ObservationSet
    truth: dict[int, Family | None]


def simulate_trial(
    cfg: ScenarioConfig, trial_seed: np.random.SeedSequence
) -> SimulatedTrial:
    """Draw one trial's workload, placement and observations."""
    w_ss, match_ss, p_ss, b_ss, c_ss = trial_seed.spawn(5)
    specs = build_specs(cfg, make_rng(w_ss))
    n = cfg.n_inputs
    m = cfg.resolved_account_count()
    alpha = cfg.resolved_alpha()
    all_inputs = Combination(range(n))

    purity = None
    clusters = None
    reps: list[int] | None = None
    if cfg.matching:
        cat_counts = simulate_contextual(
            all_inputs, matching_specs(cfg), cfg.displays_per_input,
            seed=match_ss, n_inputs=n,
        )
        clusters = cluster_inputs(
            build_signatures(cat_counts, n_inputs=n),
            distance_threshold=cfg.match_threshold,
        )
        purity = cluster_purity(clusters, [list(g) for g in cfg.overlap_groups])
        placement = grouped_placement(
            clusters,
            PlacementConfig(n_inputs=n, n_accounts=m, alpha=alpha, seed=_seed_int(p_ss)),
        )
        # grouped columns are identical within a cluster; detection sees one
        # representative column per cluster so hypotheses stay distinct
        reps = [c[0] for c in clusters]
        det_pm = PlacementMatrix(placement.membership[:, reps], alpha=alpha)
    else:
        placement = bernoulli_placement(
            PlacementConfig(n_inputs=n, n_accounts=m, alpha=alpha, seed=_seed_int(p_ss))
        )
        det_pm = placement

    obs, trace = simulate_behavioral(placement, specs, rounds=cfg.rounds, seed=b_ss)
    if cfg.collect_contextual:
        obs.merge_contextual(
            simulate_contextual(
                all_inputs, specs, cfg.displays_per_input, seed=c_ss, n_inputs=n
            ),
            cfg.displays_per_input,
        )
    truth = {oid: trace.true_family(oid) for oid in sorted(trace.specs)}
    return SimulatedTrial(
        placement=placement,
        detection_placement=det_pm,
        reps=reps,
        clusters=clusters,
        purity=purity,
        observations=obs,
        truth=truth,
    )


def run_trial(
    cfg: ScenarioConfig,
    trial_seed: np.random.SeedSequence,
    keep_artifacts: bool = False,
) -> TrialResult:
    """Simulate and score a single trial of the scenario."""
    sim = simulate_trial(cfg, trial_seed)
    obs, det_pm, reps, clusters = (
        sim.observations, sim.detection_placement, sim.reps, sim.clusters,
    )
    placement, truth, purity = sim.placement, sim.truth, sim.purity
    gm = cfg.group_map()
    metrics: dict[str, Metrics] = {}
    predictions: dict[str, dict[int, Prediction]] = {}
    for algo in cfg.algorithms:
        raw = _algo_predictions(algo, cfg, obs, det_pm, clusters)
        preds = {oid: _translate(p, reps) for oid, p in raw.items()}
        predictions[algo] = preds
        metrics[algo] = precision_recall(preds, truth, group_map=gm)

    learned = None
    if cfg.learn:
        res = learn_params(obs.behavioral, det_pm, init=DEFAULT_INIT)
        learned = {
            "p_in": res.params.p_in,
            "p_out": res.params.p_out,
            "p_empty": res.params.p_empty,
            "iterations": res.iterations,
            "converged": res.converged,
        }

    return TrialResult(
        metrics=metrics,
        predictions=predictions,
        truth=truth,
        purity=purity,
        n_clusters=None if clusters is None else len(clusters),
        learned=learned,
        placement=placement if keep_artifacts else None,
        observations=obs if keep_artifacts else None,
    )


def algorithm_predictions(
    algo: str,
    cfg: ScenarioConfig,
    observations: ObservationSet,
    placement: PlacementMatrix,
) -> dict[int, Prediction]:
    """Run one detection algorithm over every observed output.

    Standalone entry point for externally supplied observations (the CLI
    ``detect`` subcommand); assumes the placement is already in the same
    input universe as any contextual counts."""
    return _algo_predictions(algo, cfg, observations, placement, None)


# ------------------------------------------------------------------ report


@dataclass
class Report:
    """Scored scenario run: config echo, environment pins, pooled and
    per-trial metrics.  ``timing_s`` is informational and excluded from
    the canonical serialization so reruns compare byte-for-byte."""

    config: dict
    version: str
    rng: str
    resolved: dict
    algorithms: dict[str, dict]
    matching: dict | None = None
    learned: list[dict] | None = None
    timing_s: float = 0.0

    def to_dict(self, include_timing: bool = True) -> dict:
        doc = {
            "config": self.config,
            "version": self.version,
            "rng": self.rng,
            "resolved": self.resolved,
            "algorithms": self.algorithms,
            "matching": self.matching,
            "learned": self.learned,
        }
        if include_timing:
            doc["timing_s"] = self.timing_s
        return doc

    def to_canonical_json(self) -> str:
        return json.dumps(
            self.to_dict(include_timing=False), sort_keys=True, separators=(",", ":")
        )

    def to_csv(self) -> str:
        """One row per (algorithm, metric); counts are pooled over trials."""
        n = self.resolved["n_inputs"]
        m = self.resolved["n_accounts"]
        lines = ["algo,n_inputs,n_accounts,metric,value"]
        for algo in sorted(self.algorithms):
            pooled = self.algorithms[algo]["pooled"]
            rows = [
                ("precision", f"{pooled['precision']:.6f}"),
                ("precision_lo", f"{pooled['precision_ci'][0]:.6f}"),
                ("precision_hi", f"{pooled['precision_ci'][1]:.6f}"),
                ("recall", f"{pooled['recall']:.6f}"),
                ("recall_lo", f"{pooled['recall_ci'][0]:.6f}"),
                ("recall_hi", f"{pooled['recall_ci'][1]:.6f}"),
                ("true_targeted", str(pooled["true_targeted"])),
                ("emitted", str(pooled["emitted"])),
                ("correct", str(pooled["correct"])),
                ("unknown", str(pooled["unknown"])),
            ]
            lines.extend(f"{algo},{n},{m},{metric},{value}" for metric, value in rows)
        return "\n".join(lines) + "\n"


def _pool(per_trial: list[Metrics]) -> dict:
    """Pool confusion counts across trials and recompute the rates (a
    pooled rate, not a mean of per-trial rates, so every output weighs
    the same)."""
    true_targeted = sum(m.true_targeted for m in per_trial)
    emitted = sum(m.emitted for m in per_trial)
    correct = sum(m.correct for m in per_trial)
    unknown = sum(m.unknown for m in per_trial)
    outputs = sum(m.n_outputs for m in per_trial)
    flags = []
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
    return {
        "n_outputs": outputs,
        "true_targeted": true_targeted,
        "emitted": emitted,
        "correct": correct,
        "unknown": unknown,
        "precision": precision,
        "precision_ci": list(wilson_interval(correct, emitted)),
        "recall": recall,
        "recall_ci": list(wilson_interval(correct, true_targeted)),
        "flags": flags,
    }


def run_scenario(
    cfg: ScenarioConfig, store: "CorrelationStore | None" = None
) -> Report:
    """Run all trials of a scenario and pool the results.

    With a store, every trial's placement, observations, ground truth and
    predictions are appended under the scenario's hash key, followed by
    the report itself.
    """
    from .store import scenario_hash  # local import to avoid a cycle

    t0 = time.perf_counter()
    root = np.random.SeedSequence(cfg.seed)
    key = scenario_hash(cfg.to_dict()) if store is not None else None

    per_trial: dict[str, list[Metrics]] = {a: [] for a in cfg.algorithms}
    purities: list[float] = []
    cluster_counts: list[int] = []
    learned_rows: list[dict] = []
    for t, ss in enumerate(root.spawn(cfg.trials)):
        res = run_trial(cfg, ss, keep_artifacts=store is not None)
        for algo, met in res.metrics.items():
            per_trial[algo].append(met)
        if res.purity is not None:
            purities.append(res.purity)
            cluster_counts.append(res.n_clusters)
        if res.learned is not None:
            learned_rows.append(res.learned)
        if store is not None:
            store.append(
                key,
                "trials",
                {
                    "trial": t,
                    "placement": json.loads(res.placement.to_json()),
                    "observations": json.loads(res.observations.to_json()),
                    "truth": {
                        str(oid): None if fam is None else json.loads(fam.to_json())
                        for oid, fam in res.truth.items()
                    },
                },
            )
            for algo in cfg.algorithms:
                store.append(
                    key,
                    "predictions",
                    {
                        "trial": t,
                        "algo": algo,
                        "predictions": {
                            str(oid): p.to_dict()
                            for oid, p in sorted(res.predictions[algo].items())
                        },
                    },
                )

    algorithms = {
        algo: {
            "pooled": _pool(rows),
            "per_trial": [m.to_dict() for m in rows],
        }
        for algo, rows in per_trial.items()
    }
    matching = None
    if purities:
        matching = {
            "mean_purity": statistics.fmean(purities),
            "mean_clusters": statistics.fmean(cluster_counts),
            "trials": len(purities),
        }
    report = Report(
        config=cfg.to_dict(),
        version=__version__,
        rng=RNG_ALGORITHM,
        resolved={
            "n_inputs": cfg.n_inputs,
            "n_accounts": cfg.resolved_account_count(),
            "alpha": cfg.resolved_alpha(),
        },
        algorithms=algorithms,
        matching=matching,
        learned=learned_rows or None,
        timing_s=time.perf_counter() - t0,
    )
    if store is not None:
        store.append(key, "reports", report.to_dict(include_timing=False))
    return report
