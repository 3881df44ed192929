"""Command-line front end.

Subcommands::

    simulate    draw a scenario's trials and persist observations
    detect      run one detection algorithm on stored observations
    sweep       knee detection across universe sizes
    threshold   separation-threshold calculus for a core shape
    match       cluster inputs from category-ad display counts
    report      run a scenario end to end, emit report, gate on metrics

Every subcommand that simulates takes its scenario from ``--config`` (a
JSON file); ``--seed`` beats the config's seed, which beats the
``XCORR_SEED`` environment variable, which beats 0.  Exit codes: 0 on
success, 2 for configuration problems, 3 when a ``report`` requirement
gate fails (for CI use).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .core_model import Combination
from .errors import ConfigError, XCorrError
from .experiment import (
    CorrelationStore,
    ScenarioConfig,
    algorithm_predictions,
    matching_specs,
    run_scenario,
    scaling_sweep,
    scenario_hash,
    simulate_trial,
)
from .input_matching import build_signatures, cluster_inputs, cluster_purity
from .placement import PlacementMatrix
from .simulator import ObservationSet, simulate_contextual
from .threshold_analysis import (
    admissible,
    max_ratio,
    phi_curve,
    recommend_config,
    theoretical_account_constant,
)

ALGO_CHOICES = ("setint", "bayes", "composite", "corefamily")


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _load_config(args) -> tuple[ScenarioConfig, bool]:
    """Config plus whether the file pinned a seed explicitly."""
    if args.config is None:
        raise ConfigError("this command needs --config (a scenario JSON file)")
    text = _read_text(args.config)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{args.config}: config must be a JSON object")
    cfg = ScenarioConfig.from_dict(doc)
    return cfg, "seed" in doc


def _resolve_seed(args, cfg: ScenarioConfig, config_has_seed: bool) -> ScenarioConfig:
    """--seed > config seed > XCORR_SEED > 0."""
    if getattr(args, "seed", None) is not None:
        return dataclasses.replace(cfg, seed=args.seed)
    if config_has_seed:
        return cfg
    env = os.environ.get("XCORR_SEED")
    if env is not None:
        try:
            return dataclasses.replace(cfg, seed=int(env))
        except ValueError as exc:
            raise ConfigError(f"XCORR_SEED must be an integer, got {env!r}") from exc
    return dataclasses.replace(cfg, seed=0)


def _emit(doc: dict | str, out: str | None) -> None:
    text = doc if isinstance(doc, str) else json.dumps(
        doc, sort_keys=True, separators=(",", ":")
    )
    if out is None:
        sys.stdout.write(text + ("\n" if not text.endswith("\n") else ""))
    else:
        Path(out).write_text(
            text + ("\n" if not text.endswith("\n") else ""), encoding="utf-8"
        )


# ------------------------------------------------------------ subcommands


def _cmd_simulate(args) -> int:
    cfg, has_seed = _load_config(args)
    cfg = _resolve_seed(args, cfg, has_seed)
    if args.store is None and args.out_dir is None:
        raise ConfigError("simulate: need --store or --out-dir to put trials somewhere")
    store = CorrelationStore(args.store) if args.store else None
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    key = scenario_hash(cfg.to_dict())
    root = np.random.SeedSequence(cfg.seed)
    for t, ss in enumerate(root.spawn(cfg.trials)):
        sim = simulate_trial(cfg, ss)
        truth_doc = {
            str(oid): None if fam is None else json.loads(fam.to_json())
            for oid, fam in sim.truth.items()
        }
        if store is not None:
            store.append(
                key,
                "trials",
                {
                    "trial": t,
                    "placement": json.loads(sim.placement.to_json()),
                    "observations": json.loads(sim.observations.to_json()),
                    "truth": truth_doc,
                },
            )
        if out_dir is not None:
            (out_dir / f"trial{t}_placement.json").write_text(
                sim.placement.to_json(), encoding="utf-8"
            )
            (out_dir / f"trial{t}_observations.json").write_text(
                sim.observations.to_json(), encoding="utf-8"
            )
            (out_dir / f"trial{t}_truth.json").write_text(
                json.dumps(truth_doc, sort_keys=True), encoding="utf-8"
            )
    _emit({"key": key, "trials": cfg.trials}, None)
    return 0


def _cmd_detect(args) -> int:
    pm = PlacementMatrix.from_json(_read_text(args.placement))
    obs = ObservationSet.from_json(_read_text(args.obs))
    if args.config is not None:
        cfg, _ = _load_config(args)
        if cfg.n_inputs != pm.n_inputs:
            raise ConfigError(
                f"config says n_inputs={cfg.n_inputs} but the placement "
                f"has {pm.n_inputs} columns"
            )
    else:
        cfg = ScenarioConfig(n_inputs=pm.n_inputs)
    preds = algorithm_predictions(args.algo, cfg, obs, pm)
    _emit(
        {
            "algo": args.algo,
            "predictions": {str(oid): p.to_dict() for oid, p in sorted(preds.items())},
        },
        args.out,
    )
    return 0


def _cmd_sweep(args) -> int:
    cfg, has_seed = _load_config(args)
    cfg = _resolve_seed(args, cfg, has_seed)
    try:
        n_values = [int(v) for v in args.n_values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--n-values must be comma-separated ints: {exc}") from exc
    result = scaling_sweep(
        cfg, n_values, algo=args.algo, m_hi=args.m_hi, trials=args.trials
    )
    _emit(result.to_json(), args.out)
    if args.csv is not None:
        lines = ["algo,n_inputs,metric,value"]
        for row in result.rows:
            lines.append(f"{args.algo},{row.n_inputs},knee_m,{row.knee_m}")
            lines.append(
                f"{args.algo},{row.n_inputs},plateau_recall,{row.plateau_recall:.6f}"
            )
        for metric in ("slope", "intercept", "r_squared"):
            value = getattr(result, metric)
            if value is not None:
                lines.append(f"{args.algo},,{metric},{value:.6f}")
        Path(args.csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def _cmd_threshold(args) -> int:
    result = max_ratio(args.l, args.r)
    doc = {"l": args.l, "r": args.r, **result.to_dict()}
    if args.ratio is not None:
        # interpret --ratio as p_out/p_in, the quantity the bound caps
        doc["ratio"] = args.ratio
        doc["admissible"] = admissible(args.ratio, 1.0, args.l, args.r)
        if doc["admissible"]:
            rec = recommend_config(args.l, args.r, args.ratio)
            doc["recommended"] = {
                "x": rec.x,
                "alpha": rec.alpha,
                "account_constant": theoretical_account_constant(
                    rec.x, rec.alpha, args.l
                ),
            }
    if args.curve:
        doc["curve"] = [
            [z, x, value] for z, x, value in phi_curve(args.l, args.r, args.curve)
        ]
    _emit(doc, args.out)
    return 0


def _cmd_match(args) -> int:
    cfg, has_seed = _load_config(args)
    cfg = _resolve_seed(args, cfg, has_seed)
    if cfg.overlap_groups is None:
        raise ConfigError("match: config needs overlap_groups")
    if args.threshold is not None:
        cfg = dataclasses.replace(cfg, match_threshold=args.threshold)
    counts = simulate_contextual(
        Combination(range(cfg.n_inputs)),
        matching_specs(cfg),
        cfg.displays_per_input,
        seed=cfg.seed,
        n_inputs=cfg.n_inputs,
    )
    clusters = cluster_inputs(
        build_signatures(counts, n_inputs=cfg.n_inputs),
        distance_threshold=cfg.match_threshold,
        raw=args.raw_distance,
    )
    purity = cluster_purity(clusters, [list(g) for g in cfg.overlap_groups])
    _emit(
        {"clusters": clusters, "n_clusters": len(clusters), "purity": purity},
        args.out,
    )
    return 0


def _cmd_report(args) -> int:
    cfg, has_seed = _load_config(args)
    cfg = _resolve_seed(args, cfg, has_seed)
    store = CorrelationStore(args.store) if args.store else None
    report = run_scenario(cfg, store=store)
    _emit(report.to_canonical_json(), args.out)
    if args.csv is not None:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    failures = []
    for algo in cfg.algorithms:
        pooled = report.algorithms[algo]["pooled"]
        if args.require_recall is not None and pooled["recall"] < args.require_recall:
            failures.append(
                f"{algo}: recall {pooled['recall']:.4f} < {args.require_recall}"
            )
        if (
            args.require_precision is not None
            and pooled["precision"] < args.require_precision
        ):
            failures.append(
                f"{algo}: precision {pooled['precision']:.4f} < {args.require_precision}"
            )
    if failures:
        for line in failures:
            print(f"requirement failed: {line}", file=sys.stderr)
        return 3
    return 0


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xcorr", description="differential-correlation targeting audit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_seed(p):
        p.add_argument("--config", help="scenario config JSON file")
        p.add_argument("--seed", type=int, help="override the scenario seed")

    p = sub.add_parser("simulate", help="draw trials and persist observations")
    add_config_seed(p)
    p.add_argument("--store", help="append trials to this store directory")
    p.add_argument("--out-dir", help="also write per-trial JSON files here")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("detect", help="run one algorithm on stored observations")
    p.add_argument("--algo", required=True, choices=ALGO_CHOICES)
    p.add_argument("--obs", required=True, help="observation set JSON file")
    p.add_argument("--placement", required=True, help="placement matrix JSON file")
    p.add_argument("--config", help="scenario config JSON (params + algo options)")
    p.add_argument("--out", help="write predictions JSON here instead of stdout")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("sweep", help="knee detection across universe sizes")
    add_config_seed(p)
    p.add_argument("--n-values", required=True, help="comma-separated universe sizes")
    p.add_argument("--algo", default="bayes", choices=ALGO_CHOICES)
    p.add_argument("--m-hi", type=int, help="largest account budget to probe")
    p.add_argument("--trials", type=int, help="trials per probe (default: config)")
    p.add_argument("--out", help="write sweep JSON here instead of stdout")
    p.add_argument("--csv", help="also write a flat CSV table here")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("threshold", help="separation-threshold calculus")
    p.add_argument("--l", type=int, required=True, help="family size")
    p.add_argument("--r", type=int, required=True, help="member order")
    p.add_argument("--ratio", type=float, help="p_out/p_in noise ratio to check")
    p.add_argument("--curve", type=int, metavar="POINTS", help="sample the phi curve")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=_cmd_threshold)

    p = sub.add_parser("match", help="cluster inputs from category-ad counts")
    add_config_seed(p)
    p.add_argument("--threshold", type=float, help="override the distance threshold")
    p.add_argument(
        "--raw-distance", action="store_true", help="skip signature normalization"
    )
    p.add_argument("--out", help="write clusters JSON here instead of stdout")
    p.set_defaults(func=_cmd_match)

    p = sub.add_parser("report", help="run a scenario end to end and score it")
    add_config_seed(p)
    p.add_argument("--out", help="write the canonical report JSON here")
    p.add_argument("--csv", help="write the flat CSV table here")
    p.add_argument("--store", help="persist trials/predictions to this store")
    p.add_argument(
        "--require-recall", type=float, help="exit 3 if any algorithm's recall is lower"
    )
    p.add_argument(
        "--require-precision",
        type=float,
        help="exit 3 if any algorithm's precision is lower",
    )
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except XCorrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
