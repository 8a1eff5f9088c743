"""Batch pipeline: generate tasks, transfer labels, train the reward model.

Subcommands (`pearl gen-tasks|transfer|train-reward|sweep|pipeline`) compose
the library end to end. Every subcommand is deterministic given its config
file: all randomness flows from declared seeds, reports serialize with sorted
keys, and wall-clock timing is printed to stderr but never written to disk.

Exit codes: 0 success, 1 computation error, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .config import PipelineConfig, load_config
from .errors import DatasetFormatError, PearlError, SamplingError
from .label_transfer import (
    PreferenceDataset,
    PreferenceRecord,
    compute_cpa_labels,
    cpa_accuracy,
)
from .reward_model import (
    init_reward_net,
    predicted_returns,
    preference_probability,
    save_reward_net,
    train,
)
from .synthetic_tasks import (
    flip_labels,
    generate_task_pair,
    scripted_labels,
    segment_returns,
)
from .trajectory import (
    TrajectorySet,
    dataset_to_dict,
    kmeans_cluster,
    load_dataset,
    sample_balanced,
)


@dataclass
class MetricsReport:
    """What one pipeline stage reports.

    wall_clock_seconds stays in memory (printed to stderr); it is omitted
    from serialization so identical runs produce identical bytes.
    """

    cpa_accuracy: float | None = None
    label_counts: dict = field(default_factory=dict)
    reward_rank_correlation: float | None = None
    held_out_pair_accuracy: float | None = None
    evaluated_on: str | None = None
    training_log: str | None = None
    gw_steps: list | None = None
    config_echo: dict = field(default_factory=dict)
    wall_clock_seconds: float | None = None

    def __post_init__(self) -> None:
        for name in ("cpa_accuracy", "held_out_pair_accuracy"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 100.0:
                raise ValueError(f"{name} must lie in [0, 100]")
        if self.reward_rank_correlation is not None and not (
            -1.0 <= self.reward_rank_correlation <= 1.0
        ):
            raise ValueError("reward_rank_correlation must lie in [-1, 1]")

    def to_dict(self) -> dict:
        return {
            "cpa_accuracy": self.cpa_accuracy,
            "label_counts": self.label_counts,
            "reward_rank_correlation": self.reward_rank_correlation,
            "held_out_pair_accuracy": self.held_out_pair_accuracy,
            "evaluated_on": self.evaluated_on,
            "training_log": self.training_log,
            "gw_steps": self.gw_steps,
            "config": self.config_echo,
        }


def _write_json(path: str, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _holdout_split(n: int, sampling) -> tuple[list[int], list[int]]:
    """Seeded (holdout, pool) index split; the same draw in every stage."""
    k = int(round(sampling.holdout_fraction * n))
    if k == 0:
        return [], list(range(n))
    rng = np.random.default_rng([sampling.seed, 99])
    holdout = sorted(int(i) for i in rng.choice(n, size=k, replace=False))
    pool = [i for i in range(n) if i not in set(holdout)]
    if len(pool) < 2:
        raise SamplingError("holdout fraction leaves fewer than 2 training segments")
    return holdout, pool


def _truth_dataset(path: str, traj_set: TrajectorySet) -> PreferenceDataset | None:
    _, prefs = load_dataset(path)
    if prefs is None:
        return None
    return PreferenceDataset(records=prefs, over=traj_set)


def run_gen_tasks(cfg: PipelineConfig) -> dict:
    """Write source/target dataset files (with scripted labels) + manifest."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    pair = generate_task_pair(cfg.tasks.spec, cfg.tasks.num_source, cfg.tasks.num_target)
    outputs = {}
    for side, traj_set, reward in (
        ("source", pair.source, pair.source_reward),
        ("target", pair.target, pair.target_reward),
    ):
        path = cfg.source_path if side == "source" else cfg.target_path
        prefs = scripted_labels(traj_set, reward)
        _write_json(
            path,
            dataset_to_dict(
                traj_set,
                preferences=prefs.records,
                extra_fields={
                    "ground_truth_returns": segment_returns(traj_set, reward).tolist(),
                    "goal": reward.goal.tolist(),
                },
            ),
        )
        outputs[side] = path
    manifest = {
        "tasks": cfg.tasks.to_dict(),
        "source_path": outputs["source"],
        "target_path": outputs["target"],
    }
    manifest_path = os.path.join(cfg.output_dir, "manifest.json")
    _write_json(manifest_path, manifest)
    outputs["manifest"] = manifest_path
    return outputs


def run_transfer(cfg: PipelineConfig) -> MetricsReport:
    """Cluster the target pool, repeatedly sample balanced groups, transfer
    labels through the solved coupling, and accumulate them (first write wins).
    """
    started = time.perf_counter()
    os.makedirs(cfg.output_dir, exist_ok=True)
    source_set, source_prefs_records = load_dataset(cfg.source_path)
    if not source_prefs_records:
        raise DatasetFormatError(
            f"{cfg.source_path} carries no preference records; transfer needs source labels"
        )
    source_prefs = PreferenceDataset(records=source_prefs_records, over=source_set)
    target_set, _ = load_dataset(cfg.target_path)
    target_extras = _read_json(cfg.target_path)
    truth = _truth_dataset(cfg.target_path, target_set)

    holdout, pool = _holdout_split(len(target_set), cfg.sampling)
    pool_set = TrajectorySet.from_segments([target_set.segments[i] for i in pool])
    assignment = kmeans_cluster(pool_set, k=2, seed=cfg.sampling.seed)

    accumulated: dict[frozenset[int], PreferenceRecord] = {}
    abstained: set[frozenset[int]] = set()
    gw_steps = []
    for step in range(cfg.sampling.num_steps):
        subset, local_idx = sample_balanced(
            pool_set,
            assignment,
            cfg.sampling.group_size,
            seed=cfg.sampling.seed * 1000003 + step,
        )
        result = compute_cpa_labels(
            source_set, source_prefs, subset, metric=cfg.metric, gw_config=cfg.gw
        )
        report = result.gw_report
        gw_steps.append(
            {
                "step": step,
                "converged": report.converged,
                "objective": report.objective,
                "outer_iterations_used": report.outer_iterations_used,
            }
        )
        for rec in result.dataset.records:
            a = pool[int(local_idx[rec.first])]
            b = pool[int(local_idx[rec.second])]
            key = frozenset((a, b))
            if key not in accumulated:
                accumulated[key] = PreferenceRecord(
                    first=a,
                    second=b,
                    label=rec.label,
                    raw_label=rec.raw_label,
                    normalized_label=rec.normalized_label,
                )
        for j, j_prime in result.abstained_pairs:
            key = frozenset((pool[int(local_idx[j])], pool[int(local_idx[j_prime])]))
            if key not in accumulated:
                abstained.add(key)
    abstained -= set(accumulated)
    records = sorted(
        accumulated.values(), key=lambda r: (min(r.first, r.second), max(r.first, r.second))
    )
    abstained_pairs = sorted(tuple(sorted(key)) for key in abstained)

    predicted = PreferenceDataset(records=records, over=target_set)
    accuracy = None
    if truth is not None and records:
        try:
            accuracy = cpa_accuracy(predicted, truth)
        except ValueError:
            accuracy = None

    extra_fields = {"holdout_indices": holdout}
    for key in ("ground_truth_returns", "goal"):
        if key in target_extras:
            extra_fields[key] = target_extras[key]
    transferred_path = os.path.join(cfg.output_dir, "transferred.json")
    _write_json(
        transferred_path,
        dataset_to_dict(
            target_set,
            preferences=records,
            abstained_pairs=abstained_pairs,
            extra_fields=extra_fields,
        ),
    )
    report = MetricsReport(
        cpa_accuracy=accuracy,
        label_counts={
            "transferred": len(records),
            "abstained": len(abstained_pairs),
            "oracle": 0,
        },
        gw_steps=gw_steps,
        config_echo=cfg.to_dict(),
        wall_clock_seconds=time.perf_counter() - started,
    )
    _write_json(os.path.join(cfg.output_dir, "report_transfer.json"), report.to_dict())
    print(f"transfer: {report.wall_clock_seconds:.2f}s", file=sys.stderr)
    return report


def _training_records(cfg: PipelineConfig, truth, pool):
    """Assemble the training dataset per mode and label source.

    Returns (records, transferred_count, oracle_count, abstained_count).
    """
    if cfg.training_labels.source == "scripted":
        if truth is None:
            raise DatasetFormatError(
                f"{cfg.target_path} carries no scripted labels to train on"
            )
        pool_index = set(pool)
        records = [
            PreferenceRecord(first=r.first, second=r.second, label=r.label)
            for r in truth.records
            if r.first in pool_index and r.second in pool_index
        ]
        return records, 0, len(records), 0

    transferred_path = os.path.join(cfg.output_dir, "transferred.json")
    transferred_set, transferred_records = load_dataset(transferred_path)
    del transferred_set  # same segments as the target file
    if not transferred_records:
        raise DatasetFormatError(f"{transferred_path} carries no transferred labels")
    payload = _read_json(transferred_path)
    abstained_count = sum(
        1 for entry in payload.get("preferences", []) if entry.get("abstained")
    )
    records = [
        PreferenceRecord(first=r.first, second=r.second, label=r.label)
        for r in transferred_records
    ]
    oracle_count = 0
    if cfg.mode == "few_shot" and cfg.few_shot_oracle_count > 0:
        if truth is None:
            raise DatasetFormatError(
                f"{cfg.target_path} carries no scripted labels for few-shot mixing"
            )
        if cfg.few_shot_oracle_count > len(records):
            raise SamplingError(
                f"few_shot_oracle_count={cfg.few_shot_oracle_count} exceeds "
                f"{len(records)} transferred labels"
            )
        lookup = truth.ordered_label_lookup()
        rng = np.random.default_rng([cfg.sampling.seed, 555])
        chosen = rng.choice(len(records), size=cfg.few_shot_oracle_count, replace=False)
        for idx in chosen:
            rec = records[int(idx)]
            true_label = lookup.get((rec.first, rec.second))
            if true_label is not None:
                records[int(idx)] = PreferenceRecord(
                    first=rec.first, second=rec.second, label=true_label
                )
                oracle_count += 1
    return records, len(records) - oracle_count, oracle_count, abstained_count


def run_train_reward(cfg: PipelineConfig) -> MetricsReport:
    """Train the distributional reward model on the configured labels and
    score it on held-out segments (rank correlation + pairwise accuracy)."""
    started = time.perf_counter()
    os.makedirs(cfg.output_dir, exist_ok=True)
    target_set, _ = load_dataset(cfg.target_path)
    target_extras = _read_json(cfg.target_path)
    truth = _truth_dataset(cfg.target_path, target_set)
    holdout, pool = _holdout_split(len(target_set), cfg.sampling)

    records, transferred_count, oracle_count, abstained_count = _training_records(
        cfg, truth, pool
    )
    dataset = PreferenceDataset(records=records, over=target_set)
    if cfg.training_labels.noise_fraction > 0:
        dataset = flip_labels(
            dataset,
            cfg.training_labels.noise_fraction,
            seed=cfg.training_labels.noise_seed,
        )
    net = init_reward_net(
        target_set.state_dim,
        target_set.action_dim,
        embed_dim=cfg.rrl.embed_dim,
        hidden_dim=cfg.rrl.hidden_dim,
        seed=cfg.rrl.seed,
        activation=cfg.rrl.activation,
    )
    trained, log = train(net, dataset, cfg.rrl)
    checkpoint_path = os.path.join(cfg.output_dir, "checkpoint.json")
    save_reward_net(checkpoint_path, trained)
    log_path = os.path.join(cfg.output_dir, "training_log.json")
    _write_json(log_path, log)

    eval_indices = holdout if holdout else list(range(len(target_set)))
    evaluated_on = "holdout" if holdout else "all_segments"
    rank_corr = None
    truth_returns = target_extras.get("ground_truth_returns")
    if truth_returns is not None:
        predicted = predicted_returns(trained, target_set)[eval_indices]
        actual = np.asarray(truth_returns, dtype=np.float64)[eval_indices]
        result = spearmanr(predicted, actual)
        stat = float(result.statistic)
        rank_corr = stat if np.isfinite(stat) else None

    pair_accuracy = None
    if truth is not None:
        eval_set = set(eval_indices)
        correct = 0
        total = 0
        for rec in truth.records:
            if rec.label == 0.5:
                continue
            if rec.first not in eval_set or rec.second not in eval_set:
                continue
            p = preference_probability(
                trained, target_set.segments[rec.first], target_set.segments[rec.second]
            )
            total += 1
            if (0.0 if p >= 0.5 else 1.0) == rec.label:
                correct += 1
        if total:
            pair_accuracy = 100.0 * correct / total

    report = MetricsReport(
        label_counts={
            "transferred": transferred_count,
            "abstained": abstained_count,
            "oracle": oracle_count,
        },
        reward_rank_correlation=rank_corr,
        held_out_pair_accuracy=pair_accuracy,
        evaluated_on=evaluated_on,
        training_log=log_path,
        config_echo=cfg.to_dict(),
        wall_clock_seconds=time.perf_counter() - started,
    )
    _write_json(os.path.join(cfg.output_dir, "report_train.json"), report.to_dict())
    print(f"train-reward: {report.wall_clock_seconds:.2f}s", file=sys.stderr)
    return report


def run_pipeline(cfg: PipelineConfig) -> dict:
    """gen-tasks (when no dataset files are pinned), transfer, train-reward."""
    outputs: dict = {}
    if cfg.source_dataset is None or not os.path.exists(cfg.source_path):
        outputs["gen"] = run_gen_tasks(cfg)
    outputs["transfer"] = run_transfer(cfg)
    outputs["train"] = run_train_reward(cfg)
    return outputs


def _apply_sweep_value(cfg: PipelineConfig, parameter: str, value) -> None:
    if parameter == "metric":
        cfg.metric = value
    elif parameter == "noise_fraction":
        cfg.training_labels.noise_fraction = value
    elif parameter == "group_size":
        cfg.sampling.group_size = value
    else:
        setattr(cfg.rrl, parameter, value)


def run_sweep(cfg: PipelineConfig) -> str:
    """Run the full pipeline once per grid value; one CSV row per run.

    A failing grid point records its error message in its row and the sweep
    continues.
    """
    if cfg.sweep is None:
        raise ValueError("sweep subcommand needs a 'sweep' config section")
    os.makedirs(cfg.output_dir, exist_ok=True)
    rows = []
    for value in cfg.sweep.values:
        sub = PipelineConfig.from_dict(cfg.to_dict())
        sub.sweep = None
        sub.output_dir = os.path.join(cfg.output_dir, f"sweep_{cfg.sweep.parameter}_{value}")
        sub.source_dataset = cfg.source_dataset
        sub.target_dataset = cfg.target_dataset
        _apply_sweep_value(sub, cfg.sweep.parameter, value)
        row = {
            "parameter": cfg.sweep.parameter,
            "value": value,
            "cpa_accuracy": "",
            "transferred": "",
            "abstained": "",
            "oracle": "",
            "reward_rank_correlation": "",
            "held_out_pair_accuracy": "",
            "error": "",
        }
        try:
            outputs = run_pipeline(sub)
            transfer_report: MetricsReport = outputs["transfer"]
            train_report: MetricsReport = outputs["train"]
            row.update(
                cpa_accuracy=transfer_report.cpa_accuracy,
                transferred=transfer_report.label_counts.get("transferred"),
                abstained=transfer_report.label_counts.get("abstained"),
                oracle=train_report.label_counts.get("oracle"),
                reward_rank_correlation=train_report.reward_rank_correlation,
                held_out_pair_accuracy=train_report.held_out_pair_accuracy,
            )
        except (PearlError, ValueError) as exc:
            row["error"] = str(exc)
        rows.append(row)
    csv_path = os.path.join(cfg.output_dir, "sweep.csv")
    fieldnames = [
        "parameter",
        "value",
        "cpa_accuracy",
        "transferred",
        "abstained",
        "oracle",
        "reward_rank_correlation",
        "held_out_pair_accuracy",
        "error",
    ]
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    return csv_path


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pearl",
        description="Cross-task preference transfer and robust reward learning",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("gen-tasks", "generate a synthetic source/target task pair"),
        ("transfer", "align tasks and transfer preference labels"),
        ("train-reward", "train the distributional reward model"),
        ("sweep", "run the pipeline over a parameter grid"),
        ("pipeline", "gen-tasks + transfer + train-reward in one go"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--seed", type=int, default=None, help="override all seeds")
    return parser


def _apply_overrides(cfg: PipelineConfig, out: str | None, seed: int | None) -> None:
    if out is not None:
        cfg.output_dir = out
    if seed is not None:
        cfg.tasks.spec.seed = seed
        cfg.sampling.seed = seed + 1
        cfg.rrl.seed = seed + 2
        cfg.training_labels.noise_seed = seed + 3


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        _apply_overrides(cfg, args.out, args.seed)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"pearl: config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "gen-tasks":
            outputs = run_gen_tasks(cfg)
            print(json.dumps(outputs, sort_keys=True))
        elif args.command == "transfer":
            report = run_transfer(cfg)
            print(json.dumps(report.to_dict(), sort_keys=True))
        elif args.command == "train-reward":
            report = run_train_reward(cfg)
            print(json.dumps(report.to_dict(), sort_keys=True))
        elif args.command == "sweep":
            csv_path = run_sweep(cfg)
            print(csv_path)
        else:
            outputs = run_pipeline(cfg)
            print(
                json.dumps(
                    {
                        "transfer": outputs["transfer"].to_dict(),
                        "train": outputs["train"].to_dict(),
                    },
                    sort_keys=True,
                )
            )
    except PearlError as exc:
        print(f"pearl: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"pearl: I/O error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"pearl: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
