"""Ablation sweeps: each setting is trained ``repeats`` times and summarized as mean and sample std."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from ..models import AGGREGATORS, PREDICTORS, is_legal_combination
from .config import ConfigError, RunConfig
from .experiment import load_data, run_experiment
from .report import EvalReport, summarize


@dataclass
class AblationResult:
    name: str
    x_key: str
    rows: list[dict] = field(default_factory=list)
    reports: list[EvalReport] = field(default_factory=list)

    @property
    def columns(self) -> list[str]:
        cols: list[str] = []
        for r in self.rows:
            cols += [k for k in r if k not in cols]
        return cols

    def column(self, key: str) -> list:
        return [r.get(key) for r in self.rows]

    def write(self, directory, figure: bool = True) -> dict[str, Path]:
        """Reports, the plot-data table and (optionally) a figure; nothing existing is overwritten."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths: dict[str, Path] = {}
        for i, rep in enumerate(self.reports):
            paths[f"report{i}"] = rep.write(directory)
        paths["table"] = write_table(self.rows, self.columns, _fresh(directory, self.name, ".csv"))
        if figure and self.rows:
            from .plots import plot_ablation

            paths["figure"] = plot_ablation(self, _fresh(directory, self.name, ".png"))
        return paths


def _fresh(directory: Path, stem: str, suffix: str) -> Path:
    path = directory / f"{stem}{suffix}"
    n = 2
    while path.exists():
        path = directory / f"{stem}.run{n}{suffix}"
        n += 1
    return path


def write_table(rows: list[dict], columns: list[str], path: Path) -> Path:
    with open(path, "x", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(r.get(k)) for k in columns})
    return path


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def run_repeats(cfg: RunConfig, experiment: str) -> list[EvalReport]:
    """``cfg.repeats`` runs with seeds seed, seed+1, ...; each report echoes a single-run config."""
    out = []
    for r in range(cfg.repeats):
        single = cfg.replace(seed=cfg.seed + r, repeats=1)
        out.append(run_experiment(single, f"{experiment}-s{single.seed}"))
    return out


def _summary_row(reports: list[EvalReport], keys: Sequence[str]) -> dict:
    row: dict = {"repeats": len(reports)}
    for k in keys:
        vals = [rep.metrics[k] for rep in reports if k in rep.metrics]
        if not vals:
            continue
        mean, std = summarize(vals)
        row[f"{k}_mean"] = mean
        row[f"{k}_std"] = std
    return row


_CTR_KEYS = ("auc", "ap")


def run_ablation_platforms(base: RunConfig, counts: Sequence[int], order: Sequence[int] | None = None) -> AblationResult:
    """One setting per platform count; platforms are added in ``order`` (default: ascending ids)."""
    ds = load_data(base)
    order = list(order) if order is not None else list(ds.platform_ids)
    missing = [p for p in order if p not in ds.platform_ids]
    if missing:
        raise ConfigError(f"platforms {missing} are not in the dataset (has {ds.platform_ids})")
    for c in counts:
        if not 1 <= c <= len(order):
            raise ConfigError(f"platform count {c} outside 1..{len(order)}")
    res = AblationResult("ablation_platforms", "count")
    for c in counts:
        cfg = base.replace(platforms=order[:c]).validate()
        reps = run_repeats(cfg, f"platforms-k{c}")
        res.reports += reps
        row = {"count": c, "platforms": " ".join(map(str, order[:c]))}
        row.update(_summary_row(reps, _CTR_KEYS))
        res.rows.append(row)
    return res


def noise_pairs(ldp_scales: Sequence[float], dp_scales: Sequence[float]) -> list[tuple[float, float]]:
    """Zip the two lists; a single-element list is broadcast against the other."""
    ldp, dp = list(ldp_scales), list(dp_scales)
    if len(ldp) == 1 and len(dp) > 1:
        ldp = ldp * len(dp)
    if len(dp) == 1 and len(ldp) > 1:
        dp = dp * len(ldp)
    if len(ldp) != len(dp):
        raise ConfigError("ldp and dp scale lists must have equal length (or one of them length 1)")
    if any(s < 0 for s in ldp + dp):
        raise ConfigError("noise scales must be non-negative")
    return list(zip(ldp, dp))


def run_ablation_noise(base: RunConfig, ldp_scales: Sequence[float], dp_scales: Sequence[float],
                       attack_instances: int | None = None) -> AblationResult:
    """CTR quality and attack AUC (local and aggregated targets) for each (lambda_ldp, lambda_dp) pair."""
    n_att = attack_instances or base.attack_instances or 1000
    res = AblationResult("ablation_noise", "lambda_ldp")
    for ldp, dp in noise_pairs(ldp_scales, dp_scales):
        cfg = base.replace(lambda_ldp=float(ldp), lambda_dp=float(dp), attack_instances=n_att).validate()
        reps = run_repeats(cfg, f"noise-ldp{ldp:g}-dp{dp:g}")
        res.reports += reps
        row = {"lambda_ldp": float(ldp), "lambda_dp": float(dp), "instances": n_att}
        row.update(_summary_row(reps, _CTR_KEYS + ("attack.local", "attack.aggregated")))
        res.rows.append(row)
    return res


def run_ablation_variants(base: RunConfig, predictors: Sequence[str] = PREDICTORS,
                          aggregators: Sequence[str] = AGGREGATORS) -> AblationResult:
    """Every predictor x aggregator combination; illegal ones are listed but not run."""
    K = len(base.platforms) if base.platforms else base.n_platforms
    res = AblationResult("ablation_variants", "variant")
    for p in predictors:
        for a in aggregators:
            row: dict = {"predictor": p, "aggregator": a, "legal": is_legal_combination(p, a, K)}
            if row["legal"]:
                cfg = base.replace(predictor=p, aggregator=a).validate()
                reps = run_repeats(cfg, f"variant-{p}-{a}")
                res.reports += reps
                row.update(_summary_row(reps, _CTR_KEYS + ("train_loss",)))
                row["finite_loss"] = all(math.isfinite(r.metrics.get("train_loss", 0.0)) for r in reps)
            res.rows.append(row)
    return res


def run_ablation_behavior_fraction(base: RunConfig, fractions: Sequence[float]) -> AblationResult:
    """Each platform keeps only the most recent fraction of every user's history."""
    res = AblationResult("ablation_behavior_fraction", "behavior_fraction")
    for f in fractions:
        cfg = base.replace(behavior_fraction=float(f)).validate()
        reps = run_repeats(cfg, f"behavior-fraction-{f:g}")
        res.reports += reps
        row = {"behavior_fraction": float(f)}
        row.update(_summary_row(reps, _CTR_KEYS))
        res.rows.append(row)
    return res


def run_ablation_train_fraction(base: RunConfig, fractions: Sequence[float]) -> AblationResult:
    """Train on a seeded random subsample of the training impressions."""
    res = AblationResult("ablation_train_fraction", "train_fraction")
    for f in fractions:
        cfg = base.replace(train_fraction=float(f)).validate()
        reps = run_repeats(cfg, f"train-fraction-{f:g}")
        res.reports += reps
        row = {"train_fraction": float(f)}
        row.update(_summary_row(reps, _CTR_KEYS))
        res.rows.append(row)
    return res


ABLATIONS = ("platforms", "noise", "variants", "behavior-fraction", "train-fraction")
