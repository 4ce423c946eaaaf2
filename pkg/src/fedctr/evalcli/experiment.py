"""Single runs: data preparation, training, test metrics and the behavior-inference attack."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..dataio import DAY, Dataset, Impressions, chronological_split, generate_synthetic, load_dataset, subsample
from ..federation import FedConfig, Federation
from ..privacy import AttackInstance, run_attack, sample_candidates
from .config import RunConfig
from .report import EvalReport

_DATA_CACHE: dict[tuple, Dataset] = {}
_CACHE_LIMIT = 4


@dataclass
class Splits:
    dataset: Dataset
    train: Impressions
    val: Impressions
    test: Impressions


def load_data(cfg: RunConfig) -> Dataset:
    """The dataset a config names; synthetic sets are memoized by their full spec."""
    if cfg.data is not None:
        return load_dataset(cfg.data)
    spec = cfg.synthetic_spec()
    key = tuple(sorted(spec.echo().items()))
    ds = _DATA_CACHE.get(key)
    if ds is None:
        ds = generate_synthetic(spec)
        if len(_DATA_CACHE) >= _CACHE_LIMIT:
            _DATA_CACHE.pop(next(iter(_DATA_CACHE)))
        _DATA_CACHE[key] = ds
    return ds


def prepare(cfg: RunConfig, dataset: Dataset | None = None) -> Splits:
    ds = dataset if dataset is not None else load_data(cfg)
    window = int(round(cfg.test_window_days * DAY))
    train, val, test = chronological_split(ds.impressions, window, cfg.val_fraction, seed=cfg.seed)
    if cfg.train_fraction < 1.0:
        train = subsample(train, cfg.train_fraction, cfg.seed)
    return Splits(ds, train, val, test)


def build_federation(cfg: RunConfig, dataset: Dataset) -> Federation:
    fc = FedConfig(
        model=cfg.model_config(), platforms=cfg.platforms, lambda_ldp=cfg.lambda_ldp, lambda_dp=cfg.lambda_dp,
        clip_norm=cfg.clip_norm, optimizer=cfg.optimizer, lr=cfg.lr, batch_size=cfg.batch_size,
        seed=cfg.seed, behavior_fraction=cfg.behavior_fraction,
    )
    return Federation(dataset, fc)


def attack_federation(fed: Federation, n_instances: int, seed: int, encoder: str = "singleton") -> dict[str, float]:
    """Attack AUC against each platform's local embeddings and against the aggregated embedding.

    For platform i, instances are drawn from platform i's logs and the
    candidates are encoded with platform i's own submodel. The same
    instances are then scored against the aggregated embedding, when its
    dimension allows. Embeddings are taken as they travel on the wire, noise
    included.
    """
    rng = np.random.default_rng([seed, 0xA7])
    out: dict[str, float] = {}
    local_all: list[float] = []
    agg_all: list[float] = []
    # every platform contributes n_instances, so the pooled mean is the mean of platform means
    for pid in fed.platform_ids:
        bp = fed.platforms[pid]
        catalog = bp.behavior_catalog()
        draws = sample_candidates(catalog, n_instances, rng)
        users = np.unique([u for u, _, _ in draws])
        local, agg = fed.observe_embeddings(users)
        row_of = {int(u): i for i, u in enumerate(users)}

        unique = sorted({c for _, cands, _ in draws for c in cands})
        L = max(len(c) for c in unique)
        tokens = np.zeros((len(unique), L), dtype=np.int64)
        for i, c in enumerate(unique):
            tokens[i, : len(c)] = c
        reps = np.concatenate([bp.encode_candidates(tokens[s : s + 1000], encoder) for s in range(0, len(unique), 1000)])
        rep_of = {c: reps[i] for i, c in enumerate(unique)}

        def encode(cands):
            return np.stack([rep_of[c] for c in cands])

        def instances(targets):
            return [AttackInstance(u, pid, targets[row_of[u]], cands, pos) for u, cands, pos in draws]

        out[f"attack.local_{pid}"] = run_attack(encode, instances(local[pid]))
        local_all.append(out[f"attack.local_{pid}"])
        if agg.shape[1] == reps.shape[1]:
            out[f"attack.aggregated_{pid}"] = run_attack(encode, instances(agg))
            agg_all.append(out[f"attack.aggregated_{pid}"])
    out["attack.local"] = float(np.mean(local_all))
    if agg_all:
        out["attack.aggregated"] = float(np.mean(agg_all))
    return out


def run_experiment(cfg: RunConfig, experiment: str = "train", splits: Splits | None = None) -> EvalReport:
    """Train (``cfg.epochs`` epochs, best validation epoch kept) and evaluate on the test window."""
    cfg.validate()
    t0 = time.perf_counter()
    splits = splits or prepare(cfg)
    fed = build_federation(cfg, splits.dataset)
    return evaluate_federation(cfg, fed, splits, experiment, train=True, t0=t0)


def evaluate_federation(cfg: RunConfig, fed: Federation, splits: Splits, experiment: str,
                        train: bool = True, t0: float | None = None) -> EvalReport:
    """Optionally train ``fed``, then collect test/validation metrics and attack results into a report."""
    t0 = time.perf_counter() if t0 is None else t0
    history = []
    if train and cfg.epochs > 0:
        history = fed.train_epochs(splits.train, cfg.epochs, val=splits.val, keep_best=cfg.keep_best)
    metrics: dict[str, float] = {}
    for k, v in fed.evaluate(splits.test).items():
        metrics[k] = float(v)
    if len(splits.val):
        for k, v in fed.evaluate(splits.val).items():
            metrics[f"val_{k}"] = float(v)
    if history:
        metrics["train_loss"] = float(history[-1]["loss"])
        metrics["best_epoch"] = float(max(history, key=lambda h: h.get("val_auc", -1.0))["epoch"])
    if cfg.attack_instances > 0:
        metrics.update(attack_federation(fed, cfg.attack_instances, cfg.seed, cfg.attack_encoder))
    info = {
        "platform_order": ",".join(str(p) for p in fed.platform_ids),
        "n_train": str(len(splits.train)),
        "n_val": str(len(splits.val)),
        "n_test": str(len(splits.test)),
    }
    return EvalReport(experiment, cfg, metrics, info, wall_clock_s=time.perf_counter() - t0)
