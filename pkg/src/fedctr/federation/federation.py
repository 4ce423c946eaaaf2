"""Wiring of a complete federation and the training/evaluation loops driven from the ad platform."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..dataio.history import BehaviorStore
from ..dataio.records import Dataset, Impressions
from ..evalcli.metrics import auc, average_precision
from ..models import ModelConfig, build_models, make_optimizer
from ..models.checkpoint import load_module, save_module
from .messages import NO_TIMESTAMP, AggregatedEmbedding, LocalEmbedding
from .parties import AdPlatform, BehaviorPlatform, UserServer
from .transport import AD_PLATFORM, USER_SERVER, InProcessTransport, platform_id


@dataclass
class FedConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    # behavior platforms taking part, in aggregation order; None = all in the dataset
    platforms: list[int] | None = None
    lambda_ldp: float = 0.01
    lambda_dp: float = 0.005
    clip_norm: float | None = None
    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 30
    eval_batch_size: int = 500
    seed: int = 0
    failure_policy: str = "abort"
    behavior_fraction: float = 1.0
    cache_capacity: int = 64


class Federation:
    """One ad platform, one user server and K behavior platforms on a shared transport."""

    def __init__(self, dataset: Dataset, cfg: FedConfig, transport: InProcessTransport | None = None):
        self.cfg = cfg
        platforms = list(cfg.platforms or dataset.platform_ids)
        unknown = [p for p in platforms if p not in dataset.behaviors]
        if unknown:
            raise ValueError(f"platforms {unknown} not in dataset (has {dataset.platform_ids})")
        if not 0.0 < cfg.behavior_fraction <= 1.0:
            raise ValueError("behavior_fraction must be in (0, 1]")
        self.platform_ids = platforms
        mcfg = copy.copy(cfg.model)
        mcfg.n_platforms = len(platforms)
        # embedding tables are sized by the data, not by the config defaults
        mcfg.vocab_size = len(dataset.vocab)
        mcfg.n_ads = len(dataset.ads)
        mcfg.validate()
        self.model_cfg = mcfg
        self.transport = transport or InProcessTransport()
        users, ad, agg, pred = build_models(mcfg, cfg.seed, platforms)

        self.platforms: dict[int, BehaviorPlatform] = {}
        for pid, model in zip(platforms, users):
            store = BehaviorStore(dataset.behaviors[pid], mcfg.max_tokens, mcfg.max_behaviors)
            bp = BehaviorPlatform(
                pid, model, store, make_optimizer(cfg.optimizer, model.parameters(), cfg.lr),
                lambda_ldp=cfg.lambda_ldp, clip_norm=cfg.clip_norm, seed=cfg.seed,
                behavior_fraction=cfg.behavior_fraction, cache_capacity=cfg.cache_capacity,
            )
            self.platforms[pid] = bp
            self.transport.register(platform_id(pid), bp)
        self.server = UserServer(
            agg, make_optimizer(cfg.optimizer, agg.parameters(), cfg.lr), platforms, self.transport,
            lambda_dp=cfg.lambda_dp, clip_norm=cfg.clip_norm, seed=cfg.seed,
            failure_policy=cfg.failure_policy, cache_capacity=cfg.cache_capacity,
        )
        self.transport.register(USER_SERVER, self.server)
        self.ad_platform = AdPlatform(
            ad, pred, make_optimizer(cfg.optimizer, ad.parameters() + pred.parameters(), cfg.lr),
            dataset.ads, self.transport, seed=cfg.seed,
            max_title_tokens=mcfg.max_title_tokens, max_desc_tokens=mcfg.max_desc_tokens,
        )
        self.transport.register(AD_PLATFORM, self.ad_platform)

    # -- models by owner -------------------------------------------------
    def modules(self) -> dict[str, object]:
        out = {f"platform_{i}": bp.model for i, bp in self.platforms.items()}
        out["user_server"] = self.server.aggregator
        out["ad_model"] = self.ad_platform.ad_model
        out["predictor"] = self.ad_platform.predictor
        return out

    def parameters(self):
        return [p for m in self.modules().values() for p in m.parameters()]

    def snapshot(self) -> dict[str, np.ndarray]:
        return {f"{owner}/{k}": v.copy() for owner, m in self.modules().items() for k, v in m.named_blocks().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for owner, m in self.modules().items():
            for k, v in m.named_blocks().items():
                v[...] = snap[f"{owner}/{k}"]

    def save_checkpoint(self, directory) -> None:
        from pathlib import Path

        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for owner, m in self.modules().items():
            save_module(d / f"{owner}.npz", m)

    def load_checkpoint(self, directory) -> None:
        from pathlib import Path

        for owner, m in self.modules().items():
            load_module(Path(directory) / f"{owner}.npz", m)

    # -- protocol entry points ------------------------------------------
    def infer_ctr(self, user_id: int, candidates, timestamp: int | None = None) -> np.ndarray:
        ids = [c if isinstance(c, (int, np.integer)) else c.ad_id for c in candidates]
        return self.ad_platform.infer_ctr(user_id, ids, timestamp)

    def train_step(self, batch: Impressions) -> float:
        return self.ad_platform.train_step(batch)

    def predict(self, impressions: Impressions) -> np.ndarray:
        out = []
        bs = self.cfg.eval_batch_size
        for start in range(0, len(impressions), bs):
            sl = slice(start, start + bs)
            out.append(self.ad_platform.score(impressions.user_ids[sl], impressions.ad_ids[sl], impressions.timestamps[sl]))
        return np.concatenate(out) if out else np.zeros(0)

    def evaluate(self, impressions: Impressions) -> dict[str, float]:
        scores = self.predict(impressions)
        return {"auc": auc(scores, impressions.labels), "ap": average_precision(scores, impressions.labels)}

    def train_epochs(self, train: Impressions, epochs: int, val: Impressions | None = None,
                     eval_hook=None, keep_best: bool = True) -> list[dict]:
        """Seeded shuffled mini-batch training; with ``val`` the best-AUC parameters are restored at the end."""
        if len(train) == 0:
            raise ValueError("empty training set")
        rng = np.random.default_rng([self.cfg.seed, 7])
        history: list[dict] = []
        best_auc, best = -np.inf, None
        bs = self.cfg.batch_size
        for epoch in range(1, epochs + 1):
            order = rng.permutation(len(train))
            losses = [self.train_step(train.subset(order[s : s + bs])) for s in range(0, len(order), bs)]
            record = {"epoch": epoch, "loss": float(np.mean(losses)), "losses": losses}
            if val is not None and len(val):
                record.update({f"val_{k}": v for k, v in self.evaluate(val).items()})
                if keep_best and record["val_auc"] > best_auc:
                    best_auc, best = record["val_auc"], self.snapshot()
            if eval_hook is not None:
                eval_hook(self, record)
            history.append(record)
        if best is not None:
            self.restore(best)
        return history

    # -- what an observer on the wire sees ------------------------------
    def observe_embeddings(self, user_ids, timestamps=None, batch_size: int = 500):
        """Noised local embeddings (per platform) and aggregated embeddings exactly as transmitted at inference."""
        user_ids = np.asarray(user_ids, dtype=np.int64)
        if timestamps is None:
            timestamps = np.full(len(user_ids), NO_TIMESTAMP, dtype=np.int64)
        local = {i: [] for i in self.platform_ids}
        agg = []

        def tap(src, dst, msg):
            if isinstance(msg, LocalEmbedding):
                local[msg.platform].append(msg.embeddings)
            elif isinstance(msg, AggregatedEmbedding):
                agg.append(msg.embeddings)

        self.transport.taps.append(tap)
        try:
            ap = self.ad_platform
            for s in range(0, len(user_ids), batch_size):
                uid, ts = user_ids[s : s + batch_size], timestamps[s : s + batch_size]
                ap.fetch_user_embeddings(uid, ts, False, ap._next_infer_id(uid, ts, []))
        finally:
            self.transport.taps.remove(tap)
        return {i: np.concatenate(v) for i, v in local.items() if v}, np.concatenate(agg)
