from __future__ import annotations

import numpy as np

from .records import Impressions


def chronological_split(impressions: Impressions, test_window: int, val_fraction: float = 0.1, seed: int = 0):
    """(train, val, test): test holds impressions in the final ``test_window`` seconds,
    val a seeded random ``val_fraction`` of the rest."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must be in (0, 1)")
    if test_window < 0:
        raise ValueError("test_window must be >= 0")
    ts = impressions.timestamps
    if len(ts) == 0:
        raise ValueError("no impressions to split")
    span = int(ts.max() - ts.min())
    if test_window > span:
        raise ValueError(f"test window {test_window}s is longer than the dataset span {span}s")
    is_test = ts > ts.max() - test_window
    rest = np.flatnonzero(~is_test)
    rng = np.random.default_rng(seed)
    n_val = int(round(len(rest) * val_fraction))
    val_idx = np.sort(rng.choice(rest, size=n_val, replace=False))
    train_idx = np.setdiff1d(rest, val_idx)
    return impressions.subset(train_idx), impressions.subset(val_idx), impressions.subset(np.flatnonzero(is_test))


def subsample(impressions: Impressions, fraction: float, seed: int) -> Impressions:
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    if fraction == 1.0:
        return impressions
    rng = np.random.default_rng(seed)
    n = max(1, int(round(len(impressions) * fraction)))
    return impressions.subset(np.sort(rng.choice(len(impressions), size=n, replace=False)))
