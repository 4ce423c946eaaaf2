"""Per-platform behavior lookup: chronological, time-filtered, padded token arrays."""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Sequence

import numpy as np

from .records import BehaviorRecord


def pad_histories(histories: Sequence[Sequence[Sequence[int]]], max_tokens: int, max_behaviors: int) -> np.ndarray:
    """(B, M, L) int array; keeps the most recent ``max_behaviors`` items and the first ``max_tokens`` tokens."""
    kept = [list(h)[-max_behaviors:] if max_behaviors else [] for h in histories]
    M = max((len(h) for h in kept), default=0)
    L = max((min(len(t), max_tokens) for h in kept for t in h), default=0)
    out = np.zeros((len(kept), M, L), dtype=np.int64)
    for b, h in enumerate(kept):
        for m, toks in enumerate(h):
            toks = list(toks)[:max_tokens]
            out[b, m, : len(toks)] = toks
    return out


class BehaviorStore:
    """One platform's behavior table indexed by user."""

    def __init__(self, records: Sequence[BehaviorRecord], max_tokens: int, max_behaviors: int):
        self.max_tokens = max_tokens
        self.max_behaviors = max_behaviors
        by_user: dict[int, list[BehaviorRecord]] = defaultdict(list)
        for r in records:
            if len(r.tokens) == 0:
                continue
            by_user[r.user_id].append(r)
        self._times: dict[int, np.ndarray] = {}
        self._tokens: dict[int, np.ndarray] = {}
        for user, recs in by_user.items():
            recs.sort(key=lambda r: r.timestamp)
            self._times[user] = np.array([r.timestamp for r in recs], dtype=np.int64)
            L = min(max(len(r.tokens) for r in recs), max_tokens)
            arr = np.zeros((len(recs), L), dtype=np.int64)
            for i, r in enumerate(recs):
                toks = r.tokens[:max_tokens]
                arr[i, : len(toks)] = toks
            self._tokens[user] = arr

    def users(self) -> list[int]:
        return sorted(self._times)

    def history(self, user_id: int, timestamp: int | None = None, fraction: float = 1.0) -> np.ndarray:
        """Token rows of the user's behaviors strictly before ``timestamp``, most recent last."""
        times = self._times.get(user_id)
        if times is None:
            return np.zeros((0, 0), dtype=np.int64)
        n = len(times) if timestamp is None else int(np.searchsorted(times, timestamp, side="left"))
        if fraction < 1.0:
            n_keep = math.ceil(fraction * n) if n else 0
        else:
            n_keep = n
        n_keep = min(n_keep, self.max_behaviors)
        return self._tokens[user_id][n - n_keep : n]

    def query(self, user_ids, timestamps=None, fraction: float = 1.0) -> np.ndarray:
        rows = [
            self.history(int(u), None if timestamps is None else int(t), fraction)
            for u, t in zip(user_ids, timestamps if timestamps is not None else [None] * len(user_ids))
        ]
        M = max((r.shape[0] for r in rows), default=0)
        L = max((int((r != 0).sum(axis=1).max()) if r.size else 0 for r in rows), default=0)
        out = np.zeros((len(rows), M, L), dtype=np.int64)
        for b, r in enumerate(rows):
            if r.shape[0]:
                c = min(r.shape[1], L)
                out[b, : r.shape[0], :c] = r[:, :c]
        return out
