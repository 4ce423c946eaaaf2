from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .vocab import Vocab


@dataclass(frozen=True)
class BehaviorRecord:
    platform: int
    user_id: int
    timestamp: int
    tokens: tuple[int, ...]


@dataclass(frozen=True)
class AdRecord:
    ad_id: int
    title: tuple[int, ...]
    description: tuple[int, ...] = ()


@dataclass(frozen=True)
class TrainingSample:
    """At ``timestamp`` ad ``ad_id`` was shown to ``user_id``; ``label`` is 1 for a click."""

    user_id: int
    ad_id: int
    label: int
    timestamp: int


class Impressions:
    """Column store of training samples."""

    def __init__(self, user_ids, ad_ids, labels, timestamps):
        self.user_ids = np.asarray(user_ids, dtype=np.int64)
        self.ad_ids = np.asarray(ad_ids, dtype=np.int64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.timestamps = np.asarray(timestamps, dtype=np.int64)
        n = len(self.user_ids)
        if not (len(self.ad_ids) == len(self.labels) == len(self.timestamps) == n):
            raise ValueError("impression columns have different lengths")
        if n and not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValueError("labels must be binary")

    @classmethod
    def from_samples(cls, samples) -> "Impressions":
        samples = list(samples)
        return cls(
            [s.user_id for s in samples], [s.ad_id for s in samples],
            [s.label for s in samples], [s.timestamp for s in samples],
        )

    def __len__(self) -> int:
        return len(self.user_ids)

    def __getitem__(self, i: int) -> TrainingSample:
        return TrainingSample(int(self.user_ids[i]), int(self.ad_ids[i]), int(self.labels[i]), int(self.timestamps[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def subset(self, idx) -> "Impressions":
        idx = np.asarray(idx, dtype=np.int64)
        return Impressions(self.user_ids[idx], self.ad_ids[idx], self.labels[idx], self.timestamps[idx])

    def concat(self, other: "Impressions") -> "Impressions":
        return Impressions(
            np.concatenate([self.user_ids, other.user_ids]), np.concatenate([self.ad_ids, other.ad_ids]),
            np.concatenate([self.labels, other.labels]), np.concatenate([self.timestamps, other.timestamps]),
        )


@dataclass
class Dataset:
    vocab: Vocab
    ads: list[AdRecord]
    impressions: Impressions
    # platform id -> that platform's behavior log; never merged across platforms
    behaviors: dict[int, list[BehaviorRecord]]
    n_users: int
    meta: dict[str, str] = field(default_factory=dict)
    truth: dict | None = None

    @property
    def platform_ids(self) -> list[int]:
        return sorted(self.behaviors)

    @property
    def n_platforms(self) -> int:
        return len(self.behaviors)

    def counts(self) -> dict[str, int]:
        out = {
            "users": self.n_users,
            "ads": len(self.ads),
            "impressions": len(self.impressions),
            "clicks": int(self.impressions.labels.sum()),
            "platforms": self.n_platforms,
            "vocab": len(self.vocab),
        }
        for p, recs in sorted(self.behaviors.items()):
            out[f"behaviors_platform_{p}"] = len(recs)
        return out
