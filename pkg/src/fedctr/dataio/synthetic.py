"""Synthetic multi-platform behavior and impression data with planted topic structure.

Each user has a sparse interest distribution over topics. A platform only
"sees" its visible topics: a behavior's topic is drawn from the user's
interests restricted to that set (or uniformly from it with probability
``platform_noise``), and its words come mostly from that topic's word list.
Clicks are Bernoulli(sigmoid(beta * T * <interests, ad topic> + bias)) with
the bias solved so that positives and negatives are balanced in expectation.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .records import AdRecord, BehaviorRecord, Dataset, Impressions
from .vocab import Vocab

DAY = 86400


class SpecError(ValueError):
    pass


@dataclass
class SyntheticSpec:
    n_users: int = 2000
    n_platforms: int = 2
    n_topics: int = 20
    vocab_size: int = 5000
    n_common_words: int = 100
    # topics visible on each platform; None = disjoint contiguous blocks
    visibility: list[list[int]] | None = None
    # per-platform probability that a behavior ignores the user's interests
    platform_noise: list[float] | None = None
    behaviors_per_user: float = 30.0
    words_per_behavior: float = 5.0
    topic_word_prob: float = 0.8
    n_ads: int = 400
    title_words: float = 4.0
    desc_words: float = 15.0
    impressions_per_user: float = 10.0
    interests_per_user: int = 3
    ad_targeting: float = 0.5
    beta: float = 1.0
    span_days: int = 90
    seed: int = 0

    def resolved_visibility(self) -> list[list[int]]:
        if self.visibility is not None:
            return [sorted(int(t) for t in v) for v in self.visibility]
        blocks = np.array_split(np.arange(self.n_topics), self.n_platforms)
        return [b.tolist() for b in blocks]

    def resolved_noise(self) -> list[float]:
        if self.platform_noise is None:
            return [0.0] * self.n_platforms
        return [float(x) for x in self.platform_noise]

    @property
    def words_per_topic(self) -> int:
        return (self.vocab_size - 2 - self.n_common_words) // self.n_topics

    def validate(self) -> "SyntheticSpec":
        vis = self.resolved_visibility()
        if len(vis) != self.n_platforms:
            raise SpecError(f"{len(vis)} visibility masks for {self.n_platforms} platforms")
        if any(len(v) == 0 for v in vis):
            raise SpecError("every platform must see at least one topic")
        seen = set().union(*map(set, vis))
        if any(t < 0 or t >= self.n_topics for t in seen):
            raise SpecError("visibility mask names a topic outside [0, n_topics)")
        missing = sorted(set(range(self.n_topics)) - seen)
        if missing:
            raise SpecError(f"topics {missing} are visible on no platform")
        noise = self.resolved_noise()
        if len(noise) != self.n_platforms or any(not 0.0 <= x <= 1.0 for x in noise):
            raise SpecError("platform_noise needs one probability per platform")
        if self.beta < 0:
            raise SpecError("beta must be >= 0")
        if self.words_per_topic < 1:
            raise SpecError("vocab_size too small for the topic count")
        if self.n_common_words < 1 or self.n_users < 1 or self.n_ads < self.n_topics:
            raise SpecError("need >= 1 common word, >= 1 user and at least one ad per topic")
        if not 1 <= self.interests_per_user <= self.n_topics:
            raise SpecError("interests_per_user must be in [1, n_topics]")
        for key in ("behaviors_per_user", "words_per_behavior", "title_words", "desc_words"):
            if getattr(self, key) < 1:
                raise SpecError(f"{key} must be >= 1")
        return self

    def echo(self) -> dict[str, str]:
        out = {}
        for k, v in asdict(self).items():
            if k == "visibility":
                v = ";".join(",".join(map(str, b)) for b in self.resolved_visibility())
            elif k == "platform_noise":
                v = ",".join(repr(x) for x in self.resolved_noise())
            out[f"spec.{k}"] = repr(v) if isinstance(v, float) else str(v)
        return out


def _lengths(rng, mean: float, n: int) -> np.ndarray:
    # 1 + Poisson(mean - 1): never empty, exact mean
    return 1 + rng.poisson(mean - 1.0, size=n)


def _words(rng, spec: SyntheticSpec, topics: np.ndarray, lengths: np.ndarray) -> list[np.ndarray]:
    """Word indices in generator space: [0, C) common words, then T blocks of topic words."""
    total = int(lengths.sum())
    word_topic = np.repeat(topics, lengths)
    from_topic = rng.random(total) < spec.topic_word_prob
    W, C = spec.words_per_topic, spec.n_common_words
    topic_words = C + word_topic * W + rng.integers(0, W, size=total)
    common = rng.integers(0, C, size=total)
    words = np.where(from_topic, topic_words, common)
    return np.split(words, np.cumsum(lengths)[:-1])


def _word_strings(spec: SyntheticSpec) -> list[str]:
    W, C = spec.words_per_topic, spec.n_common_words
    names = [f"c{j:04d}" for j in range(C)]
    for t in range(spec.n_topics):
        names.extend(f"t{t:03d}w{j:04d}" for j in range(W))
    return names


def calibrate_bias(logits_wo_bias: np.ndarray, target: float = 0.5) -> float:
    """Bias b with mean(sigmoid(s + b)) == target."""
    if np.ptp(logits_wo_bias) == 0:
        return float(np.log(target / (1 - target)) - logits_wo_bias[0])
    lo, hi = -logits_wo_bias.max() - 50.0, -logits_wo_bias.min() + 50.0
    return float(brentq(lambda b: expit(logits_wo_bias + b).mean() - target, lo, hi, xtol=1e-12))


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    N, T, K = spec.n_users, spec.n_topics, spec.n_platforms
    span = spec.span_days * DAY

    interests = np.zeros((N, T))
    for u in range(N):
        chosen = rng.choice(T, size=spec.interests_per_user, replace=False)
        interests[u, chosen] = rng.dirichlet(np.ones(spec.interests_per_user))

    word_counts: Counter = Counter()
    raw_behaviors: dict[int, tuple] = {}
    for k, (visible, noise) in enumerate(zip(spec.resolved_visibility(), spec.resolved_noise()), start=1):
        visible = np.asarray(visible)
        n_beh = _lengths(rng, spec.behaviors_per_user, N)
        users = np.repeat(np.arange(N), n_beh)
        restricted = interests[:, visible]
        mass = restricted.sum(axis=1, keepdims=True)
        probs = np.where(mass > 0, restricted / np.where(mass > 0, mass, 1.0), 1.0 / len(visible))
        cdf = np.cumsum(probs, axis=1)
        draw = rng.random(len(users))
        idx = np.minimum((draw[:, None] > cdf[users]).sum(axis=1), len(visible) - 1)
        noisy = rng.random(len(users)) < noise
        idx = np.where(noisy, rng.integers(0, len(visible), size=len(users)), idx)
        topics = visible[idx]
        lengths = _lengths(rng, spec.words_per_behavior, len(users))
        words = _words(rng, spec, topics, lengths)
        times = rng.integers(0, int(0.8 * span), size=len(users))
        raw_behaviors[k] = (users, times, words)
        for w in words:
            word_counts.update(w.tolist())

    ad_topics = rng.permutation(np.arange(spec.n_ads) % T)
    titles = _words(rng, spec, ad_topics, _lengths(rng, spec.title_words, spec.n_ads))
    descs = _words(rng, spec, ad_topics, _lengths(rng, spec.desc_words, spec.n_ads))
    for w in titles + descs:
        word_counts.update(w.tolist())

    n_imp = rng.poisson(spec.impressions_per_user, size=N)
    imp_users = np.repeat(np.arange(N), n_imp)
    ads_by_topic = [np.flatnonzero(ad_topics == t) for t in range(T)]
    targeted = rng.random(len(imp_users)) < spec.ad_targeting
    cdf = np.cumsum(interests, axis=1)
    t_draw = np.minimum((rng.random(len(imp_users))[:, None] > cdf[imp_users]).sum(axis=1), T - 1)
    pick = rng.random(len(imp_users))
    targeted_ads = np.array([ads_by_topic[t][int(p * len(ads_by_topic[t]))] for t, p in zip(t_draw, pick)], dtype=np.int64)
    random_ads = rng.integers(0, spec.n_ads, size=len(imp_users))
    imp_ads = np.where(targeted, targeted_ads, random_ads)
    imp_times = rng.integers(int(0.3 * span), span, size=len(imp_users))
    affinity = T * interests[imp_users, ad_topics[imp_ads]]
    score = spec.beta * affinity
    bias = calibrate_bias(score) if len(score) else 0.0
    labels = (rng.random(len(imp_users)) < expit(score + bias)).astype(np.int64)

    names = _word_strings(spec)
    vocab = Vocab.build(Counter({names[w]: c for w, c in word_counts.items()}))
    to_id = np.zeros(len(names), dtype=np.int64)
    for w, name in enumerate(names):
        to_id[w] = vocab.stoi.get(name, 1)

    behaviors: dict[int, list[BehaviorRecord]] = {}
    for k, (users, times, words) in raw_behaviors.items():
        recs = [
            BehaviorRecord(k, int(u), int(t), tuple(to_id[w].tolist()))
            for u, t, w in zip(users, times, words)
        ]
        recs.sort(key=lambda r: (r.user_id, r.timestamp))
        behaviors[k] = recs
    ads = [
        AdRecord(a, tuple(to_id[titles[a]].tolist()), tuple(to_id[descs[a]].tolist()))
        for a in range(spec.n_ads)
    ]
    order = np.lexsort((imp_users, imp_times))
    impressions = Impressions(imp_users[order], imp_ads[order], labels[order], imp_times[order])

    ds = Dataset(
        vocab=vocab, ads=ads, impressions=impressions, behaviors=behaviors, n_users=N,
        truth={
            "interests": interests,
            "ad_topics": ad_topics,
            "click_logit": (score + bias)[order],
            "bias": bias,
        },
    )
    ds.meta = {"format_version": "1", "seed": str(spec.seed), **ds_counts(ds), **spec.echo()}
    return ds


def ds_counts(ds: Dataset) -> dict[str, str]:
    return {f"count.{k}": str(v) for k, v in ds.counts().items()}
