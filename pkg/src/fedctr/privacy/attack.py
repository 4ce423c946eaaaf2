"""Behavior-inference attack on user embeddings.

For a target user the attacker sees an embedding and ten candidate behaviors:
one from the user's history and nine from other users. Candidates are scored
by dot product with the embedding; the per-instance AUC is the fraction of
negatives scored below the positive (ties count one half).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

N_NEGATIVES = 9


@dataclass(frozen=True)
class AttackInstance:
    user_id: int
    platform: int
    target: np.ndarray
    candidates: tuple[tuple[int, ...], ...]
    positive_index: int

    def __post_init__(self):
        if len(self.candidates) != N_NEGATIVES + 1:
            raise ValueError(f"an attack instance needs exactly {N_NEGATIVES + 1} candidates")
        if not 0 <= self.positive_index < len(self.candidates):
            raise ValueError("positive index out of range")


def instance_auc(scores: np.ndarray, positive_index: int) -> float:
    pos = scores[positive_index]
    neg = np.delete(scores, positive_index)
    return float(((neg < pos).sum() + 0.5 * (neg == pos).sum()) / len(neg))


def run_attack(encoder: Callable[[Sequence[Sequence[int]]], np.ndarray], instances: Sequence[AttackInstance]) -> float:
    """Mean attack AUC. ``encoder`` maps a list of token sequences to a (10, d) matrix."""
    if not instances:
        raise ValueError("no attack instances")
    aucs = []
    for inst in instances:
        reps = np.asarray(encoder(inst.candidates))
        if reps.shape != (len(inst.candidates), inst.target.shape[-1]):
            raise ValueError(
                f"encoder output shape {reps.shape} does not match target dim {inst.target.shape[-1]}"
            )
        aucs.append(instance_auc(reps @ inst.target, inst.positive_index))
    return float(np.mean(aucs))


def sample_candidates(histories: dict[int, list[tuple[int, ...]]], n_instances: int, rng: np.random.Generator):
    """Draw (user, positive behavior, nine negatives, positive index) tuples from one platform's logs.

    Negatives are behaviors of other users whose token sequence does not occur
    in the target user's history.
    """
    users = sorted(u for u, h in histories.items() if h)
    if len(users) < 2:
        raise ValueError("need at least two users with behaviors")
    pool = [(u, b) for u in users for b in histories[u]]
    out = []
    for _ in range(n_instances):
        user = users[int(rng.integers(len(users)))]
        own = set(histories[user])
        positive = histories[user][int(rng.integers(len(histories[user])))]
        negatives: list[tuple[int, ...]] = []
        while len(negatives) < N_NEGATIVES:
            u, b = pool[int(rng.integers(len(pool)))]
            if u != user and b not in own:
                negatives.append(b)
        pos_idx = int(rng.integers(N_NEGATIVES + 1))
        cands = negatives[:pos_idx] + [positive] + negatives[pos_idx:]
        out.append((user, tuple(cands), pos_idx))
    return out
