from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PrivacyConfig:
    """Laplace scales for local (per-platform) and aggregated embeddings; 0 disables a mechanism."""

    lambda_ldp: float = 0.01
    lambda_dp: float = 0.005
    clip_norm: float | None = None
    seed: int = 0

    def validate(self) -> "PrivacyConfig":
        if self.lambda_ldp < 0 or self.lambda_dp < 0:
            raise ValueError("Laplace scales must be >= 0")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0")
        return self


def laplace_noise(shape, scale: float, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. Laplace(0, scale) by inverse CDF of a uniform stream."""
    u = rng.random(shape) - 0.5
    tail = np.maximum(1.0 - 2.0 * np.abs(u), np.finfo(np.float64).tiny)
    return -scale * np.sign(u) * np.log(tail)


def laplace_perturb(x: np.ndarray, scale: float, rng: np.random.Generator) -> np.ndarray:
    if scale < 0:
        raise ValueError(f"Laplace scale must be >= 0, got {scale}")
    if scale == 0:
        return x
    return x + laplace_noise(np.shape(x), scale, rng)


def clip_l2(x: np.ndarray, bound: float) -> np.ndarray:
    """Scale each row (last axis) down to L2 norm ``bound`` if it exceeds it."""
    if bound <= 0:
        raise ValueError(f"clip bound must be > 0, got {bound}")
    x = np.asarray(x, dtype=np.float64)
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    factor = np.where(norm > bound, bound / np.where(norm > 0, norm, 1.0), 1.0)
    return x * factor


def privatize(x: np.ndarray, scale: float, rng: np.random.Generator, clip_norm: float | None = None) -> np.ndarray:
    """Optional clipping followed by Laplace noise; identity when both are off.

    Backward passes treat the result as x itself: clipping and noise are
    constants with respect to the gradient.
    """
    if clip_norm is not None:
        x = clip_l2(x, clip_norm)
    return laplace_perturb(x, scale, rng)
