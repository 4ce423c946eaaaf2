"""User-embedding aggregators run by the user server."""

from __future__ import annotations

import numpy as np

from ..nnkit import ForwardTape, ShapeError, Tensor, masked_softmax, softmax_backward
from .config import AGGREGATORS
from .encoders import Module


def _convex(U: np.ndarray, w: np.ndarray, present: np.ndarray) -> np.ndarray:
    """sum_k w_k U_k written as U_a + sum_k w_k (U_k - U_a), with a the first present platform.

    Same value when the weights sum to 1, but equal inputs come back bit-exact.
    """
    anchor = np.take_along_axis(U, present.argmax(axis=1)[:, None, None], axis=1)
    return anchor[:, 0, :] + (w[..., None] * (U - anchor)).sum(axis=1)


class Aggregator(Module):
    """Combine K local embeddings of shape (B, K, d) into one user embedding.

    ``attention`` computes ``U @ softmax(U^T theta)`` per user, ``average`` the
    mean, ``max`` the elementwise maximum and ``concat`` the flattened (B, K*d)
    stack. An optional (B, K) ``present`` mask drops non-responding platforms:
    attention and average renormalize over the rest, max ignores them and
    concat fills their slots with zeros.
    """

    def __init__(self, variant: str, dim: int, n_platforms: int, rng: np.random.Generator, name: str = "aggregator"):
        if variant not in AGGREGATORS:
            raise ValueError(f"unknown aggregator {variant!r}")
        self.variant = variant
        self.dim = dim
        self.n_platforms = n_platforms
        self.query = Tensor(rng.uniform(-0.1, 0.1, size=dim), name=f"{name}.query")

    @property
    def out_dim(self) -> int:
        return self.dim * self.n_platforms if self.variant == "concat" else self.dim

    def check_inputs(self, U: np.ndarray) -> None:
        if U.ndim != 3:
            raise ShapeError(f"expected (batch, platforms, dim) local embeddings, got {U.shape}")
        if U.shape[1] < 1:
            raise ShapeError("need at least one local embedding")
        if U.shape[2] != self.dim:
            raise ShapeError(f"local embeddings have dim {U.shape[2]}, aggregator expects {self.dim}")

    def forward(self, U: np.ndarray, tape: ForwardTape, present: np.ndarray | None = None) -> np.ndarray:
        self.check_inputs(U)
        B, K, d = U.shape
        if present is None:
            present = np.ones((B, K), bool)
        v = self.variant
        if v == "attention":
            w = masked_softmax(U @ self.query.value, present)
            out = _convex(U, w, present)
            cache = (U, w, present)
        elif v == "average":
            w = present / np.maximum(present.sum(axis=1, keepdims=True), 1)
            out = _convex(U, w, present)
            cache = (U, w, present)
        elif v == "max":
            masked = np.where(present[..., None], U, -np.inf)
            # argmax returns the first maximum: ties go to the lowest platform index
            idx = masked.argmax(axis=1)
            out = np.take_along_axis(U, idx[:, None, :], axis=1)[:, 0, :]
            cache = (U, idx, present)
        else:
            if K != self.n_platforms:
                raise ShapeError(f"concat aggregator configured for {self.n_platforms} platforms, got {K}")
            out = (U * present[..., None]).reshape(B, K * d)
            cache = (U, None, present)
        tape.push(self, cache)
        return out

    def weights(self, tape: ForwardTape) -> np.ndarray:
        U, w, present = tape.peek(self)
        if self.variant in ("attention", "average"):
            return w
        raise ValueError(f"{self.variant} aggregator has no weights")

    def backward(self, grad_u: np.ndarray, tape: ForwardTape) -> np.ndarray:
        """Accumulate the query gradient; return per-platform gradients of shape (B, K, d)."""
        U, aux, present = tape.pop(self)
        B, K, d = U.shape
        v = self.variant
        if v == "concat":
            if grad_u.shape != (B, K * d):
                raise ShapeError(f"concat gradient must have shape {(B, K * d)}, got {grad_u.shape}")
            return grad_u.reshape(B, K, d) * present[..., None]
        if grad_u.shape != (B, d):
            raise ShapeError(f"user gradient shape {grad_u.shape} != {(B, d)}")
        if v == "average":
            return aux[..., None] * grad_u[:, None, :]
        if v == "max":
            gU = np.zeros_like(U)
            np.put_along_axis(gU, aux[:, None, :], grad_u[:, None, :], axis=1)
            return gU
        w = aux
        d_w = U @ grad_u[..., None]
        d_w = d_w[..., 0]
        d_score = softmax_backward(w, d_w)
        self.query.grads["value"] += (d_score[..., None] * U).sum(axis=(0, 1))
        return w[..., None] * grad_u[:, None, :] + d_score[..., None] * self.query.value
