"""CTR predictors mapping (user, ad) embedding pairs to click probabilities."""

from __future__ import annotations

import numpy as np

from ..nnkit import Dense, ForwardTape, LayerParams, ShapeError, sigmoid, xavier_uniform
from .config import PREDICTORS
from .encoders import Module


class Bilinear(LayerParams):
    """score = u^T W d + b, i.e. a dense layer over the flattened outer product u d^T."""

    kind = "dense"

    def __init__(self, du: int, da: int, rng: np.random.Generator, name: str):
        super().__init__(name)
        limit = np.sqrt(6.0 / (du * da + 1))
        self.add_param("W", rng.uniform(-limit, limit, size=(du, da)))
        self.add_param("b", np.zeros(1))


class FactorizationMachine(LayerParams):
    """Second-order FM over the concatenated features x = [u; d]."""

    kind = "fm"

    def __init__(self, n: int, factors: int, rng: np.random.Generator, name: str):
        super().__init__(name)
        self.add_param("w0", np.zeros(1))
        self.add_param("w", xavier_uniform(rng, n, 1, (n,)))
        self.add_param("V", rng.normal(0.0, 0.01, size=(n, factors)))


class CtrPredictor(Module):
    def __init__(self, variant: str, user_dim: int, ad_dim: int, rng: np.random.Generator,
                 fm_factors: int = 16, name: str = "predictor"):
        if variant not in PREDICTORS:
            raise ValueError(f"unknown predictor {variant!r}")
        if variant == "dot" and user_dim != ad_dim:
            raise ShapeError(f"dot predictor needs equal dims, got {user_dim} and {ad_dim}")
        self.variant = variant
        self.user_dim, self.ad_dim = user_dim, ad_dim
        if variant == "dense":
            self.dense = Dense(user_dim + ad_dim, 1, rng, name=f"{name}.dense")
        elif variant == "outer":
            self.bilinear = Bilinear(user_dim, ad_dim, rng, name=f"{name}.outer")
        elif variant == "fm":
            self.fm = FactorizationMachine(user_dim + ad_dim, fm_factors, rng, name=f"{name}.fm")

    def logits(self, u: np.ndarray, d: np.ndarray, tape: ForwardTape) -> np.ndarray:
        if u.ndim != 2 or d.ndim != 2 or u.shape[0] != d.shape[0]:
            raise ShapeError(f"expected matching (batch, dim) inputs, got {u.shape} and {d.shape}")
        if u.shape[1] != self.user_dim or d.shape[1] != self.ad_dim:
            raise ShapeError(
                f"{self.variant} predictor expects dims ({self.user_dim}, {self.ad_dim}), got ({u.shape[1]}, {d.shape[1]})"
            )
        v = self.variant
        if v == "dot":
            s = (u * d).sum(axis=1)
            cache = (u, d)
        elif v == "dense":
            s = self.dense.forward(np.concatenate([u, d], axis=1), tape)[:, 0]
            cache = None
        elif v == "outer":
            p = self.bilinear.params
            ud = u @ p["W"]
            s = (ud * d).sum(axis=1) + p["b"][0]
            cache = (u, d)
        else:
            p = self.fm.params
            x = np.concatenate([u, d], axis=1)
            xv = x @ p["V"]
            x2v2 = (x * x) @ (p["V"] * p["V"])
            s = p["w0"][0] + x @ p["w"] + 0.5 * (xv * xv - x2v2).sum(axis=1)
            cache = (x, xv)
        tape.push(self, cache)
        return s

    def forward(self, u: np.ndarray, d: np.ndarray, tape: ForwardTape) -> np.ndarray:
        """Click probabilities y_hat = sigmoid(score(u, d)) of shape (B,)."""
        s = self.logits(u, d, tape)
        y = sigmoid(s)
        tape.push(self, y)
        return y

    def backward(self, grad_yhat: np.ndarray, tape: ForwardTape):
        y = tape.pop(self)
        return self.backward_logits(grad_yhat * y * (1.0 - y), tape)

    def backward_from_logit_grad(self, grad_logit: np.ndarray, tape: ForwardTape):
        """Backward when the caller already holds d loss / d score (skips the sigmoid)."""
        tape.pop(self)
        return self.backward_logits(grad_logit, tape)

    def backward_logits(self, g: np.ndarray, tape: ForwardTape):
        cache = tape.pop(self)
        v = self.variant
        if v == "dot":
            u, d = cache
            return g[:, None] * d, g[:, None] * u
        if v == "dense":
            gx = self.dense.backward(g[:, None], tape)
            return gx[:, : self.user_dim], gx[:, self.user_dim:]
        if v == "outer":
            u, d = cache
            p, gr = self.bilinear.params, self.bilinear.grads
            gr["W"] += (g[:, None] * u).T @ d
            gr["b"] += g.sum()
            return g[:, None] * (d @ p["W"].T), g[:, None] * (u @ p["W"])
        x, xv = cache
        p, gr = self.fm.params, self.fm.grads
        V = p["V"]
        gr["w0"] += g.sum()
        gr["w"] += g @ x
        # d/dV_if: x_i (xV)_f - V_if x_i^2
        gr["V"] += (g[:, None] * x).T @ xv - V * ((g[:, None] * x * x).sum(axis=0)[:, None])
        gx = g[:, None] * (p["w"] + xv @ V.T - x * (V * V).sum(axis=1))
        return gx[:, : self.user_dim], gx[:, self.user_dim:]
