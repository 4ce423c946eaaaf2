"""Parameter update rules. Both zero the gradient accumulators after stepping."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .layers import LayerParams


class SGD:
    def __init__(self, params: Iterable[LayerParams], lr: float = 1e-3):
        self.params = list(params)
        self.lr = lr

    def step(self) -> None:
        for p in self.params:
            for k, v in p.params.items():
                v -= self.lr * p.grads[k]
            p.zero_grads()


class Adam:
    def __init__(self, params: Iterable[LayerParams], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [{k: np.zeros_like(v) for k, v in p.params.items()} for p in self.params]
        self.v = [{k: np.zeros_like(v) for k, v in p.params.items()} for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        step = self.lr / c1
        inv_c2 = 1.0 / c2
        for p, m, v in zip(self.params, self.m, self.v):
            for k, value in p.params.items():
                g = p.grads[k]
                mk, vk = m[k], v[k]
                mk *= self.beta1
                mk += (1.0 - self.beta1) * g
                g *= g
                vk *= self.beta2
                vk += (1.0 - self.beta2) * g
                # g is spent; reuse it as scratch for the denominator
                np.multiply(vk, inv_c2, out=g)
                np.sqrt(g, out=g)
                g += self.eps
                np.divide(mk, g, out=g)
                g *= step
                value -= g
            p.zero_grads()


def make_optimizer(name: str, params: Iterable[LayerParams], lr: float):
    if name == "sgd":
        return SGD(params, lr)
    if name == "adam":
        return Adam(params, lr)
    raise ValueError(f"unknown optimizer {name!r}")


def apply_sgd(params: Iterable[LayerParams], eta: float) -> None:
    SGD(params, eta).step()
