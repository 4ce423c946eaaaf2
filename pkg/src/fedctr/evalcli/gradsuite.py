"""Finite-difference gradient checks for every layer and model, at 64-bit precision.

Each check builds a small instance from a seed, feeds random inputs (held in
:class:`Tensor` blocks so that input gradients are checked too) and compares
the analytic gradient of a random linear functional of the output against
central differences.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..models import Aggregator, AdModel, CtrPredictor, ModelConfig, UserModel, bce_grad, bce_loss
from ..nnkit import (
    AttentivePooling,
    Dense,
    Dropout,
    Embedding,
    ForwardTape,
    MultiHeadSelfAttention,
    PositionEmbedding,
    Tensor,
    grad_check,
)

TOLERANCE = 1e-4
# 1e-5 balances truncation error against round-off on the small gradients of
# embedding tables; 1e-6 leaves ~1e-10 absolute noise on 1e-7 gradients
EPSILON = 1e-5


def _tiny_config(**kw) -> ModelConfig:
    base = dict(
        vocab_size=12, n_ads=5, word_dim=6, heads=2, head_dim=3, query_dim=4, id_dim=4,
        max_tokens=4, max_behaviors=3, max_title_tokens=3, max_desc_tokens=4, dropout=0.2, fm_factors=3,
    )
    base.update(kw)
    return ModelConfig(**base)


def _linear_check(forward: Callable, backward: Callable, blocks, out_shape, rng, inputs=()) -> float:
    """Check d<R, forward()>/d(params, inputs) for a fixed random R."""
    R = rng.normal(size=out_shape)

    def fn(do_backward: bool) -> float:
        tape = ForwardTape()
        out = forward(tape)
        if do_backward:
            grads = backward(R, tape)
            for t, g in zip(inputs, grads):
                t.grads["value"] += g
        return float((out * R).sum())

    return grad_check(fn, list(blocks) + list(inputs), rng=rng, max_coords=40, epsilon=EPSILON)


def check_embedding(seed: int) -> float:
    rng = np.random.default_rng(seed)
    layer = Embedding(7, 4, rng)
    ids = rng.integers(0, 7, size=(3, 5))
    return _linear_check(lambda t: layer.forward(ids, t), lambda R, t: layer.backward(R, t) or (), [layer], (3, 5, 4), rng)


def check_position(seed: int) -> float:
    rng = np.random.default_rng(seed)
    layer = PositionEmbedding(6, 4, rng)
    x = Tensor(rng.normal(size=(3, 5, 4)))
    return _linear_check(lambda t: layer.forward(x.value, t), lambda R, t: [layer.backward(R, t)], [layer], (3, 5, 4), rng, [x])


def check_self_attention(seed: int) -> float:
    rng = np.random.default_rng(seed)
    layer = MultiHeadSelfAttention(5, 2, 3, rng)
    x = Tensor(rng.normal(size=(4, 6, 5)))
    mask = rng.random((4, 6)) < 0.7
    mask[:, 0] = True
    return _linear_check(
        lambda t: layer.forward(x.value, t, mask), lambda R, t: [layer.backward(R, t)], [layer], (4, 6, 6), rng, [x]
    )


def check_attentive_pooling(seed: int) -> float:
    rng = np.random.default_rng(seed)
    layer = AttentivePooling(5, 4, rng)
    x = Tensor(rng.normal(size=(4, 6, 5)))
    mask = rng.random((4, 6)) < 0.7
    mask[:, 0] = True
    return _linear_check(
        lambda t: layer.forward(x.value, t, mask), lambda R, t: [layer.backward(R, t)], [layer], (4, 5), rng, [x]
    )


def _check_dense(activation: str):
    def check(seed: int) -> float:
        rng = np.random.default_rng(seed)
        layer = Dense(5, 3, rng, activation=activation)
        x = Tensor(rng.normal(size=(4, 5)))
        return _linear_check(lambda t: layer.forward(x.value, t), lambda R, t: [layer.backward(R, t)], [layer], (4, 3), rng, [x])

    return check


def check_dropout(seed: int) -> float:
    rng = np.random.default_rng(seed)
    layer = Dropout(0.3)
    x = Tensor(rng.normal(size=(4, 5)))

    def fwd(t):
        return layer.forward(x.value, t, training=True, rng=np.random.default_rng([seed, 1]))

    return _linear_check(fwd, lambda R, t: [layer.backward(R, t)], [], (4, 5), rng, [x])


def _check_predictor(variant: str):
    def check(seed: int) -> float:
        rng = np.random.default_rng(seed)
        du, da = (6, 6) if variant == "dot" else (5, 6)
        pred = CtrPredictor(variant, du, da, rng, fm_factors=3)
        u = Tensor(rng.normal(size=(8, du)) * 0.5)
        d = Tensor(rng.normal(size=(8, da)) * 0.5)
        y = (rng.random(8) < 0.5).astype(float)

        def fn(do_backward: bool) -> float:
            tape = ForwardTape()
            y_hat = pred.forward(u.value, d.value, tape)
            if do_backward:
                gu, gd = pred.backward(bce_grad(y_hat, y), tape)
                u.grads["value"] += gu
                d.grads["value"] += gd
            return float(bce_loss(y_hat, y).sum())

        return grad_check(fn, pred.parameters() + [u, d], rng=rng, max_coords=40, epsilon=EPSILON)

    return check


def _check_aggregator(variant: str):
    def check(seed: int) -> float:
        rng = np.random.default_rng(seed)
        K, dim = 3, 4
        agg = Aggregator(variant, dim, K, rng)
        U = Tensor(rng.normal(size=(5, K, dim)))
        present = np.ones((5, K), bool)
        present[1, 2] = present[3, 0] = False
        return _linear_check(
            lambda t: agg.forward(U.value, t, present), lambda R, t: [agg.backward(R, t)],
            agg.parameters(), (5, agg.out_dim), rng, [U],
        )

    return check


def check_user_model(seed: int) -> float:
    rng = np.random.default_rng(seed)
    cfg = _tiny_config()
    model = UserModel(cfg, rng)
    tokens = rng.integers(2, cfg.vocab_size, size=(4, 3, 4))
    tokens[rng.random(tokens.shape) < 0.3] = 0
    tokens[0, 0] = 0  # one empty behavior slot
    tokens[1] = 0  # a cold-start user
    tokens[2, :, 0] = 3

    def fwd(t):
        return model.forward(tokens, t, training=True, rng=np.random.default_rng([seed, 1]))

    return _linear_check(fwd, lambda R, t: model.backward(R, t) or (), model.parameters(), (4, cfg.embed_dim), rng)


def check_ad_model(seed: int) -> float:
    rng = np.random.default_rng(seed)
    cfg = _tiny_config()
    model = AdModel(cfg, rng)
    ids = np.array([0, 3, 99, 4])  # 99 maps to the out-of-vocabulary row
    titles = rng.integers(2, cfg.vocab_size, size=(4, 3))
    descs = rng.integers(2, cfg.vocab_size, size=(4, 4))
    titles[1] = 0  # missing title view
    descs[2, 2:] = 0

    def fwd(t):
        return model.forward(ids, titles, descs, t, training=True, rng=np.random.default_rng([seed, 1]))

    return _linear_check(fwd, lambda R, t: model.backward(R, t) or (), model.parameters(), (4, cfg.embed_dim), rng)


COMPONENTS: dict[str, Callable[[int], float]] = {
    "embedding": check_embedding,
    "position": check_position,
    "self_attention": check_self_attention,
    "attentive_pooling": check_attentive_pooling,
    **{f"dense.{a}": _check_dense(a) for a in ("identity", "relu", "tanh", "sigmoid")},
    "dropout": check_dropout,
    **{f"predictor.{v}": _check_predictor(v) for v in ("dot", "dense", "outer", "fm")},
    **{f"aggregator.{v}": _check_aggregator(v) for v in ("attention", "average", "max", "concat")},
    "user_model": check_user_model,
    "ad_model": check_ad_model,
}


def run_suite(seeds=range(20), components=None) -> dict[str, float]:
    """Worst relative error per component over all ``seeds``."""
    names = list(components or COMPONENTS)
    out = {}
    for name in names:
        check = COMPONENTS[name]
        out[name] = max(check(int(s)) for s in seeds)
    return out
