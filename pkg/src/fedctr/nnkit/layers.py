"""Dense numpy layers with hand-written forward and backward passes.

Every layer works on arrays with arbitrary leading batch dimensions. Sequence
layers take an optional boolean ``mask`` of shape ``(..., L)`` marking valid
positions; masked positions get exactly zero attention weight, and a sequence
with no valid positions pools to the zero vector.
"""

from __future__ import annotations

import math

import numpy as np

from .tape import ForwardTape

DTYPE = np.float64

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid")


class ShapeError(ValueError):
    pass


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out)).astype(DTYPE)



def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=DTYPE)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def masked_softmax(scores: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    """Softmax over the last axis; masked entries get weight 0, all-masked rows are all zero."""
    if mask is not None:
        scores = scores + np.where(mask, 0.0, -np.inf)
    # one global shift is much cheaper than per-row maxima on small trailing axes;
    # rows pushed near or below the underflow range by it are redone with their own maximum
    top = scores.max() if scores.size else 0.0
    shift = top if np.isfinite(top) else 0.0
    e = np.exp(scores - shift)
    z = e.sum(axis=-1, keepdims=True)
    low = z < 1e-200
    if low.any():
        rows = low[..., 0]
        sub = scores[rows]
        m = sub.max(axis=-1, keepdims=True)
        m[~np.isfinite(m)] = 0.0
        e[rows] = np.exp(sub - m)
        z = e.sum(axis=-1, keepdims=True)
        z[z == 0.0] = 1.0
    e /= z
    return e


def softmax_backward(weights: np.ndarray, grad_weights: np.ndarray) -> np.ndarray:
    return weights * (grad_weights - (grad_weights * weights).sum(axis=-1, keepdims=True))


class LayerParams:
    """Named parameter blocks plus gradient accumulators of identical shape."""

    kind = "generic"

    def __init__(self, name: str = ""):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def add_param(self, key: str, value: np.ndarray) -> np.ndarray:
        value = np.ascontiguousarray(value, dtype=DTYPE)
        self.params[key] = value
        self.grads[key] = np.zeros_like(value)
        return value

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def named_blocks(self) -> dict[str, np.ndarray]:
        return {f"{self.name}.{k}" if self.name else k: v for k, v in self.params.items()}

    def __repr__(self) -> str:
        shapes = ", ".join(f"{k}{tuple(v.shape)}" for k, v in self.params.items())
        return f"{type(self).__name__}({self.name!r}: {shapes})"


class Tensor(LayerParams):
    """A plain array treated as a parameter block (inputs under gradient check, learned vectors)."""

    kind = "vector"

    def __init__(self, value: np.ndarray, name: str = ""):
        super().__init__(name)
        self.add_param("value", np.array(value, dtype=DTYPE))

    @property
    def value(self) -> np.ndarray:
        return self.params["value"]

    @property
    def grad(self) -> np.ndarray:
        return self.grads["value"]


class Embedding(LayerParams):
    kind = "embedding"

    def __init__(self, num: int, dim: int, rng: np.random.Generator, name: str = "embedding", init_scale: float = 0.1):
        super().__init__(name)
        self.num, self.dim = num, dim
        self.add_param("table", rng.uniform(-init_scale, init_scale, size=(num, dim)))

    def forward(self, ids, tape: ForwardTape) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size:
            bad = np.flatnonzero((ids.ravel() < 0) | (ids.ravel() >= self.num))
            if bad.size:
                i = int(bad[0])
                raise IndexError(
                    f"token id {int(ids.ravel()[i])} at flat index {i} out of range for table with {self.num} rows"
                )
        tape.push(self, ids)
        return self.params["table"][ids]

    def backward(self, grad: np.ndarray, tape: ForwardTape) -> None:
        ids = tape.pop(self)
        if ids.size:
            np.add.at(self.grads["table"], ids.ravel(), grad.reshape(-1, self.dim))


class PositionEmbedding(LayerParams):
    kind = "position-embedding"

    def __init__(self, max_len: int, dim: int, rng: np.random.Generator, name: str = "position", init_scale: float = 0.1):
        super().__init__(name)
        self.max_len, self.dim = max_len, dim
        self.add_param("table", rng.uniform(-init_scale, init_scale, size=(max_len, dim)))

    def forward(self, x: np.ndarray, tape: ForwardTape) -> np.ndarray:
        L, d = x.shape[-2], x.shape[-1]
        if L > self.max_len:
            raise ShapeError(f"sequence length {L} exceeds the {self.max_len} supported positions")
        if d != self.dim:
            raise ShapeError(f"input dim {d} != position table dim {self.dim}")
        tape.push(self, L)
        return x + self.params["table"][:L]

    def backward(self, grad: np.ndarray, tape: ForwardTape) -> np.ndarray:
        L = tape.pop(self)
        self.grads["table"][:L] += grad.reshape(-1, L, self.dim).sum(axis=0)
        return grad


class Dense(LayerParams):
    kind = "dense"

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, activation: str = "identity", name: str = "dense"):
        super().__init__(name)
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.d_in, self.d_out, self.activation = d_in, d_out, activation
        self.add_param("W", xavier_uniform(rng, d_in, d_out))
        self.add_param("b", np.zeros(d_out))

    def forward(self, x: np.ndarray, tape: ForwardTape) -> np.ndarray:
        W = self.params["W"]
        if x.shape[-1] != W.shape[0]:
            raise ShapeError(f"dense input shape {x.shape} incompatible with weight shape {W.shape}")
        z = x @ W + self.params["b"]
        act = self.activation
        if act == "identity":
            y = z
        elif act == "relu":
            y = np.maximum(z, 0.0)
        elif act == "tanh":
            y = np.tanh(z)
        else:
            y = sigmoid(z)
        tape.push(self, (x, z, y))
        return y

    def backward(self, grad: np.ndarray, tape: ForwardTape) -> np.ndarray:
        x, z, y = tape.pop(self)
        act = self.activation
        if act == "relu":
            grad = grad * (z > 0)
        elif act == "tanh":
            grad = grad * (1.0 - y * y)
        elif act == "sigmoid":
            grad = grad * y * (1.0 - y)
        x2 = x.reshape(-1, self.d_in)
        g2 = grad.reshape(-1, self.d_out)
        self.grads["W"] += x2.T @ g2
        self.grads["b"] += g2.sum(axis=0)
        return grad @ self.params["W"].T


class MultiHeadSelfAttention(LayerParams):
    """Scaled dot-product self-attention with per-head projections and concatenated heads."""

    kind = "multi-head-self-attention"

    def __init__(self, d_in: int, heads: int, head_dim: int, rng: np.random.Generator, name: str = "self_attention"):
        super().__init__(name)
        self.d_in, self.heads, self.head_dim = d_in, heads, head_dim
        d_out = heads * head_dim
        self.d_out = d_out
        for key in ("Wq", "Wk", "Wv"):
            self.add_param(key, xavier_uniform(rng, d_in, d_out))

    def _split(self, t: np.ndarray) -> np.ndarray:
        # (..., L, h*dk) -> (..., h, L, dk)
        s = t.shape[:-1] + (self.heads, self.head_dim)
        return np.swapaxes(t.reshape(s), -2, -3)

    def _merge(self, t: np.ndarray) -> np.ndarray:
        t = np.swapaxes(t, -2, -3)
        return t.reshape(t.shape[:-2] + (self.d_out,))

    def forward(self, x: np.ndarray, tape: ForwardTape, mask: np.ndarray | None = None) -> np.ndarray:
        L = x.shape[-2]
        if L == 0:
            raise ShapeError("self-attention needs at least one position")
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"self-attention input dim {x.shape[-1]} != {self.d_in}")
        p = self.params
        q = self._split(x @ p["Wq"])
        k = self._split(x @ p["Wk"])
        v = self._split(x @ p["Wv"])
        scores = (q @ np.swapaxes(k, -1, -2)) / math.sqrt(self.head_dim)
        key_mask = None if mask is None else mask[..., None, None, :]
        attn = masked_softmax(scores, key_mask)
        out = self._merge(attn @ v)
        tape.push(self, (x, q, k, v, attn))
        return out

    def backward(self, grad: np.ndarray, tape: ForwardTape) -> np.ndarray:
        x, q, k, v, attn = tape.pop(self)
        p = self.params
        g = self._split(grad)
        d_attn = g @ np.swapaxes(v, -1, -2)
        dv = np.swapaxes(attn, -1, -2) @ g
        ds = softmax_backward(attn, d_attn) / math.sqrt(self.head_dim)
        dq = ds @ k
        dk = np.swapaxes(ds, -1, -2) @ q
        dq, dk, dv = self._merge(dq), self._merge(dk), self._merge(dv)
        x2 = x.reshape(-1, self.d_in)
        self.grads["Wq"] += x2.T @ dq.reshape(-1, self.d_out)
        self.grads["Wk"] += x2.T @ dk.reshape(-1, self.d_out)
        self.grads["Wv"] += x2.T @ dv.reshape(-1, self.d_out)
        return dq @ p["Wq"].T + dk @ p["Wk"].T + dv @ p["Wv"].T


class AttentivePooling(LayerParams):
    """alpha_i = softmax_i(q . tanh(W x_i + b)); output sum_i alpha_i x_i."""

    kind = "attentive-pooling"

    def __init__(self, dim: int, query_dim: int, rng: np.random.Generator, name: str = "attentive_pooling"):
        super().__init__(name)
        self.dim, self.query_dim = dim, query_dim
        self.add_param("W", xavier_uniform(rng, dim, query_dim))
        self.add_param("b", np.zeros(query_dim))
        self.add_param("q", xavier_uniform(rng, query_dim, 1, shape=(query_dim,)))

    def forward(self, x: np.ndarray, tape: ForwardTape, mask: np.ndarray | None = None) -> np.ndarray:
        if x.shape[-2] == 0:
            raise ShapeError("attentive pooling needs at least one position")
        if x.shape[-1] != self.dim:
            raise ShapeError(f"pooling input dim {x.shape[-1]} != {self.dim}")
        p = self.params
        h = np.tanh(x @ p["W"] + p["b"])
        scores = h @ p["q"]
        alpha = masked_softmax(scores, mask)
        out = (alpha[..., None] * x).sum(axis=-2)
        tape.push(self, (x, h, alpha))
        return out

    def weights(self, tape: ForwardTape) -> np.ndarray:
        """Attention weights of the most recent forward call recorded on ``tape``."""
        return tape.peek(self)[2]

    def backward(self, grad: np.ndarray, tape: ForwardTape) -> np.ndarray:
        x, h, alpha = tape.pop(self)
        p = self.params
        d_alpha = (x * grad[..., None, :]).sum(axis=-1)
        dx = alpha[..., None] * grad[..., None, :]
        ds = softmax_backward(alpha, d_alpha)
        self.grads["q"] += (ds[..., None] * h).reshape(-1, self.query_dim).sum(axis=0)
        dpre = ds[..., None] * p["q"] * (1.0 - h * h)
        d2 = dpre.reshape(-1, self.query_dim)
        self.grads["W"] += x.reshape(-1, self.dim).T @ d2
        self.grads["b"] += d2.sum(axis=0)
        return dx + dpre @ p["W"].T


class Dropout:
    """Inverted dropout; the sampled mask is kept on the tape for an exact backward."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x: np.ndarray, tape: ForwardTape, training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        if not training or self.rate == 0.0:
            tape.push(self, None)
            return x
        if rng is None:
            raise ValueError("training-mode dropout needs an rng")
        mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        tape.push(self, mask)
        return x * mask

    def backward(self, grad: np.ndarray, tape: ForwardTape) -> np.ndarray:
        mask = tape.pop(self)
        return grad if mask is None else grad * mask

