"""Text, user and ad encoders built from nnkit layers."""

from __future__ import annotations

import numpy as np

from ..nnkit import (
    AttentivePooling,
    Dense,
    Dropout,
    Embedding,
    ForwardTape,
    LayerParams,
    MultiHeadSelfAttention,
    PositionEmbedding,
    Tensor,
)
from .config import ModelConfig


class Module:
    """Owner of an ordered set of parameter blocks."""

    def parameters(self) -> list[LayerParams]:
        seen, out = set(), []
        for value in vars(self).values():
            items = value.parameters() if isinstance(value, Module) else [value]
            for p in items:
                if isinstance(p, LayerParams) and id(p) not in seen:
                    seen.add(id(p))
                    out.append(p)
        return out

    def named_blocks(self) -> dict[str, np.ndarray]:
        blocks: dict[str, np.ndarray] = {}
        for p in self.parameters():
            for name, arr in p.named_blocks().items():
                if name in blocks:
                    raise KeyError(f"duplicate parameter name {name}")
                blocks[name] = arr
        return blocks

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.zero_grads()


class TextEncoder(Module):
    """token ids (..., L) -> text vectors (..., h*dk).

    Id 0 is padding. Rows without any token encode to the zero vector.
    """

    def __init__(self, embedding: Embedding, max_len: int, cfg: ModelConfig, rng: np.random.Generator, name: str):
        self.embedding = embedding
        d_w, d = embedding.dim, cfg.embed_dim
        self.dim = d
        self.position = PositionEmbedding(max_len, d_w, rng, name=f"{name}.position")
        self.attention = MultiHeadSelfAttention(d_w, cfg.heads, cfg.head_dim, rng, name=f"{name}.attention")
        self.pooling = AttentivePooling(d, cfg.query_dim, rng, name=f"{name}.pooling")
        self.drop_in = Dropout(cfg.dropout)
        self.drop_out = Dropout(cfg.dropout)

    def forward(self, ids: np.ndarray, tape: ForwardTape, training: bool = False, rng=None) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        L = ids.shape[-1]
        if L == 0:
            tape.push(self, True)
            return np.zeros(ids.shape[:-1] + (self.dim,))
        L = min(L, self.position.max_len)
        ids = ids[..., :L]
        mask = ids != 0
        x = self.embedding.forward(ids, tape)
        x = self.position.forward(x, tape)
        x = self.drop_in.forward(x, tape, training, rng)
        x = self.attention.forward(x, tape, mask)
        x = self.drop_out.forward(x, tape, training, rng)
        out = self.pooling.forward(x, tape, mask)
        tape.push(self, False)
        return out

    def backward(self, grad: np.ndarray, tape: ForwardTape) -> None:
        if tape.pop(self):
            return
        g = self.pooling.backward(grad, tape)
        g = self.drop_out.backward(g, tape)
        g = self.attention.backward(g, tape)
        g = self.drop_in.backward(g, tape)
        g = self.position.backward(g, tape)
        self.embedding.backward(g, tape)


class UserModel(Module):
    """Hierarchical user encoder: words -> behavior vectors -> one user vector.

    ``forward`` takes a padded token array of shape (B, M, L): B users, up to M
    behaviors each in chronological order, up to L tokens per behavior. Users
    with no behaviors receive the learned cold-start vector.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, name: str = "user"):
        self.cfg = cfg
        d = cfg.embed_dim
        self.dim = d
        self.word_embedding = Embedding(cfg.vocab_size, cfg.word_dim, rng, name=f"{name}.word_embedding")
        self.behavior_encoder = TextEncoder(self.word_embedding, cfg.max_tokens, cfg, rng, name=f"{name}.words")
        self.behavior_position = PositionEmbedding(cfg.max_behaviors, d, rng, name=f"{name}.behavior_position")
        self.behavior_attention = MultiHeadSelfAttention(d, cfg.heads, cfg.head_dim, rng, name=f"{name}.behavior_attention")
        self.behavior_pooling = AttentivePooling(d, cfg.query_dim, rng, name=f"{name}.behavior_pooling")
        self.cold_start = Tensor(rng.uniform(-0.1, 0.1, size=d), name=f"{name}.cold_start")
        self.drop_in = Dropout(cfg.dropout)
        self.drop_out = Dropout(cfg.dropout)

    def encode_behaviors(self, ids: np.ndarray, tape: ForwardTape | None = None, training=False, rng=None) -> np.ndarray:
        return self.behavior_encoder.forward(ids, tape or ForwardTape(), training, rng)

    def forward(self, tokens: np.ndarray, tape: ForwardTape, training: bool = False, rng=None) -> np.ndarray:
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.ndim != 3:
            raise ValueError(f"expected (users, behaviors, tokens) array, got shape {tokens.shape}")
        B, M, L = tokens.shape
        M = min(M, self.cfg.max_behaviors)
        tokens = tokens[:, -M:, :] if M else tokens[:, :0, :]
        behavior_mask = (tokens != 0).any(axis=-1)
        cold = ~behavior_mask.any(axis=-1)
        rows = np.flatnonzero(behavior_mask.ravel())
        if rows.size == 0:
            tape.push(self, (B, M, rows, cold))
            return np.repeat(self.cold_start.value[None, :], B, axis=0)
        flat = tokens.reshape(B * M, L)[rows]
        r_flat = self.behavior_encoder.forward(flat, tape, training, rng)
        r = np.zeros((B * M, self.dim))
        r[rows] = r_flat
        r = r.reshape(B, M, self.dim)
        x = self.behavior_position.forward(r, tape)
        x = self.drop_in.forward(x, tape, training, rng)
        x = self.behavior_attention.forward(x, tape, behavior_mask)
        x = self.drop_out.forward(x, tape, training, rng)
        u = self.behavior_pooling.forward(x, tape, behavior_mask)
        if cold.any():
            u = u.copy()
            u[cold] = self.cold_start.value
        tape.push(self, (B, M, rows, cold))
        return u

    def backward(self, grad_u: np.ndarray, tape: ForwardTape) -> None:
        B, M, rows, cold = tape.pop(self)
        if grad_u.shape != (B, self.dim):
            raise ValueError(f"user gradient shape {grad_u.shape} != {(B, self.dim)}")
        if cold.any():
            self.cold_start.grads["value"] += grad_u[cold].sum(axis=0)
            grad_u = grad_u * ~cold[:, None]
        if rows.size:
            g = self.behavior_pooling.backward(grad_u, tape)
            g = self.drop_out.backward(g, tape)
            g = self.behavior_attention.backward(g, tape)
            g = self.drop_in.backward(g, tape)
            g = self.behavior_position.backward(g, tape)
            g_flat = g.reshape(B * M, self.dim)[rows]
            self.behavior_encoder.backward(g_flat, tape)

    def embed(self, behaviors, max_tokens: int | None = None) -> np.ndarray:
        """Eval-mode embedding of a single user given a list of token-id sequences."""
        from ..dataio.history import pad_histories

        tokens = pad_histories([list(behaviors)], max_tokens or self.cfg.max_tokens, self.cfg.max_behaviors)
        return self.forward(tokens, ForwardTape())[0]


class AdModel(Module):
    """Ad encoder over three views (ID, title, description) combined by attention.

    Views that are empty (no tokens) are left out of the view attention.
    Unknown ad ids map to the reserved last row of the ID table.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, name: str = "ad"):
        self.cfg = cfg
        d = cfg.embed_dim
        self.dim = d
        self.oov_id = cfg.n_ads
        self.id_embedding = Embedding(cfg.n_ads + 1, cfg.id_dim, rng, name=f"{name}.id_embedding")
        self.id_dense = Dense(cfg.id_dim, d, rng, activation="tanh", name=f"{name}.id_dense")
        self.word_embedding = Embedding(cfg.vocab_size, cfg.word_dim, rng, name=f"{name}.word_embedding")
        self.title_encoder = TextEncoder(self.word_embedding, cfg.max_title_tokens, cfg, rng, name=f"{name}.title")
        self.desc_encoder = TextEncoder(self.word_embedding, cfg.max_desc_tokens, cfg, rng, name=f"{name}.description")
        self.view_pooling = AttentivePooling(d, cfg.query_dim, rng, name=f"{name}.view_pooling")
        self.drop_id = Dropout(cfg.dropout)

    def forward(self, ad_ids, titles, descriptions, tape: ForwardTape, training: bool = False, rng=None) -> np.ndarray:
        ad_ids = np.asarray(ad_ids, dtype=np.int64)
        ad_ids = np.where((ad_ids >= 0) & (ad_ids < self.cfg.n_ads), ad_ids, self.oov_id)
        titles = np.asarray(titles, dtype=np.int64).reshape(len(ad_ids), -1)
        descriptions = np.asarray(descriptions, dtype=np.int64).reshape(len(ad_ids), -1)
        x = self.id_embedding.forward(ad_ids, tape)
        x = self.drop_id.forward(x, tape, training, rng)
        v_id = self.id_dense.forward(x, tape)
        v_title = self.title_encoder.forward(titles, tape, training, rng)
        v_desc = self.desc_encoder.forward(descriptions, tape, training, rng)
        views = np.stack([v_id, v_title, v_desc], axis=1)
        mask = np.stack(
            [np.ones(len(ad_ids), bool), (titles != 0).any(axis=-1), (descriptions != 0).any(axis=-1)], axis=1
        )
        return self.view_pooling.forward(views, tape, mask)

    def backward(self, grad_d: np.ndarray, tape: ForwardTape) -> None:
        g = self.view_pooling.backward(grad_d, tape)
        self.desc_encoder.backward(g[:, 2], tape)
        self.title_encoder.backward(g[:, 1], tape)
        g_id = self.id_dense.backward(g[:, 0], tape)
        g_id = self.drop_id.backward(g_id, tape)
        self.id_embedding.backward(g_id, tape)
