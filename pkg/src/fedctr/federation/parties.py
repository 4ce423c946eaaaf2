"""The three party roles. Each owns its models, tapes and RNG streams exclusively."""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from ..dataio.history import BehaviorStore
from ..dataio.records import AdRecord, Impressions
from ..models import AdModel, Aggregator, CtrPredictor, UserModel, bce_logit_grad, bce_loss
from ..nnkit import ForwardTape
from ..privacy import privatize
from .messages import (
    NO_TIMESTAMP,
    AggregatedEmbedding,
    EmbeddingRequest,
    LocalEmbedding,
    LocalGradient,
    UserGradient,
)
from .tapecache import TapeCache
from .transport import AD_PLATFORM, USER_SERVER, PartyId, PartyUnavailable, ProtocolError, platform_id

FAILURE_POLICIES = ("abort", "renormalize")
_INFER_FLAG = 1 << 63


def request_id(counter: int, user_ids, timestamps, extra=()) -> bytes:
    """16 bytes: u64 counter followed by an 8-byte digest of the batch."""
    h = hashlib.blake2b(digest_size=8)
    h.update(np.asarray(user_ids, dtype="<i8").tobytes())
    h.update(np.asarray(timestamps, dtype="<i8").tobytes())
    h.update(np.asarray(extra, dtype="<i8").tobytes())
    return struct.pack("<Q", counter) + h.digest()


class BehaviorPlatform:
    def __init__(self, index: int, model: UserModel, store: BehaviorStore, optimizer, *,
                 lambda_ldp: float = 0.0, clip_norm: float | None = None, seed: int = 0,
                 behavior_fraction: float = 1.0, cache_capacity: int = 64):
        self.id = platform_id(index)
        self.index = index
        self.model = model
        self._store = store
        self.optimizer = optimizer
        self.lambda_ldp = lambda_ldp
        self.clip_norm = clip_norm
        self.behavior_fraction = behavior_fraction
        self.noise_rng = np.random.default_rng([seed, 3, index, 2])
        self.dropout_rng = np.random.default_rng([seed, 3, index, 1])
        self.tapes = TapeCache(cache_capacity)

    def receive(self, src: PartyId, msg):
        if isinstance(msg, EmbeddingRequest):
            return self._embed(msg)
        if isinstance(msg, LocalGradient):
            if msg.platform != self.index:
                raise ProtocolError(f"{self.id} received a gradient addressed to platform {msg.platform}")
            tape = self.tapes.take(msg.request_id)
            self.model.backward(msg.gradient, tape)
            self.optimizer.step()
            return None
        raise ProtocolError(f"{self.id} cannot handle {type(msg).__name__}")

    def local_histories(self, user_ids, timestamps=None) -> np.ndarray:
        # NO_TIMESTAMP is int64 max, so it selects the whole history
        return self._store.query(user_ids, timestamps, self.behavior_fraction)

    # -- hooks for the behavior-inference attack harness -------------------
    def behavior_catalog(self) -> dict[int, list[tuple[int, ...]]]:
        """Per user, the behaviors that enter the user's current (untimed) embedding."""
        out = {}
        for u in self._store.users():
            rows = self._store.history(u, None, self.behavior_fraction)
            out[u] = [tuple(int(t) for t in r if t) for r in rows]
        return out

    def encode_candidates(self, token_rows: np.ndarray, kind: str = "behavior") -> np.ndarray:
        """Eval-mode representations of single behaviors, (n, L) -> (n, d).

        ``behavior`` uses the behavior encoder; ``singleton`` runs the whole
        user model on a one-behavior history.
        """
        token_rows = np.asarray(token_rows, dtype=np.int64)
        if kind == "behavior":
            return self.model.encode_behaviors(token_rows)
        if kind == "singleton":
            return self.model.forward(token_rows[:, None, :], ForwardTape())
        raise ValueError(f"unknown candidate encoder {kind!r}")

    def _embed(self, msg: EmbeddingRequest) -> LocalEmbedding:
        tokens = self.local_histories(msg.user_ids, msg.timestamps)
        tape = ForwardTape()
        u = self.model.forward(tokens, tape, training=msg.training, rng=self.dropout_rng)
        tape.seal()
        cold = ~(tokens != 0).any(axis=(1, 2)) if tokens.size else np.ones(len(msg.user_ids), bool)
        if msg.training:
            self.tapes.put(msg.request_id, tape)
        noisy = privatize(u, self.lambda_ldp, self.noise_rng, self.clip_norm)
        return LocalEmbedding(self.index, noisy, cold, msg.request_id)


class UserServer:
    def __init__(self, aggregator: Aggregator, optimizer, platforms: list[int], transport, *,
                 lambda_dp: float = 0.0, clip_norm: float | None = None, seed: int = 0,
                 failure_policy: str = "abort", cache_capacity: int = 64):
        if failure_policy not in FAILURE_POLICIES:
            raise ValueError(f"failure policy must be one of {FAILURE_POLICIES}")
        self.id = USER_SERVER
        self.aggregator = aggregator
        self.optimizer = optimizer
        self.platforms = list(platforms)
        self.transport = transport
        self.lambda_dp = lambda_dp
        self.clip_norm = clip_norm
        self.failure_policy = failure_policy
        self.noise_rng = np.random.default_rng([seed, 2, 0, 2])
        self.tapes = TapeCache(cache_capacity)

    def receive(self, src: PartyId, msg):
        if isinstance(msg, EmbeddingRequest):
            return self._aggregate(msg)
        if isinstance(msg, UserGradient):
            self._route_gradient(msg)
            return None
        raise ProtocolError(f"user server cannot handle {type(msg).__name__}")

    def _aggregate(self, msg: EmbeddingRequest) -> AggregatedEmbedding:
        B = len(msg.user_ids)
        locals_: list[np.ndarray | None] = []
        for i in self.platforms:
            try:
                reply = self.transport.send(self.id, platform_id(i), msg).reply
            except PartyUnavailable:
                if self.failure_policy == "abort":
                    raise ProtocolError(f"platform {i} did not respond; step aborted") from None
                locals_.append(None)
                continue
            if not isinstance(reply, LocalEmbedding) or reply.request_id != msg.request_id:
                raise ProtocolError(f"platform {i} answered with an unexpected message")
            if reply.embeddings.shape != (B, self.aggregator.dim):
                raise ProtocolError(
                    f"platform {i} sent embeddings of shape {reply.embeddings.shape}, expected {(B, self.aggregator.dim)}"
                )
            locals_.append(reply.embeddings)
        responders = [k for k, x in enumerate(locals_) if x is not None]
        if not responders:
            raise ProtocolError("no behavior platform responded")
        U = np.zeros((B, len(self.platforms), self.aggregator.dim))
        present = np.zeros((B, len(self.platforms)), bool)
        for k in responders:
            U[:, k] = locals_[k]
            present[:, k] = True
        tape = ForwardTape()
        u = self.aggregator.forward(U, tape, None if len(responders) == len(self.platforms) else present)
        tape.seal()
        if msg.training:
            self.tapes.put(msg.request_id, (tape, responders))
        return AggregatedEmbedding(privatize(u, self.lambda_dp, self.noise_rng, self.clip_norm), msg.request_id)

    def _route_gradient(self, msg: UserGradient) -> None:
        tape, responders = self.tapes.take(msg.request_id)
        grad_U = self.aggregator.backward(msg.gradient, tape)
        self.optimizer.step()
        for k in responders:
            i = self.platforms[k]
            self.transport.send(self.id, platform_id(i), LocalGradient(i, grad_U[:, k], msg.request_id))


class AdPlatform:
    def __init__(self, ad_model: AdModel, predictor: CtrPredictor, optimizer, ads: list[AdRecord], transport, *,
                 seed: int = 0, max_title_tokens: int = 16, max_desc_tokens: int = 32):
        self.id = AD_PLATFORM
        self.ad_model = ad_model
        self.predictor = predictor
        self.optimizer = optimizer
        self.transport = transport
        self.dropout_rng = np.random.default_rng([seed, 1, 0, 1])
        self.step_counter = 0
        self.infer_counter = 0
        self._titles = self._pad([a.title for a in ads], max_title_tokens)
        self._descs = self._pad([a.description for a in ads], max_desc_tokens)

    @staticmethod
    def _pad(texts, max_len: int) -> np.ndarray:
        L = min(max((len(t) for t in texts), default=0), max_len)
        out = np.zeros((len(texts), L), dtype=np.int64)
        for i, t in enumerate(texts):
            t = t[:L]
            out[i, : len(t)] = t
        return out

    def receive(self, src: PartyId, msg):
        raise ProtocolError(f"ad platform does not accept unsolicited {type(msg).__name__}")

    def ad_inputs(self, ad_ids):
        ad_ids = np.asarray(ad_ids, dtype=np.int64)
        known = (ad_ids >= 0) & (ad_ids < len(self._titles))
        safe = np.where(known, ad_ids, 0)
        titles = np.where(known[:, None], self._titles[safe], 0)
        descs = np.where(known[:, None], self._descs[safe], 0)
        return ad_ids, titles, descs

    def fetch_user_embeddings(self, user_ids, timestamps, training: bool, rid: bytes) -> np.ndarray:
        req = EmbeddingRequest(np.asarray(user_ids), np.asarray(timestamps), rid, training)
        reply = self.transport.send(self.id, USER_SERVER, req).reply
        if not isinstance(reply, AggregatedEmbedding) or reply.request_id != rid:
            raise ProtocolError("user server answered with an unexpected message")
        return reply.embeddings

    def _next_infer_id(self, user_ids, timestamps, ad_ids) -> bytes:
        self.infer_counter += 1
        return request_id(_INFER_FLAG | self.infer_counter, user_ids, timestamps, ad_ids)

    def score(self, user_ids, ad_ids, timestamps=None) -> np.ndarray:
        """Eval-mode click probabilities for aligned (user, ad) pairs."""
        user_ids = np.asarray(user_ids, dtype=np.int64)
        if timestamps is None:
            timestamps = np.full(len(user_ids), NO_TIMESTAMP, dtype=np.int64)
        rid = self._next_infer_id(user_ids, timestamps, ad_ids)
        u = self.fetch_user_embeddings(user_ids, timestamps, False, rid)
        tape = ForwardTape()
        d = self.ad_model.forward(*self.ad_inputs(ad_ids), tape)
        return self.predictor.forward(u, d, tape)

    def infer_ctr(self, user_id: int, candidate_ad_ids, timestamp: int | None = None) -> np.ndarray:
        """One user, P candidate ads: a single embedding request, then P predictor calls."""
        ts = NO_TIMESTAMP if timestamp is None else timestamp
        ad_ids = np.asarray(candidate_ad_ids, dtype=np.int64)
        rid = self._next_infer_id([user_id], [ts], ad_ids)
        u = self.fetch_user_embeddings([user_id], [ts], False, rid)
        tape = ForwardTape()
        d = self.ad_model.forward(*self.ad_inputs(ad_ids), tape)
        return self.predictor.forward(np.repeat(u, len(ad_ids), axis=0), d, tape)

    def train_step(self, batch: Impressions) -> float:
        if len(batch) == 0:
            raise ValueError("empty batch")
        self.step_counter += 1
        rid = request_id(self.step_counter, batch.user_ids, batch.timestamps, batch.ad_ids)
        u = self.fetch_user_embeddings(batch.user_ids, batch.timestamps, True, rid)
        tape = ForwardTape()
        d = self.ad_model.forward(*self.ad_inputs(batch.ad_ids), tape, training=True, rng=self.dropout_rng)
        y_hat = self.predictor.forward(u, d, tape)
        tape.seal()
        y = batch.labels
        loss = float(np.mean(bce_loss(y_hat, y)))
        grad_logit = bce_logit_grad(y_hat, y) / len(batch)
        grad_u, grad_d = self.predictor.backward_from_logit_grad(grad_logit, tape)
        self.ad_model.backward(grad_d, tape)
        self.optimizer.step()
        self.transport.send(self.id, USER_SERVER, UserGradient(grad_u, rid))
        return loss
