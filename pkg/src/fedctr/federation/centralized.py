"""Single-process composition of the same four models, used as an oracle for the protocol.

No messages, no caches: one forward through every model and one backward in
reverse, with every party's parameters updated in the same step.
"""

from __future__ import annotations

import copy

import numpy as np

from ..models import bce_logit_grad, bce_loss, make_optimizer
from ..nnkit import ForwardTape
from ..privacy import laplace_perturb


class CentralizedModel:
    def __init__(self, user_models, histories, ad_model, aggregator, predictor, ad_inputs, *,
                 optimizer: str = "sgd", lr: float = 1e-3, lambda_ldp: float = 0.0, lambda_dp: float = 0.0, seed: int = 0):
        self.user_models = list(user_models)
        self.histories = list(histories)
        self.ad_model = ad_model
        self.aggregator = aggregator
        self.predictor = predictor
        self.ad_inputs = ad_inputs
        self.lambda_ldp, self.lambda_dp = lambda_ldp, lambda_dp
        self.rng = np.random.default_rng(seed)
        params = [p for m in self.user_models for p in m.parameters()]
        params += aggregator.parameters() + ad_model.parameters() + predictor.parameters()
        self.params = params
        self.optimizer = make_optimizer(optimizer, params, lr)

    @classmethod
    def from_federation(cls, fed, optimizer: str = "sgd", lr: float | None = None) -> "CentralizedModel":
        """Deep copies of a federation's current models; data access goes through the same stores."""
        ids = fed.platform_ids
        users = [copy.deepcopy(fed.platforms[i].model) for i in ids]
        return cls(
            users, [fed.platforms[i].local_histories for i in ids],
            copy.deepcopy(fed.ad_platform.ad_model), copy.deepcopy(fed.server.aggregator),
            copy.deepcopy(fed.ad_platform.predictor), fed.ad_platform.ad_inputs,
            optimizer=optimizer, lr=fed.cfg.lr if lr is None else lr,
        )

    def forward(self, user_ids, ad_ids, timestamps, tape: ForwardTape):
        locals_ = []
        for model, history in zip(self.user_models, self.histories):
            u_i = model.forward(history(user_ids, timestamps), tape)
            locals_.append(laplace_perturb(u_i, self.lambda_ldp, self.rng))
        U = np.stack(locals_, axis=1)
        u = laplace_perturb(self.aggregator.forward(U, tape), self.lambda_dp, self.rng)
        d = self.ad_model.forward(*self.ad_inputs(ad_ids), tape)
        return self.predictor.forward(u, d, tape)

    def predict(self, user_ids, ad_ids, timestamps) -> np.ndarray:
        return self.forward(user_ids, ad_ids, timestamps, ForwardTape())

    def train_step(self, batch) -> float:
        tape = ForwardTape()
        y_hat = self.forward(batch.user_ids, batch.ad_ids, batch.timestamps, tape)
        loss = float(np.mean(bce_loss(y_hat, batch.labels)))
        g = bce_logit_grad(y_hat, batch.labels) / len(batch)
        grad_u, grad_d = self.predictor.backward_from_logit_grad(g, tape)
        self.ad_model.backward(grad_d, tape)
        grad_U = self.aggregator.backward(grad_u, tape)
        for k in reversed(range(len(self.user_models))):
            self.user_models[k].backward(grad_U[:, k], tape)
        self.optimizer.step()
        return loss
