from ..nnkit.optim import SGD, Adam, apply_sgd, make_optimizer
from .aggregator import Aggregator
from .checkpoint import FORMAT_VERSION, load_blocks, load_module, save_blocks, save_module
from .config import AGGREGATORS, PREDICTORS, ConfigError, ModelConfig, is_legal_combination
from .encoders import AdModel, Module, TextEncoder, UserModel
from .loss import bce_grad, bce_logit_grad, bce_loss
from .predictor import CtrPredictor


def build_models(cfg: ModelConfig, seed: int, platform_ids=None):
    """Fresh (user models, ad model, aggregator, predictor) with per-party seeded initialization.

    A platform's user model depends only on (seed, platform id), so platform
    subsets start from the same weights as the full federation.
    """
    import numpy as np

    cfg.validate()
    platform_ids = list(platform_ids or range(1, cfg.n_platforms + 1))
    if len(platform_ids) != cfg.n_platforms:
        raise ConfigError(f"{len(platform_ids)} platform ids for n_platforms={cfg.n_platforms}")
    users = [UserModel(cfg, np.random.default_rng([seed, 1, i]), name=f"user{i}") for i in platform_ids]
    ad = AdModel(cfg, np.random.default_rng([seed, 2]))
    aggregator = Aggregator(cfg.aggregator, cfg.embed_dim, cfg.n_platforms, np.random.default_rng([seed, 3]))
    predictor = CtrPredictor(cfg.predictor, cfg.user_dim, cfg.embed_dim, np.random.default_rng([seed, 4]), cfg.fm_factors)
    return users, ad, aggregator, predictor
