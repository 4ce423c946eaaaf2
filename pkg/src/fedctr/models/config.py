from __future__ import annotations

from dataclasses import asdict, dataclass

PREDICTORS = ("dot", "dense", "outer", "fm")
AGGREGATORS = ("attention", "average", "max", "concat")


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    vocab_size: int = 5000
    n_ads: int = 1000
    word_dim: int = 300
    heads: int = 16
    head_dim: int = 16
    query_dim: int = 200
    id_dim: int = 100
    max_tokens: int = 16
    max_behaviors: int = 50
    max_title_tokens: int = 16
    max_desc_tokens: int = 32
    dropout: float = 0.2
    fm_factors: int = 16
    predictor: str = "dot"
    aggregator: str = "attention"
    n_platforms: int = 2

    @property
    def embed_dim(self) -> int:
        return self.heads * self.head_dim

    @property
    def user_dim(self) -> int:
        """Dimension of the aggregated user embedding handed to the predictor."""
        if self.aggregator == "concat":
            return self.n_platforms * self.embed_dim
        return self.embed_dim

    def validate(self) -> "ModelConfig":
        if self.predictor not in PREDICTORS:
            raise ConfigError(f"unknown predictor {self.predictor!r}; choose from {PREDICTORS}")
        if self.aggregator not in AGGREGATORS:
            raise ConfigError(f"unknown aggregator {self.aggregator!r}; choose from {AGGREGATORS}")
        if self.predictor == "dot" and self.user_dim != self.embed_dim:
            raise ConfigError(
                f"dot predictor needs equal user/ad dims, got {self.user_dim} (concat over "
                f"{self.n_platforms} platforms) vs {self.embed_dim}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        for key in ("vocab_size", "n_ads", "word_dim", "heads", "head_dim", "query_dim", "id_dim",
                    "max_tokens", "max_behaviors", "max_title_tokens", "max_desc_tokens",
                    "fm_factors", "n_platforms"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def is_legal_combination(predictor: str, aggregator: str, n_platforms: int = 2) -> bool:
    try:
        ModelConfig(predictor=predictor, aggregator=aggregator, n_platforms=n_platforms).validate()
    except ConfigError:
        return False
    return True
