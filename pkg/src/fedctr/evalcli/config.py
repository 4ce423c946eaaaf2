"""Run configuration: one flat record, readable from a key=value text file and overridable by flags.

File format: one ``key = value`` per line, ``#`` starts a comment, blank
lines are ignored. Lists are comma-separated (``platforms = 1,2``);
``none`` clears an optional value. Keys are the :class:`RunConfig` field
names, with dashes and underscores interchangeable.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..dataio.synthetic import SyntheticSpec
from ..models import AGGREGATORS, PREDICTORS, ModelConfig, is_legal_combination


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # data: a saved dataset directory, or a synthetic spec
    data: str | None = None
    users: int = 2000
    n_platforms: int = 2
    topics: int = 20
    vocab: int = 1000
    behaviors_per_user: float = 20.0
    words_per_behavior: float = 5.0
    impressions_per_user: float = 10.0
    beta: float = 1.0
    visibility: str = "disjoint"  # disjoint | shared
    platform_noise: list[float] | None = None
    data_seed: int | None = None  # None: follow ``seed``

    # model
    word_dim: int = 32
    heads: int = 2
    head_dim: int = 16
    query_dim: int = 32
    id_dim: int = 16
    max_tokens: int = 8
    max_behaviors: int = 20
    max_title_tokens: int = 8
    max_desc_tokens: int = 16
    dropout: float = 0.2
    fm_factors: int = 16
    predictor: str = "dot"
    aggregator: str = "attention"

    # federation and training
    platforms: list[int] | None = None
    lambda_ldp: float = 0.01
    lambda_dp: float = 0.005
    clip_norm: float | None = None
    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 30
    epochs: int = 2
    seed: int = 0
    train_fraction: float = 1.0
    behavior_fraction: float = 1.0
    test_window_days: float = 7.0
    val_fraction: float = 0.1
    keep_best: bool = True

    # privacy attack
    attack_instances: int = 0
    attack_encoder: str = "singleton"  # singleton | behavior

    repeats: int = 5  # seeds seed, seed+1, ... for train, attack and ablations
    out: str = "reports"

    def validate(self) -> "RunConfig":
        if self.predictor not in PREDICTORS:
            raise ConfigError(f"unknown predictor {self.predictor!r}; choose from {PREDICTORS}")
        if self.aggregator not in AGGREGATORS:
            raise ConfigError(f"unknown aggregator {self.aggregator!r}; choose from {AGGREGATORS}")
        k = len(self.platforms) if self.platforms else self.n_platforms
        if not is_legal_combination(self.predictor, self.aggregator, k):
            raise ConfigError(f"predictor {self.predictor!r} cannot consume the {self.aggregator!r} aggregate")
        if self.lambda_ldp < 0 or self.lambda_dp < 0:
            raise ConfigError("noise scales must be non-negative")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0 or self.repeats < 1:
            raise ConfigError("lr must be positive, batch_size and repeats at least 1, epochs non-negative")
        if not 0.0 < self.train_fraction <= 1.0 or not 0.0 < self.behavior_fraction <= 1.0:
            raise ConfigError("train and behavior fractions must be in (0, 1]")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError("val_fraction must be in (0, 1)")
        if self.test_window_days < 0:
            raise ConfigError("test_window_days must be non-negative")
        if self.visibility not in ("disjoint", "shared"):
            raise ConfigError("visibility must be 'disjoint' or 'shared'")
        if self.attack_encoder not in ("behavior", "singleton"):
            raise ConfigError("attack_encoder must be 'behavior' or 'singleton'")
        if self.attack_instances < 0:
            raise ConfigError("attack_instances must be non-negative")
        try:
            self.model_config().validate()
            if self.data is None:
                self.synthetic_spec().validate()
        except ValueError as e:
            raise ConfigError(str(e)) from e
        return self

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @property
    def effective_data_seed(self) -> int:
        return self.seed if self.data_seed is None else self.data_seed

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            word_dim=self.word_dim, heads=self.heads, head_dim=self.head_dim, query_dim=self.query_dim,
            id_dim=self.id_dim, max_tokens=self.max_tokens, max_behaviors=self.max_behaviors,
            max_title_tokens=self.max_title_tokens, max_desc_tokens=self.max_desc_tokens,
            dropout=self.dropout, fm_factors=self.fm_factors, predictor=self.predictor,
            aggregator=self.aggregator,
            n_platforms=len(self.platforms) if self.platforms else self.n_platforms,
        )

    def synthetic_spec(self) -> SyntheticSpec:
        K, T = self.n_platforms, self.topics
        if self.visibility == "shared":
            vis = [list(range(T)) for _ in range(K)]
        else:
            vis = None
        return SyntheticSpec(
            n_users=self.users, n_platforms=K, n_topics=T, vocab_size=self.vocab,
            visibility=vis, platform_noise=self.platform_noise,
            behaviors_per_user=self.behaviors_per_user, words_per_behavior=self.words_per_behavior,
            impressions_per_user=self.impressions_per_user, beta=self.beta, seed=self.effective_data_seed,
        )

    def echo(self) -> dict[str, str]:
        """Every field as text, in declaration order."""
        return {f.name: format_value(getattr(self, f.name)) for f in fields(self)}


def format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(format_value(x) for x in v)
    return str(v)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _parse_scalar(kind: str, text: str):
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    return text


def parse_value(name: str, text: str):
    """Convert the text form of field ``name`` to its typed value."""
    f = _FIELDS.get(name)
    if f is None:
        raise ConfigError(f"unknown config key {name!r}")
    ann = str(f.type).replace(" ", "")
    text = text.strip()
    optional = "None" in ann
    if optional and text.lower() in ("none", ""):
        return None
    try:
        if ann.startswith("list["):
            inner = ann[5:].split("]")[0]
            return [_parse_scalar(inner, t.strip()) for t in text.split(",") if t.strip()]
        base = ann.split("|")[0]
        return _parse_scalar(base, text)
    except ValueError as e:
        raise ConfigError(f"bad value for {name}: {e}") from e


def normalize_key(key: str) -> str:
    return key.strip().replace("-", "_")


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = normalize_key(key)
        try:
            out[key] = parse_value(key, value)
        except ConfigError as e:
            raise ConfigError(f"{source}:{lineno}: {e}") from e
    return out


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    return parse_config_text(text, str(path))


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file, then explicit overrides (flags win)."""
    values = dict(file_values or {})
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        cfg = RunConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    return cfg.validate()


def config_from_echo(echo: dict[str, str]) -> RunConfig:
    return RunConfig(**{k: parse_value(k, v) for k, v in echo.items()})
