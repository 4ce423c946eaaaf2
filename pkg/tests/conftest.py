import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset():
    from fedctr.dataio import SyntheticSpec, generate_synthetic

    return generate_synthetic(
        SyntheticSpec(n_users=60, n_ads=40, vocab_size=300, behaviors_per_user=6, impressions_per_user=6, seed=3)
    )


@pytest.fixture
def tiny_model_config():
    from fedctr.models import ModelConfig

    return ModelConfig(
        word_dim=8, heads=2, head_dim=4, query_dim=6, id_dim=4, max_tokens=5, max_behaviors=6,
        max_title_tokens=4, max_desc_tokens=6, dropout=0.0, fm_factors=3,
    )


TINY_RUN = dict(
    users=80, vocab=400, topics=4, behaviors_per_user=5.0, impressions_per_user=8.0, word_dim=8, heads=2,
    head_dim=4, query_dim=8, id_dim=4, max_tokens=5, max_behaviors=5, max_title_tokens=4, max_desc_tokens=6,
    fm_factors=3, epochs=1, repeats=1, test_window_days=20.0,
)


@pytest.fixture
def tiny_run():
    from fedctr.evalcli.config import RunConfig

    return RunConfig(**TINY_RUN)


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text("# desk-scale smoke settings\n" + "".join(f"{k} = {v}\n" for k, v in TINY_RUN.items()))
    return path


_ACCEPTANCE: list[str] = []


@pytest.fixture
def record_criterion():
    """Record one PASS/FAIL line for an acceptance criterion and return ``ok``."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        _ACCEPTANCE.append(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        print(_ACCEPTANCE[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
