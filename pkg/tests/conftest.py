import numpy as np
import pytest

from pul.embedder import init_model
from pul.types import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def blobs(rng, centers, per, sigma=0.05):
    """Gaussian blobs around ``centers``; returns (X, labels)."""
    centers = np.asarray(centers, dtype=float)
    y = np.repeat(np.arange(len(centers)), per)
    X = centers[y] + sigma * rng.standard_normal((len(y), centers.shape[1]))
    return X, y


def small_model(rng, arch="mlp", D=5, E=4, C=3, H=6):
    return init_model(D, E, C, rng, arch=arch, hidden_dim=H)


def toy_dataset(rng, n=12, d=4, labels=True, cams=True):
    return Dataset(rng.standard_normal((n, d)),
                   rng.integers(0, 3, n) if labels else None,
                   rng.integers(0, 2, n) if cams else None)


def tiny_spec(seed=0, **changes):
    from pul.synthetic import DomainSpec, SyntheticSpec
    kw = dict(source=DomainSpec(6, samples_per_id=10, raw_dim=8),
              target=DomainSpec(4, samples_per_id=10, raw_dim=8),
              id_rank=4, test_ids=3, queries_per_id=4, seed=seed)
    kw.update(changes)
    return SyntheticSpec(**kw)


def tiny_config(seed=0, **changes):
    from pul.types import PulConfig, SGDConfig
    kw = dict(K=4, seed=seed, max_pul_iters=4, embed_dim=6, hidden_dim=10,
              sgd=SGDConfig(learning_rate=0.01, epochs_per_iter=3, init_epochs=10))
    kw.update(changes)
    return PulConfig(**kw)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
