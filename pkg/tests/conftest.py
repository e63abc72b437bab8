import numpy as np
import pytest

from privdetect.autodiff import Tensor
from privdetect.config import SMALL, TINY, TrainConfig
from privdetect.data import Sample, substream
from privdetect.synthetic import generate


def to_samples(corpus):
    """Samples from a synthetic corpus (its text is already whitespace tokens)."""
    return [Sample(r["id"], r["text"], r["text"].split(), corpus.vocab.encode(r["labels"]))
            for r in corpus.records]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def synthetic64():
    return generate(n_samples=64, n_labels=8, seed=0, dim=SMALL["d1"])


@pytest.fixture(scope="session")
def tiny_corpus():
    return generate(n_samples=24, n_labels=4, seed=3, dim=TINY["d1"], n_pairs=1)


@pytest.fixture
def tiny_config():
    return TrainConfig(**TINY, batch_size=8, epochs_max=3, patience=3, seed=0)


def param(rng, *shape, scale=1.0):
    return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True)


def seeded(name, seed=0):
    return substream(seed, name)


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
