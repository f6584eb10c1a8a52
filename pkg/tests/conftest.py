import numpy as np
import pytest

import tripletplan  # sets single-thread BLAS before numpy spins up
from tripletplan.core import build_vocab, default_vocab
from tripletplan.synthenv import default_workflow_spec, generate_corpus


@pytest.fixture(scope="session")
def vocab():
    return default_vocab()


@pytest.fixture(scope="session")
def tiny_vocab():
    # 3 instruments x 4 verbs x 5 targets, 20 triplets, 3 phases
    return build_vocab(num_instruments=3, num_verbs=4, num_targets=5, num_classes=20, phase_count=3)


@pytest.fixture(scope="session")
def workflow(vocab):
    return default_workflow_spec(vocab)


@pytest.fixture(scope="session")
def small_corpus(vocab, workflow):
    """8 train + 2 test videos, 120 frames: big enough to learn from,
    small enough for unit tests."""
    episodes = generate_corpus(workflow, vocab, 10, 120, seed=7)
    return episodes[:8], episodes[8:]


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
