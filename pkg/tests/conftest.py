import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from evocap.corpus import EmotionTaxonomy, RESERVED_TOKENS, Vocabulary
from evocap.model import DualPathModel, ModelConfig


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def toy_taxonomy():
    return EmotionTaxonomy(
        categories=["joy", "fear", "calm"],
        words=["joy0", "joy1", "fear0", "fear1", "calm0", "calm1"],
        membership={0: frozenset({0, 1}), 1: frozenset({2, 3}), 2: frozenset({4, 5})},
    )


@pytest.fixture
def toy_vocab(toy_taxonomy):
    tokens = RESERVED_TOKENS + toy_taxonomy.words + ["a", "person", "walks", "sits", "dog"]
    return Vocabulary(tokens, set(range(4, 4 + toy_taxonomy.n_words)))


def small_config(**overrides) -> ModelConfig:
    base = dict(d_appearance=6, d_motion=5, d_video=12, d_text=12, d_emotion=12,
                hidden_size=10, top_k=2, extension_size=5, subspace_sizes=(2, 3),
                ff_dim=24, max_caption_len=8, seed=3)
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def small_model(toy_taxonomy, toy_vocab):
    return DualPathModel(small_config(), toy_taxonomy, toy_vocab)
