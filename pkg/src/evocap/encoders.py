"""Video encoder and the two-level emotion encoder.

Appearance and motion streams are projected to half the video width each,
concatenated per frame, and contextualized by a self-attention block. The
emotion side attends video tokens over the category dictionary, predicts a
category distribution, restricts the word dictionary to the top-K categories
with a 0/1 mask, and attends over the surviving words to produce the initial
emotion state for the evolution path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import EmotionTaxonomy
from .nn import Attention, Linear, Module, SelfAttentionBlock, mean_pool, sinusoidal_positions
from .tensor import Tensor, as_tensor, concat, parameter, softmax


class VideoEncoderParams(Module):
    def __init__(self, rng, d_appearance: int, d_motion: int, d_video: int,
                 heads: int = 1, ff_dim: int | None = None, positional: bool = False):
        if d_video % 2 != 0:
            raise ValueError("video feature width must be even (two equal stream halves)")
        self.proj_appearance = Linear(rng, d_appearance, d_video // 2)
        self.proj_motion = Linear(rng, d_motion, d_video // 2)
        self.block = SelfAttentionBlock(rng, d_video, ff_dim=ff_dim, heads=heads)
        self.positional = positional


def encode_video(appearance, motion, params: VideoEncoderParams) -> Tensor:
    """Fuse per-frame appearance/motion features and contextualize them."""
    appearance, motion = as_tensor(appearance), as_tensor(motion)
    if appearance.shape[0] != motion.shape[0]:
        raise ValueError("appearance and motion streams must have equal frame counts")
    fused = concat([params.proj_appearance(appearance), params.proj_motion(motion)], axis=1)
    if params.positional:
        fused = fused + sinusoidal_positions(fused.shape[0], fused.shape[1])
    return params.block(fused)


class EmotionEncoderParams(Module):
    """Dictionary embeddings plus the two cross-attention stages and their
    classification heads. Embeddings come from the taxonomy tables when
    present, otherwise uniform(-0.1, 0.1) from the construction generator."""

    def __init__(self, rng, taxonomy: EmotionTaxonomy, d_video: int, d_emotion: int,
                 heads: int = 1):
        if taxonomy.category_embeddings is not None:
            cat = np.asarray(taxonomy.category_embeddings, dtype=np.float64)
            if cat.shape != (taxonomy.n_categories, d_emotion):
                raise ValueError("category embedding table shape mismatch")
        else:
            cat = rng.uniform(-0.1, 0.1, size=(taxonomy.n_categories, d_emotion))
        if taxonomy.word_embeddings is not None:
            word = np.asarray(taxonomy.word_embeddings, dtype=np.float64)
            if word.shape != (taxonomy.n_words, d_emotion):
                raise ValueError("word embedding table shape mismatch")
        else:
            word = rng.uniform(-0.1, 0.1, size=(taxonomy.n_words, d_emotion))
        self.category_embeddings = parameter(cat)
        self.word_embeddings = parameter(word)
        self.category_attn = Attention(rng, d_video, d_emotion, d_emotion, heads=heads)
        self.category_head = Linear(rng, d_emotion, taxonomy.n_categories)
        self.word_attn = Attention(rng, d_video, d_emotion, d_emotion, heads=heads)
        self.word_head = Linear(rng, d_emotion, taxonomy.n_words)


def predict_categories(video: Tensor, params: EmotionEncoderParams) -> tuple[Tensor, Tensor]:
    """Category-aware token features and the category distribution."""
    category_features = params.category_attn(video, params.category_embeddings)
    logits = params.category_head(mean_pool(category_features))
    category_probs = softmax(logits, axis=-1).reshape(-1)
    return category_features, category_probs


def build_topk_mask(category_probs: np.ndarray, taxonomy: EmotionTaxonomy,
                    k: int, n_rows: int) -> np.ndarray:
    """0/1 mask over words: column j open iff word j belongs to one of the K
    most probable categories (ties broken toward the lower category index).
    All query rows share the same column pattern."""
    probs = np.asarray(category_probs, dtype=np.float64).reshape(-1)
    if not 1 <= k <= taxonomy.n_categories:
        raise ValueError(f"top-K must be in [1, {taxonomy.n_categories}], got {k}")
    selected = np.argsort(-probs, kind="stable")[:k]
    open_words = taxonomy.words_of_categories(int(c) for c in selected)
    mask = np.zeros((n_rows, taxonomy.n_words))
    mask[:, sorted(open_words)] = 1.0
    return mask


def encode_emotion_words(video: Tensor, params: EmotionEncoderParams,
                         mask: np.ndarray) -> tuple[Tensor, Tensor]:
    """Masked attention over the word dictionary; returns the word-level
    emotion features (the evolution path's initial state) and the word
    distribution."""
    word_features = params.word_attn(video, params.word_embeddings, mask=mask)
    logits = params.word_head(mean_pool(word_features))
    word_probs = softmax(logits, axis=-1).reshape(-1)
    return word_features, word_probs


@dataclass
class EmotionEncoding:
    category_features: Tensor
    category_probs: Tensor
    mask: np.ndarray
    word_features: Tensor
    word_probs: Tensor


def encode_emotion(video: Tensor, params: EmotionEncoderParams,
                   taxonomy: EmotionTaxonomy, k: int) -> EmotionEncoding:
    """Full emotion-encoder pass. The top-K selection is a hard decision:
    gradients reach the category head only through its own supervision."""
    category_features, category_probs = predict_categories(video, params)
    mask = build_topk_mask(category_probs.data, taxonomy, k, video.shape[0])
    word_features, word_probs = encode_emotion_words(video, params, mask)
    return EmotionEncoding(category_features, category_probs, mask, word_features, word_probs)
