"""Full dual-path model: encoders, evolution path, and adaptive decoder bound
to one config, with teacher-forced loss evaluation and free-running generation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .corpus import BOS, EOS, EmotionTaxonomy, VideoSample, Vocabulary
from .decoder import DecoderParams, DecoderState, decode_step, generate
from .encoders import (EmotionEncoderParams, EmotionEncoding, VideoEncoderParams,
                       encode_emotion, encode_video)
from .evolution import ELEMENT_THEN_SUBSPACE, EVOLUTION_ORDERS, EvolutionParams, evolve_step
from .nn import Module
from .objectives import LossConfig, emotion_focused_ce, hierarchical_cls_loss, total_loss
from .tensor import Tensor


@dataclass
class ModelConfig:
    d_appearance: int
    d_motion: int
    d_video: int = 300
    d_text: int = 300
    d_emotion: int = 300
    hidden_size: int = 512
    top_k: int = 5
    extension_size: int = 100
    subspace_sizes: tuple = (2, 3, 5, 6, 10)
    heads: int = 1
    ff_dim: int | None = None
    positional: bool = False
    prev_word_input: bool = True
    evolution_order: str = ELEMENT_THEN_SUBSPACE
    element_level: bool = True
    subspace_level: bool = True
    max_caption_len: int = 15
    seed: int = 0

    def __post_init__(self):
        if self.evolution_order not in EVOLUTION_ORDERS:
            raise ValueError(f"unknown evolution order {self.evolution_order!r}")
        self.subspace_sizes = tuple(int(k) for k in self.subspace_sizes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["subspace_sizes"] = list(self.subspace_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["subspace_sizes"] = tuple(d["subspace_sizes"])
        d["ff_dim"] = d.get("ff_dim")
        return cls(**d)


class DualPathModel(Module):
    """All trainable state for the two collaborating paths."""

    def __init__(self, config: ModelConfig, taxonomy: EmotionTaxonomy, vocab: Vocabulary):
        if not 1 <= config.top_k <= taxonomy.n_categories:
            raise ValueError(f"top_k={config.top_k} outside [1, {taxonomy.n_categories}]")
        self.config = config
        self.taxonomy = taxonomy
        self.vocab = vocab
        rng = np.random.default_rng(config.seed)
        self.video_encoder = VideoEncoderParams(
            rng, config.d_appearance, config.d_motion, config.d_video,
            heads=config.heads, ff_dim=config.ff_dim, positional=config.positional)
        self.emotion_encoder = EmotionEncoderParams(
            rng, taxonomy, config.d_video, config.d_emotion, heads=config.heads)
        self.evolution = EvolutionParams(
            rng, config.d_video, config.d_text, config.d_emotion,
            extension_size=config.extension_size, subspace_sizes=config.subspace_sizes,
            heads=config.heads)
        self.decoder = DecoderParams(
            rng, len(vocab), config.d_video, config.d_text, config.d_emotion,
            hidden_size=config.hidden_size, prev_word_input=config.prev_word_input)

    # -- forward passes ------------------------------------------------------

    def encode_sample(self, sample: VideoSample) -> tuple[Tensor, EmotionEncoding]:
        video = encode_video(sample.appearance, sample.motion, self.video_encoder)
        encoding = encode_emotion(video, self.emotion_encoder, self.taxonomy,
                                  self.config.top_k)
        return video, encoding

    def _evolution_kwargs(self) -> dict:
        return dict(order=self.config.evolution_order,
                    element_level=self.config.element_level,
                    subspace_level=self.config.subspace_level)

    def teacher_forced(self, video: Tensor, emotion0: Tensor, target_ids: list[int]
                       ) -> tuple[list[Tensor], list]:
        """Step probabilities for a ground-truth target sequence (the last
        target is EOS). The prefix at step t is BOS plus targets < t."""
        probs_per_step: list[Tensor] = []
        traces = []
        emotion = emotion0
        ids = [BOS] + [int(t) for t in target_ids[:-1]]
        zeros = Tensor(np.zeros((1, self.decoder.hidden_size)))
        hidden, cell = zeros, zeros
        for t in range(1, len(target_ids) + 1):
            prefix_ids = ids[:t]
            prefix = self.decoder.embed(prefix_ids)
            emotion, evo_trace = evolve_step(emotion, video, prefix, self.evolution,
                                             step=t, **self._evolution_kwargs())
            state = DecoderState(t, prefix_ids, hidden, cell, max_len=len(target_ids))
            probs, hidden, cell, gate = decode_step(video, emotion, state, self.decoder)
            probs_per_step.append(probs)
            traces.append((evo_trace, gate.data.reshape(-1).copy()))
        return probs_per_step, traces

    def caption_targets(self, tokens: list[str]) -> list[int]:
        ids = self.vocab.encode(tokens[: self.config.max_caption_len])
        return ids + [EOS]

    def sample_losses(self, sample: VideoSample, caption_index: int,
                      loss_config: LossConfig) -> tuple[Tensor, Tensor, Tensor]:
        """(total, caption loss, classification loss) for one caption."""
        video, encoding = self.encode_sample(sample)
        targets = self.caption_targets(sample.captions[caption_index])
        probs, _ = self.teacher_forced(video, encoding.word_features, targets)
        caption_loss = emotion_focused_ce(probs, targets, self.vocab.emotion_word_ids,
                                          beta=loss_config.emotion_penalty)
        cls_loss = hierarchical_cls_loss(encoding.category_probs, encoding.word_probs,
                                         sample.gt_category_ids, sample.gt_emotion_word_ids)
        return total_loss(caption_loss, cls_loss, loss_config), caption_loss, cls_loss

    def generate_caption(self, sample: VideoSample, mode: str = "greedy",
                         beam_size: int = 1, max_len: int | None = None):
        """Free-running decode; returns (token strings, per-step traces)."""
        video, encoding = self.encode_sample(sample)
        ids, steps = generate(video, encoding.word_features, self.evolution, self.decoder,
                              mode=mode, beam_size=beam_size,
                              max_len=self.config.max_caption_len if max_len is None else max_len,
                              **self._evolution_kwargs())
        return self.vocab.decode(ids), steps

    def teacher_forced_argmax(self, sample: VideoSample, caption_index: int = 0) -> bool:
        """True iff the argmax at every teacher-forced step hits the target."""
        from .tensor import no_grad
        with no_grad():
            video, encoding = self.encode_sample(sample)
            targets = self.caption_targets(sample.captions[caption_index])
            probs, _ = self.teacher_forced(video, encoding.word_features, targets)
        return all(int(np.argmax(p.data)) == t for p, t in zip(probs, targets))
