"""Training objectives: emotion-focused cross-entropy over caption steps, the
hierarchical category/word classification loss, and their weighted sum.

Per-sentence losses are sums over steps; batching averages over sentences
(training module). Probabilities are clamped at 1e-12 before the log, counted
by a module-level warning counter.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .corpus import PAD
from .tensor import Tensor, as_tensor

log = logging.getLogger(__name__)

CLAMP_EPS = 1e-12


class _ClampCounter:
    def __init__(self):
        self.count = 0

    def bump(self, n: int = 1):
        if n > 0:
            self.count += n
            log.warning("clamped %d near-zero probabilities before log", n)

    def reset(self):
        self.count = 0


clamp_warnings = _ClampCounter()


@dataclass
class LossConfig:
    emotion_penalty: float = 0.1       # extra weight on emotion-word steps
    caption_weight: float = 1.0        # weight of the caption loss
    classification_weight: float = 0.2  # weight of the initial-emotion loss

    def __post_init__(self):
        if self.emotion_penalty < 0 or self.caption_weight < 0 or self.classification_weight < 0:
            raise ValueError("loss weights must be nonnegative")


def _neg_log(prob: Tensor) -> Tensor:
    if float(prob.data) < CLAMP_EPS:
        clamp_warnings.bump()
    return -(prob.clamp_min(CLAMP_EPS).log())


def emotion_focused_ce(step_probs, target_ids, emotion_word_ids, beta: float = 0.1,
                       pad_id: int = PAD) -> Tensor:
    """Sum of negative log-probabilities of the targets, with emotion-word
    steps weighted by (1 + beta). PAD targets are excluded entirely."""
    if isinstance(step_probs, Tensor):
        step_probs = [step_probs[t] for t in range(step_probs.shape[0])]
    if len(step_probs) != len(target_ids):
        raise ValueError("one probability row per target required")
    emotion_word_ids = set(emotion_word_ids)
    total = Tensor(0.0)
    for probs, target in zip(step_probs, target_ids):
        target = int(target)
        if target == pad_id:
            continue
        probs = as_tensor(probs)
        weight = 1.0 + beta if target in emotion_word_ids else 1.0
        total = total + weight * _neg_log(probs[target])
    return total


def hierarchical_cls_loss(category_probs, word_probs, gt_category_ids,
                          gt_word_ids) -> Tensor:
    """Negative log-likelihood of every ground-truth category and word under
    the initial emotion distributions."""
    if not gt_category_ids or not gt_word_ids:
        raise ValueError("ground-truth emotion sets must be nonempty")
    category_probs, word_probs = as_tensor(category_probs), as_tensor(word_probs)
    total = Tensor(0.0)
    for c in sorted(gt_category_ids):
        total = total + _neg_log(category_probs[int(c)])
    for w in sorted(gt_word_ids):
        total = total + _neg_log(word_probs[int(w)])
    return total


def total_loss(caption_loss, classification_loss, config: LossConfig) -> Tensor:
    return (config.caption_weight * as_tensor(caption_loss)
            + config.classification_weight * as_tensor(classification_loss))
