"""Finite-difference verification harness.

Every differentiable surface in the package can be checked here: a builder
constructs a small randomized instance, exposes named groups (parameters and
inputs alike) as leaf tensors, and provides a scalar forward. Central
differences with step 1e-5 at float64 are compared against one reverse-mode
pass; the guarded relative error |a - n| / max(|a|, |n|, 1e-5) must stay below
the tolerance for every element of every group. The 1e-5 floor makes elements
whose true gradient sits at the float64 central-difference roundoff level
(~1e-10 absolute for unit-scale objectives) compare absolutely at 1e-9, which
still flags any real backward defect.

Hard top-K selections are frozen at build time, matching training, where no
gradient flows through the selection itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import EmotionTaxonomy, Vocabulary, RESERVED_TOKENS
from .decoder import DecoderParams, DecoderState, TextCorrelatorParams, correlate_text, decode_step
from .encoders import (EmotionEncoderParams, VideoEncoderParams, build_topk_mask,
                       encode_emotion_words, encode_video, predict_categories)
from .evolution import ELEMENT_THEN_SUBSPACE, EvolutionParams, evolve_step
from .model import DualPathModel, ModelConfig
from .nn import Attention, Linear, SelfAttentionBlock, weighted_pool
from .objectives import LossConfig, emotion_focused_ce, hierarchical_cls_loss, total_loss
from .tensor import Tensor, no_grad, parameter, softmax


@dataclass
class GroupResult:
    max_rel: float
    mean_rel: float


@dataclass
class GradCheckReport:
    module: str
    tolerance: float
    groups: dict[str, GroupResult]

    @property
    def max_rel(self) -> float:
        return max(g.max_rel for g in self.groups.values())

    @property
    def failures(self) -> list[str]:
        return [k for k, g in self.groups.items() if g.max_rel >= self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failures

    def raise_if_failed(self) -> None:
        if not self.passed:
            raise GradCheckError(f"gradient check failed for {self.module}: "
                                 f"groups {self.failures} exceed {self.tolerance}")

    def format_table(self) -> str:
        width = max(len(k) for k in self.groups)
        lines = [f"module {self.module}  (tolerance {self.tolerance:g})"]
        for name, g in sorted(self.groups.items()):
            status = "ok" if g.max_rel < self.tolerance else "FAIL"
            lines.append(f"  {name:<{width}}  max {g.max_rel:.3e}  mean {g.mean_rel:.3e}  {status}")
        lines.append(f"  overall max relative error {self.max_rel:.3e} "
                     f"-> {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


class GradCheckError(Exception):
    pass


def _rel_err(a: np.ndarray, n: np.ndarray) -> np.ndarray:
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-5)


def check_groups(groups: dict[str, Tensor], forward, module: str,
                 step: float = 1e-5, tolerance: float = 1e-4) -> GradCheckReport:
    """Compare reverse-mode gradients of ``forward()`` against central
    differences for every element of every group tensor."""
    for g in groups.values():
        g.zero_grad()
    out = forward()
    if out.size != 1:
        raise ValueError("gradcheck forward must return a scalar")
    out.backward()
    analytic = {k: (np.zeros_like(v.data) if v.grad is None else v.grad.copy())
                for k, v in groups.items()}

    results: dict[str, GroupResult] = {}
    with no_grad():
        for name, tensor in groups.items():
            flat = tensor.data.reshape(-1)
            numeric = np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                hi = float(forward().data)
                flat[i] = orig - step
                lo = float(forward().data)
                flat[i] = orig
                numeric[i] = (hi - lo) / (2.0 * step)
            rel = _rel_err(analytic[name].reshape(-1), numeric)
            results[name] = GroupResult(float(rel.max()), float(rel.mean()))
    return GradCheckReport(module, tolerance, results)


# ---------------------------------------------------------------------------
# Builders, one per checkable surface
# ---------------------------------------------------------------------------

N_TOKENS = 4
D_MODEL = 12
SUBSPACES = (2, 3)
EXTENSION = 5


def _proj(rng, shape) -> np.ndarray:
    return rng.standard_normal(shape)


def _toy_taxonomy(n_categories=3, words_per_category=2) -> EmotionTaxonomy:
    cats = [f"c{i}" for i in range(n_categories)]
    words = [f"w{i}" for i in range(n_categories * words_per_category)]
    membership = {c: frozenset(range(c * words_per_category, (c + 1) * words_per_category))
                  for c in range(n_categories)}
    return EmotionTaxonomy(cats, words, membership)


def _build_linear(rng):
    layer = Linear(rng, 5, 3)
    x = parameter(rng.standard_normal((4, 5)))
    r = _proj(rng, (4, 3))
    groups = {**{f"linear.{k}": v for k, v in layer.parameters().items()}, "input.x": x}
    return groups, lambda: (layer(x) * r).sum()


def _build_softmax_rows(rng):
    x = parameter(rng.standard_normal((4, 6)))
    r = _proj(rng, (4, 6))
    return {"input.x": x}, lambda: (softmax(x, axis=-1) * r).sum()


def _build_weighted_pool(rng):
    rows = parameter(rng.standard_normal((5, 8)))
    score = parameter(rng.standard_normal((8, 3)) * 0.3)
    value = parameter(rng.standard_normal((8, 4)) * 0.3)
    r = _proj(rng, (3, 4))
    groups = {"input.rows": rows, "score_proj": score, "value_proj": value}
    return groups, lambda: (weighted_pool(rows, score, value) * r).sum()


def _build_cross_attention(rng):
    attn = Attention(rng, D_MODEL, D_MODEL, D_MODEL)
    q = parameter(rng.standard_normal((N_TOKENS, D_MODEL)))
    kv = parameter(rng.standard_normal((6, D_MODEL)))
    mask = (rng.uniform(size=(N_TOKENS, 6)) < 0.7).astype(float)
    mask[:, 0] = 1.0  # every query keeps at least one key
    r = _proj(rng, (N_TOKENS, D_MODEL))
    groups = {**{f"attn.{k}": v for k, v in attn.parameters().items()},
              "input.q": q, "input.kv": kv}
    return groups, lambda: (attn(q, kv, mask=mask) * r).sum()


def _build_self_attention_block(rng):
    block = SelfAttentionBlock(rng, D_MODEL, ff_dim=2 * D_MODEL)
    x = parameter(rng.standard_normal((N_TOKENS, D_MODEL)))
    r = _proj(rng, (N_TOKENS, D_MODEL))
    groups = {**{f"block.{k}": v for k, v in block.parameters().items()}, "input.x": x}
    return groups, lambda: (block(x) * r).sum()


def _build_correlate_text(rng):
    params = TextCorrelatorParams(rng, D_MODEL, 7)
    prefix = parameter(rng.standard_normal((3, D_MODEL)))
    source = parameter(rng.standard_normal((N_TOKENS, 7)))
    r = _proj(rng, (N_TOKENS, D_MODEL))
    groups = {**{f"correlator.{k}": v for k, v in params.parameters().items()},
              "input.prefix": prefix, "input.source": source}
    return groups, lambda: (correlate_text(prefix, source, params) * r).sum()


def _build_encode_video(rng):
    enc = VideoEncoderParams(rng, 7, 5, D_MODEL, ff_dim=2 * D_MODEL)
    app = parameter(rng.standard_normal((N_TOKENS, 7)))
    mot = parameter(rng.standard_normal((N_TOKENS, 5)))
    r = _proj(rng, (N_TOKENS, D_MODEL))
    groups = {**{f"video.{k}": v for k, v in enc.parameters().items()},
              "input.appearance": app, "input.motion": mot}
    return groups, lambda: (encode_video(app, mot, enc) * r).sum()


def _build_encoders(rng):
    taxonomy = _toy_taxonomy()
    venc = VideoEncoderParams(rng, 7, 5, D_MODEL, ff_dim=2 * D_MODEL)
    eenc = EmotionEncoderParams(rng, taxonomy, D_MODEL, D_MODEL)
    app = parameter(rng.standard_normal((N_TOKENS, 7)))
    mot = parameter(rng.standard_normal((N_TOKENS, 5)))
    r_word = _proj(rng, (N_TOKENS, D_MODEL))
    r_cat = _proj(rng, (taxonomy.n_categories,))
    r_wp = _proj(rng, (taxonomy.n_words,))
    with no_grad():
        video0 = encode_video(app, mot, venc)
        _, cat_probs0 = predict_categories(video0, eenc)
    mask = build_topk_mask(cat_probs0.data, taxonomy, k=2, n_rows=N_TOKENS)

    def forward():
        video = encode_video(app, mot, venc)
        _, cat_probs = predict_categories(video, eenc)
        word_feats, word_probs = encode_emotion_words(video, eenc, mask)
        return (word_feats * r_word).sum() + (cat_probs * r_cat).sum() + (word_probs * r_wp).sum()

    groups = {**{f"video.{k}": v for k, v in venc.parameters().items()},
              **{f"emotion.{k}": v for k, v in eenc.parameters().items()},
              "input.appearance": app, "input.motion": mot}
    return groups, forward


def _make_evolve_builder(order: str):
    def _build(rng):
        params = EvolutionParams(rng, D_MODEL, D_MODEL, D_MODEL,
                                 extension_size=EXTENSION, subspace_sizes=SUBSPACES)
        state = parameter(rng.standard_normal((N_TOKENS, D_MODEL)))
        video = parameter(rng.standard_normal((N_TOKENS, D_MODEL)))
        prefix = parameter(rng.standard_normal((3, D_MODEL)))
        r = _proj(rng, (N_TOKENS, D_MODEL))

        def forward():
            evolved, _ = evolve_step(state, video, prefix, params, order=order)
            return (evolved * r).sum()

        groups = {**{f"evolution.{k}": v for k, v in params.parameters().items()},
                  "input.state": state, "input.video": video, "input.prefix": prefix}
        return groups, forward
    return _build


def _build_decode_step(rng):
    vocab_size = 14
    dec = DecoderParams(rng, vocab_size, D_MODEL, D_MODEL, D_MODEL, hidden_size=10)
    video = parameter(rng.standard_normal((N_TOKENS, D_MODEL)))
    emotion = parameter(rng.standard_normal((N_TOKENS, D_MODEL)))
    r = _proj(rng, (vocab_size,))
    prefix_ids = [1, 5, 7]

    def forward():
        zeros = Tensor(np.zeros((1, dec.hidden_size)))
        state = DecoderState(len(prefix_ids), prefix_ids, zeros, zeros, max_len=15)
        probs, hidden, cell, gate = decode_step(video, emotion, state, dec)
        return (probs * r).sum()

    groups = {**{f"decoder.{k}": v for k, v in dec.parameters().items()},
              "input.video": video, "input.emotion": emotion}
    return groups, forward


def _build_total_loss(rng):
    taxonomy = _toy_taxonomy()
    tokens = RESERVED_TOKENS + [f"t{i}" for i in range(12)]
    vocab = Vocabulary(tokens, {4, 5})
    config = ModelConfig(d_appearance=5, d_motion=4, d_video=D_MODEL, d_text=D_MODEL,
                         d_emotion=D_MODEL, hidden_size=10, top_k=2,
                         extension_size=EXTENSION, subspace_sizes=SUBSPACES,
                         ff_dim=2 * D_MODEL, max_caption_len=6, seed=int(rng.integers(1 << 30)))
    model = DualPathModel(config, taxonomy, vocab)
    loss_config = LossConfig()
    app = parameter(rng.standard_normal((N_TOKENS, 5)))
    mot = parameter(rng.standard_normal((N_TOKENS, 4)))
    targets = [5, 7, 4, 2]  # one emotion word, plain words, EOS
    gt_cats, gt_words = {0, 2}, {1, 4}
    with no_grad():
        video0 = encode_video(app, mot, model.video_encoder)
        _, cat_probs0 = predict_categories(video0, model.emotion_encoder)
    mask = build_topk_mask(cat_probs0.data, taxonomy, k=config.top_k, n_rows=N_TOKENS)

    def forward():
        video = encode_video(app, mot, model.video_encoder)
        _, cat_probs = predict_categories(video, model.emotion_encoder)
        word_feats, word_probs = encode_emotion_words(video, model.emotion_encoder, mask)
        probs, _ = model.teacher_forced(video, word_feats, targets)
        caption_loss = emotion_focused_ce(probs, targets, vocab.emotion_word_ids,
                                          beta=loss_config.emotion_penalty)
        cls_loss = hierarchical_cls_loss(cat_probs, word_probs, gt_cats, gt_words)
        return total_loss(caption_loss, cls_loss, loss_config)

    groups = {**{f"model.{k}": v for k, v in model.parameters().items()},
              "input.appearance": app, "input.motion": mot}
    return groups, forward


_BUILDERS = {
    "linear": _build_linear,
    "softmax_rows": _build_softmax_rows,
    "weighted_pool": _build_weighted_pool,
    "cross_attention": _build_cross_attention,
    "self_attention_block": _build_self_attention_block,
    "correlate_text": _build_correlate_text,
    "encode_video": _build_encode_video,
    "encoders": _build_encoders,
    "evolve_step": _make_evolve_builder(ELEMENT_THEN_SUBSPACE),
    "evolve_step_swapped": _make_evolve_builder("subspace_then_element"),
    "decode_step": _build_decode_step,
    "total_loss": _build_total_loss,
}

NN_PRIMITIVES = ("softmax_rows", "weighted_pool", "cross_attention", "self_attention_block")


def available_modules() -> list[str]:
    return ["nn_primitives", *sorted(_BUILDERS), "all"]


def grad_check(module: str, seed: int = 0, step: float = 1e-5,
               tolerance: float = 1e-4) -> GradCheckReport:
    """Run the harness for one named surface (or the aggregates
    ``nn_primitives`` / ``all``)."""
    if module == "nn_primitives":
        names = NN_PRIMITIVES
    elif module == "all":
        names = tuple(sorted(_BUILDERS))
    elif module in _BUILDERS:
        names = (module,)
    else:
        raise KeyError(f"unknown gradcheck module {module!r}; "
                       f"choose from {available_modules()}")
    merged: dict[str, GroupResult] = {}
    for name in names:
        rng = np.random.default_rng(seed)
        groups, forward = _BUILDERS[name](rng)
        report = check_groups(groups, forward, name, step=step, tolerance=tolerance)
        prefix = "" if len(names) == 1 else f"{name}/"
        for k, v in report.groups.items():
            merged[prefix + k] = v
    return GradCheckReport(module, tolerance, merged)
