"""Emotion-adaptive caption decoder.

At every step the caption prefix is aligned against the emotion elements and
the video tokens (additive attention over prefix positions, one context row
per conditioning element). A sigmoid intensity gate derived from the
emotion-correlated context decides how strongly the evolved emotion features
steer the step; the gated fusion is pooled into an LSTM cell whose output head
produces the next-word distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import BOS, EOS
from .evolution import ELEMENT_THEN_SUBSPACE, EvolutionParams, evolve_step
from .nn import Linear, LSTMCell, Module, uniform_init
from .tensor import Tensor, as_tensor, concat, no_grad, parameter, softmax


class TextCorrelatorParams(Module):
    """Additive-attention stream: project prefix rows and conditioning rows
    into a shared space, score every (position, element) pair with a learned
    vector, and normalize over prefix positions."""

    def __init__(self, rng, d_text: int, d_source: int, d_attn: int | None = None):
        d_attn = d_text if d_attn is None else d_attn
        self.text_proj = parameter(uniform_init(rng, (d_text, d_attn), d_text))
        self.source_proj = parameter(uniform_init(rng, (d_source, d_attn), d_source))
        self.bias = parameter(np.zeros(d_attn))
        self.score = parameter(uniform_init(rng, (d_attn,), d_attn))


def correlate_text(prefix: Tensor, source: Tensor, params: TextCorrelatorParams) -> Tensor:
    """One prefix-mixture row per conditioning element (rows of ``source``)."""
    prefix, source = as_tensor(prefix), as_tensor(source)
    t, n = prefix.shape[0], source.shape[0]
    ty = prefix @ params.text_proj
    ts = source @ params.source_proj
    hidden = (ty.reshape(t, 1, -1) + ts.reshape(1, n, -1) + params.bias).tanh()
    scores = (hidden.reshape(t * n, -1) @ params.score).reshape(t, n)
    attention = softmax(scores, axis=0)
    return attention.T @ prefix


def emotion_gate(correlated: Tensor, params: Linear) -> Tensor:
    """Per-element intensity in (0, 1), shaped N x 1 for row-wise gating."""
    return params(correlated).sigmoid()


class DecoderParams(Module):
    def __init__(self, rng, vocab_size: int, d_video: int, d_text: int, d_emotion: int,
                 hidden_size: int = 512, prev_word_input: bool = True):
        self.hidden_size = hidden_size
        self.prev_word_input = prev_word_input
        self.word_embeddings = parameter(rng.uniform(-0.1, 0.1, size=(vocab_size, d_text)))
        self.visual_correlator = TextCorrelatorParams(rng, d_text, d_video)
        self.emotion_correlator = TextCorrelatorParams(rng, d_text, d_emotion)
        self.gate = Linear(rng, d_text, 1)
        cell_in = d_video + d_text + d_emotion + (d_text if prev_word_input else 0)
        self.cell = LSTMCell(rng, cell_in, hidden_size)
        self.out = Linear(rng, hidden_size, vocab_size)

    def embed(self, token_ids) -> Tensor:
        return self.word_embeddings[np.asarray(token_ids, dtype=np.intp)]

    def initial_state(self, max_len: int = 15) -> "DecoderState":
        zeros = Tensor(np.zeros((1, self.hidden_size)))
        return DecoderState(step=1, prefix_ids=[BOS], hidden=zeros, cell=zeros,
                            max_len=max_len)


@dataclass
class DecoderState:
    step: int
    prefix_ids: list[int]
    hidden: Tensor
    cell: Tensor
    max_len: int = 15
    gate: np.ndarray | None = None

    def advance(self, token_id: int, hidden: Tensor, cell: Tensor,
                gate: np.ndarray) -> "DecoderState":
        return DecoderState(self.step + 1, self.prefix_ids + [int(token_id)],
                            hidden, cell, self.max_len, gate)


def decode_step(video: Tensor, emotion: Tensor, state: DecoderState,
                params: DecoderParams, gate_override: np.ndarray | None = None
                ) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """One decoding step against the emotion state evolved for the same step.

    Returns (next-word distribution, new hidden, new cell, gate column).
    ``gate_override`` replaces the computed intensity (test harness hook).
    """
    if len(state.prefix_ids) - 1 >= state.max_len:
        raise ValueError("caption prefix already at maximum length")
    prefix = params.embed(state.prefix_ids)
    visual_ctx = correlate_text(prefix, video, params.visual_correlator)
    emotion_ctx = correlate_text(prefix, emotion, params.emotion_correlator)
    if gate_override is None:
        gate = emotion_gate(emotion_ctx, params.gate)
    else:
        gate = Tensor(np.asarray(gate_override, dtype=np.float64).reshape(-1, 1))
    fused = concat([video, visual_ctx, gate * emotion], axis=1)
    cell_input = fused.mean(axis=0, keepdims=True)
    if params.prev_word_input:
        cell_input = concat([cell_input, params.embed([state.prefix_ids[-1]])], axis=1)
    hidden, cell = params.cell(cell_input, state.hidden, state.cell)
    probs = softmax(params.out(hidden), axis=-1).reshape(-1)
    return probs, hidden, cell, gate


@dataclass
class StepTrace:
    step: int
    gate_mean: float
    gate_max: float
    subspace_weights: list[float]
    evolution: dict

    def to_json_dict(self) -> dict:
        return {"t": self.step, "g_mean": self.gate_mean, "g_max": self.gate_max,
                "R_aft": self.subspace_weights, "evolution": self.evolution}


@dataclass
class _Beam:
    ids: list[int]
    logp: float
    emotion: Tensor
    hidden: Tensor
    cell: Tensor
    finished: bool = False
    steps: list[StepTrace] = field(default_factory=list)

    def generated(self) -> list[int]:
        return self.ids[1:]

    def score(self) -> float:
        return self.logp / max(1, len(self.ids) - 1)


def _step_trace(t: int, gate: Tensor, evo_trace) -> StepTrace:
    g = gate.data.reshape(-1)
    weights = ([] if evo_trace.subspace_weights is None
               else [float(w) for w in evo_trace.subspace_weights])
    return StepTrace(t, float(g.mean()), float(g.max()), weights,
                     evo_trace.to_json_dict())


def generate(video: Tensor, emotion0: Tensor, evo_params: EvolutionParams,
             dec_params: DecoderParams, mode: str = "greedy", beam_size: int = 1,
             max_len: int = 15, order: str = ELEMENT_THEN_SUBSPACE,
             element_level: bool = True, subspace_level: bool = True
             ) -> tuple[list[int], list[StepTrace]]:
    """Alternate evolution and decoding from the initial emotion state.

    Greedy picks the argmax token each step; beam search keeps ``beam_size``
    hypotheses ranked by cumulative log-probability and returns the best one
    under length-normalized log-probability. Runs with the graph disabled.
    """
    if mode not in ("greedy", "beam"):
        raise ValueError(f"unknown decode mode {mode!r}")
    if beam_size < 1:
        raise ValueError("beam size must be >= 1")
    kwargs = dict(order=order, element_level=element_level, subspace_level=subspace_level)
    with no_grad():
        if mode == "greedy":
            best = _greedy(video, as_tensor(emotion0), evo_params, dec_params,
                           max_len, **kwargs)
        else:
            best = _beam_search(video, as_tensor(emotion0), evo_params, dec_params,
                                beam_size, max_len, **kwargs)
    caption = [i for i in best.generated() if i != EOS]
    return caption, best.steps


def _greedy(video, emotion, evo_params, dec_params, max_len, **kwargs) -> _Beam:
    zeros = Tensor(np.zeros((1, dec_params.hidden_size)))
    beam = _Beam([BOS], 0.0, emotion, zeros, zeros)
    for t in range(1, max_len + 1):
        prefix = dec_params.embed(beam.ids)
        evolved, evo_trace = evolve_step(beam.emotion, video, prefix, evo_params,
                                         step=t, **kwargs)
        state = DecoderState(t, beam.ids, beam.hidden, beam.cell, max_len)
        probs, hidden, cell, gate = decode_step(video, evolved, state, dec_params)
        tok = int(np.argmax(probs.data))
        beam = _Beam(beam.ids + [tok], beam.logp + float(np.log(max(probs.data[tok], 1e-300))),
                     evolved, hidden, cell, finished=(tok == EOS),
                     steps=beam.steps + [_step_trace(t, gate, evo_trace)])
        if beam.finished:
            break
    return beam


def _beam_search(video, emotion, evo_params, dec_params, beam_size, max_len,
                 **kwargs) -> _Beam:
    zeros = Tensor(np.zeros((1, dec_params.hidden_size)))
    beams = [_Beam([BOS], 0.0, emotion, zeros, zeros)]
    for t in range(1, max_len + 1):
        if all(b.finished for b in beams):
            break
        pool: list[_Beam] = []
        for beam in beams:
            if beam.finished:
                pool.append(beam)
                continue
            prefix = dec_params.embed(beam.ids)
            evolved, evo_trace = evolve_step(beam.emotion, video, prefix, evo_params,
                                             step=t, **kwargs)
            state = DecoderState(t, beam.ids, beam.hidden, beam.cell, max_len)
            probs, hidden, cell, gate = decode_step(video, evolved, state, dec_params)
            trace = _step_trace(t, gate, evo_trace)
            p = probs.data
            top = np.argsort(-p, kind="stable")[:beam_size]
            for tok in top:
                tok = int(tok)
                logp = beam.logp + float(np.log(max(p[tok], 1e-300)))
                pool.append(_Beam(beam.ids + [tok], logp, evolved, hidden, cell,
                                  finished=(tok == EOS),
                                  steps=beam.steps + [trace]))
        pool.sort(key=lambda b: -b.logp)
        beams = pool[:beam_size]
    return max(beams, key=lambda b: b.score())
