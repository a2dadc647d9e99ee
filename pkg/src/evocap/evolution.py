"""Per-step emotion evolution: summarize the generation state, gate emotion
elements by learned nonnegative factors, re-compose feature subspaces with
attention-derived modulations, and merge the candidates back onto the previous
state through a residual sum.

The evolved state is recomputed at every generation step, synchronized with
the caption decoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import Attention, Linear, Module, weighted_pool
from .tensor import Tensor, as_tensor, concat, parameter, softmax
from .nn import uniform_init

ELEMENT_THEN_SUBSPACE = "element_then_subspace"
SUBSPACE_THEN_ELEMENT = "subspace_then_element"
EVOLUTION_ORDERS = (ELEMENT_THEN_SUBSPACE, SUBSPACE_THEN_ELEMENT)


class EvolutionParams(Module):
    def __init__(self, rng, d_video: int, d_text: int, d_emotion: int,
                 extension_size: int = 100, subspace_sizes=(2, 3, 5, 6, 10),
                 heads: int = 1):
        if extension_size <= 0:
            raise ValueError("extension size must be positive")
        subspace_sizes = tuple(int(k) for k in subspace_sizes)
        for k in subspace_sizes:
            if k <= 0 or d_emotion % k != 0:
                raise ValueError(f"subspace size {k} must divide emotion width {d_emotion}")
        self.subspace_sizes = subspace_sizes
        self.extension_size = extension_size
        self.d_emotion = d_emotion
        self.video_proj = Linear(rng, d_video, d_text, bias=False)
        self.extend_score = parameter(uniform_init(rng, (d_text, extension_size), d_text))
        self.extend_value = parameter(uniform_init(rng, (d_text, d_emotion), d_text))
        self.element_gate = Linear(rng, 2 * d_emotion, 1)
        self.modulators = [Attention(rng, d_emotion, d_emotion, k, heads=heads)
                           for k in subspace_sizes]
        self.mixers = [Attention(rng, d_emotion, d_emotion, 1, heads=heads)
                       for _ in subspace_sizes]


@dataclass
class EvolutionTrace:
    """Per-step diagnostics; plain arrays, detached from the autodiff graph."""

    step: int
    alignment: np.ndarray | None = None       # extension-row weights, sums to 1
    element_factors: np.ndarray | None = None  # nonnegative per-element gates
    subspace_weights: np.ndarray | None = None  # simplex over subspace candidates
    candidate_norms: list[float] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "t": self.step,
            "alignment": None if self.alignment is None else self.alignment.tolist(),
            "element_factors": (None if self.element_factors is None
                                else self.element_factors.tolist()),
            "subspace_weights": (None if self.subspace_weights is None
                                 else self.subspace_weights.tolist()),
            "candidate_norms": self.candidate_norms,
        }


def extend_features(video: Tensor, prefix: Tensor, params: EvolutionParams
                    ) -> tuple[Tensor, Tensor]:
    """Stack projected video tokens with the caption prefix and pool the stack
    down to a fixed number of emotion-space rows."""
    video, prefix = as_tensor(video), as_tensor(prefix)
    combined = concat([params.video_proj(video), prefix], axis=0)
    extended = weighted_pool(combined, params.extend_score, params.extend_value)
    return combined, extended


def element_evolve(state: Tensor, extended: Tensor, params: EvolutionParams
                   ) -> tuple[Tensor, Tensor, Tensor]:
    """Gate each emotion element by a nonnegative relevance factor.

    Returns (alignment over extension rows, factors as an N x 1 column,
    gated state).
    """
    state, extended = as_tensor(state), as_tensor(extended)
    relevance = state @ extended.T
    alignment = softmax(relevance.mean(axis=0, keepdims=True), axis=-1)
    context = alignment @ extended
    tiled = Tensor(np.ones((state.shape[0], 1))) * context
    factors = params.element_gate(concat([state, tiled], axis=1)).relu()
    gated = factors * state
    return alignment, factors, gated


def subspace_candidates(source: Tensor, extended: Tensor, params: EvolutionParams
                        ) -> tuple[list[Tensor], Tensor]:
    """Re-compose the source features once per subspace size and score each
    candidate; returns (candidates, simplex weights over candidates)."""
    n, d = source.shape
    candidates: list[Tensor] = []
    scores: list[Tensor] = []
    for k, modulator, mixer in zip(params.subspace_sizes, params.modulators, params.mixers):
        modulation = modulator(source, extended).tanh()          # N x k
        grouped = source.reshape(n, k, d // k)
        candidate = (grouped * modulation.reshape(n, k, 1)).reshape(n, d)
        candidates.append(candidate)
        scores.append(mixer(source, extended))                   # N x 1
    stacked = concat(scores, axis=1)
    weights = softmax(stacked.mean(axis=0, keepdims=True), axis=-1).reshape(-1)
    return candidates, weights


def subspace_recompose(gated: Tensor, extended: Tensor, state: Tensor,
                       params: EvolutionParams) -> tuple[list[Tensor], Tensor, Tensor]:
    """Mix re-composed candidates onto the previous state (residual merge)."""
    candidates, weights = subspace_candidates(gated, extended, params)
    evolved = as_tensor(state)
    for j, candidate in enumerate(candidates):
        evolved = evolved + weights[j] * candidate
    return candidates, weights, evolved


def evolve_step(state: Tensor, video: Tensor, prefix: Tensor, params: EvolutionParams,
                order: str = ELEMENT_THEN_SUBSPACE, element_level: bool = True,
                subspace_level: bool = True, step: int = 0
                ) -> tuple[Tensor, EvolutionTrace]:
    """One evolution step; ``order`` picks which stage runs first when both are
    enabled. The residual merge guarantees the state is unchanged when every
    candidate is zero."""
    if order not in EVOLUTION_ORDERS:
        raise ValueError(f"unknown evolution order {order!r}")
    state = as_tensor(state)
    trace = EvolutionTrace(step=step)
    if not element_level and not subspace_level:
        return state, trace

    _, extended = extend_features(video, prefix, params)

    if element_level and not subspace_level:
        alignment, factors, gated = element_evolve(state, extended, params)
        trace.alignment = alignment.data.reshape(-1).copy()
        trace.element_factors = factors.data.reshape(-1).copy()
        return gated, trace

    if subspace_level and not element_level:
        candidates, weights, evolved = subspace_recompose(state, extended, state, params)
        trace.subspace_weights = weights.data.copy()
        trace.candidate_norms = [float(np.linalg.norm(c.data)) for c in candidates]
        return evolved, trace

    if order == ELEMENT_THEN_SUBSPACE:
        alignment, factors, gated = element_evolve(state, extended, params)
        candidates, weights, evolved = subspace_recompose(gated, extended, state, params)
    else:
        # subspace stage first: re-compose the raw state, then the element gate
        # scales the mixed candidate before the residual merge
        candidates, weights = subspace_candidates(state, extended, params)
        mixed = weights[0] * candidates[0]
        for j in range(1, len(candidates)):
            mixed = mixed + weights[j] * candidates[j]
        alignment, factors, gated = element_evolve(mixed, extended, params)
        evolved = state + gated

    trace.alignment = alignment.data.reshape(-1).copy()
    trace.element_factors = factors.data.reshape(-1).copy()
    trace.subspace_weights = weights.data.copy()
    trace.candidate_norms = [float(np.linalg.norm(c.data)) for c in candidates]
    return evolved, trace
