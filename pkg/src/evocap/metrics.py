"""Caption evaluation: emotion word/sentence accuracy, corpus BLEU, ROUGE-L,
CIDEr with TF-IDF n-gram vectors, and the two hybrid combinations.

All scores are deterministic and invariant to permuting the videos. The
emotion-accuracy and hybrid formulas are local reconstructions (the defining
prior work is cited upstream, not vendored); every report flags them as such.
METEOR needs external synonym resources and is reported as "n/a".
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass

HYBRID_DEFINITION = ("local: (1 - w) * semantic + w * acc_sw with BLEU-4 / "
                     "CIDEr-over-10 as the semantic component")


def _check_corpus(candidates, references):
    if len(candidates) == 0:
        raise ValueError("empty evaluation corpus")
    if len(candidates) != len(references):
        raise ValueError("candidates and references must align per video")


# ---------------------------------------------------------------------------
# Emotion accuracy
# ---------------------------------------------------------------------------


def emotion_accuracy(candidates: list[list[str]], references: list[list[list[str]]],
                     emotion_words) -> tuple[float, float]:
    """Word-level and sentence-level emotion accuracy.

    acc_sw: generated emotion-word tokens found in the video's reference
    emotion-word union, over all generated emotion-word tokens (0 when none
    are generated). acc_c: fraction of videos whose candidate contains at
    least one emotion word and all of its emotion words appear in the
    reference union.
    """
    _check_corpus(candidates, references)
    emotion_words = set(emotion_words)
    matched = total = correct_sentences = 0
    for cand, refs in zip(candidates, references):
        cand_emotion = [t for t in cand if t in emotion_words]
        ref_emotion = {t for ref in refs for t in ref if t in emotion_words}
        total += len(cand_emotion)
        matched += sum(1 for t in cand_emotion if t in ref_emotion)
        if cand_emotion and all(t in ref_emotion for t in cand_emotion):
            correct_sentences += 1
    acc_sw = matched / total if total else 0.0
    acc_c = correct_sentences / len(candidates)
    return acc_sw, acc_c


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_len(cand_len: int, refs) -> int:
    # ties resolve toward the shorter reference
    return min((abs(len(r) - cand_len), len(r)) for r in refs)[1]


def bleu_corpus(candidates, references, max_n: int = 4) -> list[float]:
    """Corpus-level BLEU-1..max_n with brevity penalty and uniform weights."""
    _check_corpus(candidates, references)
    matched = [0] * max_n
    guess = [0] * max_n
    cand_len = ref_len = 0
    for cand, refs in zip(candidates, references):
        cand_len += len(cand)
        ref_len += _closest_ref_len(len(cand), refs)
        for n in range(1, max_n + 1):
            counts = _ngrams(cand, n)
            max_ref = Counter()
            for ref in refs:
                for gram, c in _ngrams(ref, n).items():
                    max_ref[gram] = max(max_ref[gram], c)
            matched[n - 1] += sum(min(c, max_ref[g]) for g, c in counts.items())
            guess[n - 1] += max(0, len(cand) - n + 1)
    if cand_len == 0:
        return [0.0] * max_n
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    precisions = [matched[i] / guess[i] if guess[i] > 0 else 0.0 for i in range(max_n)]
    scores = []
    for k in range(1, max_n + 1):
        if any(precisions[i] == 0.0 for i in range(k)):
            scores.append(0.0)
            continue
        log_avg = sum(math.log(precisions[i]) for i in range(k)) / k
        scores.append(bp * math.exp(log_avg))
    return scores


# ---------------------------------------------------------------------------
# ROUGE-L
# ---------------------------------------------------------------------------


def _lcs_len(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(candidates, references, beta_sq: float = 1.2) -> float:
    """Longest-common-subsequence F-measure, averaged over videos; per video
    the best precision and best recall over the references combine via
    F = (1 + beta^2) P R / (R + beta^2 P)."""
    _check_corpus(candidates, references)
    per_video = []
    for cand, refs in zip(candidates, references):
        best_p = best_r = 0.0
        for ref in refs:
            lcs = _lcs_len(cand, ref)
            if len(cand) > 0:
                best_p = max(best_p, lcs / len(cand))
            if len(ref) > 0:
                best_r = max(best_r, lcs / len(ref))
        denom = best_r + beta_sq * best_p
        per_video.append((1 + beta_sq) * best_p * best_r / denom if denom > 0 else 0.0)
    # fsum keeps the corpus reduction exactly permutation-invariant
    return math.fsum(per_video) / len(candidates)


# ---------------------------------------------------------------------------
# CIDEr
# ---------------------------------------------------------------------------


def cider(candidates, references, max_n: int = 4, sigma: float = 6.0) -> float:
    """TF-IDF n-gram similarity with clipped counts and a gaussian length
    penalty; document frequencies come from the evaluation references. The
    conventional x10 scaling puts the score in [0, 10]."""
    _check_corpus(candidates, references)
    n_videos = len(candidates)
    doc_freq: list[dict] = [defaultdict(int) for _ in range(max_n)]
    for refs in references:
        for n in range(1, max_n + 1):
            grams = set()
            for ref in refs:
                grams |= set(_ngrams(ref, n).keys())
            for g in grams:
                doc_freq[n - 1][g] += 1
    log_videos = math.log(n_videos)

    def vectorize(tokens):
        vecs, norms = [], []
        for n in range(1, max_n + 1):
            vec = {}
            for g, c in _ngrams(tokens, n).items():
                idf = log_videos - math.log(max(1.0, doc_freq[n - 1][g]))
                vec[g] = c * idf
            vecs.append(vec)
            norms.append(math.sqrt(sum(v * v for v in vec.values())))
        return vecs, norms

    per_video = []
    for cand, refs in zip(candidates, references):
        cand_vecs, cand_norms = vectorize(cand)
        per_n = [0.0] * max_n
        for ref in refs:
            ref_vecs, ref_norms = vectorize(ref)
            penalty = math.exp(-((len(cand) - len(ref)) ** 2) / (2.0 * sigma ** 2))
            for n in range(max_n):
                dot = sum(min(v, ref_vecs[n].get(g, 0.0)) * ref_vecs[n].get(g, 0.0)
                          for g, v in cand_vecs[n].items())
                if cand_norms[n] != 0 and ref_norms[n] != 0:
                    dot /= cand_norms[n] * ref_norms[n]
                else:
                    dot = 0.0
                per_n[n] += dot * penalty
        per_video.append(sum(per_n) / max_n / len(refs) * 10.0)
    # fsum keeps the corpus reduction exactly permutation-invariant
    return math.fsum(per_video) / n_videos


def ngram_metrics(candidates, references) -> tuple[list[float], float, float]:
    """(BLEU-1..4, ROUGE-L, CIDEr) on tokenized candidates/references."""
    return (bleu_corpus(candidates, references),
            rouge_l(candidates, references),
            cider(candidates, references))


# ---------------------------------------------------------------------------
# Hybrid scores and the full report
# ---------------------------------------------------------------------------


def hybrid_scores(bleu4: float, cider_score: float, acc_sw: float,
                  weight: float = 0.5) -> tuple[float, float]:
    """Local hybrid definition: convex mix of a semantic component (BLEU-4, or
    CIDEr rescaled to [0, 1]) with word-level emotion accuracy."""
    if not 0.0 <= weight <= 1.0:
        raise ValueError("hybrid weight must lie in [0, 1]")
    bfs = (1.0 - weight) * bleu4 + weight * acc_sw
    cfs = (1.0 - weight) * (cider_score / 10.0) + weight * acc_sw
    return bfs, cfs


@dataclass
class MetricReport:
    acc_sw: float
    acc_c: float
    bleu: list[float]
    rouge_l: float
    cider: float
    bfs: float
    cfs: float
    hybrid_weight: float = 0.5

    def to_dict(self) -> dict:
        return {
            "acc_sw": self.acc_sw,
            "acc_c": self.acc_c,
            "bleu_1": self.bleu[0],
            "bleu_2": self.bleu[1],
            "bleu_3": self.bleu[2],
            "bleu_4": self.bleu[3],
            "meteor": "n/a",
            "rouge_l": self.rouge_l,
            "cider": self.cider,
            "bfs": self.bfs,
            "cfs": self.cfs,
            "hybrid_weight": self.hybrid_weight,
            "hybrid_definition": HYBRID_DEFINITION,
        }

    def to_csv(self) -> str:
        rows = ["metric,value"]
        for key, val in self.to_dict().items():
            rows.append(f"{key},{val}")
        return "\n".join(rows) + "\n"


def compute_report(candidates, references, emotion_words,
                   hybrid_weight: float = 0.5) -> MetricReport:
    acc_sw, acc_c = emotion_accuracy(candidates, references, emotion_words)
    bleu, rouge, cid = ngram_metrics(candidates, references)
    bfs, cfs = hybrid_scores(bleu[3], cid, acc_sw, weight=hybrid_weight)
    return MetricReport(acc_sw, acc_c, bleu, rouge, cid, bfs, cfs, hybrid_weight)
