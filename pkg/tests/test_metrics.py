"""Metric suite: closed-form identities, hand-enumerated fixtures, randomized
oracle equivalence at 1e-9, ranges, and permutation invariance."""

import numpy as np
import pytest

from evocap.metrics import (bleu_corpus, cider, compute_report, emotion_accuracy,
                            hybrid_scores, ngram_metrics, rouge_l)

from oracles import (bleu_loops, cider_loops, emotion_accuracy_loops, rouge_l_loops)

WORDS = ["a", "person", "dog", "runs", "walks", "sits", "fast", "slow",
         "joy0", "fear0", "calm0", "park", "home", "eats", "sleeps"]


def random_corpus(rng, n_videos=20, n_refs=2, lo=3, hi=9):
    candidates, references = [], []
    for _ in range(n_videos):
        candidates.append([WORDS[i] for i in rng.integers(0, len(WORDS), rng.integers(lo, hi))])
        refs = []
        for _ in range(n_refs):
            refs.append([WORDS[i] for i in rng.integers(0, len(WORDS), rng.integers(lo, hi))])
        references.append(refs)
    return candidates, references


def overlapping_corpus(rng, n_videos=12):
    """Candidates share chunks with their references so every n-gram order
    has nonzero matches."""
    candidates, references = [], []
    for _ in range(n_videos):
        base = [WORDS[i] for i in rng.integers(0, len(WORDS), 8)]
        cand = list(base)
        k = int(rng.integers(0, 8))
        cand[k] = WORDS[int(rng.integers(0, len(WORDS)))]
        candidates.append(cand)
        references.append([base, [WORDS[i] for i in rng.integers(0, len(WORDS), 7)]])
    return candidates, references


class TestEmotionAccuracy:
    EMOTION = {"joy0", "fear0", "calm0"}

    def test_perfect_match(self):
        cands = [["a", "joy0"], ["fear0", "dog"]]
        refs = [[["b", "joy0"]], [["fear0", "runs"]]]
        assert emotion_accuracy(cands, refs, self.EMOTION) == (1.0, 1.0)

    def test_no_emotion_words_generated(self):
        cands = [["a", "dog"], ["person", "runs"]]
        refs = [[["joy0"]], [["fear0"]]]
        assert emotion_accuracy(cands, refs, self.EMOTION) == (0.0, 0.0)

    def test_hand_enumerated_three_videos(self):
        cands = [["joy0", "dog"],             # correct emotion
                 ["fear0", "joy0"],           # one right, one wrong
                 ["a", "person"]]             # no emotion word
        refs = [[["joy0", "walks"]],
                [["fear0", "sits"]],
                [["calm0"]]]
        acc_sw, acc_c = emotion_accuracy(cands, refs, self.EMOTION)
        # tokens: joy0 (hit), fear0 (hit), joy0 (miss) -> 2/3; sentences: 1/3
        assert acc_sw == pytest.approx(2 / 3)
        assert acc_c == pytest.approx(1 / 3)

    def test_matches_loop_oracle(self, rng):
        cands, refs = random_corpus(rng)
        ours = emotion_accuracy(cands, refs, self.EMOTION)
        theirs = emotion_accuracy_loops(cands, refs, self.EMOTION)
        assert ours == pytest.approx(theirs, abs=1e-12)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            emotion_accuracy([], [], self.EMOTION)

    def test_multiplicity_counts(self):
        cands = [["joy0", "joy0", "fear0"]]
        refs = [[["joy0"]]]
        acc_sw, acc_c = emotion_accuracy(cands, refs, self.EMOTION)
        assert acc_sw == pytest.approx(2 / 3)
        assert acc_c == 0.0


class TestBleu:
    def test_identity_corpus_is_one(self):
        sents = [["a", "dog", "runs", "fast"], ["person", "walks", "home", "slow", "a"]]
        refs = [[s] for s in sents]
        assert bleu_corpus(sents, refs) == pytest.approx([1.0] * 4)

    def test_zero_unigram_overlap(self):
        scores = bleu_corpus([["a", "dog"]], [[["person", "walks"]]])
        assert scores[0] == 0.0

    def test_matches_loop_oracle_on_random_fixtures(self, rng):
        for _ in range(20):
            cands, refs = random_corpus(rng, n_videos=6)
            ours = bleu_corpus(cands, refs)
            theirs = bleu_loops(cands, refs)
            np.testing.assert_allclose(ours, theirs, atol=1e-9)

    def test_nonincreasing_in_order_on_overlap_fixtures(self, rng):
        cands, refs = overlapping_corpus(rng)
        scores = bleu_corpus(cands, refs)
        assert all(b >= a - 1e-12 for a, b in zip(scores[1:], scores[:-1]))

    def test_brevity_penalty_hits_short_candidates(self):
        long_ref = [["a", "dog", "runs", "fast", "home"]]
        short = bleu_corpus([["a", "dog"]], [long_ref])
        assert 0 < short[0] < 1.0

    def test_empty_candidate_contributes_nothing(self):
        scores = bleu_corpus([[], ["a", "dog"]], [[["a"]], [["a", "dog"]]])
        assert all(0.0 <= s <= 1.0 for s in scores)


class TestRouge:
    def test_identity_is_one(self):
        sents = [["a", "dog", "runs"], ["person", "walks"]]
        assert rouge_l(sents, [[s] for s in sents]) == pytest.approx(1.0)

    def test_matches_memoized_recursion_oracle(self, rng):
        for _ in range(20):
            cands, refs = random_corpus(rng, n_videos=5)
            assert rouge_l(cands, refs) == pytest.approx(rouge_l_loops(cands, refs),
                                                         abs=1e-9)

    def test_disjoint_is_zero(self):
        assert rouge_l([["a", "b"]], [[["c", "d"]]]) == 0.0


class TestCider:
    def test_matches_loop_oracle(self, rng):
        for _ in range(20):
            cands, refs = random_corpus(rng, n_videos=6)
            assert cider(cands, refs) == pytest.approx(cider_loops(cands, refs), abs=1e-9)

    def test_range(self, rng):
        cands, refs = overlapping_corpus(rng)
        score = cider(cands, refs)
        assert 0.0 <= score <= 10.0

    def test_identity_scores_ten_on_disjoint_sentences(self):
        # 4+ tokens so every n-gram order exists; no shared n-grams across
        # videos, so each tf-idf cosine is exactly 1 at every order
        sents = [["a", "dog", "runs", "fast"], ["person", "walks", "home", "slow"],
                 ["joy0", "sits", "park", "eats"]]
        refs = [[s] for s in sents]
        assert cider(sents, refs) == pytest.approx(10.0)

    def test_short_sentences_lose_missing_orders(self):
        # 3-token identity: no 4-grams anywhere, so the n=4 term is zero
        sents = [["a", "dog", "runs"], ["person", "walks", "home"],
                 ["joy0", "sits", "park"]]
        refs = [[s] for s in sents]
        assert cider(sents, refs) == pytest.approx(7.5)


class TestHybrid:
    def test_weight_zero_passthrough(self):
        bfs, cfs = hybrid_scores(0.4, 6.0, 0.9, weight=0.0)
        assert bfs == pytest.approx(0.4)
        assert cfs == pytest.approx(0.6)

    def test_all_ones_fixed_point(self):
        bfs, cfs = hybrid_scores(1.0, 10.0, 1.0, weight=0.5)
        assert (bfs, cfs) == (1.0, 1.0)

    def test_arithmetic(self):
        bfs, _ = hybrid_scores(0.4, 0.0, 0.8, weight=0.5)
        assert bfs == pytest.approx(0.6)

    def test_weight_out_of_range(self):
        with pytest.raises(ValueError):
            hybrid_scores(0.5, 5.0, 0.5, weight=1.5)


class TestReport:
    def test_permutation_invariance(self, rng):
        cands, refs = random_corpus(rng, n_videos=8)
        report = compute_report(cands, refs, {"joy0", "fear0", "calm0"})
        perm = list(rng.permutation(8))
        report2 = compute_report([cands[i] for i in perm], [refs[i] for i in perm],
                                 {"joy0", "fear0", "calm0"})
        assert report.to_dict() == report2.to_dict()

    def test_ranges_and_fields(self, rng):
        cands, refs = overlapping_corpus(rng)
        report = compute_report(cands, refs, {"joy0", "fear0", "calm0"})
        d = report.to_dict()
        for key in ("acc_sw", "acc_c", "bleu_1", "bleu_2", "bleu_3", "bleu_4",
                    "rouge_l", "bfs", "cfs"):
            assert 0.0 <= d[key] <= 1.0
        assert 0.0 <= d["cider"] <= 10.0
        assert d["meteor"] == "n/a"
        assert "local" in d["hybrid_definition"]
        csv = report.to_csv()
        assert csv.startswith("metric,value")

    def test_identity_corpus_scores(self):
        sents = [["a", "joy0", "runs", "fast"], ["person", "fear0", "walks", "home"]]
        refs = [[s] for s in sents]
        report = compute_report(sents, refs, {"joy0", "fear0"})
        assert report.bleu == pytest.approx([1.0] * 4)
        assert report.rouge_l == pytest.approx(1.0)
        assert (report.acc_sw, report.acc_c) == (1.0, 1.0)

    def test_ngram_metrics_tuple(self, rng):
        cands, refs = random_corpus(rng, n_videos=4)
        bleu, rouge, cid = ngram_metrics(cands, refs)
        assert len(bleu) == 4
        assert isinstance(rouge, float) and isinstance(cid, float)
