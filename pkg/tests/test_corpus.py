"""Corpus layer: tokenization, vocabulary round-trips, taxonomy validation,
manifest ingestion errors, and synthetic-corpus determinism."""

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evocap.arrays import read_array, write_array
from evocap.corpus import (BOS, EOS, PAD, UNK, CorpusError, DatasetManifest,
                           EmotionTaxonomy, RESERVED_TOKENS, Vocabulary,
                           decode_caption, encode_caption, load_corpus_dir,
                           load_manifest, synth_corpus, tokenize, write_manifest)


def tree_hash(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


class TestTokenize:
    def test_lowercase_and_punctuation(self):
        assert tokenize("A dog, RUNS! fast.") == ["a", "dog", "runs", "fast"]

    def test_empty(self):
        assert tokenize("   ") == []


class TestVocabulary:
    def test_reserved_ids(self, toy_vocab):
        assert (PAD, BOS, EOS, UNK) == (0, 1, 2, 3)
        assert toy_vocab.tokens[:4] == RESERVED_TOKENS

    def test_empty_round_trip(self, toy_vocab):
        assert encode_caption([], toy_vocab) == []
        assert decode_caption([], toy_vocab) == []

    def test_round_trip_known_tokens(self, toy_vocab):
        ids = encode_caption(["a", "dog"], toy_vocab)
        assert decode_caption(ids, toy_vocab) == ["a", "dog"]

    def test_unknown_maps_to_unk_surface(self, toy_vocab):
        ids = encode_caption(["zebra"], toy_vocab)
        assert ids == [UNK]
        assert decode_caption(ids, toy_vocab) == ["<unk>"]

    def test_save_load(self, toy_vocab, tmp_path):
        toy_vocab.save(tmp_path / "v.json")
        assert Vocabulary.load(tmp_path / "v.json") == toy_vocab

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.sampled_from(["a", "person", "dog", "joy0", "walks"]), max_size=12))
    def test_round_trip_property(self, caption):
        vocab = Vocabulary(RESERVED_TOKENS + ["joy0", "a", "person", "dog", "walks"], {4})
        assert decode_caption(encode_caption(caption, vocab), vocab) == caption


class TestTaxonomy:
    def test_membership_must_cover_words(self):
        with pytest.raises(CorpusError):
            EmotionTaxonomy(["a"], ["w0", "w1"], {0: frozenset({0})})

    def test_save_load_round_trip(self, toy_taxonomy, tmp_path):
        toy_taxonomy.save(tmp_path / "t.json")
        assert EmotionTaxonomy.load(tmp_path / "t.json") == toy_taxonomy

    def test_words_of_categories(self, toy_taxonomy):
        assert toy_taxonomy.words_of_categories({0, 2}) == {0, 1, 4, 5}


class TestArrayContainer:
    def test_round_trip_f32_and_f64(self, tmp_path, rng):
        arr = rng.standard_normal((3, 4))
        p32 = write_array(tmp_path / "x", arr, dtype="f32")
        np.testing.assert_array_equal(read_array(p32), arr.astype(np.float32))
        p64 = write_array(tmp_path / "y", arr, dtype="f64")
        np.testing.assert_array_equal(read_array(p64), arr)

    def test_payload_size_mismatch(self, tmp_path, rng):
        p = write_array(tmp_path / "x", rng.standard_normal((3, 4)), dtype="f32")
        p.write_bytes(p.read_bytes()[:-4])
        with pytest.raises(Exception):
            read_array(p)


class TestSynthCorpus:
    def test_same_seed_identical_bytes(self, tmp_path):
        for d in ("one", "two"):
            synth_corpus(seed=1, n_videos=6, vocab_size=40, n_categories=2,
                         words_per_category=3, feature_dims=(5, 4), n_frames=3,
                         out_dir=tmp_path / d)
        assert tree_hash(tmp_path / "one") == tree_hash(tmp_path / "two")

    def test_spec_sizes(self, tmp_path):
        manifest, taxonomy, vocab = synth_corpus(
            seed=1, n_videos=16, vocab_size=60, n_categories=2,
            words_per_category=4, feature_dims=(6, 5), n_frames=4,
            out_dir=tmp_path / "c")
        assert len(manifest) == 16
        assert len(vocab.emotion_word_ids) == 8
        assert len(vocab) == 60
        assert taxonomy.n_words == 8

    def test_word_belongs_to_category(self, tmp_path):
        manifest, taxonomy, _ = synth_corpus(
            seed=5, n_videos=10, vocab_size=40, n_categories=3,
            words_per_category=2, feature_dims=(4, 4), n_frames=4,
            out_dir=tmp_path / "c", n_phases=2)
        for rec in manifest.records:
            allowed = taxonomy.words_of_categories(rec.gt_category_ids)
            assert rec.gt_emotion_word_ids <= allowed

    def test_captions_embed_emotion_words(self, tmp_path):
        manifest, taxonomy, _ = synth_corpus(
            seed=2, n_videos=4, vocab_size=30, n_categories=2,
            words_per_category=2, feature_dims=(4, 4), n_frames=2,
            out_dir=tmp_path / "c")
        for rec in manifest.records:
            caption = rec.captions[0]
            for w in rec.gt_emotion_word_ids:
                assert taxonomy.words[w] in caption

    def test_vocab_too_small_rejected(self, tmp_path):
        with pytest.raises(CorpusError):
            synth_corpus(seed=0, n_videos=2, vocab_size=10, n_categories=2,
                         words_per_category=4, feature_dims=(4, 4), n_frames=2,
                         out_dir=tmp_path / "c")


class TestManifest:
    @pytest.fixture
    def corpus(self, tmp_path):
        return synth_corpus(seed=3, n_videos=5, vocab_size=40, n_categories=2,
                            words_per_category=3, feature_dims=(5, 4), n_frames=3,
                            out_dir=tmp_path / "c"), tmp_path / "c"

    def test_empty_manifest(self, tmp_path, toy_taxonomy, toy_vocab):
        p = tmp_path / "m.jsonl"
        p.write_text("")
        manifest = load_manifest(p, toy_taxonomy, toy_vocab)
        assert len(manifest) == 0

    def test_two_records_preserved_in_order(self, corpus):
        (manifest, taxonomy, vocab), root = corpus
        loaded = load_manifest(root / "manifest.jsonl", taxonomy, vocab)
        assert [r.id for r in loaded.records] == [r.id for r in manifest.records]

    def test_round_trip_equality(self, corpus, tmp_path):
        (manifest, taxonomy, vocab), root = corpus
        out = root / "again.jsonl"
        write_manifest(manifest, out, taxonomy)
        again = load_manifest(out, taxonomy, vocab)
        assert again == manifest

    def test_missing_feature_file_names_sample(self, corpus):
        (manifest, taxonomy, vocab), root = corpus
        lines = (root / "manifest.jsonl").read_text().splitlines()
        bad = json.loads(lines[1])
        bad["appearance_path"] = "features/nope.f32"
        lines[1] = json.dumps(bad)
        p = root / "broken.jsonl"
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(CorpusError, match=bad["id"]):
            load_manifest(p, taxonomy, vocab)

    def test_duplicate_ids_rejected(self, corpus):
        (manifest, taxonomy, vocab), root = corpus
        lines = (root / "manifest.jsonl").read_text().splitlines()
        p = root / "dup.jsonl"
        p.write_text("\n".join([lines[0], lines[0]]) + "\n")
        with pytest.raises(CorpusError, match="duplicate"):
            load_manifest(p, taxonomy, vocab)

    def test_unknown_caption_token_counts_unk(self, corpus):
        (manifest, taxonomy, vocab), root = corpus
        lines = (root / "manifest.jsonl").read_text().splitlines()
        rec = json.loads(lines[0])
        rec["captions"] = [rec["captions"][0] + " xylophone"]
        p = root / "unk.jsonl"
        p.write_text(json.dumps(rec) + "\n")
        loaded = load_manifest(p, taxonomy, vocab)
        assert loaded.unk_count == 1

    def test_word_outside_categories_rejected(self, corpus):
        (manifest, taxonomy, vocab), root = corpus
        lines = (root / "manifest.jsonl").read_text().splitlines()
        rec = json.loads(lines[0])
        rec["categories"] = [taxonomy.categories[0]]
        rec["emotion_words"] = [taxonomy.words[-1]]  # belongs to the last category
        p = root / "bad.jsonl"
        p.write_text(json.dumps(rec) + "\n")
        with pytest.raises(CorpusError, match="outside"):
            load_manifest(p, taxonomy, vocab)

    def test_frame_alignment_truncates(self, corpus):
        (manifest, taxonomy, vocab), root = corpus
        rec = manifest.records[0]
        app = read_array(root / rec.appearance_path)
        write_array((root / rec.appearance_path).with_suffix(""),
                    np.vstack([app, app]), dtype="f32")
        loaded = load_manifest(root / "manifest.jsonl", taxonomy, vocab)
        sample = loaded.load_sample(taxonomy, 0)
        assert sample.appearance.shape[0] == sample.motion.shape[0] == 3

    def test_load_corpus_dir(self, corpus):
        (_, taxonomy, vocab), root = corpus
        manifest2, taxonomy2, vocab2 = load_corpus_dir(root)
        assert taxonomy2 == taxonomy and vocab2 == vocab and len(manifest2) == 5

    def test_long_caption_truncated(self, corpus):
        (manifest, taxonomy, vocab), root = corpus
        lines = (root / "manifest.jsonl").read_text().splitlines()
        rec = json.loads(lines[0])
        rec["captions"] = [" ".join(["walks"] * 30)]
        p = root / "long.jsonl"
        p.write_text(json.dumps(rec) + "\n")
        loaded = load_manifest(p, taxonomy, vocab)
        assert len(loaded.records[0].captions[0]) == 15
