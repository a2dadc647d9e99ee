"""Data model, file ingestion, tokenization, and synthetic-corpus generation.

The on-disk corpus layout is deliberately plain:

* ``manifest.jsonl`` — one record per video:
  ``{"id", "appearance_path", "motion_path", "captions": [str], "categories":
  [str], "emotion_words": [str]}``; feature paths are relative to the manifest.
* feature matrices — ``<name>.f32`` + ``<name>.json`` sidecar (see arrays.py).
* ``taxonomy.json`` — ``{"categories": [str], "words": [str],
  "membership": {"<category index>": [word index, ...]}}``.
* ``vocab.json`` — ``{"tokens": [str], "emotion_word_ids": [int]}`` with the
  four reserved tokens first.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arrays import read_array, write_array

MAX_CAPTION_LEN = 15

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED_TOKENS = ["<pad>", "<bos>", "<eos>", "<unk>"]

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


class CorpusError(Exception):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace."""
    return text.lower().translate(_PUNCT_TABLE).split()


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------


class Vocabulary:
    """Token/id bijection with reserved ids and the emotion-word id subset."""

    def __init__(self, tokens: list[str], emotion_word_ids: set[int] | None = None):
        if tokens[:4] != RESERVED_TOKENS:
            raise CorpusError("vocabulary must start with the four reserved tokens")
        if len(set(tokens)) != len(tokens):
            raise CorpusError("vocabulary tokens must be unique")
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(tokens)}
        self.emotion_word_ids = frozenset(emotion_word_ids or ())
        if any(i < 0 or i >= len(tokens) for i in self.emotion_word_ids):
            raise CorpusError("emotion word id outside vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other):
        return (isinstance(other, Vocabulary) and self.tokens == other.tokens
                and self.emotion_word_ids == other.emotion_word_ids)

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.index.get(t, UNK) for t in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def count_unknown(self, tokens: list[str]) -> int:
        return sum(1 for t in tokens if t not in self.index)

    def save(self, path: Path | str) -> None:
        payload = {"tokens": self.tokens,
                   "emotion_word_ids": sorted(self.emotion_word_ids)}
        Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: Path | str) -> "Vocabulary":
        payload = json.loads(Path(path).read_text())
        return cls(payload["tokens"], set(payload["emotion_word_ids"]))


def encode_caption(tokens: list[str], vocab: Vocabulary) -> list[int]:
    """Total map to ids; out-of-vocabulary tokens become UNK."""
    return vocab.encode(tokens)


def decode_caption(ids: list[int], vocab: Vocabulary) -> list[str]:
    return vocab.decode(ids)


# ---------------------------------------------------------------------------
# Emotion taxonomy
# ---------------------------------------------------------------------------


@dataclass
class EmotionTaxonomy:
    """Two-level emotion tree: categories, words, category -> word membership.

    Embedding tables are optional row-aligned matrices (see the encoder module
    for the fallback initialization when they are absent).
    """

    categories: list[str]
    words: list[str]
    membership: dict[int, frozenset[int]]
    category_embeddings: np.ndarray | None = None
    word_embeddings: np.ndarray | None = None

    def __post_init__(self):
        n_c, n_w = len(self.categories), len(self.words)
        covered: set[int] = set()
        for cid, wids in self.membership.items():
            if not 0 <= cid < n_c:
                raise CorpusError(f"membership references unknown category {cid}")
            if any(not 0 <= w < n_w for w in wids):
                raise CorpusError(f"membership of category {cid} references unknown word")
            covered |= set(wids)
        if covered != set(range(n_w)):
            raise CorpusError("membership must cover every emotion word")

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    @property
    def n_words(self) -> int:
        return len(self.words)

    def categories_of_word(self, word_id: int) -> set[int]:
        return {c for c, wids in self.membership.items() if word_id in wids}

    def words_of_categories(self, category_ids) -> set[int]:
        out: set[int] = set()
        for c in category_ids:
            out |= set(self.membership[c])
        return out

    def __eq__(self, other):
        return (isinstance(other, EmotionTaxonomy)
                and self.categories == other.categories
                and self.words == other.words
                and self.membership == other.membership)

    def save(self, path: Path | str) -> None:
        payload = {
            "categories": self.categories,
            "words": self.words,
            "membership": {str(c): sorted(w) for c, w in self.membership.items()},
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: Path | str,
             category_embeddings: Path | str | None = None,
             word_embeddings: Path | str | None = None) -> "EmotionTaxonomy":
        payload = json.loads(Path(path).read_text())
        membership = {int(c): frozenset(w) for c, w in payload["membership"].items()}
        cat_emb = read_array(category_embeddings).astype(np.float64) if category_embeddings else None
        word_emb = read_array(word_embeddings).astype(np.float64) if word_embeddings else None
        return cls(payload["categories"], payload["words"], membership, cat_emb, word_emb)


# ---------------------------------------------------------------------------
# Samples and manifests
# ---------------------------------------------------------------------------


@dataclass
class VideoSample:
    """A fully loaded training/eval item; frame streams are aligned."""

    id: str
    appearance: np.ndarray
    motion: np.ndarray
    captions: list[list[str]]
    gt_category_ids: frozenset[int]
    gt_emotion_word_ids: frozenset[int]

    @property
    def n_frames(self) -> int:
        return self.appearance.shape[0]


@dataclass
class ManifestRecord:
    id: str
    appearance_path: str
    motion_path: str
    captions: list[list[str]]
    gt_category_ids: frozenset[int]
    gt_emotion_word_ids: frozenset[int]


@dataclass
class DatasetManifest:
    records: list[ManifestRecord]
    split: str = "train"
    root: Path = field(default_factory=Path, compare=False)
    unk_count: int = field(default=0, compare=False)

    def __len__(self) -> int:
        return len(self.records)

    def load_sample(self, taxonomy: EmotionTaxonomy, index: int) -> VideoSample:
        rec = self.records[index]
        try:
            appearance = read_array(self.root / rec.appearance_path).astype(np.float64)
            motion = read_array(self.root / rec.motion_path).astype(np.float64)
        except FileNotFoundError as exc:
            raise CorpusError(f"sample {rec.id!r}: missing feature file {exc}") from exc
        # streams are assumed aligned; if not, truncate both to the overlap
        n = min(appearance.shape[0], motion.shape[0])
        appearance, motion = appearance[:n], motion[:n]
        return VideoSample(rec.id, appearance, motion, rec.captions,
                           rec.gt_category_ids, rec.gt_emotion_word_ids)

    def load_samples(self, taxonomy: EmotionTaxonomy) -> list[VideoSample]:
        return [self.load_sample(taxonomy, i) for i in range(len(self.records))]


def load_manifest(path: Path | str, taxonomy: EmotionTaxonomy, vocab: Vocabulary,
                  split: str = "train", max_caption_len: int = MAX_CAPTION_LEN) -> DatasetManifest:
    """Parse and validate a JSON-lines manifest.

    Every referenced feature file must exist with a parsable sidecar whose
    payload size matches its shape. Caption tokens missing from the vocabulary
    are counted (they map to UNK downstream); label names must resolve against
    the taxonomy, and each ground-truth word must belong to one of the sample's
    ground-truth categories.
    """
    path = Path(path)
    root = path.parent
    records: list[ManifestRecord] = []
    seen_ids: set[str] = set()
    unk_count = 0
    cat_index = {c: i for i, c in enumerate(taxonomy.categories)}
    word_index = {w: i for i, w in enumerate(taxonomy.words)}
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{line_no}: invalid JSON ({exc})") from exc
        sid = raw["id"]
        if sid in seen_ids:
            raise CorpusError(f"duplicate sample id {sid!r}")
        seen_ids.add(sid)
        for key in ("appearance_path", "motion_path"):
            fpath = root / raw[key]
            if not fpath.exists():
                raise CorpusError(f"sample {sid!r}: missing feature file {fpath}")
            sidecar = fpath.with_suffix(".json")
            if not sidecar.exists():
                raise CorpusError(f"sample {sid!r}: missing sidecar {sidecar}")
            meta = json.loads(sidecar.read_text())
            n_vals = int(np.prod(meta["shape"]))
            itemsize = 4 if meta["dtype"] == "f32" else 8
            if fpath.stat().st_size != n_vals * itemsize:
                raise CorpusError(f"sample {sid!r}: payload size mismatch in {fpath}")
        captions = [tokenize(c)[:max_caption_len] for c in raw["captions"]]
        for cap in captions:
            unk_count += vocab.count_unknown(cap)
        try:
            cat_ids = frozenset(cat_index[c] for c in raw["categories"])
            word_ids = frozenset(word_index[w] for w in raw["emotion_words"])
        except KeyError as exc:
            raise CorpusError(f"sample {sid!r}: unknown emotion label {exc}") from exc
        allowed = taxonomy.words_of_categories(cat_ids)
        if not word_ids <= allowed:
            raise CorpusError(f"sample {sid!r}: emotion word outside its categories")
        records.append(ManifestRecord(sid, raw["appearance_path"], raw["motion_path"],
                                      captions, cat_ids, word_ids))
    return DatasetManifest(records, split=split, root=root, unk_count=unk_count)


def write_manifest(manifest: DatasetManifest, path: Path | str,
                   taxonomy: EmotionTaxonomy) -> None:
    path = Path(path)
    lines = []
    for rec in manifest.records:
        payload = {
            "id": rec.id,
            "appearance_path": rec.appearance_path,
            "motion_path": rec.motion_path,
            "captions": [" ".join(c) for c in rec.captions],
            "categories": [taxonomy.categories[i] for i in sorted(rec.gt_category_ids)],
            "emotion_words": [taxonomy.words[i] for i in sorted(rec.gt_emotion_word_ids)],
        }
        lines.append(json.dumps(payload, sort_keys=True))
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

_CATEGORY_BANK = ["joy", "fear", "anger", "sorrow", "love", "surprise",
                  "calm", "disgust", "pride", "shame", "hope", "boredom"]
_FILLER_BANK = ["a", "person", "is", "and", "then", "feels", "turns", "while",
                "the", "scene", "moves", "acts", "talks", "walks", "sits",
                "looks", "today", "now", "very", "quite"]


def synth_corpus(seed: int, n_videos: int, vocab_size: int, n_categories: int,
                 words_per_category: int, feature_dims: tuple[int, int],
                 n_frames: int, out_dir: Path | str,
                 n_phases: int = 1) -> tuple[DatasetManifest, EmotionTaxonomy, Vocabulary]:
    """Generate a deterministic desk-scale corpus under ``out_dir``.

    Each video is assigned one emotion word per phase (round-robin over the
    word list for phase one); its frame features are that word's signature
    vector plus small noise, so the video -> emotion mapping is learnable, and
    its caption embeds the assigned word(s). ``n_phases=2`` splits the frames
    into two segments with different emotions.
    """
    n_words = n_categories * words_per_category
    if vocab_size <= n_words + 4:
        raise CorpusError("vocab_size must exceed emotion words + reserved tokens")
    if n_phases not in (1, 2):
        raise CorpusError("n_phases must be 1 or 2")
    if n_phases == 2 and n_words < 2:
        raise CorpusError("two-phase corpus needs at least two emotion words")
    d_a, d_m = feature_dims
    rng = np.random.default_rng(seed)
    out_dir = Path(out_dir)
    feat_dir = out_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)

    categories = [_CATEGORY_BANK[i] if i < len(_CATEGORY_BANK) else f"mood{i}"
                  for i in range(n_categories)]
    words = [f"{categories[i // words_per_category]}{i % words_per_category}"
             for i in range(n_words)]
    membership = {c: frozenset(range(c * words_per_category, (c + 1) * words_per_category))
                  for c in range(n_categories)}
    taxonomy = EmotionTaxonomy(categories, words, membership)

    n_fillers = vocab_size - 4 - n_words
    fillers = [_FILLER_BANK[i] if i < len(_FILLER_BANK) else f"thing{i}"
               for i in range(n_fillers)]
    tokens = RESERVED_TOKENS + words + fillers
    vocab = Vocabulary(tokens, set(range(4, 4 + n_words)))

    def _tok(i: int) -> str:
        return fillers[i % len(fillers)]

    scaffold = {_tok(i) for i in (0, 1, 4, 5, 6)}
    markers = [f for f in fillers if f not in scaffold] or fillers
    sig_app = rng.standard_normal((n_words, d_a))
    sig_mot = rng.standard_normal((n_words, d_m))

    records: list[ManifestRecord] = []
    for v in range(n_videos):
        word_ids = [v % n_words]
        if n_phases == 2:
            second = int(rng.integers(0, n_words - 1))
            if second >= word_ids[0]:
                second += 1
            word_ids.append(second)
        appearance = np.empty((n_frames, d_a))
        motion = np.empty((n_frames, d_m))
        for f in range(n_frames):
            phase = 0 if (n_phases == 1 or f < n_frames // 2) else 1
            w = word_ids[phase]
            appearance[f] = sig_app[w] + 0.1 * rng.standard_normal(d_a)
            motion[f] = sig_mot[w] + 0.1 * rng.standard_normal(d_m)
        marker = markers[v % len(markers)]
        if n_phases == 1:
            caption = [_tok(0), _tok(1), marker, _tok(5), words[word_ids[0]]]
        else:
            caption = [_tok(0), _tok(1), marker, _tok(5), words[word_ids[0]],
                       _tok(4), _tok(6), words[word_ids[1]]]
        sid = f"vid{v:04d}"
        write_array(feat_dir / f"{sid}_app", appearance, dtype="f32")
        write_array(feat_dir / f"{sid}_mot", motion, dtype="f32")
        gt_words = frozenset(word_ids)
        gt_cats = frozenset(w // words_per_category for w in gt_words)
        records.append(ManifestRecord(sid, f"features/{sid}_app.f32",
                                      f"features/{sid}_mot.f32",
                                      [caption], gt_cats, gt_words))

    manifest = DatasetManifest(records, split="train", root=out_dir)
    write_manifest(manifest, out_dir / "manifest.jsonl", taxonomy)
    taxonomy.save(out_dir / "taxonomy.json")
    vocab.save(out_dir / "vocab.json")
    return manifest, taxonomy, vocab


def load_corpus_dir(path: Path | str, split: str = "train"
                    ) -> tuple[DatasetManifest, EmotionTaxonomy, Vocabulary]:
    """Load a directory produced by synth_corpus (or laid out the same way)."""
    path = Path(path)
    taxonomy = EmotionTaxonomy.load(path / "taxonomy.json")
    vocab = Vocabulary.load(path / "vocab.json")
    manifest = load_manifest(path / "manifest.jsonl", taxonomy, vocab, split=split)
    return manifest, taxonomy, vocab
