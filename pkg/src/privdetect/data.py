"""Corpus, embedding and label-vocabulary loading; tokenization, batching, folds."""

from __future__ import annotations

import json
import logging
import string
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

USER_TOKEN = "<user>"
URL_TOKEN = "<url>"
PAD = -1

_PUNCT = string.punctuation + "‘’“”…"


class DataError(ValueError):
    """Base class for ingestion errors."""


class CorpusFormatError(DataError):
    pass


class VocabularyError(DataError):
    pass


class EmptySampleError(DataError):
    pass


class EmbeddingFormatError(DataError):
    pass


class ConfigurationError(ValueError):
    pass


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named use of the run seed (init, shuffle, oov...)."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])


# ---------------------------------------------------------------------------
# labels


class LabelVocabulary:
    """Ordered, immutable list of label names."""

    def __init__(self, names: Iterable[str]):
        self.names: tuple[str, ...] = tuple(n.strip() for n in names)
        if any(not n for n in self.names):
            raise VocabularyError("empty label name")
        self.index = {n: i for i, n in enumerate(self.names)}
        if len(self.index) != len(self.names):
            dupes = sorted({n for n in self.names if self.names.count(n) > 1})
            raise VocabularyError(f"duplicate label names: {dupes}")

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelVocabulary) and self.names == other.names

    def __repr__(self) -> str:
        return f"LabelVocabulary({len(self)} labels)"

    def encode(self, labels: Sequence[str]) -> np.ndarray:
        y = np.zeros(len(self), dtype=np.int8)
        for name in labels:
            try:
                y[self.index[name]] = 1
            except KeyError:
                raise VocabularyError(f"unknown label {name!r}") from None
        return y

    def decode(self, y: np.ndarray) -> list[str]:
        return [self.names[i] for i in np.flatnonzero(y)]

    @classmethod
    def load(cls, path) -> "LabelVocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls(line for line in fh.read().splitlines() if line.strip())

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.names) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# text


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace tokenization with mention and URL sentinels.

    >>> tokenize("My trip to Washington D.C.")
    ['my', 'trip', 'to', 'washington', 'd.c']
    """
    tokens = []
    for raw in text.lower().split():
        if raw.startswith("@") and len(raw) > 1:
            tokens.append(USER_TOKEN)
            continue
        if raw.startswith(("http://", "https://", "www.")):
            tokens.append(URL_TOKEN)
            continue
        tok = raw.strip(_PUNCT)
        if tok:
            tokens.append(tok)
    if not tokens:
        raise EmptySampleError(f"text {text!r} has no tokens")
    return tokens


@dataclass
class Sample:
    id: str
    text: str
    tokens: list[str]
    labels: np.ndarray  # int8, length L

    def __eq__(self, other) -> bool:
        return (isinstance(other, Sample) and self.id == other.id and self.text == other.text
                and self.tokens == other.tokens and np.array_equal(self.labels, other.labels))


@dataclass
class CorpusStats:
    n_samples: int
    label_counts: dict[str, int]
    mean_labels: float


def corpus_stats(samples: Sequence[Sample], vocab: LabelVocabulary) -> CorpusStats:
    if not samples:
        return CorpusStats(0, {n: 0 for n in vocab}, 0.0)
    y = np.stack([s.labels for s in samples]).astype(np.int64)
    counts = y.sum(axis=0)
    return CorpusStats(len(samples), {n: int(c) for n, c in zip(vocab, counts)},
                       float(y.sum()) / len(samples))


def load_corpus(path, vocab: LabelVocabulary) -> list[Sample]:
    """Read a JSONL corpus (``text``, ``labels``, optional ``id`` per line)."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or not isinstance(obj.get("text"), str) \
                    or not isinstance(obj.get("labels"), list):
                raise CorpusFormatError(
                    f"{path}:{lineno}: expected an object with 'text' and 'labels'")
            labels = obj["labels"]
            if not labels:
                raise CorpusFormatError(f"{path}:{lineno}: sample has no labels")
            try:
                y = vocab.encode(labels)
                tokens = tokenize(obj["text"])
            except VocabularyError as exc:
                raise VocabularyError(f"{path}:{lineno}: {exc}") from None
            except EmptySampleError as exc:
                raise EmptySampleError(f"{path}:{lineno}: {exc}") from None
            sid = obj.get("id")
            samples.append(Sample(str(sid) if sid is not None else f"line{lineno}",
                                  obj["text"], tokens, y))
    stats = corpus_stats(samples, vocab)
    logger.info("loaded %d samples from %s (%.2f labels/sample)",
                stats.n_samples, path, stats.mean_labels)
    logger.debug("label counts: %s", stats.label_counts)
    return samples


def save_corpus(samples: Sequence[Sample], vocab: LabelVocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            obj = {"id": s.id, "text": s.text, "labels": vocab.decode(s.labels)}
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def make_sample(text: str, vocab: LabelVocabulary, labels: Sequence[str] = (),
                sid: str = "input") -> Sample:
    """Build a sample for inference; labels may be empty."""
    y = vocab.encode(labels) if labels else np.zeros(len(vocab), dtype=np.int8)
    return Sample(sid, text, tokenize(text), y)


# ---------------------------------------------------------------------------
# embeddings


@dataclass
class EmbeddingTable:
    words: list[str]
    matrix: np.ndarray  # V x d1
    oov: np.ndarray  # d1
    oov_policy: str = "shared uniform(-0.25, 0.25) vector"
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float64)
        self.oov = np.asarray(self.oov, dtype=np.float64)
        self.index = {w: i for i, w in enumerate(self.words)}
        if self.matrix.shape != (len(self.words), self.dim):
            raise EmbeddingFormatError(
                f"matrix shape {self.matrix.shape} does not match {len(self.words)} words")

    @property
    def dim(self) -> int:
        return int(self.oov.shape[0])

    @property
    def oov_index(self) -> int:
        return len(self.words)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def lookup(self, word: str) -> np.ndarray:
        i = self.index.get(word)
        return self.oov if i is None else self.matrix[i]

    def token_ids(self, tokens: Sequence[str]) -> list[int]:
        oov = self.oov_index
        return [self.index.get(t, oov) for t in tokens]

    def full_matrix(self) -> np.ndarray:
        """Word rows followed by the OOV row."""
        return np.vstack([self.matrix, self.oov[None, :]])


def load_embeddings(path, expected_dim: int | None = None, seed: int = 0) -> EmbeddingTable:
    """Load the text word-vector format (``word v1 ... vd`` per line, optional ``V d`` header)."""
    rows: dict[str, np.ndarray] = {}
    dim = expected_dim
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").rstrip().split(" ")
            if not parts or parts == [""]:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                header_dim = int(parts[1])
                if dim is not None and header_dim != dim:
                    raise EmbeddingFormatError(
                        f"{path}: header dimension {header_dim} != expected {dim}")
                dim = header_dim
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            if len(values) != dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: {len(values)} values for {word!r}, expected {dim}")
            try:
                vec = np.array([float(v) for v in values])
            except ValueError:
                raise EmbeddingFormatError(f"{path}:{lineno}: non-numeric value") from None
            if word in rows:
                warnings.warn(f"{path}:{lineno}: duplicate word {word!r}; last entry wins",
                              stacklevel=2)
            rows[word] = vec
    if dim is None:
        raise EmbeddingFormatError(f"{path}: no vectors found")
    words = list(rows)
    matrix = np.stack([rows[w] for w in words]) if words else np.zeros((0, dim))
    oov = substream(seed, "oov").uniform(-0.25, 0.25, size=dim)
    return EmbeddingTable(words, matrix, oov)


def save_embeddings(table: EmbeddingTable, path, header: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"{len(table)} {table.dim}\n")
        for w, row in zip(table.words, table.matrix):
            fh.write(w + " " + " ".join(repr(float(v)) for v in row) + "\n")


def embed_labels(vocab: LabelVocabulary, table: EmbeddingTable) -> np.ndarray:
    """L x d1 label embeddings: mean of the known word vectors of each name."""
    out = np.empty((len(vocab), table.dim))
    for i, name in enumerate(vocab):
        words = [w for w in (t.strip(_PUNCT) for t in name.lower().split()) if w in table]
        out[i] = np.mean([table.lookup(w) for w in words], axis=0) if words else table.oov
    return out


# ---------------------------------------------------------------------------
# splits and batches


def make_folds(n_samples: int, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """k (train, test) index partitions over ``range(n_samples)``."""
    if k < 2:
        raise ConfigurationError(f"fold count must be at least 2, got {k}")
    if k > n_samples:
        raise ConfigurationError(f"{k} folds requested for {n_samples} samples")
    perm = substream(seed, "folds").permutation(n_samples)
    tests = np.array_split(perm, k)
    folds = []
    for i, test in enumerate(tests):
        train = np.concatenate([t for j, t in enumerate(tests) if j != i])
        folds.append((np.sort(train), np.sort(test)))
    return folds


def split_train(train_idx: np.ndarray, ratio: tuple[int, int] = (8, 1),
                seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Split training indices into (train_sub, validation) at ``ratio``."""
    train_idx = np.asarray(train_idx)
    n = len(train_idx)
    n_val = int(round(n * ratio[1] / (ratio[0] + ratio[1])))
    if n >= 2:
        n_val = min(max(n_val, 1), n - 1)
    perm = substream(seed, "split").permutation(n)
    return np.sort(train_idx[perm[n_val:]]), np.sort(train_idx[perm[:n_val]])


@dataclass
class Batch:
    tokens: np.ndarray  # B x M int64, PAD where no token
    mask: np.ndarray  # B x M float64, 1 = real token
    labels: np.ndarray  # B x L float64
    ids: list[str]
    words: list[list[str]]

    def __len__(self) -> int:
        return self.tokens.shape[0]


def collate(samples: Sequence[Sample], table: EmbeddingTable, m_max: int = 64) -> Batch:
    seqs = [table.token_ids(s.tokens[:m_max]) for s in samples]
    width = max(len(s) for s in seqs)
    tokens = np.full((len(seqs), width), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        tokens[i, :len(s)] = s
    mask = (tokens != PAD).astype(np.float64)
    labels = np.stack([s.labels for s in samples]).astype(np.float64)
    return Batch(tokens, mask, labels, [s.id for s in samples],
                 [list(s.tokens[:m_max]) for s in samples])


def make_batches(samples: Sequence[Sample], table: EmbeddingTable, batch_size: int = 64,
                 m_max: int = 64, seed: int | None = None, epoch: int = 0) -> list[Batch]:
    """Shuffle (when ``seed`` is given, varying per ``epoch``) and cut into padded batches."""
    if batch_size < 1:
        raise ConfigurationError("batch_size must be >= 1")
    order = np.arange(len(samples))
    if seed is not None:
        order = substream(seed, f"shuffle:{epoch}").permutation(len(samples))
    return [collate([samples[i] for i in order[start:start + batch_size]], table, m_max)
            for start in range(0, len(samples), batch_size)]
