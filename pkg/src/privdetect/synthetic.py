"""Synthetic corpora with planted keyword rules and co-occurring label pairs.

Each label owns a few keywords whose vectors are the label-name vector plus
Gaussian noise of scale ``keyword_spread``.
A sample draws one or two labels, adds the partner of any planted pair with
probability ``pair_rate``, and writes one keyword per label among filler
words. With ``noise > 0`` the keyword of a pair-induced partner label is
dropped with that probability, so the partner can only be inferred from its
co-occurring label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import EmbeddingTable, LabelVocabulary, save_embeddings, substream

LABEL_NAMES = (
    "Occupation", "Salary", "Graduation", "Education background", "Place planning to go",
    "Current location", "Age", "Health condition", "Religion", "Gender", "General complaint",
    "Neutral statement", "Family", "Birthday", "Pets", "Sports", "Music", "Politics",
)
FILLER = (
    "the", "a", "today", "really", "so", "we", "just", "was", "and", "it", "this", "that",
    "very", "some", "then", "with", "for", "on", "at", "about", "again", "still", "maybe",
    "here", "there", "what", "when", "all", "good", "time",
)
KEYWORDS_PER_LABEL = 3


@dataclass
class SyntheticCorpus:
    records: list[dict]
    vocab: LabelVocabulary
    table: EmbeddingTable
    pairs: list[tuple[int, int]]
    label_counts: list[int]
    pair_counts: list[list[int]]

    @property
    def mean_labels(self) -> float:
        return float(np.sum(self.label_counts)) / len(self.records)

    def bookkeeping(self) -> dict:
        return {"n_samples": len(self.records), "labels": list(self.vocab.names),
                "planted_pairs": [list(p) for p in self.pairs],
                "label_counts": self.label_counts, "pair_counts": self.pair_counts,
                "mean_labels": self.mean_labels}

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"corpus": out / "corpus.jsonl", "labels": out / "labels.txt",
                 "embeddings": out / "embeddings.txt", "meta": out / "meta.json"}
        with open(paths["corpus"], "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec) + "\n")
        self.vocab.save(paths["labels"])
        save_embeddings(self.table, paths["embeddings"])
        paths["meta"].write_text(json.dumps(self.bookkeeping(), indent=2) + "\n")
        return paths


def label_names(n_labels: int) -> list[str]:
    names = list(LABEL_NAMES[:n_labels])
    names += [f"Aspect {i}" for i in range(len(names), n_labels)]
    return names


def keywords_for(name: str) -> list[str]:
    slug = "".join(name.lower().split())
    return [f"{slug}{chr(ord('a') + j)}" for j in range(KEYWORDS_PER_LABEL)]


def generate(n_samples: int = 64, n_labels: int = 8, seed: int = 0, dim: int = 16,
             n_pairs: int = 2, pair_rate: float = 0.8, noise: float = 0.0,
             keyword_spread: float = 0.1) -> SyntheticCorpus:
    if n_labels < 2 * n_pairs or n_labels < 2:
        raise ValueError(f"{n_labels} labels cannot hold {n_pairs} disjoint pairs")
    rng = substream(seed, "synthetic")
    names = label_names(n_labels)
    vocab = LabelVocabulary(names)
    pairs = [(2 * i, 2 * i + 1) for i in range(n_pairs)]
    partner = {a: b for a, b in pairs}

    # embeddings: label-name words random, keywords near their label, fillers random
    vectors: dict[str, np.ndarray] = {}
    for name in names:
        for w in name.lower().split():
            if w not in vectors:
                vectors[w] = rng.uniform(-0.5, 0.5, size=dim)
    for name in names:
        centre = np.mean([vectors[w] for w in name.lower().split()], axis=0)
        for kw in keywords_for(name):
            vectors[kw] = centre + rng.normal(0.0, keyword_spread, size=dim)
    for w in FILLER:
        if w not in vectors:
            vectors[w] = rng.uniform(-0.5, 0.5, size=dim)
    words = list(vectors)
    table = EmbeddingTable(words, np.stack([vectors[w] for w in words]),
                           substream(seed, "oov").uniform(-0.25, 0.25, size=dim))

    records = []
    counts = np.zeros(n_labels, dtype=np.int64)
    pair_counts = np.zeros((n_labels, n_labels), dtype=np.int64)
    for i in range(n_samples):
        k = 1 if rng.random() < 0.75 else 2
        primary = sorted(int(x) for x in rng.choice(n_labels, size=k, replace=False))
        labels = set(primary)
        silent = set()
        for a in primary:
            b = partner.get(a)
            if b is not None and b not in labels and rng.random() < pair_rate:
                labels.add(b)
                if rng.random() < noise:
                    silent.add(b)
        tokens = [FILLER[j] for j in rng.choice(len(FILLER), size=int(rng.integers(3, 9)))]
        for lab in sorted(labels - silent):
            kw = keywords_for(names[lab])[int(rng.integers(KEYWORDS_PER_LABEL))]
            tokens.insert(int(rng.integers(len(tokens) + 1)), kw)
        lab_sorted = sorted(labels)
        records.append({"id": f"syn{i:05d}", "text": " ".join(tokens),
                        "labels": [names[j] for j in lab_sorted]})
        for a in lab_sorted:
            counts[a] += 1
            for b in lab_sorted:
                pair_counts[a, b] += 1
    return SyntheticCorpus(records, vocab, table, pairs, counts.tolist(), pair_counts.tolist())
