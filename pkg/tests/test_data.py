import json

import numpy as np
import pytest

from privdetect.data import (PAD, URL_TOKEN, USER_TOKEN, ConfigurationError, CorpusFormatError,
                             EmbeddingFormatError, EmbeddingTable, EmptySampleError,
                             LabelVocabulary, VocabularyError, collate, embed_labels,
                             load_corpus, load_embeddings, make_batches, make_folds,
                             make_sample, save_corpus, save_embeddings, split_train, substream,
                             tokenize)

VOCAB = LabelVocabulary(["Occupation", "Place planning to go", "Age"])


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# tokenization


def test_tokenize_punctuation_and_case():
    assert tokenize("My trip to Washington D.C.") == ["my", "trip", "to", "washington", "d.c"]


def test_tokenize_mentions_and_urls():
    assert tokenize("@bob http://x.co hi") == [USER_TOKEN, URL_TOKEN, "hi"]
    assert tokenize("see www.example.com now!") == ["see", URL_TOKEN, "now"]


def test_tokenize_whitespace_only_is_an_error():
    with pytest.raises(EmptySampleError):
        tokenize("   \t ")
    with pytest.raises(EmptySampleError):
        tokenize("!!! ...")


# ---------------------------------------------------------------------------
# labels and corpus


def test_vocabulary_encode_decode_roundtrip():
    y = VOCAB.encode(["Age", "Occupation"])
    np.testing.assert_array_equal(y, [1, 0, 1])
    assert VOCAB.decode(y) == ["Occupation", "Age"]


def test_vocabulary_errors():
    with pytest.raises(VocabularyError):
        VOCAB.encode(["Salary"])
    with pytest.raises(VocabularyError):
        LabelVocabulary(["a", "b", "a"])


def test_vocabulary_file_roundtrip(tmp_path):
    VOCAB.save(tmp_path / "labels.txt")
    assert LabelVocabulary.load(tmp_path / "labels.txt") == VOCAB


def test_load_corpus_and_roundtrip(tmp_path):
    path = write_lines(tmp_path / "c.jsonl", [
        json.dumps({"id": "a", "text": "I work as a nurse", "labels": ["Occupation"]}),
        "",
        json.dumps({"text": "flying to Paris at 30", "labels": ["Place planning to go", "Age"]}),
    ])
    samples = load_corpus(path, VOCAB)
    assert [s.id for s in samples] == ["a", "line3"]
    assert samples[1].tokens == ["flying", "to", "paris", "at", "30"]
    np.testing.assert_array_equal(samples[1].labels, [0, 1, 1])
    save_corpus(samples, VOCAB, tmp_path / "out.jsonl")
    again = load_corpus(tmp_path / "out.jsonl", VOCAB)
    assert again[0] == samples[0]
    assert again[1].tokens == samples[1].tokens


@pytest.mark.parametrize("line, error, fragment", [
    ("{not json", CorpusFormatError, ":1: invalid JSON"),
    (json.dumps({"text": "hi"}), CorpusFormatError, "'text' and 'labels'"),
    (json.dumps({"text": "hi", "labels": []}), CorpusFormatError, "no labels"),
    (json.dumps({"text": "hi", "labels": ["Salary"]}), VocabularyError, "unknown label"),
    (json.dumps({"text": "  ", "labels": ["Age"]}), EmptySampleError, "no tokens"),
])
def test_load_corpus_errors_carry_line_numbers(tmp_path, line, error, fragment):
    path = write_lines(tmp_path / "bad.jsonl", [line])
    with pytest.raises(error, match=fragment) as info:
        load_corpus(path, VOCAB)
    assert "bad.jsonl:1" in str(info.value)


def test_make_sample_without_labels():
    s = make_sample("hello there", VOCAB)
    assert s.tokens == ["hello", "there"]
    assert s.labels.sum() == 0


# ---------------------------------------------------------------------------
# embeddings


def test_load_embeddings_with_header_and_oov(tmp_path):
    path = write_lines(tmp_path / "e.txt", ["2 3", "nurse 1 2 3", "paris 0.5 0 -1"])
    table = load_embeddings(path, expected_dim=3, seed=7)
    assert table.words == ["nurse", "paris"]
    np.testing.assert_array_equal(table.lookup("paris"), [0.5, 0.0, -1.0])
    expected_oov = substream(7, "oov").uniform(-0.25, 0.25, size=3)
    np.testing.assert_array_equal(table.lookup("unknown"), expected_oov)
    assert (np.abs(table.oov) <= 0.25).all()
    assert table.token_ids(["paris", "zzz"]) == [1, 2]


def test_load_embeddings_without_header(tmp_path):
    path = write_lines(tmp_path / "e.txt", ["a 1 2", "b 3 4"])
    assert load_embeddings(path).dim == 2


def test_load_embeddings_dimension_mismatch(tmp_path):
    path = write_lines(tmp_path / "e.txt", ["a 1 2 3", "b 3 4"])
    with pytest.raises(EmbeddingFormatError, match=":2:"):
        load_embeddings(path)
    with pytest.raises(EmbeddingFormatError):
        load_embeddings(write_lines(tmp_path / "h.txt", ["1 4", "a 1 2 3 4"]), expected_dim=3)


def test_load_embeddings_duplicate_warns_last_wins(tmp_path):
    path = write_lines(tmp_path / "e.txt", ["a 1 2", "a 5 6"])
    with pytest.warns(UserWarning, match="duplicate"):
        table = load_embeddings(path)
    np.testing.assert_array_equal(table.lookup("a"), [5.0, 6.0])


def test_embeddings_roundtrip_is_exact(tmp_path, rng):
    table = EmbeddingTable(["x", "y"], rng.normal(size=(2, 4)), np.zeros(4))
    save_embeddings(table, tmp_path / "e.txt")
    np.testing.assert_array_equal(load_embeddings(tmp_path / "e.txt").matrix, table.matrix)


def test_embed_labels_is_mean_of_known_words():
    table = EmbeddingTable(["place", "planning", "go", "occupation"],
                           np.array([[1.0, 0], [3.0, 2], [2.0, 4], [7.0, 7]]),
                           np.array([-0.1, 0.1]))
    E = embed_labels(VOCAB, table)
    np.testing.assert_allclose(E[1], [2.0, 2.0], rtol=1e-15)  # "to" has no vector
    np.testing.assert_array_equal(E[0], [7.0, 7.0])
    np.testing.assert_array_equal(E[2], [-0.1, 0.1])  # no known word -> OOV vector


# ---------------------------------------------------------------------------
# folds and batches


def test_folds_partition_and_determinism():
    folds = make_folds(23, 5, seed=3)
    tests = np.concatenate([te for _, te in folds])
    assert sorted(tests.tolist()) == list(range(23))
    for tr, te in folds:
        assert not set(tr) & set(te)
        assert len(tr) + len(te) == 23
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(folds, make_folds(23, 5, seed=3)))
    assert not all(np.array_equal(a[1], b[1]) for a, b in zip(folds, make_folds(23, 5, seed=4)))


def test_folds_errors():
    with pytest.raises(ConfigurationError):
        make_folds(3, 5, 0)
    with pytest.raises(ConfigurationError):
        make_folds(10, 1, 0)


def test_split_train_ratio():
    sub, val = split_train(np.arange(90), (8, 1), seed=0)
    assert (len(sub), len(val)) == (80, 10)
    assert sorted(np.concatenate([sub, val]).tolist()) == list(range(90))


def _samples(n, lengths):
    return [make_sample(" ".join(["w"] * lengths[i % len(lengths)]), VOCAB, ["Age"], f"s{i}")
            for i in range(n)]


def test_make_batches_sizes():
    table = EmbeddingTable(["w"], np.ones((1, 2)), np.zeros(2))
    batches = make_batches(_samples(130, [3]), table, batch_size=64, m_max=64)
    assert [len(b) for b in batches] == [64, 64, 2]


def test_collate_padding_and_mask():
    table = EmbeddingTable(["w"], np.ones((1, 2)), np.zeros(2))
    batch = collate(_samples(2, [3, 1]), table, m_max=64)
    assert batch.tokens.shape == (2, 3)
    np.testing.assert_array_equal(batch.mask, [[1, 1, 1], [1, 0, 0]])
    assert (batch.tokens[1, 1:] == PAD).all()


def test_collate_truncates_to_m_max():
    table = EmbeddingTable(["w"], np.ones((1, 2)), np.zeros(2))
    batch = collate(_samples(1, [100]), table, m_max=64)
    assert batch.tokens.shape == (1, 64)
    assert len(batch.words[0]) == 64


def test_shuffle_depends_on_epoch():
    table = EmbeddingTable(["w"], np.ones((1, 2)), np.zeros(2))
    samples = _samples(20, [2])
    ids = lambda e: [i for b in make_batches(samples, table, 5, seed=1, epoch=e) for i in b.ids]
    assert ids(1) == ids(1)
    assert ids(1) != ids(2)
    assert sorted(ids(1)) == sorted(s.id for s in samples)
