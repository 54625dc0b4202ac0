import io
import math

import numpy as np
import pytest

from sentspace.embed import (
    DCTEmbedder,
    EmbeddingSet,
    GEMEmbedder,
    GemParams,
    MeanEmbedder,
    WordVectorTable,
    embed_dct,
    embed_gem,
    embed_mean,
    join_labels,
    load_embedding_set,
    load_word_vectors,
    read_embedding_set,
    write_embedding_set,
)
from sentspace.corpus import TokenizedSentence
from sentspace.exceptions import (
    EmptyEmbeddingError,
    EmptyInputError,
    FormatError,
    JoinError,
)

TOY = {
    "a": [1.0, 0.0],
    "b": [0.6, 0.8],
    "c": [-0.3, 1.2],
    "d": [2.0, 1.0],
}
TOY_CORPUS = [["a", "b", "c"], ["b", "d"], ["c", "a", "d", "b"]]


@pytest.fixture
def toy():
    return WordVectorTable.from_dict(TOY)


def gem_oracle(corpus, vectors, window, n_comp, power):
    """Step-by-step GEM using numpy's Householder QR and SVD."""
    means = np.array([np.mean([vectors[w] for w in s], axis=0) for s in corpus])
    _, sing, vt = np.linalg.svd(means, full_matrices=False)
    basis = vt[:n_comp]
    for row in basis:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    sigmas = sing[:n_comp]
    out = []
    for s in corpus:
        mats = np.array([vectors[w] for w in s])
        n = len(s)
        total = np.zeros(mats.shape[1])
        for i in range(n):
            lo = i - (window - 1) // 2
            ctx = [p for p in range(max(0, lo), min(n, lo + window)) if p != i]
            q, r = np.linalg.qr(mats[ctx + [i]].T)
            signs = np.sign(np.diag(r))
            q, r = q * signs, r * signs[:, None]
            col = r[:, -1]
            alpha_n = math.exp(col[-1] / np.linalg.norm(col))
            alpha_s = col[-1] / window
            w = sigmas ** power
            alpha_u = math.exp(-np.sum(w * (basis @ q[:, -1]) ** 2) / w.sum())
            total += (alpha_n + alpha_s + alpha_u) * mats[i]
        out.append(total - basis.T @ (basis @ total))
    return np.array(out)


class TestWordVectors:
    def test_load(self):
        table = load_word_vectors(io.StringIO("a 1.0 0.0\nb 0.0 1.0\n"))
        assert table.dimension == 2 and len(table) == 2
        np.testing.assert_array_equal(table.vectors[table.index["b"]], [0, 1])

    def test_inconsistent_dimension(self):
        with pytest.raises(FormatError) as info:
            load_word_vectors(io.StringIO("a 1 2 3\nb 1 2\n"))
        assert info.value.line == 2

    def test_duplicate_keeps_first(self, caplog):
        table = load_word_vectors(io.StringIO("a 1 2\na 3 4\n"))
        assert len(table) == 1
        np.testing.assert_array_equal(table.vectors[0], [1, 2])
        assert "duplicate" in caplog.text

    def test_empty(self):
        table = load_word_vectors(io.StringIO(""))
        assert table.dimension is None
        with pytest.raises(EmptyInputError):
            embed_mean(["a"], table)


class TestMean:
    def test_examples(self):
        table = WordVectorTable.from_dict({"a": [1, 2], "b": [3, 4]})
        np.testing.assert_array_equal(embed_mean(["a", "b"], table), [2, 3])
        np.testing.assert_array_equal(embed_mean(["b"], table), [3, 4])

    def test_oov_policies(self):
        table = WordVectorTable.from_dict({"a": [1, 2], "b": [3, 4]})
        np.testing.assert_allclose(embed_mean(["a", "b", "unk"], table), [2, 3])
        zero = table.with_policy("zero")
        np.testing.assert_allclose(embed_mean(["a", "b", "unk"], zero), [4 / 3, 2])

    def test_all_oov(self, toy):
        with pytest.raises(EmptyEmbeddingError) as info:
            embed_mean(["x", "y"], toy, sentence_id="s9")
        assert info.value.sentence_id == "s9"

    def test_transformer(self, toy):
        out = MeanEmbedder(toy).fit_transform(TOY_CORPUS)
        assert out.shape == (3, 2)
        np.testing.assert_allclose(out[1], [1.3, 0.9])


class TestDCT:
    def test_k1_is_scaled_mean(self, toy):
        for s in TOY_CORPUS:
            np.testing.assert_allclose(embed_dct(s, toy, 1),
                                       math.sqrt(len(s)) * embed_mean(s, toy),
                                       rtol=0, atol=1e-9)

    def test_single_token_padding(self, toy):
        np.testing.assert_array_equal(embed_dct(["d"], toy, 2), [2, 1, 0, 0])

    def test_two_tokens_brute_force(self):
        table = WordVectorTable.from_dict({"a": [1.0], "b": [3.0]})
        c = [1.0, 3.0]
        coef0 = math.sqrt(1 / 2) * sum(c)
        coef1 = math.sqrt(2 / 2) * sum(v * math.cos(math.pi / 2 * (n + 0.5))
                                       for n, v in enumerate(c))
        np.testing.assert_allclose(embed_dct(["a", "b"], table, 2), [coef0, coef1],
                                   atol=1e-12)
        assert coef0 == pytest.approx(2 * math.sqrt(2))
        assert coef1 == pytest.approx(-math.sqrt(2))

    def test_coefficient_major_layout(self, toy):
        out = embed_dct(["a", "b", "c"], toy, 3)
        assert out.shape == (6,)
        mat = np.array([TOY["a"], TOY["b"], TOY["c"]])
        for j in range(3):
            for dim in range(2):
                expected = (math.sqrt((1 if j == 0 else 2) / 3)
                            * sum(mat[n, dim] * math.cos(math.pi / 3 * (n + 0.5) * j)
                                  for n in range(3)))
                assert out[j * 2 + dim] == pytest.approx(expected, abs=1e-12)

    def test_transformer_dimension(self, toy):
        assert DCTEmbedder(toy, k=4).fit_transform(TOY_CORPUS).shape == (3, 8)


class TestGEM:
    def test_single_word_direction(self, toy):
        out = embed_gem([["d"]], toy, GemParams(corpus_components=0))
        v = np.array(TOY["d"])
        scale = out[0] @ v / (v @ v)
        assert scale > 0
        np.testing.assert_allclose(out[0], scale * v, atol=1e-12)

    def test_matches_scripted_oracle(self, toy):
        params = GemParams(window_size=2, corpus_components=1, power=2.0)
        got = embed_gem(TOY_CORPUS, toy, params)
        expected = gem_oracle(TOY_CORPUS, TOY, 2, 1, 2.0)
        np.testing.assert_allclose(got, expected, atol=1e-9)

    def test_oracle_without_removal(self, toy):
        params = GemParams(window_size=2, corpus_components=0)
        got = embed_gem(TOY_CORPUS, toy, params)
        # With no corpus directions the uniqueness score is exactly 1.
        gem = GEMEmbedder.from_params(toy, params).fit(TOY_CORPUS)
        for row, s in enumerate(TOY_CORPUS):
            alphas, vecs = gem.sentence_weights(s)
            np.testing.assert_allclose(got[row], alphas @ vecs, atol=1e-12)
            assert np.all(alphas >= 1.0)

    def test_uniform_weights_reproduce_scaled_mean(self):
        rng = np.random.default_rng(11)
        vocab = {f"w{i}": rng.standard_normal(6) for i in range(12)}
        table = WordVectorTable.from_dict(vocab)
        corpus = [list(rng.choice(list(vocab), size=rng.integers(1, 9)))
                  for _ in range(20)]
        gem = GEMEmbedder(table, corpus_components=0, weighting="uniform")
        got = gem.fit_transform(corpus)
        for row, s in enumerate(corpus):
            np.testing.assert_allclose(got[row], len(s) * embed_mean(s, table),
                                       atol=1e-9)

    def test_removal_orthogonal_to_corpus_directions(self):
        rng = np.random.default_rng(12)
        vocab = {f"w{i}": rng.standard_normal(8) for i in range(30)}
        table = WordVectorTable.from_dict(vocab)
        corpus = [list(rng.choice(list(vocab), size=7)) for _ in range(25)]
        gem = GEMEmbedder(table, corpus_components=3).fit(corpus)
        out = gem.transform(corpus)
        np.testing.assert_allclose(out @ gem.components_.T, 0, atol=1e-10)

    def test_repeated_word_is_handled(self, toy):
        # "a a" makes the second context column collinear with the first.
        out = embed_gem([["a", "a", "b"]], toy, GemParams(window_size=3,
                                                          corpus_components=0))
        assert np.all(np.isfinite(out))

    def test_deterministic_and_dimension(self):
        rng = np.random.default_rng(13)
        vocab = {f"w{i}": rng.standard_normal(10) for i in range(40)}
        table = WordVectorTable.from_dict(vocab)
        corpus = [list(rng.choice(list(vocab), size=12)) for _ in range(10)]
        a = embed_gem(corpus, table)
        b = embed_gem([list(s) for s in corpus], table)
        assert a.shape == (10, 10)
        assert a.tobytes() == b.tobytes()


class TestEmbeddingFile:
    def test_round_trip(self):
        es = EmbeddingSet(["x", "y"], np.array([[1.5, -2, 3], [0, 1e-3, 7]], "f4"))
        buf = io.BytesIO()
        write_embedding_set(es, buf)
        raw = buf.getvalue()
        assert raw[:4] == b"EMB1"
        assert int.from_bytes(raw[4:12], "little") == 2
        assert int.from_bytes(raw[12:20], "little") == 3
        back = read_embedding_set(io.BytesIO(raw))
        assert back.ids == ["x", "y"]
        assert back.vectors.tobytes() == es.vectors.astype("<f4").tobytes()

    def test_empty(self):
        buf = io.BytesIO()
        write_embedding_set(EmbeddingSet([], np.zeros((0, 4))), buf)
        back = read_embedding_set(io.BytesIO(buf.getvalue()))
        assert len(back) == 0 and back.dimension == 4

    def test_truncated(self):
        buf = io.BytesIO()
        write_embedding_set(EmbeddingSet(["a"], np.ones((1, 4))), buf)
        with pytest.raises(FormatError):
            read_embedding_set(io.BytesIO(buf.getvalue()[:25]))
        with pytest.raises(FormatError):
            read_embedding_set(io.BytesIO(b"EMB2" + buf.getvalue()[4:]))

    def test_join(self):
        es = EmbeddingSet(["s1", "s2"], np.ones((2, 2)))
        corpus = [TokenizedSentence.create("s2", ["a", "b"], [0, 1], [1, 2], "r2"),
                  TokenizedSentence.create("s1", ["a", "b"], [0, 1], [1, 2], "r1")]
        assert join_labels(es, corpus).labels == ["r1", "r2"]
        with pytest.raises(JoinError) as info:
            join_labels(EmbeddingSet(["s3"], np.ones((1, 2))), corpus)
        assert info.value.missing == ["s3"]

    @pytest.mark.slow
    def test_nyt_scale_file(self, tmp_path):
        n, d = 111_610, 768
        path = tmp_path / "big.emb"
        vectors = np.random.default_rng(0).standard_normal((n, d), dtype=np.float32)
        from sentspace.embed import save_embedding_set
        save_embedding_set(EmbeddingSet([f"s{i}" for i in range(n)], vectors), path)
        del vectors
        es = load_embedding_set(path)
        assert len(es) == n and es.dimension == d
