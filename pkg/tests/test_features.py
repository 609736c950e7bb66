import numpy as np
import pytest

from aler.features import (
    interaction_matrix,
    interaction_vector,
    jaro_winkler,
    lexical_feature_vector,
    lexical_tail,
)
from aler.ingest import EmbeddingMatrix, Record, RecordCollection


class TestInteractionVector:
    def test_identical_inputs_zero_difference_block(self):
        v = np.array([0.6, 0.8])
        out = interaction_vector(v, v)
        np.testing.assert_allclose(out, [0.6, 0.8, 0.6, 0.8, 0.0, 0.0, 0.36, 0.64])

    def test_orthogonal_axes(self):
        out = interaction_vector(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        np.testing.assert_allclose(out, [1, 0, 0, 1, 1, 1, 0, 0])

    def test_output_length_is_4d(self):
        rng = np.random.Generator(np.random.PCG64(0))
        v_r, v_s = rng.normal(size=(2, 384))
        assert interaction_vector(v_r, v_s).shape == (4 * 384,)

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ValueError):
            interaction_vector(np.ones(3), np.ones(4))

    def test_third_block_non_negative(self):
        rng = np.random.Generator(np.random.PCG64(1))
        for _ in range(20):
            v_r, v_s = rng.normal(size=(2, 16))
            out = interaction_vector(v_r, v_s)
            assert np.all(out[32:48] >= 0.0)
            assert np.all(np.isfinite(out))

    def test_matrix_form_matches_vector_form(self):
        rng = np.random.Generator(np.random.PCG64(2))
        rows_r = rng.normal(size=(10, 8))
        rows_s = rng.normal(size=(10, 8))
        batch = interaction_matrix(rows_r, rows_s)
        for i in range(10):
            np.testing.assert_array_equal(batch[i], interaction_vector(rows_r[i], rows_s[i]))


class TestJaroWinkler:
    def test_identity(self):
        assert jaro_winkler("query", "query") == 1.0

    def test_disjoint_strings(self):
        assert jaro_winkler("abc", "xyz") == 0.0

    def test_martha_marhta(self):
        # Hand-evaluated oracle: Jaro with m=6, t=1 gives 17/18; prefix 3
        # boosts to 17/18 + 3*0.1*(1/18) = 0.96111.
        assert jaro_winkler("MARTHA", "MARHTA") == pytest.approx(0.9611, abs=1e-4)

    def test_empty_conventions(self):
        assert jaro_winkler("", "") == 1.0
        assert jaro_winkler("a", "") == 0.0
        assert jaro_winkler("", "a") == 0.0

    def test_case_and_whitespace_folding(self):
        assert jaro_winkler(" Query ", "qUERY") == 1.0

    def test_symmetry(self):
        rng = np.random.Generator(np.random.PCG64(3))
        alphabet = list("abcdefg ")
        for _ in range(200):
            a = "".join(rng.choice(alphabet, size=rng.integers(0, 12)))
            b = "".join(rng.choice(alphabet, size=rng.integers(0, 12)))
            assert jaro_winkler(a, b) == jaro_winkler(b, a)

    def test_range(self):
        rng = np.random.Generator(np.random.PCG64(4))
        alphabet = list("abcdefgh")
        for _ in range(200):
            a = "".join(rng.choice(alphabet, size=rng.integers(1, 10)))
            b = "".join(rng.choice(alphabet, size=rng.integers(1, 10)))
            assert 0.0 <= jaro_winkler(a, b) <= 1.0

    def test_purity(self):
        assert jaro_winkler("dixon", "dicksonx") == jaro_winkler("dixon", "dicksonx")


class TestLexicalFeatureVector:
    def _fixture(self):
        records_r = RecordCollection(["title", "name"], [Record("r1", ("acme router", "acme"))])
        records_s = RecordCollection(["title", "name"], [Record("s1", ("acme router", ""))])
        vec = np.array([0.6, 0.8], dtype=np.float32)
        emb_r = EmbeddingMatrix(["r1"], vec[None, :])
        emb_s = EmbeddingMatrix(["s1"], vec[None, :].copy())
        return records_r, records_s, emb_r, emb_s

    def test_perfect_match_pair(self):
        records_r, records_s, emb_r, emb_s = self._fixture()
        out = lexical_feature_vector(("r1", "s1"), records_r, records_s, ["title"], emb_r, emb_s)
        assert out.shape == (4 * 2 + 1,)
        np.testing.assert_allclose(out[4:6], 0.0, atol=1e-7)  # difference block
        assert out[-1] == 1.0

    def test_empty_value_gives_zero_component(self):
        records_r, records_s, emb_r, emb_s = self._fixture()
        out = lexical_feature_vector(("r1", "s1"), records_r, records_s,
                                     ["title", "name"], emb_r, emb_s)
        assert out.shape == (10,)
        assert out[-2] == 1.0
        assert out[-1] == 0.0

    def test_output_length_4d_plus_m(self):
        rng = np.random.Generator(np.random.PCG64(5))
        vec = rng.normal(size=4).astype(np.float32)
        records_r = RecordCollection(["title", "name"], [Record("r1", ("a", "b"))])
        records_s = RecordCollection(["title", "name"], [Record("s1", ("a", "b"))])
        emb_r = EmbeddingMatrix(["r1"], vec[None, :])
        emb_s = EmbeddingMatrix(["s1"], vec[None, :].copy())
        out = lexical_feature_vector(("r1", "s1"), records_r, records_s,
                                     ["title", "name"], emb_r, emb_s)
        assert out.shape == (4 * 4 + 2,)

    def test_unknown_attribute_rejected(self):
        records_r, records_s, emb_r, emb_s = self._fixture()
        with pytest.raises(KeyError):
            lexical_feature_vector(("r1", "s1"), records_r, records_s, ["nope"], emb_r, emb_s)

    def test_lexical_tail_components_in_unit_interval(self):
        tail = lexical_tail(["abc", "", "same"], ["abd", "", "same"])
        assert np.all(tail >= 0.0) and np.all(tail <= 1.0)
        assert tail[1] == 1.0 and tail[2] == 1.0
