import numpy as np
import pytest

from aler.ingest import load_embeddings, load_records, load_truth, save_embeddings, save_records, save_truth
from aler.synth import PerturbationSpec, encode_text, generate


class TestGenerate:
    def test_zero_perturbation_gives_identical_pairs(self):
        spec = PerturbationSpec(typo_rate=0.0, token_drop=0.0, abbreviation=0.0,
                                distractor_rate=0.0, seed=1)
        records_r, records_s, truth, emb_r, emb_s = generate(50, spec)
        assert len(records_s) == 50
        for r_id, s_id in truth.pairs:
            assert records_r.records[r_id].values == records_s.records[s_id].values
            cos = float(emb_r.vector(r_id) @ emb_s.vector(s_id))
            assert cos == pytest.approx(1.0, abs=1e-6)

    def test_one_planted_match_per_base_record(self):
        _, _, truth, _, _ = generate(100, PerturbationSpec(seed=2))
        assert len(truth) == 100
        r_side = [r for r, _ in truth.pairs]
        s_side = [s for _, s in truth.pairs]
        assert len(set(r_side)) == 100 and len(set(s_side)) == 100

    def test_deterministic(self):
        a = generate(40, PerturbationSpec(seed=3))
        b = generate(40, PerturbationSpec(seed=3))
        assert a[2].pairs == b[2].pairs
        np.testing.assert_array_equal(a[3].vectors, b[3].vectors)
        assert [r.values for r in a[1].records.values()] == [r.values for r in b[1].records.values()]

    def test_matched_cosine_separated_from_random(self):
        _, _, truth, emb_r, emb_s = generate(500, PerturbationSpec(seed=4))
        matched = [float(emb_r.vector(r) @ emb_s.vector(s)) for r, s in truth.pairs]
        rng = np.random.Generator(np.random.PCG64(5))
        randoms = []
        for _ in range(500):
            r = emb_r.ids[rng.integers(len(emb_r.ids))]
            s = emb_s.ids[rng.integers(len(emb_s.ids))]
            randoms.append(float(emb_r.vector(r) @ emb_s.vector(s)))
        assert np.mean(matched) - np.mean(randoms) >= 0.2

    def test_distractors_share_brand_and_category(self):
        records_r, records_s, truth, _, _ = generate(50, PerturbationSpec(seed=6, distractor_rate=1.0))
        assert len(records_s) == 100
        matched_s = {s for _, s in truth.pairs}
        brands_r = {records_r.value(r, "brand") for r in records_r.records}
        for s_id in records_s.records:
            if s_id not in matched_s:
                assert records_s.value(s_id, "brand") in brands_r

    def test_minimum_size_enforced(self):
        with pytest.raises(ValueError):
            generate(5, PerturbationSpec(seed=0))

    def test_emits_pipeline_readable_files(self, tmp_path):
        records_r, records_s, truth, emb_r, emb_s = generate(30, PerturbationSpec(seed=7))
        save_records(tmp_path / "r.csv", records_r)
        save_truth(tmp_path / "t.csv", truth)
        save_embeddings(tmp_path / "e.bin", emb_r, binary=True)
        assert len(load_records(tmp_path / "r.csv", "id")) == 30
        assert load_truth(tmp_path / "t.csv").pairs == truth.pairs
        np.testing.assert_array_equal(load_embeddings(tmp_path / "e.bin").vectors, emb_r.vectors)


class TestEncodeText:
    def test_unit_norm_and_determinism(self):
        a = encode_text("vortek wireless router KX-4821 black")
        b = encode_text("vortek wireless router KX-4821 black")
        np.testing.assert_array_equal(a, b)
        assert np.linalg.norm(a.astype(np.float64)) == pytest.approx(1.0, abs=1e-6)

    def test_similar_strings_have_high_cosine(self):
        a = encode_text("vortek wireless router KX-4821 black")
        b = encode_text("vortek wireless ruoter KX-4821 black")
        c = encode_text("completely unrelated espresso grinder ZZ-1111")
        assert float(a @ b) > 0.85
        assert float(a @ c) < 0.5

    def test_empty_text_is_still_a_unit_vector(self):
        v = encode_text("")
        assert np.linalg.norm(v.astype(np.float64)) == pytest.approx(1.0, abs=1e-6)
