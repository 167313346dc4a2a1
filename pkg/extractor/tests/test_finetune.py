import os
from pathlib import Path

import pytest

from mcrep_extractor.finetune import (finetune_pos, read_tagged_sentences,
                                      split_sentences)


class TestData:
    def test_read_fixture_treebank(self, fixtures_dir):
        sentences = read_tagged_sentences(
            [fixtures_dir / "treebanks" / "ru_fixture.conllu"])
        assert len(sentences) == 34
        assert all(len(s.forms) == len(s.tags) for s in sentences)
        tags = {t for s in sentences for t in s.tags}
        assert {"NOUN", "VERB", "PRON", "ADP", "PUNCT"} <= tags

    def test_split_is_sentence_disjoint(self, fixtures_dir):
        sentences = read_tagged_sentences(
            [fixtures_dir / "treebanks" / "ru_fixture.conllu"])
        train, dev, test = split_sentences(sentences, seed=3)
        assert len(train) + len(dev) + len(test) == len(sentences)
        ids = [id(s) for s in train + dev + test]
        assert len(set(ids)) == len(ids)
        assert abs(len(train) - 0.8 * len(sentences)) <= 1

    def test_empty_input_rejected(self, tmp_path):
        empty = tmp_path / "empty.conllu"
        empty.write_text("", encoding="utf-8")
        with pytest.raises(ValueError):
            read_tagged_sentences([empty])


class TestSmokeFinetune:
    @pytest.fixture(scope="class")
    def result(self, tiny_model_dir, fixtures_dir, tmp_path_factory):
        out = tmp_path_factory.mktemp("checkpoint")
        return finetune_pos(
            [fixtures_dir / "treebanks" / "ru_fixture.conllu"],
            str(tiny_model_dir), out, seed=0, epochs=5, batch_size=2,
            learning_rate=2e-3)

    def test_train_accuracy_reaches_smoke_bar(self, result):
        assert result.epochs <= 5
        assert result.metrics["train"]["accuracy"] >= 0.80, result.history

    def test_metrics_reported_for_every_split(self, result):
        for split in ("train", "dev", "test"):
            metrics = result.metrics[split]
            for key in ("accuracy", "f1", "precision", "recall"):
                assert 0.0 <= metrics[key] <= 1.0
            assert metrics["n_tokens"] > 0

    @pytest.mark.skipif(
        not (os.environ.get("MORPHCALL_UD_DIR") and os.environ.get("MORPHCALL_POS_MODEL")),
        reason="optional full-scale check; set MORPHCALL_UD_DIR (with en/*.conllu) "
               "and MORPHCALL_POS_MODEL to a local checkpoint to run")
    def test_full_scale_english_pos_accuracy(self, tmp_path):
        treebanks = sorted((Path(os.environ["MORPHCALL_UD_DIR"]) / "en").glob("*.conllu"))
        assert treebanks, "no English treebanks under MORPHCALL_UD_DIR/en"
        result = finetune_pos(treebanks, os.environ["MORPHCALL_POS_MODEL"],
                              tmp_path / "ckpt", seed=42, epochs=3,
                              batch_size=16, learning_rate=5e-5)
        print("  full-scale en POS test metrics:", result.metrics["test"])
        assert result.metrics["test"]["accuracy"] >= 0.95

    def test_checkpoint_reloads_for_extraction(self, result, generated_datasets,
                                               tmp_path):
        from mcrep_extractor.extract import ExtractionJob, extract

        from morphcall import taskgen
        from morphcall.repstore import read_repset

        dataset_path = generated_datasets / "features_Number.jsonl"
        out = tmp_path / "finetuned.mcrep"
        summary = extract(ExtractionJob(
            model_path=result.checkpoint, instance="fine-tuned",
            dataset_path=str(dataset_path), pooling="target-mean",
            output_path=str(out)))
        assert summary["n_layers"] == 3
        repset = read_repset(out, dataset=taskgen.read_dataset(dataset_path))
        assert repset.header.instance == "fine-tuned"
