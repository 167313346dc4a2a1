import json

import numpy as np
import pytest
import torch

from mcrep_extractor.datafiles import load_dataset
from mcrep_extractor.extract import ExtractionJob, extract, prepare_words

from morphcall import taskgen
from morphcall.repstore import read_repset


def job_for(model_dir, dataset_path, out, pooling, **kwargs):
    return ExtractionJob(model_path=str(model_dir), instance="pre-trained",
                         dataset_path=str(dataset_path), pooling=pooling,
                         output_path=str(out), **kwargs)


class TestExtract:
    def test_target_mean_passes_primary_validation(self, tiny_model_dir,
                                                   generated_datasets, tmp_path):
        dataset_path = generated_datasets / "features_Number.jsonl"
        out = tmp_path / "features.mcrep"
        summary = extract(job_for(tiny_model_dir, dataset_path, out, "target-mean"))
        assert summary["n_skipped"] == 0
        assert summary["n_layers"] == 3  # embedding output + two blocks
        assert summary["hidden_size"] == 32

        dataset = taskgen.read_dataset(dataset_path)
        repset = read_repset(out, dataset=dataset)  # magic/shape/checksum/binding
        assert repset.header.pooling == "target-mean"
        assert repset.header.n_samples == len(dataset.instances)
        assert np.isfinite(repset.data).all()

    def test_two_runs_byte_identical(self, tiny_model_dir, generated_datasets,
                                     tmp_path):
        dataset_path = generated_datasets / "features_Number.jsonl"
        out1, out2 = tmp_path / "a.mcrep", tmp_path / "b.mcrep"
        extract(job_for(tiny_model_dir, dataset_path, out1, "target-mean"))
        extract(job_for(tiny_model_dir, dataset_path, out2, "target-mean"))
        assert out1.read_bytes() == out2.read_bytes()

    def test_masked_dataset_uses_mask_token(self, tiny_model_dir,
                                            generated_datasets, tmp_path):
        dataset_path = generated_datasets / "masked_Number.jsonl"
        record = load_dataset(dataset_path).records[0]
        words = prepare_words(record, "[MASK]", "mask-token")
        assert words[record["target_index"]] == "[MASK]"
        assert record["tokens"][record["target_index"]] != "[MASK]"

        out = tmp_path / "masked.mcrep"
        extract(job_for(tiny_model_dir, dataset_path, out, "mask-token"))
        repset = read_repset(out, dataset=taskgen.read_dataset(dataset_path))
        assert repset.header.pooling == "mask-token"
        sidecar = [json.loads(line) for line in
                   (tmp_path / "masked.mcrep.subwords.jsonl").read_text().splitlines()]
        assert len(sidecar) == repset.header.n_samples
        assert all("[MASK]" in row["subwords"] for row in sidecar)

    def test_sentence_and_cls_poolings(self, tiny_model_dir, generated_datasets,
                                       tmp_path):
        dataset_path = generated_datasets / "perturb_stopword_removal.jsonl"
        dataset = taskgen.read_dataset(dataset_path)
        for pooling in ("sentence-mean", "cls"):
            out = tmp_path / f"{pooling}.mcrep"
            extract(job_for(tiny_model_dir, dataset_path, out, pooling))
            repset = read_repset(out, dataset=dataset)
            assert repset.header.pooling == pooling

    def test_single_word_sentence_mean_equals_word_mean(self, tiny_model_dir,
                                                        tmp_path):
        record = {"id": "perturb:x:orig", "sentence_id": "x",
                  "tokens": ["situatsiyu"], "target_index": None, "label": 0,
                  "task": "perturb:stopword_removal", "language": "ru",
                  "split": "train", "meta": {}}
        dataset_path = tmp_path / "one.jsonl"
        dataset_path.write_text(json.dumps(record, ensure_ascii=False,
                                           separators=(",", ":")) + "\n",
                                encoding="utf-8")
        out = tmp_path / "one.mcrep"
        extract(job_for(tiny_model_dir, dataset_path, out, "sentence-mean"))

        from transformers import AutoModel, AutoTokenizer

        tokenizer = AutoTokenizer.from_pretrained(tiny_model_dir)
        model = AutoModel.from_pretrained(tiny_model_dir)
        model.eval()
        enc = tokenizer([["situatsiyu"]], is_split_into_words=True,
                        return_tensors="pt")
        assert enc["input_ids"].shape[1] == 4  # CLS + two pieces + SEP
        with torch.no_grad():
            hidden = torch.stack(model(**enc, output_hidden_states=True).hidden_states)
        expected = hidden[:, 0, 1:3, :].mean(axis=1).to(torch.float32).numpy()

        blob = out.read_bytes()
        meta_len = int.from_bytes(blob[8:12], "little")
        data = np.frombuffer(blob[12 + meta_len:-8], dtype="<f4").reshape(1, 3, 32)
        assert np.allclose(data[0], expected, atol=1e-6)

    def test_truncated_target_is_skipped_and_subset_binds(self, tiny_model_dir,
                                                          generated_datasets,
                                                          tmp_path):
        dataset_path = generated_datasets / "features_Number.jsonl"
        dataset = taskgen.read_dataset(dataset_path)
        out = tmp_path / "trunc.mcrep"
        summary = extract(job_for(tiny_model_dir, dataset_path, out,
                                  "target-mean", max_length=8))
        assert summary["n_skipped"] > 0
        skips = json.loads((tmp_path / "trunc.mcrep.skips.json").read_text())
        assert len(skips["skipped_ids"]) == summary["n_skipped"]

        subset = taskgen.subset_dataset(dataset, set(skips["skipped_ids"]))
        repset = read_repset(out, dataset=subset)
        assert repset.header.n_samples == len(subset.instances)
        assert skips["subset_checksum"] == subset.checksum()

    def test_pooling_family_mismatch_rejected(self, tiny_model_dir,
                                              generated_datasets, tmp_path):
        dataset_path = generated_datasets / "features_Number.jsonl"
        with pytest.raises(ValueError, match="not legal"):
            extract(job_for(tiny_model_dir, dataset_path, tmp_path / "x.mcrep",
                            "cls"))
        with pytest.raises(ValueError, match="not legal"):
            extract(job_for(tiny_model_dir,
                            generated_datasets / "masked_Number.jsonl",
                            tmp_path / "y.mcrep", "target-mean"))

    def test_unknown_instance_rejected(self, tiny_model_dir, generated_datasets,
                                       tmp_path):
        job = job_for(tiny_model_dir, generated_datasets / "features_Number.jsonl",
                      tmp_path / "z.mcrep", "target-mean")
        job.instance = "distilled"
        with pytest.raises(ValueError, match="instance"):
            extract(job)

    def test_layer_count_tracks_model_depth(self, tiny_model_dir,
                                            generated_datasets, tmp_path):
        # a six-layer encoder must yield seven rows per sample
        import torch
        from transformers import AutoTokenizer, BertConfig, BertModel

        deep_dir = tmp_path / "six-layer"
        deep_dir.mkdir()
        tokenizer = AutoTokenizer.from_pretrained(tiny_model_dir)
        tokenizer.save_pretrained(deep_dir)
        torch.manual_seed(0)
        BertModel(BertConfig(vocab_size=tokenizer.vocab_size, hidden_size=32,
                             num_hidden_layers=6, num_attention_heads=4,
                             intermediate_size=64,
                             max_position_embeddings=64)).save_pretrained(deep_dir)
        summary = extract(job_for(deep_dir, generated_datasets / "values_Number.jsonl",
                                  tmp_path / "deep.mcrep", "target-mean"))
        assert summary["n_layers"] == 7

    def test_cli_extract(self, tiny_model_dir, generated_datasets, tmp_path,
                         capsys):
        from mcrep_extractor.cli import main

        out = tmp_path / "cli.mcrep"
        rc = main(["extract", "--model", str(tiny_model_dir),
                   "--instance", "pre-trained",
                   "--dataset", str(generated_datasets / "values_Case.jsonl"),
                   "--pooling", "target-mean", "--out", str(out)])
        assert rc == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["n_layers"] == 3
        read_repset(out, dataset=taskgen.read_dataset(
            generated_datasets / "values_Case.jsonl"))
