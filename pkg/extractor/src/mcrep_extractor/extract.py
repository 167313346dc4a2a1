"""Per-layer hidden-state extraction with the four pooling modes.

The model never sees raw text: dataset tokens are passed pre-split so subword
spans can be mapped back to word positions. For masked-token tasks the target
word is swapped for the tokenizer's mask string before encoding. Instances
whose target span cannot be recovered (e.g. truncated away) are skipped and
listed so the pipeline can subset the dataset; the emitted repset is bound to
the checksum of that subset.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .datafiles import (DatasetFile, legal_poolings, load_dataset, write_mcrep,
                        write_sidecar, write_skip_list)

logger = logging.getLogger(__name__)


@dataclass
class ExtractionJob:
    model_path: str
    instance: str               # "pre-trained" | "fine-tuned"
    dataset_path: str
    pooling: str                # target-mean | mask-token | sentence-mean | cls
    output_path: str
    batch_size: int = 16
    device: str = "cpu"
    seed: int = 0
    max_length: int | None = None

    def validate(self, task: str) -> None:
        if self.instance not in ("pre-trained", "fine-tuned"):
            raise ValueError(f"unknown instance {self.instance!r}")
        allowed = legal_poolings(task)
        if self.pooling not in allowed:
            raise ValueError(f"pooling {self.pooling!r} not legal for {task!r}; "
                             f"expected one of {allowed}")


def _deterministic(seed: int) -> None:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)


def prepare_words(record: dict, mask_token: str, pooling: str) -> list[str]:
    """Word sequence fed to the tokenizer; masked tasks hide the target."""
    words = list(record["tokens"])
    if pooling == "mask-token":
        words[record["target_index"]] = mask_token
    return words


def _pool(hidden: torch.Tensor, word_ids: list[int | None], record: dict,
          pooling: str) -> np.ndarray | None:
    """[L, T, H] -> [L, H] or None when the target span is unrecoverable."""
    if pooling == "cls":
        return hidden[:, 0, :].numpy()
    if pooling == "sentence-mean":
        positions = [t for t, w in enumerate(word_ids) if w is not None]
        if not positions:
            return None
        return hidden[:, positions, :].mean(axis=1).numpy()
    target = record["target_index"]
    positions = [t for t, w in enumerate(word_ids) if w == target]
    if not positions:
        return None
    return hidden[:, positions, :].mean(axis=1).numpy()


def extract(job: ExtractionJob) -> dict:
    """Run the model over the dataset and write MCREP + sidecar (+ skip list).

    Returns a summary dict with counts and output paths."""
    from transformers import AutoModel, AutoTokenizer

    dataset = load_dataset(job.dataset_path)
    job.validate(dataset.task)
    _deterministic(job.seed)

    tokenizer = AutoTokenizer.from_pretrained(job.model_path, use_fast=True)
    model = AutoModel.from_pretrained(job.model_path)
    model.to(job.device)
    model.eval()

    max_length = job.max_length
    if max_length is None:
        max_length = int(getattr(model.config, "max_position_embeddings", 512))

    if job.pooling == "mask-token" and tokenizer.mask_token is None:
        raise ValueError("tokenizer has no mask token; cannot run masked tasks")

    kept_rows: list[int] = []
    vectors: list[np.ndarray] = []
    subwords: list[list[str]] = []
    skipped: list[str] = []

    records = dataset.records
    for start in range(0, len(records), job.batch_size):
        batch = records[start:start + job.batch_size]
        words = [prepare_words(r, tokenizer.mask_token or "", job.pooling)
                 for r in batch]
        encoded = tokenizer(words, is_split_into_words=True, padding=True,
                            truncation=True, max_length=max_length,
                            return_tensors="pt")
        with torch.no_grad():
            output = model(**{k: v.to(job.device) for k, v in encoded.items()},
                           output_hidden_states=True)
        # [L+1, B, T, H] on cpu, float32
        hidden = torch.stack(output.hidden_states).to("cpu", torch.float32)
        for b, record in enumerate(batch):
            word_ids = encoded.word_ids(batch_index=b)
            attention = encoded["attention_mask"][b].tolist()
            live = [t for t, keep in enumerate(attention) if keep]
            pooled = _pool(hidden[:, b, :, :], word_ids, record, job.pooling)
            if pooled is None:
                skipped.append(record["id"])
                logger.warning("skipping %s: target span not recoverable",
                               record["id"])
                continue
            kept_rows.append(start + b)
            vectors.append(pooled.astype(np.float32))
            ids = encoded["input_ids"][b]
            subwords.append([tokenizer.convert_ids_to_tokens(int(ids[t]))
                             for t in live if word_ids[t] is not None])

    if not kept_rows:
        raise ValueError("every instance was skipped; nothing to write")

    data = np.stack(vectors, axis=0)  # [n, L+1, H]
    checksum = dataset.checksum(kept_rows if skipped else None)
    metadata = {
        "model_id": str(job.model_path),
        "instance": job.instance,
        "language": dataset.language,
        "task_name": dataset.task,
        "pooling": job.pooling,
        "n_samples": int(data.shape[0]),
        "n_layers": int(data.shape[1]),
        "hidden_size": int(data.shape[2]),
        "dataset_checksum": checksum,
    }
    out = Path(job.output_path)
    write_mcrep(metadata, data, out)
    write_sidecar(subwords, out.with_suffix(out.suffix + ".subwords.jsonl"))
    summary = {
        "output": str(out),
        "n_samples": int(data.shape[0]),
        "n_layers": int(data.shape[1]),
        "hidden_size": int(data.shape[2]),
        "n_skipped": len(skipped),
        "dataset_checksum": checksum,
    }
    if skipped:
        skip_path = out.with_suffix(out.suffix + ".skips.json")
        write_skip_list(skipped, checksum, skip_path)
        summary["skip_list"] = str(skip_path)
    return summary
