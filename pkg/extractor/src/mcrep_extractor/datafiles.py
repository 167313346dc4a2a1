"""The file-format contracts shared with the probing pipeline.

Dataset files are JSON-lines with keys in fixed order and sorted meta keys;
their checksum is the SHA-256 hex of the file bytes, and subsetting keeps the
surviving lines byte-identical, so a checksum over kept lines matches what the
pipeline computes for the same subset.

MCREP layout: "MCRP" | u32 version=1 | u32 metadata_len | metadata JSON |
n*L*h float32 little-endian | 8-byte SHA-256 prefix of the data section.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"MCRP"
VERSION = 1

INSTANCE_KEYS = ("id", "sentence_id", "tokens", "target_index", "label",
                 "task", "language", "split", "meta")

# Poolings a task family admits; cls serves the similarity analysis.
LEGAL_POOLINGS = {
    "features": ("target-mean",),
    "values": ("target-mean",),
    "masked": ("mask-token",),
    "perturb": ("sentence-mean", "cls"),
}


@dataclass
class DatasetFile:
    path: Path
    records: list[dict]
    lines: list[str]  # canonical serialized lines, one per record

    @property
    def task(self) -> str:
        return self.records[0]["task"] if self.records else ""

    @property
    def language(self) -> str:
        return self.records[0]["language"] if self.records else ""

    def checksum(self, keep: list[int] | None = None) -> str:
        rows = range(len(self.lines)) if keep is None else keep
        payload = "".join(self.lines[i] + "\n" for i in rows)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def load_dataset(path: str | Path) -> DatasetFile:
    path = Path(path)
    records, lines = [], []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        record = json.loads(line)
        missing = [key for key in INSTANCE_KEYS if key not in record]
        if missing:
            raise ValueError(f"{path}: record missing keys {missing}")
        records.append(record)
        lines.append(line)
    if not records:
        raise ValueError(f"{path}: empty dataset")
    return DatasetFile(path=path, records=records, lines=lines)


def legal_poolings(task: str) -> tuple[str, ...]:
    family = task.split(":", 1)[0]
    if family not in LEGAL_POOLINGS:
        raise ValueError(f"unknown task family {family!r}")
    return LEGAL_POOLINGS[family]


def write_mcrep(metadata: dict, data: np.ndarray, path: str | Path) -> Path:
    expected = (metadata["n_samples"], metadata["n_layers"], metadata["hidden_size"])
    if tuple(data.shape) != expected:
        raise ValueError(f"data shape {tuple(data.shape)} does not match {expected}")
    raw = np.ascontiguousarray(data, dtype="<f4").tobytes()
    blob = json.dumps(metadata, ensure_ascii=False, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(raw)
        fh.write(hashlib.sha256(raw).digest()[:8])
    return path


def write_sidecar(subwords: list[list[str]], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for row in subwords:
            fh.write(json.dumps({"subwords": row}, ensure_ascii=False,
                                separators=(",", ":")) + "\n")
    return path


def write_skip_list(skipped_ids: list[str], subset_checksum: str,
                    path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps({"skipped_ids": skipped_ids,
                                "subset_checksum": subset_checksum},
                               ensure_ascii=False, indent=2) + "\n",
                    encoding="utf-8")
    return path
