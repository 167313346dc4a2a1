"""MCREP: the binary container for per-sample, per-layer representation
vectors, bound to a dataset file by content hash.

Layout: magic "MCRP" | u32 version | u32 metadata length | metadata JSON
(UTF-8) | data (n_samples x n_layers x hidden_size float32, little-endian,
sample-major) | 8-byte data checksum (leading bytes of SHA-256).

Files are immutable after writing; readers may run concurrently.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import BindingError, FormatError, IntegrityError
from .taskgen import ProbingDataset

MAGIC = b"MCRP"
VERSION = 1
CHECKSUM_BYTES = 8

POOLINGS = ("target-mean", "mask-token", "sentence-mean", "cls")
INSTANCES = ("pre-trained", "fine-tuned")

# Pooling a task family's representations must use.
FAMILY_POOLING = {"features": "target-mean", "values": "target-mean",
                  "masked": "mask-token", "perturb": "sentence-mean"}


@dataclass
class RepSetHeader:
    model_id: str
    instance: str
    language: str
    task_name: str
    pooling: str
    n_samples: int
    n_layers: int
    hidden_size: int
    dataset_checksum: str

    def validate(self) -> None:
        if self.pooling not in POOLINGS:
            raise FormatError(f"unknown pooling {self.pooling!r}")
        if self.instance not in INSTANCES:
            raise FormatError(f"unknown model instance {self.instance!r}")
        if min(self.n_samples, self.n_layers, self.hidden_size) < 0:
            raise FormatError("negative dimensions in header")


@dataclass
class RepSet:
    header: RepSetHeader
    data: np.ndarray  # [n_samples, n_layers, hidden_size] float32

    @property
    def n_layers(self) -> int:
        return self.header.n_layers


def _data_checksum(raw: bytes) -> bytes:
    return hashlib.sha256(raw).digest()[:CHECKSUM_BYTES]


def write_repset(header: RepSetHeader, data: np.ndarray, path: str | Path) -> Path:
    """Serialize; validates the shape against the header before any write."""
    header.validate()
    expected = (header.n_samples, header.n_layers, header.hidden_size)
    if tuple(data.shape) != expected:
        raise FormatError(f"data shape {tuple(data.shape)} does not match header {expected}")
    raw = np.ascontiguousarray(data, dtype="<f4").tobytes()
    metadata = json.dumps(asdict(header), ensure_ascii=False,
                          sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(metadata)))
        fh.write(metadata)
        fh.write(raw)
        fh.write(_data_checksum(raw))
    return path


def read_repset(path: str | Path, dataset: ProbingDataset | None = None) -> RepSet:
    """Read and fully validate; optionally verify the dataset binding."""
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 8 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: not an MCREP file")
    version, = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    meta_len, = struct.unpack_from("<I", blob, 8)
    meta_end = 12 + meta_len
    if len(blob) < meta_end:
        raise IntegrityError(f"{path}: truncated metadata")
    try:
        metadata = json.loads(blob[12:meta_end].decode("utf-8"))
        header = RepSetHeader(**metadata)
    except (ValueError, TypeError) as exc:
        raise FormatError(f"{path}: bad metadata: {exc}") from None
    header.validate()

    n_bytes = header.n_samples * header.n_layers * header.hidden_size * 4
    if len(blob) != meta_end + n_bytes + CHECKSUM_BYTES:
        raise IntegrityError(f"{path}: truncated or oversized data section")
    raw = blob[meta_end:meta_end + n_bytes]
    if blob[meta_end + n_bytes:] != _data_checksum(raw):
        raise IntegrityError(f"{path}: data checksum mismatch")
    data = np.frombuffer(raw, dtype="<f4").reshape(
        header.n_samples, header.n_layers, header.hidden_size)

    repset = RepSet(header=header, data=data)
    if dataset is not None:
        bind_repset(repset, dataset)
    return repset


def bind_repset(repset: RepSet, dataset: ProbingDataset) -> None:
    """Check the repset belongs to the dataset (hash and sample count)."""
    checksum = dataset.checksum()
    if repset.header.dataset_checksum != checksum:
        raise BindingError(
            f"repset is bound to dataset {repset.header.dataset_checksum[:12]}..., "
            f"got {checksum[:12]}...")
    if repset.header.n_samples != len(dataset.instances):
        raise BindingError(
            f"repset has {repset.header.n_samples} samples, dataset has "
            f"{len(dataset.instances)} instances")


def slice_layer(repset: RepSet, layer: int) -> np.ndarray:
    """[n_samples, hidden_size] view of one layer, in dataset order."""
    if not 0 <= layer < repset.header.n_layers:
        raise IndexError(f"layer {layer} out of range [0, {repset.header.n_layers})")
    return repset.data[:, layer, :]


def concat_layers(repset: RepSet) -> np.ndarray:
    """[n_samples, n_layers * hidden_size]; neuron j sits in layer
    j // hidden_size, matching the per-layer attribution arithmetic."""
    n, L, h = repset.data.shape
    return repset.data.reshape(n, L * h)
