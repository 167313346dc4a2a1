"""Layer similarity between model instances on original/perturbed pairs.

The measure is linear CKA on column-centered matrices:

    score = ||X'Y||_F^2 / (||X'X||_F * ||Y'Y||_F)

which is invariant to orthogonal transforms and isotropic scaling of either
side. Curves compare, per layer, the CLS-pooled representations of original
sentences from one model instance against their perturbed partners from
another instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, IntegrityError
from .repstore import RepSet
from .taskgen import ProbingDataset

COMBINATIONS = (("pre-trained", "pre-trained"),
                ("pre-trained", "fine-tuned"),
                ("fine-tuned", "fine-tuned"))


@dataclass
class SimCurve:
    combination: str           # e.g. "pre-trained/fine-tuned"
    task: str
    model_id: str
    scores: list[float] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {"combination": self.combination, "task": self.task,
                "model_id": self.model_id, "scores": self.scores}

    def to_csv_rows(self) -> list[list]:
        return [[self.combination, layer, score]
                for layer, score in enumerate(self.scores)]


def center_columns(X: np.ndarray) -> np.ndarray:
    """Subtract the column means; needs at least two rows."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise ValueError(f"centering needs n >= 2, got {X.shape[0]}")
    return X - X.mean(axis=0, keepdims=True)


def linear_cka(X: np.ndarray, Y: np.ndarray) -> float:
    """Linear CKA between two representation matrices over the same samples."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"sample counts differ: {X.shape[0]} vs {Y.shape[0]}")
    X = center_columns(X)
    Y = center_columns(Y)
    cross = float(np.linalg.norm(X.T @ Y, "fro") ** 2)
    norm_x = float(np.linalg.norm(X.T @ X, "fro"))
    norm_y = float(np.linalg.norm(Y.T @ Y, "fro"))
    if norm_x == 0.0 or norm_y == 0.0:
        return 0.0
    return cross / (norm_x * norm_y)


def build_pairing(dataset: ProbingDataset) -> list[tuple[int, int]]:
    """(original row, perturbed row) index pairs from a perturbation dataset,
    matched on meta.paired_original."""
    groups: dict[str, dict[int, int]] = {}
    for row, inst in enumerate(dataset.instances):
        pair_id = inst.meta.get("paired_original")
        if pair_id is None:
            raise IntegrityError(f"instance {inst.id} carries no pairing id")
        groups.setdefault(pair_id, {})[inst.label] = row
    unmatched = sorted(pid for pid, members in groups.items()
                       if set(members) != {0, 1})
    if unmatched:
        raise IntegrityError("unpaired instances: " + ", ".join(unmatched))
    return [(members[0], members[1]) for _, members in sorted(groups.items())]


def _check_cls(repset: RepSet, side: str) -> None:
    if repset.header.pooling != "cls":
        raise FormatError(f"{side} repset pooling is {repset.header.pooling!r}, "
                          f"similarity analysis needs 'cls'")


def ckasim_curve(repset_a: RepSet, repset_b: RepSet,
                 pairing: list[tuple[int, int]]) -> SimCurve:
    """Per-layer CKA between originals from repset A and their perturbed
    partners from repset B."""
    _check_cls(repset_a, "A")
    _check_cls(repset_b, "B")
    if repset_a.header.n_layers != repset_b.header.n_layers:
        raise FormatError(f"layer counts differ: {repset_a.header.n_layers} "
                          f"vs {repset_b.header.n_layers}")
    orig_rows = np.asarray([orig for orig, _ in pairing], dtype=np.int64)
    pert_rows = np.asarray([pert for _, pert in pairing], dtype=np.int64)
    combination = f"{repset_a.header.instance}/{repset_b.header.instance}"
    curve = SimCurve(combination=combination, task=repset_a.header.task_name,
                     model_id=repset_a.header.model_id)
    for layer in range(repset_a.header.n_layers):
        X = repset_a.data[orig_rows, layer, :]
        Y = repset_b.data[pert_rows, layer, :]
        curve.scores.append(linear_cka(X, Y))
    return curve


def ckasim_matrix(repset_a: RepSet, repset_b: RepSet,
                  pairing: list[tuple[int, int]]) -> np.ndarray:
    """Full layer-pair CKA matrix [L_a, L_b]; optional companion output to the
    aligned-layer curve."""
    _check_cls(repset_a, "A")
    _check_cls(repset_b, "B")
    orig_rows = np.asarray([orig for orig, _ in pairing], dtype=np.int64)
    pert_rows = np.asarray([pert for _, pert in pairing], dtype=np.int64)
    out = np.zeros((repset_a.header.n_layers, repset_b.header.n_layers))
    for la in range(repset_a.header.n_layers):
        X = repset_a.data[orig_rows, la, :]
        for lb in range(repset_b.header.n_layers):
            out[la, lb] = linear_cka(X, repset_b.data[pert_rows, lb, :])
    return out


def instance_combinations(model_id: str,
                          available: dict[str, object]) -> list[tuple[str, str]]:
    """The three instance pairings, in fixed order; both instances' repsets
    must be provided."""
    for instance in ("pre-trained", "fine-tuned"):
        if available.get(instance) is None:
            raise ConfigError(f"missing repset for {model_id} [{instance}]")
    return list(COMBINATIONS)
