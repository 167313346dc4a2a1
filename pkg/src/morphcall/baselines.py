"""Count-based and static-vector baselines feeding the probing classifier.

The TF-IDF convention is pinned so independent implementations agree at the
math level: tf = 1 + ln(count) when sublinear (raw count otherwise),
idf = ln((1 + N) / (1 + df)) + 1, rows L2-normalized, vocabulary built from
the train split only and capped by document frequency with a lexicographic
tiebreak.

Which text a baseline sees depends on the task family: the target word for
occurrence/value tasks, the context with the target removed for masked tasks,
and the whole sentence for perturbation detection.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import FormatError, GenerationError
from .probekit import (LayerResult, ProbeConfig, ProbeResult, fit_logreg,
                       macro_ovr_auc, predict_scores, split_indices)
from .repstore import FAMILY_POOLING
from .taskgen import ProbingDataset, TaskInstance

BASELINE_KINDS = ("char-count", "char-ngram-tfidf", "subword-tfidf", "static-vectors")


@dataclass
class BaselineConfig:
    kind: str = "char-ngram-tfidf"
    ngram_range: tuple[int, int] = (1, 4)
    vocab_cap: int = 200_000
    sublinear_tf: bool = True

    def __post_init__(self):
        lo, hi = self.ngram_range
        if not 1 <= lo <= hi:
            raise ValueError(f"bad n-gram range {self.ngram_range}")
        if self.kind not in BASELINE_KINDS:
            raise ValueError(f"unknown baseline kind {self.kind!r}")


@dataclass
class TfidfModel:
    vocabulary: dict[str, int]
    idf: np.ndarray
    fitted_on: str  # hash of the training units
    ngram_range: tuple[int, int]
    sublinear_tf: bool


def instance_unit(instance: TaskInstance) -> str:
    """The text a count baseline sees for one instance."""
    if instance.target_index is None:
        return " ".join(instance.tokens)
    if instance.meta.get("masked"):
        context = [tok for i, tok in enumerate(instance.tokens)
                   if i != instance.target_index]
        return " ".join(context)
    return instance.tokens[instance.target_index]


def instance_tokens(instance: TaskInstance) -> list[str]:
    """Token list for the static-vector pooling of one instance."""
    if instance.target_index is None:
        return list(instance.tokens)
    if instance.meta.get("masked"):
        return [tok for i, tok in enumerate(instance.tokens)
                if i != instance.target_index]
    return [instance.tokens[instance.target_index]]


def char_count(unit: str | list[str]) -> int:
    """Unicode scalar count; a token list counts token characters only, which
    excludes the separator spaces of sentence units."""
    if isinstance(unit, str):
        return len(unit)
    return sum(len(token) for token in unit)


def _char_ngrams(text: str, lo: int, hi: int) -> list[str]:
    grams = []
    for n in range(lo, hi + 1):
        grams.extend(text[i:i + n] for i in range(len(text) - n + 1))
    return grams


def _token_ngrams(tokens: list[str], lo: int, hi: int) -> list[str]:
    grams = []
    for n in range(lo, hi + 1):
        grams.extend(" ".join(tokens[i:i + n]) for i in range(len(tokens) - n + 1))
    return grams


def _unit_ngrams(unit: str | list[str], lo: int, hi: int) -> list[str]:
    if isinstance(unit, str):
        return _char_ngrams(unit, lo, hi)
    return _token_ngrams(unit, lo, hi)


def fit_tfidf(train_units: list, config: BaselineConfig) -> TfidfModel:
    """Build the vocabulary and idf vector from training units (strings for
    char mode, token lists for subword mode)."""
    if not train_units:
        raise GenerationError("empty training corpus for TF-IDF")
    lo, hi = config.ngram_range
    df: dict[str, int] = {}
    for unit in train_units:
        for gram in set(_unit_ngrams(unit, lo, hi)):
            df[gram] = df.get(gram, 0) + 1
    grams = sorted(df)
    if len(grams) > config.vocab_cap:
        grams.sort(key=lambda g: (-df[g], g))
        grams = sorted(grams[:config.vocab_cap])
    vocabulary = {gram: col for col, gram in enumerate(grams)}
    n_docs = len(train_units)
    idf = np.asarray([math.log((1 + n_docs) / (1 + df[g])) + 1.0 for g in grams])
    digest = hashlib.sha256(
        "\x1f".join(" ".join(u) if isinstance(u, list) else u
                    for u in train_units).encode("utf-8")).hexdigest()
    return TfidfModel(vocabulary=vocabulary, idf=idf, fitted_on=digest,
                      ngram_range=config.ngram_range,
                      sublinear_tf=config.sublinear_tf)


def transform_tfidf(model: TfidfModel, units: list) -> sp.csr_matrix:
    """Sparse [n_units, vocab] TF-IDF matrix; out-of-vocabulary n-grams are
    dropped and empty rows stay zero."""
    lo, hi = model.ngram_range
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    for unit in units:
        counts: dict[int, int] = {}
        for gram in _unit_ngrams(unit, lo, hi):
            col = model.vocabulary.get(gram)
            if col is not None:
                counts[col] = counts.get(col, 0) + 1
        row_cols = sorted(counts)
        row_vals = []
        for col in row_cols:
            tf = 1.0 + math.log(counts[col]) if model.sublinear_tf else float(counts[col])
            row_vals.append(tf * model.idf[col])
        norm = math.sqrt(sum(v * v for v in row_vals))
        if norm > 0:
            row_vals = [v / norm for v in row_vals]
        indices.extend(row_cols)
        values.extend(row_vals)
        indptr.append(len(indices))
    return sp.csr_matrix((values, indices, indptr),
                         shape=(len(units), len(model.vocabulary)))


@dataclass
class StaticVectors:
    dim: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)


def load_static_vectors(path: str | Path) -> StaticVectors:
    """Read word vectors in the standard text format: a "count dim" header,
    then one word and dim floats per line."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise FormatError(f"{path}: line 1: empty vector file")
    header = lines[0].split()
    if len(header) != 2 or not all(part.isdigit() for part in header):
        raise FormatError(f"{path}: line 1: bad header {lines[0]!r}")
    count, dim = int(header[0]), int(header[1])
    table = StaticVectors(dim=dim)
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.rstrip().split(" ")
        if len(parts) != dim + 1:
            raise FormatError(f"{path}: line {line_no}: expected {dim + 1} fields, "
                              f"got {len(parts)}")
        try:
            vec = np.asarray([float(x) for x in parts[1:]], dtype=np.float64)
        except ValueError:
            raise FormatError(f"{path}: line {line_no}: non-numeric value") from None
        table.vectors[parts[0]] = vec
    if len(table.vectors) != count:
        raise FormatError(f"{path}: header declares {count} words, "
                          f"found {len(table.vectors)}")
    return table


def pool_static(tokens: list[str], table: StaticVectors) -> tuple[np.ndarray, bool]:
    """Mean of available token vectors; (zero vector, True) when every token
    is out of vocabulary."""
    found = [table.vectors[tok] for tok in tokens if tok in table.vectors]
    if not found:
        return np.zeros(table.dim), True
    return np.mean(found, axis=0), False


def _featurize(dataset: ProbingDataset, config: BaselineConfig,
               train_rows: np.ndarray,
               vectors: StaticVectors | None = None,
               subwords: list[list[str]] | None = None):
    if config.kind == "char-count":
        units = [instance_tokens(inst) if inst.target_index is None
                 or inst.meta.get("masked") else instance_unit(inst)
                 for inst in dataset.instances]
        return np.asarray([[char_count(u)] for u in units], dtype=np.float64)
    if config.kind == "char-ngram-tfidf":
        units = [instance_unit(inst) for inst in dataset.instances]
    elif config.kind == "subword-tfidf":
        if subwords is None:
            raise GenerationError("subword-tfidf needs a subword sidecar stream")
        if len(subwords) != len(dataset.instances):
            raise GenerationError(f"sidecar has {len(subwords)} rows, dataset has "
                                  f"{len(dataset.instances)} instances")
        units = subwords
    else:  # static-vectors
        if vectors is None:
            raise GenerationError("static-vectors baseline needs a vector table")
        pooled = [pool_static(instance_tokens(inst), vectors)[0]
                  for inst in dataset.instances]
        return np.asarray(pooled, dtype=np.float64)
    model = fit_tfidf([units[row] for row in train_rows], config)
    return transform_tfidf(model, units)


def load_subword_sidecar(path: str | Path) -> list[list[str]]:
    """JSON-lines aligned 1:1 with dataset instances, field "subwords"."""
    import json

    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line:
            rows.append(json.loads(line)["subwords"])
    return rows


def run_baseline(dataset: ProbingDataset, config: BaselineConfig,
                 probe_config: ProbeConfig | None = None,
                 vectors: StaticVectors | None = None,
                 subwords: list[list[str]] | None = None) -> ProbeResult:
    """Fit baseline features on train, tune C on validation, report the test
    macro-OVR AUC: the layer-sweep protocol with one pseudo-layer."""
    probe_config = probe_config or ProbeConfig()
    idx = split_indices(dataset)
    y = np.asarray([inst.label for inst in dataset.instances], dtype=np.int64)
    X = _featurize(dataset, config, idx["train"], vectors=vectors, subwords=subwords)

    best = None
    for C in sorted(probe_config.l2_grid):
        probe = fit_logreg(X[idx["train"]], y[idx["train"]], C, probe_config,
                           k=dataset.arity)
        val = macro_ovr_auc(predict_scores(probe, X[idx["dev"]]), y[idx["dev"]])
        if best is None or val > best[1]:
            best = (C, val, probe)
    C, val, probe = best
    test = macro_ovr_auc(predict_scores(probe, X[idx["test"]]), y[idx["test"]])

    family = dataset.task.split(":", 1)[0]
    result = ProbeResult(task=dataset.task, language=dataset.language,
                         model_id=f"baseline:{config.kind}", instance="pre-trained",
                         pooling=FAMILY_POOLING.get(family, "target-mean"))
    result.layers.append(LayerResult(layer=0, chosen_reg=C, val_auc=val,
                                     test_auc=test))
    return result
