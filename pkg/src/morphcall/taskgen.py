"""Probing-task generation: feature occurrence, masked token, and value
classification families, plus the shared splitting/balancing machinery.

All sampling is driven by RNG streams derived from (seed, sentence_id) or
(seed, task tag), so a fixed (corpus, feature, config) triple produces
byte-identical dataset files on every run and platform.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, GenerationError, IntegrityError
from .seeding import derive_rng
from .udcore import FeatureInventory, Sentence, feature_value, filter_by_length, has_feature

SPLITS = ("train", "dev", "test")

# Fixed key order of the JSON-lines serialization; part of the dataset file
# contract shared with representation extractors.
_INSTANCE_KEYS = ("id", "sentence_id", "tokens", "target_index", "label",
                  "task", "language", "split", "meta")


@dataclass
class TaskInstance:
    id: str
    sentence_id: str
    tokens: list[str]
    target_index: int | None
    label: int
    task: str
    language: str
    split: str = ""
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        record = {key: getattr(self, key) for key in _INSTANCE_KEYS}
        record["meta"] = {k: self.meta[k] for k in sorted(self.meta)}
        return json.dumps(record, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "TaskInstance":
        record = json.loads(line)
        return cls(**{key: record[key] for key in _INSTANCE_KEYS})


@dataclass
class GenerationConfig:
    seed: int = 0
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    length_range: tuple[int, int] = (5, 25)
    max_instances_per_sentence_per_class: int = 2
    min_pairs: int = 2

    def __post_init__(self):
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios {self.split_ratios} do not sum to 1")
        if self.length_range[0] > self.length_range[1]:
            raise ConfigError(f"bad length range {self.length_range}")


@dataclass
class ProbingDataset:
    task: str
    language: str
    arity: int
    seed: int
    instances: list[TaskInstance]

    def to_jsonl(self) -> str:
        return "".join(inst.to_json() + "\n" for inst in self.instances)

    def checksum(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode("utf-8")).hexdigest()

    def counts(self) -> dict[str, dict[str, int]]:
        table: dict[str, dict[str, int]] = {s: {} for s in SPLITS}
        for inst in self.instances:
            per_split = table.setdefault(inst.split, {})
            key = str(inst.label)
            per_split[key] = per_split.get(key, 0) + 1
        return table

    def split_instances(self, split: str) -> list[TaskInstance]:
        return [inst for inst in self.instances if inst.split == split]


def _eligible(sentences: list[Sentence], cfg: GenerationConfig) -> list[Sentence]:
    lo, hi = cfg.length_range
    return filter_by_length(list(sentences), lo, hi)


def _select_targets(sentence: Sentence, feature: str, cfg: GenerationConfig):
    """Sample up to the per-class cap of positive/negative target positions.

    The RNG stream is keyed by (seed, sentence id, feature) only, so the
    feature and masked families make identical selections under one seed.
    """
    rng = derive_rng(cfg.seed, "select", sentence.id, feature)
    positives = [i for i, t in enumerate(sentence.tokens) if has_feature(t, feature)]
    negatives = [i for i, t in enumerate(sentence.tokens) if not has_feature(t, feature)]
    cap = cfg.max_instances_per_sentence_per_class
    chosen_pos = sorted(rng.sample(positives, min(cap, len(positives))))
    chosen_neg = sorted(rng.sample(negatives, min(cap, len(negatives))))
    return chosen_pos, chosen_neg


def _feature_instances(sentences: list[Sentence], feature: str, task: str,
                       language: str, cfg: GenerationConfig, masked: bool) -> list[TaskInstance]:
    instances = []
    n_pos = n_neg = 0
    for sentence in _eligible(sentences, cfg):
        chosen_pos, chosen_neg = _select_targets(sentence, feature, cfg)
        for label, positions in ((1, chosen_pos), (0, chosen_neg)):
            for position in positions:
                token = sentence.tokens[position]
                meta = {"feature": feature, "value": feature_value(token, feature)}
                if masked:
                    meta["masked"] = True
                instances.append(TaskInstance(
                    id=f"{task}:{sentence.id}:{position}",
                    sentence_id=sentence.id,
                    tokens=sentence.forms,
                    target_index=position,
                    label=label,
                    task=task,
                    language=language,
                    meta=meta,
                ))
        n_pos += len(chosen_pos)
        n_neg += len(chosen_neg)
    if n_pos == 0 or n_neg == 0:
        side = "positive" if n_pos == 0 else "negative"
        raise GenerationError(f"no {side} candidates for feature {feature}")
    return instances


def _require(feature: str, inventory: FeatureInventory) -> None:
    if not inventory.supports(feature):
        raise ConfigError(f"feature {feature} not defined for language {inventory.language}")


def gen_feature_task(sentences: list[Sentence], feature: str,
                     inventory: FeatureInventory, cfg: GenerationConfig) -> ProbingDataset:
    """Binary occurrence task: does the target word carry the feature at all."""
    _require(feature, inventory)
    task = f"features:{feature}"
    instances = _feature_instances(sentences, feature, task, inventory.language, cfg, masked=False)
    return split_and_balance(instances, cfg, task=task, language=inventory.language,
                             arity=2, stream_tag=feature)


def gen_masked_task(sentences: list[Sentence], feature: str,
                    inventory: FeatureInventory, cfg: GenerationConfig) -> ProbingDataset:
    """Same selection as the feature task; the target word is replaced with the
    tokenizer's mask string at representation-extraction time, so tokens stay
    unmasked here and instances carry meta.masked instead."""
    _require(feature, inventory)
    task = f"masked:{feature}"
    instances = _feature_instances(sentences, feature, task, inventory.language, cfg, masked=True)
    return split_and_balance(instances, cfg, task=task, language=inventory.language,
                             arity=2, stream_tag=feature)


def gen_values_task(sentences: list[Sentence], feature: str,
                    inventory: FeatureInventory, cfg: GenerationConfig) -> ProbingDataset:
    """k-way value classification: one instance per eligible token. Tokens with
    syncretic or out-of-inventory values are skipped."""
    _require(feature, inventory)
    if inventory.arity(feature) < 2:
        raise ConfigError(f"values task needs arity >= 2 for {feature}")
    task = f"values:{feature}"
    language = inventory.language
    instances = []
    support = {value: 0 for value in inventory.values(feature)}
    for sentence in _eligible(sentences, cfg):
        for position, token in enumerate(sentence.tokens):
            value = feature_value(token, feature)
            if value is None or token.is_syncretic:
                continue
            label = inventory.label_of(feature, value)
            if label is None:
                continue  # value outside the inventory, e.g. Case=Par
            support[value] += 1
            instances.append(TaskInstance(
                id=f"{task}:{sentence.id}:{position}",
                sentence_id=sentence.id,
                tokens=sentence.forms,
                target_index=position,
                label=label,
                task=task,
                language=language,
                meta={"feature": feature, "value": value},
            ))
    missing = [value for value, count in support.items() if count == 0]
    if missing:
        raise GenerationError(f"no instances for value(s) {', '.join(missing)} of {feature}")
    return split_and_balance(instances, cfg, task=task, language=language,
                             arity=inventory.arity(feature), stream_tag=feature)


def _split_boundaries(n: int, ratios: tuple[float, float, float]) -> tuple[int, int]:
    b1 = int(ratios[0] * n + 0.5)
    b2 = int((ratios[0] + ratios[1]) * n + 0.5)
    return b1, b2


def split_and_balance(instances: list[TaskInstance], cfg: GenerationConfig, *,
                      task: str, language: str, arity: int,
                      stream_tag: str | None = None) -> ProbingDataset:
    """Assign sentence-disjoint splits and downsample every class to the
    per-split minority count.

    Sentence ids are shuffled with the seeded RNG and cut by cumulative ratio;
    all instances of a sentence follow its split. Output order is sorted by
    (sentence_id, target_index, label) so files are reproducible.
    """
    if not instances:
        raise GenerationError(f"no instances to split for {task}")
    tag = stream_tag if stream_tag is not None else task

    sentence_ids = sorted({inst.sentence_id for inst in instances})
    rng = derive_rng(cfg.seed, "split", tag)
    rng.shuffle(sentence_ids)
    b1, b2 = _split_boundaries(len(sentence_ids), cfg.split_ratios)
    assignment = {}
    for rank, sid in enumerate(sentence_ids):
        assignment[sid] = SPLITS[0] if rank < b1 else SPLITS[1] if rank < b2 else SPLITS[2]
    for inst in instances:
        inst.split = assignment[inst.sentence_id]

    kept: list[TaskInstance] = []
    for split in SPLITS:
        by_class: dict[int, list[TaskInstance]] = {}
        for inst in instances:
            if inst.split == split:
                by_class.setdefault(inst.label, []).append(inst)
        counts = {label: len(group) for label, group in by_class.items()}
        if len(counts) < arity or min(counts.values(), default=0) == 0:
            present = sorted(counts)
            raise GenerationError(
                f"{task}: split {split} is missing a class "
                f"(have labels {present}, need {arity} classes)")
        floor = min(counts.values())
        for label in sorted(by_class):
            group = by_class[label]
            if len(group) > floor:
                sampler = derive_rng(cfg.seed, "balance", tag, split, str(label))
                group = sampler.sample(group, floor)
            kept.extend(group)

    kept.sort(key=lambda inst: (inst.sentence_id,
                                inst.target_index if inst.target_index is not None else -1,
                                inst.label))
    return ProbingDataset(task=task, language=language, arity=arity,
                          seed=cfg.seed, instances=kept)


def subset_dataset(dataset: ProbingDataset, skip_ids: set[str]) -> ProbingDataset:
    """Drop instances an extractor could not align; used to re-bind repsets."""
    kept = [inst for inst in dataset.instances if inst.id not in skip_ids]
    if not kept:
        raise GenerationError(f"subset of {dataset.task} would be empty")
    return ProbingDataset(task=dataset.task, language=dataset.language,
                          arity=dataset.arity, seed=dataset.seed, instances=kept)


def manifest_path(dataset_path: str | Path) -> Path:
    dataset_path = Path(dataset_path)
    return dataset_path.with_name(dataset_path.stem + ".manifest.json")


def build_manifest(dataset: ProbingDataset,
                   sources: list[tuple[str, str]] | None = None,
                   extra: dict | None = None) -> dict:
    manifest = {
        "task": dataset.task,
        "language": dataset.language,
        "arity": dataset.arity,
        "seed": dataset.seed,
        "counts": dataset.counts(),
        "n_instances": len(dataset.instances),
        "checksum": dataset.checksum(),
        "label_convention": "perturbations: original=0, perturbed=1",
        "sources": [{"path": p, "sha256": h} for p, h in (sources or [])],
    }
    if extra:
        manifest.update(extra)
    return manifest


def write_dataset(dataset: ProbingDataset, path: str | Path,
                  sources: list[tuple[str, str]] | None = None,
                  extra: dict | None = None) -> Path:
    """Write the JSON-lines dataset plus its sidecar manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dataset.to_jsonl().encode("utf-8"))
    manifest = build_manifest(dataset, sources, extra)
    manifest_path(path).write_text(
        json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    return path


def read_dataset(path: str | Path) -> ProbingDataset:
    """Read a dataset and verify it against its manifest checksum."""
    path = Path(path)
    mpath = manifest_path(path)
    if not mpath.exists():
        raise IntegrityError(f"manifest not found for {path}")
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    raw = path.read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != manifest["checksum"]:
        raise IntegrityError(f"checksum mismatch for {path}: "
                             f"{digest} != {manifest['checksum']}")
    instances = [TaskInstance.from_json(line)
                 for line in raw.decode("utf-8").splitlines() if line]
    return ProbingDataset(task=manifest["task"], language=manifest["language"],
                          arity=manifest["arity"], seed=manifest["seed"],
                          instances=instances)
