"""Pipeline orchestration: generate | probe | neurons | ckasim | baseline | report.

A JSON config drives every subcommand; flags override config keys. Relative
paths resolve against MORPHCALL_DATA when set, else against the config file's
directory. All randomness flows from the single config seed, and generation is
idempotent: a rerun with unchanged inputs reports up-to-date datasets instead
of rewriting them.
"""

from __future__ import annotations

import argparse
import csv
import glob
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import baselines, perturb, probekit, repstore, simkit, svgplot, taskgen, udcore
from .errors import ConfigError, MorphCallError

DATA_ROOT_ENV = "MORPHCALL_DATA"


@dataclass
class RunConfig:
    language: str
    treebanks: list[str]
    seed: int = 0
    out: str = "out"
    lexicon: str | None = None
    stopwords: str | None = None
    articles: str | None = None
    vectors: str | None = None
    tasks: dict | None = None
    generation: dict = field(default_factory=dict)
    probe: dict = field(default_factory=dict)
    neurons: dict = field(default_factory=dict)
    baselines: list[str] = field(default_factory=lambda: ["char-count", "char-ngram-tfidf"])
    jobs: int = 1
    base_dir: Path = Path(".")

    def resolve(self, path: str) -> Path:
        candidate = Path(path)
        if candidate.is_absolute():
            return candidate
        root = os.environ.get(DATA_ROOT_ENV)
        if root and (Path(root) / candidate).exists():
            return Path(root) / candidate
        return self.base_dir / candidate

    @property
    def out_dir(self) -> Path:
        out = Path(self.out)
        return out if out.is_absolute() else self.base_dir / out


def load_config(path: str | Path, overrides: argparse.Namespace | None = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = json.loads(path.read_text(encoding="utf-8"))
    known = {f for f in RunConfig.__dataclass_fields__ if f != "base_dir"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    config = RunConfig(base_dir=path.parent.resolve(), **raw)
    if overrides is not None:
        if getattr(overrides, "seed", None) is not None:
            config.seed = overrides.seed
        if getattr(overrides, "out", None) is not None:
            config.out = str(Path(overrides.out).absolute())
        if getattr(overrides, "jobs", None) is not None:
            config.jobs = overrides.jobs
    if config.language not in udcore.DEFAULT_INVENTORIES:
        raise ConfigError(f"unknown language {config.language!r}")
    return config


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _expand_treebanks(config: RunConfig) -> list[Path]:
    files: list[Path] = []
    for pattern in config.treebanks:
        resolved = str(config.resolve(pattern))
        matches = sorted(glob.glob(resolved))
        if not matches:
            raise ConfigError(f"treebank pattern matched no files: {pattern}")
        files.extend(Path(m) for m in matches)
    return files


def _generation_config(config: RunConfig) -> taskgen.GenerationConfig:
    kwargs = dict(config.generation)
    for key in ("split_ratios", "length_range"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return taskgen.GenerationConfig(seed=config.seed, **kwargs)


def _probe_config(config: RunConfig) -> probekit.ProbeConfig:
    kwargs = dict(config.probe)
    if "l2_grid" in kwargs:
        kwargs["l2_grid"] = tuple(kwargs["l2_grid"])
    return probekit.ProbeConfig(seed=config.seed, **kwargs)


def _neuron_config(config: RunConfig) -> probekit.NeuronProbeConfig:
    kwargs = dict(config.neurons)
    for key in ("l1_grid", "l2_grid"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return probekit.NeuronProbeConfig(seed=config.seed, **kwargs)


def task_plan(config: RunConfig) -> list[tuple[str, str]]:
    """(family, tag) pairs to generate; defaults to every task the language
    supports."""
    inventory = udcore.feature_inventory(config.language)
    features = list(inventory.features)
    defaults = {
        "features": features,
        "masked": features,
        "values": features,
        "perturbations": perturb.kinds_for_language(config.language),
    }
    selected = config.tasks or defaults
    plan: list[tuple[str, str]] = []
    for family in ("features", "masked", "values", "perturbations"):
        for tag in selected.get(family, []):
            if family == "perturbations":
                perturb.check_kind(tag, config.language)
            elif not inventory.supports(tag):
                raise ConfigError(f"feature {tag} not defined for {config.language}")
            plan.append((family, tag))
    return plan


def _task_name(family: str, tag: str) -> str:
    return f"{'perturb' if family == 'perturbations' else family}:{tag}"


def _safe(name: str) -> str:
    return name.replace(":", "_").replace("/", "-")


def dataset_path(out_dir: Path, task: str) -> Path:
    return out_dir / "datasets" / f"{_safe(task)}.jsonl"


def _up_to_date(path: Path, seed: int, sources: list[tuple[str, str]],
                config_digest: str) -> bool:
    mpath = taskgen.manifest_path(path)
    if not path.exists() or not mpath.exists():
        return False
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except ValueError:
        return False
    if manifest.get("seed") != seed or manifest.get("config_digest") != config_digest:
        return False
    if manifest.get("sources") != [{"path": p, "sha256": h} for p, h in sources]:
        return False
    return hashlib.sha256(path.read_bytes()).hexdigest() == manifest.get("checksum")


def cmd_generate(config: RunConfig) -> int:
    gen_cfg = _generation_config(config)
    inventory = udcore.feature_inventory(config.language)
    files = _expand_treebanks(config)
    sources = [(f.name, _sha256_file(f)) for f in files]
    sentences: list[udcore.Sentence] = []
    for f in files:
        sentences.extend(udcore.parse_conllu_file(f, language=config.language))

    lexicon = None
    if config.lexicon:
        lexicon = perturb.load_lexicon(config.resolve(config.lexicon), config.language)
    stoplist = perturb.load_stoplist(
        config.language,
        stopwords_path=config.resolve(config.stopwords) if config.stopwords else None,
        articles_path=config.resolve(config.articles) if config.articles else None)

    digest_payload = json.dumps(
        {"generation": config.generation, "language": config.language},
        sort_keys=True)
    config_digest = hashlib.sha256(digest_payload.encode("utf-8")).hexdigest()

    plan = task_plan(config)

    def run_one(entry: tuple[str, str]) -> tuple[str, str]:
        family, tag = entry
        task = _task_name(family, tag)
        path = dataset_path(config.out_dir, task)
        if _up_to_date(path, config.seed, sources, config_digest):
            return task, "up-to-date, no changes"
        if family == "features":
            dataset = taskgen.gen_feature_task(sentences, tag, inventory, gen_cfg)
        elif family == "masked":
            dataset = taskgen.gen_masked_task(sentences, tag, inventory, gen_cfg)
        elif family == "values":
            dataset = taskgen.gen_values_task(sentences, tag, inventory, gen_cfg)
        else:
            dataset = perturb.gen_perturbation_task(sentences, tag, lexicon,
                                                    stoplist, gen_cfg)
        taskgen.write_dataset(dataset, path, sources=sources,
                              extra={"config_digest": config_digest})
        return task, f"wrote {len(dataset.instances)} instances"

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(run_one, plan))
    else:
        results = [run_one(entry) for entry in plan]
    for task, status in results:
        print(f"{task}: {status}")
    return 0


def _load_bound(config: RunConfig, repset_path: Path):
    repset = repstore.read_repset(repset_path)
    dpath = dataset_path(config.out_dir, repset.header.task_name)
    if not dpath.exists():
        raise ConfigError(f"dataset for task {repset.header.task_name!r} "
                          f"not found at {dpath}")
    dataset = taskgen.read_dataset(dpath)
    repstore.bind_repset(repset, dataset)
    return repset, dataset


def _write_report(out_dir: Path, stem: str, payload: dict,
                  csv_header: list[str], csv_rows: list[list]) -> None:
    reports = out_dir / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    (reports / f"{stem}.json").write_text(
        json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    with open(reports / f"{stem}.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(csv_header)
        writer.writerows(csv_rows)


def cmd_probe(config: RunConfig, repset_paths: list[str]) -> int:
    probe_cfg = _probe_config(config)
    for raw_path in repset_paths:
        repset, dataset = _load_bound(config, config.resolve(raw_path))
        result = probekit.layer_sweep(dataset, repset, probe_cfg)
        stem = (f"probe__{_safe(result.model_id)}__{_safe(result.instance)}"
                f"__{_safe(result.task)}")
        _write_report(config.out_dir, stem, result.to_json_dict(),
                      ["layer", "chosen_reg", "val_auc", "test_auc"],
                      result.to_csv_rows())
        plots = config.out_dir / "plots"
        plots.mkdir(parents=True, exist_ok=True)
        svgplot.line_plot({result.instance: [r.test_auc for r in result.layers]},
                          plots / f"{stem}.svg",
                          title=f"{result.model_id} {result.task}")
        print(f"{stem}: layer-averaged AUC {result.layer_average():.4f}")
    return 0


def cmd_neurons(config: RunConfig, repset_paths: list[str]) -> int:
    neuron_cfg = _neuron_config(config)
    for raw_path in repset_paths:
        repset, dataset = _load_bound(config, config.resolve(raw_path))
        report = probekit.neuron_report(dataset, repset, neuron_cfg)
        stem = (f"neurons__{_safe(report.model_id)}__{_safe(report.instance)}"
                f"__{_safe(report.task)}")
        _write_report(config.out_dir, stem, report.to_json_dict(),
                      ["layer", "top_neuron_count"], report.to_csv_rows())
        plots = config.out_dir / "plots"
        plots.mkdir(parents=True, exist_ok=True)
        svgplot.bar_plot([float(c) for c in report.per_layer_counts],
                         plots / f"{stem}.svg",
                         title=f"{report.model_id} {report.task} top neurons")
        print(f"{stem}: {len(report.top_set)} top neurons, "
              f"test AUC {report.test_auc:.4f}")
    return 0


def cmd_ckasim(config: RunConfig, pre_path: str, fine_path: str) -> int:
    repset_pre, dataset = _load_bound(config, config.resolve(pre_path))
    repset_fine, dataset_fine = _load_bound(config, config.resolve(fine_path))
    if dataset_fine.checksum() != dataset.checksum():
        raise ConfigError("pre and fine repsets are bound to different datasets")
    by_instance = {repset_pre.header.instance: repset_pre,
                   repset_fine.header.instance: repset_fine}
    model_id = repset_pre.header.model_id
    combos = simkit.instance_combinations(model_id, by_instance)
    pairing = simkit.build_pairing(dataset)

    rows: list[list] = []
    curves: dict[str, list[float]] = {}
    payload = {"model_id": model_id, "task": dataset.task, "combinations": []}
    for side_a, side_b in combos:
        curve = simkit.ckasim_curve(by_instance[side_a], by_instance[side_b], pairing)
        payload["combinations"].append(curve.to_json_dict())
        rows.extend(curve.to_csv_rows())
        curves[curve.combination] = curve.scores
    stem = f"ckasim__{_safe(model_id)}__{_safe(dataset.task)}"
    _write_report(config.out_dir, stem, payload,
                  ["combination", "layer", "score"], rows)
    plots = config.out_dir / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    svgplot.line_plot(curves, plots / f"{stem}.svg",
                      title=f"{model_id} {dataset.task} similarity",
                      y_label="ckasim score")
    print(f"{stem}: {len(rows)} rows")
    return 0


def cmd_baseline(config: RunConfig, dataset_paths: list[str] | None) -> int:
    probe_cfg = _probe_config(config)
    if dataset_paths:
        paths = [config.resolve(p) for p in dataset_paths]
    else:
        paths = sorted((config.out_dir / "datasets").glob("*.jsonl"))
        paths = [p for p in paths if not p.name.endswith(".subwords.jsonl")]
    if not paths:
        raise ConfigError("no datasets found to run baselines on")
    vectors = None
    if config.vectors:
        vectors = baselines.load_static_vectors(config.resolve(config.vectors))
    for path in paths:
        dataset = taskgen.read_dataset(path)
        for kind in config.baselines:
            kwargs = {}
            if kind == "subword-tfidf":
                sidecar = path.with_name(path.stem + ".subwords.jsonl")
                if not sidecar.exists():
                    print(f"baseline {kind} on {dataset.task}: skipped "
                          f"(no subword sidecar at {sidecar.name})")
                    continue
                kwargs["subwords"] = baselines.load_subword_sidecar(sidecar)
            if kind == "static-vectors":
                if vectors is None:
                    print(f"baseline {kind} on {dataset.task}: skipped "
                          f"(no vector file configured)")
                    continue
                kwargs["vectors"] = vectors
            result = baselines.run_baseline(dataset, baselines.BaselineConfig(kind=kind),
                                            probe_cfg, **kwargs)
            stem = f"baseline__{_safe(kind)}__{_safe(dataset.task)}"
            _write_report(config.out_dir, stem, result.to_json_dict(),
                          ["layer", "chosen_reg", "val_auc", "test_auc"],
                          result.to_csv_rows())
            print(f"{stem}: test AUC {result.layers[0].test_auc:.4f}")
    return 0


def cmd_report(out_dir: Path) -> int:
    """Aggregate probe/baseline reports: arithmetic mean of the per-layer test
    scores, embedding layer included."""
    reports_dir = out_dir / "reports"
    rows = []
    if reports_dir.exists():
        for path in sorted(reports_dir.glob("*.json")):
            if not (path.name.startswith("probe__") or path.name.startswith("baseline__")):
                continue
            payload = json.loads(path.read_text(encoding="utf-8"))
            scores = [layer["test_auc"] for layer in payload["layers"]]
            rows.append([payload["model_id"], payload["instance"], payload["task"],
                         payload["language"], sum(scores) / len(scores)])
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model_id", "instance", "task", "language", "layer_avg_auc"])
        writer.writerows(rows)
    (out_dir / "report.json").write_text(
        json.dumps([{"model_id": m, "instance": i, "task": t, "language": lang,
                     "layer_avg_auc": score} for m, i, t, lang, score in rows],
                   ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    print(f"report: {len(rows)} aggregated rows")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="morphcall",
                                     description="Morphosyntactic probing pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--out", default=None)

    p = sub.add_parser("generate", help="generate probing datasets")
    common(p)

    p = sub.add_parser("probe", help="layer-wise probing of repsets")
    common(p)
    p.add_argument("repsets", nargs="+", help="MCREP files")

    p = sub.add_parser("neurons", help="elastic-net neuron analysis")
    common(p)
    p.add_argument("repsets", nargs="+", help="MCREP files")

    p = sub.add_parser("ckasim", help="layer similarity across model instances")
    common(p)
    p.add_argument("--pre", required=True, help="pre-trained instance MCREP")
    p.add_argument("--fine", required=True, help="fine-tuned instance MCREP")

    p = sub.add_parser("baseline", help="count-based/static-vector baselines")
    common(p)
    p.add_argument("datasets", nargs="*", help="dataset files (default: all)")

    p = sub.add_parser("report", help="aggregate layer-averaged scores")
    p.add_argument("--out", required=True, help="output directory to aggregate")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(Path(args.out))
        config = load_config(args.config, overrides=args)
        if args.command == "generate":
            return cmd_generate(config)
        if args.command == "probe":
            return cmd_probe(config, args.repsets)
        if args.command == "neurons":
            return cmd_neurons(config, args.repsets)
        if args.command == "ckasim":
            return cmd_ckasim(config, args.pre, args.fine)
        if args.command == "baseline":
            return cmd_baseline(config, args.datasets or None)
        raise ConfigError(f"unknown command {args.command!r}")
    except MorphCallError as exc:
        report = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(report, ensure_ascii=False), file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1


if __name__ == "__main__":
    sys.exit(main())
