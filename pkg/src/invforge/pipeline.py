"""End-to-end stages shared by the command line and the benchmarks: trace, label, graph, train, rank, evaluate."""

from __future__ import annotations

import fnmatch
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from .corpusgen import GenConfig, write_corpus
from .graphs import MethodGraph, graphs_for_labeled, read_graph_dir, write_graphs
from .invariants import InferenceConfig
from .labeler import LabeledInvariant, label_corpus, label_key, make_splits, read_annotations, write_labeled
from .metrics import evaluation_report, join, write_roc_csv
from .minilang import ListSink, load_program, run_tests
from .minilang.syntax import Program
from .model import predict, train
from .model.checkpoint import MODELS, config_for
from .trace import TraceRecord, write_trace_dir

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


def default_seed() -> int:
    raw = os.environ.get("FORGE_SEED")
    if raw is None or raw == "":
        return 0
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigError(f"FORGE_SEED must be an unsigned integer, got {raw!r}") from None
    if seed < 0:
        raise ConfigError("FORGE_SEED must be non-negative")
    return seed


# -- programs and traces ---------------------------------------------------------------------


def core_names(path, program: Program, explicit: list[str] | None = None) -> list[str]:
    """Explicit names, else the project's core.txt, else every non-test function."""
    if explicit:
        return explicit
    path = Path(path)
    listing = path / "core.txt" if path.is_dir() else path.parent / "core.txt"
    if listing.is_file():
        return [line.strip() for line in listing.read_text(encoding="utf-8").splitlines() if line.strip()]
    return sorted(n for n in program.functions if n not in set(program.tests))


def trace_program(path, seed: int, core: list[str] | None = None, tests_glob: str | None = None):
    """Run a program's tests with tracing; returns (program, report, per-test records)."""
    program = load_program(path)
    program = program.with_core(core_names(path, program, core))
    selected = [t for t in program.tests if tests_glob is None or fnmatch.fnmatchcase(t, tests_glob)]
    sink = ListSink()
    report = run_tests(program, selected, sink, seed)
    per_test = sink.by_test()
    for t in selected:
        per_test.setdefault(t, [])
    return program, report, per_test


def project_dirs(corpus) -> list[Path]:
    corpus = Path(corpus)
    manifest = corpus / "manifest.json"
    if manifest.is_file():
        names = json.loads(manifest.read_text(encoding="utf-8"))["projects"]
        return [corpus / n for n in names]
    if (corpus / "src").is_dir():
        return [corpus]
    return sorted(p for p in corpus.iterdir() if (p / "src").is_dir())


@dataclass
class LabelerSettings:
    splits: int = 100
    fraction: float = 0.10
    min_splits: int = 10
    min_support: int = 5

    @classmethod
    def from_json(cls, obj: dict) -> "LabelerSettings":
        extra = set(obj) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown labeler settings: {sorted(extra)}")
        out = cls(**obj)
        if out.splits < 1 or out.min_splits < 0:
            raise ConfigError("splits must be positive and min_splits non-negative")
        if not 0 < out.fraction <= 1:
            raise ConfigError("fraction must be in (0, 1]")
        return out


def label_traces(per_test: dict[str, list[TraceRecord]], settings: LabelerSettings, seed: int, project: str, jobs: int = 1):
    plan = make_splits(per_test.keys(), settings.splits, settings.fraction, seed)
    return label_corpus(per_test, plan, InferenceConfig(min_support=settings.min_support), settings.min_splits, project, jobs)


# -- pipeline ---------------------------------------------------------------------------------


@dataclass
class PipelineConfig:
    base: Path
    seed: int
    corpus: Path
    work: Path
    paths: dict[str, Path]
    generate: Path | None = None
    labeler: LabelerSettings = field(default_factory=LabelerSettings)
    model: str = "ggnn"
    model_settings: dict = field(default_factory=dict)
    train_projects: list[str] | None = None
    test_projects: list[str] | None = None
    partial_fpr: tuple[float, ...] = (0.05, 0.25)
    per_method: bool = True
    golden: str | None = None

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "PipelineConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_json(raw, path.parent, overrides or {})

    @classmethod
    def from_json(cls, raw: dict, base: Path, overrides: dict) -> "PipelineConfig":
        known = {"seed", "paths", "generate", "labeler", "model", "eval"}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown config sections: {sorted(extra)}")
        seed = overrides.get("seed")
        if seed is None:
            seed = raw.get("seed")
        if seed is None:
            seed = default_seed()
        paths = dict(raw.get("paths", {}))
        if "corpus" not in paths:
            raise ConfigError("paths.corpus is required")
        work = base / overrides.get("work", paths.pop("work", "out"))
        corpus = base / paths.pop("corpus")
        defaults = {
            "traces": "traces",
            "labels": "labeled.jsonl",
            "graphs": "graphs",
            "checkpoints": "ckpt",
            "scores": "scores.jsonl",
            "roc": "roc.csv",
            "report": "report.json",
        }
        unknown = set(paths) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown paths: {sorted(unknown)}")
        # output paths are relative to the work directory
        resolved = {k: work / paths.get(k, v) for k, v in defaults.items()}
        generate = base / raw["generate"] if raw.get("generate") else None
        if not corpus.is_dir() and generate is None:
            raise ConfigError(f"corpus directory {corpus} does not exist and no generator config is given")
        if generate is not None and not generate.is_file():
            raise ConfigError(f"generator config {generate} not found")
        model_raw = dict(raw.get("model", {}))
        model = overrides.get("model") or model_raw.pop("kind", "ggnn")
        model_raw.pop("kind", None)
        if model not in MODELS:
            raise ConfigError(f"unknown model {model!r}; expected one of {MODELS}")
        if overrides.get("epochs") is not None:
            model_raw["epochs"] = overrides["epochs"]
        try:
            config_for(model, model_raw)
        except TypeError as exc:
            raise ConfigError(f"model settings: {exc}") from None
        ev = dict(raw.get("eval", {}))
        unknown = set(ev) - {"train_projects", "test_projects", "partial_fpr", "per_method", "golden"}
        if unknown:
            raise ConfigError(f"unknown eval settings: {sorted(unknown)}")
        return cls(
            base=base,
            seed=int(seed),
            corpus=corpus,
            work=work,
            paths=resolved,
            generate=generate,
            labeler=LabelerSettings.from_json(raw.get("labeler", {})),
            model=model,
            model_settings=model_raw,
            train_projects=ev.get("train_projects"),
            test_projects=ev.get("test_projects"),
            partial_fpr=tuple(ev.get("partial_fpr", (0.05, 0.25))),
            per_method=bool(ev.get("per_method", True)),
            golden=ev.get("golden"),
        )

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "corpus": str(self.corpus),
            "paths": {k: str(v) for k, v in self.paths.items()},
            "labeler": self.labeler.__dict__,
            "model": {"kind": self.model, **config_for(self.model, self.model_settings).to_json()},
            "eval": {
                "train_projects": self.train_projects,
                "test_projects": self.test_projects,
                "partial_fpr": list(self.partial_fpr),
                "per_method": self.per_method,
                "golden": self.golden,
            },
        }


def split_projects(names: list[str], train_projects, test_projects) -> tuple[list[str], list[str]]:
    """Defaults: hold out the last project for testing and train on the rest."""
    for group in (train_projects or [], test_projects or []):
        missing = sorted(set(group) - set(names))
        if missing:
            raise ConfigError(f"unknown projects: {missing}")
    if train_projects is None and test_projects is None:
        if len(names) < 2:
            raise ConfigError("need at least two projects for a cross-project split")
        return names[:-1], names[-1:]
    if train_projects is None:
        train_projects = [n for n in names if n not in test_projects]
    if test_projects is None:
        test_projects = [n for n in names if n not in train_projects]
    return list(train_projects), list(test_projects)


def write_scores(path, graphs: list[MethodGraph], scored: list[tuple[str, float]]) -> None:
    lines = []
    for g, (_, s) in zip(graphs, scored):
        rec = {"project": g.project, "method": g.method, "point": g.point, "invariant": g.invariant, "score": s}
        lines.append(json.dumps(rec, ensure_ascii=False, separators=(",", ":")))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def labels_from_labeled(labeled: list[LabeledInvariant]) -> dict:
    out = {}
    for li in labeled:
        d = li.to_json()
        out[label_key(d["project"], d["method"], d["point"], d["invariant"])] = d["label"]
    return out


def ground_truth_labels(corpus, projects: list[str]) -> dict:
    out = {}
    for p in projects:
        path = Path(corpus) / p / "ground_truth.jsonl"
        if path.is_file():
            out.update(read_annotations(path))
    return out


def run_pipeline(cfg: PipelineConfig, jobs: int = 1) -> dict:
    if cfg.generate is not None and not cfg.corpus.is_dir():
        gen = GenConfig.from_json(json.loads(cfg.generate.read_text(encoding="utf-8")))
        write_corpus(cfg.corpus, gen)
        log.info("generated corpus in %s", cfg.corpus)
    dirs = project_dirs(cfg.corpus)
    names = [d.name for d in dirs]
    train_names, test_names = split_projects(names, cfg.train_projects, cfg.test_projects)

    labeled_all: list[LabeledInvariant] = []
    graphs_by_project: dict[str, list[MethodGraph]] = {}
    n_tests = n_failed = 0
    for d in dirs:
        program, report, per_test = trace_program(d, cfg.seed)
        n_tests += len(report.tests)
        n_failed += len(report.tests) - report.n_passed
        write_trace_dir(cfg.paths["traces"] / d.name, per_test)
        labeled, summary = label_traces(per_test, cfg.labeler, cfg.seed, d.name, jobs)
        labeled_all.extend(labeled)
        graphs = graphs_for_labeled(program, labeled, d.name)
        graphs_by_project[d.name] = graphs
        cfg.paths["graphs"].mkdir(parents=True, exist_ok=True)
        write_graphs(cfg.paths["graphs"] / f"{d.name}.graphs.jsonl", graphs)
        log.info("%s: %d tests, %d labeled invariants, %d graphs", d.name, len(report.tests), len(labeled), len(graphs))
    cfg.paths["labels"].parent.mkdir(parents=True, exist_ok=True)
    write_labeled(cfg.paths["labels"], labeled_all)

    train_graphs = [g for p in train_names for g in graphs_by_project[p]]
    test_graphs = [g for p in test_names for g in graphs_by_project[p]]
    model_cfg = config_for(cfg.model, cfg.model_settings)
    result = train(train_graphs, cfg.model, model_cfg, seed=cfg.seed, ckpt_dir=cfg.paths["checkpoints"])
    epoch = min(model_cfg.eval_epoch, model_cfg.epochs)
    scored = predict(cfg.model, result.params_at(epoch), model_cfg, result.vocab, test_graphs)
    write_scores(cfg.paths["scores"], test_graphs, scored)

    scores = {label_key(g.project, g.method, g.point, g.invariant): s for g, (_, s) in zip(test_graphs, scored)}
    report, curve = evaluation_report(join(scores, labels_from_labeled(labeled_all)), cfg.partial_fpr, cfg.per_method)
    if cfg.golden:
        golden = ground_truth_labels(cfg.corpus, test_names) if cfg.golden == "ground_truth" else read_annotations(cfg.base / cfg.golden)
        report["golden"], golden_curve = evaluation_report(join(scores, golden), cfg.partial_fpr, cfg.per_method)
    if curve is not None:
        write_roc_csv(cfg.paths["roc"], curve)
    cfg.paths["report"].write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return {
        "projects": names,
        "train_projects": train_names,
        "test_projects": test_names,
        "tests": n_tests,
        "failed_tests": n_failed,
        "labeled": len(labeled_all),
        "train_graphs": len(train_graphs),
        "test_graphs": len(test_graphs),
        "epochs": [e.to_json() for e in result.epochs],
        "eval_epoch": epoch,
        "auc": report.get("auc"),
        "roc": str(cfg.paths["roc"]) if curve is not None else None,
    }


def load_graphs(path, projects: list[str] | None = None) -> list[MethodGraph]:
    graphs = read_graph_dir(path)
    if projects:
        graphs = [g for g in graphs if g.project in set(projects)]
    return graphs
