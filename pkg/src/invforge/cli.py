"""``forge``: command-line entry point for every pipeline stage.

Each subcommand prints exactly one JSON summary line on standard output; logs go to
standard error.  Exit status is 0 on success, 1 on a domain error, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import fnmatch
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .corpusgen import GenConfig, write_corpus
from .graphs import graphs_for_labeled, write_graphs
from .invariants import InferenceConfig, NoObservations, infer_all, invariant_to_json
from .labeler import read_annotations, read_labeled, write_labeled
from .metrics import evaluation_report, join, read_scores, write_roc_csv
from .minilang import MiniSyntaxError, load_program
from .minilang.interp import MiniRuntimeError
from .model import load_checkpoint, predict, train
from .model.checkpoint import MODELS, config_for
from .pipeline import (
    ConfigError,
    LabelerSettings,
    PipelineConfig,
    default_seed,
    label_traces,
    labels_from_labeled,
    load_graphs,
    run_pipeline,
    trace_program,
    write_scores,
)
from .trace import compose_split, read_trace_dir, write_records, write_trace_dir

log = logging.getLogger("invforge")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _u64(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an unsigned integer, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"{value} is outside the unsigned 64-bit range")
    return value


def _positive(text: str) -> int:
    value = _u64(text)
    if value < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return value


def _names(text: str) -> list[str]:
    """Comma-separated names, or @file with one name per line."""
    if text.startswith("@"):
        lines = Path(text[1:]).read_text(encoding="utf-8").splitlines()
        return [line.strip() for line in lines if line.strip()]
    return [t.strip() for t in text.split(",") if t.strip()]


def _fprs(text: str) -> list[float]:
    try:
        values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values or not all(0 < v <= 1 for v in values):
        raise argparse.ArgumentTypeError("false-positive rates must be in (0, 1]")
    return values


def _seed(args) -> int:
    return args.seed if args.seed is not None else default_seed()


# -- subcommands --------------------------------------------------------------------------------


def cmd_gen_corpus(args) -> dict:
    raw = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    if args.seed is not None:
        raw["seed"] = args.seed
    elif "seed" not in raw:
        raw["seed"] = default_seed()
    cfg = GenConfig.from_json(raw)
    names = write_corpus(args.out, cfg)
    return {"projects": names, "out": str(args.out), "config": cfg.to_json()}


def cmd_run_tests(args) -> dict:
    core = _names(args.core) if args.core else None
    _, report, per_test = trace_program(args.program, _seed(args), core, args.tests)
    write_trace_dir(args.trace_out, per_test)
    failed = {name: o.error for name, o in report.tests.items() if not o.passed}
    for name, err in failed.items():
        log.warning("test %s failed: %s", name, err)
    return {
        "tests": len(report.tests),
        "passed": report.n_passed,
        "failed": failed,
        "records": sum(len(r) for r in per_test.values()),
        "calls": report.calls,
        "trace_out": str(args.trace_out),
    }


def cmd_compose(args) -> dict:
    per_test = read_trace_dir(args.trace_dir)
    tests = _names(args.tests) if args.tests else sorted(per_test)
    split = compose_split(per_test, tests)
    Path(args.out).write_bytes(write_records(split.records))
    return {"tests": len(split.tests), "records": len(split.records), "out": str(args.out)}


def cmd_infer(args) -> dict:
    per_test = read_trace_dir(args.trace_dir)
    tests = _names(args.tests) if args.tests else sorted(per_test)
    split = compose_split(per_test, tests)
    cfg = InferenceConfig(min_support=args.min_support)
    inferred = infer_all(split, cfg)
    if args.method:
        keys = [(m, p) for m, p in inferred if fnmatch.fnmatchcase(m, args.method)]
        if not keys:
            raise NoObservations(args.method, args.point or "any")
        inferred = {k: inferred[k] for k in keys}
    if args.point:
        inferred = {k: v for k, v in inferred.items() if k[1] == args.point}
    lines = []
    for key in sorted(inferred):
        for inv in sorted(inferred[key], key=lambda i: i.sort_key):
            lines.append(json.dumps(invariant_to_json(inv), ensure_ascii=False, separators=(",", ":")))
    Path(args.out).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return {"points": len(inferred), "invariants": len(lines), "out": str(args.out)}


def cmd_label(args) -> dict:
    per_test = read_trace_dir(args.trace_dir)
    if not per_test:
        raise ValueError(f"no trace files in {args.trace_dir}")
    settings = LabelerSettings(args.splits, args.fraction, args.min_splits, args.min_support)
    project = args.project if args.project is not None else Path(args.trace_dir).resolve().name
    labeled, summary = label_traces(per_test, settings, _seed(args), project, args.jobs)
    write_labeled(args.out, labeled)
    return {
        "labeled": len(labeled),
        "valid": sum(li.label == "valid" for li in labeled),
        "points": summary.labeled_points,
        "excluded_points": len(summary.excluded),
        "out": str(args.out),
        "settings": {**settings.__dict__, "seed": _seed(args), "project": project},
    }


def cmd_graph(args) -> dict:
    labeled = read_labeled(args.labeled)
    by_project: dict[str, list] = {}
    for li in labeled:
        by_project.setdefault(li.project, []).append(li)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    programs = Path(args.programs)
    counts, skipped = {}, []
    for project, items in sorted(by_project.items()):
        src = programs / project if project and (programs / project).is_dir() else programs
        graphs = graphs_for_labeled(load_program(src), items, project, skipped)
        write_graphs(out / f"{project or 'graphs'}.graphs.jsonl", graphs)
        counts[project] = len(graphs)
    return {"graphs": counts, "skipped_too_large": len(skipped), "out": str(out)}


def _model_settings(args) -> dict:
    raw = json.loads(Path(args.model_config).read_text(encoding="utf-8")) if args.model_config else {}
    raw.pop("kind", None)
    for flag, key in (("epochs", "epochs"), ("lr", "learning_rate"), ("batch_budget", "batch_token_budget"), ("hidden_dim", "hidden_dim")):
        value = getattr(args, flag)
        if value is not None:
            if key == "hidden_dim" and args.model == "rnn":
                key = "hidden_per_direction"
            raw[key] = value
    return raw


def cmd_train(args) -> dict:
    graphs = load_graphs(args.graphs, _names(args.projects) if args.projects else None)
    cfg = config_for(args.model, _model_settings(args))
    seed = _seed(args)
    result = train(graphs, args.model, cfg, seed=seed, ckpt_dir=args.out, track_loss=not args.no_loss)
    return {
        "model": args.model,
        "graphs": len(graphs),
        "initial_loss": result.initial_loss,
        "epochs": [e.to_json() for e in result.epochs],
        "checkpoints": {e: str(p) for e, p in result.checkpoints.items()},
        "config": {**cfg.to_json(), "seed": seed},
    }


def cmd_rank(args) -> dict:
    ckpt = load_checkpoint(args.ckpt)
    graphs = load_graphs(args.graphs, _names(args.projects) if args.projects else None)
    scored = predict(ckpt.model, ckpt.params, ckpt.config, ckpt.vocab, graphs, args.batch_budget)
    write_scores(args.out, graphs, scored)
    return {"model": ckpt.model, "scored": len(scored), "out": str(args.out)}


def cmd_eval(args) -> dict:
    scores = read_scores(args.scores)
    labels = labels_from_labeled(read_labeled(args.labels))
    report, curve = evaluation_report(join(scores, labels), args.partial_fpr, args.per_method)
    if args.golden:
        report["golden"], golden_curve = evaluation_report(join(scores, read_annotations(args.golden)), args.partial_fpr, args.per_method)
        curve = golden_curve or curve
    if args.roc_out:
        if curve is None:
            raise ValueError("cannot draw a ROC curve: the scored invariants hold a single class")
        write_roc_csv(args.roc_out, curve)
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report


def cmd_pipeline(args) -> dict:
    overrides = {"seed": args.seed, "model": args.model, "epochs": args.epochs}
    if args.out is not None:
        overrides["work"] = str(Path(args.out).resolve())
    cfg = PipelineConfig.load(args.config, overrides)
    stats = run_pipeline(cfg, args.jobs)
    return {**stats, "config": cfg.to_json()}


# -- parser ---------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--jobs", type=_positive, default=1, help="worker processes for parallel stages")
    common.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))

    parser = _Parser(prog="forge", description="Mine, label and rank likely invariants of MiniLang programs.")
    parser.add_argument("--version", action="version", version=f"forge {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("gen-corpus", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--config", help="generator settings (JSON)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=_u64)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("run-tests", parents=[common], help="run tests and write per-test traces")
    p.add_argument("program", help=".mini file or project directory")
    p.add_argument("--core", help="comma-separated traced functions (default: core.txt or all non-test functions)")
    p.add_argument("--tests", help="glob over test function names")
    p.add_argument("--seed", type=_u64)
    p.add_argument("--trace-out", required=True)
    p.set_defaults(func=cmd_run_tests)

    p = sub.add_parser("compose", parents=[common], help="concatenate per-test traces into one split")
    p.add_argument("--trace-dir", required=True)
    p.add_argument("--tests", help="comma-separated test names or @file (default: all)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("infer", parents=[common], help="infer invariants from traces")
    p.add_argument("--trace-dir", required=True)
    p.add_argument("--tests", help="comma-separated test names or @file (default: all)")
    p.add_argument("--method", help="method name or glob")
    p.add_argument("--point", choices=("pre", "post"))
    p.add_argument("--min-support", type=_positive, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("label", parents=[common], help="cross-validate invariants over test-suite splits")
    p.add_argument("--trace-dir", required=True)
    p.add_argument("--splits", type=_positive, default=100)
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--seed", type=_u64)
    p.add_argument("--min-splits", type=_u64, default=10)
    p.add_argument("--min-support", type=_positive, default=5)
    p.add_argument("--project", help="project name recorded in the output (default: trace directory name)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("graph", parents=[common], help="build program graphs for labeled invariants")
    p.add_argument("--labeled", required=True)
    p.add_argument("--programs", required=True, help="corpus root or a single project directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("train", parents=[common], help="train a validator")
    p.add_argument("--model", choices=MODELS, default="ggnn")
    p.add_argument("--graphs", required=True)
    p.add_argument("--projects", help="only graphs from these projects")
    p.add_argument("--model-config", help="model settings (JSON)")
    p.add_argument("--epochs", type=_positive)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-budget", type=_positive)
    p.add_argument("--hidden-dim", type=_positive)
    p.add_argument("--seed", type=_u64)
    p.add_argument("--no-loss", action="store_true", help="skip full-dataset loss after each epoch")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rank", parents=[common], help="score graphs with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--graphs", required=True)
    p.add_argument("--projects", help="only graphs from these projects")
    p.add_argument("--batch-budget", type=_positive)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("eval", parents=[common], help="ROC / AUC evaluation of scores")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--golden")
    p.add_argument("--per-method", action="store_true")
    p.add_argument("--partial-fpr", type=_fprs, default=[0.05, 0.25])
    p.add_argument("--roc-out")
    p.add_argument("--out", help="write the full report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", parents=[common], help="run every stage from one config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=_u64)
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--epochs", type=_positive)
    p.add_argument("--out", help="work directory (overrides the config)")
    p.set_defaults(func=cmd_pipeline)
    return parser


def _emit(command: str | None, ok: bool, payload: dict) -> None:
    line = {"command": command, "ok": ok, **payload}
    sys.stdout.write(json.dumps(line, sort_keys=True, default=str) + "\n")
    sys.stdout.flush()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        sys.stderr.write(f"{parser.prog}: error: {exc}\n")
        _emit(None, False, {"error": str(exc), "usage": True})
        return 2
    logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        payload = args.func(args)
    except (ConfigError, MiniSyntaxError, MiniRuntimeError, OSError, ValueError, KeyError, LookupError, RuntimeError, json.JSONDecodeError) as exc:
        msg = str(exc) if not isinstance(exc, KeyError) else str(exc.args[0]) if exc.args else repr(exc)
        log.error("%s", msg)
        _emit(args.command, False, {"error": msg, "error_type": type(exc).__name__})
        return 1
    _emit(args.command, True, payload)
    return 0


if __name__ == "__main__":
    sys.exit(main())
