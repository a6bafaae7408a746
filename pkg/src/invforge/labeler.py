"""Test-suite subset sampling and implication-based cross-validation of inferred invariants.

Each split runs inference on the traces of a random subset of tests.  Every invariant
inferred in some split becomes a candidate; its score is the fraction of splits covering
its method whose inferred set implies it.  Only candidates implied everywhere are valid.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .invariants import (
    InferenceConfig,
    Invariant,
    group_records,
    invariant_from_json,
    invariant_to_json,
    parse_invariant,
    pred_implies,
    render_pred,
    subject,
    infer_records,
)
from .trace import MissingTrace, TraceRecord, compose_split

LABELS = ("valid", "invalid")
ANNOTATION_LABELS = ("valid", "invalid", "irrelevant")


class InvalidFraction(ValueError):
    def __init__(self, fraction):
        self.fraction = fraction
        super().__init__(f"fraction must be in (0, 1], got {fraction}")


@dataclass(frozen=True)
class SplitPlan:
    n_splits: int
    fraction: float
    seed: int
    splits: tuple[frozenset[str], ...]


def split_size(n_tests: int, fraction: float) -> int:
    # the epsilon keeps 0.1 * 100 at 10 despite binary rounding
    return max(1, math.ceil(fraction * n_tests - 1e-9))


def make_splits(tests: Iterable[str], n: int = 100, fraction: float = 0.10, seed: int = 0) -> SplitPlan:
    """``n`` independent uniform samples without replacement of ``ceil(fraction*|tests|)`` tests."""
    if not (isinstance(fraction, (int, float)) and 0 < fraction <= 1) or math.isnan(fraction):
        raise InvalidFraction(fraction)
    names = sorted(set(tests))
    if not names:
        raise ValueError("make_splits needs at least one test")
    if n < 0:
        raise ValueError("number of splits must be non-negative")
    k = split_size(len(names), fraction)
    rng = np.random.default_rng(seed)
    splits = []
    for _ in range(n):
        picked = rng.choice(len(names), size=k, replace=False)
        splits.append(frozenset(names[i] for i in picked))
    return SplitPlan(n, float(fraction), seed, tuple(splits))


def never_selected_rate(n_plans: int, n_tests: int = 100, fraction: float = 0.10, n_splits: int = 100, seed: int = 0, chunk: int = 250_000) -> float:
    """Monte Carlo estimate of the chance that a given test lands in no split of a plan.

    Tests are exchangeable within a plan, so a plan is simulated through its count of
    still-unselected tests: a split of size k picks a hypergeometric number of them.
    """
    k = split_size(n_tests, fraction)
    rng = np.random.default_rng(seed)
    missed = 0
    done = 0
    while done < n_plans:
        rows = min(chunk, n_plans - done)
        left = np.full(rows, n_tests, dtype=np.int64)
        for _ in range(n_splits):
            hit = rng.hypergeometric(left, n_tests - left, k)
            left -= hit
        missed += int(left.sum())
        done += rows
    return missed / (n_plans * n_tests)


# -- labeling ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabeledInvariant:
    invariant: Invariant
    supporting_splits: int
    covering_splits: int
    project: str = ""

    def __post_init__(self):
        if not 1 <= self.supporting_splits <= self.covering_splits:
            raise ValueError("need 1 <= supporting <= covering")

    @property
    def score(self) -> float:
        return self.supporting_splits / self.covering_splits

    @property
    def label(self) -> str:
        return "valid" if self.supporting_splits == self.covering_splits else "invalid"

    def to_json(self) -> dict:
        inv = invariant_to_json(self.invariant)
        return {
            "project": self.project,
            "method": inv["method"],
            "point": inv["point"],
            "invariant": inv["invariant"],
            "rendered": inv["rendered"],
            "encoding": inv["encoding"],
            "supporting": self.supporting_splits,
            "covering": self.covering_splits,
            "score": self.score,
            "label": self.label,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LabeledInvariant":
        inv = invariant_from_json(obj) if "encoding" in obj else parse_invariant(f"{obj['point']} {obj['method']}: {obj['invariant']}")
        return cls(inv, int(obj["supporting"]), int(obj["covering"]), obj.get("project", ""))


@dataclass
class LabelSummary:
    labeled_points: int = 0
    excluded: list[tuple[str, str, int]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "labeled_points": self.labeled_points,
            "excluded": [{"method": m, "point": p, "covering": c} for m, p, c in self.excluded],
        }


def _infer_split(args) -> dict[tuple[str, str], list[Invariant]]:
    records, min_support = args
    out = {}
    for key, recs in group_records(records).items():
        if len(recs) >= min_support:
            out[key] = sorted(infer_records(recs, key[0], key[1]), key=lambda i: i.sort_key)
    return out


def infer_splits(per_test_traces: Mapping[str, list[TraceRecord]], plan: SplitPlan, cfg: InferenceConfig, jobs: int = 1) -> list[dict]:
    """Per split: (method, point) -> inferred invariants, for points meeting min_support."""
    work = []
    for i, tests in enumerate(plan.splits):
        split = compose_split(per_test_traces, tests, i)
        work.append((split.records, cfg.min_support))
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_infer_split, work, chunksize=max(1, len(work) // (4 * jobs))))
    return [_infer_split(w) for w in work]


def label_corpus(
    per_test_traces: Mapping[str, list[TraceRecord]],
    plan: SplitPlan,
    cfg: InferenceConfig = InferenceConfig(),
    min_splits: int = 10,
    project: str = "",
    jobs: int = 1,
) -> tuple[list[LabeledInvariant], LabelSummary]:
    """Cross-validate invariants across the plan's splits.

    A split covers a (method, point) when its composed traces hold at least
    ``cfg.min_support`` records for it, i.e. when inference actually ran there.
    Points covered by fewer than ``min_splits`` splits are left out and listed in the summary.
    """
    for tests in plan.splits:
        for t in tests:
            if t not in per_test_traces:
                raise MissingTrace(t)
    per_split = infer_splits(per_test_traces, plan, cfg, jobs)

    covering: dict[tuple[str, str], int] = {}
    candidates: dict[tuple[str, str], set[Invariant]] = {}
    for inferred in per_split:
        for key, invs in inferred.items():
            covering[key] = covering.get(key, 0) + 1
            candidates.setdefault(key, set()).update(invs)

    summary = LabelSummary()
    out: list[LabeledInvariant] = []
    for key in sorted(covering):
        n_cover = covering[key]
        if n_cover < min_splits:
            summary.excluded.append((key[0], key[1], n_cover))
            continue
        summary.labeled_points += 1
        # index each split's inferred predicates by subject; implication never crosses subjects
        indexed = []
        for inferred in per_split:
            if key in inferred:
                by_subject: dict = {}
                for j in inferred[key]:
                    by_subject.setdefault(subject(j.pred), []).append(j.pred)
                indexed.append(by_subject)
        for cand in sorted(candidates[key], key=lambda i: i.sort_key):
            subj = subject(cand.pred)
            support = sum(
                1 for by_subject in indexed if any(pred_implies(j, cand.pred) for j in by_subject.get(subj, ()))
            )
            out.append(LabeledInvariant(cand, support, n_cover, project))
    return out, summary


# -- files ---------------------------------------------------------------------------------


def write_labeled(path, labeled: Iterable[LabeledInvariant]) -> None:
    lines = [json.dumps(li.to_json(), ensure_ascii=False, separators=(",", ":")) for li in labeled]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_labeled(path) -> list[LabeledInvariant]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(LabeledInvariant.from_json(json.loads(line)))
    return out


def label_key(project: str, method: str, point: str, invariant: str) -> tuple[str, str, str, str]:
    """Join key shared by labeled, annotated and scored records."""
    return (project, method, point, invariant)


def read_annotations(path) -> dict[tuple[str, str, str, str], str]:
    """Manual or generated labels: one ``{project, method, point, invariant, label}`` per line.

    Labels may be valid, invalid or irrelevant; the invariant text is normalized through the
    parser so equivalent renderings join.
    """
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        obj = json.loads(line)
        if obj.get("label") not in ANNOTATION_LABELS:
            raise ValueError(f"{path}:{lineno}: label must be one of {ANNOTATION_LABELS}")
        inv = parse_invariant(f"{obj['point']} {obj['method']}: {obj['invariant']}")
        key = label_key(obj.get("project", ""), inv.method, inv.point, render_pred(inv.pred))
        out[key] = obj["label"]
    return out
