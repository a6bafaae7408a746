"""ROC curves, (partial) AUC, and per-method / per-project ranking evaluation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np


class SingleClass(ValueError):
    pass


@dataclass(frozen=True)
class RocCurve:
    points: tuple[tuple[float, float], ...]
    auc: float

    @property
    def fpr(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def tpr(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])


def _trapezoid(xs: Sequence[float], ys: Sequence[float]) -> float:
    area = 0.0
    for i in range(1, len(xs)):
        area += (xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]) / 2.0
    return area


def roc(scores: Sequence[float], labels: Sequence[int]) -> RocCurve:
    """Threshold sweep from the highest score down; tied scores form one diagonal segment."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC needs both positive and negative examples")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # one point per distinct score: cumulative counts at the end of each tie group
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    fp = (ends + 1) - tp
    xs = [0.0] + (fp / n_neg).tolist()
    ys = [0.0] + (tp / n_pos).tolist()
    xs[-1], ys[-1] = 1.0, 1.0
    return RocCurve(tuple(zip(xs, ys)), _trapezoid(xs, ys))


def partial_auc(curve: RocCurve, max_fpr: float) -> float:
    """Area under the curve for fpr in [0, max_fpr], interpolating linearly at the cut."""
    if not 0 < max_fpr <= 1:
        raise ValueError("max_fpr must be in (0, 1]")
    xs, ys = [curve.points[0][0]], [curve.points[0][1]]
    for (x0, y0), (x1, y1) in zip(curve.points, curve.points[1:]):
        if x1 <= max_fpr:
            xs.append(x1)
            ys.append(y1)
            continue
        if x0 < max_fpr:
            xs.append(max_fpr)
            ys.append(y0 + (y1 - y0) * (max_fpr - x0) / (x1 - x0))
        break
    return _trapezoid(xs, ys)


@dataclass
class GroupEval:
    mean_auc: float
    aucs: dict
    skipped: list

    def to_json(self) -> dict:
        return {
            "mean_auc": self.mean_auc,
            "n_groups": len(self.aucs),
            "n_skipped": len(self.skipped),
            "aucs": {(" / ".join(k) if isinstance(k, tuple) else str(k)): v for k, v in sorted(self.aucs.items(), key=lambda kv: str(kv[0]))},
        }


def _group(scored: Iterable[tuple[Hashable, float, int]]) -> dict:
    groups: dict = {}
    for key, score, label in scored:
        groups.setdefault(key, ([], []))
        groups[key][0].append(score)
        groups[key][1].append(label)
    return groups


def per_method_eval(scored: Iterable[tuple[Hashable, float, int]]) -> GroupEval:
    """Unweighted mean of per-method AUCs over methods holding both classes."""
    aucs, skipped = {}, []
    for key, (s, y) in _group(scored).items():
        if 0 < sum(y) < len(y):
            aucs[key] = roc(s, y).auc
        else:
            skipped.append(key)
    mean = float(np.mean(list(aucs.values()))) if aucs else float("nan")
    return GroupEval(mean, aucs, skipped)


def per_project_eval(scored: Iterable[tuple[Hashable, float, int]]) -> dict:
    """One pooled curve per project (projects lacking a class are left out)."""
    out = {}
    for key, (s, y) in _group(scored).items():
        if 0 < sum(y) < len(y):
            out[key] = roc(s, y)
    return out


# -- score / label files ---------------------------------------------------------------


def score_key(obj: dict) -> tuple[str, str, str, str]:
    return (obj.get("project", ""), obj["method"], obj["point"], obj["invariant"])


def read_scores(path) -> dict[tuple[str, str, str, str], float]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            obj = json.loads(line)
            out[score_key(obj)] = float(obj["score"])
    return out


def join(scores: dict, labels: dict) -> list[tuple[tuple, float, int]]:
    """(key, score, 0/1) for keys present in both; 'irrelevant' annotations are skipped."""
    out = []
    for key in sorted(scores):
        lab = labels.get(key)
        if lab in ("valid", "invalid"):
            out.append((key, scores[key], 1 if lab == "valid" else 0))
    return out


def evaluation_report(joined: list[tuple[tuple, float, int]], partial_fprs: Sequence[float] = (0.05, 0.25), per_method: bool = True) -> tuple[dict, RocCurve | None]:
    report: dict = {"n": len(joined), "n_valid": sum(y for _, _, y in joined)}
    curve = None
    scores = [s for _, s, _ in joined]
    labels = [y for _, _, y in joined]
    try:
        curve = roc(scores, labels)
        report["auc"] = curve.auc
        report["partial_auc"] = {str(f): partial_auc(curve, f) for f in partial_fprs}
    except SingleClass:
        report["auc"] = None
    if per_method:
        pm = per_method_eval(((k[0], k[1]), s, y) for k, s, y in joined)
        report["per_method"] = {"mean_auc": pm.mean_auc, "n_methods": len(pm.aucs), "n_skipped": len(pm.skipped)}
    projects = per_project_eval((k[0], s, y) for k, s, y in joined)
    report["per_project"] = {p: c.auc for p, c in sorted(projects.items())}
    return report, curve


def write_roc_csv(path, curve: RocCurve) -> None:
    lines = ["fpr,tpr"] + [f"{x!r},{y!r}" for x, y in curve.points]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
