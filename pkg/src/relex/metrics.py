"""Micro precision/recall/F1 over predictions, positive-class and all-class.

Positive-class counting (the TACRED convention): a pair contributes
TP when scored == gold != negative, FP when scored is a non-negative label
different from gold, FN when gold is a non-negative label different from
scored; (negative, negative) pairs contribute nothing.  All-class micro
counts every label including the negative one, which for single-label
classification makes precision, recall and F1 all equal accuracy.
All 0/0 ratios are defined as 0.0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

from relex.data import RelationSchema
from relex.errors import ValidationError
from relex.normalize import MATCH_UNPARSEABLE, PredictionRecord

MODE_POSITIVE = "positive_class"
MODE_ALL = "all_class"


@dataclass(frozen=True)
class MetricsReport:
    mode: str
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    per_label: dict[str, tuple[int, int, int]]
    unparseable_count: int
    total: int


def _ratio(numerator: int, denominator: int) -> float:
    return numerator / denominator if denominator else 0.0


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _per_label_confusion(
    preds: Sequence[PredictionRecord],
    golds: Mapping[str, str],
    schema: RelationSchema,
) -> dict[str, list[int]]:
    if not preds:
        raise ValidationError("cannot score an empty prediction list")
    seen = set()
    missing = []
    for pred in preds:
        if pred.instance_id in seen:
            raise ValidationError(f"duplicate prediction id {pred.instance_id!r}")
        seen.add(pred.instance_id)
        if pred.instance_id not in golds:
            missing.append(pred.instance_id)
    if missing:
        raise ValidationError(f"prediction ids missing from golds: {missing}")

    counts = {label: [0, 0, 0] for label in schema.labels}
    for pred in preds:
        gold = golds[pred.instance_id]
        scored = pred.scored_label
        if scored not in counts:
            raise ValidationError(f"prediction {pred.instance_id!r}: label {scored!r} not in schema")
        if gold not in counts:
            raise ValidationError(f"instance {pred.instance_id!r}: gold label {gold!r} not in schema")
        if scored == gold:
            counts[gold][0] += 1
        else:
            counts[scored][1] += 1
            counts[gold][2] += 1
    return counts


def _score(
    preds: Sequence[PredictionRecord],
    golds: Mapping[str, str],
    schema: RelationSchema,
    mode: str,
) -> MetricsReport:
    counts = _per_label_confusion(preds, golds, schema)
    skip = {schema.negative_label} if mode == MODE_POSITIVE else set()
    tp = sum(c[0] for label, c in counts.items() if label not in skip)
    fp = sum(c[1] for label, c in counts.items() if label not in skip)
    fn = sum(c[2] for label, c in counts.items() if label not in skip)
    precision, recall, f1 = _prf(tp, fp, fn)
    return MetricsReport(
        mode=mode,
        tp=tp,
        fp=fp,
        fn=fn,
        precision=precision,
        recall=recall,
        f1=f1,
        per_label={label: tuple(c) for label, c in counts.items()},
        unparseable_count=sum(1 for p in preds if p.match_kind == MATCH_UNPARSEABLE),
        total=len(preds),
    )


def score_positive_class(
    preds: Sequence[PredictionRecord], golds: Mapping[str, str], schema: RelationSchema
) -> MetricsReport:
    return _score(preds, golds, schema, MODE_POSITIVE)


def score_all_class(
    preds: Sequence[PredictionRecord], golds: Mapping[str, str], schema: RelationSchema
) -> MetricsReport:
    return _score(preds, golds, schema, MODE_ALL)


def report_to_dict(report: MetricsReport) -> dict:
    return {
        "mode": report.mode,
        "tp": report.tp,
        "fp": report.fp,
        "fn": report.fn,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "per_label": {label: list(c) for label, c in report.per_label.items()},
        "unparseable_count": report.unparseable_count,
        "total": report.total,
    }


def report_from_dict(raw: dict) -> MetricsReport:
    return MetricsReport(
        mode=raw["mode"],
        tp=raw["tp"],
        fp=raw["fp"],
        fn=raw["fn"],
        precision=raw["precision"],
        recall=raw["recall"],
        f1=raw["f1"],
        per_label={label: tuple(c) for label, c in raw["per_label"].items()},
        unparseable_count=raw["unparseable_count"],
        total=raw["total"],
    )


def report_to_json(report: MetricsReport) -> str:
    return json.dumps(report_to_dict(report), ensure_ascii=False, indent=2)


def format_report_text(report: MetricsReport) -> str:
    """Aligned single-run summary with percentage columns."""
    lines = [
        f"mode: {report.mode}",
        f"total: {report.total}    unparseable: {report.unparseable_count}",
        f"tp: {report.tp}    fp: {report.fp}    fn: {report.fn}",
        "       P(%)      R(%)     F1(%)",
        f"  {100 * report.precision:9.2f} {100 * report.recall:9.2f} {100 * report.f1:9.2f}",
    ]
    return "\n".join(lines) + "\n"
