"""Cross-run result tables: one row per (model, method), P/R/F1 per dataset."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

from relex.errors import ValidationError
from relex.metrics import MODE_POSITIVE
from relex.runner import RunManifest

DATASET_ORDER = ("TACRED", "TACREV", "Re-TACRED", "SemEVAL")
METHOD_ORDER = ("simple", "rag", "finetuned", "rag_finetuned")

REPORT_TXT = "report.txt"
REPORT_CSV = "report.csv"


def _pct(value: float) -> str:
    return f"{100 * value:.2f}"


def _ordered_datasets(names: set[str]) -> list[str]:
    named = [d for d in DATASET_ORDER if d in names]
    extra = sorted(names - set(DATASET_ORDER))
    return named + extra


def _collect(manifests: Sequence[RunManifest]):
    """Index manifests as cells[(model, method)][dataset] -> (P, R, F1)."""
    cells: dict[tuple[str, str], dict[str, tuple[str, str, str]]] = {}
    datasets: set[str] = set()
    for manifest in manifests:
        if manifest.partial or MODE_POSITIVE not in manifest.metrics:
            raise ValidationError("cannot report on a partial run; resume it first")
        model = manifest.config["generation_model_id"]
        method = manifest.config["method"]
        dataset = manifest.config["dataset_name"]
        report = manifest.metrics[MODE_POSITIVE]
        datasets.add(dataset)
        cells.setdefault((model, method), {})[dataset] = (
            _pct(report.precision),
            _pct(report.recall),
            _pct(report.f1),
        )
    return cells, _ordered_datasets(datasets)


def _ordered_rows(cells) -> list[tuple[str, str]]:
    models = sorted({model for model, _ in cells})
    rows = []
    for model in models:
        for method in METHOD_ORDER:
            if (model, method) in cells:
                rows.append((model, method))
    return rows


def render_report_csv(manifests: Sequence[RunManifest]) -> list[list[str]]:
    cells, datasets = _collect(manifests)
    header = ["model", "method"]
    for dataset in datasets:
        header += [f"{dataset}_P", f"{dataset}_R", f"{dataset}_F1"]
    table = [header]
    for model, method in _ordered_rows(cells):
        row = [model, method]
        for dataset in datasets:
            cell = cells[(model, method)].get(dataset)
            row += list(cell) if cell else ["-", "-", "-"]
        table.append(row)
    return table


def render_report_text(manifests: Sequence[RunManifest]) -> str:
    cells, datasets = _collect(manifests)
    rows = _ordered_rows(cells)
    header_top = ["", ""] + [dataset for dataset in datasets for _ in range(3)]
    header_bot = ["model", "method"] + ["P(%)", "R(%)", "F1(%)"] * len(datasets)
    body = []
    for model, method in rows:
        line = [model, method]
        for dataset in datasets:
            cell = cells[(model, method)].get(dataset, ("-", "-", "-"))
            line += list(cell)
        body.append(line)
    table = [header_top, header_bot] + body
    widths = [max(len(row[i]) for row in table) for i in range(len(header_bot))]
    lines = []
    for row in table:
        lines.append("  ".join(value.rjust(widths[i]) for i, value in enumerate(row)).rstrip())
    return "\n".join(lines) + "\n"


def emit_report(manifests: Sequence[RunManifest], out_dir: str | Path) -> tuple[Path, Path]:
    """Write report.txt and report.csv; returns both paths."""
    if not manifests:
        raise ValidationError("emit_report requires at least one manifest")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    txt_path = out_dir / REPORT_TXT
    csv_path = out_dir / REPORT_CSV
    txt_path.write_text(render_report_text(manifests), encoding="utf-8")
    with open(csv_path, "w", newline="", encoding="utf-8") as handle:
        csv.writer(handle).writerows(render_report_csv(manifests))
    return txt_path, csv_path
