"""Report summarization: delimited tables plus rendered figures.

``summarize`` reads a report JSON, prints a plain-text overview, and writes
a CSV of the per-group means alongside bar-chart PNGs for the domain and
difficulty groupings.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

__all__ = ["summarize", "BadReportError"]

SUMMARY_METRICS = ("esr", "scs", "codexqa", "xdrfr", "visual_similarity", "xed", "xtc")


class BadReportError(ValueError):
    pass


def _load(report_path: str) -> dict:
    try:
        data = json.loads(Path(report_path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BadReportError(f"cannot read report: {exc}") from exc
    if not isinstance(data, dict) or "aggregates" not in data:
        raise BadReportError("report has no aggregates section")
    return data


def _rows(data: dict) -> list[dict]:
    aggregates = data["aggregates"]
    rows = []
    overall = aggregates.get("overall", {})
    if overall:
        rows.append({"grouping": "overall", "group": "all", **overall})
    for grouping in ("by_domain", "by_difficulty"):
        for group, table in sorted(aggregates.get(grouping, {}).items()):
            rows.append({"grouping": grouping, "group": group, **table})
    return rows


def _write_csv(rows: list[dict], path: Path) -> None:
    fields = ["grouping", "group", "count", *SUMMARY_METRICS]
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _chart(aggregates: dict, grouping: str, metric: str, path: Path) -> bool:
    table = aggregates.get(grouping, {})
    labels = sorted(table)
    values = [table[label].get(metric) for label in labels]
    pairs = [(label, v) for label, v in zip(labels, values) if v is not None]
    if not pairs:
        return False
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar([p[0] for p in pairs], [p[1] for p in pairs], color="#4878a8")
    ax.set_title(f"{metric} {grouping.replace('_', ' ')}")
    ax.set_ylabel(metric)
    ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return True


def summarize(report_path: str, out_dir: str | None = None) -> dict:
    """Summarize a report file; returns {"text": ..., "files": [...]}."""
    data = _load(report_path)
    rows = _rows(data)
    target = Path(out_dir) if out_dir else Path(report_path).resolve().parent
    target.mkdir(parents=True, exist_ok=True)
    stem = Path(report_path).stem

    csv_path = target / f"{stem}_summary.csv"
    _write_csv(rows, csv_path)
    written = [str(csv_path)]

    chart_metrics = ("esr", "scs", "xdrfr", "visual_similarity")
    for grouping in ("by_domain", "by_difficulty"):
        for metric in chart_metrics:
            png = target / f"{stem}_{grouping}_{metric}.png"
            if _chart(data["aggregates"], grouping, metric, png):
                written.append(str(png))

    meta = data.get("meta", {})
    lines = [
        f"task: {meta.get('task', '?')}",
        f"judge: {meta.get('judge_identity', '?')}",
        f"records: {len(data.get('records', []))}",
        "",
        f"{'grouping':<14}{'group':<22}{'count':>6}  " + "  ".join(f"{m:>10}" for m in SUMMARY_METRICS),
    ]
    for row in rows:
        cells = []
        for metric in SUMMARY_METRICS:
            value = row.get(metric)
            cells.append(f"{value:>10.4f}" if isinstance(value, float) else f"{str(value if value is not None else '-'):>10}")
        lines.append(
            f"{row['grouping']:<14}{row['group']:<22}{row.get('count', 0):>6}  " + "  ".join(cells)
        )
    lines.append("")
    lines.append("wrote: " + ", ".join(written))
    return {"text": "\n".join(lines), "files": written}
