"""Report files: metric CSV, human-readable text summary, ROC sidecar CSV."""

from __future__ import annotations

import csv
import enum
import io
from pathlib import Path

from .metrics import EvaluationReport, ROCPoint


class ReportFormat(str, enum.Enum):
    CSV = "CSV"
    TEXT = "TEXT"


def _num(v: float) -> str:
    return repr(float(v))


def report_rows(report: EvaluationReport) -> list[tuple[str, str, str]]:
    rows = []
    for name, sec in report.sections.items():
        for t in sorted(sec.ap_by_iou):
            rows.append((f"{name}.ap", f"{t:.2f}", _num(sec.ap_by_iou[t])))
        if sec.ap50 is not None:
            rows.append((f"{name}.ap50", "n/a", _num(sec.ap50)))
        if sec.map_coco is not None:
            rows.append((f"{name}.map_coco", "n/a", _num(sec.map_coco)))
        if sec.auc is not None:
            rows.append((f"{name}.auc", "n/a", _num(sec.auc)))
        for i, a in enumerate(sec.auc_history, start=1):
            rows.append((f"{name}.auc_loop_{i}", "n/a", _num(a)))
        for k in sorted(sec.counts):
            rows.append((f"{name}.count_{k}", "n/a", str(int(sec.counts[k]))))
    return rows


def report_csv(report: EvaluationReport) -> str:
    buf = io.StringIO()
    buf.write(f"# title={report.title}\n")
    for k in sorted(report.metadata):
        buf.write(f"# {k}={report.metadata[k]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "iou_threshold", "value"])
    writer.writerows(report_rows(report))
    return buf.getvalue()


def roc_csv(report: EvaluationReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["section", "threshold", "false_positive_rate", "true_positive_rate"])
    for name, sec in report.sections.items():
        for p in sec.roc:
            writer.writerow([name, _num(p.threshold), _num(p.false_positive_rate), _num(p.true_positive_rate)])
    return buf.getvalue()


def report_text(report: EvaluationReport) -> str:
    lines = [report.title, "=" * len(report.title)]
    for k in sorted(report.metadata):
        lines.append(f"{k}: {report.metadata[k]}")
    det = [(n, s) for n, s in report.sections.items() if s.ap_by_iou]
    if det:
        lines += ["", "Detection (pole_cap unless noted)", f"{'system':<20} {'ap50':>8} {'map_coco':>9}"]
        for name, sec in det:
            ap50 = "-" if sec.ap50 is None else f"{sec.ap50:.4f}"
            mc = "-" if sec.map_coco is None else f"{sec.map_coco:.4f}"
            lines.append(f"{name:<20} {ap50:>8} {mc:>9}")
    cls = [(n, s) for n, s in report.sections.items() if s.auc is not None or s.auc_history]
    if cls:
        lines += ["", "Classification", f"{'run':<20} {'auc':>8}  per-loop auc"]
        for name, sec in cls:
            a = "-" if sec.auc is None else f"{sec.auc:.4f}"
            loops = ", ".join(f"{i}: {v:.4f}" for i, v in enumerate(sec.auc_history, start=1))
            lines.append(f"{name:<20} {a:>8}  {loops}")
    counts = [(n, s) for n, s in report.sections.items() if s.counts]
    if counts:
        lines += ["", "Counts"]
        for name, sec in counts:
            lines.append(f"{name}: " + ", ".join(f"{k}={v}" for k, v in sorted(sec.counts.items())))
    return "\n".join(lines) + "\n"


def emit_report(report: EvaluationReport, fmt: ReportFormat | str, path: str | Path) -> list[Path]:
    """Write ``report``; returns the files written (the report plus a ROC sidecar if any ROC exists)."""
    fmt = ReportFormat(fmt)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    written = [path]
    if fmt is ReportFormat.CSV:
        path.write_text(report_csv(report))
    else:
        path.write_text(report_text(report))
    if any(s.roc for s in report.sections.values()):
        side = roc_sidecar_path(path)
        side.write_text(roc_csv(report))
        written.append(side)
    return written


def roc_sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + "_roc.csv")


def read_report_csv(path: str | Path) -> EvaluationReport:
    """Parse a report CSV (and its ROC sidecar when present) back into a report."""
    path = Path(path)
    meta, body = {}, []
    title = ""
    for line in path.read_text().splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            if k == "title":
                title = v
            else:
                meta[k] = v
        else:
            body.append(line)
    report = EvaluationReport(title, metadata=meta)
    loops: dict[str, dict[int, float]] = {}
    for row in csv.DictReader(body):
        name, _, metric = row["metric"].rpartition(".")
        value = row["value"]
        sec = report.section(name)
        if metric == "ap":
            sec.ap_by_iou[float(row["iou_threshold"])] = float(value)
        elif metric == "auc":
            sec.auc = float(value)
        elif metric.startswith("auc_loop_"):
            loops.setdefault(name, {})[int(metric[len("auc_loop_"):])] = float(value)
        elif metric.startswith("count_"):
            sec.counts[metric[len("count_"):]] = int(value)
    for name, d in loops.items():
        report.sections[name].auc_history = [d[i] for i in sorted(d)]
    side = roc_sidecar_path(path)
    if side.exists():
        for row in csv.DictReader(side.read_text().splitlines()):
            report.section(row["section"]).roc.append(ROCPoint(
                float(row["false_positive_rate"]), float(row["true_positive_rate"]), float(row["threshold"])))
    return report
