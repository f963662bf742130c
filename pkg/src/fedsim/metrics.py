"""Metrics records, their CSV form, and run comparison reports."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ReportError

CSV_COLUMNS = ("sim_time", "relative_time", "iteration", "loss", "accuracy", "algorithm", "gamma")


@dataclass(frozen=True)
class MetricsRecord:
    sim_time: int
    relative_time: float
    iteration: int
    loss: float
    accuracy: float
    algorithm: str
    gamma: float | None = None

    def row(self) -> list[str]:
        return [
            str(self.sim_time),
            repr(float(self.relative_time)),
            str(self.iteration),
            repr(float(self.loss)),
            repr(float(self.accuracy)),
            self.algorithm,
            "" if self.gamma is None else repr(float(self.gamma)),
        ]

    @classmethod
    def from_row(cls, row: dict[str, str]) -> MetricsRecord:
        return cls(
            sim_time=int(row["sim_time"]),
            relative_time=float(row["relative_time"]),
            iteration=int(row["iteration"]),
            loss=float(row["loss"]),
            accuracy=float(row["accuracy"]),
            algorithm=row["algorithm"],
            gamma=float(row["gamma"]) if row["gamma"] else None,
        )


def write_csv(records: Iterable[MetricsRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(rec.row())
    return path


def read_csv(path: str | Path) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ReportError(f"{path}: columns {reader.fieldnames} do not match {list(CSV_COLUMNS)}")
        return [MetricsRecord.from_row(row) for row in reader]


def accuracy_at(records: Sequence[MetricsRecord], relative_time: float) -> float | None:
    """Accuracy of the latest record at or before ``relative_time`` (step interpolation)."""
    value = None
    for rec in records:
        if rec.relative_time > relative_time + 1e-9:
            break
        value = rec.accuracy
    return value


def time_to_accuracy(records: Sequence[MetricsRecord], target: float) -> float | None:
    for rec in records:
        if rec.accuracy >= target:
            return rec.relative_time
    return None


def catch_up_time(leader: Sequence[MetricsRecord], follower: Sequence[MetricsRecord]) -> float | None:
    """First relative time after the start at which ``follower`` matches ``leader``'s accuracy."""
    for rec in follower:
        if rec.relative_time <= 0:
            continue
        lead = accuracy_at(leader, rec.relative_time)
        if lead is not None and rec.accuracy >= lead:
            return rec.relative_time
    return None


def run_label(records: Sequence[MetricsRecord], path: str | Path) -> str:
    first = records[0]
    label = first.algorithm if first.gamma is None else f"{first.algorithm}(gamma={first.gamma:g})"
    return f"{label} [{Path(path).name}]"


def _fmt(value: float | None, spec: str = ".4f") -> str:
    return "-" if value is None else format(value, spec)


def compare_runs(paths: Sequence[str | Path], out: str | Path, target: float | None = None) -> str:
    """Align runs by relative time and write a plain-text comparison report.

    Accuracies at each relative time are step-interpolated. When no target
    accuracy is given, the lowest final accuracy among the runs is used.
    """
    if len(paths) < 2:
        raise ReportError(f"need at least two metrics files to compare, got {len(paths)}")
    runs = []
    for p in paths:
        records = read_csv(p)
        if not records:
            raise ReportError(f"{p}: no metrics rows")
        runs.append((run_label(records, p), records))

    finals = [recs[-1].accuracy for _, recs in runs]
    if target is None:
        target = min(finals)
    times = sorted({round(r.relative_time, 9) for _, recs in runs for r in recs})

    lines = [
        "# fedsim comparison report",
        "# relative_time is simulated time in units of one synchronous round",
        "# (broadcast + slowest local pass + every upload) under the shared timing config.",
        "",
        "## summary",
        f"target_accuracy\t{target:.4f}",
    ]
    for (label, recs), final in zip(runs, finals):
        lines.append(
            f"{label}\tfinal_accuracy={final:.4f}\tfinal_relative_time={recs[-1].relative_time:.4f}"
            f"\ttime_to_target={_fmt(time_to_accuracy(recs, target))}"
        )

    sync = [(label, recs) for label, recs in runs if recs[0].algorithm == "sfl"]
    if sync:
        lines += ["", "## synchronous catch-up (first relative time SFL matches the other run's accuracy)"]
        for s_label, s_recs in sync:
            for label, recs in runs:
                if recs is s_recs:
                    continue
                lines.append(f"{s_label} vs {label}\tcatch_up_time={_fmt(catch_up_time(recs, s_recs))}")

    base_label, base = runs[0]
    lines += ["", "## accuracy by relative time (difference columns are relative to the first run)"]
    header = ["relative_time"] + [label for label, _ in runs] + [f"diff:{label}" for label, _ in runs[1:]]
    lines.append("\t".join(header))
    for t in times:
        accs = [accuracy_at(recs, t) for _, recs in runs]
        diffs = [None if a is None or accs[0] is None else a - accs[0] for a in accs[1:]]
        lines.append("\t".join([f"{t:.4f}"] + [_fmt(a) for a in accs] + [_fmt(d, "+.4f") for d in diffs]))

    report = "\n".join(lines) + "\n"
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    Path(out).write_text(report)
    return report


def plot_blocks(runs: Sequence[tuple[str, Sequence[MetricsRecord]]]) -> str:
    """gnuplot data blocks (``index`` separated) of relative_time vs accuracy."""
    chunks = []
    for label, recs in runs:
        body = "\n".join(f"{r.relative_time:.6f} {r.accuracy:.6f} {r.loss:.6f}" for r in recs)
        chunks.append(f'# "{label}"\n# relative_time accuracy loss\n{body}')
    return "\n\n\n".join(chunks) + "\n"

