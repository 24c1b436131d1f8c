"""Matching-accuracy metrics and per-source attribute coverage."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import StandardPoi

MATCH = "match"
NON_MATCH = "non_match"


def as_bool_array(values) -> np.ndarray:
    """Map labels to a bool array where True means match.

    Accepts bools, 0/1 numbers, or the strings "match" / "non_match"
    ("non-match" is accepted too).
    """
    out = []
    for v in values:
        if isinstance(v, str):
            key = v.strip().lower().replace("-", "_")
            if key == MATCH:
                out.append(True)
            elif key == NON_MATCH:
                out.append(False)
            else:
                raise ValueError(f"unknown label {v!r}")
        else:
            out.append(bool(v))
    return np.asarray(out, dtype=bool)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion_counts(predictions, labels) -> ConfusionCounts:
    pred = as_bool_array(predictions)
    true = as_bool_array(labels)
    if len(pred) != len(true):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(true)} labels")
    if len(pred) == 0:
        raise ValueError("no predictions to count")
    return ConfusionCounts(
        tp=int(np.sum(pred & true)),
        tn=int(np.sum(~pred & ~true)),
        fp=int(np.sum(pred & ~true)),
        fn=int(np.sum(~pred & true)),
    )


def overall_accuracy(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise ValueError("no instances")
    return (c.tp + c.tn) / c.total


def balanced_accuracy_counts(c: ConfusionCounts) -> float:
    if c.tp + c.fn == 0 or c.tn + c.fp == 0:
        raise ValueError("balanced accuracy needs both classes in the labels")
    return (c.tp / (c.tp + c.fn) + c.tn / (c.tn + c.fp)) / 2


def balanced_accuracy(predictions, labels) -> float:
    """Mean of match recall and non-match recall."""
    return balanced_accuracy_counts(confusion_counts(predictions, labels))


def fast_balanced_accuracy(pred: np.ndarray, true: np.ndarray) -> float:
    """bool-array version used inside tuning loops."""
    pos = true.sum()
    neg = len(true) - pos
    if pos == 0 or neg == 0:
        raise ValueError("balanced accuracy needs both classes in the labels")
    return 0.5 * (np.sum(pred & true) / pos + np.sum(~pred & ~true) / neg)


COVERAGE_ATTRIBUTES = ("coordinates", "address", "name", "place_type", "tags")


def _present(poi: StandardPoi, attribute: str) -> bool:
    if attribute == "coordinates":
        return poi.point is not None
    if attribute == "address":
        a = poi.address
        if a is None:
            return False
        return not a.is_empty() or bool(a.raw.strip())
    if attribute == "name":
        return bool(poi.name and poi.name.strip())
    if attribute == "place_type":
        return any(t.strip() for t in poi.place_types)
    if attribute == "tags":
        return any(t.strip() for t in poi.tags)
    raise KeyError(attribute)


def coverage_percent(present: int, total: int) -> float:
    """Percentage to one decimal, never shown as 0 or 100 unless exactly so."""
    if total == 0:
        return 0.0
    pct = math.floor(1000.0 * present / total + 0.5) / 10.0
    if present < total:
        pct = min(pct, 99.9)
    if present > 0:
        pct = max(pct, 0.1)
    return pct


@dataclass(frozen=True)
class CoverageRow:
    source: str
    total: int
    present: dict

    def percent(self, attribute: str) -> float:
        return coverage_percent(self.present[attribute], self.total)


@dataclass(frozen=True)
class CoverageReport:
    rows: tuple

    def row(self, source: str) -> CoverageRow:
        for r in self.rows:
            if r.source == source:
                return r
        raise KeyError(source)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["source"]
        for a in COVERAGE_ATTRIBUTES:
            header += [f"{a}_count", f"{a}_pct"]
        w.writerow(header + ["n_pois"])
        for r in self.rows:
            line = [r.source]
            for a in COVERAGE_ATTRIBUTES:
                line += [r.present[a], f"{r.percent(a):.1f}"]
            w.writerow(line + [r.total])
        return buf.getvalue()

    def to_text(self) -> str:
        titles = ["Data Source", "Coordinates", "Address", "Name", "Place Type", "Tags", "Number of POIs"]
        table = [titles]
        for r in self.rows:
            cells = [r.source] + [f"{r.present[a]:,} ({r.percent(a):.1f}%)" for a in COVERAGE_ATTRIBUTES] + [f"{r.total:,}"]
            table.append(cells)
        widths = [max(len(row[i]) for row in table) for i in range(len(titles))]
        lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))) for row in table]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def coverage_row(source: str, pois: Sequence[StandardPoi]) -> CoverageRow:
    present = {a: sum(1 for p in pois if _present(p, a)) for a in COVERAGE_ATTRIBUTES}
    return CoverageRow(source, len(pois), present)


def coverage_report(datasets: Mapping[str, Sequence[StandardPoi]], unified: Sequence[StandardPoi] | None = None, unified_label: str = "unified") -> CoverageReport:
    rows = [coverage_row(src, list(pois)) for src, pois in datasets.items()]
    if unified is not None:
        rows.append(coverage_row(unified_label, list(unified)))
    return CoverageReport(tuple(rows))


def group_by_source(pois: Iterable[StandardPoi]) -> dict:
    out: dict = {}
    for p in pois:
        out.setdefault(p.source, []).append(p)
    return dict(sorted(out.items()))
