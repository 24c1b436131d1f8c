"""Review of POIs flagged requires_verification, with an append-only audit log."""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .model import StandardPoi, normalize_text

UNMAPPED_TAXONOMY = "unmapped_taxonomy"
MISSING_PLACE_TYPE = "missing_place_type"
ASSIGN_TYPES = "assign_types"
DISMISS = "dismiss"
ACTIONS = (ASSIGN_TYPES, DISMISS)


class VerificationError(ValueError):
    pass


@dataclass(frozen=True)
class Resolution:
    poi_id: str
    action: str
    labels: tuple = ()
    operator: str = ""
    timestamp: str = ""
    note: str = ""

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise VerificationError(f"unknown action {self.action!r}")
        labels = tuple(sorted({normalize_text(x) for x in self.labels} - {None}))
        if self.action == ASSIGN_TYPES and not labels:
            raise VerificationError(f"{self.poi_id}: assign_types needs at least one label")
        object.__setattr__(self, "labels", labels)

    def to_json(self) -> str:
        doc = {
            "timestamp": self.timestamp,
            "operator": self.operator,
            "poi_id": self.poi_id,
            "action": self.action,
            "labels": list(self.labels),
        }
        if self.note:
            doc["note"] = self.note
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "Resolution":
        d = json.loads(line)
        return cls(d["poi_id"], d["action"], tuple(d.get("labels", ())), d.get("operator", ""), d.get("timestamp", ""), d.get("note", ""))


def flag_reasons(poi: StandardPoi) -> list:
    reasons = []
    if poi.unmapped_types:
        reasons.append(UNMAPPED_TAXONOMY)
    if not poi.place_types:
        reasons.append(MISSING_PLACE_TYPE)
    return reasons


def list_flagged(dataset: Iterable[StandardPoi]) -> list:
    """(poi, reasons) for every flagged POI, in dataset order."""
    return [(p, flag_reasons(p)) for p in dataset if p.requires_verification]


def apply_resolution(poi: StandardPoi, res: Resolution) -> StandardPoi:
    if not poi.requires_verification:
        raise VerificationError(f"{poi.id}: POI is not flagged")
    if res.action == ASSIGN_TYPES:
        # assigned labels replace the unmapped source labels
        kept = poi.place_types - poi.unmapped_types
        return dataclasses.replace(poi, place_types=kept | frozenset(res.labels), unmapped_types=frozenset(), requires_verification=False)
    return dataclasses.replace(poi, requires_verification=False)


class AuditLog:
    """Append-only newline-delimited JSON file."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, res: Resolution) -> None:
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(res.to_json() + "\n")

    def read(self) -> list:
        if not self.path.exists():
            return []
        out = []
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if line.strip():
                    try:
                        out.append(Resolution.from_json(line))
                    except (ValueError, KeyError) as exc:
                        raise VerificationError(f"{self.path}:{lineno}: {exc}") from None
        return out


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def resolve_flag(
    dataset: Sequence[StandardPoi],
    poi_id: str,
    resolution,
    log: Optional[AuditLog] = None,
    operator: str = "",
    clock: Callable[[], str] = _now,
) -> list:
    """Apply one resolution and return the updated dataset.

    ``resolution`` is a Resolution, the string "dismiss", or a mapping
    {"assign_types": labels} / {"dismiss": ...}.
    """
    res = _coerce(poi_id, resolution, operator, clock)
    out = list(dataset)
    for i, p in enumerate(out):
        if p.id == poi_id:
            out[i] = apply_resolution(p, res)
            break
    else:
        raise VerificationError(f"unknown POI id {poi_id!r}")
    if log is not None:
        log.append(res)
    return out


def _coerce(poi_id, resolution, operator, clock) -> Resolution:
    if isinstance(resolution, Resolution):
        if resolution.poi_id != poi_id:
            raise VerificationError(f"resolution is for {resolution.poi_id!r}, not {poi_id!r}")
        return resolution
    if resolution == DISMISS:
        return Resolution(poi_id, DISMISS, (), operator, clock())
    if isinstance(resolution, dict) and len(resolution) == 1:
        action, labels = next(iter(resolution.items()))
        if action == ASSIGN_TYPES:
            if isinstance(labels, str):
                labels = [labels]
            return Resolution(poi_id, ASSIGN_TYPES, tuple(labels), operator, clock())
        if action == DISMISS:
            return Resolution(poi_id, DISMISS, (), operator, clock(), note=str(labels or ""))
    raise VerificationError(f"cannot interpret resolution {resolution!r}")


def replay_audit(dataset: Sequence[StandardPoi], resolutions: Iterable[Resolution]) -> list:
    out = list(dataset)
    for res in resolutions:
        out = resolve_flag(out, res.poi_id, res)
    return out


def read_resolutions_csv(path, operator: str = "", clock: Callable[[], str] = _now) -> list:
    """Rows ``poi_id,action,labels`` with labels separated by "|"."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"poi_id", "action"} - set(reader.fieldnames or ())
        if missing:
            raise VerificationError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            labels = [x for x in (row.get("labels") or "").split("|") if x.strip()]
            try:
                out.append(Resolution(row["poi_id"].strip(), row["action"].strip(), tuple(labels), operator, clock()))
            except VerificationError as exc:
                raise VerificationError(f"{path}:{lineno}: {exc}") from None
    return out


def apply_resolutions(dataset: Sequence[StandardPoi], resolutions: Iterable[Resolution], log: Optional[AuditLog] = None) -> list:
    out = list(dataset)
    for res in resolutions:
        out = resolve_flag(out, res.poi_id, res, log)
    return out


def interactive_review(
    dataset: Sequence[StandardPoi],
    mapper=None,
    log: Optional[AuditLog] = None,
    operator: str = "",
    read: Callable[[str], str] = input,
    write: Callable[[str], None] = print,
    clock: Callable[[], str] = _now,
) -> list:
    """Walk flagged POIs in the terminal.

    For each POI the operator enters a suggestion number, free-text labels
    separated by "|", "d" to dismiss, "s" to skip or "q" to stop.
    """
    out = list(dataset)
    for poi, reasons in list_flagged(dataset):
        write(f"\n{poi.id}  {poi.name or '(no name)'}  reasons: {', '.join(reasons) or 'flagged'}")
        write(f"  place types: {', '.join(sorted(poi.place_types)) or '(none)'}")
        suggestions = []
        if mapper is not None:
            seen = {}
            for label in sorted(poi.unmapped_types) or [poi.name or ""]:
                for target, score in mapper.suggest(label, k=5):
                    seen[target] = max(score, seen.get(target, -2.0))
            suggestions = sorted(seen.items(), key=lambda p: (-p[1], p[0]))[:5]
            for n, (target, score) in enumerate(suggestions, start=1):
                write(f"  [{n}] {target}  ({score:.3f})")
        answer = read("choice> ").strip()
        if answer.lower() == "q":
            break
        if answer.lower() in ("", "s"):
            continue
        if answer.lower() == "d":
            res = Resolution(poi.id, DISMISS, (), operator, clock())
        elif answer.isdigit() and 1 <= int(answer) <= len(suggestions):
            res = Resolution(poi.id, ASSIGN_TYPES, (suggestions[int(answer) - 1][0],), operator, clock())
        else:
            res = Resolution(poi.id, ASSIGN_TYPES, tuple(x for x in answer.split("|") if x.strip()), operator, clock())
        out = resolve_flag(out, poi.id, res, log)
    return out
