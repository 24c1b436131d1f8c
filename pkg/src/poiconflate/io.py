"""GeoJSON / newline-delimited dataset files, raw record files and pair tables."""

from __future__ import annotations

import csv
import hashlib
import datetime as dt
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .model import AddressComponents, BBox, GeoPoint, StandardPoi, UnifiedPoi, validate_poi
from .procurement import RawRecord, _feature_record

COORD_DECIMALS = 7
FORMATS = ("geojson", "ndjson")


class DatasetError(OSError):
    pass


@dataclass(frozen=True)
class RecordError:
    location: str
    message: str

    def __str__(self):
        return f"{self.location}: {self.message}"


def infer_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".ndjson", ".jsonl"):
        return "ndjson"
    if suffix in (".geojson", ".json"):
        return "geojson"
    raise ValueError(f"cannot infer dataset format from {path}")


def _c(x: float) -> float:
    return round(float(x), COORD_DECIMALS)


def poi_to_feature(poi: StandardPoi) -> dict:
    props = {
        "id": poi.id,
        "source": poi.source,
        "name": poi.name,
        "address": None if poi.address is None else {**poi.address.components(), "raw": poi.address.raw},
        "bound": None if poi.bound is None else [_c(poi.bound.min_lat), _c(poi.bound.min_lon), _c(poi.bound.max_lat), _c(poi.bound.max_lon)],
        "place_types": sorted(poi.place_types),
        "tags": sorted(poi.tags),
        "extraction_date": poi.extraction_date.isoformat(),
        "requires_verification": poi.requires_verification,
        "unmapped_types": sorted(poi.unmapped_types),
    }
    if isinstance(poi, UnifiedPoi):
        props["contributing_ids"] = sorted(poi.contributing_ids)
        props["contributing_sources"] = sorted(poi.contributing_sources)
        props["contributing_points"] = [[i, _c(a), _c(b)] for i, a, b in poi.contributing_points]
    return {
        "type": "Feature",
        "geometry": {"type": "Point", "coordinates": [_c(poi.point.lon), _c(poi.point.lat)]},
        "properties": props,
    }


def feature_to_poi(feature: dict) -> StandardPoi:
    """Parse one Feature; raises ValueError on anything malformed."""
    if not isinstance(feature, dict) or feature.get("type") != "Feature":
        raise ValueError("not a GeoJSON Feature")
    geom = feature.get("geometry") or {}
    if geom.get("type") != "Point":
        raise ValueError(f"geometry must be Point, got {geom.get('type')!r}")
    coords = geom.get("coordinates")
    if not isinstance(coords, list) or len(coords) < 2:
        raise ValueError("Point needs [lon, lat] coordinates")
    props = feature.get("properties") or {}
    for key in ("id", "source", "extraction_date"):
        if not props.get(key):
            raise ValueError(f"missing property {key!r}")
    addr = props.get("address")
    if addr is not None:
        addr = AddressComponents(**{k: addr.get(k) for k in AddressComponents.COMPONENTS}, raw=addr.get("raw") or "")
    bound = props.get("bound")
    if bound is not None:
        bound = BBox(*(float(x) for x in bound))
    fields = dict(
        id=str(props["id"]),
        source=str(props["source"]),
        point=GeoPoint.unchecked(float(coords[1]), float(coords[0])),
        extraction_date=dt.date.fromisoformat(props["extraction_date"]),
        name=props.get("name"),
        address=addr,
        bound=bound,
        place_types=frozenset(props.get("place_types") or ()),
        tags=frozenset(props.get("tags") or ()),
        requires_verification=bool(props.get("requires_verification", False)),
        unmapped_types=frozenset(props.get("unmapped_types") or ()),
    )
    if "contributing_ids" in props:
        poi = UnifiedPoi(
            **fields,
            contributing_ids=frozenset(props["contributing_ids"]),
            contributing_sources=frozenset(props.get("contributing_sources") or ()),
            contributing_points=tuple(tuple(x) for x in props.get("contributing_points") or ()),
        )
    else:
        poi = StandardPoi(**fields)
    problems = validate_poi(poi)
    if problems:
        raise ValueError("; ".join(problems))
    return poi


def load_dataset(path, format: Optional[str] = None) -> tuple:
    """Read a dataset; returns (pois, errors) where errors are per-record RecordError.

    Malformed JSON at file level (GeoJSON) raises DatasetError.
    """
    fmt = format or infer_format(path)
    pois, errors = [], []
    try:
        if fmt == "geojson":
            with open(path, encoding="utf-8") as fh:
                try:
                    doc = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise DatasetError(f"{path}: malformed JSON: {exc}") from None
            if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
                raise DatasetError(f"{path}: not a FeatureCollection")
            items = [(i, f"{path}: feature {i}", f) for i, f in enumerate(doc.get("features") or [])]
        elif fmt == "ndjson":
            items = []
            with open(path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        items.append((lineno, f"{path}:{lineno}", json.loads(line)))
                    except json.JSONDecodeError as exc:
                        errors.append((lineno, RecordError(f"{path}:{lineno}", f"malformed JSON: {exc.msg}")))
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        if isinstance(exc, DatasetError):
            raise
        raise DatasetError(f"{path}: {exc.strerror or exc}") from None
    for order, where, feat in items:
        try:
            pois.append(feature_to_poi(feat))
        except (ValueError, TypeError, KeyError) as exc:
            errors.append((order, RecordError(where, str(exc))))
    errors.sort(key=lambda e: e[0])
    return pois, [e for _, e in errors]


def dumps_dataset(pois: Iterable[StandardPoi], format: str) -> str:
    feats = [poi_to_feature(p) for p in sorted(pois, key=lambda p: p.id)]
    if format == "ndjson":
        return "".join(json.dumps(f, ensure_ascii=False, separators=(",", ":")) + "\n" for f in feats)
    if format == "geojson":
        return json.dumps({"type": "FeatureCollection", "features": feats}, ensure_ascii=False, indent=1) + "\n"
    raise ValueError(f"unknown format {format!r}")


def _write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise DatasetError(f"{path}: {exc.strerror or exc}") from None


def save_dataset(pois: Iterable[StandardPoi], path, format: Optional[str] = None) -> None:
    _write_text(path, dumps_dataset(pois, format or infer_format(path)))


def load_raw_records(path, source_id: str) -> list:
    """Raw records: one GeoJSON-like feature per line, native id in properties."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(_feature_record(source_id, json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
    return out


def save_raw_records(records: Iterable[RawRecord], path) -> None:
    _write_text(path, "".join(json.dumps(r.payload, ensure_ascii=False, sort_keys=True) + "\n" for r in records))


LABELED_COLUMNS = ("id_a", "id_b", "label")
DECIDED_COLUMNS = ("id_a", "id_b", "s_name", "s_address", "score", "label")


def read_labeled_pairs(path) -> list:
    """(id_a, id_b, label) triples with ids in canonical order."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"id_a", "id_b", "label"} - set(reader.fieldnames or ())
        if missing:
            raise DatasetError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            a, b = row["id_a"], row["id_b"]
            label = row["label"].strip().lower().replace("-", "_")
            if label not in ("match", "non_match"):
                raise DatasetError(f"{path}:{reader.line_num}: bad label {row['label']!r}")
            out.append((min(a, b), max(a, b), label))
    return out


def write_labeled_pairs(rows: Iterable[tuple], path) -> None:
    lines = [",".join(LABELED_COLUMNS)]
    lines += [f"{a},{b},{label}" for a, b, label in sorted(rows)]
    _write_text(path, "\n".join(lines) + "\n")


def write_decided_pairs(decided: Sequence, path) -> None:
    lines = [",".join(DECIDED_COLUMNS)]
    for d in decided:
        p = d.pair
        lines.append(f"{p.id_a},{p.id_b},{p.s_name:.6f},{p.s_address:.6f},{d.score:.6f},{p.label}")
    _write_text(path, "\n".join(lines) + "\n")


def read_pairs(path) -> list:
    """(id_a, id_b, label) from either a labeled or a decided pair file."""
    return read_labeled_pairs(path)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
