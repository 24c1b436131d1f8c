"""Per-source field profiles and rule-based address segmentation."""

from __future__ import annotations

import datetime as dt
import re
import sys
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from .model import AddressComponents, GeoPoint, StandardPoi, make_id, normalize_text
from .procurement import RawRecord

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MANDATORY_FIELDS = ("native_id", "lat", "lon")
CANONICAL_FIELDS = ("native_id", "lat", "lon", "name", "address", "place_type", "date", "tags")

_BLOCK_WORDS = {"blk", "block"}
_BLOCK_RE = re.compile(r"^\d+[a-z]?$")
_POSTAL_RE = re.compile(r"^\d{6}$")
_SPLIT_RE = re.compile(r"[\s,]+")


class StandardizeError(ValueError):
    def __init__(self, record_id: str, message: str):
        super().__init__(f"{record_id}: {message}")
        self.record_id = record_id


def _read_vocab(text: str) -> frozenset:
    out = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.add(" ".join(_SPLIT_RE.split(normalize_text(line))))
    return frozenset(out)


@lru_cache(maxsize=None)
def default_vocabulary() -> tuple:
    data = resources.files("poiconflate") / "data"
    return (
        _read_vocab((data / "states.txt").read_text(encoding="utf-8")),
        _read_vocab((data / "countries.txt").read_text(encoding="utf-8")),
    )


def load_vocabulary(path) -> frozenset:
    return _read_vocab(Path(path).read_text(encoding="utf-8"))


def _take_suffix(tokens: list, vocab: frozenset) -> Optional[str]:
    # longest trailing phrase found in vocab
    for k in range(len(tokens), 0, -1):
        phrase = " ".join(tokens[-k:])
        if phrase in vocab:
            del tokens[-k:]
            return phrase
    return None


def parse_address(raw: Optional[str], states: Optional[frozenset] = None, countries: Optional[frozenset] = None) -> AddressComponents:
    """Split a free-form address into components.

    Rules, applied in order: a trailing six-digit token is the postal code;
    then the longest trailing country phrase, then the longest trailing state
    phrase; a leading "blk"/"block" + number, or a bare leading number, is the
    block; whatever remains is the street name.
    """
    raw = raw or ""
    if states is None or countries is None:
        default_states, default_countries = default_vocabulary()
        states = default_states if states is None else states
        countries = default_countries if countries is None else countries
    text = normalize_text(raw) or ""
    tokens = [t for t in _SPLIT_RE.split(text) if t]
    postal = country = state = block = None
    if tokens and _POSTAL_RE.match(tokens[-1]):
        postal = tokens.pop()
    country = _take_suffix(tokens, countries)
    state = _take_suffix(tokens, states)
    if len(tokens) >= 2 and tokens[0] in _BLOCK_WORDS and _BLOCK_RE.match(tokens[1]):
        block = tokens[1]
        del tokens[:2]
    elif tokens and _BLOCK_RE.match(tokens[0]):
        block = tokens.pop(0)
    street = " ".join(tokens) or None
    return AddressComponents(
        block_number=block,
        street_name=street,
        postal_code=postal,
        state=state,
        country=country,
        raw=raw,
    )


RENDER_ORDER = ("block_number", "street_name", "state", "country", "postal_code")


def canonical_address_string(components: Optional[AddressComponents]) -> str:
    if components is None:
        return ""
    parts = (getattr(components, name) for name in RENDER_ORDER)
    return " ".join(p for p in parts if p)


@dataclass(frozen=True)
class SourceProfile:
    source_id: str
    field_paths: dict
    place_type_delimiter: Optional[str] = None
    # skip taxonomy mapping for sources already in the target taxonomy
    passthrough: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        missing = [f for f in MANDATORY_FIELDS if not self.field_paths.get(f)]
        if missing:
            raise ValueError(f"profile {self.source_id!r} lacks mandatory paths: {', '.join(missing)}")
        unknown = set(self.field_paths) - set(CANONICAL_FIELDS)
        if unknown:
            raise ValueError(f"profile {self.source_id!r} has unknown fields: {', '.join(sorted(unknown))}")


def load_profile(path) -> SourceProfile:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    try:
        return SourceProfile(
            source_id=doc["source_id"],
            field_paths=dict(doc.get("field_paths", {})),
            place_type_delimiter=doc.get("place_type_delimiter"),
            passthrough=bool(doc.get("passthrough", False)),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing key {exc}") from None


_MISSING = object()


def get_path(doc, path: str):
    """Resolve a dotted path ("properties.location.0") into nested dicts/lists."""
    cur = doc
    for part in path.split("."):
        if isinstance(cur, dict):
            cur = cur.get(part, _MISSING)
        elif isinstance(cur, (list, tuple)) and part.lstrip("-").isdigit():
            i = int(part)
            cur = cur[i] if -len(cur) <= i < len(cur) else _MISSING
        else:
            return _MISSING
        if cur is _MISSING or cur is None:
            return _MISSING
    return cur


def _split_types(value, delimiter: Optional[str]) -> list:
    if isinstance(value, str):
        parts = value.split(delimiter) if delimiter else [value]
    elif isinstance(value, (list, tuple)):
        parts = []
        for v in value:
            parts.extend(_split_types(v, delimiter))
        return parts
    else:
        parts = [str(value)]
    return [p.strip() for p in parts if p and p.strip()]


def _tags(value) -> list:
    if isinstance(value, dict):
        return [f"{k}:{v}" for k, v in sorted(value.items()) if v not in (None, "")]
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value if v not in (None, "")]
    return [str(value)] if value not in (None, "") else []


def standardize(record: RawRecord, profile: SourceProfile, extraction_date: dt.date) -> StandardPoi:
    if profile.source_id != record.source_id:
        raise ValueError(f"profile {profile.source_id!r} applied to record from {record.source_id!r}")
    rid = make_id(record.source_id, record.native_id)
    values = {}
    for name, path in profile.field_paths.items():
        v = get_path(record.payload, path)
        if v is not _MISSING and v != "":
            values[name] = v
    for name in MANDATORY_FIELDS:
        if name not in values:
            raise StandardizeError(rid, f"missing mandatory field {name!r} at {profile.field_paths[name]!r}")
    native = str(values["native_id"])
    rid = make_id(record.source_id, native)
    try:
        point = GeoPoint(float(values["lat"]), float(values["lon"]))
    except (TypeError, ValueError) as exc:
        raise StandardizeError(rid, f"bad coordinates: {exc}") from None
    date = extraction_date
    if "date" in values:
        try:
            date = dt.date.fromisoformat(str(values["date"])[:10])
        except ValueError:
            raise StandardizeError(rid, f"bad date {values['date']!r}") from None
    address = parse_address(str(values["address"])) if "address" in values else AddressComponents()
    place_types = _split_types(values["place_type"], profile.place_type_delimiter) if "place_type" in values else []
    return StandardPoi(
        id=rid,
        source=record.source_id,
        point=point,
        extraction_date=date,
        name=str(values["name"]) if "name" in values else None,
        address=address,
        place_types=frozenset(place_types),
        tags=frozenset(_tags(values.get("tags"))),
        requires_verification=False,
    )


def standardize_all(records: Iterable[RawRecord], profile: SourceProfile, extraction_date: dt.date):
    """Standardize every record; returns (pois, errors) with input order preserved."""
    pois, errors = [], []
    for rec in records:
        try:
            pois.append(standardize(rec, profile, extraction_date))
        except StandardizeError as exc:
            errors.append(exc)
    return pois, errors
