"""Canonical record types shared by every pipeline stage."""

from __future__ import annotations

import datetime as dt
import math
import unicodedata
from dataclasses import dataclass, field, fields
from typing import Iterable, Optional


def normalize_text(value: Optional[str]) -> Optional[str]:
    """NFC-normalize, lowercase and strip; empty results become None."""
    if value is None:
        return None
    text = unicodedata.normalize("NFC", unicodedata.normalize("NFC", value).lower()).strip()
    return text or None


def _label_set(values: Iterable[str]) -> frozenset:
    out = set()
    for v in values:
        t = normalize_text(v)
        if t:
            out.add(t)
    return frozenset(out)


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        lat, lon = float(self.lat), float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError(f"non-finite coordinate ({lat}, {lon})")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"lat {lat} out of range")
        if not -180.0 <= lon <= 180.0:
            raise ValueError(f"lon {lon} out of range")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)

    @classmethod
    def unchecked(cls, lat: float, lon: float) -> "GeoPoint":
        """Build without range checks, for untrusted input that is validated afterwards."""
        point = object.__new__(cls)
        object.__setattr__(point, "lat", float(lat))
        object.__setattr__(point, "lon", float(lon))
        return point


@dataclass(frozen=True)
class BBox:
    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float

    def contains(self, p: GeoPoint) -> bool:
        return self.min_lat <= p.lat <= self.max_lat and self.min_lon <= p.lon <= self.max_lon

    def union(self, other: "BBox") -> "BBox":
        return BBox(
            min(self.min_lat, other.min_lat),
            min(self.min_lon, other.min_lon),
            max(self.max_lat, other.max_lat),
            max(self.max_lon, other.max_lon),
        )

    @classmethod
    def around(cls, p: GeoPoint) -> "BBox":
        return cls(p.lat, p.lon, p.lat, p.lon)


@dataclass(frozen=True)
class AddressComponents:
    block_number: Optional[str] = None
    street_name: Optional[str] = None
    unit: Optional[str] = None
    postal_code: Optional[str] = None
    state: Optional[str] = None
    country: Optional[str] = None
    # kept verbatim; every other field is normalized
    raw: str = ""

    COMPONENTS = ("block_number", "street_name", "unit", "postal_code", "state", "country")

    def __post_init__(self):
        for name in self.COMPONENTS:
            object.__setattr__(self, name, normalize_text(getattr(self, name)))

    def components(self) -> dict:
        return {name: getattr(self, name) for name in self.COMPONENTS}

    def is_empty(self) -> bool:
        return all(v is None for v in self.components().values())


@dataclass(frozen=True)
class StandardPoi:
    id: str
    source: str
    point: GeoPoint
    extraction_date: dt.date
    name: Optional[str] = None
    address: Optional[AddressComponents] = None
    bound: Optional[BBox] = None
    place_types: frozenset = frozenset()
    tags: frozenset = frozenset()
    requires_verification: bool = False
    # source labels the taxonomy step could not map; cleared by verification
    unmapped_types: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "name", normalize_text(self.name))
        object.__setattr__(self, "place_types", _label_set(self.place_types))
        object.__setattr__(self, "unmapped_types", _label_set(self.unmapped_types))
        object.__setattr__(self, "tags", frozenset(t.strip() for t in self.tags if t and t.strip()))
        if isinstance(self.extraction_date, str):
            object.__setattr__(self, "extraction_date", dt.date.fromisoformat(self.extraction_date))

    @property
    def native_id(self) -> str:
        return self.id.split(":", 1)[1] if ":" in self.id else self.id

    @property
    def contributing_ids(self) -> frozenset:
        return frozenset([self.id])

    @property
    def contributing_sources(self) -> frozenset:
        return frozenset([self.source])

    @property
    def contributing_points(self) -> tuple:
        return ((self.id, self.point.lat, self.point.lon),)


@dataclass(frozen=True)
class UnifiedPoi(StandardPoi):
    """A merged cluster; ``contributing_points`` keeps every member location."""

    contributing_ids: frozenset = field(default=frozenset())
    contributing_sources: frozenset = field(default=frozenset())
    contributing_points: tuple = ()

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "contributing_ids", frozenset(self.contributing_ids))
        object.__setattr__(self, "contributing_sources", frozenset(self.contributing_sources))
        object.__setattr__(
            self,
            "contributing_points",
            tuple(sorted((str(i), float(a), float(b)) for i, a, b in self.contributing_points)),
        )

    @classmethod
    def from_poi(cls, poi: StandardPoi, **changes) -> "UnifiedPoi":
        base = {f.name: getattr(poi, f.name) for f in fields(StandardPoi)}
        base.update(
            contributing_ids=poi.contributing_ids,
            contributing_sources=poi.contributing_sources,
            contributing_points=poi.contributing_points,
        )
        base.update(changes)
        return cls(**base)


def make_id(source: str, native_id: str) -> str:
    return f"{source}:{native_id}"


def validate_poi(poi: StandardPoi) -> list:
    """Return one message per broken invariant; never raises."""
    problems = []
    p = poi.point
    if not math.isfinite(p.lat) or not -90.0 <= p.lat <= 90.0:
        problems.append("point.lat out of range")
    if not math.isfinite(p.lon) or not -180.0 <= p.lon <= 180.0:
        problems.append("point.lon out of range")
    if poi.bound is not None:
        b = poi.bound
        if b.min_lat > b.max_lat or b.min_lon > b.max_lon:
            problems.append("bound is inverted")
        if not b.contains(p):
            problems.append("point outside bound")
    if not poi.id:
        problems.append("id is empty")
    elif not poi.id.startswith(poi.source + ":"):
        problems.append("id is not prefixed with source")
    for label in poi.place_types:
        if label != label.strip().lower():
            problems.append(f"place_types entry {label!r} not normalized")
    addr = poi.address
    if addr is not None:
        if not addr.is_empty() and not addr.raw:
            problems.append("address.raw empty while components set")
        for name, value in addr.components().items():
            if value is not None and (value != value.strip() or value != value.lower()):
                problems.append(f"address.{name} not normalized")
    if not isinstance(poi.extraction_date, dt.date) or isinstance(poi.extraction_date, dt.datetime):
        problems.append("extraction_date is not a calendar date")
    return problems


def validate_dataset(pois: Iterable[StandardPoi]) -> list:
    problems = []
    seen = set()
    for poi in pois:
        if poi.id in seen:
            problems.append(f"{poi.id}: duplicate id")
        seen.add(poi.id)
        problems.extend(f"{poi.id}: {msg}" for msg in validate_poi(poi))
    return problems


class SourceRanking:
    """Source authority order, most authoritative first."""

    def __init__(self, sources: Iterable[str]):
        self.sources = tuple(sources)
        if len(set(self.sources)) != len(self.sources):
            raise ValueError("duplicate source in ranking")
        self._index = {s: i for i, s in enumerate(self.sources)}

    def __repr__(self):
        return f"SourceRanking({list(self.sources)!r})"

    def sort_key(self, source: str) -> tuple:
        # listed sources by position, unlisted ones after them by name
        i = self._index.get(source)
        return (i, "") if i is not None else (len(self.sources), source)

    def rank(self, source: str, universe: Iterable[str] = ()) -> int:
        return source_rank(source, self, universe)


DEFAULT_RANKING = SourceRanking(["onemap", "sla", "google", "here", "osm"])


def source_rank(source: str, ranking: SourceRanking, universe: Iterable[str] = ()) -> int:
    """Integer rank of ``source``; 0 is most authoritative.

    Unlisted sources rank after every listed one, ordered lexicographically
    among the unlisted members of ``universe`` (plus ``source`` itself).
    """
    i = ranking._index.get(source)
    if i is not None:
        return i
    unlisted = sorted({s for s in universe if s not in ranking._index} | {source})
    return len(ranking.sources) + unlisted.index(source)
