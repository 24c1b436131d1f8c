"""Variable bounding-box fetching from result-capped paged sources."""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
import urllib.parse
import urllib.request
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Protocol

from shapely.geometry import box, shape
from shapely.geometry.base import BaseGeometry

from .model import GeoPoint

log = logging.getLogger(__name__)

M_PER_DEG_LAT = 111_320.0
MAX_DEPTH = 30


class ProcurementError(RuntimeError):
    pass


class TruncationWarning(UserWarning):
    """A tile hit the result cap but is too small to subdivide."""


@dataclass(frozen=True)
class RawRecord:
    source_id: str
    native_id: str
    payload: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if not self.native_id:
            raise ValueError("native_id must be non-empty")


@dataclass(frozen=True)
class PagedSourceConfig:
    source_id: str
    page_size: int = 20
    max_results_per_query: int = 60
    base_url: Optional[str] = None
    api_key_env: Optional[str] = None
    path: Optional[str] = None
    requests_per_second: Optional[float] = None

    def __post_init__(self):
        if self.page_size <= 0 or self.max_results_per_query <= 0:
            raise ValueError("page_size and max_results_per_query must be positive")
        if self.page_size > self.max_results_per_query:
            raise ValueError("page_size must not exceed max_results_per_query")


@dataclass(frozen=True)
class Tile:
    southwest: GeoPoint
    width_m: float
    height_m: float
    depth: int = 0
    # latitude whose scale converts east-west meters to degrees; inherited by
    # children so that they partition their parent exactly
    ref_lat: Optional[float] = None

    def __post_init__(self):
        if not (self.width_m > 0 and self.height_m > 0):
            raise ValueError("tile dimensions must be positive")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if self.ref_lat is None:
            object.__setattr__(self, "ref_lat", self.southwest.lat)

    @property
    def deg_height(self) -> float:
        return self.height_m / M_PER_DEG_LAT

    @property
    def deg_width(self) -> float:
        return self.width_m / (M_PER_DEG_LAT * math.cos(math.radians(self.ref_lat)))

    def bounds(self) -> tuple:
        """(south, west, north, east) in degrees; the tile is [south, north) x [west, east)."""
        s, w = self.southwest.lat, self.southwest.lon
        return (s, w, s + self.deg_height, w + self.deg_width)

    def children(self) -> list:
        """SW, SE, NW, NE quarters."""
        w2, h2 = self.width_m / 2, self.height_m / 2
        s, w = self.southwest.lat, self.southwest.lon
        mid_lat = s + h2 / M_PER_DEG_LAT
        mid_lon = w + w2 / (M_PER_DEG_LAT * math.cos(math.radians(self.ref_lat)))
        corners = [(s, w), (s, mid_lon), (mid_lat, w), (mid_lat, mid_lon)]
        return [Tile(GeoPoint(a, b), w2, h2, self.depth + 1, self.ref_lat) for a, b in corners]

    def label(self) -> str:
        s, w, n, e = self.bounds()
        return f"tile[d={self.depth} s={s:.6f} w={w:.6f} n={n:.6f} e={e:.6f}]"


class PagedSource(Protocol):
    def query(self, rect: tuple, offset: int) -> tuple:
        """Return (records, capped) for one page of records inside ``rect``.

        ``capped`` is true when more records exist in ``rect`` than the
        source will ever return for a single query.
        """


def _as_geometry(study_area) -> BaseGeometry:
    if isinstance(study_area, BaseGeometry):
        geom = study_area
    elif isinstance(study_area, dict):
        if study_area.get("type") == "FeatureCollection":
            geoms = [shape(f["geometry"]) for f in study_area["features"]]
            geom = geoms[0]
            for g in geoms[1:]:
                geom = geom.union(g)
        elif study_area.get("type") == "Feature":
            geom = shape(study_area["geometry"])
        else:
            geom = shape(study_area)
    else:
        from shapely.geometry import Polygon

        geom = Polygon(study_area)
    if geom.is_empty or geom.area <= 0:
        raise ValueError("study area polygon is empty or degenerate")
    return geom


def plan_initial_grid(study_area, width_m: float, height_m: float) -> list:
    """Grid the polygon's bounding box into ``width_m`` x ``height_m`` tiles.

    Coordinates are (lon, lat) as in GeoJSON. Tiles are full size (the last
    row and column may overhang the box) and returned row-major from the
    south-west corner. Tiles not overlapping the polygon's interior are dropped.
    """
    if width_m <= 0 or height_m <= 0:
        raise ValueError("tile dimensions must be positive")
    geom = _as_geometry(study_area)
    west, south, east, north = geom.bounds
    ref = south
    span_x = (east - west) * M_PER_DEG_LAT * math.cos(math.radians(ref))
    span_y = (north - south) * M_PER_DEG_LAT
    ncols = max(1, math.ceil(span_x / width_m - 1e-9))
    nrows = max(1, math.ceil(span_y / height_m - 1e-9))
    dlon = width_m / (M_PER_DEG_LAT * math.cos(math.radians(ref)))
    dlat = height_m / M_PER_DEG_LAT
    tiles = []
    for r in range(nrows):
        for c in range(ncols):
            tile = Tile(GeoPoint(south + r * dlat, west + c * dlon), width_m, height_m, 0, ref)
            s, w, n, e = tile.bounds()
            if box(w, s, e, n).relate_pattern(geom, "T********"):
                tiles.append(tile)
    return tiles


def _query_tile(source: PagedSource, rect: tuple, config: PagedSourceConfig) -> tuple:
    records = []
    capped = False
    offset = 0
    while offset < config.max_results_per_query:
        page, page_capped = source.query(rect, offset)
        capped = capped or bool(page_capped)
        records.extend(page)
        if len(page) < config.page_size:
            break
        offset += config.page_size
    return records[: config.max_results_per_query], capped


def fetch_recursive(tile: Tile, source: PagedSource, config: PagedSourceConfig, min_dim_m: float = 25.0) -> list:
    """Fetch every record in ``tile``, quartering it while the source is capped.

    Emits ``TruncationWarning`` when a capped tile cannot be halved without
    going below ``min_dim_m``.
    """
    if tile.depth > MAX_DEPTH:
        raise ProcurementError(f"{tile.label()}: recursion depth exceeds {MAX_DEPTH}")
    try:
        records, capped = _query_tile(source, tile.bounds(), config)
    except ProcurementError:
        raise
    except Exception as exc:
        raise ProcurementError(f"{tile.label()}: {exc}") from exc
    if not capped:
        return records
    if tile.width_m / 2 >= min_dim_m and tile.height_m / 2 >= min_dim_m:
        out = []
        for child in tile.children():
            out.extend(fetch_recursive(child, source, config, min_dim_m))
        return out
    msg = f"{tile.label()}: result cap {config.max_results_per_query} hit below minimum dimension {min_dim_m} m"
    log.warning(msg)
    warnings.warn(msg, TruncationWarning, stacklevel=2)
    return records


def fetch_area(tiles, source: PagedSource, config: PagedSourceConfig, min_dim_m: float = 25.0, max_workers: int = 1) -> list:
    """Fetch all tiles, concatenating results in tile order."""
    tiles = list(tiles)
    if max_workers <= 1:
        results = [fetch_recursive(t, source, config, min_dim_m) for t in tiles]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(lambda t: fetch_recursive(t, source, config, min_dim_m), tiles))
    return [r for chunk in results for r in chunk]


def dedupe_by_id(records) -> list:
    seen = set()
    out = []
    for rec in records:
        key = (rec.source_id, rec.native_id)
        if key not in seen:
            seen.add(key)
            out.append(rec)
    return out


def _feature_record(source_id: str, feature: dict) -> RawRecord:
    props = feature.get("properties") or {}
    native = props.get("native_id", feature.get("id"))
    if native in (None, ""):
        raise ValueError("feature without native_id")
    return RawRecord(source_id, str(native), feature)


class FileSource:
    """Paged source over newline-delimited GeoJSON features.

    Each feature carries ``native_id``, ``lat`` and ``lon`` in its properties.
    """

    def __init__(self, features, config: PagedSourceConfig):
        self.config = config
        self.records = []
        self.coords = []
        for feat in features:
            props = feat.get("properties") or {}
            self.records.append(_feature_record(config.source_id, feat))
            self.coords.append((float(props["lat"]), float(props["lon"])))
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_path(cls, path, config: PagedSourceConfig) -> "FileSource":
        feats = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    feats.append(json.loads(line))
        return cls(feats, config)

    def inside(self, rect: tuple) -> list:
        s, w, n, e = rect
        return [r for r, (lat, lon) in zip(self.records, self.coords) if s <= lat < n and w <= lon < e]

    def query(self, rect: tuple, offset: int) -> tuple:
        with self._lock:
            self.calls += 1
        hits = self.inside(rect)
        cap = self.config.max_results_per_query
        visible = hits[:cap]
        return visible[offset : offset + self.config.page_size], len(hits) > cap


class HttpSource:
    """Generic JSON paged endpoint: GET {base_url}?bbox=s,w,n,e&offset=k.

    The response must be ``{"features": [...], "capped": bool}``; features are
    kept as raw payloads. Failed pages are retried with exponential backoff.
    """

    def __init__(self, config: PagedSourceConfig, retries: int = 3, backoff_s: float = 0.5, timeout_s: float = 30.0, opener=None):
        if not config.base_url:
            raise ValueError("HttpSource needs base_url")
        self.config = config
        self.retries = retries
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self._open = opener or urllib.request.urlopen
        self._lock = threading.Lock()
        self._last = 0.0
        self.api_key = os.environ.get(config.api_key_env) if config.api_key_env else None

    def _throttle(self):
        rps = self.config.requests_per_second
        if not rps:
            return
        with self._lock:
            wait = self._last + 1.0 / rps - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last = time.monotonic()

    def url(self, rect: tuple, offset: int) -> str:
        s, w, n, e = rect
        qs = urllib.parse.urlencode({"bbox": f"{s},{w},{n},{e}", "offset": offset})
        return f"{self.config.base_url}?{qs}"

    def query(self, rect: tuple, offset: int) -> tuple:
        req = urllib.request.Request(self.url(rect, offset))
        if self.api_key:
            req.add_header("X-Api-Key", self.api_key)
        delay = self.backoff_s
        for attempt in range(self.retries + 1):
            self._throttle()
            try:
                with self._open(req, timeout=self.timeout_s) as resp:
                    doc = json.loads(resp.read().decode("utf-8"))
                break
            except (OSError, ValueError) as exc:
                if attempt == self.retries:
                    raise ProcurementError(f"{req.full_url}: {exc}") from exc
                log.info("retrying %s after %s", req.full_url, exc)
                time.sleep(delay)
                delay *= 2
        feats = doc.get("features", [])
        return [_feature_record(self.config.source_id, f) for f in feats], bool(doc.get("capped", False))


def source_from_config(config: PagedSourceConfig):
    if config.path:
        return FileSource.from_path(config.path, config)
    if config.base_url:
        return HttpSource(config)
    raise ValueError(f"source {config.source_id!r} needs either path or base_url")
