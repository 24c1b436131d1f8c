"""Candidate generation (radius filter) and lexical similarity features."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import AddressComponents, GeoPoint, StandardPoi
from .normalization import canonical_address_string

EARTH_RADIUS_M = 6_371_008.8
M_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    return _haversine(a.lat, a.lon, b.lat, b.lon)


def _haversine(lat1, lon1, lat2, lon2):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


class SpatialGridIndex:
    """Uniform lat/lon grid over a fixed set of POIs.

    Cells are ``cell_size_m`` tall; their longitude width uses the scale at the
    most poleward indexed latitude, so a cell is never narrower than
    ``cell_size_m`` anywhere in the dataset.
    """

    def __init__(self, pois: Sequence[StandardPoi], cell_size_m: float = 100.0):
        if cell_size_m <= 0:
            raise ValueError("cell_size_m must be positive")
        self.cell_size_m = cell_size_m
        self.pois = list(pois)
        self.by_id = {p.id: p for p in self.pois}
        if self.pois:
            lats = np.array([p.point.lat for p in self.pois])
            lons = np.array([p.point.lon for p in self.pois])
            self.origin = GeoPoint(float(lats.min()), float(lons.min()))
            max_abs_lat = float(np.abs(lats).max())
        else:
            self.origin = GeoPoint(0.0, 0.0)
            max_abs_lat = 0.0
        self.dlat = cell_size_m / M_PER_DEG
        self.dlon = cell_size_m / (M_PER_DEG * max(math.cos(math.radians(max_abs_lat)), 1e-6))
        self.cells: dict = {}
        for i, p in enumerate(self.pois):
            self.cells.setdefault(self._cell(p.point.lat, p.point.lon), []).append(i)

    def _cell(self, lat, lon):
        return (
            math.floor((lat - self.origin.lat) / self.dlat),
            math.floor((lon - self.origin.lon) / self.dlon),
        )

    def candidates(self, center: GeoPoint, radius_m: float) -> list:
        """Indices of POIs in every cell that may hold points within ``radius_m``."""
        ang = radius_m / EARTH_RADIUS_M
        dlat = math.degrees(ang)
        c = math.cos(math.radians(center.lat))
        if ang >= math.pi / 2 or c <= math.sin(ang):
            dlon = 180.0
        else:
            dlon = math.degrees(math.asin(math.sin(ang) / c))
        r0, c0 = self._cell(center.lat - dlat, center.lon - dlon)
        r1, c1 = self._cell(center.lat + dlat, center.lon + dlon)
        out = []
        for r in range(r0, r1 + 1):
            for col in range(c0, c1 + 1):
                out.extend(self.cells.get((r, col), ()))
        return out


def neighbors_within(
    index: SpatialGridIndex,
    centroid: StandardPoi,
    radius_m: float = 100.0,
    cross_source_only: bool = False,
) -> list:
    """POIs within ``radius_m`` (inclusive) of ``centroid``, sorted by (distance, id)."""
    found = []
    c = centroid.point
    for i in index.candidates(c, radius_m):
        p = index.pois[i]
        if p.id == centroid.id:
            continue
        if cross_source_only and p.source == centroid.source:
            continue
        d = _haversine(c.lat, c.lon, p.point.lat, p.point.lon)
        if d <= radius_m:
            found.append((d, p.id, p))
    found.sort(key=lambda t: (t[0], t[1]))
    return [p for _, _, p in found]


def tokenize(text: Optional[str]) -> list:
    if not text:
        return []
    return _TOKEN_RE.findall(text.lower())


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def token_sort_key(text: Optional[str]) -> str:
    return " ".join(sorted(tokenize(text)))


@lru_cache(maxsize=200_000)
def _sorted_ratio(a: str, b: str) -> float:
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return 1.0 - levenshtein(a, b) / max(len(a), len(b))


def name_similarity(a: Optional[str], b: Optional[str]) -> float:
    """Token-sort ratio scaled to [0, 1]: 1 - edit distance / longer length."""
    x, y = token_sort_key(a), token_sort_key(b)
    if y < x:
        x, y = y, x
    return _sorted_ratio(x, y)


@dataclass(frozen=True)
class TfIdfModel:
    vocabulary: dict
    idf: np.ndarray
    doc_count: int

    def vector(self, text_or_tokens) -> dict:
        """Sparse TF-IDF vector {index: weight}; out-of-vocabulary tokens are ignored."""
        tokens = tokenize(text_or_tokens) if isinstance(text_or_tokens, str) else list(text_or_tokens)
        if not tokens:
            return {}
        n = len(tokens)
        out = {}
        for tok, count in Counter(tokens).items():
            j = self.vocabulary.get(tok)
            if j is None:
                continue
            w = (count / n) * self.idf[j]
            if w != 0.0:
                out[j] = w
        return out

    def weight(self, token: str, text: str) -> float:
        return self.vector(text).get(self.vocabulary.get(token, -1), 0.0)


def fit_tfidf(corpus: Iterable) -> TfIdfModel:
    """Fit TF-IDF with idf(t) = ln(|D| / df(t)) and no smoothing.

    Documents are texts (tokenized here) or pre-tokenized sequences.
    """
    docs = [tokenize(d) if isinstance(d, str) or d is None else list(d) for d in corpus]
    if not docs:
        raise ValueError("empty corpus")
    df: Counter = Counter()
    for toks in docs:
        df.update(set(toks))
    if not df:
        raise ValueError("corpus has no tokens")
    vocab = {t: i for i, t in enumerate(sorted(df))}
    n = len(docs)
    idf = np.array([math.log(n / df[t]) for t in sorted(df)])
    return TfIdfModel(vocab, idf, n)


def sparse_cosine(u: dict, v: dict) -> float:
    if not u or not v:
        return 0.0
    # sorted keys keep the sum order, and so the result, symmetric
    dot = sum(u[j] * v[j] for j in sorted(u.keys() & v.keys()))
    if dot == 0.0:
        return 0.0
    nu = math.sqrt(sum(w * w for w in u.values()))
    nv = math.sqrt(sum(w * w for w in v.values()))
    return min(1.0, max(0.0, dot / (nu * nv)))


def tfidf_similarity(model: TfIdfModel, a: Optional[str], b: Optional[str]) -> float:
    return sparse_cosine(model.vector(a or ""), model.vector(b or ""))


def address_text(address: Optional[AddressComponents]) -> str:
    return canonical_address_string(address) if address is not None else ""


def address_similarity(model: TfIdfModel, a: Optional[AddressComponents], b: Optional[AddressComponents]) -> float:
    return tfidf_similarity(model, address_text(a), address_text(b))
