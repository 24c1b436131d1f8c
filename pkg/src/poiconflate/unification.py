"""Cluster decided matches and merge each cluster into one unified record."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .model import BBox, GeoPoint, SourceRanking, StandardPoi, UnifiedPoi
from .normalization import canonical_address_string


@dataclass(frozen=True)
class MatchCluster:
    member_ids: tuple

    def __post_init__(self):
        if not self.member_ids:
            raise ValueError("cluster must have at least one member")
        object.__setattr__(self, "member_ids", tuple(sorted(set(self.member_ids))))

    def __len__(self) -> int:
        return len(self.member_ids)


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller id becomes the root so results do not depend on pair order
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def _pair_ids(pair) -> tuple:
    if hasattr(pair, "pair"):
        pair = pair.pair
    if hasattr(pair, "id_a"):
        return pair.id_a, pair.id_b
    a, b = pair
    return a, b


def _is_match(pair) -> bool:
    if hasattr(pair, "pair"):
        pair = pair.pair
    label = getattr(pair, "label", "match")
    return label in (None, "match")


def cluster_matches(pairs: Iterable, ids: Optional[Iterable[str]] = None) -> list:
    """Connected components of the match graph, sorted by first member.

    ``pairs`` holds (id_a, id_b) tuples or FeaturePair-like objects; pairs
    labeled non-match are ignored. With ``ids`` given, unmatched POIs become
    singletons and unknown ids raise KeyError.
    """
    pairs = [p for p in pairs if _is_match(p)]
    if ids is None:
        universe = sorted({i for p in pairs for i in _pair_ids(p)})
    else:
        universe = sorted(set(ids))
    uf = _UnionFind(universe)
    for p in pairs:
        a, b = _pair_ids(p)
        for x in (a, b):
            if x not in uf.parent:
                raise KeyError(f"pair references unknown POI id {x!r}")
        uf.union(a, b)
    groups: dict = {}
    for x in universe:
        groups.setdefault(uf.find(x), []).append(x)
    return sorted((MatchCluster(tuple(m)) for m in groups.values()), key=lambda c: c.member_ids[0])


def _longest(values: Iterable[str]) -> Optional[str]:
    values = [v for v in values if v]
    if not values:
        return None
    return min(values, key=lambda v: (-len(v), v))


def _rank_groups(members: Sequence[StandardPoi], ranking: SourceRanking) -> list:
    """Members grouped by source rank, best group first."""
    groups: dict = {}
    for m in members:
        groups.setdefault(ranking.sort_key(m.source), []).append(m)
    return [groups[k] for k in sorted(groups)]


def _pick_text(groups: list, getter, strict: bool):
    for group in groups:
        value = _longest(getter(m) for m in group)
        if value is not None or strict:
            return value
    return None


def _pick_address(groups: list, strict: bool):
    for group in groups:
        rendered = {}
        for m in group:
            if m.address is not None and not m.address.is_empty():
                rendered.setdefault(canonical_address_string(m.address), m.address)
        best = _longest(rendered)
        if best is not None:
            return rendered[best]
        if strict:
            return None
    return None


def merge_cluster(cluster: MatchCluster, pois: Mapping[str, StandardPoi], ranking: SourceRanking, strict_authority: bool = False) -> UnifiedPoi:
    """Merge one cluster.

    Location, name and address come from the best-ranked source present. If
    none of those members has a name (or address) the next rank group is
    consulted, unless ``strict_authority`` is set.
    """
    members = [pois[i] for i in cluster.member_ids]
    groups = _rank_groups(members, ranking)
    best = groups[0]
    lat = sum(m.point.lat for m in best) / len(best)
    lon = sum(m.point.lon for m in best) / len(best)

    bound = None
    if len(members) > 1 or members[0].bound is not None:
        for m in members:
            box = m.bound.union(BBox.around(m.point)) if m.bound is not None else BBox.around(m.point)
            bound = box if bound is None else bound.union(box)

    place_types = frozenset().union(*(m.place_types for m in members))
    head = min(best, key=lambda m: m.id)
    return UnifiedPoi(
        id=head.id,
        source=head.source,
        point=GeoPoint(lat, lon),
        extraction_date=max(m.extraction_date for m in members),
        name=_pick_text(groups, lambda m: m.name, strict_authority),
        address=_pick_address(groups, strict_authority),
        bound=bound,
        place_types=place_types,
        tags=frozenset().union(*(m.tags for m in members)),
        requires_verification=any(m.requires_verification for m in members) or not place_types,
        unmapped_types=frozenset().union(*(m.unmapped_types for m in members)),
        contributing_ids=frozenset().union(*(m.contributing_ids for m in members)),
        contributing_sources=frozenset().union(*(m.contributing_sources for m in members)),
        contributing_points=tuple(pt for m in members for pt in m.contributing_points),
    )


def unify_dataset(pois: Sequence[StandardPoi], pairs: Iterable, ranking: SourceRanking, strict_authority: bool = False) -> list:
    by_id = {}
    for p in pois:
        if p.id in by_id:
            raise ValueError(f"duplicate POI id {p.id!r}")
        by_id[p.id] = p
    clusters = cluster_matches(pairs, by_id)
    out = [merge_cluster(c, by_id, ranking, strict_authority) for c in clusters]
    out.sort(key=lambda u: u.id)
    return out
