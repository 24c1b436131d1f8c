import datetime as dt

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_poi
from poiconflate.matcher import FeaturePair
from poiconflate.model import DEFAULT_RANKING, BBox, GeoPoint, UnifiedPoi
from poiconflate.normalization import canonical_address_string
from poiconflate.unification import MatchCluster, cluster_matches, merge_cluster, unify_dataset


def _merge(*members, strict=False):
    return merge_cluster(MatchCluster(tuple(m.id for m in members)), {m.id: m for m in members}, DEFAULT_RANKING, strict)


def _case_centroid_of_best_ranked():
    u = _merge(make_poi("onemap", "1", 1.0, 103.0), make_poi("onemap", "2", 1.002, 103.0), make_poi("osm", "3", 1.5, 103.5))
    return u.point.lat == pytest.approx(1.001, abs=1e-12) and u.point.lon == pytest.approx(103.0, abs=1e-12)


def _case_single_best_location():
    u = _merge(make_poi("here", "1", 1.2, 103.2), make_poi("sla", "2", 1.1, 103.1))
    return (u.point.lat, u.point.lon) == (1.1, 103.1)


def _case_largest_bound():
    u = _merge(
        make_poi("onemap", "1", 1.30, 103.80, bound=(1.29, 103.79, 1.31, 103.81)),
        make_poi("osm", "2", 1.33, 103.78),
    )
    return u.bound == BBox(1.29, 103.78, 1.33, 103.81)


def _case_authority_beats_length():
    u = _merge(make_poi("onemap", "1", name="x"), make_poi("osm", "2", name="xxxx"))
    return u.name == "x"


def _case_longest_name_among_best():
    u = _merge(make_poi("google", "1", name="cafe"), make_poi("google", "2", name="cafe bar"), make_poi("osm", "3", name="cafe bar and grill"))
    return u.name == "cafe bar"


def _case_name_tie_lexicographic():
    u = _merge(make_poi("sla", "2", name="abd"), make_poi("sla", "1", name="abc"))
    return u.name == "abc"


def _case_missing_name_falls_through_unless_strict():
    members = (make_poi("onemap", "1"), make_poi("here", "2", name="bayfront mall"))
    return _merge(*members).name == "bayfront mall" and _merge(*members, strict=True).name is None


def _case_longest_address_among_best():
    u = _merge(
        make_poi("onemap", "1", address="10 Simei Street 1"),
        make_poi("onemap", "2", address="10 Simei Street 1 Singapore 529941"),
        make_poi("osm", "3", address="Blk 10 Simei Street 1 #01-02 Singapore 529941 East"),
    )
    return canonical_address_string(u.address) == "10 simei street 1 singapore 529941"


def _case_union_types_tags_ids():
    u = _merge(
        make_poi("onemap", "1", place_types=["cafe"], tags=["wifi:yes"]),
        make_poi("osm", "2", place_types=["bakery", "cafe"], tags=["opening_hours:24/7"]),
    )
    return (
        u.place_types == {"cafe", "bakery"}
        and u.tags == {"wifi:yes", "opening_hours:24/7"}
        and u.contributing_ids == {"onemap:1", "osm:2"}
        and u.contributing_sources == {"onemap", "osm"}
        and len(u.contributing_points) == 2
    )


def _case_latest_date():
    u = _merge(make_poi("onemap", "1", date="2020-01-05"), make_poi("osm", "2", date="2021-07-30"), make_poi("here", "3", date="2019-12-31"))
    return u.extraction_date == dt.date(2021, 7, 30)


def _case_verification_or():
    u = _merge(make_poi("onemap", "1", place_types=["cafe"]), make_poi("osm", "2", place_types=["cafe"], flagged=True))
    clean = _merge(make_poi("onemap", "1", place_types=["cafe"]), make_poi("osm", "2", place_types=["cafe"]))
    return u.requires_verification and not clean.requires_verification


def _case_no_types_flags():
    u = _merge(make_poi("onemap", "1", name="a"), make_poi("osm", "2", name="a"))
    return u.requires_verification and u.place_types == frozenset()


RULE_CASES = [
    ("centroid of best-ranked members", _case_centroid_of_best_ranked),
    ("single best-ranked location", _case_single_best_location),
    ("largest bound", _case_largest_bound),
    ("authority beats length", _case_authority_beats_length),
    ("longest name among best-ranked", _case_longest_name_among_best),
    ("equal-length names tie lexicographically", _case_name_tie_lexicographic),
    ("missing name falls through unless strict", _case_missing_name_falls_through_unless_strict),
    ("longest address among best-ranked", _case_longest_address_among_best),
    ("set unions", _case_union_types_tags_ids),
    ("latest extraction date", _case_latest_date),
    ("verification flag is OR", _case_verification_or),
    ("empty merged types flag", _case_no_types_flags),
]


def failing_rule_cases() -> list:
    return [name for name, case in RULE_CASES if not case()]


@pytest.mark.parametrize("name, case", RULE_CASES, ids=[n for n, _ in RULE_CASES])
def test_rule_case(name, case):
    assert case()


def test_clusters_examples():
    assert [c.member_ids for c in cluster_matches([("a", "b")], ["a", "b", "c"])] == [("a", "b"), ("c",)]
    assert [c.member_ids for c in cluster_matches([("b", "c"), ("a", "b")])] == [("a", "b", "c")]
    assert len(cluster_matches([], ["a", "b"])) == 2
    with pytest.raises(KeyError):
        cluster_matches([("a", "zz")], ["a"])


def test_non_match_pairs_ignored():
    pairs = [FeaturePair("a", "b", 0.1, 0.1, "non_match"), FeaturePair("b", "c", 0.9, 0.9, "match")]
    assert [c.member_ids for c in cluster_matches(pairs, ["a", "b", "c"])] == [("a",), ("b", "c")]


def test_single_member_is_identity_plus_provenance():
    p = make_poi("here", "1", name="Cafe", address="10 Simei Street 1", place_types=["cafe"], tags=["t:1"])
    assert _merge(p) == UnifiedPoi.from_poi(p)


def test_three_member_cluster_among_ten():
    pois = [make_poi("osm", str(i), 1.3 + i * 1e-3, 103.8, place_types=["x"]) for i in range(10)]
    out = unify_dataset(pois, [("osm:1", "osm:2"), ("osm:3", "osm:2")], DEFAULT_RANKING)
    assert len(out) == 8
    assert [u.id for u in out] == sorted(u.id for u in out)


def unification_identities(pois, pairs) -> tuple:
    """(count identity holds, idempotent, every id kept exactly once)."""
    ids = [p.id for p in pois]
    out = unify_dataset(pois, pairs, DEFAULT_RANKING)
    clusters = cluster_matches(pairs, ids)
    count_ok = len(out) == len(pois) - sum(len(c) - 1 for c in clusters)
    again = unify_dataset(out, [], DEFAULT_RANKING)
    members = sorted(i for u in out for i in u.contributing_ids)
    return count_ok, again == out, members == sorted(ids)


def test_identities_on_fixture(small_fixture):
    assert unification_identities(small_fixture.pois, small_fixture.match_pairs) == (True, True, True)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 25), st.data())
def test_identities_on_random_graphs(n, data):
    sources = ["onemap", "sla", "google", "here", "osm"]
    pois = [
        make_poi(sources[i % 5], str(i), 1.3 + i * 1e-4, 103.8, name="n" * (1 + i % 4), place_types=["a"] if i % 3 else [])
        for i in range(n)
    ]
    edges = data.draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=2 * n))
    pairs = [(pois[a].id, pois[b].id) for a, b in edges if a != b]
    assert unification_identities(pois, pairs) == (True, True, True)
    for u in unify_dataset(pois, pairs, DEFAULT_RANKING):
        # merged name comes from a member of the best-ranked source present
        best = min((DEFAULT_RANKING.sort_key(s) for s in u.contributing_sources))
        named = [p.name for p in pois if p.id in u.contributing_ids and DEFAULT_RANKING.sort_key(p.source) == best]
        assert u.name in named
        if u.bound is not None:
            assert all(u.bound.contains(GeoPoint(lat, lon)) for _, lat, lon in u.contributing_points)


def test_no_matches_keeps_count(small_fixture):
    assert len(unify_dataset(small_fixture.pois, [], DEFAULT_RANKING)) == len(small_fixture.pois)


def test_duplicate_input_ids_rejected():
    p = make_poi()
    with pytest.raises(ValueError):
        unify_dataset([p, p], [], DEFAULT_RANKING)
