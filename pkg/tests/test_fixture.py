import pytest

from poiconflate.fixture import (
    FixtureConfig,
    build_fixture,
    generate_fixture,
    synthetic_embeddings,
    target_taxonomy,
    write_fixture_dir,
)
from poiconflate.model import validate_dataset
from poiconflate.similarity import haversine_m
from poiconflate.taxonomy import EmbeddingStore, TaxonomyMapper


def test_same_seed_same_corpus():
    a = generate_fixture(seed=3, n_pois=300)
    b = generate_fixture(seed=3, n_pois=300)
    assert a == b
    assert generate_fixture(seed=4, n_pois=300)[0] != a[0]


def test_fixture_is_valid_and_sized(small_fixture):
    assert len(small_fixture.pois) == 400
    assert validate_dataset(small_fixture.pois) == []


@pytest.mark.parametrize("seed", [0, 1])
def test_accuracy_regime_match_rate(seed):
    _, pairs = generate_fixture(seed=seed)
    rate = sum(lab == "match" for _, _, lab in pairs) / len(pairs)
    assert 0.013 <= rate <= 0.033


def test_tiny_duplicate_rate_has_no_matches():
    _, pairs = generate_fixture(seed=0, n_pois=400, duplicate_rate=1e-6)
    assert not [p for p in pairs if p[2] == "match"]


@pytest.mark.parametrize("rate", [0.0, 1.0])
def test_duplicate_rate_is_open_interval(rate):
    with pytest.raises(ValueError):
        FixtureConfig(duplicate_rate=rate)


def test_pairs_are_cross_source_and_within_radius(small_fixture):
    by_id = {p.id: p for p in small_fixture.pois}
    for a, b, _ in small_fixture.pairs:
        assert a < b and by_id[a].source != by_id[b].source
        assert haversine_m(by_id[a].point, by_id[b].point) <= 100.0


def test_duplicates_stay_within_jitter_and_sources_differ(small_fixture):
    groups: dict = {}
    for p in small_fixture.pois:
        groups.setdefault(small_fixture.entity_of[p.id], []).append(p)
    dup_groups = [g for g in groups.values() if len(g) > 1]
    assert dup_groups
    for g in dup_groups:
        assert len({p.source for p in g}) == len(g)
        # one member sits on the entity location, the rest within 100 m of it
        assert any(all(haversine_m(c.point, q.point) <= 100.0 + 1e-6 for q in g) for c in g)


def test_every_target_label_vectorizes():
    vecs = synthetic_embeddings()
    mapper = TaxonomyMapper(target_taxonomy(), EmbeddingStore(48, vecs))
    assert len(mapper.targets) == len(target_taxonomy())


def test_write_fixture_dir(tmp_path, small_fixture):
    paths = write_fixture_dir(small_fixture, tmp_path)
    for name in ("raw/osm.ndjson", "profiles/osm.toml", "taxonomy.txt", "embeddings.vec", "labels.csv", "ranking.toml", "study_area.geojson"):
        assert (tmp_path / name).exists(), name
    assert paths["pipeline"].read_text().startswith("seed = 11")
    assert "[procure]" in paths["pipeline_procure"].read_text()


def test_single_source_has_no_pairs():
    fx = build_fixture(FixtureConfig(seed=0, n_pois=200, n_sources=1))
    assert fx.pairs == []
