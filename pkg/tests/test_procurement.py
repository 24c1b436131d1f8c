import io
import json
import math
import warnings

import numpy as np
import pytest

import oracles
from poiconflate.model import GeoPoint
from poiconflate.procurement import (
    M_PER_DEG_LAT,
    FileSource,
    HttpSource,
    PagedSourceConfig,
    ProcurementError,
    RawRecord,
    Tile,
    TruncationWarning,
    dedupe_by_id,
    fetch_area,
    fetch_recursive,
    plan_initial_grid,
)

CFG = PagedSourceConfig("t", page_size=20, max_results_per_query=60)
LAT0, LON0 = 1.30, 103.80


def _square(side_m, lat=LAT0, lon=LON0):
    dlat = side_m / M_PER_DEG_LAT
    dlon = side_m / (M_PER_DEG_LAT * math.cos(math.radians(lat)))
    return [(lon, lat), (lon + dlon, lat), (lon + dlon, lat + dlat), (lon, lat + dlat)]


def _features(coords, start=0):
    return [
        {"type": "Feature", "properties": {"native_id": f"r{start + i}", "lat": la, "lon": lo}}
        for i, (la, lo) in enumerate(coords)
    ]


def _points_in(tile, n, rng):
    s, w, nn, e = tile.bounds()
    return [(rng.uniform(s, nn), rng.uniform(w, e)) for _ in range(n)]


def test_config_invariants():
    with pytest.raises(ValueError):
        PagedSourceConfig("x", page_size=80, max_results_per_query=60)
    with pytest.raises(ValueError):
        PagedSourceConfig("x", page_size=0)


def test_tile_children_halve_and_partition():
    t = Tile(GeoPoint(LAT0, LON0), 200, 100, 2)
    kids = t.children()
    assert [(k.width_m, k.height_m, k.depth) for k in kids] == [(100, 50, 3)] * 4
    s, w, n, e = t.bounds()
    sw, se, nw, ne = (k.bounds() for k in kids)
    assert sw[:2] == (s, w) and ne[2:] == pytest.approx((n, e), abs=1e-15)
    assert sw[3] == se[1] and sw[2] == nw[0]


def test_grid_exact_cover_four_tiles():
    tiles = plan_initial_grid(_square(1000), 500, 500)
    assert len(tiles) == 4
    assert [t.southwest.lat for t in tiles][:2] == [LAT0, LAT0]


def test_l_shape_drops_one_tile():
    sq = _square(1000)
    (w, s), (e, _), (_, n) = sq[0], sq[1], sq[2]
    mx, my = (w + e) / 2, (s + n) / 2
    l_shape = [(w, s), (e, s), (e, my), (mx, my), (mx, n), (w, n)]
    assert len(plan_initial_grid(l_shape, 500, 500)) == 3


def test_overhanging_grid_is_four_by_four():
    tiles = plan_initial_grid(_square(1000), 300, 300)
    assert len(tiles) == 16
    assert all(t.width_m == 300 for t in tiles)


def test_degenerate_polygon_rejected():
    with pytest.raises(ValueError):
        plan_initial_grid([(0, 0), (1, 1), (2, 2)], 100, 100)


def test_below_cap_no_subdivision():
    rng = np.random.default_rng(0)
    tile = Tile(GeoPoint(LAT0, LON0), 200, 200)
    src = FileSource(_features(_points_in(tile, 59, rng)), CFG)
    got = fetch_recursive(tile, src, CFG)
    assert len(got) == 59
    assert src.calls == 3


def test_over_cap_subdivides_once():
    rng = np.random.default_rng(1)
    tile = Tile(GeoPoint(LAT0, LON0), 200, 200)
    coords = _points_in(tile, 61, rng)
    src = FileSource(_features(coords), CFG)
    got = fetch_recursive(tile, src, CFG)
    assert {r.native_id for r in got} == {f"r{i}" for i in range(61)}
    # every child holds fewer than 60, so no grandchildren were queried
    for child in tile.children():
        assert len(oracles.records_in(coords, child.bounds())) <= 60


def test_capped_small_tile_warns():
    rng = np.random.default_rng(2)
    tile = Tile(GeoPoint(LAT0, LON0), 40, 40)
    src = FileSource(_features(_points_in(tile, 75, rng)), CFG)
    with pytest.warns(TruncationWarning):
        got = fetch_recursive(tile, src, CFG)
    assert len(got) == 60


def test_source_error_names_tile():
    class Broken:
        def query(self, rect, offset):
            raise OSError("connection reset")

    tile = Tile(GeoPoint(LAT0, LON0), 100, 100)
    with pytest.raises(ProcurementError, match=r"tile\[d=0"):
        fetch_recursive(tile, Broken(), CFG)


def test_depth_guard():
    with pytest.raises(ProcurementError, match="depth"):
        fetch_recursive(Tile(GeoPoint(LAT0, LON0), 100, 100, depth=31), FileSource([], CFG), CFG)


@pytest.mark.parametrize(
    "ids, expected",
    [
        ([("s", "a"), ("s", "a"), ("s", "b")], [("s", "a"), ("s", "b")]),
        ([("s", "a"), ("s", "b"), ("s", "a")], [("s", "a"), ("s", "b")]),
        ([("s", "a"), ("t", "a")], [("s", "a"), ("t", "a")]),
    ],
)
def test_dedupe_by_id(ids, expected):
    recs = [RawRecord(s, n, {"k": i}) for i, (s, n) in enumerate(ids)]
    out = dedupe_by_id(recs)
    assert [(r.source_id, r.native_id) for r in out] == expected
    assert out[0].payload == {"k": 0}


def random_source(seed, tmp_dir):
    """A file-backed source with uniform background points and dense clusters."""
    rng = np.random.default_rng(seed)
    side = float(rng.choice([500.0, 750.0, 1000.0]))
    area = _square(side)
    (w, s), (e, _), (_, n) = area[0], area[1], area[2]
    coords = [(rng.uniform(s, n), rng.uniform(w, e)) for _ in range(int(rng.integers(50, 600)))]
    for _ in range(int(rng.integers(0, 4))):
        lat, lon = rng.uniform(s, n), rng.uniform(w, e)
        size = int(rng.choice([rng.integers(30, 60), rng.integers(61, 120)]))
        spread = float(rng.choice([2e-5, 1e-4, 4e-4]))
        for _ in range(size):
            coords.append((float(np.clip(lat + rng.normal(0, spread), s, n - 1e-9)), float(np.clip(lon + rng.normal(0, spread), w, e - 1e-9))))
    feats = _features(coords)
    # a few verbatim duplicate lines, as paged APIs sometimes repeat records
    feats += [feats[int(i)] for i in rng.integers(0, len(feats), int(rng.integers(0, 5)))]
    coords += [(f["properties"]["lat"], f["properties"]["lon"]) for f in feats[len(coords):]]
    path = tmp_dir / f"src{seed}.ndjson"
    path.write_text("".join(json.dumps(f) + "\n" for f in feats))
    return area, coords, feats, path


def completeness_run(seed, tmp_dir, tile_m=250.0, min_dim=25.0):
    """(ok, truncated, detail) for one randomized source."""
    area, coords, feats, path = random_source(seed, tmp_dir)
    cfg = PagedSourceConfig(f"s{seed}", page_size=20, max_results_per_query=60, path=str(path))
    src = FileSource.from_path(path, cfg)
    tiles = plan_initial_grid({"type": "Polygon", "coordinates": [area + [area[0]]]}, tile_m, tile_m)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        got = dedupe_by_id(fetch_area(tiles, src, cfg, min_dim))
    n_warn = sum(issubclass(w.category, TruncationWarning) for w in caught)
    got_ids = {r.native_id for r in got}
    truth = {f["properties"]["native_id"] for f in feats}
    recovered, must_warn = set(), []
    for t in tiles:
        r, wt = oracles.expected_fetch(t, coords, 60, min_dim)
        recovered |= {feats[i]["properties"]["native_id"] for i in r}
        must_warn += wt
    if n_warn != len(must_warn):
        return False, n_warn > 0, f"seed {seed}: {n_warn} warnings, oracle expects {len(must_warn)}"
    for t in must_warn:
        held = len(oracles.records_in(coords, t.bounds()))
        if held <= 60 or t.width_m / 2 >= min_dim:
            return False, True, f"seed {seed}: warned tile holds {held} records at {t.width_m} m"
    if n_warn == 0 and got_ids != truth:
        return False, False, f"seed {seed}: {len(truth - got_ids)} missing, {len(got_ids - truth)} extra"
    if n_warn and not (recovered <= got_ids <= truth):
        return False, True, f"seed {seed}: records outside truncated cells lost"
    return True, n_warn > 0, ""


def test_completeness_over_100_random_sources(tmp_path):
    results = [completeness_run(seed, tmp_path) for seed in range(100)]
    failures = [d for ok, _, d in results if not ok]
    assert not failures, failures[:3]
    truncated = sum(t for _, t, _ in results)
    # the generator must exercise both branches
    assert 0 < truncated < 100


def test_parallel_fetch_matches_sequential(tmp_path):
    area, coords, feats, path = random_source(7, tmp_path)
    cfg = PagedSourceConfig("p", path=str(path))
    tiles = plan_initial_grid(area, 250, 250)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        one = fetch_area(tiles, FileSource.from_path(path, cfg), cfg)
        many = fetch_area(tiles, FileSource.from_path(path, cfg), cfg, max_workers=4)
    assert [r.native_id for r in one] == [r.native_id for r in many]


class FakeResponse(io.BytesIO):
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def test_http_source_retries_then_parses(monkeypatch):
    monkeypatch.setenv("POI_KEY", "secret")
    calls = []

    def opener(req, timeout):
        calls.append(req)
        if len(calls) < 3:
            raise OSError("timeout")
        body = {"features": [{"properties": {"native_id": "x1"}}], "capped": True}
        return FakeResponse(json.dumps(body).encode())

    cfg = PagedSourceConfig("h", base_url="http://example.invalid/q", api_key_env="POI_KEY")
    src = HttpSource(cfg, backoff_s=0.0, opener=opener)
    recs, capped = src.query((1.0, 2.0, 3.0, 4.0), 20)
    assert capped and [r.native_id for r in recs] == ["x1"]
    assert len(calls) == 3
    assert calls[0].full_url == "http://example.invalid/q?bbox=1.0%2C2.0%2C3.0%2C4.0&offset=20"
    assert calls[0].get_header("X-api-key") == "secret"


def test_http_source_gives_up():
    def opener(req, timeout):
        raise OSError("down")

    src = HttpSource(PagedSourceConfig("h", base_url="http://example.invalid/q"), retries=2, backoff_s=0.0, opener=opener)
    with pytest.raises(ProcurementError, match="down"):
        src.query((0, 0, 1, 1), 0)
