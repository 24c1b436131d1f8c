import datetime as dt
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from poiconflate.fixture import FixtureConfig, build_fixture  # noqa: E402
from poiconflate.model import AddressComponents, BBox, GeoPoint, StandardPoi  # noqa: E402
from poiconflate.normalization import parse_address  # noqa: E402

# filled by test_acceptance; printed after the run
ACCEPTANCE: dict = {}


def make_poi(
    source="onemap",
    native="1",
    lat=1.3,
    lon=103.8,
    name=None,
    address=None,
    place_types=(),
    tags=(),
    date="2021-03-01",
    bound=None,
    flagged=False,
    unmapped=(),
):
    if isinstance(address, str):
        address = parse_address(address)
    if isinstance(bound, tuple):
        bound = BBox(*bound)
    return StandardPoi(
        id=f"{source}:{native}",
        source=source,
        point=GeoPoint(lat, lon),
        extraction_date=dt.date.fromisoformat(date),
        name=name,
        address=address,
        bound=bound,
        place_types=frozenset(place_types),
        tags=frozenset(tags),
        requires_verification=flagged,
        unmapped_types=frozenset(unmapped),
    )


@pytest.fixture
def poi():
    return make_poi


@pytest.fixture(scope="session")
def small_fixture():
    return build_fixture(FixtureConfig(seed=11, n_pois=400))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")


@pytest.fixture(scope="session")
def pipeline_run(small_fixture, tmp_path_factory):
    """A fixture directory plus one completed pipeline run over it."""
    from poiconflate.fixture import write_fixture_dir
    from poiconflate.pipeline import PipelineConfig, run_pipeline

    root = tmp_path_factory.mktemp("fixture")
    paths = write_fixture_dir(small_fixture, root)
    manifest = run_pipeline(PipelineConfig.from_file(paths["pipeline"]))
    return root, paths, manifest
