"""Acceptance criteria, one test each.

Every test stores (ok, title, detail) in ``conftest.ACCEPTANCE`` so the run
ends with one PASS/FAIL line per criterion. ``python tests/test_acceptance.py``
prints the same lines without pytest.
"""

import functools
import random
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))
sys.path.insert(0, str(HERE.parent / "scripts"))

import conftest  # noqa: E402
import oracles  # noqa: E402
import test_evaluation  # noqa: E402
import test_procurement  # noqa: E402
import test_similarity  # noqa: E402
import test_unification  # noqa: E402
from poiconflate.evaluation import coverage_report  # noqa: E402
from poiconflate.experiments import labeled_features, proposed_run, run_ml  # noqa: E402
from poiconflate.fixture import FixtureConfig, build_fixture, write_fixture_dir  # noqa: E402
from poiconflate.io import load_dataset  # noqa: E402
from poiconflate.matcher import BACKENDS  # noqa: E402
from poiconflate.pipeline import PipelineConfig, run_pipeline  # noqa: E402
from poiconflate.similarity import levenshtein  # noqa: E402
from poiconflate.taxonomy import TaxonomyMapper, decompose_label, load_embeddings, load_taxonomy  # noqa: E402
from poiconflate.trees import BAGGING  # noqa: E402
from poiconflate.verification import ASSIGN_TYPES, DISMISS, AuditLog, list_flagged, replay_audit, resolve_flag  # noqa: E402

SEEDS = (0, 1, 2, 3, 4)
TITLES = {
    1: "throughput on 12,106 POIs",
    2: "proposed pipeline vs WSA baselines",
    3: "rebalancing effect per backend",
    4: "oracle equivalence",
    5: "procurement completeness",
    6: "unification identities",
    7: "metric sanity",
    8: "taxonomy gating",
}


def _record(n, ok, detail):
    conftest.ACCEPTANCE[n] = (bool(ok), TITLES[n], detail)
    return ok, detail


# 1


def criterion_1():
    import throughput

    r = throughput.run(seed=0)
    ok = r["n_pois"] == 12106 and r["candidate_pairs"] > 0 and r["match_unify_s"] < throughput.BUDGET_S
    detail = f"match+unify {r['match_unify_s']:.1f} s (< {throughput.BUDGET_S:.0f} s), {r['candidate_pairs']} pairs, {r['unified_pois']} unified POIs"
    return _record(1, ok, detail)


# 2 and 3 share the per-seed runs


@functools.lru_cache(maxsize=None)
def seed_results(seed):
    run = proposed_run(seed, algorithm=BAGGING)
    fx = build_fixture(FixtureConfig(seed=seed))
    data = labeled_features(fx.pois, fx.pairs, seed)
    ml = {}
    for backend in BACKENDS:
        ml[(backend, False)] = run_ml(data, backend, BAGGING, False, seed).balanced
        if backend != "hybrid":
            ml[(backend, True)] = run_ml(data, backend, BAGGING, True, seed).balanced
    # the proposed configuration is hybrid + rebalancing, already trained above
    ml[("hybrid", True)] = run["proposed"].balanced
    return run, ml


def criterion_2():
    wins, scores, slow = 0, [], []
    for seed in SEEDS:
        run, _ = seed_results(seed)
        bal = run["proposed"].balanced
        scores.append(bal)
        wins += all(bal >= w.balanced for w in run["wsa"])
        if run["seconds"] >= 60.0:
            slow.append(seed)
    mean = float(np.mean(scores))
    ok = wins >= 4 and mean >= 0.95 and not slow
    secs = max(seed_results(s)[0]["seconds"] for s in SEEDS)
    detail = f"beats every WSA in {wins}/5 seeds, mean balanced {mean:.3f} (per seed {', '.join(f'{s:.3f}' for s in scores)}), slowest seed {secs:.1f} s"
    return _record(2, ok, detail)


def criterion_3():
    parts, ok = [], True
    for backend in BACKENDS:
        plain = np.array([seed_results(s)[1][(backend, False)] for s in SEEDS])
        rebal = np.array([seed_results(s)[1][(backend, True)] for s in SEEDS])
        ups = int(np.sum(rebal > plain))
        good = rebal.mean() >= plain.mean() - 0.005 and ups >= 3
        ok &= good
        parts.append(f"{backend} {plain.mean():.3f}->{rebal.mean():.3f} (up in {ups}/5)")
    return _record(3, ok, "; ".join(parts))


# 4


def criterion_4():
    rng = random.Random(4)
    corpora = [[" ".join(rng.choices(test_similarity.WORDS, k=rng.randint(0, 6))) for _ in range(rng.randint(1, 20))] for _ in range(200)]
    corpora = [c for c in corpora if any(d for d in c)]
    tfidf_ok = all(test_similarity.tfidf_matches_brute_force(c) for c in corpora)

    strings = list(oracles.all_strings("ab", 4))
    pairs = [(a, b) for a in strings for b in strings]
    pairs += [("".join(rng.choices("abcd", k=rng.randint(0, 8))), "".join(rng.choices("abcd", k=rng.randint(0, 8)))) for _ in range(400)]
    lev_ok = all(levenshtein(a, b) == oracles.levenshtein_rec(a, b) for a, b in pairs)

    grid_ok = test_similarity.grid_matches_brute_force(sets=50, n=200)
    detail = f"tf-idf/cosine on {len(corpora)} corpora: {tfidf_ok}; levenshtein on {len(pairs)} pairs: {lev_ok}; grid on 50 sets: {grid_ok}"
    return _record(4, tfidf_ok and lev_ok and grid_ok, detail)


# 5


def criterion_5():
    with tempfile.TemporaryDirectory() as d:
        results = [test_procurement.completeness_run(seed, Path(d)) for seed in range(100)]
    failures = [detail for ok, _, detail in results if not ok]
    truncated = sum(t for _, t, _ in results)
    detail = f"{100 - len(failures)}/100 sources complete ({truncated} with truncation warnings)"
    if failures:
        detail += f"; first failure: {failures[0]}"
    return _record(5, not failures, detail)


# 6


def criterion_6():
    runs = []
    for seed in (0, 1, 2):
        fx = build_fixture(FixtureConfig(seed=seed, n_pois=600))
        runs.append(test_unification.unification_identities(fx.pois, fx.match_pairs))
        # also over noisy predicted pairs: true matches plus random cross-source links
        rng = random.Random(seed)
        noisy = fx.match_pairs + [(a, b) for a, b, _ in rng.sample(fx.pairs, 40)]
        runs.append(test_unification.unification_identities(fx.pois, noisy))
    identities = all(all(r) for r in runs)
    failing = test_unification.failing_rule_cases()
    ok = identities and not failing
    detail = f"count identity, idempotence and conservation on {len(runs)} runs: {identities}; rule cases {12 - len(failing)}/12"
    if failing:
        detail += f" (failing: {', '.join(failing)})"
    return _record(6, ok, detail)


# 7


def criterion_7():
    overall, bal = test_evaluation.all_non_match_scores(200, 8498)
    row = coverage_report({"osm": test_evaluation.osm_presence_fixture(385, 291)}).row("osm")
    coords, addr = row.percent("coordinates"), row.percent("address")
    ok = abs(overall - 0.977) <= 0.001 and bal == 0.5 and coords == 100.0 and addr == 75.6
    detail = f"all-non-match overall {overall:.4f}, balanced {bal}; OSM coordinates {coords}%, address {addr}%"
    return _record(7, ok, detail)


# 8


def _pipeline_root():
    root = Path(tempfile.mkdtemp(prefix="poiconflate-accept-"))
    paths = write_fixture_dir(build_fixture(FixtureConfig(seed=11, n_pois=400)), root)
    run_pipeline(PipelineConfig.from_file(paths["pipeline"]))
    return root


def _direct_best(label, targets, store):
    """Best cosine per target over the label's components, computed directly."""
    best = {}
    for comp in decompose_label(label):
        words = [store.vectors[w] for w in comp.split() if w in store.vectors]
        if not words:
            continue
        v = np.mean(words, axis=0)
        for t in targets:
            tv = np.mean([store.vectors[w] for w in t.split()], axis=0)
            c = float(v @ tv / (np.linalg.norm(v) * np.linalg.norm(tv)))
            best[t] = max(c, best.get(t, -2.0))
    return best


def criterion_8(root):
    targets = load_taxonomy(root / "taxonomy.txt")
    store = load_embeddings(root / "embeddings.vec")
    mapper = TaxonomyMapper(targets, store, 0.95)
    std, _ = load_dataset(root / "out" / "standardized.ndjson")
    mapped, _ = load_dataset(root / "out" / "mapped.ndjson")
    by_id = {p.id: p for p in std}
    low, unflagged, n_maps = [], [], 0
    for p in mapped:
        if p.source == "google":
            continue
        for label in by_id[p.id].place_types:
            m = mapper.map(label)
            direct = _direct_best(label, targets, store)
            for t in m.mapped_labels:
                n_maps += 1
                if m.scores[t] < 0.95 or direct.get(t, -1.0) < 0.95 or abs(m.scores[t] - direct[t]) > 1e-9:
                    low.append((label, t, m.scores[t]))
                if t not in p.place_types:
                    low.append((label, t, "missing"))
            if m.flagged and not (p.requires_verification and label in p.unmapped_types):
                unflagged.append((p.id, label))
    # no target label in the output lacks a qualifying score
    for p in mapped:
        if p.source != "google":
            for t in p.place_types - p.unmapped_types:
                if not any(t in mapper.map(lab).mapped_labels for lab in by_id[p.id].place_types):
                    low.append((p.id, t, "unexplained"))

    flagged = list_flagged(mapped)
    log = AuditLog(root / "audit.ndjson")
    if log.path.exists():
        log.path.unlink()
    out = mapped
    for i, (p, _) in enumerate(flagged):
        res = {ASSIGN_TYPES: ["point of interest"]} if i % 2 else DISMISS
        out = resolve_flag(out, p.id, res, log, operator="acceptance")
    replayed = replay_audit(mapped, log.read())
    after = list_flagged(replayed)
    ok = not low and not unflagged and flagged and not after and replayed == out
    detail = (
        f"{n_maps} mappings, {len(low)} below 0.95 or unexplained; {len(unflagged)} unmappable labels left unflagged; "
        f"{len(flagged)} flagged -> {len(after)} after replaying {len(log.read())} resolutions"
    )
    return _record(8, ok, detail)


# pytest entry points


def _check(result):
    ok, detail = result
    assert ok, detail


@pytest.mark.slow
def test_criterion_1_throughput():
    _check(criterion_1())


@pytest.mark.slow
def test_criterion_2_proposed_beats_wsa():
    _check(criterion_2())


@pytest.mark.slow
def test_criterion_3_rebalancing():
    _check(criterion_3())


def test_criterion_4_oracles():
    _check(criterion_4())


def test_criterion_5_procurement_completeness():
    _check(criterion_5())


def test_criterion_6_unification():
    _check(criterion_6())


def test_criterion_7_metric_sanity():
    _check(criterion_7())


def test_criterion_8_taxonomy_gating(pipeline_run):
    root, _, _ = pipeline_run
    _check(criterion_8(root))


def main():
    runs = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, lambda: criterion_8(_pipeline_root())]
    failed = 0
    for n, fn in enumerate(runs, start=1):
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # report and keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        failed += not ok
        print(f"[{'PASS' if ok else 'FAIL'}] {n}. {TITLES[n]}: {detail} ({time.perf_counter() - t0:.0f} s)", flush=True)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
