"""Time match + unify on the full-size synthetic corpus.

The classifier is trained beforehand on the desk-scale labeled fixture, so
only the two production stages are inside the timed region.
"""

import argparse
import json
import time

from poiconflate.evaluation import as_bool_array
from poiconflate.experiments import labeled_features
from poiconflate.fixture import THROUGHPUT_REGIME, FixtureConfig, build_fixture
from poiconflate.matcher import match_all, train_model
from poiconflate.model import DEFAULT_RANKING
from poiconflate.trees import BAGGING
from poiconflate.unification import unify_dataset

BUDGET_S = 180.0


def run(seed: int = 0, n_pois: int = THROUGHPUT_REGIME.n_pois, algorithm: str = BAGGING) -> dict:
    t0 = time.perf_counter()
    train_fx = build_fixture(FixtureConfig(seed=seed))
    data = labeled_features(train_fx.pois, train_fx.pairs, seed)
    model = train_model(data.table.X("hybrid"), data.y, algorithm, seed=seed)
    train_s = time.perf_counter() - t0

    fx = build_fixture(FixtureConfig(seed=seed, n_pois=n_pois, duplicate_rate=THROUGHPUT_REGIME.duplicate_rate))
    t1 = time.perf_counter()
    decided = match_all(fx.pois, model)
    t2 = time.perf_counter()
    matches = [d for d in decided if d.is_match]
    unified = unify_dataset(fx.pois, matches, DEFAULT_RANKING)
    t3 = time.perf_counter()
    truth = {(a, b) for a, b, lab in fx.pairs if lab == "match"}
    found = {d.pair.key for d in matches}
    return {
        "n_pois": len(fx.pois),
        "candidate_pairs": len(decided),
        "predicted_matches": len(matches),
        "true_matches": len(truth),
        "match_recall": len(truth & found) / max(len(truth), 1),
        "unified_pois": len(unified),
        "train_s": round(train_s, 2),
        "match_s": round(t2 - t1, 2),
        "unify_s": round(t3 - t2, 2),
        "match_unify_s": round(t3 - t1, 2),
        "within_budget": (t3 - t1) < BUDGET_S,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=THROUGHPUT_REGIME.n_pois)
    ap.add_argument("--algo", default=BAGGING)
    args = ap.parse_args()
    print(json.dumps(run(args.seed, args.n, args.algo), indent=1))


if __name__ == "__main__":
    main()
