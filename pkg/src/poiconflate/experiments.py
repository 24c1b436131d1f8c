"""Accuracy ladder: WSA baselines, ML without and with rebalancing, per backend."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .evaluation import as_bool_array, balanced_accuracy, confusion_counts, overall_accuracy
from .fixture import FixtureConfig, build_fixture
from .matcher import BACKENDS, PairFeaturizer, split_indices, train_model, tune_wsa, wsa_predict
from .trees import BAGGING, GRADIENT_BOOSTING

WSA = "wsa"


@dataclass(frozen=True)
class LadderRow:
    backend: str
    method: str
    algorithm: Optional[str]
    balanced: float
    overall: float
    params: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def label(self) -> str:
        if self.method == WSA:
            return f"{self.backend}"
        return f"{self.backend} + ML{' + rebalancing' if self.method == 'ml_rebalanced' else ''} [{self.algorithm}]"


@dataclass
class LabeledFeatures:
    keys: list
    table: object
    y: np.ndarray
    train: np.ndarray
    test: np.ndarray
    featurize_seconds: float


def labeled_features(pois, pairs, seed: int, ratio: float = 0.75) -> LabeledFeatures:
    t0 = time.perf_counter()
    featurizer = PairFeaturizer(pois)
    table = featurizer.table_for([(a, b) for a, b, _ in pairs])
    secs = time.perf_counter() - t0
    y = as_bool_array([lab for _, _, lab in pairs])
    train, test = split_indices(y, ratio, seed)
    return LabeledFeatures(table.keys, table, y, train, test, secs)


def _score(pred, y) -> tuple:
    return balanced_accuracy(pred, y), overall_accuracy(confusion_counts(pred, y))


def run_wsa(data: LabeledFeatures, backend: str) -> LadderRow:
    t0 = time.perf_counter()
    X = data.table.X(backend)
    params = tune_wsa(X[data.train], data.y[data.train])
    bal, ovr = _score(wsa_predict(X[data.test], params), data.y[data.test])
    p = {"alpha": params.alpha, "beta": params.beta, "v_threshold": params.v_threshold}
    return LadderRow(backend, WSA, None, bal, ovr, p, time.perf_counter() - t0)


def run_ml(data: LabeledFeatures, backend: str, algorithm: str, rebalanced: bool, seed: int, k: int = 10, grid: Optional[dict] = None) -> LadderRow:
    t0 = time.perf_counter()
    X = data.table.X(backend)
    model = train_model(X[data.train], data.y[data.train], algorithm, k=k, seed=seed, rebalanced=rebalanced, grid=grid, backend=backend)
    bal, ovr = _score(model.predict(X[data.test]), data.y[data.test])
    method = "ml_rebalanced" if rebalanced else "ml"
    return LadderRow(backend, method, algorithm, bal, ovr, dict(model.hyperparams), time.perf_counter() - t0)


def run_ladder(
    seed: int,
    fixture: Optional[FixtureConfig] = None,
    backends: Sequence[str] = tuple(BACKENDS),
    algorithms: Sequence[str] = (BAGGING, GRADIENT_BOOSTING),
    k: int = 10,
    grid: Optional[dict] = None,
) -> list:
    cfg = fixture or FixtureConfig(seed=seed)
    fx = build_fixture(cfg)
    data = labeled_features(fx.pois, fx.pairs, seed)
    rows = []
    for backend in backends:
        rows.append(run_wsa(data, backend))
        for algo in algorithms:
            for rebalanced in (False, True):
                rows.append(run_ml(data, backend, algo, rebalanced, seed, k, grid))
    return rows


def proposed_run(seed: int, fixture: Optional[FixtureConfig] = None, algorithm: str = BAGGING, k: int = 10) -> dict:
    """Timed end-to-end run of the proposed configuration next to the WSA baselines."""
    t0 = time.perf_counter()
    cfg = fixture or FixtureConfig(seed=seed)
    fx = build_fixture(cfg)
    data = labeled_features(fx.pois, fx.pairs, seed)
    proposed = run_ml(data, "hybrid", algorithm, True, seed, k)
    seconds = time.perf_counter() - t0
    baselines = [run_wsa(data, b) for b in BACKENDS]
    n_match = int(data.y.sum())
    return {
        "seed": seed,
        "proposed": proposed,
        "wsa": baselines,
        "seconds": seconds,
        "n_pairs": len(data.y),
        "n_match": n_match,
        "match_rate": n_match / len(data.y),
    }


def format_rows(rows: Sequence[LadderRow]) -> str:
    width = max(len(r.label) for r in rows)
    lines = [f"{'approach'.ljust(width)}  balanced  overall  params"]
    for r in rows:
        params = ", ".join(f"{k}={v}" for k, v in sorted(r.params.items()))
        lines.append(f"{r.label.ljust(width)}  {r.balanced:8.3f}  {r.overall:7.3f}  {params}")
    return "\n".join(lines)
