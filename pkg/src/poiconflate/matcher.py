"""Two-stage POI matching: radius candidates, similarity features, classifiers."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .evaluation import MATCH, NON_MATCH, as_bool_array, fast_balanced_accuracy
from .model import StandardPoi
from .similarity import (
    SpatialGridIndex,
    TfIdfModel,
    address_text,
    fit_tfidf,
    name_similarity,
    neighbors_within,
    tfidf_similarity,
    tokenize,
)
from .trees import ALGORITHMS, BAGGING, GRADIENT_BOOSTING, Ensemble, fit_bagging, fit_gradient_boosting

MODEL_FORMAT_VERSION = 1
DEFAULT_RADIUS_M = 100.0
DEFAULT_K = 10
DEFAULT_DECISION_THRESHOLD = 0.5

# which similarity feeds (name, address) for each feature backend
BACKENDS = {
    "string": ("name_str", "addr_str"),
    "tfidf": ("name_tfidf", "addr_tfidf"),
    "hybrid": ("name_str", "addr_tfidf"),
}
FEATURE_COLUMNS = ("name_str", "name_tfidf", "addr_str", "addr_tfidf")

DEFAULT_GRID = {
    BAGGING: {"n_trees": [25, 50, 100], "max_depth": [1, 2, 3]},
    GRADIENT_BOOSTING: {"n_trees": [25, 50, 100], "max_depth": [1, 2, 3], "learning_rate": [0.1, 0.3]},
}

ALGO_ALIASES = {"gb": GRADIENT_BOOSTING, "gbm": GRADIENT_BOOSTING, "bag": BAGGING}


def canonical_algorithm(name: str) -> str:
    name = ALGO_ALIASES.get(name, name)
    if name not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {name!r}")
    return name


@dataclass(frozen=True)
class FeaturePair:
    id_a: str
    id_b: str
    s_name: float
    s_address: float
    label: Optional[str] = None

    def __post_init__(self):
        if self.id_b < self.id_a:
            a, b = self.id_b, self.id_a
            object.__setattr__(self, "id_a", a)
            object.__setattr__(self, "id_b", b)
        for name in ("s_name", "s_address"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
            object.__setattr__(self, name, v)
        if self.label is not None:
            object.__setattr__(self, "label", MATCH if as_bool_array([self.label])[0] else NON_MATCH)

    @property
    def key(self) -> tuple:
        return (self.id_a, self.id_b)

    @property
    def features(self) -> tuple:
        return (self.s_name, self.s_address)

    @property
    def is_match(self) -> bool:
        return self.label == MATCH


def pair_key(a: str, b: str) -> tuple:
    return (a, b) if a <= b else (b, a)


def _has_address(p: StandardPoi) -> bool:
    return p.address is not None and not p.address.is_empty()


class Neighborhood:
    """TF-IDF models fitted on the addresses and names around one centroid."""

    def __init__(self, members: Sequence[StandardPoi]):
        addr_docs = [tokenize(address_text(p.address)) for p in members if _has_address(p)]
        name_docs = [tokenize(p.name) for p in members if p.name]
        self.address_model = self._fit([d for d in addr_docs if d])
        self.name_model = self._fit([d for d in name_docs if d])

    @staticmethod
    def _fit(docs) -> Optional[TfIdfModel]:
        return fit_tfidf(docs) if docs else None


def similarity_row(a: StandardPoi, b: StandardPoi, hood: Neighborhood, columns=FEATURE_COLUMNS) -> dict:
    """All requested similarity columns for one pair; missing fields score 0."""
    out = {}
    if "name_str" in columns:
        out["name_str"] = name_similarity(a.name, b.name) if a.name and b.name else 0.0
    if "name_tfidf" in columns:
        ok = a.name and b.name and hood.name_model is not None
        out["name_tfidf"] = tfidf_similarity(hood.name_model, a.name, b.name) if ok else 0.0
    if "addr_str" in columns:
        ok = _has_address(a) and _has_address(b)
        out["addr_str"] = name_similarity(address_text(a.address), address_text(b.address)) if ok else 0.0
    if "addr_tfidf" in columns:
        ok = _has_address(a) and _has_address(b) and hood.address_model is not None
        out["addr_tfidf"] = tfidf_similarity(hood.address_model, address_text(a.address), address_text(b.address)) if ok else 0.0
    return out


def featurize_pair(a: StandardPoi, b: StandardPoi, tfidf: TfIdfModel, backend: str = "hybrid", name_tfidf: Optional[TfIdfModel] = None) -> FeaturePair:
    """Score one pair with explicitly supplied TF-IDF models."""
    hood = Neighborhood.__new__(Neighborhood)
    hood.address_model = tfidf
    hood.name_model = name_tfidf
    name_col, addr_col = BACKENDS[backend]
    row = similarity_row(a, b, hood, (name_col, addr_col))
    return FeaturePair(a.id, b.id, row[name_col], row[addr_col])


class PairFeaturizer:
    """Computes pair features using the neighborhood of the pair's lower id."""

    def __init__(self, pois: Sequence[StandardPoi], radius_m: float = DEFAULT_RADIUS_M):
        self.pois = sorted(pois, key=lambda p: p.id)
        self.by_id = {p.id: p for p in self.pois}
        if len(self.by_id) != len(self.pois):
            raise ValueError("duplicate POI ids")
        self.radius_m = radius_m
        self.index = SpatialGridIndex(self.pois, cell_size_m=max(radius_m, 1.0))
        self._hoods: dict = {}

    def neighbors(self, poi: StandardPoi) -> list:
        return neighbors_within(self.index, poi, self.radius_m)

    def neighborhood(self, centroid_id: str) -> Neighborhood:
        hood = self._hoods.get(centroid_id)
        if hood is None:
            c = self.by_id[centroid_id]
            hood = Neighborhood([c] + self.neighbors(c))
            self._hoods[centroid_id] = hood
        return hood

    def candidates(self, cross_source_only: bool = True):
        """Yield (centroid, partners, neighborhood) with every partner id > centroid id."""
        for c in self.pois:
            near = self.neighbors(c)
            partners = [p for p in near if p.id > c.id and not (cross_source_only and p.source == c.source)]
            if not partners:
                continue
            yield c, partners, Neighborhood([c] + near)

    def table(self, columns=FEATURE_COLUMNS, cross_source_only: bool = True) -> "CandidateTable":
        keys, rows = [], []
        for c, partners, hood in self.candidates(cross_source_only):
            for p in partners:
                keys.append((c.id, p.id))
                rows.append(similarity_row(c, p, hood, columns))
        return CandidateTable.from_rows(keys, rows, columns)

    def table_for(self, pairs: Iterable[tuple], columns=FEATURE_COLUMNS) -> "CandidateTable":
        keys, rows = [], []
        for a, b in pairs:
            a, b = pair_key(a, b)
            if a not in self.by_id or b not in self.by_id:
                raise KeyError(f"unknown POI id in pair ({a}, {b})")
            keys.append((a, b))
            rows.append(similarity_row(self.by_id[a], self.by_id[b], self.neighborhood(a), columns))
        return CandidateTable.from_rows(keys, rows, columns)


@dataclass
class CandidateTable:
    keys: list
    columns: dict

    @classmethod
    def from_rows(cls, keys, rows, columns) -> "CandidateTable":
        cols = {c: np.array([r[c] for r in rows], dtype=float) for c in columns}
        return cls(list(keys), cols)

    def __len__(self) -> int:
        return len(self.keys)

    def X(self, backend: str = "hybrid") -> np.ndarray:
        name_col, addr_col = BACKENDS[backend]
        if not self.keys:
            return np.zeros((0, 2))
        return np.column_stack([self.columns[name_col], self.columns[addr_col]])

    def pairs(self, backend: str = "hybrid", labels=None) -> list:
        X = self.X(backend)
        labels = [None] * len(self.keys) if labels is None else labels
        return [FeaturePair(a, b, x[0], x[1], lab) for (a, b), x, lab in zip(self.keys, X, labels)]


@dataclass(frozen=True)
class WsaParams:
    alpha: float
    beta: float
    v_threshold: float

    def __post_init__(self):
        for name in ("alpha", "beta", "v_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def score(self, s_name, s_address):
        return self.alpha * s_name + self.beta * s_address


def wsa_classify(pair: FeaturePair, params: WsaParams) -> str:
    return MATCH if params.score(pair.s_name, pair.s_address) > params.v_threshold else NON_MATCH


def wsa_predict(X: np.ndarray, params: WsaParams) -> np.ndarray:
    return params.score(X[:, 0], X[:, 1]) > params.v_threshold


def tune_wsa(X: np.ndarray, y, step: float = 0.05, objective: str = "overall") -> WsaParams:
    """Grid-search alpha (beta = 1 - alpha) and the threshold on labeled features.

    ``objective`` is "overall" or "balanced" accuracy; the other metric breaks
    ties, then the first grid point in (alpha, threshold) order wins.
    """
    y = as_bool_array(y)
    n_steps = int(round(1.0 / step))
    grid = np.round(np.arange(n_steps + 1) * step, 10)
    best, best_key = None, None
    for alpha in grid:
        score = alpha * X[:, 0] + (1.0 - alpha) * X[:, 1]
        for v in grid:
            pred = score > v
            overall = float(np.mean(pred == y))
            bal = fast_balanced_accuracy(pred, y)
            key = (overall, bal) if objective == "overall" else (bal, overall)
            if best_key is None or key > best_key:
                best_key = key
                best = WsaParams(float(alpha), float(round(1.0 - alpha, 10)), float(v))
    return best


@dataclass
class LabeledSplit:
    train: list
    test: list
    ratio: float


def split_indices(labels, ratio: float = 0.75, seed: int = 0) -> tuple:
    """Per-class random split; returns sorted (train_idx, test_idx)."""
    y = as_bool_array(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in (True, False):
        idx = np.flatnonzero(y == cls)
        if len(idx) < 2:
            raise ValueError(f"class {'match' if cls else 'non_match'} has fewer than 2 samples")
        idx = rng.permutation(idx)
        n_train = min(max(int(round(ratio * len(idx))), 1), len(idx) - 1)
        train.append(idx[:n_train])
        test.append(idx[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_split(pairs: Sequence[FeaturePair], ratio: float = 0.75, seed: int = 0) -> LabeledSplit:
    tr, te = split_indices([p.label for p in pairs], ratio, seed)
    return LabeledSplit([pairs[i] for i in tr], [pairs[i] for i in te], ratio)


def balanced_size(n_min: int, n_maj: int) -> int:
    return int(round(math.sqrt(n_min * n_maj)))


def rebalance_indices(labels, k: int = DEFAULT_K, seed: int = 0) -> list:
    """k index arrays, each with M matches and M non-matches, M = round(sqrt(n_min * n_maj)).

    The minority class is drawn with replacement, the majority without.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    y = as_bool_array(labels)
    pos, neg = np.flatnonzero(y), np.flatnonzero(~y)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("rebalancing needs both classes")
    minority, majority = (pos, neg) if len(pos) <= len(neg) else (neg, pos)
    m = balanced_size(len(minority), len(majority))
    out = []
    for child in np.random.SeedSequence(seed).spawn(k):
        rng = np.random.default_rng(child)
        up = rng.choice(minority, size=m, replace=True)
        down = rng.choice(majority, size=m, replace=False)
        out.append(np.concatenate([up, down]))
    return out


def rebalance(train: Sequence[FeaturePair], k: int = DEFAULT_K, seed: int = 0) -> list:
    return [[train[i] for i in idx] for idx in rebalance_indices([p.label for p in train], k, seed)]


def train_ensemble(X: np.ndarray, y, algorithm: str, hyperparams: dict, seed: int = 0) -> Ensemble:
    algorithm = canonical_algorithm(algorithm)
    X = np.asarray(X, dtype=float)
    y = as_bool_array(y).astype(float)
    if y.min() == y.max():
        raise ValueError("training data holds a single class")
    n_trees = int(hyperparams.get("n_trees", 50))
    depth = int(hyperparams.get("max_depth", 2))
    if algorithm == BAGGING:
        return fit_bagging(X, y, n_trees, depth, np.random.default_rng(seed))
    return fit_gradient_boosting(X, y, n_trees, depth, float(hyperparams.get("learning_rate", 0.1)))


def _stratified_folds(y: np.ndarray, folds: int, rng) -> np.ndarray:
    assign = np.empty(len(y), dtype=np.int64)
    for cls in (True, False):
        idx = rng.permutation(np.flatnonzero(y == cls))
        assign[idx] = np.arange(len(idx)) % folds
    return assign


def _grid_points(grid: dict) -> list:
    keys = sorted(grid)
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


def _model_size_key(params: dict) -> tuple:
    return (params.get("n_trees", 0), params.get("max_depth", 0), params.get("learning_rate", 0.0))


def cross_validate_tune(datasets: Sequence[tuple], algorithm: str, grid: Optional[dict] = None, folds: int = 5, seed: int = 0) -> dict:
    """Pick the grid point with the best mean balanced accuracy over folds and datasets.

    ``datasets`` is a sequence of (X, y). Ties go to the smaller model (fewer
    trees, then shallower, then lower learning rate). Ensembles with fewer
    trees are evaluated as prefixes of the largest one, which is exact for
    both algorithms given the seeding used here.
    """
    algorithm = canonical_algorithm(algorithm)
    grid = grid or DEFAULT_GRID[algorithm]
    points = _grid_points(grid)
    if not points:
        raise ValueError("empty hyperparameter grid")
    if len(points) == 1:
        return points[0]
    sums = {i: 0.0 for i in range(len(points))}
    counts = {i: 0 for i in range(len(points))}
    # group points that differ only in n_trees
    groups: dict = {}
    for i, p in enumerate(points):
        key = tuple(sorted((k, v) for k, v in p.items() if k != "n_trees"))
        groups.setdefault(key, []).append(i)
    seeds = np.random.SeedSequence(seed).spawn(len(datasets))
    for (X, y), ss in zip(datasets, seeds):
        X = np.asarray(X, dtype=float)
        yb = as_bool_array(y)
        rng = np.random.default_rng(ss)
        assign = _stratified_folds(yb, folds, rng)
        fold_seeds = rng.integers(0, 2**31 - 1, size=folds)
        for fold in range(folds):
            tr, te = assign != fold, assign == fold
            if yb[te].all() or (~yb[te]).all() or yb[tr].all() or (~yb[tr]).all():
                continue
            for key, members in groups.items():
                base = dict(points[members[0]])
                n_max = max(points[i].get("n_trees", 50) for i in members)
                base["n_trees"] = n_max
                model = train_ensemble(X[tr], yb[tr], algorithm, base, int(fold_seeds[fold]))
                staged = model.staged_proba(X[te], [points[i].get("n_trees", 50) for i in members])
                for i in members:
                    prob = staged[points[i].get("n_trees", 50)]
                    sums[i] += fast_balanced_accuracy(prob >= DEFAULT_DECISION_THRESHOLD, yb[te])
                    counts[i] += 1
    scored = [(sums[i] / counts[i] if counts[i] else -1.0, i) for i in range(len(points))]
    best_score = max(s for s, _ in scored)
    tied = [points[i] for s, i in scored if s >= best_score - 1e-12]
    return min(tied, key=_model_size_key)


@dataclass
class MatchModel:
    algorithm: str
    sub_models: list
    hyperparams: dict
    seed: int
    decision_threshold: float = DEFAULT_DECISION_THRESHOLD
    backend: str = "hybrid"
    radius_m: float = DEFAULT_RADIUS_M
    metadata: dict = field(default_factory=dict)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        if not self.sub_models:
            raise ValueError("model is not trained")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.mean([m.predict_proba(X) for m in self.sub_models], axis=0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.predict_proba(X) >= self.decision_threshold

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "algorithm": self.algorithm,
            "hyperparams": self.hyperparams,
            "seed": self.seed,
            "decision_threshold": self.decision_threshold,
            "backend": self.backend,
            "radius_m": self.radius_m,
            "metadata": self.metadata,
            "sub_models": [m.to_dict() for m in self.sub_models],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MatchModel":
        version = d.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {version!r}")
        return cls(
            algorithm=d["algorithm"],
            sub_models=[Ensemble.from_dict(m) for m in d["sub_models"]],
            hyperparams=dict(d["hyperparams"]),
            seed=int(d["seed"]),
            decision_threshold=float(d["decision_threshold"]),
            backend=d.get("backend", "hybrid"),
            radius_m=float(d.get("radius_m", DEFAULT_RADIUS_M)),
            metadata=dict(d.get("metadata", {})),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "MatchModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_model(
    X: np.ndarray,
    y,
    algorithm: str = BAGGING,
    k: int = DEFAULT_K,
    seed: int = 0,
    grid: Optional[dict] = None,
    rebalanced: bool = True,
    hyperparams: Optional[dict] = None,
    folds: int = 5,
    backend: str = "hybrid",
) -> MatchModel:
    """Rebalance, tune by cross-validation, then fit one ensemble per dataset.

    With ``rebalanced=False`` a single ensemble is fitted on the data as given.
    """
    algorithm = canonical_algorithm(algorithm)
    X = np.asarray(X, dtype=float)
    yb = as_bool_array(y)
    ss_rebal, ss_tune, ss_fit = np.random.SeedSequence(seed).spawn(3)
    if rebalanced:
        idx_sets = rebalance_indices(yb, k, int(ss_rebal.generate_state(1)[0]))
    else:
        idx_sets = [np.arange(len(yb))]
    datasets = [(X[idx], yb[idx]) for idx in idx_sets]
    if hyperparams is None:
        hyperparams = cross_validate_tune(datasets, algorithm, grid, folds, int(ss_tune.generate_state(1)[0]))
    fit_seeds = [int(s.generate_state(1)[0]) for s in ss_fit.spawn(len(datasets))]
    subs = [train_ensemble(Xd, yd, algorithm, hyperparams, s) for (Xd, yd), s in zip(datasets, fit_seeds)]
    n_pos, n_neg = int(yb.sum()), int((~yb).sum())
    meta = {
        "rebalanced": rebalanced,
        "k": len(datasets),
        "n_train_match": n_pos,
        "n_train_non_match": n_neg,
        "samples_per_class": balanced_size(min(n_pos, n_neg), max(n_pos, n_neg)) if rebalanced else None,
    }
    return MatchModel(algorithm, subs, dict(hyperparams), seed, backend=backend, metadata=meta)


def predict_match(model: MatchModel, pair: FeaturePair) -> tuple:
    prob = float(model.predict_proba([pair.features])[0])
    return prob, MATCH if prob >= model.decision_threshold else NON_MATCH


def classify(classifier, X: np.ndarray) -> tuple:
    """(probabilities or WSA scores, decisions) for a feature matrix."""
    if len(X) == 0:
        return np.zeros(0), np.zeros(0, dtype=bool)
    if isinstance(classifier, WsaParams):
        return classifier.score(X[:, 0], X[:, 1]), wsa_predict(X, classifier)
    prob = classifier.predict_proba(X)
    return prob, prob >= classifier.decision_threshold


@dataclass(frozen=True)
class DecidedPair:
    pair: FeaturePair
    score: float

    @property
    def is_match(self) -> bool:
        return self.pair.is_match


def match_all(
    pois: Sequence[StandardPoi],
    classifier,
    radius_m: float = DEFAULT_RADIUS_M,
    backend: Optional[str] = None,
    cross_source_only: bool = True,
) -> list:
    """Decide every candidate pair; returns DecidedPair sorted by (id_a, id_b)."""
    if backend is None:
        backend = getattr(classifier, "backend", "hybrid")
    featurizer = PairFeaturizer(pois, radius_m)
    table = featurizer.table(BACKENDS[backend], cross_source_only)
    X = table.X(backend)
    scores, decisions = classify(classifier, X)
    out = [
        DecidedPair(FeaturePair(a, b, x[0], x[1], MATCH if d else NON_MATCH), float(s))
        for (a, b), x, s, d in zip(table.keys, X, scores, decisions)
    ]
    out.sort(key=lambda dp: dp.pair.key)
    return out
