"""Place-type mapping onto a target taxonomy through word-vector similarity."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import StandardPoi, normalize_text

DEFAULT_THRESHOLD = 0.95
NGRAM_RANGE = (3, 6)


class EmbeddingFormatError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingStore:
    dim: int
    vectors: dict
    subword_ngrams: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        for table in (self.vectors, self.subword_ngrams):
            for tok, vec in table.items():
                if len(vec) != self.dim:
                    raise ValueError(f"vector for {tok!r} has length {len(vec)}, expected {self.dim}")

    def __contains__(self, token: str) -> bool:
        return token in self.vectors


def load_embeddings(path, subword_path=None) -> EmbeddingStore:
    """Read the text vector format: a "count dim" header, then "token v1 ... vdim" rows.

    ``subword_path`` optionally names a second file in the same format holding
    character n-gram vectors.
    """
    dim, vectors = _read_vector_file(path)
    ngrams = {}
    if subword_path is not None:
        sub_dim, ngrams = _read_vector_file(subword_path)
        if sub_dim != dim:
            raise EmbeddingFormatError(f"{subword_path}: dimension {sub_dim} differs from {dim}")
    return EmbeddingStore(dim, vectors, ngrams)


def _read_vector_file(path) -> tuple:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        parts = header.split()
        if not parts:
            raise EmbeddingFormatError(f"{path}: missing header")
        if len(parts) != 2:
            raise EmbeddingFormatError(f"{path}:1: header must be 'count dim'")
        try:
            count, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise EmbeddingFormatError(f"{path}:1: header must be 'count dim'") from None
        if dim <= 0:
            raise EmbeddingFormatError(f"{path}:1: dimension must be positive")
        vectors = {}
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").rstrip().split(" ")
            if parts == [""]:
                continue
            if len(parts) != dim + 1:
                raise EmbeddingFormatError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            try:
                vec = np.array([float(x) for x in parts[1:]])
            except ValueError:
                raise EmbeddingFormatError(f"{path}:{lineno}: non-numeric value") from None
            vectors[normalize_text(parts[0]) or parts[0]] = vec
        if len(vectors) != count:
            raise EmbeddingFormatError(f"{path}: header announces {count} vectors, found {len(vectors)}")
    return dim, vectors


def save_embeddings(store: EmbeddingStore, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(store.vectors)} {store.dim}\n")
        for tok, vec in store.vectors.items():
            fh.write(tok + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def load_taxonomy(path) -> list:
    labels = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        label = normalize_text(line)
        if label and not label.startswith("#") and label not in labels:
            labels.append(label)
    return labels


def decompose_label(label: str) -> list:
    words = (normalize_text(label) or "").split()
    if len(words) > 1:
        return words + [" ".join(words)]
    return words


def char_ngrams(word: str, lo: int = NGRAM_RANGE[0], hi: int = NGRAM_RANGE[1]) -> list:
    padded = f"<{word}>"
    return [padded[i : i + n] for n in range(lo, hi + 1) for i in range(len(padded) - n + 1)]


def word_vector(word: str, store: EmbeddingStore) -> Optional[np.ndarray]:
    vec = store.vectors.get(word)
    if vec is not None:
        return vec
    if not store.subword_ngrams:
        return None
    grams = [store.subword_ngrams[g] for g in char_ngrams(word) if g in store.subword_ngrams]
    if not grams:
        return None
    return np.mean(grams, axis=0)


def phrase_vector(phrase: str, store: EmbeddingStore) -> Optional[np.ndarray]:
    """Mean of the word vectors of ``phrase``; None if no word can be vectorized."""
    vecs = []
    for word in (normalize_text(phrase) or "").split():
        v = word_vector(word, store)
        if v is not None:
            vecs.append(v)
    if not vecs:
        return None
    return np.mean(vecs, axis=0)


def cosine_similarity(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    nx, ny = float(np.linalg.norm(x)), float(np.linalg.norm(y))
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))


@dataclass(frozen=True)
class TaxonomyMapping:
    original_label: str
    mapped_labels: frozenset
    scores: dict
    flagged: bool


class TaxonomyMapper:
    """Caches target vectors so that many labels can be mapped cheaply."""

    def __init__(self, target_labels: Sequence[str], store: EmbeddingStore, threshold: float = DEFAULT_THRESHOLD):
        if not target_labels:
            raise ValueError("target taxonomy is empty")
        self.store = store
        self.threshold = threshold
        self.targets = []
        for label in target_labels:
            label = normalize_text(label)
            vec = phrase_vector(label, store)
            if vec is None:
                raise ValueError(f"target label {label!r} cannot be vectorized")
            self.targets.append((label, vec))
        self._cache: dict = {}

    def scores(self, phrase: str) -> list:
        """(label, cosine) for every target, best first."""
        vec = phrase_vector(phrase, self.store)
        if vec is None:
            return []
        out = [(label, cosine_similarity(vec, t)) for label, t in self.targets]
        out.sort(key=lambda p: (-p[1], p[0]))
        return out

    def map(self, label: str) -> TaxonomyMapping:
        key = normalize_text(label) or ""
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        best: dict = {}
        for component in decompose_label(key):
            for target, score in self.scores(component):
                if score >= self.threshold and score > best.get(target, -2.0):
                    best[target] = score
        mapping = TaxonomyMapping(key, frozenset(best), best, not best)
        self._cache[key] = mapping
        return mapping

    def suggest(self, label: str, k: int = 5) -> list:
        """Top-``k`` target labels by the best component score, ignoring the threshold."""
        best: dict = {}
        for component in decompose_label(label):
            for target, score in self.scores(component):
                best[target] = max(score, best.get(target, -2.0))
        return sorted(best.items(), key=lambda p: (-p[1], p[0]))[:k]


def map_place_type(label: str, target_labels: Sequence[str], store: EmbeddingStore, threshold: float = DEFAULT_THRESHOLD) -> TaxonomyMapping:
    return TaxonomyMapper(target_labels, store, threshold).map(label)


def map_poi(poi: StandardPoi, mapper: TaxonomyMapper) -> StandardPoi:
    """Replace source labels by target labels; unmappable labels are kept and flagged."""
    mapped, unmapped = set(), set()
    for label in sorted(poi.place_types):
        m = mapper.map(label)
        if m.flagged:
            unmapped.add(label)
        else:
            mapped |= m.mapped_labels
    return dataclasses.replace(
        poi,
        place_types=frozenset(mapped | unmapped),
        unmapped_types=poi.unmapped_types | frozenset(unmapped),
        requires_verification=poi.requires_verification or bool(unmapped),
    )


def map_dataset(pois: Iterable[StandardPoi], mapper: TaxonomyMapper, passthrough: Iterable[str] = ()) -> list:
    skip = set(passthrough)
    return [p if p.source in skip else map_poi(p, mapper) for p in pois]
