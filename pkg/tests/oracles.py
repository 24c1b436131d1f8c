"""Slow, obviously-correct reference implementations used by the tests."""

from __future__ import annotations

import math
from itertools import product

import numpy as np

from poiconflate.similarity import haversine_m, tokenize


def tfidf_weights(corpus):
    """{doc_index: {token: weight}} straight from the definitions."""
    docs = [tokenize(d) for d in corpus]
    n = len(docs)
    vocab = sorted({t for d in docs for t in d})
    df = {t: sum(1 for d in docs if t in d) for t in vocab}
    out = {}
    for i, d in enumerate(docs):
        out[i] = {t: (d.count(t) / len(d)) * math.log(n / df[t]) for t in vocab if t in d} if d else {}
    return out, vocab, df


def tfidf_vector(corpus, text):
    docs = [tokenize(d) for d in corpus]
    n = len(docs)
    vocab = sorted({t for d in docs for t in d})
    toks = tokenize(text)
    vec = []
    for t in vocab:
        if not toks:
            vec.append(0.0)
            continue
        df = sum(1 for d in docs if t in d)
        vec.append(toks.count(t) / len(toks) * math.log(n / df))
    return vec


def dense_cosine(u, v):
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return dot / (nu * nv)


def address_cosine(corpus, a, b):
    return dense_cosine(tfidf_vector(corpus, a), tfidf_vector(corpus, b))


def levenshtein_rec(a: str, b: str) -> int:
    """Textbook recursion, no memo; only for short strings."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    if a[0] == b[0]:
        return levenshtein_rec(a[1:], b[1:])
    return 1 + min(levenshtein_rec(a[1:], b), levenshtein_rec(a, b[1:]), levenshtein_rec(a[1:], b[1:]))


def law_of_cosines_m(a, b, radius=6_371_008.8):
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dl = math.radians(b.lon - a.lon)
    c = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return radius * math.acos(max(-1.0, min(1.0, c)))


def radius_filter(pois, centroid, radius_m, cross_source_only=False):
    hits = []
    for p in pois:
        if p.id == centroid.id or (cross_source_only and p.source == centroid.source):
            continue
        d = haversine_m(centroid.point, p.point)
        if d <= radius_m:
            hits.append((d, p.id))
    return [i for _, i in sorted(hits)]


def best_stump_accuracy(X, y):
    """Best training accuracy of any single axis-aligned threshold rule."""
    y = np.asarray(y, dtype=bool)
    best = max(y.mean(), 1 - y.mean())
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        cuts = np.concatenate([[vals[0] - 1], (vals[:-1] + vals[1:]) / 2])
        for t in cuts:
            left = X[:, f] <= t
            for pol in (True, False):
                pred = left if pol else ~left
                best = max(best, float(np.mean(pred == y)))
    return best


def reference_tree(X, y, max_depth, criterion="gini"):
    """Recursive CART in plain numpy with the same tie rules as the package.

    Returns a predict(X) closure. Splits at midpoints between distinct sorted
    values; ties prefer the lower feature, then the lower threshold.
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float)

    def score(yl, yr):
        if criterion == "gini":
            s = 0.0
            for part in (yl, yr):
                c1 = part.sum()
                c0 = len(part) - c1
                s += (c1 * c1 + c0 * c0) / len(part)
            return s
        return yl.sum() ** 2 / len(yl) + yr.sum() ** 2 / len(yr)

    def build(rows, depth):
        ys = y[rows]
        leaf = ("leaf", float(ys.mean()))
        if depth >= max_depth or ys.min() == ys.max():
            return leaf
        best = None
        for f in range(X.shape[1]):
            order = rows[np.argsort(X[rows, f], kind="stable")]
            xs = X[order, f]
            f_best = None
            for k in range(len(order) - 1):
                if not xs[k] < xs[k + 1]:
                    continue
                s = score(y[order[: k + 1]], y[order[k + 1 :]])
                if f_best is None or s > f_best[0]:
                    thr = (xs[k] + xs[k + 1]) / 2
                    f_best = (s, f, thr if thr < xs[k + 1] else xs[k])
            if f_best is not None and (best is None or f_best[0] > best[0] + 1e-12):
                best = f_best
        if best is None:
            return leaf
        _, f, thr = best
        mask = X[rows, f] <= thr
        return ("split", f, thr, build(rows[mask], depth + 1), build(rows[~mask], depth + 1))

    root = build(np.arange(len(y)), 0)

    def predict(Q):
        out = []
        for q in np.asarray(Q, float):
            node = root
            while node[0] == "split":
                node = node[3] if q[node[1]] <= node[2] else node[4]
            out.append(node[1])
        return np.array(out)

    return predict


def records_in(coords, rect):
    s, w, n, e = rect
    return [i for i, (lat, lon) in enumerate(coords) if s <= lat < n and w <= lon < e]


def expected_fetch(tile, coords, cap, min_dim_m):
    """(record indices a correct recursive fetch recovers, tiles that must warn).

    Counts points per rectangle directly instead of querying a source.
    """
    inside = records_in(coords, tile.bounds())
    if len(inside) <= cap:
        return set(inside), []
    if tile.width_m / 2 >= min_dim_m and tile.height_m / 2 >= min_dim_m:
        got, warned = set(), []
        for child in tile.children():
            g, w = expected_fetch(child, coords, cap, min_dim_m)
            got |= g
            warned += w
        return got, warned
    return set(), [tile]


def all_strings(alphabet, max_len):
    for n in range(max_len + 1):
        for chars in product(alphabet, repeat=n):
            yield "".join(chars)
