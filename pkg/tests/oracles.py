"""Independent reference implementations used as test oracles.

These are written from the rule definitions with plain Python loops and
lists, sharing no code with ``fltg.aggregation``. Floating-point sums run
left to right so the robust-statistics oracles can be compared bit for bit.
"""
from __future__ import annotations

import math

import numpy as np


def sq_dist(a, b) -> float:
    acc = 0.0
    for x, y in zip(a, b):
        acc += (x - y) * (x - y)
    return acc


def krum_oracle(rows, ids, f):
    """Returns (selected id, {id: score})."""
    n = len(rows)
    m = n - f - 2
    scores = {}
    for i in range(n):
        ds = sorted(sq_dist(rows[i], rows[j]) for j in range(n) if j != i)
        acc = 0.0
        for v in ds[:m]:
            acc += v
        scores[ids[i]] = acc
    best = min(ids, key=lambda c: (scores[c], c))
    return best, scores


def trim_mean_oracle(rows, k):
    n, d = len(rows), len(rows[0])
    out = []
    for j in range(d):
        col = sorted(r[j] for r in rows)[k : n - k]
        acc = 0.0
        for v in col:
            acc += v
        out.append(acc / (n - 2 * k))
    return out


def median_oracle(rows):
    n, d = len(rows), len(rows[0])
    out = []
    for j in range(d):
        col = sorted(r[j] for r in rows)
        out.append(col[n // 2] if n % 2 else (col[n // 2 - 1] + col[n // 2]) / 2.0)
    return out


def _norm(v) -> float:
    return math.sqrt(sum(x * x for x in v))


def _cos(a, b) -> float:
    return sum(x * y for x, y in zip(a, b)) / (_norm(a) * _norm(b))


def fltrust_oracle(rows, g0):
    """Trust score ReLU(cos(g_i, g0)); weighted mean of updates rescaled to |g0|.

    Returns (global update, scores) or (None, scores) when every score is 0.
    """
    n0 = _norm(g0)
    scores = []
    for r in rows:
        nr = _norm(r)
        scores.append(max(0.0, _cos(r, g0)) if nr > 0 else 0.0)
    total = sum(scores)
    if total == 0.0:
        return None, scores
    g = np.zeros(len(g0))
    for s, r in zip(scores, rows):
        if s > 0:
            g += s * (n0 / _norm(r)) * np.asarray(r, dtype=float)
    return g / total, scores


def fltg_oracle(rows, ids, g0, prev, rnd):
    """Step-by-step FLTG.

    1. S' = clients with ReLU(cos(g_i, g0)) > 0.
    2. Round 1 (or zero previous update): weight = that screened cosine.
       Otherwise ref = argmin over S' of cos(g_i, prev) (lowest id on ties);
       weight_i = 1 - cos(g_i, g_ref) with weight_ref = 0.
    3. g = sum_i w_i * (|g0| / |g_i|) g_i / sum_i w_i over S'.

    Returns (global update or None, {id: score}, ref id or None).
    """
    n0 = _norm(g0)
    screened = {}
    for c, r in zip(ids, rows):
        screened[c] = max(0.0, _cos(r, g0)) if _norm(r) > 0 else 0.0
    survivors = [(c, r) for c, r in zip(ids, rows) if screened[c] > 0.0]
    scores = {c: 0.0 for c in ids}
    ref = None
    if not survivors:
        return None, scores, ref
    if rnd == 1 or _norm(prev) == 0.0:
        w = {c: screened[c] for c, _ in survivors}
    else:
        ref, ref_row = min(survivors, key=lambda cr: (_cos(cr[1], prev), cr[0]))
        w = {c: (0.0 if c == ref else 1.0 - _cos(r, ref_row)) for c, r in survivors}
    scores.update(w)
    total = sum(w.values())
    if total == 0.0:
        return None, scores, ref
    g = np.zeros(len(g0))
    for c, r in survivors:
        g += w[c] * (n0 / _norm(r)) * np.asarray(r, dtype=float)
    return g / total, scores, ref


def max_dist_to(rows, point) -> float:
    return max(_norm([x - y for x, y in zip(r, point)]) for r in rows)


def diameter(rows) -> float:
    return max(_norm([x - y for x, y in zip(a, b)]) for a in rows for b in rows)
