"""Aggregation rules: FedAvg, Krum, trimmed mean, median, FLTrust and FLTG.

Every rule is a pure function of an ``AggregationInput`` and returns an
``AggregationResult``. Ties (Krum's best candidate, FLTG's reference client)
are broken in favour of the lowest client id.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import vecmath
from .errors import ConfigError, DimensionError, EmptyAggregateError

RULES = ("fedavg", "krum", "trim_mean", "median", "fltrust", "fltg")

# required rule parameters, by rule
RULE_PARAMS: dict[str, tuple[str, ...]] = {
    "fedavg": (),
    "krum": ("f",),
    "trim_mean": ("k",),
    "median": (),
    "fltrust": (),
    "fltg": (),
}


@dataclass(frozen=True, eq=False)
class AggregationInput:
    """One round's worth of aggregator input.

    ``updates`` is an (n, d) array whose row i belongs to ``client_ids[i]``.
    """

    updates: np.ndarray
    client_ids: tuple[int, ...] = ()
    server_update: np.ndarray | None = None
    prev_global_update: np.ndarray | None = None
    round: int = 1

    def __post_init__(self):
        m = vecmath.as_matrix(self.updates) if len(self.updates) else np.zeros((0, 0))
        ids = tuple(int(i) for i in self.client_ids) or tuple(range(m.shape[0]))
        if len(ids) != m.shape[0]:
            raise DimensionError(f"{m.shape[0]} updates but {len(ids)} client ids")
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate client ids")
        d = m.shape[1]
        for name in ("server_update", "prev_global_update"):
            v = getattr(self, name)
            if v is not None:
                v = vecmath.as_vector(v)
                if m.shape[0] and v.shape[0] != d:
                    raise DimensionError(f"{name} has length {v.shape[0]}, updates have {d}")
                object.__setattr__(self, name, v)
        if self.round < 1:
            raise ConfigError("round index starts at 1")
        object.__setattr__(self, "updates", m)
        object.__setattr__(self, "client_ids", ids)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[int, np.ndarray]], **kwargs) -> AggregationInput:
        ids = tuple(cid for cid, _ in pairs)
        return cls(vecmath.as_matrix([v for _, v in pairs]) if pairs else np.zeros((0, 0)), ids, **kwargs)

    @property
    def n(self) -> int:
        return self.updates.shape[0]


@dataclass(frozen=True, eq=False)
class AggregationResult:
    """Aggregated update plus per-client diagnostics.

    ``scores`` are aggregation weights for FedAvg/FLTrust/FLTG, but raw
    neighbour-distance sums for Krum (lower is better there).
    """

    global_update: np.ndarray
    scores: dict[int, float]
    filtered: frozenset[int] = frozenset()
    reference: int | None = None


def _require_clients(inp: AggregationInput) -> None:
    if inp.n == 0:
        raise EmptyAggregateError("no client updates", reason="empty_input")


def _argmin_lowest_id(values: np.ndarray, ids: Sequence[int]) -> int:
    """Position of the minimum of ``values``; equal values resolve to the lowest id."""
    return min(range(len(ids)), key=lambda i: (values[i], ids[i]))


def fedavg(inp: AggregationInput) -> AggregationResult:
    _require_clients(inp)
    total = vecmath.kernels.weighted_row_sum(inp.updates, np.ones(inp.n))
    return AggregationResult(total / inp.n, {cid: 1.0 for cid in inp.client_ids})


def krum(inp: AggregationInput, f: int) -> AggregationResult:
    """Select the update with the smallest sum of squared distances to its n-f-2 nearest neighbours."""
    n = inp.n
    if f < 0 or n <= 2 * f + 2:
        raise ConfigError(f"Krum needs n > 2f + 2 (n={n}, f={f})", "rule.params.f")
    dists = vecmath.pairwise_sq_dists(inp.updates)
    m = n - f - 2
    scores = np.empty(n)
    for i in range(n):
        scores[i] = np.sort(np.delete(dists[i], i))[:m].sum()
    best = _argmin_lowest_id(scores, inp.client_ids)
    return AggregationResult(
        inp.updates[best].copy(),
        {cid: float(s) for cid, s in zip(inp.client_ids, scores)},
        reference=inp.client_ids[best],
    )


def _sum_rows(rows: np.ndarray) -> np.ndarray:
    acc = np.zeros(rows.shape[1])
    for row in rows:
        acc += row
    return acc


def trim_mean(inp: AggregationInput, k: int) -> AggregationResult:
    """Coordinate-wise mean after dropping the k largest and k smallest values."""
    n = inp.n
    if k < 0 or 2 * k >= n:
        raise ConfigError(f"trimmed mean needs 2k < n (n={n}, k={k})", "rule.params.k")
    kept = np.sort(inp.updates, axis=0)[k : n - k]
    return AggregationResult(_sum_rows(kept) / (n - 2 * k), {cid: 1.0 for cid in inp.client_ids})


def median(inp: AggregationInput) -> AggregationResult:
    _require_clients(inp)
    n = inp.n
    s = np.sort(inp.updates, axis=0)
    if n % 2:
        g = s[n // 2].copy()
    else:
        g = (s[n // 2 - 1] + s[n // 2]) / 2.0
    return AggregationResult(g, {cid: 1.0 for cid in inp.client_ids})


def _server_direction(inp: AggregationInput, rule: str) -> tuple[np.ndarray, float]:
    if inp.server_update is None:
        raise ConfigError(f"{rule} requires a server update", "server_update")
    norm = vecmath.l2_norm(inp.server_update)
    if norm == 0.0:
        raise EmptyAggregateError("server update has zero norm", reason="degenerate_server")
    return inp.server_update, norm


def _screen(inp: AggregationInput, g0: np.ndarray) -> np.ndarray:
    """ReLU-clipped cosine with the server update; zero-norm clients score 0."""
    cos = vecmath.cosine_to(inp.updates, g0)
    return np.where(np.isnan(cos) | (cos < 0.0), 0.0, cos)


def _normalized_mean(rows: np.ndarray, weights: np.ndarray, target_norm: float) -> np.ndarray:
    scaled = rows * (target_norm / vecmath.row_norms(rows))[:, None]
    return vecmath.weighted_mean(scaled, weights)


def fltrust(inp: AggregationInput) -> AggregationResult:
    """Trust-score weighted mean of client updates rescaled to the server update's norm."""
    _require_clients(inp)
    g0, g0_norm = _server_direction(inp, "fltrust")
    ts = _screen(inp, g0)
    keep = ts > 0.0
    filtered = frozenset(cid for cid, k in zip(inp.client_ids, keep) if not k)
    if not keep.any():
        raise EmptyAggregateError("every client was filtered", reason="all_filtered")
    g = _normalized_mean(inp.updates[keep], ts[keep], g0_norm)
    return AggregationResult(g, {cid: float(s) for cid, s in zip(inp.client_ids, ts)}, filtered)


def fltg(inp: AggregationInput) -> AggregationResult:
    """FLTG aggregation.

    1. Screen clients by ReLU(cos(g_i, g_0)); non-positive ones are dropped.
    2. Round 1: survivors are weighted by that screened cosine.
       Later rounds: the survivor least aligned with the previous global
       update becomes the reference, and each survivor is weighted by
       1 - cos(g_i, g_ref). The reference therefore gets weight 0.
    3. Survivors are rescaled to the server update's norm and averaged
       with those weights.
    """
    _require_clients(inp)
    g0, g0_norm = _server_direction(inp, "fltg")
    screened = _screen(inp, g0)
    keep = screened > 0.0
    ids = inp.client_ids
    filtered = frozenset(cid for cid, k in zip(ids, keep) if not k)
    if not keep.any():
        raise EmptyAggregateError("every client was filtered", reason="all_filtered")

    rows = inp.updates[keep]
    kept_ids = [cid for cid, k in zip(ids, keep) if k]
    prev = inp.prev_global_update
    if inp.round >= 2 and prev is None:
        raise ConfigError("fltg needs the previous global update after round 1", "prev_global_update")
    ref_id = None
    if inp.round == 1 or vecmath.l2_norm(prev) == 0.0:
        weights = screened[keep]
    else:
        ref = _argmin_lowest_id(vecmath.cosine_to(rows, prev), kept_ids)
        ref_id = kept_ids[ref]
        cos_ref = vecmath.cosine_to(rows, rows[ref])
        cos_ref[ref] = 1.0  # exact: avoid rounding in <v, v> / (|v| |v|)
        weights = 1.0 - cos_ref

    scores = dict.fromkeys(ids, 0.0)
    scores.update(zip(kept_ids, (float(w) for w in weights)))
    if not weights.sum() > 0.0:
        raise EmptyAggregateError("all surviving clients have zero weight", reason="zero_scores")
    g = _normalized_mean(rows, weights, g0_norm)
    return AggregationResult(g, scores, filtered, ref_id)


def validate_rule(rule_name: str, rule_params: Mapping[str, object]) -> None:
    if rule_name not in RULES:
        raise ConfigError(f"unknown aggregation rule {rule_name!r}", "rule.name")
    for key in RULE_PARAMS[rule_name]:
        if key not in rule_params:
            raise ConfigError(f"rule {rule_name} requires parameter {key!r}", f"rule.params.{key}")
        value = rule_params[key]
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise ConfigError("must be a non-negative integer", f"rule.params.{key}")
    extra = set(rule_params) - set(RULE_PARAMS[rule_name])
    if extra:
        raise ConfigError(f"unexpected parameters {sorted(extra)}", "rule.params")


def aggregate(rule_name: str, inp: AggregationInput, rule_params: Mapping[str, object] | None = None) -> AggregationResult:
    """Dispatch to the named rule after checking its parameters and inputs."""
    params = dict(rule_params or {})
    validate_rule(rule_name, params)
    if rule_name in ("fltrust", "fltg") and inp.server_update is None:
        raise ConfigError(f"{rule_name} requires a server update", "server_update")
    if rule_name == "fltg" and inp.round >= 2 and inp.prev_global_update is None:
        raise ConfigError("fltg needs the previous global update after round 1", "prev_global_update")
    if rule_name == "krum":
        return krum(inp, params["f"])
    if rule_name == "trim_mean":
        return trim_mean(inp, params["k"])
    return {"fedavg": fedavg, "median": median, "fltrust": fltrust, "fltg": fltg}[rule_name](inp)
