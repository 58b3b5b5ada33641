"""Malicious client behaviour: poisoned shards and forged update vectors.

Data-side attacks (``label_flip``, the data half of ``scaling_backdoor``)
act on a client's shard before training. Update-side attacks
(``krum_attack``, ``trim_attack``, ``min_max``) replace the malicious
clients' updates after training, using the round's benign updates as the
adversary's knowledge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import vecmath
from .aggregation import AggregationInput, krum
from .data import Dataset, TriggerSpec, default_trigger, embed_trigger, flip_labels
from .errors import ConfigError, DegenerateAttackError

ATTACKS = ("none", "label_flip", "scaling_backdoor", "krum_attack", "trim_attack", "min_max")
DATA_ATTACKS = ("label_flip", "scaling_backdoor")
UPDATE_ATTACKS = ("krum_attack", "trim_attack", "min_max")

KRUM_ATTACK_GRID = (10.0, 5.0, 2.0, 1.0, 0.5, 0.2, 0.1, 0.05, 0.01)
MIN_MAX_BRACKET = 200.0


@dataclass(frozen=True)
class AttackSpec:
    """Which clients are malicious and what they do.

    Recognised ``params`` (all optional):

    * label_flip: ``mode`` ("remap" or "to_target"), ``target``
    * scaling_backdoor: ``scale_factor`` (default: total client count),
      ``poison_fraction`` (default 0.5), ``trigger`` as
      {"positions": [...], "value": float, "target": int}
    * krum_attack: ``epsilon_grid``
    * min_max: ``deviation`` ("unit", "sign" or "std"), ``tol``
    """

    kind: str = "none"
    malicious_fraction: float = 0.0
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ATTACKS:
            raise ConfigError(f"unknown attack {self.kind!r}", "attack.kind")
        if not 0.0 <= self.malicious_fraction < 1.0:
            raise ConfigError("malicious fraction must be in [0, 1)", "attack.fraction")
        if self.kind == "min_max" and self.params.get("deviation", "unit") not in ("unit", "sign", "std"):
            raise ConfigError("deviation must be unit, sign or std", "attack.params.deviation")

    def num_malicious(self, n_clients: int) -> int:
        if self.kind == "none":
            return 0
        return min(n_clients, math.ceil(round(self.malicious_fraction * n_clients, 9)))

    def malicious_ids(self, n_clients: int) -> frozenset[int]:
        """The first ceil(fraction * n) client ids."""
        return frozenset(range(self.num_malicious(n_clients)))

    def trigger(self, feature_dim: int, image_shape=None) -> TriggerSpec:
        t = self.params.get("trigger")
        if t is None:
            return default_trigger(feature_dim, image_shape)
        return TriggerSpec(tuple(int(p) for p in t["positions"]), float(t.get("value", 1.0)), int(t.get("target", 0)))


@dataclass(frozen=True)
class RoundContext:
    round: int
    n_clients: int
    malicious_ids: frozenset[int]
    seed: int = 0


def poison_shard(shard: Dataset, spec: AttackSpec, seed: int = 0) -> Dataset:
    if spec.kind == "label_flip":
        return flip_labels(shard, spec.params.get("mode", "remap"), spec.params.get("target"))
    if spec.kind == "scaling_backdoor":
        trig = spec.trigger(shard.feature_dim, shard.image_shape)
        trig.validate(shard.feature_dim, shard.num_classes)
        return embed_trigger(shard, trig, spec.params.get("poison_fraction", 0.5), seed)
    raise ConfigError(f"attack {spec.kind!r} does not poison data", "attack.kind")


def forge_scaling(update, scale_factor: float) -> np.ndarray:
    if not scale_factor > 0:
        raise ConfigError("scale factor must be positive", "attack.params.scale_factor")
    return scale_factor * vecmath.as_vector(update)


def forge_krum_attack(
    benign: Sequence[np.ndarray],
    num_malicious: int,
    epsilon_grid: Sequence[float] = KRUM_ATTACK_GRID,
    f: int | None = None,
) -> list[np.ndarray]:
    """Directed-deviation attack on Krum.

    All malicious updates equal -lambda * sign(mean(benign)), with lambda the
    largest grid value for which Krum over benign + malicious picks a
    malicious update. Falls back to the smallest grid value. ``f`` defaults
    to ``num_malicious``, clamped to the largest value Krum accepts.
    """
    if num_malicious < 1 or not len(benign):
        raise ConfigError("krum attack needs benign updates and at least one malicious client")
    b = vecmath.as_matrix(benign)
    direction = np.sign(b.mean(axis=0))
    n = b.shape[0] + num_malicious
    f = num_malicious if f is None else f
    f = min(f, (n - 3) // 2)
    grid = sorted(epsilon_grid, reverse=True)
    if f >= 0:
        for lam in grid:
            mal = -lam * direction
            stacked = np.vstack([np.tile(mal, (num_malicious, 1)), b])
            chosen = krum(AggregationInput(stacked), f).reference
            if chosen < num_malicious:
                return [mal.copy() for _ in range(num_malicious)]
    mal = -grid[-1] * direction
    return [mal.copy() for _ in range(num_malicious)]


def forge_trim_attack(benign: Sequence[np.ndarray], num_malicious: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Per coordinate, sample just beyond the benign range on the side opposite the benign mean."""
    if num_malicious < 1 or not len(benign):
        raise ConfigError("trim attack needs benign updates and at least one malicious client")
    b = vecmath.as_matrix(benign)
    lo, hi, mean = b.min(axis=0), b.max(axis=0), b.mean(axis=0)
    spread = hi - lo
    spread = np.where(spread > 0.0, spread, 1e-6)
    start = np.where(mean > 0.0, lo - spread, hi)
    return [start + spread * rng.random(b.shape[1]) for _ in range(num_malicious)]


def min_max_deviation(benign: np.ndarray, deviation: str) -> np.ndarray:
    mean = benign.mean(axis=0)
    if deviation == "unit":
        norm = vecmath.l2_norm(mean)
        p = -mean / norm if norm > 0 else np.zeros_like(mean)
    elif deviation == "sign":
        p = -np.sign(mean)
    elif deviation == "std":
        p = -benign.std(axis=0)
    else:
        raise ConfigError(f"unknown deviation {deviation!r}", "attack.params.deviation")
    return p


def min_max_gamma(benign, deviation: np.ndarray, tol: float = 1e-5, bracket: float = MIN_MAX_BRACKET) -> float:
    """Largest gamma in [0, bracket] keeping mean + gamma * deviation within the benign diameter.

    Bisection stops when the bracket is narrower than ``tol``; the returned
    value is always feasible and ``gamma + tol`` is not (unless ``bracket``
    itself is feasible).
    """
    b = vecmath.as_matrix(benign)
    p = vecmath.as_vector(deviation)
    if vecmath.l2_norm(p) == 0.0:
        raise DegenerateAttackError("min-max deviation vector has zero norm")
    mean = b.mean(axis=0)
    diameter = float(np.sqrt(vecmath.pairwise_sq_dists(b).max()))

    def feasible(gamma: float) -> bool:
        diff = b - (mean + gamma * p)
        return float(np.sqrt(np.einsum("ij,ij->i", diff, diff).max())) <= diameter

    if feasible(bracket):
        return bracket
    lo, hi = 0.0, bracket
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def forge_min_max(
    benign: Sequence[np.ndarray],
    num_malicious: int,
    deviation: str | np.ndarray = "unit",
    tol: float = 1e-5,
) -> list[np.ndarray]:
    """Min-max attack: mean + gamma * deviation, gamma as large as the benign envelope allows.

    ``deviation`` is "unit" (-mean/|mean|), "sign" (-sign(mean)), "std"
    (-coordinate std) or an explicit vector.
    """
    b = vecmath.as_matrix(benign)
    if b.shape[0] < 2:
        raise ConfigError("min-max attack needs at least two benign updates")
    p = min_max_deviation(b, deviation) if isinstance(deviation, str) else vecmath.as_vector(deviation)
    gamma = min_max_gamma(b, p, tol)
    mal = b.mean(axis=0) + gamma * p
    return [mal.copy() for _ in range(num_malicious)]


def apply_attack(
    ctx: RoundContext,
    honest_updates: Sequence[tuple[int, np.ndarray]],
    spec: AttackSpec,
) -> list[tuple[int, np.ndarray]]:
    """Replace the malicious clients' updates according to ``spec``.

    ``honest_updates`` are the updates every sampled client produced by local
    training (already on poisoned shards for data-side attacks). For
    update-side attacks the adversary sees the benign clients' updates; if too
    few benign clients were sampled it also uses the malicious clients' own
    honest updates.
    """
    updates = [(cid, vecmath.as_vector(v)) for cid, v in honest_updates]
    bad = [i for i, (cid, _) in enumerate(updates) if cid in ctx.malicious_ids]
    if spec.kind in ("none", "label_flip") or not bad:
        return updates
    if spec.kind == "scaling_backdoor":
        factor = spec.params.get("scale_factor", ctx.n_clients)
        for i in bad:
            updates[i] = (updates[i][0], forge_scaling(updates[i][1], factor))
        return updates

    knowledge = [v for cid, v in updates if cid not in ctx.malicious_ids]
    needed = 2 if spec.kind == "min_max" else 1
    if len(knowledge) < needed:
        knowledge = [v for _, v in updates]
    m = len(bad)
    if spec.kind == "krum_attack":
        forged = forge_krum_attack(knowledge, m, spec.params.get("epsilon_grid", KRUM_ATTACK_GRID))
    elif spec.kind == "trim_attack":
        forged = forge_trim_attack(knowledge, m, np.random.default_rng(ctx.seed))
    else:
        forged = forge_min_max(
            knowledge, m, spec.params.get("deviation", "unit"), spec.params.get("tol", 1e-5)
        )
    for i, v in zip(bad, forged):
        updates[i] = (updates[i][0], v)
    return updates
