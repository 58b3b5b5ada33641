"""Round loop: client sampling, local and server training, attacks, aggregation, global step."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import data as fdata
from .aggregation import AggregationInput, aggregate
from .attacks import DATA_ATTACKS, RoundContext, apply_attack, poison_shard
from .config import ExperimentConfig
from .data import Dataset, PartitionParams, TriggerSpec
from .errors import EmptyAggregateError
from .model import Model, evaluate_accuracy, backdoor_success_rate, init_model, model_update

log = logging.getLogger(__name__)

TEST_FRACTION = 0.2

# stream tags for derived seeds
_DATA, _SPLIT, _ROOT, _PARTITION, _INIT, _SAMPLE, _TRAIN, _SERVER, _POISON, _ATTACK = range(10)


def derive_seed(master: int, *keys: int) -> int:
    """Independent 64-bit seed for the stream identified by ``keys``."""
    ss = np.random.SeedSequence([master, *keys])
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0])


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    test_accuracy: float
    backdoor_success: float | None
    per_client_scores: dict[int, float]
    filtered_ids: frozenset[int]
    aggregate_skipped: bool
    skip_reason: str | None = None
    reference: int | None = None


@dataclass
class SimState:
    """Everything a round needs: current model, last global update and the data."""

    model: Model
    prev_global_update: np.ndarray | None
    shards: list[Dataset]
    root: Dataset
    test: Dataset
    malicious_ids: frozenset[int]
    poisoned: dict[int, Dataset] = field(default_factory=dict)
    trigger: TriggerSpec | None = None


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    d = cfg.dataset
    if d.kind == "synthetic":
        ds = fdata.generate_synthetic(
            d.num_classes, d.feature_dim, d.per_class, derive_seed(cfg.master_seed, _DATA), d.noise_std
        )
    else:
        ds = fdata.load_idx(d.paths["images"], d.paths["labels"], d.num_classes)
    if d.max_examples is not None and d.max_examples < len(ds):
        rng = np.random.default_rng(derive_seed(cfg.master_seed, _DATA, 1))
        ds = ds.subset(np.sort(rng.choice(len(ds), d.max_examples, replace=False)))
    return ds


def build_state(cfg: ExperimentConfig, ds: Dataset | None = None) -> SimState:
    """Split, sample the root dataset, partition, poison and initialise the model.

    The test split is held out first; the root dataset is then drawn from the
    remaining pool and excluded from the client shards.
    """
    seed = cfg.master_seed
    ds = load_dataset(cfg) if ds is None else ds
    train, test = fdata.train_test_split(ds, TEST_FRACTION, derive_seed(seed, _SPLIT))
    root_idx = fdata.sample_root_indices(
        train.y, train.num_classes, cfg.root_size, cfg.bias_p, derive_seed(seed, _ROOT)
    )
    root = train.subset(root_idx)
    pool = train.subset(np.setdiff1d(np.arange(len(train)), root_idx))
    shards = fdata.partition_noniid(
        pool, PartitionParams(cfg.n_clients, cfg.noniid_q, derive_seed(seed, _PARTITION))
    )
    malicious = cfg.attack.malicious_ids(cfg.n_clients)
    poisoned = {}
    if cfg.attack.kind in DATA_ATTACKS:
        for cid in sorted(malicious):
            poisoned[cid] = poison_shard(shards[cid], cfg.attack, derive_seed(seed, _POISON, cid))
    trigger = None
    if cfg.attack.kind == "scaling_backdoor":
        trigger = cfg.attack.trigger(ds.feature_dim, ds.image_shape)
    model = init_model(cfg.arch(), derive_seed(seed, _INIT))
    return SimState(model, None, shards, root, test, malicious, poisoned, trigger)


def sample_clients(cfg: ExperimentConfig, t: int) -> list[int]:
    rng = np.random.default_rng(derive_seed(cfg.master_seed, _SAMPLE, t))
    return sorted(int(c) for c in rng.choice(cfg.n_clients, cfg.clients_per_round, replace=False))


def run_round(state: SimState, cfg: ExperimentConfig, t: int) -> tuple[SimState, RoundMetrics]:
    """Execute global round ``t`` (1-based) and return the new state and its metrics."""
    G = state.model
    seed = cfg.master_seed
    honest = []
    for cid in sample_clients(cfg, t):
        shard = state.poisoned.get(cid, state.shards[cid])
        if len(shard) == 0:
            honest.append((cid, np.zeros_like(G.params)))
            continue
        honest.append((cid, model_update(G, shard, cfg.local(derive_seed(seed, _TRAIN, t, cid)))))
    g0 = model_update(G, state.root, cfg.local(derive_seed(seed, _SERVER, t)))

    ctx = RoundContext(t, cfg.n_clients, state.malicious_ids, derive_seed(seed, _ATTACK, t))
    submitted = apply_attack(ctx, honest, cfg.attack)
    inp = AggregationInput.from_pairs(
        submitted, server_update=g0, prev_global_update=state.prev_global_update, round=t
    )
    try:
        res = aggregate(cfg.rule_name, inp, cfg.rule_params)
    except EmptyAggregateError as exc:
        log.info("round %d: aggregation skipped (%s)", t, exc.reason)
        new_model, g = G, np.zeros_like(G.params)
        scores, filtered, skipped, reason = {cid: 0.0 for cid, _ in submitted}, frozenset(inp.client_ids), True, exc.reason
        ref = None
    else:
        g = res.global_update
        new_model = G.with_params(G.params + cfg.global_lr * g)
        scores, filtered, skipped, reason = res.scores, res.filtered, False, None
        ref = res.reference

    backdoor = None
    if state.trigger is not None:
        backdoor = backdoor_success_rate(new_model, state.test, state.trigger)
    metrics = RoundMetrics(
        t, evaluate_accuracy(new_model, state.test), backdoor, scores, filtered, skipped, reason, ref
    )
    new_state = SimState(
        new_model, g, state.shards, state.root, state.test, state.malicious_ids, state.poisoned, state.trigger
    )
    return new_state, metrics


def run_experiment(
    cfg: ExperimentConfig,
    on_round: Callable[[RoundMetrics], None] | None = None,
    state: SimState | None = None,
) -> list[RoundMetrics]:
    """Run ``cfg.rounds`` rounds; ``state`` may be a prebuilt ``build_state(cfg)``."""
    state = build_state(cfg) if state is None else state
    history = []
    for t in range(1, cfg.rounds + 1):
        state, m = run_round(state, cfg, t)
        history.append(m)
        if on_round is not None:
            on_round(m)
    return history


def sweep(cfg: ExperimentConfig, axis: str, values: Sequence[float]) -> dict[float, RoundMetrics]:
    """Final-round metrics of one run per ``value`` along ``axis``; everything else, seeds included, is fixed."""
    if not values:
        raise ValueError("sweep needs at least one value")
    return {v: run_experiment(cfg.with_axis(axis, v))[-1] for v in values}
