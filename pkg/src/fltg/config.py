"""Experiment configuration: JSON schema, defaults, validation and round-trip serialization."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .aggregation import RULES, validate_rule
from .attacks import ATTACKS, AttackSpec
from .errors import ConfigError
from .model import ARCH_KINDS, LocalTrainParams, ModelArch

SWEEP_AXES = ("bias_p", "noniid_q", "malicious_fraction")
DEFAULT_LOCAL_LR = {"softmax_regression": 0.1, "mlp": 0.05}


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "synthetic"
    num_classes: int = 10
    feature_dim: int = 144
    per_class: int = 600
    noise_std: float = 0.25
    paths: dict[str, str] | None = None
    max_examples: int | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    arch_kind: str = "softmax_regression"
    hidden: tuple[int, ...] = ()
    n_clients: int = 100
    clients_per_round: int = 100
    rounds: int = 30
    global_lr: float = 1.0
    batch_size: int = 32
    local_lr: float = 0.1
    local_epochs: int = 1
    noniid_q: float = 0.1
    root_size: int = 100
    bias_p: float = 0.1
    rule_name: str = "fltg"
    rule_params: dict[str, Any] = field(default_factory=dict)
    attack: AttackSpec = field(default_factory=AttackSpec)
    master_seed: int = 0

    def arch(self) -> ModelArch:
        return ModelArch(self.arch_kind, self.dataset.feature_dim, self.dataset.num_classes, self.hidden)

    def local(self, seed: int) -> LocalTrainParams:
        return LocalTrainParams(self.batch_size, self.local_lr, self.local_epochs, seed)

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def with_axis(self, axis: str, value: float) -> ExperimentConfig:
        if axis == "bias_p":
            return self.replace(bias_p=float(value))
        if axis == "noniid_q":
            return self.replace(noniid_q=float(value))
        if axis == "malicious_fraction":
            a = self.attack
            return self.replace(attack=AttackSpec(a.kind, float(value), dict(a.params)))
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}", "axis")

    def to_dict(self) -> dict[str, Any]:
        """Fully resolved JSON-ready form; ``parse_config_dict`` inverts it."""
        ds = {k: v for k, v in dataclasses.asdict(self.dataset).items() if v is not None}
        arch: dict[str, Any] = {"kind": self.arch_kind}
        if self.hidden:
            arch["hidden"] = list(self.hidden)
        return {
            "dataset": ds,
            "arch": arch,
            "n_clients": self.n_clients,
            "clients_per_round": self.clients_per_round,
            "rounds": self.rounds,
            "global_lr": self.global_lr,
            "local": {"batch_size": self.batch_size, "lr": self.local_lr, "epochs": self.local_epochs},
            "partition": {"q": self.noniid_q},
            "root": {"size": self.root_size, "bias_p": self.bias_p},
            "rule": {"name": self.rule_name, "params": dict(self.rule_params)},
            "attack": {
                "kind": self.attack.kind,
                "fraction": self.attack.malicious_fraction,
                "params": dict(self.attack.params),
            },
            "master_seed": self.master_seed,
        }


def _section(raw: dict, key: str, allowed: set[str]) -> dict:
    value = raw.get(key, {})
    if isinstance(value, str) and key in ("rule", "attack"):
        value = {"name" if key == "rule" else "kind": value}
    if not isinstance(value, dict):
        raise ConfigError("must be an object", key)
    unknown = set(value) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", key)
    return value


def _int(value, key: str, minimum: int | None = None) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"expected an integer, got {value!r}", key)
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum}", key)
    return value


def _float(value, key: str, lo: float | None = None, hi: float | None = None) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}", key)
    value = float(value)
    if (lo is not None and value < lo) or (hi is not None and value > hi):
        raise ConfigError(f"{value} outside [{lo}, {hi}]", key)
    return value


TOP_KEYS = {
    "dataset", "arch", "n_clients", "clients_per_round", "rounds", "global_lr",
    "local", "partition", "root", "rule", "attack", "master_seed",
}


def parse_config_dict(raw: dict) -> ExperimentConfig:
    """Validate ``raw`` and fill in defaults. Errors name the offending key."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", "config")

    d = _section(raw, "dataset", {"kind", "paths", "num_classes", "feature_dim", "per_class", "noise_std", "max_examples"})
    kind = d.get("kind", "synthetic")
    if kind not in ("synthetic", "mnist"):
        raise ConfigError(f"unknown dataset kind {kind!r}", "dataset.kind")
    paths = d.get("paths")
    if kind == "mnist":
        if not isinstance(paths, dict) or not {"images", "labels"} <= set(paths):
            raise ConfigError("mnist needs paths {images, labels}", "dataset.paths")
        paths = {"images": str(paths["images"]), "labels": str(paths["labels"])}
        defaults = {"num_classes": 10, "feature_dim": 784}
    else:
        paths = None
        defaults = {"num_classes": 10, "feature_dim": 144}
    max_examples = d.get("max_examples")
    dataset = DatasetConfig(
        kind=kind,
        num_classes=_int(d.get("num_classes", defaults["num_classes"]), "dataset.num_classes", 2),
        feature_dim=_int(d.get("feature_dim", defaults["feature_dim"]), "dataset.feature_dim", 1),
        per_class=_int(d.get("per_class", 600), "dataset.per_class", 1),
        noise_std=_float(d.get("noise_std", 0.25), "dataset.noise_std", 0.0),
        paths=paths,
        max_examples=None if max_examples is None else _int(max_examples, "dataset.max_examples", 1),
    )

    a = _section(raw, "arch", {"kind", "hidden"})
    arch_kind = a.get("kind", "softmax_regression")
    if arch_kind not in ARCH_KINDS:
        raise ConfigError(f"unknown architecture {arch_kind!r}", "arch.kind")
    hidden = a.get("hidden", [32] if arch_kind == "mlp" else [])
    if not isinstance(hidden, list) or arch_kind == "softmax_regression" and hidden:
        raise ConfigError("hidden must be a list of layer widths (mlp only)", "arch.hidden")
    hidden = tuple(_int(h, "arch.hidden", 1) for h in hidden)

    n = _int(raw.get("n_clients", 100), "n_clients", 1)
    eta = _int(raw.get("clients_per_round", n), "clients_per_round", 1)
    if eta > n:
        raise ConfigError(f"{eta} clients per round but only {n} clients", "clients_per_round")
    rounds = _int(raw.get("rounds", 30), "rounds", 1)
    alpha = _float(raw.get("global_lr", 1.0), "global_lr", 0.0)
    if alpha <= 0:
        raise ConfigError("must be > 0", "global_lr")

    lo = _section(raw, "local", {"batch_size", "lr", "epochs"})
    batch_size = _int(lo.get("batch_size", 32), "local.batch_size", 1)
    local_lr = _float(lo.get("lr", DEFAULT_LOCAL_LR[arch_kind]), "local.lr", 0.0)
    epochs = _int(lo.get("epochs", 1), "local.epochs", 1)

    p = _section(raw, "partition", {"q"})
    q = _float(p.get("q", 0.1), "partition.q", 1.0 / dataset.num_classes - 1e-12, 1.0)
    if n < dataset.num_classes:
        raise ConfigError(f"need at least {dataset.num_classes} clients (one per label group)", "n_clients")

    r = _section(raw, "root", {"size", "bias_p"})
    root_size = _int(r.get("size", 100), "root.size", 1)
    bias_p = _float(r.get("bias_p", 0.1), "root.bias_p", 0.0, 1.0)

    rule = _section(raw, "rule", {"name", "params"})
    if "name" not in rule:
        raise ConfigError("missing aggregation rule name", "rule.name")
    if rule["name"] not in RULES:
        raise ConfigError(f"unknown rule {rule['name']!r}; expected one of {RULES}", "rule.name")
    rule_params = rule.get("params", {})
    if not isinstance(rule_params, dict):
        raise ConfigError("must be an object", "rule.params")
    validate_rule(rule["name"], rule_params)

    at = _section(raw, "attack", {"kind", "fraction", "params"})
    attack_kind = at.get("kind", "none")
    if attack_kind not in ATTACKS:
        raise ConfigError(f"unknown attack {attack_kind!r}; expected one of {ATTACKS}", "attack.kind")
    fraction = _float(at.get("fraction", 0.0), "attack.fraction", 0.0)
    if fraction >= 1.0:
        raise ConfigError("must be < 1", "attack.fraction")
    attack_params = at.get("params", {})
    if not isinstance(attack_params, dict):
        raise ConfigError("must be an object", "attack.params")
    attack = AttackSpec(attack_kind, fraction, dict(attack_params))
    if attack_kind == "scaling_backdoor":
        attack.trigger(dataset.feature_dim).validate(dataset.feature_dim, dataset.num_classes)

    seed = _int(raw.get("master_seed", 0), "master_seed", 0)
    return ExperimentConfig(
        dataset=dataset,
        arch_kind=arch_kind,
        hidden=hidden,
        n_clients=n,
        clients_per_round=eta,
        rounds=rounds,
        global_lr=alpha,
        batch_size=batch_size,
        local_lr=local_lr,
        local_epochs=epochs,
        noniid_q=q,
        root_size=root_size,
        bias_p=bias_p,
        rule_name=rule["name"],
        rule_params=dict(rule_params),
        attack=attack,
        master_seed=seed,
    )


def parse_config(path) -> ExperimentConfig:
    """Read and validate a JSON configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None
    return parse_config_dict(raw)


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)
