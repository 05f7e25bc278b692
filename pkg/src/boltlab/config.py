"""Run configuration: a JSON key/value tree with documented defaults.

Every field has a default except the seeds block, which is mandatory for
every command that consumes randomness -- there are no wall-clock or
implicit seeds anywhere.  Paths are checked at resolution time, before
any compute.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

from .errors import ConfigError
from .losses import MAPPINGS, SHIFTED_SIGMOID, SHIFTED_SOFTMAX

VERIFY_DEFAULT_SEED = 20240901  # fixed constant: verify must run config-free


@dataclass(frozen=True)
class Seeds:
    init: int
    data: int
    shuffle: int


def _require_seeds(doc: dict, where: str) -> Seeds:
    block = doc.get("seeds")
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: mandatory 'seeds' block missing")
    try:
        return Seeds(int(block["init"]), int(block["data"]), int(block["shuffle"]))
    except KeyError as e:
        raise ConfigError(f"{where}: seeds block needs 'init', 'data', 'shuffle' (missing {e})")


def _take(doc: dict, key: str, default, caster=None):
    value = doc.get(key, default)
    if caster is not None and value is not None:
        try:
            value = caster(value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"field {key!r}: {e}")
    return value


def _reject_unknown(doc: dict, allowed: set[str], where: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown config fields {sorted(unknown)}")


@dataclass(frozen=True)
class SyntheticDataConfig:
    means: tuple[tuple[float, ...], ...]
    variance: float = 1.0
    train_samples_per_class: int = 10000
    test_samples_per_class: int = 500


@dataclass(frozen=True)
class IdxDataConfig:
    train_images: str
    train_labels: str
    test_images: str
    test_labels: str
    train_subset: int | None = None  # first N rows of a seeded permutation
    test_subset: int | None = None


def _parse_dataset(doc: dict) -> SyntheticDataConfig | IdxDataConfig:
    kind = doc.get("kind")
    if kind == "synthetic":
        _reject_unknown(doc, {"kind", "means", "variance", "train_samples_per_class",
                              "test_samples_per_class"}, "dataset")
        means = doc.get("means")
        if not means or len(means) < 2:
            raise ConfigError("synthetic dataset needs >= 2 class means")
        means = tuple(tuple(float(v) for v in ([mu] if isinstance(mu, (int, float)) else mu))
                      for mu in means)
        return SyntheticDataConfig(
            means=means,
            variance=_take(doc, "variance", 1.0, float),
            train_samples_per_class=_take(doc, "train_samples_per_class", 10000, int),
            test_samples_per_class=_take(doc, "test_samples_per_class", 500, int),
        )
    if kind == "idx":
        _reject_unknown(doc, {"kind", "train_images", "train_labels", "test_images",
                              "test_labels", "train_subset", "test_subset"}, "dataset")
        cfg = IdxDataConfig(
            train_images=str(doc.get("train_images", "")),
            train_labels=str(doc.get("train_labels", "")),
            test_images=str(doc.get("test_images", "")),
            test_labels=str(doc.get("test_labels", "")),
            train_subset=_take(doc, "train_subset", None, int),
            test_subset=_take(doc, "test_subset", None, int),
        )
        for label in ("train_images", "train_labels", "test_images", "test_labels"):
            path = getattr(cfg, label)
            if not path:
                raise ConfigError(f"idx dataset: '{label}' path is required")
            if not os.path.exists(path):
                raise ConfigError(f"idx dataset: {label} file not found: {path}")
        return cfg
    raise ConfigError(f"dataset.kind must be 'synthetic' or 'idx', got {kind!r}")


@dataclass(frozen=True)
class PlateauConfig:
    enabled: bool = False
    factor: float = 0.1
    patience: int = 5
    min_lr: float = 1e-6


def _parse_plateau(doc) -> PlateauConfig:
    if doc is None:
        return PlateauConfig()
    _reject_unknown(doc, {"enabled", "factor", "patience", "min_lr"}, "plateau")
    return PlateauConfig(
        enabled=bool(doc.get("enabled", True)),
        factor=_take(doc, "factor", 0.1, float),
        patience=_take(doc, "patience", 5, int),
        min_lr=_take(doc, "min_lr", 1e-6, float),
    )


@dataclass(frozen=True)
class TrainConfig:
    dataset: SyntheticDataConfig | IdxDataConfig
    loss: str = "bolt"
    head_mapping: str = SHIFTED_SIGMOID  # default: softmax when loss is "ce"
    hidden_dims: tuple[int, ...] = (256, 128)
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    epochs: int | None = 5
    iterations: int | None = None
    batch_size: int = 64
    plateau: PlateauConfig = field(default_factory=PlateauConfig)
    validation_fraction: float = 0.1
    label_permutation_seed: int | None = None
    seeds: Seeds = field(default_factory=lambda: Seeds(0, 0, 0))


def parse_train_config(doc: dict) -> TrainConfig:
    _reject_unknown(doc, {"dataset", "loss", "head_mapping", "hidden_dims", "optimizer",
                          "learning_rate", "epochs", "iterations", "batch_size", "plateau",
                          "validation_fraction", "label_permutation_seed", "seeds"}, "train")
    if "dataset" not in doc:
        raise ConfigError("train: 'dataset' block is required")
    loss = _take(doc, "loss", "bolt", str)
    if loss not in ("bolt", "ce"):
        raise ConfigError(f"loss must be 'bolt' or 'ce', got {loss!r}")
    default_mapping = SHIFTED_SOFTMAX if loss == "ce" else SHIFTED_SIGMOID
    mapping = _take(doc, "head_mapping", default_mapping, str)
    if mapping not in MAPPINGS:
        raise ConfigError(f"head_mapping must be one of {MAPPINGS}, got {mapping!r}")
    epochs = _take(doc, "epochs", None, int)
    iterations = _take(doc, "iterations", None, int)
    if epochs is None and iterations is None:
        epochs = 5
    cfg = TrainConfig(
        dataset=_parse_dataset(doc["dataset"]),
        loss=loss,
        head_mapping=mapping,
        hidden_dims=tuple(int(d) for d in doc.get("hidden_dims", (256, 128))),
        optimizer=_take(doc, "optimizer", "adam", str),
        learning_rate=_take(doc, "learning_rate", 1e-3, float),
        epochs=epochs,
        iterations=iterations,
        batch_size=_take(doc, "batch_size", 64, int),
        plateau=_parse_plateau(doc.get("plateau")),
        validation_fraction=_take(doc, "validation_fraction", 0.1, float),
        label_permutation_seed=_take(doc, "label_permutation_seed", None, int),
        seeds=_require_seeds(doc, "train"),
    )
    if cfg.optimizer not in ("sgd", "adam"):
        raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {cfg.optimizer!r}")
    if (cfg.epochs is not None) and (cfg.iterations is not None):
        raise ConfigError("specify only one of epochs / iterations")
    return cfg


@dataclass(frozen=True)
class ToySweepConfig:
    deltas: tuple[float, ...] = (-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0)
    train_samples_per_class: int = 10000
    test_samples: int = 1000
    iterations: int = 1000
    batch_size: int = 100
    hidden_dims: tuple[int, ...] = (100, 50)
    head_mapping: str = SHIFTED_SIGMOID
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    seeds: Seeds = field(default_factory=lambda: Seeds(0, 0, 0))


def parse_toy_sweep_config(doc: dict) -> ToySweepConfig:
    _reject_unknown(doc, {"deltas", "train_samples_per_class", "test_samples", "iterations",
                          "batch_size", "hidden_dims", "head_mapping", "optimizer",
                          "learning_rate", "seeds"}, "toy-sweep")
    cfg = ToySweepConfig(
        deltas=tuple(float(d) for d in doc.get("deltas", (-6, -4, -2, 0, 2, 4, 6))),
        train_samples_per_class=_take(doc, "train_samples_per_class", 10000, int),
        test_samples=_take(doc, "test_samples", 1000, int),
        iterations=_take(doc, "iterations", 1000, int),
        batch_size=_take(doc, "batch_size", 100, int),
        hidden_dims=tuple(int(d) for d in doc.get("hidden_dims", (100, 50))),
        head_mapping=_take(doc, "head_mapping", SHIFTED_SIGMOID, str),
        optimizer=_take(doc, "optimizer", "adam", str),
        learning_rate=_take(doc, "learning_rate", 1e-3, float),
        seeds=_require_seeds(doc, "toy-sweep"),
    )
    if not cfg.deltas:
        raise ConfigError("toy-sweep needs at least one delta")
    if cfg.test_samples % 2:
        raise ConfigError("test_samples must be even (two balanced classes)")
    return cfg


@dataclass(frozen=True)
class BoundConfig:
    means: tuple[float, ...] = (0.0, 2.0)
    variance: float = 1.0
    priors: tuple[float, ...] | None = None  # None = uniform; non-uniform is rejected
    train_samples_per_class: int = 5000
    eval_samples_per_class: int = 5000
    iterations: int = 1000
    batch_size: int = 100
    hidden_dims: tuple[int, ...] = (100, 50)
    head_mapping: str = SHIFTED_SIGMOID
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    model_path: str | None = None  # skip training, evaluate a saved model
    seeds: Seeds = field(default_factory=lambda: Seeds(0, 0, 0))


def parse_bound_config(doc: dict) -> BoundConfig:
    _reject_unknown(doc, {"means", "variance", "priors", "train_samples_per_class",
                          "eval_samples_per_class", "iterations", "batch_size", "hidden_dims",
                          "head_mapping", "optimizer", "learning_rate", "model_path",
                          "seeds"}, "bound")
    priors = doc.get("priors")
    cfg = BoundConfig(
        means=tuple(float(v) for v in doc.get("means", (0.0, 2.0))),
        variance=_take(doc, "variance", 1.0, float),
        priors=tuple(float(p) for p in priors) if priors is not None else None,
        train_samples_per_class=_take(doc, "train_samples_per_class", 5000, int),
        eval_samples_per_class=_take(doc, "eval_samples_per_class", 5000, int),
        iterations=_take(doc, "iterations", 1000, int),
        batch_size=_take(doc, "batch_size", 100, int),
        hidden_dims=tuple(int(d) for d in doc.get("hidden_dims", (100, 50))),
        head_mapping=_take(doc, "head_mapping", SHIFTED_SIGMOID, str),
        optimizer=_take(doc, "optimizer", "adam", str),
        learning_rate=_take(doc, "learning_rate", 1e-3, float),
        model_path=_take(doc, "model_path", None, str),
        seeds=_require_seeds(doc, "bound"),
    )
    if len(cfg.means) < 2:
        raise ConfigError("bound needs >= 2 class means")
    if cfg.priors is not None:
        m = len(cfg.means)
        if len(cfg.priors) != m:
            raise ConfigError(f"priors length {len(cfg.priors)} != {m} classes")
        if any(abs(p - 1.0 / m) > 1e-9 for p in cfg.priors):
            raise ConfigError(
                "bound requires uniform priors: the multiclass bound is only established "
                "for the uniform case (non-uniform priors are out of scope)"
            )
    if cfg.model_path is not None and not os.path.exists(cfg.model_path):
        raise ConfigError(f"model_path not found: {cfg.model_path}")
    return cfg


@dataclass(frozen=True)
class VerifyConfig:
    seed: int = VERIFY_DEFAULT_SEED
    identity_deltas: tuple[float, ...] = (0.5, 1.0, 2.0, 3.0, 4.0, 6.0)
    dominance_witnesses: int = 200
    dominance_samples: int = 4000
    telescoping_mixtures: int = 100
    gradient_cases: int = 50


def parse_verify_config(doc: dict | None) -> VerifyConfig:
    if doc is None:
        return VerifyConfig()
    _reject_unknown(doc, {"seed", "identity_deltas", "dominance_witnesses", "dominance_samples",
                          "telescoping_mixtures", "gradient_cases"}, "verify")
    return VerifyConfig(
        seed=_take(doc, "seed", VERIFY_DEFAULT_SEED, int),
        identity_deltas=tuple(float(d) for d in doc.get("identity_deltas",
                                                        (0.5, 1.0, 2.0, 3.0, 4.0, 6.0))),
        dominance_witnesses=_take(doc, "dominance_witnesses", 200, int),
        dominance_samples=_take(doc, "dominance_samples", 4000, int),
        telescoping_mixtures=_take(doc, "telescoping_mixtures", 100, int),
        gradient_cases=_take(doc, "gradient_cases", 50, int),
    )


def load_config(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}")
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return doc


def config_hash(resolved) -> str:
    """sha256 of the canonical JSON form of a resolved config dataclass."""
    doc = asdict(resolved) if not isinstance(resolved, dict) else resolved
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
