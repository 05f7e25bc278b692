"""Command-line harness: verify, toy-sweep, train, bound.

Every command takes --config <path> (JSON) and --out <dir>, runs fully
deterministically from the configured seeds, and writes machine-readable
outputs plus a summary record.  Exit codes: 0 success, 1 a check or
assertion failed, 2 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import checks, losses, net
from .bayes import ClassMixture, bound_multiclass_empirical, exact_bayes_error_grid
from .config import Seeds, ToySweepConfig, TrainConfig, VerifyConfig, BoundConfig, \
    config_hash, load_config, parse_bound_config, parse_toy_sweep_config, \
    parse_train_config, parse_verify_config
from .data import ClassSpec, Dataset, Rng, SyntheticSpec, derive_seed, load_idx, synthesize
from .divergence import q_function
from .errors import ConfigError, TrainingDivergedError

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2


def _fmt(x) -> str:
    """Numeric CSV rendering: 9 significant digits, nan spelled out."""
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.9g}"
    return str(x)


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_summary(out_dir: str, command: str, cfg, extra: dict, wall_seconds: float) -> None:
    doc = {
        "command": command,
        "config_hash": config_hash(cfg),
        "seeds": asdict(cfg.seeds) if hasattr(cfg, "seeds") else None,
        "wall_clock_seconds": round(wall_seconds, 3),
        **extra,
    }
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1, default=str)
        f.write("\n")


def _train_on(dataset: Dataset, test_set: Dataset | None, cfg, loss_kind: str,
              head_mapping: str, seeds: Seeds):
    """Build and fit a network from a resolved config; shared by commands."""
    m = dataset.num_classes
    head = m - 1 if head_mapping == losses.SHIFTED_SIGMOID else m
    model = net.init_network((dataset.d, *cfg.hidden_dims, head), head_mapping=head_mapping,
                             seed=seeds.init)
    optimizer = net.OptimizerState(cfg.optimizer, cfg.learning_rate)
    schedule = None
    plateau = getattr(cfg, "plateau", None)
    if plateau is not None and plateau.enabled:
        schedule = net.PlateauSchedule(plateau.factor, plateau.patience, plateau.min_lr)
    metrics = net.train(
        model, dataset, loss_kind, optimizer,
        schedule=schedule,
        epochs=getattr(cfg, "epochs", None),
        iterations=getattr(cfg, "iterations", None),
        batch_size=cfg.batch_size,
        shuffle_seed=seeds.shuffle,
        validation_fraction=getattr(cfg, "validation_fraction", 0.1),
        validation_seed=derive_seed(seeds.data, 0xA11),
        eval_dataset=test_set,
    )
    return model, metrics


def cmd_verify(cfg: VerifyConfig, out_dir: str) -> tuple[int, dict]:
    results = checks.run_all(cfg)
    all_passed = all(r.passed for r in results)
    report = {
        "passed": all_passed,
        "categories": sorted({r.category for r in results}),
        "checks": [asdict(r) for r in results],
    }
    with open(os.path.join(out_dir, "verify_report.json"), "w", encoding="utf-8") as f:
        json.dump(report, f, indent=1)
        f.write("\n")
    for r in results:
        status = "pass" if r.passed else "FAIL"
        print(f"[{status}] {r.category}/{r.name}: value={r.value:.6g} tol={r.tolerance:.6g}"
              + (f" ({r.detail})" if r.detail else ""))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"verify: {len(failed)} check(s) failed: " + ", ".join(failed))
        return EXIT_CHECK_FAILED, {"failed_checks": failed}
    print(f"verify: all {len(results)} checks passed across {len(report['categories'])} categories")
    return EXIT_OK, {"checks_run": len(results)}


def _toy_point(cfg: ToySweepConfig, index: int, delta: float) -> float:
    """Train and test one sweep point; per-point seeds derive from the sorted index."""
    seeds = Seeds(derive_seed(cfg.seeds.init, index),
                  derive_seed(cfg.seeds.data, index),
                  derive_seed(cfg.seeds.shuffle, index))
    classes = (ClassSpec((delta / 2.0,), 1.0), ClassSpec((-delta / 2.0,), 1.0))
    train_ds = synthesize(SyntheticSpec(classes, cfg.train_samples_per_class, seeds.data))
    test_ds = synthesize(SyntheticSpec(classes, cfg.test_samples // 2,
                                       derive_seed(seeds.data, 1)))
    model, _ = _train_on(train_ds, None, cfg, net.BOLT, cfg.head_mapping, seeds)
    accuracy, _ = net.evaluate(model, test_ds, net.BOLT)
    return 1.0 - accuracy


def cmd_toy_sweep(cfg: ToySweepConfig, out_dir: str) -> tuple[int, dict]:
    rows = []
    diverged = []
    for index, delta in enumerate(sorted(cfg.deltas)):
        bayes = q_function(abs(delta) / 2.0)
        try:
            trained = _toy_point(cfg, index, delta)
        except TrainingDivergedError as e:
            print(f"toy-sweep: delta={delta:g} diverged: {e}", file=sys.stderr)
            trained = math.nan
            diverged.append(delta)
        rows.append([delta, bayes, trained])
        print(f"delta={delta:+.4g}  bayes_error={bayes:.9g}  trained_error={_fmt(trained)}")
    _write_csv(os.path.join(out_dir, "sweep.csv"),
               ["delta", "bayes_error", "trained_error"], rows)
    extra = {"points": len(rows), "diverged_deltas": diverged}
    return (EXIT_CHECK_FAILED if diverged else EXIT_OK), extra


def _resolve_train_data(cfg: TrainConfig) -> tuple[Dataset, Dataset]:
    ds_cfg = cfg.dataset
    if hasattr(ds_cfg, "means"):  # synthetic
        classes = tuple(ClassSpec(mu, ds_cfg.variance) for mu in ds_cfg.means)
        train_ds = synthesize(SyntheticSpec(classes, ds_cfg.train_samples_per_class,
                                            cfg.seeds.data))
        test_ds = synthesize(SyntheticSpec(classes, ds_cfg.test_samples_per_class,
                                           derive_seed(cfg.seeds.data, 1)))
        return train_ds, test_ds
    train_ds = load_idx(ds_cfg.train_images, ds_cfg.train_labels)
    test_ds = load_idx(ds_cfg.test_images, ds_cfg.test_labels)
    num_classes = max(train_ds.num_classes, test_ds.num_classes)

    def subset(ds: Dataset, count: int | None, stream: int) -> Dataset:
        if count is None:
            return Dataset(ds.features, ds.labels, num_classes, ds.provenance)
        if count > ds.n:
            raise ConfigError(f"subset {count} exceeds dataset size {ds.n}")
        idx = Rng(cfg.seeds.data, stream=stream).permutation(ds.n)[:count]
        return Dataset(ds.features[idx], ds.labels[idx], num_classes, ds.provenance)

    return subset(train_ds, ds_cfg.train_subset, 0), subset(test_ds, ds_cfg.test_subset, 1)


def _permute_labels(ds: Dataset, seed: int) -> Dataset:
    """Relabel classes by a seeded permutation (class-order ablation only)."""
    perm = Rng(seed, stream=0).permutation(ds.num_classes)
    mapping = np.empty(ds.num_classes + 1, dtype=np.int64)
    mapping[1:] = perm + 1
    return Dataset(ds.features, mapping[ds.labels], ds.num_classes, ds.provenance)


def cmd_train(cfg: TrainConfig, out_dir: str) -> tuple[int, dict]:
    train_ds, test_ds = _resolve_train_data(cfg)
    if cfg.label_permutation_seed is not None:
        train_ds = _permute_labels(train_ds, cfg.label_permutation_seed)
        test_ds = _permute_labels(test_ds, cfg.label_permutation_seed)
    if cfg.loss == net.CE and cfg.head_mapping == losses.SHIFTED_SIGMOID \
            and train_ds.num_classes != 2:
        raise ConfigError("cross-entropy with the sigmoid head is only defined for 2 classes")
    model, metrics = _train_on(train_ds, test_ds, cfg, cfg.loss, cfg.head_mapping, cfg.seeds)
    _write_csv(
        os.path.join(out_dir, "metrics.csv"),
        ["epoch", "train_loss", "validation_loss", "test_accuracy", "test_error",
         "learning_rate"],
        [[r.epoch, r.train_loss, r.validation_loss, r.test_accuracy, r.test_error,
          r.learning_rate] for r in metrics],
    )
    net.save_model(model, os.path.join(out_dir, "model.json"))
    final = metrics[-1] if metrics else None
    print(f"train[{cfg.loss}]: epochs={len(metrics)} "
          f"final_test_accuracy={_fmt(final.test_accuracy) if final else 'n/a'}")
    extra = {
        "final_test_accuracy": final.test_accuracy if final else None,
        "final_train_loss": final.train_loss if final else None,
        "epochs_run": len(metrics),
    }
    return EXIT_OK, extra


def cmd_bound(cfg: BoundConfig, out_dir: str) -> tuple[int, dict]:
    m = len(cfg.means)
    mix = ClassMixture.uniform(cfg.means, cfg.variance)
    classes = tuple(ClassSpec((mu,), cfg.variance) for mu in cfg.means)

    if cfg.model_path is not None:
        model = net.load_model(cfg.model_path)
    else:
        train_ds = synthesize(SyntheticSpec(classes, cfg.train_samples_per_class,
                                            cfg.seeds.data))
        model, _ = _train_on(train_ds, None, cfg, net.BOLT, cfg.head_mapping, cfg.seeds)

    eval_ds = synthesize(SyntheticSpec(classes, cfg.eval_samples_per_class,
                                       derive_seed(cfg.seeds.data, 1)))
    raw = net.forward(model, eval_ds.features).raw_outputs
    h, _ = losses.map_outputs_batch(raw, model.head_mapping, m)
    report = bound_multiclass_empirical([h[eval_ds.labels == lam] for lam in range(1, m + 1)])

    exact = exact_bayes_error_grid(mix)
    se = report.bound_standard_error
    holds = bool(report.bound_value >= exact - 3.0 * se)
    doc = {
        "bound": report.bound_value,
        "exact_bayes_error": exact,
        "gap": report.bound_value - exact,
        "bound_standard_error": se,
        "bound_holds_within_3se": holds,
        "per_class_terms": list(report.per_class_terms),
        "per_class_standard_errors": list(report.standard_errors),
        "sample_counts": list(report.sample_counts),
    }
    with open(os.path.join(out_dir, "bound_report.json"), "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")
    print(f"bound={report.bound_value:.9g} exact={exact:.9g} gap={doc['gap']:.9g} "
          f"se={se:.3g} holds={holds}")
    if not holds:
        print("bound: upper bound fell more than 3 standard errors below the exact "
              "Bayes error", file=sys.stderr)
        return EXIT_CHECK_FAILED, doc
    return EXIT_OK, doc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boltlab",
        description="Bayes error rates, f-divergence sampling bounds, and BOLT-loss training",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "verify": "run the identity/dominance/telescoping/gradient property suites",
        "toy-sweep": "train binary BOLT models across mean gaps and compare to the exact error",
        "train": "one training run (BOLT or cross-entropy) with metrics, model, and summary",
        "bound": "evaluate the multiclass Bayes-error bound against the exact value",
    }
    for name, text in specs.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=(name != "verify"),
                       help="JSON config path" + (" (optional)" if name == "verify" else ""))
        p.add_argument("--out", required=True, help="output directory (created if missing)")
    return parser


_PARSERS = {
    "verify": lambda path: parse_verify_config(load_config(path) if path else None),
    "toy-sweep": lambda path: parse_toy_sweep_config(load_config(path)),
    "train": lambda path: parse_train_config(load_config(path)),
    "bound": lambda path: parse_bound_config(load_config(path)),
}

_COMMANDS = {
    "verify": cmd_verify,
    "toy-sweep": cmd_toy_sweep,
    "train": cmd_train,
    "bound": cmd_bound,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = _PARSERS[args.command](args.config)
        os.makedirs(args.out, exist_ok=True)
        code, extra = _COMMANDS[args.command](cfg, args.out)
        _write_summary(args.out, args.command, cfg, {"exit_code": code, **extra},
                       time.perf_counter() - started)
        return code
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as e:
        print(f"training error: {e}", file=sys.stderr)
        return EXIT_CHECK_FAILED


def console_main() -> None:
    sys.exit(main())
