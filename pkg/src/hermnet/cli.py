"""Command-line experiment runner.

Every subcommand writes its outputs plus ``config.resolved`` into ``--out``.
CSV files start with a ``# hermnet-csv v1 <kind>`` line followed by the
column header.  Wall-clock columns are zero unless ``timing = true``, so
repeated runs with the same configuration produce identical bytes.

Exit codes: 0 success, 2 configuration error, 3 numeric abort, 4 I/O error.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np

from . import checkpoint, config as cfg, data
from .diagnostics import (active_unit_census, confidence_sweep, format_block, loss_along_gradient,
                          max_beta_smoothness, record_trajectory, weight_deviation)
from .exceptions import ConfigError, FormatError, NumericError, StructuralError
from .hermite import projection_residuals, relu
from .models import (METRIC_COLUMNS, AutoencoderSpec, MlpSpec, Split, TrainingAborted, build,
                     train_supervised)
from .optim import SGD, make_optimizer
from .rng import derive_seed, permutation
from .saas import (SAAS_COLUMNS, SaasConfig, cost_model, epochs_to_accuracy, max_accuracy,
                   max_accuracy_gap, saas_train)

SCHEMA_VERSION = "v1"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

COMMAND_DEFAULTS = {
    "train": {},
    "autoencoder": {"dataset": "digits", "optimizer": "adam", "learning_rate": 1e-3, "normalize": False},
    "saas": {"dataset": "blobs", "hidden": (32, 32), "spread": 0.1, "per_class": 100},
    "diagnose": {"dataset": "blobs", "hidden": (32, 32)},
    "coeffs": {},
    "cost": {},
}


# ---------------------------------------------------------------------------
# output helpers


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, kind, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# hermnet-csv {SCHEMA_VERSION} {kind}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _clock(config):
    return time.perf_counter if config["timing"] else (lambda: 0.0)


def _prepare_out(path, config):
    os.makedirs(path, exist_ok=True)
    config.write(os.path.join(path, "config.resolved"))
    return path


# ---------------------------------------------------------------------------
# data and models from config


def load_dataset(config):
    """Build the configured dataset; path problems surface before any compute."""
    name = config["dataset"]
    seed = config["seed"]
    if name in ("idx", "csv"):
        paths = [config["data_path"]] + ([config["labels_path"]] if name == "idx" else [])
        for p in paths:
            if not p:
                raise ConfigError(f"dataset={name} needs data_path" + (" and labels_path" if name == "idx" else ""))
            if not os.path.exists(p):
                raise ConfigError(f"dataset file not found: {p}")
    if name == "two_moons":
        ds = data.synth_two_moons(config["n_samples"], config["noise"], seed)
    elif name == "blobs":
        ds = data.synth_blobs(config["n_classes"], config["per_class"], config["n_features"], config["spread"], seed)
    elif name == "mnist5k":
        ds = data.load_mnist_5k()
    elif name == "digits":
        ds = data.load_digits_8x8()
    elif name == "idx":
        ds = data.load_idx(config["data_path"], config["labels_path"])
    elif name == "csv":
        ds = data.Dataset.from_csv(config["data_path"])
    else:
        raise ConfigError(f"unknown dataset {name!r}")
    return ds


def mlp_spec(config, n_in, n_out, activation=None):
    coeffs = config["coefficients"] or None
    try:
        return MlpSpec((n_in, *config["hidden"], n_out), activation or config["activation"], config["degree"],
                       config["normalize"], config["residual"], coefficients=coeffs,
                       trainable_coefficients=config["trainable_coefficients"])
    except StructuralError as exc:
        raise ConfigError(str(exc)) from None


def _optimizer(config, model):
    return make_optimizer(config["optimizer"], model.parameters(), config["learning_rate"],
                          config["momentum"], config["adam_eps"])


def _seeds(config):
    return list(config["seeds"]) or [config["seed"]]


def _run_seeds(fn, config, out):
    """Run ``fn(config, out)`` once per seed; several seeds go to ``out/seed_<n>``."""
    seeds = _seeds(config)
    if len(seeds) == 1:
        config = cfg.RunConfig(dict(config, seed=seeds[0], seeds=()))
        return fn(config, out)
    jobs = []
    for s in seeds:
        jobs.append((cfg.RunConfig(dict(config, seed=s, seeds=())), os.path.join(out, f"seed_{s}")))
    if config["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=config["jobs"]) as pool:
            codes = list(pool.map(fn, *zip(*jobs)))
    else:
        codes = [fn(c, o) for c, o in jobs]
    return max(codes)


# ---------------------------------------------------------------------------
# subcommands


def run_train(config, out):
    ds = load_dataset(config).with_test_split(config["test_fraction"], config["seed"])
    _prepare_out(out, config)
    train, test = ds.train, ds.test
    labels = train.labels
    if config["label_noise"]:
        labels, _ = data.inject_label_noise(labels, config["label_noise"], config["seed"], ds.n_classes)
    spec = mlp_spec(config, ds.n_features, ds.n_classes)
    model = build(spec, config["seed"])
    opt = _optimizer(config, model)
    code = EXIT_OK
    try:
        log = train_supervised(model, Split(train.features, labels, ds.n_classes),
                               Split(test.features, test.labels, ds.n_classes), opt, config["epochs"],
                               seed=config["seed"], batch_size=config["batch_size"], clock=_clock(config))
    except TrainingAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        log, code = exc.log, EXIT_NUMERIC
    write_csv(os.path.join(out, "metrics.csv"), "metrics", METRIC_COLUMNS, [r.row() for r in log])
    if code == EXIT_OK:
        checkpoint.save_model(os.path.join(out, "model.ckpt"), model,
                              {"widths": list(spec.widths), "activation": spec.activation, "degree": spec.degree})
        last = log[-1] if log else None
        if last is not None:
            print(f"seed {config['seed']}: train_loss {last.train_loss:.4f} test_acc {last.test_acc:.4f}")
    return code


def run_autoencoder(config, out):
    ds = load_dataset(config).with_test_split(config["test_fraction"], config["seed"])
    _prepare_out(out, config)
    try:
        spec = AutoencoderSpec((ds.n_features, *config["encoder"]), config["activation"], config["degree"],
                               config["normalize"])
    except StructuralError as exc:
        raise ConfigError(str(exc)) from None
    model = build(spec, config["seed"])
    code = EXIT_OK
    try:
        log = train_supervised(model, Split(ds.train.features), Split(ds.test.features), _optimizer(config, model),
                               config["epochs"], seed=config["seed"], batch_size=config["batch_size"],
                               task="reconstruct", clock=_clock(config))
    except TrainingAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        log, code = exc.log, EXIT_NUMERIC
    write_csv(os.path.join(out, "metrics.csv"), "metrics", METRIC_COLUMNS, [r.row() for r in log])
    if code == EXIT_OK:
        checkpoint.save_model(os.path.join(out, "model.ckpt"), model, {"widths": list(spec.widths)})
    return code


def _saas_arm(config, ds, split, activation):
    k = ds.n_classes
    model = build(mlp_spec(config, ds.n_features, k, activation), config["seed"])
    sc = SaasConfig(config["inner_epochs"], config["outer_epochs"], config["lr_weights"], config["lr_primal"],
                    config["lr_dual"], config["entropy_weight"], config["saas_batch_size"], config["seed"],
                    config["hard_targets"], config["entropy_floor"])
    X, y = ds.features, ds.labels
    return saas_train(model, X[split.labeled], y[split.labeled], X[split.unlabeled], sc, k,
                      y[split.unlabeled], clock=_clock(config))


def run_saas(config, out, compare_relu=False):
    ds = load_dataset(config).mean_normalized()
    _prepare_out(out, config)
    try:
        split = data.make_ssl_split(ds, config["n_labeled"], config["seed"])
    except StructuralError as exc:
        raise ConfigError(str(exc)) from None
    arms = [("H", config["activation"])]
    if compare_relu:
        arms = [("H", "hermite"), ("R", "relu")]
    results, code = {}, EXIT_OK
    for tag, activation in arms:
        result = _saas_arm(config, ds, split, activation)
        results[tag] = result
        if result.aborted_at is not None:
            print(f"error: arm {tag} aborted at outer epoch {result.aborted_at}", file=sys.stderr)
            code = EXIT_NUMERIC
        write_csv(os.path.join(out, f"pseudo_labels_{tag}.csv"), "saas", SAAS_COLUMNS, [r.row() for r in result.log])
        k = result.posterior.shape[1]
        write_csv(os.path.join(out, f"posterior_{tag}.csv"), "posterior", ["index"] + [f"p_{j}" for j in range(k)],
                  [[int(i), *row] for i, row in zip(split.unlabeled, result.posterior)])
    rows = []
    for tag, result in results.items():
        other = [r for t, r in results.items() if t != tag]
        gap = max_accuracy_gap(result.log, other[0].log) if other and result.log and other[0].log else None
        n_epochs = len(result.log) * config["inner_epochs"]
        measured = sum(r.seconds for r in result.log) / n_epochs if n_epochs else 0.0
        per_epoch = config["seconds_per_epoch"] or measured
        cost = cost_model(n_epochs, per_epoch, config["dollars_per_hour"])
        rows.append([tag, max_accuracy(result.log) if result.log else None,
                     epochs_to_accuracy(result.log, config["accuracy_threshold"]) if result.log else None,
                     gap, n_epochs, per_epoch, cost.hours, cost.dollars])
        print(f"{tag}: max_pl_acc {_fmt(rows[-1][1])} epochs_to_{config['accuracy_threshold']} {_fmt(rows[-1][2])}"
              f" cost ${cost.dollars:.2f}")
    write_csv(os.path.join(out, "summary.csv"), "saas-summary",
              ["arm", "max_pl_acc", "epochs_to_threshold", "max_gap", "epochs", "seconds_per_epoch", "hours", "dollars"],
              rows)
    return code


def run_diagnose(config, out, probes=None, ckpt=None):
    probes = tuple(probes or config["probes"])
    known = {"landscape", "active_units", "confidence", "smoothness"}
    unknown = set(probes) - known
    if unknown:
        raise ConfigError(f"unknown probe(s) {sorted(unknown)}; choose from {sorted(known)}")
    ds = load_dataset(config)
    _prepare_out(out, config)
    model = build(mlp_spec(config, ds.n_features, ds.n_classes), config["seed"])
    if ckpt:
        checkpoint.load_model(ckpt, model)
    take = permutation(derive_seed(config["seed"], "probe"), len(ds))[: config["probe_samples"]]
    X, y = ds.features[take], ds.labels[take]
    blocks = []
    if "landscape" in probes:
        probe = loss_along_gradient(model, X, y, ds.n_classes, sorted(config["etas"]))
        blocks.append(format_block("landscape", {"samples": len(X)}, ["eta", "loss"], zip(probe.etas, probe.losses)))
    if "active_units" in probes:
        fractions = active_unit_census(model, X)
        blocks.append(format_block("active_units", {"tau": 0.0, "samples": len(X)}, ["layer", "fraction"],
                                   enumerate(fractions)))
    if "confidence" in probes:
        radii = sorted(config["radii"])
        conf = confidence_sweep(model, config["n_directions"], radii, config["seed"])
        rows = [(i, r, c) for i, profile in enumerate(conf) for r, c in zip(radii, profile)]
        blocks.append(format_block("confidence", {"directions": config["n_directions"], "classes": ds.n_classes},
                                   ["direction", "radius", "max_prob"], rows))
    if "smoothness" in probes:
        copy = model.copy()
        traj = record_trajectory(copy, X, y, ds.n_classes, SGD(copy.parameters(), config["learning_rate"]),
                                 config["trajectory_steps"], seed=config["seed"])
        beta = max_beta_smoothness(traj.weights, traj.gradients)
        blocks.append(format_block("smoothness", {"steps": config["trajectory_steps"], "max_beta": repr(beta)},
                                   ["step", "weight_deviation"], enumerate(weight_deviation(traj.weights))))
    with open(os.path.join(out, "report.csv"), "w") as fh:
        fh.write(f"# hermnet-csv {SCHEMA_VERSION} diagnostics\n")
        fh.write("".join(blocks))
    return EXIT_OK


def run_coeffs(config, out):
    d = config["max_degree"]
    if d < 0:
        raise ConfigError("degree must be >= 0")
    _prepare_out(out, config)
    residuals, c = projection_residuals(relu, d)
    rows = [(i, c[i], residuals[i]) for i in range(d + 1)]
    print("degree  coefficient           residual")
    for i, ci, ri in rows:
        print(f"{i:>6}  {ci:>20.12g}  {ri:.12g}")
    write_csv(os.path.join(out, "coefficients.csv"), "coefficients", ["degree", "coefficient", "residual"], rows)
    return EXIT_OK


def run_cost(args):
    if args.hours is not None:
        hours = args.hours
    elif args.epochs is not None and args.seconds_per_epoch is not None:
        hours = cost_model(args.epochs, args.seconds_per_epoch, 0.0).hours
    else:
        raise ConfigError("give --hours, or --epochs with --seconds-per-epoch")
    dollars = hours * args.rate
    if hours < 0 or args.rate < 0:
        raise ConfigError("cost inputs must be non-negative")
    print(f"hours {hours:.4f} dollars {dollars:.2f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _common(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, help="parallel workers when several seeds are configured")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")


def build_parser():
    parser = argparse.ArgumentParser(prog="hermnet", description="Hermite-activation networks and SaaS experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("train", help="supervised MLP training")
    _common(p)
    p.add_argument("--checkpoint", help="checkpoint path (default OUT/model.ckpt)")
    p = sub.add_parser("autoencoder", help="reconstruction benchmark")
    _common(p)
    p = sub.add_parser("saas", help="SaaS pseudo-labeling")
    _common(p)
    p.add_argument("--compare-relu", action="store_true", help="run hermite and relu arms with a shared seed")
    p = sub.add_parser("diagnose", help="landscape, active-unit and confidence probes")
    _common(p)
    p.add_argument("--checkpoint", help="model checkpoint to probe (default: fresh model)")
    p.add_argument("--probe", help="comma-separated probe names")
    p = sub.add_parser("coeffs", help="ReLU expansion coefficients and residuals")
    _common(p)
    p.add_argument("degree", type=int, nargs="?", help="maximum degree")
    p = sub.add_parser("cost", help="on-demand cost of a run")
    p.add_argument("--hours", type=float)
    p.add_argument("--epochs", type=float)
    p.add_argument("--seconds-per-epoch", type=float)
    p.add_argument("--rate", type=float, default=24.48, help="dollars per hour")
    return parser


def _resolve(args):
    overrides = {"seed": args.seed, "out": args.out, "jobs": args.jobs}
    if getattr(args, "degree", None) is not None:
        overrides["max_degree"] = args.degree
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return cfg.load(args.config, {k: (str(v) if v is not None else None) for k, v in overrides.items()},
                    base=COMMAND_DEFAULTS[args.command])


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "cost":
            return run_cost(args)
        config = _resolve(args)
        out = config["out"]
        if args.command == "train":
            code = _run_seeds(run_train, config, out)
            if args.checkpoint and code == EXIT_OK and len(_seeds(config)) == 1:
                os.replace(os.path.join(out, "model.ckpt"), args.checkpoint)
            return code
        if args.command == "autoencoder":
            return _run_seeds(run_autoencoder, config, out)
        if args.command == "saas":
            return _run_seeds(partial(run_saas, compare_relu=args.compare_relu), config, out)
        if args.command == "diagnose":
            probes = [p.strip() for p in args.probe.split(",")] if args.probe else None
            return run_diagnose(config, out, probes, args.checkpoint)
        if args.command == "coeffs":
            return run_coeffs(config, out)
    except (ConfigError, StructuralError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
