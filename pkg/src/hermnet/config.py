"""Flat ``key = value`` run configuration.

Lines are ``key = value``; ``#`` starts a comment.  Resolution order, later
wins: built-in defaults, the config file, ``HERMNET_<KEY>`` environment
variables, command-line flags.  Unknown keys are rejected everywhere.
"""
from __future__ import annotations

import os

from .exceptions import ConfigError

ENV_PREFIX = "HERMNET_"


def _bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text):
    text = str(text).strip()
    return tuple(int(t) for t in text.split(",") if t.strip()) if text else ()


def _floats(text):
    text = str(text).strip()
    return tuple(float(t) for t in text.split(",") if t.strip()) if text else ()


def _names(text):
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


# key -> (parser, default)
SCHEMA = {
    # data
    "dataset": (str, "two_moons"),
    "data_path": (str, ""),
    "labels_path": (str, ""),
    "n_samples": (int, 500),
    "noise": (float, 0.1),
    "n_classes": (int, 3),
    "per_class": (int, 100),
    "n_features": (int, 2),
    "spread": (float, 0.3),
    "test_fraction": (float, 0.2),
    "label_noise": (float, 0.0),
    # architecture
    "hidden": (_ints, (256, 256)),
    "encoder": (_ints, (32, 16, 8)),
    "activation": (str, "hermite"),
    "degree": (int, 4),
    "normalize": (_bool, True),
    "residual": (_bool, False),
    "coefficients": (_floats, ()),
    "trainable_coefficients": (_bool, True),
    # optimization
    "optimizer": (str, "sgd"),
    "learning_rate": (float, 0.1),
    "momentum": (float, 0.9),
    "adam_eps": (float, 1e-8),
    "epochs": (int, 20),
    "batch_size": (int, 128),
    # SaaS
    "n_labeled": (int, 50),
    "inner_epochs": (int, 5),
    "outer_epochs": (int, 30),
    "lr_weights": (float, 0.1),
    "lr_primal": (float, 1.0),
    "lr_dual": (float, 1.0),
    "entropy_weight": (float, 0.1),
    "entropy_floor": (float, 1e-3),
    "hard_targets": (_bool, False),
    "saas_batch_size": (int, 64),
    "accuracy_threshold": (float, 0.85),
    "seconds_per_epoch": (float, 0.0),
    "dollars_per_hour": (float, 24.48),
    # diagnostics
    "probes": (_names, ("landscape", "active_units", "confidence")),
    "etas": (_floats, tuple(round(0.05 * k, 2) for k in range(1, 21))),
    "n_directions": (int, 20),
    "radii": (_floats, tuple(float(r) for r in range(1, 51))),
    "probe_samples": (int, 256),
    "trajectory_steps": (int, 50),
    # coefficients
    "max_degree": (int, 10),
    # run
    "seed": (int, 0),
    "seeds": (_ints, ()),
    "jobs": (int, 1),
    "out": (str, "runs"),
    "timing": (_bool, False),
}


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RunConfig(dict):
    """Typed mapping restricted to :data:`SCHEMA` keys."""

    def __init__(self, values=None):
        super().__init__({k: default for k, (_, default) in SCHEMA.items()})
        for key, value in (values or {}).items():
            self.set(key, value)

    def set(self, key, value, source="value"):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r} ({source})")
        parser = SCHEMA[key][0]
        if isinstance(value, str):
            try:
                value = parser(value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r} ({source}): {exc}") from None
        self[key] = value

    def dumps(self):
        return "".join(f"{k} = {_format(self[k])}\n" for k in SCHEMA)

    def write(self, path):
        with open(path, "w") as fh:
            fh.write("# resolved hermnet run configuration\n")
            fh.write(self.dumps())


def parse(text, source="<string>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = (value, f"{source}:{lineno}")
    return values


def load(path=None, overrides=None, environ=None, base=None):
    """Resolve defaults, ``base`` (per-command defaults), file, environment and overrides."""
    config = RunConfig(base)
    if path:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        for key, (value, where) in parse(text, path).items():
            config.set(key, value, where)
    environ = os.environ if environ is None else environ
    for name, value in sorted(environ.items()):
        if name.startswith(ENV_PREFIX):
            config.set(name[len(ENV_PREFIX):].lower(), value, f"environment {name}")
    for key, value in (overrides or {}).items():
        if value is not None:
            config.set(key, value, "command line")
    return config
