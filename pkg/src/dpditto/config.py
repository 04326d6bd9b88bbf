"""Experiment configuration: a TOML file validated against a fixed schema.

Unknown sections or keys, wrong types and out-of-range values are reported
with the line they appear on.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .core import AssumptionParams, PrivacySpec, TrainingConfig
from .errors import ConfigError

REQUIRED = object()
_NUM = (int, float)

SCHEMA: dict[str, dict[str, tuple[Any, Any]]] = {
    "experiment": {
        "seed": (int, 0),
        "model": (str, "quadratic"),
        "hidden": (int, 16),
        "out": (str, "out"),
    },
    "training": {
        "n_clients": (int, REQUIRED),
        "rounds": (int, REQUIRED),
        "eta_g": (_NUM, REQUIRED),
        "eta_l": (_NUM, REQUIRED),
        "lam": (_NUM, REQUIRED),
        "local_epochs": (int, 1),
        "personal_epochs": (int, 1),
        "batch_size": (int, None),
    },
    "privacy": {
        "epsilon": ((int, float, str), REQUIRED),
        "delta": (_NUM, REQUIRED),
        "clip_c": (_NUM, REQUIRED),
    },
    "data": {
        "source": (str, REQUIRED),
        # synthetic-blr
        "b": (int, None),
        "d": (int, None),
        "rho": (_NUM, None),
        "zeta2": (_NUM, None),
        "sigma2": (_NUM, None),
        # idx-files
        "images": (str, None),
        "labels": (str, None),
        "test_images": (str, None),
        "test_labels": (str, None),
        # synthetic-classification / idx-files
        "n_samples": (int, None),
        "n_features": (int, 20),
        "n_classes": (int, 10),
        "separation": (_NUM, 1.0),
        "test_fraction": (_NUM, 0.0),
        "partition": (str, "iid"),
        "shards": (int, 2),
    },
    "assumptions": {
        "mu": (_NUM, REQUIRED),
        "l_smooth": (_NUM, REQUIRED),
        "g0": (_NUM, REQUIRED),
        "m_dist": (_NUM, REQUIRED),
        "psi1": (_NUM, REQUIRED),
        "psi2": (_NUM, REQUIRED),
    },
    "analysis": {
        "bounds": (bool, False),
        "fairness": (bool, False),
        "optimize": (bool, False),
        "oracle": (bool, False),
        "t_max": (int, 100),
        "lambda_grid": (list, [0.0, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 2.0]),
        "t_grid": (list, None),
        "oracle_trials": (int, 10_000),
        "oracle_mode": (str, "independent"),
        "gradcheck_instances": (int, 20),
    },
    "sweep": {
        "seeds": (list, None),
        "epsilons": (list, None),
        "lambdas": (list, None),
        "rounds": (list, None),
    },
}

SOURCE_KEYS = {
    "synthetic-blr": {"b", "d", "rho", "zeta2", "sigma2"},
    "idx-files": {"images", "labels", "test_images", "test_labels", "n_samples", "partition", "shards"},
    "synthetic-classification": {"n_samples", "n_features", "n_classes", "separation",
                                 "test_fraction", "partition", "shards"},
}
OPTIONAL_SECTIONS = {"experiment", "assumptions", "analysis", "sweep"}


def _line_index(text: str) -> dict[tuple[str, str | None], int]:
    """Map ``(section, key)`` (and ``(section, None)`` for headers) to 1-based lines."""
    out: dict[tuple[str, str | None], int] = {}
    section = ""
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[\s*([^\]\s]+)\s*\]", s)
        if m:
            section = m.group(1)
            out.setdefault((section, None), i)
            continue
        m = re.match(r'^"?([A-Za-z0-9_\-]+)"?\s*=', s)
        if m:
            out.setdefault((section, m.group(1)), i)
    return out


@dataclass
class ExperimentConfig:
    training: TrainingConfig
    privacy: PrivacySpec
    model: str
    hidden: int
    out: str
    data: dict
    assumptions: AssumptionParams | None
    analysis: dict
    sweep: dict
    raw_text: str = field(repr=False, default="")

    @property
    def seed(self) -> int:
        return self.training.seed


def _check_type(value, expected, where, line):
    if expected is _NUM:
        ok = isinstance(value, _NUM) and not isinstance(value, bool)
    elif expected is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(expected, tuple):
        ok = isinstance(value, expected) and not isinstance(value, bool)
    else:
        ok = isinstance(value, expected)
    if not ok:
        raise ConfigError(f"{where}: expected {_type_name(expected)}, got {type(value).__name__}", line)


def _type_name(t):
    if t is _NUM:
        return "number"
    if isinstance(t, tuple):
        return " or ".join(x.__name__ for x in t)
    return t.__name__


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"{source}: invalid TOML: {exc}", int(m.group(1)) if m else None) from None
    lines = _line_index(text)
    values: dict[str, dict[str, Any]] = {}

    for section, body in doc.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", lines.get((section, None)))
        if not isinstance(body, dict):
            raise ConfigError(f"{section} must be a table", lines.get(("", section)))
    for section, fields in SCHEMA.items():
        body = doc.get(section)
        if body is None:
            if section in OPTIONAL_SECTIONS:
                values[section] = {k: d for k, (_, d) in fields.items()} if section != "assumptions" else None
                continue
            raise ConfigError(f"missing required section [{section}]")
        sec_vals = {}
        for key, val in body.items():
            line = lines.get((section, key))
            if key not in fields:
                raise ConfigError(f"unknown key {section}.{key}", line)
            _check_type(val, fields[key][0], f"{section}.{key}", line)
            sec_vals[key] = val
        for key, (_, default) in fields.items():
            if key not in sec_vals:
                if default is REQUIRED:
                    raise ConfigError(f"missing required key {section}.{key}", lines.get((section, None)))
                sec_vals[key] = default
        values[section] = sec_vals

    data = values["data"]
    src = data["source"]
    if src not in SOURCE_KEYS:
        raise ConfigError(f"data.source must be one of {sorted(SOURCE_KEYS)}, got {src!r}",
                          lines.get(("data", "source")))
    for key in doc["data"]:
        if key != "source" and key not in SOURCE_KEYS[src]:
            raise ConfigError(f"key data.{key} does not apply to source {src!r}", lines.get(("data", key)))
    if src == "synthetic-blr":
        for key in SOURCE_KEYS[src]:
            if data[key] is None:
                raise ConfigError(f"synthetic-blr needs data.{key}", lines.get(("data", None)))
    if src == "idx-files":
        for key in ("images", "labels"):
            if data[key] is None:
                raise ConfigError(f"idx-files needs data.{key}", lines.get(("data", None)))
            if not Path(data[key]).is_file():
                raise ConfigError(f"data.{key}: file not found: {data[key]}", lines.get(("data", key)))
    if src == "synthetic-classification" and data["n_samples"] is None:
        raise ConfigError("synthetic-classification needs data.n_samples", lines.get(("data", None)))
    if data["partition"] not in ("iid", "label-shard"):
        raise ConfigError("data.partition must be 'iid' or 'label-shard'", lines.get(("data", "partition")))

    exp = values["experiment"]
    if exp["model"] not in ("quadratic", "mlr", "mlp"):
        raise ConfigError(f"experiment.model must be quadratic, mlr or mlp, got {exp['model']!r}",
                          lines.get(("experiment", "model")))
    if src == "synthetic-blr" and exp["model"] != "quadratic":
        raise ConfigError("synthetic-blr data requires the quadratic model", lines.get(("experiment", "model")))

    eps = values["privacy"]["epsilon"]
    if isinstance(eps, str):
        if eps.lower() not in ("inf", "infinity"):
            raise ConfigError("privacy.epsilon must be a number or \"inf\"", lines.get(("privacy", "epsilon")))
        eps = math.inf

    tr = values["training"]
    try:
        training = TrainingConfig(n_clients=tr["n_clients"], rounds=tr["rounds"], eta_g=float(tr["eta_g"]),
                                  eta_l=float(tr["eta_l"]), lam=float(tr["lam"]), seed=exp["seed"],
                                  local_epochs=tr["local_epochs"], personal_epochs=tr["personal_epochs"],
                                  batch_size=tr["batch_size"])
    except ValueError as exc:
        raise ConfigError(f"[training]: {exc}", lines.get(("training", None))) from None
    try:
        privacy = PrivacySpec(float(eps), float(values["privacy"]["delta"]), float(values["privacy"]["clip_c"]))
    except ValueError as exc:
        raise ConfigError(f"[privacy]: {exc}", lines.get(("privacy", None))) from None
    assumptions = None
    if values["assumptions"] is not None:
        try:
            assumptions = AssumptionParams(**{k: float(v) for k, v in values["assumptions"].items()})
        except ValueError as exc:
            raise ConfigError(f"[assumptions]: {exc}", lines.get(("assumptions", None))) from None

    ana = values["analysis"]
    if ana["oracle_mode"] not in ("independent", "correlated"):
        raise ConfigError("analysis.oracle_mode must be independent or correlated",
                          lines.get(("analysis", "oracle_mode")))
    for key in ("lambda_grid",):
        for v in ana[key]:
            if not isinstance(v, _NUM) or isinstance(v, bool) or not 0 <= v <= 2:
                raise ConfigError(f"analysis.{key} entries must be numbers in [0, 2]", lines.get(("analysis", key)))
    if ana["t_grid"] is not None and not all(isinstance(v, int) and v >= 1 for v in ana["t_grid"]):
        raise ConfigError("analysis.t_grid entries must be positive integers", lines.get(("analysis", "t_grid")))
    sweep = values["sweep"]
    for key, kind in (("seeds", int), ("rounds", int), ("epsilons", None), ("lambdas", None)):
        if sweep[key] is None:
            continue
        for v in sweep[key]:
            ok = isinstance(v, int) if kind is int else (isinstance(v, _NUM) or v == "inf")
            if not ok or isinstance(v, bool):
                raise ConfigError(f"sweep.{key} has an invalid entry {v!r}", lines.get(("sweep", key)))
        if key == "epsilons":
            sweep[key] = [math.inf if v == "inf" else float(v) for v in sweep[key]]

    return ExperimentConfig(training, privacy, exp["model"], exp["hidden"], exp["out"], data,
                            assumptions, ana, sweep, raw_text=text)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(p))
