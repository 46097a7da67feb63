"""Experiment configuration: TOML sections with every default spelled out.

A config file has up to six sections. Unknown sections or keys are rejected
with the offending name, so typos never silently fall back to a default.

    [dataset]
    kind = "three_moons"      # three_moons | torus | delimited | idx | embedding
    path = ""                 # data file (delimited, idx images, embedding)
    labels_path = ""          # idx labels / embedding label CSV
    n_per_moon = 500
    noise_sd = 0.14
    ambient_dim = 100
    n = 2000                  # torus size
    classes = 2               # torus classes
    seed = 0                  # generator seed of synthetic data
    label_column = -1
    delimiter = ","
    skip_header = false

    [graph]
    k = 10
    laplacian = "random_walk" # random_walk | combinatorial
    spectrum_K = 0            # 0 means int(20 ln N), capped at N

    [kernel]
    kind = "squared_rw"       # squared_rw | squared_rw_twice | shifted_squared_rw
                              # | rank_k_heat | positive_taylor
    h = 1.0
    J = 2
    r = 0.1                   # shift of shifted_squared_rw, or "auto"

    [init]
    kind = "laguerre"         # laguerre | voronoi | diffusion
    metric = "neglog"         # neglog | euclidean
    h = 100.0                 # heat time of the diffusion initialization

    [mbo]
    constraints = "exact"     # exact | interval
    slack = 0                 # interval bounds V - slack .. V + slack
    stop_eps = 1e-4
    max_iters = 200
    temperature = 0.0         # noise scale, 0 disables temperature
    temperature_iterations = 50
    warm_start = "previous"   # previous | center

    [experiment]
    trials = 1
    labels_per_class = 5
    seed = 0                  # trial t uses seed + t
    workers = 1

    [probe]
    h_grid = []               # empty means kernel.h * (1/4, 1/2, 1, 2)
    iterations = 15
"""
from __future__ import annotations

import copy
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError

DEFAULTS = {
    "dataset": {
        "kind": "three_moons", "path": "", "labels_path": "",
        "n_per_moon": 500, "noise_sd": 0.14, "ambient_dim": 100,
        "n": 2000, "classes": 2, "seed": 0,
        "label_column": -1, "delimiter": ",", "skip_header": False,
    },
    "graph": {"k": 10, "laplacian": "random_walk", "spectrum_K": 0},
    "kernel": {"kind": "squared_rw", "h": 1.0, "J": 2, "r": 0.1},
    "init": {"kind": "laguerre", "metric": "neglog", "h": 100.0},
    "mbo": {
        "constraints": "exact", "slack": 0, "stop_eps": 1e-4, "max_iters": 200,
        "temperature": 0.0, "temperature_iterations": 50, "warm_start": "previous",
    },
    "experiment": {"trials": 1, "labels_per_class": 5, "seed": 0, "workers": 1},
    "probe": {"h_grid": [], "iterations": 15},
}

CHOICES = {
    ("dataset", "kind"): ("three_moons", "torus", "delimited", "idx", "embedding"),
    ("graph", "laplacian"): ("random_walk", "combinatorial"),
    ("kernel", "kind"): ("squared_rw", "squared_rw_twice", "shifted_squared_rw",
                         "rank_k_heat", "positive_taylor"),
    ("init", "kind"): ("laguerre", "voronoi", "diffusion"),
    ("init", "metric"): ("neglog", "euclidean"),
    ("mbo", "constraints"): ("exact", "interval"),
    ("mbo", "warm_start"): ("previous", "center"),
}

POSITIVE = {("graph", "k"), ("kernel", "h"), ("init", "h"), ("mbo", "stop_eps"),
            ("mbo", "max_iters"), ("mbo", "temperature_iterations"),
            ("experiment", "trials"), ("experiment", "labels_per_class"),
            ("experiment", "workers"), ("probe", "iterations"),
            ("dataset", "n_per_moon"), ("dataset", "n"), ("dataset", "classes")}


def _check_type(section, key, value, default):
    name = f"{section}.{key}"
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if ok:
            value = float(value)
    elif isinstance(default, list):
        ok = isinstance(value, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
        if ok:
            value = [float(v) for v in value]
    else:
        ok = isinstance(value, str)
    if (section, key) == ("kernel", "r"):
        ok = value == "auto" or (isinstance(value, (int, float)) and not isinstance(value, bool))
        if ok and value != "auto":
            value = float(value)
    if not ok:
        raise ConfigError(f"{name}: unexpected value {value!r}")
    return value


def resolve(raw: dict) -> dict:
    """Merge ``raw`` over the defaults and validate every key."""
    cfg = copy.deepcopy(DEFAULTS)
    for section, body in raw.items():
        if section not in cfg:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in body.items():
            if key not in cfg[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            cfg[section][key] = _check_type(section, key, value, cfg[section][key])
    for (section, key), allowed in CHOICES.items():
        if cfg[section][key] not in allowed:
            raise ConfigError(f"{section}.{key} must be one of {', '.join(allowed)}")
    for section, key in POSITIVE:
        if not cfg[section][key] > 0:
            raise ConfigError(f"{section}.{key} must be positive")
    for section, key in (("mbo", "slack"), ("mbo", "temperature"), ("graph", "spectrum_K")):
        if cfg[section][key] < 0:
            raise ConfigError(f"{section}.{key} must be nonnegative")
    if any(h <= 0 for h in cfg["probe"]["h_grid"]):
        raise ConfigError("probe.h_grid entries must be positive")
    kind = cfg["dataset"]["kind"]
    if kind in ("delimited", "idx", "embedding") and not cfg["dataset"]["path"]:
        raise ConfigError(f"dataset.path is required for dataset.kind = {kind!r}")
    if kind in ("idx", "embedding") and not cfg["dataset"]["labels_path"]:
        raise ConfigError(f"dataset.labels_path is required for dataset.kind = {kind!r}")
    return cfg


def load(path=None) -> dict:
    if path is None:
        return resolve({})
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return resolve(raw)


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def dumps(cfg: dict) -> str:
    """TOML text of a resolved config; ``load`` of it gives ``cfg`` back."""
    lines = []
    for section, body in cfg.items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {_toml_value(v)}" for k, v in body.items())
        lines.append("")
    return "\n".join(lines)
