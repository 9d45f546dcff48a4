"""Flat ``key = value`` configuration.

Every documented key has a default here. Config files hold one assignment
per line; values are JSON literals (``[64, 64]``, ``true``, ``1e-4``) and
anything that does not parse as JSON is kept as a bare string. ``#`` starts
a comment.
"""

import json
from pathlib import Path

from .errors import ConfigError

DEFAULTS = {
    "data.num_classes": 8,
    "data.size": [64, 64],
    "data.manifest": None,
    "data.canny.sigma": 1.0,
    "data.canny.low": 0.1,
    "data.canny.high": 0.2,
    "nn.power_iterations": 1,
    "nn.spade_hidden": 128,
    "nn.calibration_iterations": 500,
    "model.C": 64,
    "model.n": 3,
    "model.num_down": 3,
    "model.slope": 0.2,
    "model.use_Ge": True,
    "model.use_Gt": True,
    "model.use_Gs": True,
    "model.gs_edge_source": "generated",
    "disc.num_scales": 2,
    "disc.ndf": 64,
    "disc.n_layers": 3,
    "loss.lambda_c": 1.0,
    "loss.lambda_f": 10.0,
    "loss.lambda_p": 10.0,
    "loss.lambda": 2.0,
    "loss.perceptual.weights_path": None,
    "loss.perceptual.random_seed": 0,
    "train.epochs": 200,
    "train.decay_start_epoch": 100,
    "train.batch_size": 8,
    "train.beta1": 0.0,
    "train.beta2": 0.999,
    "train.lr_g": 1e-4,
    "train.lr_d": 4e-4,
    "train.seed": 0,
    "train.max_steps": None,
    "train.dtype": "float32",
    "train.log_path": None,
    "train.checkpoint_path": None,
    "train.checkpoint_every": 0,
    "eval.num_samples": 64,
}

_POSITIVE_INTS = (
    "nn.power_iterations", "nn.spade_hidden", "nn.calibration_iterations",
    "model.C", "model.n", "model.num_down", "disc.num_scales", "disc.ndf", "disc.n_layers",
    "train.epochs", "train.batch_size", "eval.num_samples",
)

# Ablation variants, each adding one component to the previous row.
VARIANTS = {
    "E+Gi": {"model.use_Ge": False, "model.use_Gt": False, "model.use_Gs": False},
    "E+Gi+Ge": {"model.use_Ge": True, "model.use_Gt": False, "model.use_Gs": False},
    "E+Gi+Ge+Gt": {"model.use_Ge": True, "model.use_Gt": True, "model.use_Gs": False},
    "full": {"model.use_Ge": True, "model.use_Gt": True, "model.use_Gs": True},
}


def parse_value(text):
    text = text.strip()
    try:
        return json.loads(text)
    except ValueError:
        if text.lower() in ("none", "null"):
            return None
        return text


def _coerce(key, value):
    default = DEFAULTS[key]
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and isinstance(value, int) and not isinstance(value, bool):
        return value
    if isinstance(default, float) and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(default, list) and isinstance(value, list):
        return list(value)
    if isinstance(default, str) and isinstance(value, str):
        return value
    raise ConfigError(f"{key}: expected {type(default).__name__}, got {value!r}")


class Config:
    """Immutable view over the flat key space with validation."""

    def __init__(self, values=None):
        merged = dict(DEFAULTS)
        for key, value in (values or {}).items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = _coerce(key, value)
        self._values = merged
        self._validate()

    def _validate(self):
        v = self._values
        if v["data.num_classes"] < 2:
            raise ConfigError("data.num_classes must be >= 2")
        if len(v["data.size"]) != 2 or any(not isinstance(x, int) or x < 1 for x in v["data.size"]):
            raise ConfigError("data.size must be [H, W] with positive integers")
        for k in _POSITIVE_INTS:
            if not isinstance(v[k], int) or isinstance(v[k], bool) or v[k] < 1:
                raise ConfigError(f"{k} must be a positive integer")
        factor = 2 ** v["model.num_down"]
        h, w = v["data.size"]
        if min(h, w) < 8 or h % factor or w % factor:
            raise ConfigError(f"data.size {h}x{w} must be >= 8 and divisible by 2**model.num_down = {factor}")
        if min(h, w) / 2 ** (v["disc.num_scales"] - 1) < 4:
            raise ConfigError("data.size is too small for disc.num_scales")
        for k in ("train.lr_g", "train.lr_d"):
            if not v[k] > 0:
                raise ConfigError(f"{k} must be > 0")
        if v["model.slope"] < 0:
            raise ConfigError("model.slope must be >= 0")
        if not v["data.canny.low"] < v["data.canny.high"]:
            raise ConfigError("data.canny.low must be < data.canny.high")
        if v["data.canny.sigma"] <= 0:
            raise ConfigError("data.canny.sigma must be > 0")
        if v["train.decay_start_epoch"] >= v["train.epochs"]:
            raise ConfigError("train.decay_start_epoch must be < train.epochs")
        for b in ("train.beta1", "train.beta2"):
            if not 0.0 <= v[b] < 1.0:
                raise ConfigError(f"{b} must lie in [0, 1)")
        for k in ("loss.lambda_c", "loss.lambda_f", "loss.lambda_p", "loss.lambda"):
            if v[k] < 0:
                raise ConfigError(f"{k} must be non-negative")
        if v["model.use_Gt"] and not v["model.use_Ge"]:
            raise ConfigError("model.use_Gt requires model.use_Ge")
        if v["model.use_Gs"] and not v["model.use_Ge"]:
            raise ConfigError("model.use_Gs requires model.use_Ge")
        if v["model.gs_edge_source"] not in ("generated", "target"):
            raise ConfigError("model.gs_edge_source must be 'generated' or 'target'")
        if v["train.dtype"] not in ("float32", "float64"):
            raise ConfigError("train.dtype must be float32 or float64")

    def __getitem__(self, key):
        try:
            return self._values[key]
        except KeyError:
            raise ConfigError(f"unknown config key {key!r}") from None

    def __eq__(self, other):
        return isinstance(other, Config) and self._values == other._values

    def as_dict(self):
        return dict(self._values)

    def updated(self, mapping):
        values = self.as_dict()
        values.update(mapping)
        return Config(values)

    def variant(self, name):
        if name not in VARIANTS:
            raise ConfigError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}")
        return self.updated(VARIANTS[name])

    def dumps(self):
        return "".join(f"{k} = {json.dumps(v)}\n" for k, v in sorted(self._values.items()))


def parse_lines(lines):
    values = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.rstrip()!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = parse_value(value)
    return values


def parse_overrides(items):
    return parse_lines(items)


def load_config(path=None, overrides=()):
    values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(parse_lines(path.read_text().splitlines()))
    values.update(parse_overrides(overrides))
    return Config(values)
