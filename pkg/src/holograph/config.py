"""Run configuration: one flat JSON object with a fixed key set."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from holograph.errors import ConfigError, HoloGraphError
from holograph.field import GridSpec
from holograph.network import build_setup
from holograph.training import Hyperparams


@dataclass(frozen=True)
class RunConfig:
    dataset: str | None = None
    # optics
    n: int = 200
    pitch: float = 36e-6
    wavelength: float = 532e-9
    layer_distance: float = 0.2794
    # input preparation
    d: int = 100
    k: int = 5
    alpha: float = 0.15
    epsilon: float = 1e-4
    encode_score_on_phase: bool = False
    per_node_normalization: bool = False
    test_size: int = 1000
    # network
    num_layers: int = 6
    feature_layers: int = 3
    skips: Any = "2"
    region_side: int = 20
    region_gap: int | None = None
    detector_hops: int = 0
    # training
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 500
    batch_size: int = 32
    normalize_sums: bool = False
    # run
    seed: int = 0
    out: str = "runs/default"
    deterministic: bool = True

    def __post_init__(self):
        try:
            self.grid()
            self.hyper()
            build_setup(self.skips)
        except HoloGraphError as exc:
            raise ConfigError(str(exc)) from None
        for key in ("d", "k", "num_layers", "region_side", "test_size"):
            value = getattr(self, key)
            if not isinstance(value, int) or isinstance(value, bool) or value < (0 if key == "test_size" else 1):
                raise ConfigError(f"{key} must be a positive integer, got {value!r}")
        if self.d > self.n or self.k > self.n:
            raise ConfigError(f"{self.k}x{self.d} feature block does not fit n={self.n}")
        if not 0 < self.alpha < 1 or not self.epsilon > 0:
            raise ConfigError("alpha must lie in (0, 1) and epsilon must be positive")

    def grid(self) -> GridSpec:
        return GridSpec(n=self.n, pitch=self.pitch, wavelength=self.wavelength, layer_distance=self.layer_distance)

    def hyper(self) -> Hyperparams:
        return Hyperparams(
            lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.adam_eps,
            epochs=self.epochs, batch_size=self.batch_size,
            normalize_sums=self.normalize_sums, deterministic=self.deterministic,
        )

    def skip_label(self) -> str:
        if isinstance(self.skips, (list, tuple)):
            return "+".join(str(s) for s in build_setup(self.skips))
        return str(self.skips)

    def replace(self, **changes) -> "RunConfig":
        unknown = set(changes) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if isinstance(out["skips"], tuple):
            out["skips"] = list(out["skips"])
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name: f for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        data = dict(data)
        if isinstance(data.get("skips"), list):
            data["skips"] = tuple(tuple(s) if isinstance(s, list) else s for s in data["skips"])
        for name, value in data.items():
            default = known[name].default
            if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
                data[name] = float(value)
            elif isinstance(default, bool) and not isinstance(value, bool):
                raise ConfigError(f"{name} must be true or false, got {value!r}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(load_dict(path))


def load_dict(path) -> dict:
    """Raw key/value pairs of a config file, with its optional ``preset`` expanded."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    preset = data.pop("preset", None)
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    base = PRESETS[preset] if preset else {}
    return {**base, **data}


PRESETS: dict[str, dict] = {
    "cora-ml": {"d": 100, "k": 5, "test_size": 1000, "skips": "2"},
    "citeseer": {"d": 100, "k": 5, "test_size": 1000, "skips": "2"},
    "amazon-photo": {"d": 70, "k": 5, "test_size": 1000, "skips": "2"},
    "synthetic": {"n": 64, "d": 8, "k": 5, "test_size": 30, "epochs": 50, "skips": "2"},
}


def parse_override(text: str) -> tuple[str, Any]:
    """``key=value`` with the value parsed as JSON when possible."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value
