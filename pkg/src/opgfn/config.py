"""Run configuration: flat ``section.key = value`` text with defaults for every field."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .envs.base import EnvDescriptor
from .errors import ConfigError
from .gfn.losses import LossConfig
from .gfn.model import ModelConfig
from .training.trainer import TrainPlan


@dataclass
class EvalConfig:
    candidates: int = 1280
    rounds: int = 10
    reference_resolution: int = 64
    r2_divisions: int = 10
    hv_ref: tuple = ()  # empty means the origin
    boost_ratio: int = 1
    temperature: float = 1.0

    def __post_init__(self):
        self.hv_ref = tuple(float(v) for v in self.hv_ref)
        for name in ("candidates", "rounds", "reference_resolution", "r2_divisions", "boost_ratio"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"eval.{name} must be a positive integer")
        if self.temperature <= 0:
            raise ConfigError("eval.temperature must be positive")


@dataclass
class RunSection:
    seed: int = 0
    out: str = "runs/default"


SECTIONS = {
    "run": RunSection,
    "env": EnvDescriptor,
    "model": ModelConfig,
    "loss": LossConfig,
    "train": TrainPlan,
    "eval": EvalConfig,
}
# the run seed drives training; it is not a separate train key
HIDDEN_KEYS = {("train", "seed")}
TUPLE_ITEMS = {("model", "hidden"): int, ("env", "objectives"): str, ("eval", "hv_ref"): float}


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    env: EnvDescriptor = field(default_factory=EnvDescriptor)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainPlan = field(default_factory=TrainPlan)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @property
    def seed(self) -> int:
        return self.run.seed

    def plan(self) -> TrainPlan:
        return dataclasses.replace(self.train, seed=self.run.seed)

    def echo(self) -> str:
        """Every resolved key, one per line, in a stable order."""
        lines = []
        for section in SECTIONS:
            obj = getattr(self, section)
            for f in dataclasses.fields(obj):
                if (section, f.name) in HIDDEN_KEYS:
                    continue
                lines.append(f"{section}.{f.name} = {_format(getattr(obj, f.name))}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        """Hash of the resolved settings; the output directory is not part of it."""
        lines = [ln for ln in self.echo().splitlines() if not ln.startswith("run.out =")]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()

    def header(self) -> str:
        return f"# seed={self.seed} config_sha256={self.digest()}"


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_scalar(text: str, kind, where: str):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError(text)
            return low == "true"
        if kind is int:
            try:
                return int(text)
            except ValueError:
                f = float(text)  # allow 1e5
                if not f.is_integer():
                    raise
                return int(f)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {text!r} as {kind.__name__}") from None
    return text


def _parse_value(section: str, name: str, default, text: str):
    where = f"{section}.{name}"
    if isinstance(default, tuple):
        item = TUPLE_ITEMS.get((section, name), str)
        parts = [p for p in (s.strip() for s in text.split(",")) if p]
        return tuple(_parse_scalar(p, item, where) for p in parts)
    return _parse_scalar(text, type(default), where)


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse config text; unknown sections or keys raise ConfigError naming them."""
    values: dict = {s: {} for s in SECTIONS}
    items = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {raw.strip()!r}")
        items.append((key.strip(), val.strip()))
    items.extend((k, str(v)) for k, v in (overrides or {}).items())
    defaults = {s: cls() for s, cls in SECTIONS.items()}
    for key, val in items:
        section, dot, name = key.partition(".")
        if not dot or section not in SECTIONS:
            raise ConfigError(f"unknown config key {key!r}")
        names = {f.name for f in dataclasses.fields(SECTIONS[section])} - {n for s, n in HIDDEN_KEYS if s == section}
        if name not in names:
            raise ConfigError(f"unknown config key {key!r}")
        values[section][name] = _parse_value(section, name, getattr(defaults[section], name), val)
    return RunConfig(**{s: SECTIONS[s](**values[s]) for s in SECTIONS})


def load_config(path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides)
