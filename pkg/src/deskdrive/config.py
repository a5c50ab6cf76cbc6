"""Run configuration: one INI file, one dataclass per section.

Values are converted from the field annotations and validated on load.
Unknown sections or keys are errors, so typos never pass silently. Two
presets ship with the package: ``desk`` (CPU-sized) and ``full`` (the
published hyperparameters).
"""
from __future__ import annotations

import configparser
import math
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .control import ControlConfig
from .learning import PolicyConfig, TrainConfig
from .learning.train import SCHEDULES
from .perception import DetectorConfig, TransformerConfig
from .simworld import SCENARIO_KINDS, Camera, Rig, SimConfig, suite

PRESETS = Path(__file__).parent / "configs"


class ConfigError(ValueError):
    """A configuration value failed to parse or validate; names the field."""


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"0-9"``, ``"3,5,8"`` or a mix such as ``"0-4,10"``."""
    out: list[int] = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        lo, sep, hi = part.partition("-")
        if sep:
            a, b = int(lo), int(hi)
            if b < a:
                raise ValueError(f"empty seed range {part!r}")
            out.extend(range(a, b + 1))
        else:
            out.append(int(part))
    if not out or min(out) < 0:
        raise ValueError("seed list must be non-empty and non-negative")
    return tuple(out)


def parse_kinds(text: str) -> tuple[str, ...]:
    kinds = tuple(k.strip() for k in text.split(",") if k.strip())
    if kinds == ("all",):
        return SCENARIO_KINDS
    bad = [k for k in kinds if k not in SCENARIO_KINDS]
    if bad or not kinds:
        raise ValueError(f"unknown scenario kinds {bad}; expected a subset of {', '.join(SCENARIO_KINDS)}")
    return kinds


class Seeds(tuple):
    pass


class Kinds(tuple):
    pass


def format_seeds(seeds) -> str:
    parts, run = [], []
    for s in seeds:
        if run and s == run[-1] + 1:
            run.append(s)
            continue
        if run:
            parts.append(f"{run[0]}-{run[-1]}" if len(run) > 1 else str(run[0]))
        run = [s]
    if run:
        parts.append(f"{run[0]}-{run[-1]}" if len(run) > 1 else str(run[0]))
    return ",".join(parts)


def _fmt(v) -> str:
    if isinstance(v, Seeds):
        return format_seeds(v)
    if isinstance(v, Kinds) or (isinstance(v, tuple) and v and isinstance(v[0], str)):
        return ",".join(v)
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    out: str = "runs"


@dataclass(frozen=True)
class ModelSection:
    image_size: int = 64
    channels: tuple[int, ...] = (16, 32, 64, 64, 64)
    d_model: int = 32
    heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 2
    ffn_width: int = 64
    detections: int = 16
    waypoints: int = 4
    hidden: int = 64
    residual_width: int = 32
    width: int = 64
    fused_width: int = 64


@dataclass(frozen=True)
class PretrainSection:
    steps: int = 600
    lr: float = 1e-3
    batch: int = 32
    kinds: Kinds = Kinds(SCENARIO_KINDS)
    seeds: Seeds = Seeds(range(8))
    heldout_seeds: Seeds = Seeds((100, 101))
    frame_every: float = 1.0
    classifier_steps: int = 600


@dataclass(frozen=True)
class TrainSection:
    epochs: int = 50
    lr: float = 1e-3
    batch: int = 32
    sample_rate: float = 2.0
    kinds: Kinds = Kinds(SCENARIO_KINDS)
    seeds: Seeds = Seeds(range(4))
    heldout_kinds: Kinds = Kinds(("follow", "lead-vehicle-stop"))
    heldout_seeds: Seeds = Seeds((200, 201, 202, 203))
    schedule: str = "cosine"


@dataclass(frozen=True)
class DaggerSection:
    rounds: int = 3
    kinds: Kinds = Kinds(SCENARIO_KINDS)
    seeds_per_round: int = 2
    first_seed: int = 50


@dataclass(frozen=True)
class BenchSection:
    kinds: Kinds = Kinds(("follow", "lead-vehicle-stop"))
    seeds: Seeds = Seeds(range(300, 305))
    ablate_kinds: Kinds = Kinds(("dense-traffic",))
    ablate_seeds: Seeds = Seeds(range(400, 450))


SECTIONS = {
    "run": RunSection,
    "model": ModelSection,
    "pretrain": PretrainSection,
    "train": TrainSection,
    "dagger": DaggerSection,
    "bench": BenchSection,
    "control": ControlConfig,
    "sim": SimConfig,
}

# fields that may legitimately be zero; every other number must be positive
_MAY_BE_ZERO = {("run", "seed"), ("dagger", "rounds"), ("dagger", "first_seed"), ("train", "lr"),
                ("control", "lateral_ki"), ("control", "lateral_kd"), ("control", "longitudinal_ki"),
                ("control", "longitudinal_kd"), ("control", "brake_speed"), ("pretrain", "classifier_steps"),
                ("pretrain", "steps")}


def _convert(section: str, key: str, hint, text: str):
    where = f"{section}.{key}"
    try:
        if hint is Seeds:
            return Seeds(parse_seeds(text))
        if hint is Kinds:
            return Kinds(parse_kinds(text))
        if hint is bool:
            low = text.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(f"expected a boolean, got {text!r}")
            return low in ("true", "yes", "1")
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        if hint is str:
            return text.strip()
        if typing.get_origin(hint) is tuple:
            inner = typing.get_args(hint)[0]
            return tuple(inner(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: unsupported field type {hint}")


def _validate(section: str, obj) -> None:
    for f in fields(obj):
        v = getattr(obj, f.name)
        where = f"{section}.{f.name}"
        if isinstance(v, (Seeds, Kinds)):
            continue  # checked while parsing
        zero_ok = (section, f.name) in _MAY_BE_ZERO
        for x in v if isinstance(v, tuple) else (v,):
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                continue
            if not math.isfinite(x):
                raise ConfigError(f"{where}: must be finite, got {x}")
            if x < 0 or (x == 0 and not zero_ok):
                raise ConfigError(f"{where}: must be {'non-negative' if zero_ok else 'positive'}, got {x}")
    if section == "control" and obj.max_throttle > 1.0:
        raise ConfigError("control.max_throttle: must not exceed 1")
    if section == "model":
        if obj.image_size % 2 ** len(obj.channels):
            raise ConfigError(f"model.image_size: {obj.image_size} is not divisible by {2 ** len(obj.channels)}")
        if obj.d_model % obj.heads or obj.d_model % 2:
            raise ConfigError("model.d_model: must be even and divisible by model.heads")
        if obj.waypoints < 2:
            raise ConfigError("model.waypoints: at least 2 are needed")
    if section == "pretrain" and set(obj.seeds) & set(obj.heldout_seeds):
        raise ConfigError("pretrain.heldout_seeds: overlaps pretrain.seeds")
    if section == "train" and obj.sample_rate > 20.0:
        raise ConfigError("train.sample_rate: cannot exceed the 20 Hz simulation rate")
    if section == "train" and obj.schedule not in SCHEDULES:
        raise ConfigError(f"train.schedule: expected one of {', '.join(SCHEDULES)}, got {obj.schedule!r}")


def _build(section: str, cls, values: dict[str, str], base=None):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"{section}: unknown key(s) {', '.join(unknown)}")
    kw = {k: _convert(section, k, hints[k], v) for k, v in values.items()}
    try:
        obj = replace(base, **kw) if base is not None else cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None
    _validate(section, obj)
    return obj


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    model: ModelSection = field(default_factory=ModelSection)
    pretrain: PretrainSection = field(default_factory=PretrainSection)
    train: TrainSection = field(default_factory=TrainSection)
    dagger: DaggerSection = field(default_factory=DaggerSection)
    bench: BenchSection = field(default_factory=BenchSection)
    control: ControlConfig = field(default_factory=ControlConfig)
    sim: SimConfig = field(default_factory=SimConfig)

    @classmethod
    def parse(cls, text: str, source: str = "<string>") -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
        cp.optionxform = str
        try:
            cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None
        unknown = sorted(set(cp.sections()) - set(SECTIONS))
        if unknown:
            raise ConfigError(f"unknown section(s) {', '.join(unknown)}; expected {', '.join(SECTIONS)}")
        parts = {name: _build(name, kind, dict(cp[name]) if cp.has_section(name) else {})
                 for name, kind in SECTIONS.items()}
        return cls(**parts)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        p = Path(path)
        if not p.exists() and (PRESETS / f"{path}.cfg").exists():
            p = PRESETS / f"{path}.cfg"
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.parse(text, str(p))

    def override(self, assignments: dict[str, str]) -> "RunConfig":
        """Apply ``section.key -> text`` overrides with the same validation as the file."""
        grouped: dict[str, dict[str, str]] = {}
        for dotted, text in assignments.items():
            section, _, key = dotted.partition(".")
            if section not in SECTIONS or not key:
                raise ConfigError(f"override {dotted!r} must look like section.key")
            grouped.setdefault(section, {})[key] = text
        changes = {s: _build(s, SECTIONS[s], kv, getattr(self, s)) for s, kv in grouped.items()}
        return replace(self, **changes)

    def to_ini(self) -> str:
        lines = []
        for name in SECTIONS:
            lines.append(f"[{name}]")
            obj = getattr(self, name)
            lines.extend(f"{f.name} = {_fmt(getattr(obj, f.name))}" for f in fields(obj))
            lines.append("")
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {name: {f.name: (list(v) if isinstance(v := getattr(getattr(self, name), f.name), tuple) else v)
                       for f in fields(getattr(self, name))} for name in SECTIONS}

    # builders for the module-level configs

    @property
    def rig(self) -> Rig:
        return Rig(Camera(size=self.model.image_size), self.sim, self.control)

    @property
    def detector(self) -> DetectorConfig:
        m = self.model
        return DetectorConfig(m.channels, TransformerConfig(m.d_model, m.heads, m.encoder_layers, m.decoder_layers,
                                                            m.ffn_width, m.detections))

    def policy(self, arm: str = "detection") -> PolicyConfig:
        m = self.model
        return PolicyConfig(arm, self.detector, m.residual_width, m.width, m.fused_width, m.hidden, m.waypoints)

    @property
    def training(self) -> TrainConfig:
        return TrainConfig(self.train.epochs, self.train.lr, self.train.batch, self.train.schedule)

    def dagger_specs(self, round_id: int):
        d = self.dagger
        start = d.first_seed + (round_id - 1) * d.seeds_per_round
        return suite(d.kinds, range(start, start + d.seeds_per_round))


