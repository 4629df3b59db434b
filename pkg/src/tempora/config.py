"""Run configuration: defaults, ``key = value`` files, overrides.

Keys are dotted ``section.field`` names::

    # comment
    model.kind = crbm
    train.use_ta = true
    ta.learning_rate = 0.05

Precedence is override > file > default. ``RunConfig.explicit`` records
which keys were set by a file or an override.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .rbm import UnitKind
from .schedule import OutputActivation, TrainingSchedule


class ConfigError(ValueError):
    """Unknown key or unparsable value."""


@dataclass
class ModelConfig:
    kind: str = "crbm"
    order: int = 6
    hidden_units: int = 100
    visible_kind: str = "gaussian"


@dataclass
class DataConfig:
    path: str | None = None
    has_header: bool | None = None   # none: detect from the first row
    column: int = 1              # 1-based column used when chunking
    chunk: int = 0               # 0 keeps frames as they are
    train_start: int = 0
    train_stop: int = 2000
    eval_start: int = 2000
    eval_stop: int | None = None


@dataclass
class EvalConfig:
    mode: str = "single"
    samples: int = 50
    gibbs_steps: int = 100
    repetitions: int = 100
    horizon: int = 6
    metric: str = "MSE"
    epsilon: float = 1e-8
    seed: int = 1
    fill_in: bool = True
    free_run: bool = True


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    schedule: TrainingSchedule = field(default_factory=TrainingSchedule)
    use_ta: bool = True
    mlp: bool = False
    eval: EvalConfig = field(default_factory=EvalConfig)
    explicit: frozenset = frozenset()

    # -- key access ---------------------------------------------------------

    def get(self, key: str):
        obj, name = _locate(self, key)
        return getattr(obj, name)

    def set(self, key: str, value, check: bool = True) -> "RunConfig":
        """Return a copy with ``key`` set; strings are parsed by key type."""
        cfg = copy_config(self)
        obj, name = _locate(cfg, key)
        if isinstance(value, str):
            value = parse_value(key, value)
        setattr(obj, name, value)
        cfg.explicit = self.explicit | {key}
        if check:
            validate(cfg)
        return cfg

    def items(self):
        return [(k, self.get(k)) for k in all_keys()]

    def to_text(self) -> str:
        return "".join(f"{k} = {format_value(v)}\n" for k, v in self.items())

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]

    @property
    def visible_kind(self) -> UnitKind:
        return UnitKind.parse(self.model.visible_kind)

    def total_epochs(self) -> int:
        return self.schedule.total_epochs(self.model.order, self.use_ta)


_SECTIONS = {"model": ("model",), "data": ("data",), "train": ("schedule",),
             "ta": ("schedule", "ta"), "eval": ("eval",)}
_TOP_LEVEL = {"train.use_ta": "use_ta", "train.mlp": "mlp"}
_OPTIONAL_TYPES = {"data.path": str, "data.has_header": "bool", "data.eval_stop": int, "ta.output_activation": OutputActivation}


def all_keys() -> list[str]:
    defaults = RunConfig()
    keys = []
    for section, path in _SECTIONS.items():
        obj = defaults
        for attr in path:
            obj = getattr(obj, attr)
        keys += [f"{section}.{f.name}" for f in fields(obj) if not hasattr(getattr(obj, f.name), "__dataclass_fields__")]
        if section == "train":
            keys += sorted(_TOP_LEVEL)
    return keys


def _locate(cfg: RunConfig, key: str):
    if key in _TOP_LEVEL:
        return cfg, _TOP_LEVEL[key]
    section, _, name = key.partition(".")
    if section not in _SECTIONS or not name:
        raise ConfigError(f"unknown config key {key!r}")
    obj = cfg
    for attr in _SECTIONS[section]:
        obj = getattr(obj, attr)
    if name not in {f.name for f in fields(obj)} or hasattr(getattr(obj, name), "__dataclass_fields__"):
        raise ConfigError(f"unknown config key {key!r}")
    return obj, name


_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def parse_value(key: str, text: str):
    default = RunConfig().get(key)
    text = text.strip()
    try:
        if key in _OPTIONAL_TYPES:
            if text.lower() in ("", "none"):
                return None
            kind = _OPTIONAL_TYPES[key]
            if kind != "bool":
                return kind(text.lower() if key == "ta.output_activation" else text)
        if isinstance(default, bool) or key in _OPTIONAL_TYPES:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError("expected true or false")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value {text!r} for {key}: {exc}") from None


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, OutputActivation):
        return value.value
    return str(value)


def copy_config(cfg: RunConfig) -> RunConfig:
    schedule = replace(cfg.schedule, ta=replace(cfg.schedule.ta))
    return replace(cfg, model=replace(cfg.model), data=replace(cfg.data),
                   schedule=schedule, eval=replace(cfg.eval))


def validate(cfg: RunConfig):
    m, d, e = cfg.model, cfg.data, cfg.eval
    if m.kind not in ("crbm", "trbm"):
        raise ConfigError(f"model.kind must be crbm or trbm, got {m.kind!r}")
    if m.order < 1 or m.hidden_units < 1:
        raise ConfigError("model.order and model.hidden_units must be >= 1")
    try:
        UnitKind.parse(m.visible_kind)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if d.chunk < 0:
        raise ConfigError("data.chunk must be >= 0")
    if d.column < 1:
        raise ConfigError("data.column is 1-based")
    if not 0 <= d.train_start < d.train_stop:
        raise ConfigError("need 0 <= data.train_start < data.train_stop")
    if d.eval_start < 0 or (d.eval_stop is not None and d.eval_stop <= d.eval_start):
        raise ConfigError("need 0 <= data.eval_start < data.eval_stop")
    if e.mode.replace("-", "_") not in ("single", "single_sample", "posterior_mean", "mean",
                                        "deterministic", "det"):
        raise ConfigError(f"unknown eval.mode {e.mode!r}")
    if e.samples < 1 or e.repetitions < 1 or e.horizon < 1:
        raise ConfigError("eval.samples, eval.repetitions and eval.horizon must be >= 1")
    if e.gibbs_steps < 1:
        raise ConfigError("eval.gibbs_steps must be >= 1")
    if e.metric.upper() not in ("MSE", "MAPE"):
        raise ConfigError(f"eval.metric must be MSE or MAPE, got {e.metric!r}")


def parse_text(text: str, base: RunConfig | None = None, source: str = "<config>") -> RunConfig:
    cfg = base or RunConfig()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value'")
        try:
            cfg = cfg.set(key.strip(), value.strip(), check=False)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{line_no}: {exc}") from None
    validate(cfg)
    return cfg


def load_config(path=None, overrides=()) -> RunConfig:
    """Defaults, then the file at ``path``, then ``key=value`` overrides."""
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
        cfg = parse_text(text, cfg, str(p))
    for item in overrides:
        if isinstance(item, str):
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"override {item!r} is not key=value")
            cfg = cfg.set(key.strip(), value.strip(), check=False)
        else:
            cfg = cfg.set(*item, check=False)
    validate(cfg)
    return cfg
