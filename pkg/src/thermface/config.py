"""
Pipeline configuration as flat ``key = value`` text with dotted keys.

Precedence: command-line flags, then the config file, then defaults. A
missing file means all defaults.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .classifier import MlpConfig
from .errors import InvalidParameter, ParseError, UnreadableFile
from .polar import PolarConfig

VARIANTS = ("raw", "line_skeletal", "polar", "polar_line_skeletal")
SCALINGS = ("none", "top_eigenvalue")
CONFIG_ENV = "THERMFACE_CONFIG"


@dataclass(frozen=True)
class LineConfig:
    bank_path: Optional[str] = None
    binarize_at: Optional[float] = None


@dataclass(frozen=True)
class EvalConfig:
    variant: str = "polar_line_skeletal"
    fold_sizes: Optional[tuple] = None
    train_exclude_fold: Optional[int] = None
    feature_scaling: str = "top_eigenvalue"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidParameter(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if self.feature_scaling not in SCALINGS:
            raise InvalidParameter(f"unknown feature scaling {self.feature_scaling!r}")
        if self.train_exclude_fold not in (None, 0, 1, 2):
            raise InvalidParameter("eval.train_exclude_fold must be 0, 1, 2 or none")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    polar: PolarConfig = field(default_factory=PolarConfig)
    linefeat: LineConfig = field(default_factory=LineConfig)
    pca_k: int = 40
    hidden: tuple = (25,)
    mlp: MlpConfig = field(default_factory=MlpConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    synth_size: int = 128

    def mlp_for(self, n_inputs: int, n_classes: int) -> MlpConfig:
        """MLP settings with the layer sizes fitted to the data."""
        return dataclasses.replace(
            self.mlp, layer_sizes=(n_inputs, *self.hidden, n_classes), seed=self.seed
        )


def _opt(parse):
    def inner(text):
        return None if text.lower() in ("", "none") else parse(text)

    return inner


def _int_tuple(text):
    return tuple(int(t) for t in text.split(",") if t.strip())


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# key -> (section attribute or None, field name, parser)
_KEYS = {
    "seed": (None, "seed", int),
    "polar.base": ("polar", "base", int),
    "polar.fixed_side": ("polar", "fixed_side", _opt(int)),
    "polar.r_min": ("polar", "r_min", float),
    "linefeat.bank_path": ("linefeat", "bank_path", _opt(str)),
    "linefeat.binarize_at": ("linefeat", "binarize_at", _opt(float)),
    "pca.k": (None, "pca_k", int),
    "mlp.hidden": (None, "hidden", _int_tuple),
    "mlp.learning_rate": ("mlp", "learning_rate", float),
    "mlp.momentum": ("mlp", "momentum", float),
    "mlp.max_epochs": ("mlp", "max_epochs", int),
    "mlp.target_loss": ("mlp", "target_loss", float),
    "mlp.init_scale": ("mlp", "init_scale", float),
    "eval.variant": ("eval", "variant", str),
    "eval.fold_sizes": ("eval", "fold_sizes", _opt(_int_tuple)),
    "eval.train_exclude_fold": ("eval", "train_exclude_fold", _opt(int)),
    "eval.feature_scaling": ("eval", "feature_scaling", str),
    "synth.size": (None, "synth_size", int),
}


def apply_overrides(cfg: PipelineConfig, values: dict) -> PipelineConfig:
    """Return *cfg* with dotted-key string values applied."""
    top, sections = {}, {}
    for key, text in values.items():
        if key not in _KEYS:
            raise InvalidParameter(f"unknown config key {key!r}")
        section, name, parse = _KEYS[key]
        try:
            value = parse(text.strip())
        except ValueError:
            raise InvalidParameter(f"bad value {text!r} for {key}") from None
        if section is None:
            top[name] = value
        else:
            sections.setdefault(section, {})[name] = value
    for section, changes in sections.items():
        top[section] = dataclasses.replace(getattr(cfg, section), **changes)
    return dataclasses.replace(cfg, **top)


def parse_config(text: str, base: Optional[PipelineConfig] = None) -> PipelineConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", lineno)
        key, value = line.split("=", 1)
        values[key.strip()] = value
    try:
        return apply_overrides(base or PipelineConfig(), values)
    except InvalidParameter as exc:
        raise ParseError(str(exc)) from None


def load_config(path: Optional[str]) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    p = Path(path)
    if not p.exists():
        return PipelineConfig()
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableFile(f"{p}: {exc}") from None
    return parse_config(text)


def config_items(cfg: PipelineConfig) -> dict:
    items = {}
    for key, (section, name, _) in _KEYS.items():
        owner = cfg if section is None else getattr(cfg, section)
        items[key] = _fmt(getattr(owner, name))
    return items


def format_config(cfg: PipelineConfig) -> str:
    return "".join(f"{key} = {value}\n" for key, value in sorted(config_items(cfg).items()))
