"""Experiment configuration read from an INI file.

Sections and keys (all optional; unknown sections or keys are errors)::

    [run]         seed, output_dir, name
    [data]        source (synthetic | cifar10), cifar10_dir, val_fraction
    [synthetic]   any SyntheticSpec field; pairs as ``3:10, 10:-3, ...``
    [train]       any TrainConfig field except seed
    [dfm]         budget, per_step_threshold, visit_order, eval_subset_size
    [dfmx]        x_percent, composition, spatial_aug
    [corruption]  kinds, severities
    [attack]      attacks, eps_255, steps, init

The global ``seed`` fans out into per-purpose seeds with ``derive_seed``.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .attacks import INITS
from .augment import COMPOSITIONS
from .corruptions import ALL_KINDS, SEVERITIES, CorruptionKind
from .datasets import SyntheticSpec
from .dfm import DfmSearchConfig
from .model import TrainConfig

OUTPUT_ROOT_ENV = "DFMX_OUTPUT_ROOT"
ATTACKS = ("fgsm", "pgd")


class ConfigError(ValueError):
    """Raised with the offending ``section.key`` in the message."""


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    name: str = "experiment"
    output_dir: Path | None = None
    source: str = "synthetic"
    cifar10_dir: Path | None = None
    val_fraction: float = 0.1
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    dfm: DfmSearchConfig = field(default_factory=DfmSearchConfig)
    x_percent: float = 50.0
    composition: str = "before"
    spatial_aug: bool = False
    corruption_kinds: tuple[CorruptionKind, ...] = ALL_KINDS
    severities: tuple[int, ...] = SEVERITIES
    attacks: tuple[str, ...] = ATTACKS
    eps_255: tuple[float, ...] = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10)
    attack_steps: int = 10
    attack_init: str = "zero"

    def __post_init__(self) -> None:
        if self.source not in ("synthetic", "cifar10"):
            raise ConfigError("data.source: must be 'synthetic' or 'cifar10'")
        if self.source == "cifar10" and self.cifar10_dir is None:
            raise ConfigError("data.cifar10_dir: required when source is cifar10")
        if not 0 < self.val_fraction < 1:
            raise ConfigError("data.val_fraction: must lie in (0, 1)")
        if not 0 <= self.x_percent <= 100:
            raise ConfigError("dfmx.x_percent: must be 0 or lie in (0, 100]")
        if self.composition not in COMPOSITIONS:
            raise ConfigError(f"dfmx.composition: must be one of {COMPOSITIONS}")
        if not set(self.severities) <= set(SEVERITIES) or not self.severities:
            raise ConfigError(f"corruption.severities: must be drawn from {SEVERITIES}")
        if not self.corruption_kinds:
            raise ConfigError("corruption.kinds: at least one kind is required")
        if not set(self.attacks) <= set(ATTACKS) or not self.attacks:
            raise ConfigError(f"attack.attacks: must be drawn from {ATTACKS}")
        if any(e < 0 for e in self.eps_255):
            raise ConfigError("attack.eps_255: must be non-negative")
        if self.attack_steps < 1:
            raise ConfigError("attack.steps: must be at least 1")
        if self.attack_init not in INITS:
            raise ConfigError(f"attack.init: must be one of {INITS}")

    @property
    def epsilons(self) -> tuple[float, ...]:
        return tuple(e / 255 for e in self.eps_255)

    def run_dir(self) -> Path:
        root = self.output_dir if self.output_dir is not None else default_output_root()
        return Path(root) / self.name

    def check_paths(self) -> None:
        if self.source == "cifar10" and not Path(self.cifar10_dir).is_dir():
            raise ConfigError(f"data.cifar10_dir: {self.cifar10_dir} is not a directory")


# --- parsing ----------------------------------------------------------------------


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_list(text: str) -> list[str]:
    return [t.strip() for t in text.replace("\n", ",").split(",") if t.strip()]


def _parse_pairs(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for item in _parse_list(text):
        fy, fx = item.split(":")
        out.append((int(fy), int(fx)))
    return tuple(out)


def _convert(text: str, typ: Any, key: str) -> Any:
    """Convert by the declared dataclass field type (annotations are strings here)."""
    if key == "shortcut_pairs":
        return _parse_pairs(text)
    if key == "orientations":
        return None if text.strip().lower() == "none" else tuple(float(v) for v in _parse_list(text))
    typ = str(typ)
    if typ == "int":
        return int(text)
    if typ == "float":
        return float(text)
    if typ == "bool":
        return _parse_bool(text)
    return text.strip()


def _section_to_dataclass(cls, values: dict[str, str], section: str, exclude=()) -> dict:
    fields = {f.name: f for f in dataclasses.fields(cls) if f.name not in exclude}
    out = {}
    for key, text in values.items():
        if key not in fields:
            raise ConfigError(f"{section}.{key}: unknown key")
        try:
            out[key] = _convert(text, fields[key].type, key)
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: {exc}") from None
    return out


_PLAIN_KEYS: dict[str, dict[str, tuple[str, Any]]] = {
    "run": {"seed": ("seed", int), "name": ("name", str), "output_dir": ("output_dir", Path)},
    "data": {"source": ("source", str), "cifar10_dir": ("cifar10_dir", Path),
             "val_fraction": ("val_fraction", float)},
    "dfmx": {"x_percent": ("x_percent", float), "composition": ("composition", str),
             "spatial_aug": ("spatial_aug", _parse_bool)},
    "corruption": {"kinds": ("corruption_kinds", lambda t: tuple(CorruptionKind(k) for k in _parse_list(t))),
                   "severities": ("severities", lambda t: tuple(int(s) for s in _parse_list(t)))},
    "attack": {"attacks": ("attacks", lambda t: tuple(_parse_list(t))),
               "eps_255": ("eps_255", lambda t: tuple(float(e) for e in _parse_list(t))),
               "steps": ("attack_steps", int), "init": ("attack_init", str)},
}
_NESTED = {"synthetic": SyntheticSpec, "train": TrainConfig, "dfm": DfmSearchConfig}


def parse_config(text: str, base_dir: str | Path | None = None) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from INI text.

    Relative paths are resolved against ``base_dir`` when given.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc.message.splitlines()[0]}") from None
    top: dict[str, Any] = {}
    nested: dict[str, dict] = {}
    for section in cp.sections():
        values = dict(cp.items(section))
        if section in _NESTED:
            exclude = ("seed",) if section in ("train", "dfm", "synthetic") else ()
            nested[section] = _section_to_dataclass(_NESTED[section], values, section, exclude)
        elif section in _PLAIN_KEYS:
            for key, text_value in values.items():
                if key not in _PLAIN_KEYS[section]:
                    raise ConfigError(f"{section}.{key}: unknown key")
                name, conv = _PLAIN_KEYS[section][key]
                try:
                    top[name] = conv(text_value.strip())
                except ValueError as exc:
                    raise ConfigError(f"{section}.{key}: {exc}") from None
        else:
            raise ConfigError(f"[{section}]: unknown section")
    if base_dir is not None:
        for key in ("output_dir", "cifar10_dir"):
            if key in top and not top[key].is_absolute():
                top[key] = Path(base_dir) / top[key]
    seed = top.get("seed", 0)
    built = {}
    for section, cls in _NESTED.items():
        try:
            built[section] = cls(**nested.get(section, {}), seed=seed)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{section}: {exc}") from None
    return ExperimentConfig(**top, **built)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config(path.read_text(), base_dir=path.parent)


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ", ".join(f"{a}:{b}" for a, b in v)
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, CorruptionKind):
        return v.value
    if v is None:
        return "none"
    return str(v)


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical INI rendering; ``parse_config(dump_config(c)) == c``."""
    lines = []
    for section, keys in _PLAIN_KEYS.items():
        lines.append(f"[{section}]")
        for key, (name, _) in keys.items():
            value = getattr(cfg, name)
            if value is None:
                continue
            lines.append(f"{key} = {_fmt(value)}")
        lines.append("")
    for section in _NESTED:
        lines.append(f"[{section}]")
        for f in dataclasses.fields(getattr(cfg, section)):
            if f.name == "seed":
                continue
            value = getattr(getattr(cfg, section), f.name)
            if value is None and f.name != "orientations":
                continue
            lines.append(f"{f.name} = {_fmt(value)}")
        lines.append("")
    return "\n".join(lines)
