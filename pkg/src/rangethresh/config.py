"""Run configuration: one JSON file feeding every pipeline stage.

Sections map one-to-one onto the module parameter types; unknown keys are
rejected and every value passes the owning type's own validation before
any work starts.  CLI flags override the file value of the same name.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, asdict

from .binning import BinConfig
from .curve import RuleParams
from .evaluate import MatchConfig
from .synth import SceneConfig


class ConfigError(ValueError):
    """Unreadable, unparseable, or invalid run configuration."""


@dataclass(frozen=True)
class PrefilterConfig:
    """Static dual threshold applied ahead of calibration statistics."""

    enabled: bool = True
    near: float = 0.5
    far: float = 0.3
    split: float = 40.0

    def __post_init__(self):
        if not (0 <= self.far <= 1 and 0 <= self.near <= 1):
            raise ValueError("prefilter thresholds must lie in [0, 1]")
        if self.split < 0:
            raise ValueError("prefilter split range must be >= 0")


@dataclass(frozen=True)
class TrainSettings:
    learning_rate: float = 0.01
    epochs: int = 2000
    seed: int = 0
    targets: str = "curve"  # "curve" (distillation) or "f1" (needs ground truth)
    grid_points: int = 64
    hidden: tuple[int, ...] = (16, 16)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.targets not in ("curve", "f1"):
            raise ValueError("train targets must be 'curve' or 'f1'")
        if self.grid_points < 2:
            raise ValueError("grid_points must be >= 2")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ValueError("hidden sizes must be positive")


@dataclass(frozen=True)
class BaselineParams:
    sweep: tuple[float, ...] = (15.0, 25.0, 35.0)
    niblack_k: float = -0.2
    nick_k: float = -0.1
    bernsen_contrast_limit: float = 0.1
    phansalkar_k: float = 0.25
    phansalkar_p: float = 2.0
    phansalkar_q: float = 10.0
    phansalkar_r: float = 0.5
    bradley_t: float = 15.0

    def __post_init__(self):
        if any(not (0 <= t < 100) for t in self.sweep):
            raise ValueError("sweep percentages must lie in [0, 100)")
        if self.phansalkar_r <= 0:
            raise ValueError("phansalkar R must be positive")
        if not (0 <= self.bradley_t < 100):
            raise ValueError("bradley t must lie in [0, 100)")


@dataclass(frozen=True)
class RunConfig:
    bins: BinConfig = BinConfig()
    rule: RuleParams = RuleParams()
    floor_k: float = 0.2
    prefilter: PrefilterConfig = PrefilterConfig()
    match: MatchConfig = MatchConfig()
    scene: SceneConfig = SceneConfig()
    train: TrainSettings = TrainSettings()
    baselines: BaselineParams = BaselineParams()
    range_mode: str = "bev"
    output_dir: str = "out"

    def __post_init__(self):
        if not (0 <= self.floor_k <= 1):
            raise ValueError("floor_k must lie in [0, 1]")
        if self.range_mode not in ("bev", "3d"):
            raise ValueError("range_mode must be 'bev' or '3d'")


_SECTION_TYPES = {
    "bins": BinConfig,
    "rule": RuleParams,
    "prefilter": PrefilterConfig,
    "match": MatchConfig,
    "scene": SceneConfig,
    "train": TrainSettings,
    "baselines": BaselineParams,
}
_SCALAR_KEYS = {"floor_k", "range_mode", "output_dir"}

# JSON carries lists; these dataclass fields want tuples
_TUPLE_FIELDS = {"sweep", "hidden", "labels", "label_weights"}


def _build_section(name: str, cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(sorted(unknown))}")
    kwargs = {k: tuple(v) if k in _TUPLE_FIELDS and isinstance(v, list) else v
              for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name!r} section: {exc}") from None


def run_config_from_dict(data: dict) -> RunConfig:
    unknown = set(data) - set(_SECTION_TYPES) - _SCALAR_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    kwargs = {}
    for name, cls in _SECTION_TYPES.items():
        if name in data:
            kwargs[name] = _build_section(name, cls, data[name])
    for name in _SCALAR_KEYS:
        if name in data:
            kwargs[name] = data[name]
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_run_config(path: str | None) -> RunConfig:
    """RunConfig from a JSON file; None means all defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return run_config_from_dict(data)


def run_config_json(cfg: RunConfig) -> str:
    """Full config, defaults included, as stable JSON."""
    return json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n"
