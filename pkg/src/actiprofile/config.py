"""
Pipeline configuration: typed defaults for every key, YAML overrides, a stable hash.

Unknown keys and wrongly typed values are rejected with the dotted key name
and the expected type. Every key has a default, so an empty file is valid.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError


@dataclass
class CountColumns:
    timestamp: str = "timestamp"
    axis1: str = "axis1"
    axis2: str = "axis2"
    axis3: str = "axis3"
    vm: str | None = "vm"


@dataclass
class SecondColumns:
    timestamp: str = "timestamp"
    sd: list = field(default_factory=lambda: ["sd_x", "sd_y", "sd_z"])
    means: list = field(default_factory=lambda: ["mean_x", "mean_y", "mean_z"])


@dataclass
class RawColumns:
    timestamp: str = "timestamp"
    axes: list = field(default_factory=lambda: ["accel_x", "accel_y", "accel_z"])
    rate_hz: float = 40.0


@dataclass
class IngestConfig:
    day_start: str = "07:00"
    day_end: str = "23:00"
    epoch_seconds: int | None = 60     # of the count exports; None infers it
    vm_tolerance: float = 0.01
    columns: CountColumns = field(default_factory=CountColumns)
    second_columns: SecondColumns = field(default_factory=SecondColumns)
    raw_columns: RawColumns = field(default_factory=RawColumns)


@dataclass
class ChoiConfig:
    window_minutes: int = 90
    spike_tolerance_minutes: int = 2
    flank_zero_minutes: int = 30


@dataclass
class MalfunctionConfig:
    max_plausible_sd: float = 8.0
    stuck_run_seconds: int = 300


@dataclass
class QualityConfig:
    choi: ChoiConfig = field(default_factory=ChoiConfig)
    malfunction: MalfunctionConfig = field(default_factory=MalfunctionConfig)
    max_days_per_participant: int = 7
    nonwear_axis: str = "vm"


@dataclass
class CategoriesConfig:
    scheme: str = "romanzini_2014_vm"
    # extra named schemes: {name: {sb_max: .., lpa_max: .., mpa_max: ..}}
    schemes: dict = field(default_factory=dict)


@dataclass
class BaiConfig:
    cut_point: float = 0.6
    intensity_pooling: str = "pooled"
    axis: str = "mean"
    density_bins: int = 200


@dataclass
class ProfileConfig:
    bin_minutes: int = 10
    sort: list = field(default_factory=lambda: ["none", 1, 2, 4, 8, 16])


@dataclass
class ClusterConfig:
    k_max: int = 50
    threshold: float = 0.75
    restarts: int = 10
    splits: int = 20
    max_iter: int = 300
    tol: float = 1e-4
    seed: int | None = None   # falls back to the global seed


@dataclass
class RegressionConfig:
    outcomes: list = field(default_factory=lambda: ["waist", "insulin", "triglycerides"])
    sex_coding: dict = field(default_factory=lambda: {"male": 0, "female": 1})
    transforms: dict = field(default_factory=dict)


@dataclass
class SynthConfig:
    n_participants: int = 40
    days_per_participant: int = 7
    archetypes: list = field(default_factory=lambda: ["flat_low", "day_active", "evening_active"])
    weights: list | None = None        # None: equal
    concentration: float = 1.0
    noise_sd: float = 300.0
    nonwear_rate: float = 0.1
    malfunction_rate: float = 0.05
    with_seconds: bool = True
    # {outcome: {intercept, age, sex, membership: [...], noise_sd}}; empty uses built-in models
    outcomes: dict = field(default_factory=dict)
    start_date: str = "2024-01-01"


@dataclass
class PipelineConfig:
    seed: int = 0
    ingest: IngestConfig = field(default_factory=IngestConfig)
    quality: QualityConfig = field(default_factory=QualityConfig)
    categories: CategoriesConfig = field(default_factory=CategoriesConfig)
    bai: BaiConfig = field(default_factory=BaiConfig)
    profile: ProfileConfig = field(default_factory=ProfileConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    regression: RegressionConfig = field(default_factory=RegressionConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    @property
    def cluster_seed(self):
        return self.seed if self.cluster.seed is None else self.cluster.seed

    def to_dict(self):
        return dataclasses.asdict(self)

    def hash(self):
        return config_hash(self)


def _type_name(tp):
    if isinstance(tp, types.UnionType) or typing.get_origin(tp) is typing.Union:
        return " or ".join(_type_name(a) for a in typing.get_args(tp))
    return "null" if tp is type(None) else getattr(tp, "__name__", str(tp))


def _check(value, tp, key):
    """Coerce ``value`` to annotation ``tp`` or raise naming ``key``."""
    if isinstance(tp, types.UnionType) or typing.get_origin(tp) is typing.Union:
        options = typing.get_args(tp)
        if value is None and type(None) in options:
            return None
        for option in options:
            if option is type(None):
                continue
            try:
                return _check(value, option, key)
            except ConfigError:
                pass
        raise ConfigError(f"config key {key}: expected {_type_name(tp)}, got {type(value).__name__}")
    if value is None:
        raise ConfigError(f"config key {key}: missing value, expected {_type_name(tp)}")
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, key)
    ok = {
        bool: lambda v: isinstance(v, bool),
        int: lambda v: isinstance(v, int) and not isinstance(v, bool),
        float: lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
        str: lambda v: isinstance(v, str),
        list: lambda v: isinstance(v, list),
        dict: lambda v: isinstance(v, dict),
    }[tp]
    if not ok(value):
        raise ConfigError(f"config key {key}: expected {_type_name(tp)}, got {type(value).__name__}")
    return float(value) if tp is float else value


def _build(cls, data, prefix=""):
    if not isinstance(data, dict):
        raise ConfigError(f"config key {prefix or '<root>'}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{prefix}." if prefix else ""
        raise ConfigError(f"unknown config key {where}{unknown[0]}")
    kwargs = {}
    for name, value in data.items():
        key = f"{prefix}.{name}" if prefix else name
        kwargs[name] = _check(value, hints[name], key)
    return cls(**kwargs)


def _validate(cfg):
    from .ingest import DayGrid
    from .quality import ChoiParams

    grid = DayGrid.from_clock(cfg.ingest.day_start, cfg.ingest.day_end)
    c = cfg.quality.choi
    ChoiParams(c.window_minutes, c.spike_tolerance_minutes, c.flank_zero_minutes)
    checks = [
        (cfg.quality.malfunction.max_plausible_sd > 0, "quality.malfunction.max_plausible_sd must be > 0"),
        (cfg.quality.malfunction.stuck_run_seconds >= 2, "quality.malfunction.stuck_run_seconds must be >= 2"),
        (cfg.quality.max_days_per_participant >= 1, "quality.max_days_per_participant must be >= 1"),
        (cfg.quality.nonwear_axis in ("x", "y", "z", "vm"), "quality.nonwear_axis must be x, y, z or vm"),
        (cfg.bai.cut_point > 0, "bai.cut_point must be > 0"),
        (cfg.bai.intensity_pooling in ("pooled", "day_mean"), "bai.intensity_pooling must be pooled or day_mean"),
        (cfg.bai.axis in ("x", "y", "z", "mean"), "bai.axis must be x, y, z or mean"),
        (cfg.bai.density_bins >= 1, "bai.density_bins must be >= 1"),
        (cfg.profile.bin_minutes >= 1, "profile.bin_minutes must be >= 1"),
        (bool(cfg.profile.sort), "profile.sort must list at least one variant"),
        (cfg.cluster.k_max >= 1, "cluster.k_max must be >= 1"),
        (0 < cfg.cluster.threshold <= 1, "cluster.threshold must be in (0, 1]"),
        (cfg.cluster.restarts >= 1, "cluster.restarts must be >= 1"),
        (cfg.cluster.splits >= 1, "cluster.splits must be >= 1"),
        (cfg.cluster.max_iter >= 1, "cluster.max_iter must be >= 1"),
        (cfg.cluster.tol >= 0, "cluster.tol must be >= 0"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)
    from .profiles import parse_sort_label
    if grid.n_minutes % cfg.profile.bin_minutes:
        raise ConfigError(f"profile.bin_minutes={cfg.profile.bin_minutes} does not tile the analysis window")
    n_bins = grid.n_minutes // cfg.profile.bin_minutes
    for spec in cfg.profile.sort:
        segments = parse_sort_label("none" if spec is None else spec)
        if segments is not None and (segments <= 0 or n_bins % segments):
            raise ConfigError(f"profile.sort: {segments} segments do not divide {n_bins} bins")
    return cfg


def from_dict(data):
    return _validate(_build(PipelineConfig, data or {}))


def load_config(path=None, overrides=None):
    """Defaults, updated by the YAML file at ``path``, then by ``overrides`` (dotted keys)."""
    import yaml

    data = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    for dotted, value in (overrides or {}).items():
        node = data
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return from_dict(data)


def config_hash(cfg):
    """sha256 over the canonical JSON form; first 16 hex digits."""
    canonical = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
