"""Run configuration: YAML loading, validation and the desk-scale preset.

Layout (every section optional, unknown keys rejected)::

    scenario:   ScenarioConfig fields (density comes from sweep.densities)
    radio:      RadioConfig fields
    channel:    scenario, shadowing_mode, los/olos/nlos parameter overrides,
                los_dc_m, olos_dc_m, nlos_dc_m, nakagami {m_table, mean}
    sweep:      models, densities (vehicles/km or a profile name), seeds,
                parallelism
    metrics:    bin_m, max_distance_m, n_boot, bootstrap_seed
    output:     dir, event_log, record_mode, link_log_interval_s
    desk_scale: bool
"""
import dataclasses
import json
import re
from dataclasses import dataclass, field, fields, replace

import yaml

from ._validation import check_keys
from .channel import MODELS, ChannelConfig
from .exceptions import ConfigError
from .mobility import DENSITY_PROFILES, ScenarioConfig, profile_density
from .netsim import RadioConfig
from .propagation import NakagamiParams, NlosParams, PathLossParams

DESK_ROAD_LENGTH_M = 2000.0
DESK_DURATION_S = 100.0
DESK_MAX_VEHICLES = 200


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot or sign (``6e6``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


def read_yaml(f):
    return yaml.load(f, Loader=_Loader)


_PATHLOSS_KEYS = {"n1", "n2", "pl0_db", "sigma_db", "d0_m", "db_m"}
_NLOS_KEYS = {f.name for f in fields(NlosParams)}
_CHANNEL_KEYS = {"scenario", "shadowing_mode", "los", "olos", "nlos", "los_dc_m", "olos_dc_m", "nlos_dc_m", "nakagami"}


@dataclass(frozen=True)
class MetricsOptions:
    bin_m: float = 100.0
    max_distance_m: float = 1000.0
    n_boot: int = 1000
    bootstrap_seed: int = 0

    def __post_init__(self):
        if self.bin_m <= 0 or self.max_distance_m <= 0 or self.n_boot < 1:
            raise ConfigError("metrics.bin_m, max_distance_m and n_boot must be positive")


@dataclass(frozen=True)
class OutputOptions:
    dir: str = "out"
    event_log: bool = False
    record_mode: str = "all"
    link_log_interval_s: float = 0.5

    def __post_init__(self):
        if self.record_mode not in ("all", "tracked"):
            raise ConfigError("output.record_mode must be 'all' or 'tracked'")
        if self.link_log_interval_s <= 0:
            raise ConfigError("output.link_log_interval_s must be positive")


@dataclass(frozen=True)
class SweepOptions:
    models: tuple = ("LOS_OLOS",)
    densities: tuple = (40.0,)
    seeds: tuple = (1,)
    parallelism: int = 1

    def __post_init__(self):
        models = tuple(str(m).upper() for m in self.models)
        bad = [m for m in models if m not in MODELS]
        if bad or not models:
            raise ConfigError(f"sweep.models must be a non-empty subset of {MODELS}, got {list(self.models)}")
        dens = []
        for d in self.densities:
            if isinstance(d, str):
                dens.append(profile_density(d))
            elif isinstance(d, (int, float)) and not isinstance(d, bool) and d > 0:
                dens.append(float(d))
            else:
                raise ConfigError(f"invalid density {d!r}; use a positive number or one of {sorted(DENSITY_PROFILES)}")
        if not dens:
            raise ConfigError("sweep.densities is empty")
        if not self.seeds:
            raise ConfigError("sweep.seeds is empty")
        if any(isinstance(s, bool) or not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative integers")
        if int(self.parallelism) < 1:
            raise ConfigError("sweep.parallelism must be >= 1")
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "densities", tuple(dens))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "parallelism", int(self.parallelism))


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    sweep: SweepOptions = field(default_factory=SweepOptions)
    metrics: MetricsOptions = field(default_factory=MetricsOptions)
    output: OutputOptions = field(default_factory=OutputOptions)
    desk_scale: bool = False

    def runs(self):
        """Grid of ``(model, density, seed)`` in a fixed order."""
        return [(m, d, s) for m in self.sweep.models for d in self.sweep.densities for s in self.sweep.seeds]

    def to_dict(self):
        return _plain(dataclasses.asdict(self))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, float) and obj != obj:
        return None
    return obj


def _build(cls, section, where, exclude=()):
    if section is None:
        return cls()
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a mapping")
    allowed = {f.name for f in fields(cls)} - set(exclude)
    check_keys(section, allowed, where)
    try:
        return cls(**section)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from None


def _pathloss(section, where):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a mapping")
    check_keys(section, _PATHLOSS_KEYS, where)
    missing = {"n2", "pl0_db", "sigma_db"} - set(section)
    if missing:
        raise ConfigError(f"{where} lacks {sorted(missing)}")
    try:
        return PathLossParams(**section)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


def _channel(section):
    if section is None:
        return ChannelConfig()
    if not isinstance(section, dict):
        raise ConfigError("channel must be a mapping")
    check_keys(section, _CHANNEL_KEYS, "channel")
    kw = {k: section[k] for k in ("scenario", "shadowing_mode", "los_dc_m", "olos_dc_m", "nlos_dc_m") if k in section}
    for name in ("los", "olos"):
        if name in section:
            kw[name] = _pathloss(section[name], f"channel.{name}")
    if "nlos" in section:
        kw["nlos"] = _build(NlosParams, section["nlos"], "channel.nlos")
    if "nakagami" in section:
        nk = section["nakagami"]
        if not isinstance(nk, dict):
            raise ConfigError("channel.nakagami must be a mapping")
        check_keys(nk, {"m_table", "mean"}, "channel.nakagami")
        if "m_table" not in nk or "mean" not in nk:
            raise ConfigError("channel.nakagami needs both m_table and mean")
        try:
            table = tuple((float(u), float(m)) for u, m in nk["m_table"])
        except (TypeError, ValueError):
            raise ConfigError("channel.nakagami.m_table must be a list of [upper_bound_m, m] pairs") from None
        kw["nakagami"] = NakagamiParams(table, _pathloss(nk["mean"], "channel.nakagami.mean"))
        kw["nakagami_is_placeholder"] = False
    try:
        return ChannelConfig(**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"channel: {e}") from None


def _sweep(section):
    if section is None:
        return SweepOptions()
    if not isinstance(section, dict):
        raise ConfigError("sweep must be a mapping")
    check_keys(section, {"models", "densities", "seeds", "parallelism"}, "sweep")
    kw = {}
    for k in ("models", "densities", "seeds"):
        if k in section:
            v = section[k]
            kw[k] = tuple(v) if isinstance(v, (list, tuple)) else (v,)
    if "parallelism" in section:
        kw["parallelism"] = section["parallelism"]
    return SweepOptions(**kw)


def from_dict(data):
    """Validate a nested mapping and build a :class:`RunConfig`."""
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be a mapping")
    check_keys(data, {f.name for f in fields(RunConfig)}, "config")
    scen = dict(data.get("scenario") or {})
    if "lane_speed_means" in scen:
        scen["lane_speed_means"] = tuple(scen["lane_speed_means"])
    if "density_per_km" in scen:
        raise ConfigError("set densities under sweep.densities, not scenario.density_per_km")
    try:
        cfg = RunConfig(
            scenario=_build(ScenarioConfig, scen, "scenario", exclude=("density_per_km", "seed")),
            radio=_build(RadioConfig, data.get("radio"), "radio"),
            channel=_channel(data.get("channel")),
            sweep=_sweep(data.get("sweep")),
            metrics=_build(MetricsOptions, data.get("metrics"), "metrics"),
            output=_build(OutputOptions, data.get("output"), "output"),
            desk_scale=bool(data.get("desk_scale", False)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    return apply_desk_scale(cfg) if cfg.desk_scale else cfg


def load(path):
    """Read a YAML (or JSON) configuration file."""
    try:
        with open(path) as f:
            data = read_yaml(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from None
    return from_dict(data)


def apply_desk_scale(cfg):
    """Shrink a configuration to the CI profile.

    The road becomes 2 km and the duration 100 s; densities are capped so
    that no run holds more than 200 vehicles.
    """
    scen = replace(cfg.scenario, road_length_m=DESK_ROAD_LENGTH_M, duration_s=DESK_DURATION_S)
    cap = DESK_MAX_VEHICLES / (DESK_ROAD_LENGTH_M / 1000.0)
    dens = tuple(min(d, cap) for d in cfg.sweep.densities)
    return replace(cfg, scenario=scen, sweep=replace(cfg.sweep, densities=dens), desk_scale=True)
