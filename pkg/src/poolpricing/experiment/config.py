"""Scenario configuration: a sectioned key-value (INI) file with a fixed key set.

Unknown sections or keys are errors so that a typo never silently falls back
to a default. Example::

    [pricing]
    rho = 1.5
    lambda_hat = 0.05

    [population]
    preset = nyc-4class

    [experiment]
    strategies = personalised, flat:0.15, flat:0.2, private
    seed = 7
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from poolpricing.errors import ConfigError, DomainError
from poolpricing.population import BehavioralClass, BehavioralMixture, get_preset
from poolpricing.pricing import ObjectiveWeights

PROVIDERS = ("euclidean", "manhattan", "haversine", "matrix")

_KEYS: dict[str, set[str]] = {
    "pricing": {"rho", "lambda_hat", "thinning", "lambda_cap", "shared_weights", "private_weights"},
    "graph": {"alpha", "lambda0", "max_degree", "max_pickup_delay", "provider", "speed_kmh", "matrix"},
    "population": {"preset", "n_vot", "n_pfs", "degree_epsilon", "vot_floor", "pfs_floor"},
    "demand": {"requests", "rate_per_hour", "batch_minutes", "area_x_km", "area_y_km", "min_trip_km"},
    "experiment": {"strategies", "seed"},
}
_CLASS_KEYS = {"mean_vot", "std_vot", "mean_pfs", "std_pfs", "share"}


@dataclass(frozen=True)
class Strategy:
    kind: str  # personalised | flat | private
    value: float = 0.0

    @property
    def name(self) -> str:
        if self.kind == "flat":
            return f"flat:{self.value:g}"
        return self.kind

    @property
    def slug(self) -> str:
        return self.name.replace(":", "_")

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        t = text.strip().lower()
        if t in ("personalised", "personalized"):
            return cls("personalised")
        if t == "private":
            return cls("private")
        if t.startswith("flat:"):
            try:
                v = float(t[5:])
            except ValueError:
                raise ConfigError(f"bad flat discount in strategy {text!r}") from None
            if not 0 <= v <= 1:
                raise ConfigError(f"flat discount must lie in [0, 1]: {text!r}")
            return cls("flat", v)
        raise ConfigError(f"unknown strategy {text!r}; use personalised, flat:<x> or private")


@dataclass(frozen=True)
class DemandParams:
    rate_per_hour: float = 300.0
    batch_minutes: float = 30.0
    area_x_km: float = 8.0
    area_y_km: float = 8.0
    min_trip_km: float = 1.5


@dataclass(frozen=True)
class ScenarioConfig:
    rho: float = 1.5
    lambda_hat: float = 0.05
    thinning: int = 20
    lambda_cap: float = 1.0
    shared_weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    private_weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    alpha: float = 0.2
    lambda0: float = 0.4
    max_degree: int = 4
    max_pickup_delay: float = 600.0
    provider: str = "euclidean"
    speed_kmh: float = 30.0
    matrix: Path | None = None
    mixture: BehavioralMixture = field(default_factory=lambda: get_preset("nyc-4class"))
    n_vot: int = 10
    n_pfs: int = 10
    degree_epsilon: float = 0.1
    requests: Path | None = None
    demand: DemandParams = field(default_factory=DemandParams)
    strategies: tuple[Strategy, ...] = (
        Strategy("personalised"), Strategy("flat", 0.15), Strategy("flat", 0.2), Strategy("private"))
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.max_degree < 1:
            raise ConfigError("max_degree must be >= 1")
        if self.thinning != 0 and self.thinning < 2:
            raise ConfigError("thinning must be 0 (off) or >= 2")
        if self.n_vot < 1 or self.n_pfs < 1:
            raise ConfigError("grid sizes must be >= 1")
        if not self.rho > 0 or not 0 <= self.lambda_hat < 1:
            raise ConfigError("need rho > 0 and 0 <= lambda_hat < 1")
        if self.provider not in PROVIDERS:
            raise ConfigError(f"provider must be one of {PROVIDERS}")
        if self.provider == "matrix" and self.matrix is None:
            raise ConfigError("provider = matrix needs graph.matrix")
        if len({s.name for s in self.strategies}) != len(self.strategies):
            raise ConfigError("duplicate strategies")

    def with_overrides(self, **kw) -> "ScenarioConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        try:
            return replace(self, **kw)
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc


def _num(section: str, key: str, raw: str, kind=float):
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}") from None


def _weights(section: str, key: str, raw: str) -> ObjectiveWeights:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 4:
        raise ConfigError(f"[{section}] {key}: expected 4 comma-separated numbers")
    try:
        return ObjectiveWeights(*(_num(section, key, p) for p in parts))
    except DomainError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def parse_config(text: str, base_dir: Path | None = None) -> ScenarioConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    base_dir = base_dir or Path.cwd()
    kw: dict = {}
    classes: list[BehavioralClass] = []
    preset_name: str | None = None
    floors: dict[str, float] = {}
    demand: dict[str, float] = {}
    for section in cp.sections():
        items = dict(cp.items(section))
        if section.startswith("class."):
            unknown = set(items) - _CLASS_KEYS
            missing = _CLASS_KEYS - set(items)
            if unknown or missing:
                raise ConfigError(f"[{section}] unknown keys {sorted(unknown)} / missing {sorted(missing)}")
            try:
                classes.append(BehavioralClass(
                    *(_num(section, k, items[k]) for k in ("mean_vot", "std_vot", "mean_pfs", "std_pfs", "share")),
                    name=section[6:]))
            except DomainError as exc:
                raise ConfigError(f"[{section}] {exc}") from None
            continue
        if section not in _KEYS:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(items) - _KEYS[section]
        if unknown:
            raise ConfigError(f"[{section}] unknown keys: {', '.join(sorted(unknown))}")
        for key, raw in items.items():
            if section == "pricing":
                if key == "thinning":
                    kw[key] = _num(section, key, raw, int)
                elif key.endswith("_weights"):
                    kw[key] = _weights(section, key, raw)
                else:
                    kw[key] = _num(section, key, raw)
            elif section == "graph":
                if key == "max_degree":
                    kw[key] = _num(section, key, raw, int)
                elif key == "provider":
                    kw[key] = raw.strip().lower()
                elif key == "matrix":
                    kw[key] = (base_dir / raw.strip()).resolve()
                else:
                    kw[key] = _num(section, key, raw)
            elif section == "population":
                if key == "preset":
                    preset_name = raw.strip()
                elif key in ("n_vot", "n_pfs"):
                    kw[key] = _num(section, key, raw, int)
                elif key in ("vot_floor", "pfs_floor"):
                    floors[key] = _num(section, key, raw)
                else:
                    kw[key] = _num(section, key, raw)
            elif section == "demand":
                if key == "requests":
                    kw["requests"] = (base_dir / raw.strip()).resolve()
                else:
                    demand[key] = _num(section, key, raw)
            elif section == "experiment":
                if key == "strategies":
                    kw["strategies"] = tuple(Strategy.parse(s) for s in raw.split(",") if s.strip())
                else:
                    kw["seed"] = _num(section, key, raw, int)
    if classes and preset_name:
        raise ConfigError("give either population.preset or [class.*] sections, not both")
    try:
        if classes:
            kw["mixture"] = BehavioralMixture(tuple(classes), **floors)
        else:
            mix = get_preset(preset_name or "nyc-4class")
            kw["mixture"] = BehavioralMixture(mix.classes, **{**{"vot_floor": mix.vot_floor,
                                                                 "pfs_floor": mix.pfs_floor}, **floors})
    except DomainError as exc:
        raise ConfigError(f"[population] {exc}") from None
    if demand:
        kw["demand"] = DemandParams(**demand)
    return ScenarioConfig(**kw)


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent)
