"""Pipeline configuration: INI parsing, validation, seed derivation, hashing.

Every section is optional and every key has a default, so an empty file is
a valid configuration. Module seeds are never set directly; they are derived
from ``[pipeline] seed`` by hashing a fixed label, which keeps a stage run on
its own in step with the same stage inside a full run.
"""

from __future__ import annotations

import configparser
import datetime as dt
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .gbrt import GbrtConfig
from .lstm import LstmTrainConfig
from .simdata import SimConfig

SOURCES = ("simulate", "ingest")


def derive_seed(global_seed: int, label: str) -> int:
    """63-bit seed from SHA-256 of ``"<global_seed>/<label>"``."""
    digest = hashlib.sha256(f"{int(global_seed)}/{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class IngestConfig:
    shift_csv: str = ""
    rain_csv: str = ""
    max_gap: int = 3
    day_shift_start: str = "05:30"
    night_shift_start: str = "17:30"

    def __post_init__(self):
        if self.max_gap < 0:
            raise ConfigError(f"max_gap must be >= 0, got {self.max_gap}")
        for name in ("day_shift_start", "night_shift_start"):
            try:
                dt.time.fromisoformat(getattr(self, name))
            except ValueError:
                raise ConfigError(f"{name} must be HH:MM, got {getattr(self, name)!r}") from None


@dataclass(frozen=True)
class FeatureConfig:
    train_fraction: float = 0.8
    lookback: int = 10

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.lookback < 1:
            raise ConfigError(f"lookback must be >= 1, got {self.lookback}")


@dataclass(frozen=True)
class FleetConfig:
    n_draws: int = 100

    def __post_init__(self):
        if self.n_draws < 1:
            raise ConfigError(f"n_draws must be >= 1, got {self.n_draws}")


@dataclass(frozen=True)
class EvalConfig:
    threshold_pct: float = 50.0

    def __post_init__(self):
        if not self.threshold_pct >= 0:
            raise ConfigError(f"threshold_pct must be >= 0, got {self.threshold_pct}")


@dataclass(frozen=True)
class PipelineConfig:
    source: str = "simulate"
    output_dir: str = "haulcast_out"
    seed: int = 0
    include_true_next_trucks: bool = False
    figures: bool = True
    simdata: SimConfig = field(default_factory=SimConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    fleetmc: FleetConfig = field(default_factory=FleetConfig)
    gbrt: GbrtConfig = field(default_factory=GbrtConfig)
    lstm: LstmTrainConfig = field(default_factory=LstmTrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ConfigError(f"source must be one of {SOURCES}, got {self.source!r}")
        if self.source == "ingest" and not self.ingest.shift_csv:
            raise ConfigError("source = ingest requires [ingest] shift_csv")
        # module seeds always follow the global seed
        object.__setattr__(self, "simdata", replace(self.simdata, seed=derive_seed(self.seed, "simdata")))
        object.__setattr__(self, "lstm", replace(self.lstm, seed=derive_seed(self.seed, "lstm")))

    @property
    def fleet_seed(self) -> int:
        return derive_seed(self.seed, "fleetmc")

    def with_overrides(self, **changes) -> "PipelineConfig":
        """Copy with top-level fields replaced; module seeds are re-derived."""
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        """SHA-256 over every modelling field; ``output_dir`` and ``figures`` are excluded."""
        doc = self.to_dict()
        doc.pop("output_dir")
        doc.pop("figures")
        text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


_SECTIONS = {
    "simdata": SimConfig,
    "ingest": IngestConfig,
    "features": FeatureConfig,
    "fleetmc": FleetConfig,
    "gbrt": GbrtConfig,
    "lstm": LstmTrainConfig,
    "eval": EvalConfig,
}
_PIPELINE_KEYS = ("source", "output_dir", "seed", "include_true_next_trucks", "figures")
_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}


def _coerce(section: str, key: str, text: str, default):
    where = f"[{section}] {key}"
    text = text.strip()
    if isinstance(default, bool):
        if text.lower() not in _BOOL:
            raise ConfigError(f"{where}: expected a boolean, got {text!r}")
        return _BOOL[text.lower()]
    if isinstance(default, int):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{where}: expected an integer, got {text!r}") from None
    if isinstance(default, float):
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{where}: expected a number, got {text!r}") from None
    if isinstance(default, tuple):
        return tuple(p.strip() for p in text.split(",") if p.strip())
    return text


def _section_values(parser, section: str, cls) -> dict:
    defaults = {f.name: getattr(cls(), f.name) for f in fields(cls) if f.name != "seed"}
    values = {}
    for key, text in parser.items(section):
        if key == "seed":
            raise ConfigError(f"[{section}] seed: module seeds derive from [pipeline] seed")
        if key not in defaults:
            raise ConfigError(f"[{section}]: unknown key {key!r}")
        values[key] = _coerce(section, key, text, defaults[key])
    return values


def parse_config(text: str, base_dir: str | Path = ".") -> PipelineConfig:
    """Build a PipelineConfig from INI text; relative paths resolve against ``base_dir``."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    unknown = sorted(set(parser.sections()) - set(_SECTIONS) - {"pipeline"})
    if unknown:
        raise ConfigError(f"unknown config sections: {unknown}")
    top = {}
    if parser.has_section("pipeline"):
        defaults = PipelineConfig()
        for key, text_value in parser.items("pipeline"):
            if key not in _PIPELINE_KEYS:
                raise ConfigError(f"[pipeline]: unknown key {key!r}")
            top[key] = _coerce("pipeline", key, text_value, getattr(defaults, key))
    nested = {}
    for section, cls in _SECTIONS.items():
        values = _section_values(parser, section, cls) if parser.has_section(section) else {}
        try:
            nested[section] = cls(**values)
        except ConfigError as exc:
            raise ConfigError(f"[{section}] {exc}") from None
    base = Path(base_dir)
    ing = nested["ingest"]
    nested["ingest"] = replace(
        ing,
        shift_csv=str(base / ing.shift_csv) if ing.shift_csv else "",
        rain_csv=str(base / ing.rain_csv) if ing.rain_csv else "",
    )
    if "output_dir" in top:
        top["output_dir"] = str(base / top["output_dir"])
    return PipelineConfig(**top, **nested)


def load_config(path: str | Path | None) -> PipelineConfig:
    """Read a config file; ``None`` gives the all-defaults configuration."""
    if path is None:
        return PipelineConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent)


def render_config(config: PipelineConfig, include_output_dir: bool = True) -> str:
    """INI text that parses back to ``config`` (derived seeds omitted).

    With ``include_output_dir=False`` the text is independent of where the
    artifacts live, so copies stored inside two output trees are identical.
    """
    out = ["[pipeline]"]
    for key in _PIPELINE_KEYS:
        if key == "output_dir" and not include_output_dir:
            continue
        value = getattr(config, key)
        out.append(f"{key} = {str(value).lower() if isinstance(value, bool) else value}")
    for section in _SECTIONS:
        out.append("")
        out.append(f"[{section}]")
        for key, value in asdict(getattr(config, section)).items():
            if key == "seed":
                continue
            if isinstance(value, (tuple, list)):
                value = ",".join(value)
            elif isinstance(value, float):
                value = repr(value)
            out.append(f"{key} = {value}")
    return "\n".join(out) + "\n"
