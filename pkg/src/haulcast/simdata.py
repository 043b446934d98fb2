"""Synthetic shift-level haulage data with seasonal rain and breakdown-driven fleet variation.

The generator is a structural model, not a discrete-event simulation:

    scheduled = round(max(Normal(mu, sigma), 0))
    working   = scheduled - Binomial(scheduled, breakdown_prob)
    rain_factor = 1 - rain_sensitivity * min(rain, rain_saturation) / rain_saturation
    cycles  = round(k * trucks * shift_minutes / cycle_time * rain_factor * night * (1 + e1))
    payload = cycles * tons_per_cycle * (1 + e2)

``mu`` and ``sigma`` of the scheduled-count normal are solved from the
configured means/stds of the *working* counts, so the defaults land on the
fleet statistics reported for the reference mine (13.8 +/- 3.1 trucks,
4.7 +/- 1.4 shovels, 158 +/- 71 cycles, 13 795 +/- 6 393 t, 64 +/- 17 min).
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError
from .ingest import ShiftRecord

# rain shape constants: gamma shape of a wet-shift amount, extreme-event
# probability and mean multiplier of the exponential boost
RAIN_GAMMA_SHAPE = 0.8
RAIN_EXTREME_PROB = 0.02
RAIN_EXTREME_SCALE = 3.0
DAYS_PER_YEAR = 365.25


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    n_shifts: int = 2000
    start_year: int = 2021
    start_day_of_year: int = 1
    trucks_mean: float = 13.8
    trucks_std: float = 3.1
    shovels_mean: float = 4.7
    shovels_std: float = 1.4
    cycle_time_mean: float = 64.0
    cycle_time_std: float = 17.0
    cycle_time_min: float = 15.0
    tons_per_cycle: float = 87.3
    cycle_rate_calibration: float = 1.089
    shift_minutes: float = 630.0
    night_cycle_bonus: float = 0.03
    rain_wet_season_peak: float = 6.7
    rain_dry_season_level: float = 0.35
    rain_peak_day: float = 45.0
    rain_sensitivity: float = 0.3
    rain_saturation: float = 20.0
    breakdown_prob: float = 0.05
    crew_ids: tuple[str, ...] = ("A", "B", "C", "D")
    noise_scale: float = 0.10

    def __post_init__(self):
        object.__setattr__(self, "crew_ids", tuple(str(c) for c in self.crew_ids))
        self.validate()

    def validate(self) -> None:
        if int(self.n_shifts) != self.n_shifts or self.n_shifts < 1:
            raise ConfigError(f"n_shifts must be a positive integer, got {self.n_shifts}")
        if not 1 <= self.start_day_of_year <= 366:
            raise ConfigError(f"start_day_of_year must be in 1..366, got {self.start_day_of_year}")
        non_negative = (
            "trucks_mean", "trucks_std", "shovels_mean", "shovels_std",
            "cycle_time_std", "tons_per_cycle", "cycle_rate_calibration",
            "night_cycle_bonus", "rain_wet_season_peak", "rain_dry_season_level",
            "noise_scale",
        )
        for name in non_negative:
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ConfigError(f"{name} must be finite and >= 0, got {value}")
        for name in ("cycle_time_mean", "cycle_time_min", "shift_minutes", "rain_saturation"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0.0 <= self.rain_sensitivity <= 1.0:
            raise ConfigError(f"rain_sensitivity must lie in [0, 1], got {self.rain_sensitivity}")
        if not 0.0 <= self.breakdown_prob < 1.0:
            raise ConfigError(f"breakdown_prob must lie in [0, 1), got {self.breakdown_prob}")
        if not self.crew_ids:
            raise ConfigError("crew_ids must name at least one crew")
        if len(set(self.crew_ids)) != len(self.crew_ids):
            raise ConfigError("crew_ids must be unique")
        # raises ConfigError when a target std is unreachable
        _scheduled_normal(self.trucks_mean, self.trucks_std, self.breakdown_prob, "trucks_std")
        _scheduled_normal(self.shovels_mean, self.shovels_std, self.breakdown_prob, "shovels_std")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _scheduled_normal(mean: float, std: float, p: float, name: str) -> tuple[float, float]:
    """Normal parameters for scheduled units such that working units hit (mean, std).

    working = S - Binomial(S, p) gives E = (1-p) E[S] and
    Var = (1-p)^2 Var[S] + p (1-p) E[S]; rounding S adds ~1/12 variance.
    """
    scheduled_mean = mean / (1.0 - p)
    var_s = (std * std - p * (1.0 - p) * scheduled_mean) / (1.0 - p) ** 2
    if var_s < 0:
        raise ConfigError(
            f"{name}={std} is below the spread breakdowns alone produce at breakdown_prob={p}"
        )
    return scheduled_mean, float(np.sqrt(max(var_s - 1.0 / 12.0, 0.0)))


def rain_envelope(day_of_year, config: SimConfig):
    """Mean rainfall (mm/shift) on a given day: a sharpened annual cosine peaking in the wet season."""
    phase = 2.0 * np.pi * (np.asarray(day_of_year, dtype=float) - config.rain_peak_day) / DAYS_PER_YEAR
    weight = ((1.0 + np.cos(phase)) / 2.0) ** 2
    level = config.rain_dry_season_level + (config.rain_wet_season_peak - config.rain_dry_season_level) * weight
    return level, weight


def seasonal_rain(day_of_year, config: SimConfig, rng: np.random.Generator):
    """Draw per-shift rainfall (mm) for one or many days of the year.

    A shift is wet with a probability that rises in the wet season; a wet
    shift's amount is gamma distributed and occasionally boosted by an
    exponential factor to produce cyclone-scale totals. The draws are scaled
    so the expected amount equals :func:`rain_envelope`. Exactly four
    variates are consumed per shift whatever the outcome.
    """
    days = np.asarray(day_of_year)
    if np.any((days < 1) | (days > 366)):
        raise ConfigError("day_of_year must lie in 1..366")
    size = days.shape
    level, weight = rain_envelope(days, config)
    p_wet = 0.2 + 0.5 * weight

    u_wet = rng.random(size)
    base = rng.gamma(RAIN_GAMMA_SHAPE, 1.0 / RAIN_GAMMA_SHAPE, size)
    u_extreme = rng.random(size)
    boost = rng.exponential(RAIN_EXTREME_SCALE, size)

    multiplier = 1.0 + np.where(u_extreme < RAIN_EXTREME_PROB, boost, 0.0)
    mean_multiplier = 1.0 + RAIN_EXTREME_PROB * RAIN_EXTREME_SCALE
    amount = np.where(u_wet < p_wet, base * multiplier * level / (p_wet * mean_multiplier), 0.0)
    return amount if size else float(amount)


@dataclass
class _Draws:
    """All randomness of one simulation run, drawn up front in a fixed order."""

    trucks_scheduled: np.ndarray
    shovels_scheduled: np.ndarray
    cycle_time: np.ndarray
    rain: np.ndarray
    cycle_noise: np.ndarray
    payload_noise: np.ndarray
    trucks_broken: np.ndarray
    shovels_broken: np.ndarray
    is_night: np.ndarray = field(repr=False)
    dates: list = field(repr=False)


def _calendar(config: SimConfig) -> tuple[list[dt.date], np.ndarray]:
    start = dt.date(config.start_year, 1, 1) + dt.timedelta(days=config.start_day_of_year - 1)
    idx = np.arange(config.n_shifts)
    dates = [start + dt.timedelta(days=int(d)) for d in idx // 2]
    return dates, idx % 2 == 1


def _draw(config: SimConfig, rng: np.random.Generator) -> _Draws:
    n = config.n_shifts
    dates, is_night = _calendar(config)

    t_mu, t_sigma = _scheduled_normal(config.trucks_mean, config.trucks_std, config.breakdown_prob, "trucks_std")
    s_mu, s_sigma = _scheduled_normal(config.shovels_mean, config.shovels_std, config.breakdown_prob, "shovels_std")
    trucks = np.rint(np.clip(rng.normal(t_mu, t_sigma, n), 0.0, None)).astype(np.int64)
    shovels = np.rint(np.clip(rng.normal(s_mu, s_sigma, n), 0.0, None)).astype(np.int64)
    cycle_time = np.clip(rng.normal(config.cycle_time_mean, config.cycle_time_std, n), config.cycle_time_min, None)
    days = np.array([d.timetuple().tm_yday for d in dates])
    rain = np.asarray(seasonal_rain(days, config, rng), dtype=float).reshape(n)
    cycle_noise = rng.normal(0.0, 1.0, n)
    payload_noise = rng.normal(0.0, 1.0, n)
    trucks_broken = rng.binomial(trucks, config.breakdown_prob)
    shovels_broken = rng.binomial(shovels, config.breakdown_prob)
    return _Draws(trucks, shovels, cycle_time, rain, cycle_noise, payload_noise,
                  trucks_broken, shovels_broken, is_night, dates)


def _assemble(config: SimConfig, draws: _Draws) -> dict[str, np.ndarray]:
    """Deterministic structural equations applied to a fixed set of draws."""
    trucks = draws.trucks_scheduled - draws.trucks_broken
    shovels = draws.shovels_scheduled - draws.shovels_broken
    rain_factor = 1.0 - config.rain_sensitivity * np.minimum(draws.rain, config.rain_saturation) / config.rain_saturation
    shift_factor = 1.0 + config.night_cycle_bonus * draws.is_night
    cycle_mult = np.clip(1.0 + config.noise_scale * draws.cycle_noise, 0.0, None)
    payload_mult = np.clip(1.0 + config.noise_scale * draws.payload_noise, 0.0, None)
    rate = config.cycle_rate_calibration * trucks * (config.shift_minutes / draws.cycle_time)
    cycles = np.rint(rate * rain_factor * shift_factor * cycle_mult).astype(np.int64)
    payload = cycles * config.tons_per_cycle * payload_mult
    return {
        "working_trucks": trucks,
        "working_shovels": shovels,
        "cycle_time": draws.cycle_time,
        "precipitation": draws.rain,
        "cycle_count": cycles,
        "payload": payload,
    }


def simulate_shifts(config: SimConfig) -> list[ShiftRecord]:
    """Generate ``config.n_shifts`` chronological shift records.

    Shifts alternate day/night starting with a day shift on
    ``start_day_of_year``; crews rotate round-robin over ``crew_ids``.
    Output is a pure function of ``config`` (seed included).
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    draws = _draw(config, rng)
    cols = _assemble(config, draws)
    crews = config.crew_ids
    return [
        ShiftRecord(
            shift_index=i,
            date=draws.dates[i],
            shift_kind="night" if draws.is_night[i] else "day",
            crew=crews[i % len(crews)],
            working_trucks=int(cols["working_trucks"][i]),
            working_shovels=int(cols["working_shovels"][i]),
            cycle_count=int(cols["cycle_count"][i]),
            payload=float(cols["payload"][i]),
            cycle_time=float(cols["cycle_time"][i]),
            precipitation=float(cols["precipitation"][i]),
        )
        for i in range(config.n_shifts)
    ]
