"""
Daily time-active and activity-intensity summaries from per-second SDs.

Each second is labelled active when its SD exceeds a cut-point. Per day we
keep the active time and the intensity of each active second, defined as
its SD divided by the day's mean SD over inactive seconds. Across days:

    TAM, TAV   mean and sample SD of daily active time
    AIM, AIV   mean and sample SD of intensity during active seconds
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, DegenerateDayError

DEFAULT_CUT_POINT = 0.6
AXES = {"x": 0, "y": 1, "z": 2, "mean": 3}


def sd_channel(sd, axis="mean"):
    values = sd.values if hasattr(sd, "values") else np.asarray(sd, dtype=float)
    if values.ndim == 1:
        return values
    try:
        return values[:, AXES[axis]]
    except KeyError:
        raise ConfigError(f"unknown SD axis {axis!r}; choose from {sorted(AXES)}") from None


def label_activity(sd, cut_point=DEFAULT_CUT_POINT, axis="mean"):
    """L(t): True where the SD is strictly above ``cut_point``."""
    if not cut_point > 0:
        raise ConfigError("cut_point must be positive")
    return sd_channel(sd, axis) > cut_point


@dataclass
class DayActivityStats:
    time_active: int          # seconds
    resting_sd: float         # mean SD over inactive seconds
    intensity: np.ndarray     # SD / resting_sd on active seconds


def day_stats(labels, sd, axis="mean"):
    """Active time, resting baseline and intensities for one day.

    An all-active day has no resting baseline and raises
    ``DegenerateDayError``; so does a zero baseline with active seconds.
    """
    labels = np.asarray(labels, dtype=bool)
    signal = sd_channel(sd, axis)
    if signal.shape != labels.shape:
        raise DataError("labels and SD signal differ in length")
    inactive = signal[~labels]
    if inactive.size == 0:
        raise DegenerateDayError("every second is active; resting SD is undefined")
    resting = float(inactive.mean())
    active = signal[labels]
    if active.size and resting <= 0:
        raise DegenerateDayError("resting SD is zero; intensity is undefined")
    intensity = active / resting if active.size else np.zeros(0)
    return DayActivityStats(int(labels.sum()), resting, intensity)


@dataclass
class BaiSummary:
    """TAM and TAV in minutes; AIM and AIV dimensionless. NaN marks undefined."""

    tam: float
    tav: float
    aim: float
    aiv: float
    n_days: int

    def as_dict(self):
        return {"TAM": self.tam, "TAV": self.tav, "AIM": self.aim, "AIV": self.aiv}


def _sample_sd(x):
    return float(np.std(x, ddof=1)) if len(x) >= 2 else float("nan")


def summarize_bai(days, pooling="pooled"):
    """Combine day stats into TAM/TAV/AIM/AIV.

    ``pooled`` treats every active second of every day as one sample for
    AIM/AIV. ``day_mean`` averages per-day intensity means instead, and AIV
    is then the SD of those means. TAV and AIV need at least two days.
    """
    days = list(days)
    if not days:
        raise DataError("no days to summarize")
    if pooling not in ("pooled", "day_mean"):
        raise ConfigError(f"unknown intensity pooling {pooling!r}")
    minutes = np.array([d.time_active for d in days], dtype=float) / 60.0
    tam = float(minutes.mean())
    tav = _sample_sd(minutes)
    if pooling == "pooled":
        pool = np.concatenate([d.intensity for d in days])
        aim = float(pool.mean()) if pool.size else float("nan")
        aiv = _sample_sd(pool)
    else:
        means = np.array([d.intensity.mean() for d in days if d.intensity.size])
        aim = float(means.mean()) if means.size else float("nan")
        aiv = _sample_sd(means)
    if len(days) < 2:
        aiv = float("nan")
    return BaiSummary(tam, tav, aim, aiv, len(days))


def bai_table(days_by_participant, pooling="pooled"):
    rows = []
    for pid in sorted(days_by_participant):
        days = days_by_participant[pid]
        if not days:
            continue
        rows.append({"participant_id": pid, **summarize_bai(days, pooling).as_dict()})
    return pd.DataFrame(rows, columns=["participant_id", "TAM", "TAV", "AIM", "AIV"])


@dataclass
class SdDensity:
    """Histogram density of pooled SDs: a full-range view and a tail view above C."""

    full: pd.DataFrame   # sd_value, density, cumulative
    tail: pd.DataFrame
    reference_c: float

    def to_frame(self):
        return pd.concat([self.full.assign(view="full"), self.tail.assign(view="tail")],
                         ignore_index=True)[["view", "sd_value", "density", "cumulative"]]


def _density(values, bins, value_range):
    columns = ["sd_value", "density", "cumulative"]
    if values.size == 0:
        return pd.DataFrame(columns=columns, dtype=float)
    density, edges = np.histogram(values, bins=bins, range=value_range, density=True)
    widths = np.diff(edges)
    cumulative = np.cumsum(density * widths)
    return pd.DataFrame({"sd_value": (edges[:-1] + edges[1:]) / 2,
                         "density": density, "cumulative": cumulative})


def sd_density_export(pool, bins=200, reference_c=DEFAULT_CUT_POINT, value_range=None):
    """Density and cumulative distribution of pooled per-second SDs.

    Both views are normalised on their own. ``value_range`` clips the
    histogram support; values outside it are ignored.
    """
    pool = np.asarray(pool, dtype=float).ravel()
    pool = pool[np.isfinite(pool)]
    if pool.size == 0:
        raise DataError("cannot build a density from an empty SD pool")
    tail_range = None
    if value_range is not None:
        tail_range = (reference_c, max(value_range[1], reference_c))
    return SdDensity(_density(pool, bins, value_range),
                     _density(pool[pool > reference_c], bins, tail_range), reference_c)
