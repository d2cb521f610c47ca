"""
Non-wear and malfunction detection, per-day validity, and the window grid.

A day is usable only if, inside the analysis window, every minute was worn
and no second shows a malfunction signature. Two signatures are checked on
the raw signal: implausible spikes in the per-second SD and an axis stuck at
the same non-zero value.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from datetime import date

import numpy as np
import pandas as pd

from .errors import AlignmentError, ConfigError
from .ingest import FULL_DAY, DayGrid

log = logging.getLogger(__name__)

MAX_DAYS_PER_PARTICIPANT = 7


@dataclass(frozen=True)
class ChoiParams:
    """Choi et al. (2011) non-wear settings, in minutes."""

    window_minutes: int = 90
    spike_tolerance_minutes: int = 2
    flank_zero_minutes: int = 30

    def __post_init__(self):
        if min(self.window_minutes, self.spike_tolerance_minutes, self.flank_zero_minutes) <= 0:
            raise ConfigError("Choi parameters must all be positive")
        if self.spike_tolerance_minutes >= self.window_minutes:
            raise ConfigError("Choi spike tolerance must be shorter than the window")


def _runs(flags):
    """Run-length encode a boolean array -> (values, starts, lengths)."""
    flags = np.asarray(flags, dtype=bool)
    if flags.size == 0:
        return flags, np.zeros(0, int), np.zeros(0, int)
    change = np.flatnonzero(flags[1:] != flags[:-1]) + 1
    starts = np.concatenate([[0], change])
    lengths = np.diff(np.concatenate([starts, [flags.size]]))
    return flags[starts], starts, lengths


def detect_nonwear_choi(cpm, params=ChoiParams()):
    """Return the wear mask (True = worn) for a minute-level count series.

    A minute is non-wear when it sits in a stretch of at least
    ``window_minutes`` zero-count minutes. Runs of up to
    ``spike_tolerance_minutes`` non-zero minutes are absorbed into the
    stretch when both neighbouring zero runs are at least
    ``flank_zero_minutes`` long.
    """
    cpm = np.asarray(cpm, dtype=float)
    if cpm.size < params.window_minutes:
        warnings.warn(f"series of {cpm.size} minutes is shorter than the "
                      f"{params.window_minutes}-minute Choi window; treating all as worn")
        return np.ones(cpm.size, dtype=bool)
    zero, starts, lengths = _runs(cpm == 0)
    absorbed = zero.copy()
    for i in range(1, len(zero) - 1):
        if (not zero[i] and lengths[i] <= params.spike_tolerance_minutes
                and lengths[i - 1] >= params.flank_zero_minutes
                and lengths[i + 1] >= params.flank_zero_minutes):
            absorbed[i] = True
    quiet = np.repeat(absorbed, lengths)
    is_quiet, qstarts, qlengths = _runs(quiet)
    wear = np.ones(cpm.size, dtype=bool)
    for flag, s, n in zip(is_quiet, qstarts, qlengths):
        if flag and n >= params.window_minutes:
            wear[s:s + n] = False
    return wear


@dataclass
class MalfunctionMask:
    """Per-second malfunction flags, split by reason."""

    spike: np.ndarray
    stuck: np.ndarray

    def __post_init__(self):
        self.spike = np.asarray(self.spike, dtype=bool)
        self.stuck = np.asarray(self.stuck, dtype=bool)
        if self.spike.shape != self.stuck.shape:
            raise AlignmentError("spike and stuck masks differ in length")

    @classmethod
    def clean(cls, n_seconds):
        return cls(np.zeros(n_seconds, bool), np.zeros(n_seconds, bool))

    @property
    def flags(self):
        return self.spike | self.stuck

    def __len__(self):
        return len(self.spike)

    def __or__(self, other):
        return MalfunctionMask(self.spike | other.spike, self.stuck | other.stuck)

    def __getitem__(self, item):
        return MalfunctionMask(self.spike[item], self.stuck[item])


def detect_spike_malfunction(sd, max_plausible=8.0):
    """Flag seconds where any axis SD is strictly above ``max_plausible`` g."""
    if max_plausible <= 0:
        raise ConfigError("max_plausible must be positive")
    values = sd.values if hasattr(sd, "values") else np.asarray(sd, dtype=float)
    axes = values[:, :3]
    with np.errstate(invalid="ignore"):
        spike = np.nan_to_num(axes, nan=-np.inf).max(axis=1) > max_plausible
    return MalfunctionMask(spike, np.zeros_like(spike))


def detect_stuck_sensor(values, min_run_seconds=300):
    """Flag runs of one identical non-zero value on any axis lasting ``min_run_seconds``.

    ``values`` is (n_seconds, n_axes). Zero runs are left alone; long zero
    stretches are a wear question, not a malfunction.
    """
    if min_run_seconds < 2:
        raise ConfigError("min_run_seconds must be at least 2")
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    stuck = np.zeros(len(values), dtype=bool)
    for axis in values.T:
        if axis.size == 0:
            continue
        change = np.flatnonzero(axis[1:] != axis[:-1]) + 1
        bounds = np.concatenate([[0], change, [axis.size]])
        for s, e in zip(bounds[:-1], bounds[1:]):
            if e - s >= min_run_seconds and axis[s] != 0 and np.isfinite(axis[s]):
                stuck[s:e] = True
    return MalfunctionMask(np.zeros_like(stuck), stuck)


@dataclass
class DayRecord:
    participant_id: str
    date: date
    wear_mask: np.ndarray         # per minute, True = worn
    malfunction: MalfunctionMask  # per second
    grid: DayGrid
    valid: bool

    @property
    def nonwear_minutes(self):
        return int((~self.wear_mask).sum())

    @property
    def spike_seconds(self):
        return int(self.malfunction.spike.sum())

    @property
    def stuck_seconds(self):
        return int(self.malfunction.stuck.sum())

    def restrict(self, grid):
        """Re-evaluate this day on a narrower window inside its own grid."""
        if not self.grid.contains(grid):
            raise AlignmentError(f"window {grid.label} is not inside {self.grid.label}")
        m0 = grid.start_minute - self.grid.start_minute
        m1 = m0 + grid.n_minutes
        return evaluate_day(self.participant_id, self.date, self.wear_mask[m0:m1],
                            self.malfunction[m0 * 60:m1 * 60], grid)


def evaluate_day(participant_id, day, wear_mask, malfunction, grid=DayGrid()):
    """Valid iff every window minute is worn and no window second malfunctions."""
    wear_mask = np.asarray(wear_mask, dtype=bool)
    if malfunction is None:
        malfunction = MalfunctionMask.clean(grid.n_seconds)
    if len(wear_mask) != grid.n_minutes:
        raise AlignmentError(f"wear mask has {len(wear_mask)} minutes, window {grid.label} "
                             f"needs {grid.n_minutes}")
    if len(malfunction) != grid.n_seconds:
        raise AlignmentError(f"malfunction mask has {len(malfunction)} seconds, window "
                             f"{grid.label} needs {grid.n_seconds}")
    valid = bool(wear_mask.all() and not malfunction.flags.any())
    return DayRecord(participant_id, day, wear_mask, malfunction, grid, valid)


def retain_days(records, max_days=MAX_DAYS_PER_PARTICIPANT):
    """First ``max_days`` valid days per participant, chronologically."""
    kept = []
    by_pid = {}
    for rec in sorted(records, key=lambda r: (r.participant_id, r.date)):
        if not rec.valid:
            continue
        n = by_pid.get(rec.participant_id, 0)
        if n < max_days:
            kept.append(rec)
            by_pid[rec.participant_id] = n + 1
    return kept


GRID_THRESHOLDS = range(0, 7)


def window_grid_columns():
    cols = ["Time frame", "Subjects with 0 profiles (n)"]
    cols += [f"Subjects with {k}+ profiles (n)" for k in GRID_THRESHOLDS]
    return cols


def window_grid_report(records, windows, participants=None):
    """Participants by number of valid days, for each candidate window.

    ``records`` are DayRecords on a grid wide enough to contain every
    candidate window (typically the full day); each is re-evaluated on each
    window. The "k+" columns count participants with more than k valid days,
    so "0 profiles" and "0+ profiles" always sum to the cohort size.
    ``participants`` lists cohort members who may have no records at all.
    """
    if not windows:
        raise ConfigError("window_grid_report needs at least one candidate window")
    pids = sorted(set(participants or ()) | {r.participant_id for r in records})
    rows = []
    for window in windows:
        if not isinstance(window, DayGrid):
            window = DayGrid.from_clock(*window)
        counts = dict.fromkeys(pids, 0)
        for rec in records:
            if rec.restrict(window).valid:
                counts[rec.participant_id] += 1
        n_valid = np.array(list(counts.values()), dtype=int)
        row = [window.label, int((n_valid == 0).sum())]
        row += [int((n_valid > k).sum()) for k in GRID_THRESHOLDS]
        rows.append(row)
    return pd.DataFrame(rows, columns=window_grid_columns())


def default_windows():
    """The 36 default wear windows: starts 05:00-12:00, at least 12 h long."""
    out = []
    for start in range(5, 13):
        for end in range(start + 12, 25):
            out.append(DayGrid(start * 60, end * 60))
    return out


def window_values(values, start_time, epoch, day, grid, fill):
    """Values covering ``grid`` on ``day``; positions the series does not reach get ``fill``."""
    n_out = grid.n_seconds // epoch
    out = np.full((n_out,) + values.shape[1:], fill, dtype=values.dtype)
    ws = pd.Timestamp(day) + pd.Timedelta(minutes=grid.start_minute)
    offset = (ws - pd.Timestamp(start_time)).total_seconds() / epoch
    if offset != int(offset):
        return out
    offset = int(offset)
    lo, hi = max(offset, 0), min(offset + n_out, len(values))
    if lo < hi:
        out[lo - offset:hi - offset] = values[lo:hi]
    return out


def recording_dates(start_time, n_epochs, epoch):
    first = pd.Timestamp(start_time).normalize()
    last = (pd.Timestamp(start_time) + pd.Timedelta(seconds=epoch * max(n_epochs - 1, 0))).normalize()
    return [d.date() for d in pd.date_range(first, last, freq="D")]


def assess_participant(counts, seconds=None, choi=ChoiParams(), max_plausible_sd=8.0,
                       stuck_run_seconds=300, grid=FULL_DAY, axis="vm"):
    """DayRecords for every calendar date a participant's recording touches.

    Choi runs over the whole minute series so bouts crossing midnight are
    judged on their full length. Anything the recording does not cover,
    including NaN (unobserved) seconds in the SD series, counts as not worn,
    so an incomplete day can never be valid.
    """
    if counts.epoch_seconds != 60:
        raise ConfigError("non-wear detection expects 1-minute epochs")
    channel = {"x": 0, "y": 1, "z": 2, "vm": 3}[axis]
    wear_all = detect_nonwear_choi(counts.values[:, channel], choi)
    mal_all = None
    observed_sec = None
    if seconds is not None:
        mal_all = detect_spike_malfunction(seconds.values, max_plausible_sd)
        if seconds.means is not None:
            mal_all = mal_all | detect_stuck_sensor(seconds.means, stuck_run_seconds)
        observed_sec = ~np.isnan(seconds.values).any(axis=1)
    records = []
    for day in recording_dates(counts.start_time, len(counts), 60):
        wear = window_values(wear_all, counts.start_time, 60, day, grid, False)
        mal = MalfunctionMask.clean(grid.n_seconds)
        if seconds is not None:
            mal = MalfunctionMask(
                window_values(mal_all.spike, seconds.start_time, 1, day, grid, False),
                window_values(mal_all.stuck, seconds.start_time, 1, day, grid, False))
            seen = window_values(observed_sec, seconds.start_time, 1, day, grid, False)
            wear &= seen.reshape(-1, 60).all(axis=1)
        records.append(evaluate_day(counts.participant_id, day, wear, mal, grid))
    return records
