"""
Reading accelerometer exports and putting them on a daily clock grid.

Three CSV layouts are understood, all with a header row and optional
``#`` comment lines:

* count exports (ActiLife style): timestamp, axis1, axis2, axis3[, vm]
* per-second SD exports: timestamp, sd_x, sd_y, sd_z[, mean_x, mean_y, mean_z]
* raw gravity exports: timestamp, accel_x, accel_y, accel_z

Timestamps are either ISO-8601 strings or numeric seconds since the Unix
epoch. Both are treated as local clock time; no time-zone arithmetic is done.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (
    AlignmentError,
    ConfigError,
    DataError,
    EmptySeriesError,
    GapError,
    ParseError,
)

log = logging.getLogger(__name__)

VM_TOLERANCE = 0.01


def parse_clock(text):
    """'07:00' -> 420 minutes after midnight. '24:00' is allowed."""
    if isinstance(text, int):
        return text
    try:
        hh, mm = str(text).split(":")
        minutes = int(hh) * 60 + int(mm)
    except ValueError:
        raise ConfigError(f"bad clock time {text!r}, expected HH:MM") from None
    if not 0 <= minutes <= 24 * 60 or not 0 <= int(mm) < 60:
        raise ConfigError(f"clock time out of range: {text!r}")
    return minutes


def format_clock(minutes):
    return f"{minutes // 60:02d}:{minutes % 60:02d}"


@dataclass(frozen=True)
class DayGrid:
    """Daily analysis window, in minutes after midnight (end exclusive)."""

    start_minute: int = 7 * 60
    end_minute: int = 23 * 60

    def __post_init__(self):
        if not 0 <= self.start_minute < self.end_minute <= 24 * 60:
            raise ConfigError(
                f"day window {self.label} must satisfy 00:00 <= start < end <= 24:00")
        if (self.end_minute - self.start_minute) % 10:
            raise ConfigError(f"day window {self.label} is not a whole number of 10-minute bins")

    @classmethod
    def from_clock(cls, start="07:00", end="23:00"):
        return cls(parse_clock(start), parse_clock(end))

    @property
    def label(self):
        return f"{format_clock(self.start_minute)}-{format_clock(self.end_minute)}"

    @property
    def n_minutes(self):
        return self.end_minute - self.start_minute

    @property
    def n_seconds(self):
        return self.n_minutes * 60

    def n_bins(self, bin_minutes=10):
        return self.n_minutes // bin_minutes

    def contains(self, other):
        return self.start_minute <= other.start_minute and other.end_minute <= self.end_minute


FULL_DAY = DayGrid(0, 24 * 60)


@dataclass
class RawSampleSeries:
    participant_id: str
    start_time: datetime
    rate_hz: float
    samples: np.ndarray  # (n, 3) in g

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).reshape(-1, 3)
        if not self.rate_hz > 0:
            raise ConfigError("rate_hz must be positive")


@dataclass
class SecondSdSeries:
    """Per-second SDs (sd_x, sd_y, sd_z, sd_mean); NaN rows are unobserved seconds.

    ``means`` optionally carries the per-second mean of each axis, which is
    what the stuck-sensor detector looks at.
    """

    participant_id: str
    start_time: datetime
    values: np.ndarray
    means: np.ndarray | None = None
    epoch_seconds: int = field(default=1, init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1, 4)
        if self.means is not None:
            self.means = np.asarray(self.means, dtype=float).reshape(-1, 3)
            if len(self.means) != len(self.values):
                raise AlignmentError("per-second means and SDs differ in length")

    def __len__(self):
        return len(self.values)

    @property
    def sd_mean(self):
        return self.values[:, 3]


@dataclass
class CountEpochSeries:
    """Counts per epoch for x, y, z and vector magnitude.

    ``unit`` is ``"count"`` for counts per epoch as exported and ``"cpm"``
    once rescaled to counts per minute; for 60 s epochs the two coincide.
    """

    participant_id: str
    start_time: datetime
    epoch_seconds: int
    values: np.ndarray  # (n, 4): count_x, count_y, count_z, count_vm
    unit: str = "count"
    vm_mismatches: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1, 4)
        if int(self.epoch_seconds) != self.epoch_seconds or self.epoch_seconds <= 0:
            raise ConfigError(f"epoch_seconds must be a positive integer, got {self.epoch_seconds}")
        self.epoch_seconds = int(self.epoch_seconds)

    def __len__(self):
        return len(self.values)

    @property
    def vm(self):
        return self.values[:, 3]

    def timestamps(self):
        return pd.date_range(self.start_time, periods=len(self), freq=f"{self.epoch_seconds}s")

    def cpm(self):
        """Values rescaled to counts per minute."""
        if self.unit == "cpm":
            return self.values
        return self.values * (60.0 / self.epoch_seconds)


@dataclass(frozen=True)
class CountCsvFormat:
    timestamp: str = "timestamp"
    axis1: str = "axis1"
    axis2: str = "axis2"
    axis3: str = "axis3"
    vm: str | None = "vm"
    epoch_seconds: int | None = 60  # None: infer from the first spacing


@dataclass(frozen=True)
class SecondCsvFormat:
    timestamp: str = "timestamp"
    sd: tuple = ("sd_x", "sd_y", "sd_z")
    means: tuple = ("mean_x", "mean_y", "mean_z")


@dataclass(frozen=True)
class RawCsvFormat:
    timestamp: str = "timestamp"
    axes: tuple = ("accel_x", "accel_y", "accel_z")
    rate_hz: float = 40.0


def vector_magnitude(xyz):
    xyz = np.asarray(xyz, dtype=float)
    return np.sqrt(np.sum(xyz * xyz, axis=-1))


def derive_vm(series):
    """Copy of ``series`` with the vm channel recomputed from the three axes."""
    values = series.values.copy()
    values[:, 3] = vector_magnitude(values[:, :3])
    return replace(series, values=values)


# ---------------------------------------------------------------- CSV parsing

def _data_line_numbers(path):
    """1-based file line numbers of the data rows (header and comments skipped)."""
    numbers = []
    header_seen = False
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.lstrip().startswith("#") or not line.strip():
                continue
            if not header_seen:
                header_seen = True
                continue
            numbers.append(lineno)
    return numbers


def _open_text(path):
    path = Path(path)
    if path.suffix == ".gz":
        import gzip
        return gzip.open(path, "rt")
    return open(path)


def _read_table(path, required, optional=()):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    try:
        frame = pd.read_csv(path, dtype=str, comment="#", skip_blank_lines=True)
    except pd.errors.ParserError as exc:
        raise ParseError(f"{path}: {exc}") from None
    except pd.errors.EmptyDataError:
        raise EmptySeriesError(f"{path}: file is empty") from None
    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ParseError(f"{path}: header lacks column(s) {missing}; found {list(frame.columns)}", line=1)
    if frame.empty:
        raise EmptySeriesError(f"{path}: no data rows")
    present = [c for c in optional if c in frame.columns]
    return frame, present


def _numeric(frame, columns, path):
    block = frame[list(columns)].apply(lambda s: pd.to_numeric(s.str.strip(), errors="coerce"))
    values = block.to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        line = _data_line_numbers(path)[row]
        raise ParseError(f"{path}: column {columns[col]!r} has non-numeric value "
                         f"{frame.iloc[row][columns[col]]!r}", line=line)
    return values


def _parse_timestamps(raw, path):
    stripped = raw.str.strip()
    as_number = pd.to_numeric(stripped, errors="coerce")
    if as_number.notna().all():
        stamps = pd.to_datetime(as_number.to_numpy(dtype=float), unit="s")
    else:
        stamps = pd.to_datetime(stripped, format="ISO8601", errors="coerce")
    stamps = pd.DatetimeIndex(stamps)
    bad = np.flatnonzero(stamps.isna())
    if len(bad):
        line = _data_line_numbers(path)[bad[0]]
        raise ParseError(f"{path}: unparseable timestamp {raw.iloc[bad[0]]!r}", line=line)
    if stamps.tz is not None:
        stamps = stamps.tz_localize(None)
    return stamps


def _epoch_offsets(stamps, epoch_seconds, path, allow_gaps=False):
    """Integer epoch index of every row, validating spacing."""
    seconds = (stamps - stamps[0]).total_seconds().to_numpy()
    steps = seconds / epoch_seconds
    index = np.rint(steps).astype(np.int64)
    off_grid = np.flatnonzero(np.abs(steps - index) > 1e-6)
    lines = None
    if len(off_grid):
        lines = _data_line_numbers(path)
        raise ParseError(f"{path}: timestamp {stamps[off_grid[0]]} is off the "
                         f"{epoch_seconds} s epoch grid", line=lines[off_grid[0]])
    diffs = np.diff(index)
    backwards = np.flatnonzero(diffs <= 0)
    if len(backwards):
        lines = _data_line_numbers(path)
        raise ParseError(f"{path}: timestamps not strictly increasing at {stamps[backwards[0] + 1]}",
                         line=lines[backwards[0] + 1])
    gaps = np.flatnonzero(diffs > 1)
    if len(gaps) and not allow_gaps:
        missing = []
        for g in gaps:
            for j in range(index[g] + 1, index[g + 1]):
                missing.append(stamps[0] + timedelta(seconds=int(j) * epoch_seconds))
        shown = ", ".join(str(m) for m in missing[:10])
        more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
        raise GapError(f"{path}: {len(missing)} missing epoch(s): {shown}{more}", missing)
    return index


def load_count_csv(path, fmt=CountCsvFormat(), participant_id=None, vm_tolerance=VM_TOLERANCE):
    """Load an ActiLife-style count export.

    The vm column is trusted when present but checked against the axes;
    disagreements beyond ``vm_tolerance`` are logged and counted in
    ``vm_mismatches``. When absent, vm is derived.
    """
    path = Path(path)
    axes = [fmt.axis1, fmt.axis2, fmt.axis3]
    optional = [fmt.vm] if fmt.vm else []
    frame, present = _read_table(path, [fmt.timestamp, *axes], optional)
    stamps = _parse_timestamps(frame[fmt.timestamp], path)
    counts = _numeric(frame, axes, path)

    epoch = fmt.epoch_seconds
    if epoch is None:
        if len(stamps) < 2:
            raise ConfigError(f"{path}: cannot infer epoch from a single row; set epoch_seconds")
        epoch = int(round((stamps[1] - stamps[0]).total_seconds()))
    _epoch_offsets(stamps, epoch, path)

    derived = vector_magnitude(counts)
    mismatches = 0
    if present:
        vm = _numeric(frame, present, path)[:, 0]
        off = np.abs(vm - derived) > vm_tolerance
        mismatches = int(off.sum())
        if mismatches:
            log.warning("%s: %d row(s) where vm disagrees with sqrt(x^2+y^2+z^2) by more than %g",
                        path, mismatches, vm_tolerance)
    else:
        vm = derived
    values = np.column_stack([counts, vm])
    negative = np.argwhere(values < 0)
    if len(negative):
        row = negative[0][0]
        raise DataError(f"{path}: line {_data_line_numbers(path)[row]}: negative count")
    return CountEpochSeries(participant_id or _stem(path), stamps[0].to_pydatetime(), epoch,
                            values, vm_mismatches=mismatches)


def load_second_csv(path, fmt=SecondCsvFormat(), participant_id=None):
    """Load a per-second SD export. Missing seconds become NaN rows."""
    path = Path(path)
    frame, present = _read_table(path, [fmt.timestamp, *fmt.sd], fmt.means)
    stamps = _parse_timestamps(frame[fmt.timestamp], path)
    sd = _numeric(frame, list(fmt.sd), path)
    if (sd < 0).any():
        row = np.argwhere(sd < 0)[0][0]
        raise DataError(f"{path}: line {_data_line_numbers(path)[row]}: negative standard deviation")
    index = _epoch_offsets(stamps, 1, path, allow_gaps=True)
    n = int(index[-1]) + 1
    values = np.full((n, 4), np.nan)
    values[index, :3] = sd
    values[index, 3] = sd.mean(axis=1)
    means = None
    if len(present) == 3:
        means = np.full((n, 3), np.nan)
        means[index] = _numeric(frame, list(fmt.means), path)
    return SecondSdSeries(participant_id or _stem(path), stamps[0].to_pydatetime(), values, means)


def load_raw_csv(path, fmt=RawCsvFormat(), participant_id=None):
    """Load raw tri-axial gravity samples at a fixed nominal rate."""
    path = Path(path)
    frame, _ = _read_table(path, [fmt.timestamp, *fmt.axes])
    samples = _numeric(frame, list(fmt.axes), path)
    first = _parse_timestamps(frame[fmt.timestamp].iloc[[0, -1]], path)
    span = (first[1] - first[0]).total_seconds()
    expected = (len(samples) - 1) / fmt.rate_hz
    if abs(span - expected) > 1.0 / fmt.rate_hz + 1e-9:
        raise DataError(f"{path}: {len(samples)} samples at {fmt.rate_hz} Hz should span "
                        f"{expected:.3f} s but timestamps span {span:.3f} s")
    return RawSampleSeries(participant_id or _stem(path), first[0].to_pydatetime(), fmt.rate_hz, samples)


def _stem(path):
    name = Path(path).name
    for suffix in (".gz", ".csv"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    return name


# ------------------------------------------------------------ transformations

def compute_second_sd(raw):
    """Sample SD (ddof=1) of each complete 1 s window, per axis, plus their mean.

    A trailing partial second is dropped. Per-second axis means ride along
    for the stuck-sensor check.
    """
    rate = raw.rate_hz
    if int(rate) != rate or rate < 2:
        raise ConfigError(f"per-second SD needs an integer rate of at least 2 Hz, got {rate}")
    rate = int(rate)
    n_seconds = len(raw.samples) // rate
    if n_seconds == 0:
        raise EmptySeriesError(f"{raw.participant_id}: fewer than {rate} samples, no complete second")
    windows = raw.samples[: n_seconds * rate].reshape(n_seconds, rate, 3)
    sd = windows.std(axis=1, ddof=1)
    values = np.column_stack([sd, sd.mean(axis=1)])
    return SecondSdSeries(raw.participant_id, raw.start_time, values, windows.mean(axis=1))


def aggregate_counts_to_cpm(series, target_epoch_seconds):
    """Average consecutive epochs into ``target_epoch_seconds`` frames, in CPM.

    Each output value is the mean of its constituent epochs expressed per
    minute. A trailing partial frame is dropped.
    """
    if target_epoch_seconds <= 0 or target_epoch_seconds % series.epoch_seconds:
        raise ConfigError(f"target epoch {target_epoch_seconds} s is not a multiple of "
                          f"{series.epoch_seconds} s")
    factor = target_epoch_seconds // series.epoch_seconds
    cpm = series.cpm()
    n_out = len(cpm) // factor
    values = cpm[: n_out * factor].reshape(n_out, factor, 4).mean(axis=1)
    return CountEpochSeries(series.participant_id, series.start_time, target_epoch_seconds,
                            values, unit="cpm", vm_mismatches=series.vm_mismatches)


@dataclass
class DaySlice:
    """The part of a series that falls inside one day's grid window.

    ``complete`` is False when the window is not fully covered (recording
    starts or stops inside it, epochs are off the grid, or rows are NaN).
    Incomplete slices carry only what was observed; nothing is padded.
    """

    date: date
    values: np.ndarray
    complete: bool
    first_index: int  # position of values[0] in the source series


def align_to_day_grid(series, grid=DayGrid()):
    """Cut an epoch series (counts or per-second SDs) into per-date window slices.

    Every calendar date the recording touches gets a slice, so incomplete
    days are visible downstream rather than disappearing.
    """
    epoch = series.epoch_seconds
    window_seconds = grid.n_minutes * 60
    if window_seconds % epoch or (grid.start_minute * 60) % epoch:
        raise ConfigError(f"{epoch} s epochs do not tile the {grid.label} window")
    expected = window_seconds // epoch
    n = len(series.values)
    start = pd.Timestamp(series.start_time)
    if n == 0:
        return []
    end = start + pd.Timedelta(seconds=epoch * n)
    slices = []
    day = start.normalize()
    while day < end:
        ws = day + pd.Timedelta(minutes=grid.start_minute)
        offset = (ws - start).total_seconds() / epoch
        i0 = min(max(math.ceil(offset - 1e-9), 0), n)
        i1 = min(max(math.ceil(offset + expected - 1e-9), 0), n)
        values = series.values[i0:i1]
        aligned = abs(offset - round(offset)) < 1e-9
        complete = (i1 - i0 == expected) and aligned and not np.isnan(values).any()
        slices.append(DaySlice(day.date(), values, bool(complete), i0))
        day += pd.Timedelta(days=1)
    return slices


def slice_extra(slice_, extra):
    """Take the rows of a companion array (e.g. per-second means) matching ``slice_``."""
    if extra is None:
        return None
    return extra[slice_.first_index: slice_.first_index + len(slice_.values)]
