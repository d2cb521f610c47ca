"""Daily activity profiles (mean CPM per 10-minute bin) and segment sorting."""
from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import date

import numpy as np
import pandas as pd

from .errors import AlignmentError, ConfigError, DataError, DuplicateError

SORT_SEGMENTS = (1, 2, 4, 8, 16)


def sort_label(segments):
    """None -> 'Unsorted', 2 -> 'Sort_02'."""
    return "Unsorted" if segments is None else f"Sort_{segments:02d}"


def parse_sort_label(text):
    text = str(text).strip()
    if text.lower() in ("unsorted", "none"):
        return None
    if text.lower().startswith("sort_"):
        text = text[5:]
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"bad sort spec {text!r}; use none or a segment count") from None


@dataclass
class DailyProfile:
    participant_id: str
    date: date
    values: np.ndarray
    sort_segments: int | None = None


def build_daily_profile(cpm, participant_id="", day=None, bin_minutes=10, n_minutes=960):
    """Mean CPM over consecutive non-overlapping ``bin_minutes`` bins."""
    cpm = np.asarray(cpm, dtype=float)
    if cpm.shape != (n_minutes,):
        raise AlignmentError(f"profile needs {n_minutes} one-minute values, got {cpm.shape}")
    if n_minutes % bin_minutes:
        raise ConfigError(f"{bin_minutes}-minute bins do not tile {n_minutes} minutes")
    return DailyProfile(participant_id, day, cpm.reshape(-1, bin_minutes).mean(axis=1))


def sort_segments(values, segments):
    """Sort each of ``segments`` equal consecutive blocks in descending order."""
    values = np.asarray(values, dtype=float)
    if segments is None:
        return values.copy()
    if segments <= 0 or values.shape[-1] % segments:
        raise ConfigError(f"{segments} segments do not divide a {values.shape[-1]}-bin profile")
    blocks = values.reshape(*values.shape[:-1], segments, -1)
    return np.sort(blocks, axis=-1)[..., ::-1].reshape(values.shape)


def sort_profile(profile, segments):
    return replace(profile, values=sort_segments(profile.values, segments), sort_segments=segments)


@dataclass
class ProfileMatrix:
    """One row per participant-day, ordered by (participant_id, date)."""

    index: list          # [(participant_id, date), ...]
    values: np.ndarray   # (n_rows, n_bins)
    sort_segments: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or len(self.index) != len(self.values):
            raise AlignmentError("profile matrix index and values disagree")

    def __len__(self):
        return len(self.index)

    @property
    def participants(self):
        return [pid for pid, _ in self.index]

    @property
    def label(self):
        return sort_label(self.sort_segments)

    def to_frame(self):
        cols = [f"v{i:02d}" for i in range(self.values.shape[1])]
        frame = pd.DataFrame(self.values, columns=cols)
        frame.insert(0, "sort_spec", self.label)
        frame.insert(0, "date", [str(d) for _, d in self.index])
        frame.insert(0, "participant_id", [p for p, _ in self.index])
        return frame

    @classmethod
    def from_frame(cls, frame):
        value_cols = [c for c in frame.columns if c.startswith("v") and c[1:].isdigit()]
        specs = frame["sort_spec"].unique() if len(frame) else ["Unsorted"]
        if len(specs) > 1:
            raise DataError(f"matrix mixes sort specs {list(specs)}")
        index = [(str(p), date.fromisoformat(str(d)))
                 for p, d in zip(frame["participant_id"], frame["date"])]
        return cls(index, frame[value_cols].to_numpy(dtype=float), parse_sort_label(specs[0]))


def assemble_matrix(profiles, segments=None):
    """Stack profiles into a matrix, sorted by (participant, date), optionally segment-sorted."""
    profiles = list(profiles)
    if not profiles:
        raise DataError("no profiles to assemble")
    key = lambda p: (str(p.participant_id), p.date)
    profiles.sort(key=key)
    seen = set()
    for p in profiles:
        k = key(p)
        if k in seen:
            raise DuplicateError(f"duplicate profile for participant {k[0]} on {k[1]}")
        seen.add(k)
    widths = {len(p.values) for p in profiles}
    if len(widths) != 1:
        raise AlignmentError(f"profiles have differing lengths {sorted(widths)}")
    values = np.vstack([p.values for p in profiles])
    return ProfileMatrix([key(p) for p in profiles], sort_segments(values, segments), segments)

