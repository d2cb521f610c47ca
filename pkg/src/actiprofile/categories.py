"""Cut-point classification of CPM into activity-intensity categories."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
import pandas as pd

from .errors import AlignmentError, ConfigError, DataError

log = logging.getLogger(__name__)


class Category(IntEnum):
    SB = 0
    LPA = 1
    MPA = 2
    VPA = 3


@dataclass(frozen=True)
class CutpointScheme:
    """Upper CPM bounds of SB, LPA and MPA; anything above ``mpa_max`` is VPA.

    A value equal to a bound belongs to the lower category.
    """

    name: str
    sb_max: float
    lpa_max: float
    mpa_max: float

    def __post_init__(self):
        if not 0 <= self.sb_max < self.lpa_max < self.mpa_max:
            raise ConfigError(f"cut-points of {self.name!r} must satisfy 0 <= sb < lpa < mpa")

    @property
    def thresholds(self):
        return np.array([self.sb_max, self.lpa_max, self.mpa_max], dtype=float)


# Romanzini et al. (2014), GT3X vector magnitude, adolescents. Published per
# 15 s epoch as SB <= 180, LPA 181-756, MPA 757-1111, VPA >= 1112; scaled x4.
# TODO: check these against the original Romanzini 2014 tables; they were
# transcribed without the source at hand.
ROMANZINI_2014_VM = CutpointScheme("romanzini_2014_vm", 720.0, 3024.0, 4444.0)

SCHEMES = {ROMANZINI_2014_VM.name: ROMANZINI_2014_VM}


def classify(cpm, scheme):
    """Vectorised classification; returns integer Category codes."""
    cpm = np.asarray(cpm, dtype=float)
    if np.any(cpm < 0):
        raise DataError("CPM must be non-negative")
    return np.searchsorted(scheme.thresholds, cpm, side="left")


def classify_epoch(cpm_vm, scheme):
    return Category(int(classify(cpm_vm, scheme)))


@dataclass
class CategoryDurations:
    sb: float
    lpa: float
    mpa: float
    vpa: float

    @property
    def mvpa(self):
        return self.mpa + self.vpa

    @property
    def total(self):
        return self.sb + self.lpa + self.mpa + self.vpa

    def as_dict(self):
        return {"SB": self.sb, "LPA": self.lpa, "MPA": self.mpa, "VPA": self.vpa, "MVPA": self.mvpa}


def tabulate_day(cpm, scheme, expected_minutes=960):
    """Minutes per category for one window of 1-minute CPM."""
    cpm = np.asarray(cpm, dtype=float)
    if cpm.shape != (expected_minutes,):
        raise AlignmentError(f"expected {expected_minutes} one-minute epochs, got {cpm.shape}")
    counts = np.bincount(classify(cpm, scheme), minlength=4)
    return CategoryDurations(*(int(c) for c in counts))


def participant_mean_durations(days):
    days = list(days)
    if not days:
        raise DataError("no valid days to average")
    arr = np.array([[d.sb, d.lpa, d.mpa, d.vpa] for d in days], dtype=float)
    return CategoryDurations(*arr.mean(axis=0))


def category_table(days_by_participant):
    """Per-participant mean minutes: participant_id, SB, LPA, MPA, VPA, MVPA.

    Participants without valid days are dropped with a log notice.
    """
    rows = []
    for pid in sorted(days_by_participant):
        days = days_by_participant[pid]
        if not days:
            log.warning("participant %s has no valid days; excluded from category means", pid)
            continue
        rows.append({"participant_id": pid, **participant_mean_durations(days).as_dict()})
    return pd.DataFrame(rows, columns=["participant_id", "SB", "LPA", "MPA", "VPA", "MVPA"])


def modal_categories(categories, block):
    """Most frequent category per block; ties go to the higher intensity."""
    categories = np.asarray(categories, dtype=int)
    blocks = categories[: len(categories) // block * block].reshape(-1, block)
    counts = np.stack([(blocks == c).sum(axis=1) for c in Category], axis=1)
    # argmax on reversed columns returns the highest category among the maxima
    return len(Category) - 1 - np.argmax(counts[:, ::-1], axis=1)


def reclassify_at_epoch(cpm, scheme, target_minutes=10, mode="mean_cpm"):
    """Categories on coarser epochs from 1-minute CPM.

    ``mean_cpm`` classifies the block mean; ``modal_class`` takes the most
    common 1-minute category.
    """
    cpm = np.asarray(cpm, dtype=float)
    if len(cpm) % target_minutes:
        raise AlignmentError(f"{len(cpm)} minutes do not split into {target_minutes}-minute blocks")
    if mode == "mean_cpm":
        return classify(cpm.reshape(-1, target_minutes).mean(axis=1), scheme)
    if mode == "modal_class":
        return modal_categories(classify(cpm, scheme), target_minutes)
    raise ConfigError(f"unknown reclassification mode {mode!r}")
