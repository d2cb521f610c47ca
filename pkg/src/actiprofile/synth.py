"""
Synthetic cohorts with known structure, for end-to-end checks.

Each participant has a personal mixture over archetype day shapes; every
day draws an archetype, adds Gaussian noise per 10-minute bin truncated at
zero, and may receive injected non-wear bouts or malfunctions. Outcomes are
linear in age, sex and the participant's true membership shares.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime, timedelta

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError
from .ingest import CountEpochSeries, DayGrid, SecondSdSeries

N_BINS = 96
AXIS_SPLIT = np.array([0.8, 0.48, 0.36])  # unit vector spreading vm over the axes
SD_AXIS_SPLIT = np.array([1.1, 1.0, 0.9])  # per-axis SD factors, mean 1


def _clock_bins(start, end):
    """Bin indices covering clock times [start, end) within 07:00-23:00."""
    to_bin = lambda hhmm: (int(hhmm[:2]) * 60 + int(hhmm[3:]) - 7 * 60) // 10
    return slice(to_bin(start), to_bin(end))


def preset_archetypes():
    flat_low = np.full(N_BINS, 400.0)
    day_active = np.full(N_BINS, 600.0)
    day_active[_clock_bins("07:00", "17:40")] = 2200.0
    evening = np.full(N_BINS, 500.0)
    evening[_clock_bins("17:00", "23:00")] = 2500.0
    return {"flat_low": flat_low, "day_active": day_active, "evening_active": evening}


def max_separation(archetypes):
    """Largest Euclidean distance between any two archetypes."""
    A = np.asarray(archetypes, dtype=float)
    return max((np.linalg.norm(a - b) for i, a in enumerate(A) for b in A[i + 1:]), default=0.0)


@dataclass
class OutcomeModel:
    intercept: float = 0.0
    age: float = 0.0
    sex: float = 0.0
    membership: tuple = ()
    noise_sd: float = 1.0


def default_outcomes():
    return {
        "waist": OutcomeModel(55.0, 3.0, 0.0, (8.0, -4.0, 0.0), 8.5),
        "insulin": OutcomeModel(2.0, 1.3, 3.5, (6.0, -2.0, 0.0), 10.0),
        "triglycerides": OutcomeModel(70.0, 2.5, 14.0, (15.0, -8.0, 0.0), 52.0),
    }


@dataclass
class CohortSpec:
    n_participants: int = 40
    days_per_participant: int = 7
    archetypes: list = field(default_factory=lambda: list(preset_archetypes().values()))
    archetype_names: list = field(default_factory=lambda: list(preset_archetypes()))
    weights: list = field(default_factory=lambda: [1 / 3, 1 / 3, 1 / 3])
    concentration: float = 1.0   # Dirichlet concentration of personal mixtures
    noise_sd: float = 300.0
    nonwear_rate: float = 0.0    # events per day
    malfunction_rate: float = 0.0
    outcomes: dict = field(default_factory=default_outcomes)
    seed: int = 0
    start_date: date = date(2024, 1, 1)
    grid: DayGrid = DayGrid()
    night_cpm: float = 20.0

    def __post_init__(self):
        self.archetypes = [np.asarray(a, dtype=float) for a in self.archetypes]
        if not self.archetypes:
            raise ConfigError("cohort needs at least one archetype")
        if any(a.shape != (self.grid.n_bins(),) for a in self.archetypes):
            raise ConfigError(f"archetypes must have {self.grid.n_bins()} bins")
        if any((a < 0).any() for a in self.archetypes):
            raise ConfigError("archetype CPM must be non-negative")
        if len(self.weights) != len(self.archetypes):
            raise ConfigError("one mixing weight per archetype")
        if abs(sum(self.weights) - 1) > 1e-9 or min(self.weights) < 0:
            raise ConfigError("mixing weights must be non-negative and sum to 1")
        if self.noise_sd < 0 or self.nonwear_rate < 0 or self.malfunction_rate < 0:
            raise ConfigError("noise and event rates must be non-negative")
        if not 1 <= self.days_per_participant <= 7:
            raise ConfigError("days_per_participant must be between 1 and 7")
        if len(self.archetype_names) != len(self.archetypes):
            self.archetype_names = [f"archetype_{i + 1}" for i in range(len(self.archetypes))]
        for name, model in self.outcomes.items():
            if len(model.membership) != len(self.archetypes):
                raise ConfigError(f"outcome {name}: one membership effect per archetype")


@dataclass
class GroundTruth:
    day_labels: dict            # (pid, date) -> archetype index
    nonwear: list               # (pid, date, start_minute_in_window, minutes)
    malfunctions: list          # (pid, date, kind, start_second_in_window, seconds)
    memberships: pd.DataFrame   # participant_id x archetype shares
    outcomes: dict              # outcome -> OutcomeModel

    def labels_for(self, index):
        return np.array([self.day_labels[(str(p), d)] for p, d in index])

    def to_dict(self):
        return {
            "day_labels": [{"participant_id": p, "date": str(d), "archetype": int(a)}
                           for (p, d), a in sorted(self.day_labels.items())],
            "nonwear": [{"participant_id": p, "date": str(d), "start_minute": s, "minutes": n}
                        for p, d, s, n in self.nonwear],
            "malfunctions": [{"participant_id": p, "date": str(d), "kind": k,
                              "start_second": s, "seconds": n}
                             for p, d, k, s, n in self.malfunctions],
            "memberships": self.memberships.reset_index().to_dict(orient="records"),
            "outcomes": {k: vars(v) | {"membership": list(v.membership)}
                         for k, v in self.outcomes.items()},
        }


@dataclass
class SyntheticCohort:
    counts: dict                # pid -> CountEpochSeries (1-min, whole recording)
    seconds: dict               # pid -> SecondSdSeries, empty when not generated
    participants: pd.DataFrame  # participant_id, age, sex, outcomes
    truth: GroundTruth
    profiles: dict              # (pid, date) -> drawn 96-bin profile before events


def _place(rng, n_events, length_range, span, taken):
    """Non-overlapping random intervals inside [0, span)."""
    out = []
    for _ in range(n_events):
        for _attempt in range(100):
            length = int(rng.integers(length_range[0], length_range[1] + 1))
            if length > span:
                break
            start = int(rng.integers(0, span - length + 1))
            if not taken[start:start + length].any():
                taken[start:start + length] = True
                out.append((start, length))
                break
        else:
            raise ConfigError("cannot fit the requested injected events into the day window")
        if length > span:
            raise ConfigError("injected event longer than the day window")
    return out


def generate_cohort(spec, with_seconds=False):
    """Draw a cohort. Deterministic in ``spec.seed``.

    Count series cover whole calendar days from midnight. Outside the
    analysis window minutes carry a low non-zero night level so that wear
    detection never spills into the window.
    """
    grid = spec.grid
    k = len(spec.archetypes)
    root = np.random.SeedSequence(spec.seed)
    weights = np.asarray(spec.weights, dtype=float)
    day_labels, nonwear, malfunctions, profiles = {}, [], [], {}
    counts, seconds, members, rows = {}, {}, [], []
    width = len(str(spec.n_participants))
    for i, child in enumerate(root.spawn(spec.n_participants)):
        rng = np.random.default_rng(child)
        pid = f"P{i + 1:0{max(width, 3)}d}"
        mix = rng.dirichlet(np.maximum(spec.concentration * weights * k, 1e-9)) \
            if spec.concentration > 0 else weights
        minutes = np.full(spec.days_per_participant * 1440, spec.night_cpm)
        sd_days = []
        tally = np.zeros(k)
        for d in range(spec.days_per_participant):
            day = spec.start_date + timedelta(days=d)
            label = int(rng.choice(k, p=mix))
            tally[label] += 1
            profile = spec.archetypes[label].copy()
            if spec.noise_sd > 0:
                # rounded so the written CSVs reload bit-for-bit
                profile = np.round(np.maximum(profile + rng.normal(0.0, spec.noise_sd, profile.shape), 0.0), 4)
            day_labels[(pid, day)] = label
            profiles[(pid, day)] = profile
            window = np.repeat(profile, 10)
            taken = np.zeros(grid.n_minutes, dtype=bool)
            for start, length in _place(rng, rng.poisson(spec.nonwear_rate), (95, 180),
                                        grid.n_minutes, taken):
                window[start:start + length] = 0.0
                nonwear.append((pid, day, start, length))
            offset = d * 1440 + grid.start_minute
            minutes[offset:offset + grid.n_minutes] = window
            if with_seconds:
                sd_days.append(_day_seconds(rng, minutes[d * 1440:(d + 1) * 1440], grid, pid, day,
                                            spec.malfunction_rate, malfunctions))
        xyz = np.round(minutes[:, None] * AXIS_SPLIT, 4)
        start = datetime.combine(spec.start_date, datetime.min.time())
        counts[pid] = CountEpochSeries(pid, start, 60, np.column_stack([xyz, minutes]))
        if with_seconds:
            sd = np.vstack([s[0] for s in sd_days])
            means = np.vstack([s[1] for s in sd_days])
            seconds[pid] = SecondSdSeries(pid, start, sd, means)
        share = tally / tally.sum()
        members.append(share)
        age = round(float(rng.uniform(7.0, 11.99)), 2)
        sex = int(rng.random() < 0.55)
        row = {"participant_id": pid, "age": age, "sex": sex}
        for name, model in spec.outcomes.items():
            mean = model.intercept + model.age * age + model.sex * sex + float(np.dot(model.membership, share))
            row[name] = mean + rng.normal(0.0, model.noise_sd)
        rows.append(row)
    memberships = pd.DataFrame(members, columns=spec.archetype_names,
                               index=pd.Index([r["participant_id"] for r in rows], name="participant_id"))
    truth = GroundTruth(day_labels, nonwear, malfunctions, memberships, dict(spec.outcomes))
    return SyntheticCohort(counts, seconds, pd.DataFrame(rows), truth, profiles)


def _day_seconds(rng, day_minutes, grid, pid, day, malfunction_rate, malfunctions):
    """Per-second SDs and axis means for one calendar day."""
    cpm = np.repeat(day_minutes, 60)
    p_active = np.clip(cpm / 3000.0, 0.0, 0.95)
    active = rng.random(cpm.size) < p_active
    # active SDs stay well under any plausible spike threshold
    burst = np.minimum(rng.exponential(0.1 + cpm / 10000.0), 4.0)
    sd_axes = np.where(active, 0.61 + burst, rng.uniform(0.01, 0.4, cpm.size))[:, None] * SD_AXIS_SPLIT
    still = cpm == 0
    sd_axes[still] = rng.uniform(0.0005, 0.005, (int(still.sum()), 3))
    # four decimals keeps the CSV round trip exact
    sd_axes = np.round(sd_axes, 4)
    sd = np.column_stack([sd_axes, sd_axes.mean(axis=1)])
    means = np.round(np.column_stack([rng.normal(0.0, 0.05, cpm.size), rng.normal(0.0, 0.05, cpm.size),
                                      rng.normal(1.0, 0.05, cpm.size)]), 4)
    taken = np.zeros(grid.n_seconds, dtype=bool)
    base = grid.start_minute * 60
    for start, length in _place(rng, rng.poisson(malfunction_rate), (300, 1200), grid.n_seconds, taken):
        if rng.random() < 0.5:
            sd[base + start: base + start + min(length, 5), 0] = 20.0
            sd[:, 3] = sd[:, :3].mean(axis=1)
            malfunctions.append((pid, day, "spike", start, min(length, 5)))
        else:
            means[base + start: base + start + length, 0] = 0.731
            malfunctions.append((pid, day, "stuck", start, length))
    return sd, means


@dataclass
class RecoveryScore:
    agreement: float
    n_archetypes: int
    n_clusters: int
    mapping: dict   # cluster -> archetype

    @property
    def k_mismatch(self):
        return self.n_archetypes != self.n_clusters


def score_recovery(truth, model, index=None):
    """Fraction of days whose cluster matches their archetype under the best matching.

    ``truth`` is a GroundTruth (with the matrix ``index`` naming the rows the
    model was fitted on) or a plain label array; ``model`` is a ClusterModel
    or a label array. The matching is injective; when the counts differ,
    days in unmatched clusters count as errors.
    """
    true_labels = truth.labels_for(index) if isinstance(truth, GroundTruth) else truth
    cluster_labels = getattr(model, "labels", model)
    t = np.asarray(true_labels, dtype=int)
    c = np.asarray(cluster_labels, dtype=int)
    if t.shape != c.shape or t.size == 0:
        raise ConfigError("true and cluster labels must be non-empty and aligned")
    nt, nc = t.max() + 1, c.max() + 1
    table = np.zeros((nc, nt))
    np.add.at(table, (c, t), 1)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return RecoveryScore(float(table[rows, cols].sum() / t.size), int(nt), int(nc),
                         {int(r): int(col) for r, col in zip(rows, cols)})


def write_cohort(cohort, out_dir, provenance=None):
    """Write count CSVs, per-second SD CSVs, participant CSV and truth in ingestible formats.

    ``provenance`` (anything with ``header()`` and ``as_dict()``) stamps every file.
    """
    import json
    from pathlib import Path

    out = Path(out_dir)
    (out / "counts").mkdir(parents=True, exist_ok=True)
    header = f"# {provenance.header()}\n" if provenance is not None else ""
    for pid, series in cohort.counts.items():
        frame = pd.DataFrame(series.values, columns=["axis1", "axis2", "axis3", "vm"])
        frame.insert(0, "timestamp", series.timestamps().strftime("%Y-%m-%dT%H:%M:%S"))
        _write_csv(out / "counts" / f"{pid}.csv", frame, header)
    if cohort.seconds:
        (out / "seconds").mkdir(exist_ok=True)
        for pid, series in cohort.seconds.items():
            frame = pd.DataFrame(np.column_stack([series.values[:, :3], series.means]),
                                 columns=["sd_x", "sd_y", "sd_z", "mean_x", "mean_y", "mean_z"])
            frame.insert(0, "timestamp", np.arange(len(frame)) +
                         int(pd.Timestamp(series.start_time).timestamp()))
            _write_csv(out / "seconds" / f"{pid}.csv.gz", frame, header)
    _write_csv(out / "participants.csv", cohort.participants, header)
    with open(out / "truth.json", "w") as fh:
        doc = cohort.truth.to_dict()
        if provenance is not None:
            doc["provenance"] = provenance.as_dict()
        json.dump(doc, fh, indent=1, sort_keys=True, default=str)
        fh.write("\n")


def _write_csv(path, frame, header):
    import gzip

    text = header + frame.to_csv(index=False, lineterminator="\n")
    if str(path).endswith(".gz"):
        # mtime=0 keeps the archive bytes reproducible
        with open(path, "wb") as raw, gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0,
                                                    compresslevel=6) as fh:
            fh.write(text.encode())
    else:
        with open(path, "w") as fh:
            fh.write(text)


def spec_from_config(cfg, seed):
    """CohortSpec from the ``synth`` config section."""
    presets = preset_archetypes()
    archetypes, names = [], []
    for i, a in enumerate(cfg.archetypes):
        if isinstance(a, str):
            if a not in presets:
                raise ConfigError(f"synth.archetypes: unknown preset {a!r}; choose from {sorted(presets)}")
            archetypes.append(presets[a])
            names.append(a)
        else:
            archetypes.append(np.asarray(a, dtype=float))
            names.append(f"archetype_{i + 1}")
    k = len(archetypes)
    weights = cfg.weights if cfg.weights is not None else [1.0 / k] * k
    outcomes = default_outcomes() if not cfg.outcomes else {}
    if not cfg.outcomes and k != 3:
        outcomes = {name: OutcomeModel(m.intercept, m.age, m.sex, (0.0,) * k, m.noise_sd)
                    for name, m in outcomes.items()}
    for name, model in cfg.outcomes.items():
        try:
            outcomes[name] = OutcomeModel(**{**model, "membership": tuple(model.get("membership", ()))})
        except TypeError as exc:
            raise ConfigError(f"synth.outcomes.{name}: {exc}") from None
    return CohortSpec(
        n_participants=cfg.n_participants, days_per_participant=cfg.days_per_participant,
        archetypes=archetypes, archetype_names=names, weights=list(weights),
        concentration=cfg.concentration, noise_sd=cfg.noise_sd, nonwear_rate=cfg.nonwear_rate,
        malfunction_rate=cfg.malfunction_rate, outcomes=outcomes, seed=seed,
        start_date=date.fromisoformat(cfg.start_date))
