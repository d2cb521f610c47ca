"""
Command-line pipeline. Each stage reads its inputs from, and writes its
outputs into, one work directory (``--out``):

    store/       ingested 1-minute counts and per-second SDs (.npy + index.json)
    quality/     day records and the wear-window grid
    summaries/   category minutes, TAM/TAV/AIM/AIV, SD density series
    profiles/    one daily-profile matrix per sort variant
    cluster/     per variant: prediction-strength curve, model, memberships
    regress/     comparison table, correlation matrix, per-fit details
    report/      run summary and PNG figures

Exit codes: 0 success, 1 usage or configuration, 2 data, 3 numerical.
"""
from __future__ import annotations

import argparse
import logging
import platform
import sys
from datetime import date
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from . import bai, categories, clustering, ingest, profiles, quality, regression, synth
from .artifacts import Provenance, read_json, read_table, require, write_json, write_table
from .config import load_config
from .errors import ActiprofileError, ConfigError, DataError

log = logging.getLogger("actiprofile")

STORE, QUALITY, SUMMARIES, PROFILES, CLUSTER, REGRESS, REPORT = (
    "store", "quality", "summaries", "profiles", "cluster", "regress", "report")


class Context:
    """Resolved config, work directory and provenance for one invocation."""

    def __init__(self, cfg, out, jobs=1):
        self.cfg = cfg
        self.out = Path(out)
        self.jobs = jobs
        self.provenance = Provenance(cfg.hash(), cfg.seed)

    @property
    def grid(self):
        return ingest.DayGrid.from_clock(self.cfg.ingest.day_start, self.cfg.ingest.day_end)

    def path(self, *parts):
        return self.out.joinpath(*parts)

    def table(self, frame, *parts, sep=","):
        return write_table(self.path(*parts), frame, self.provenance, sep=sep)

    def json(self, payload, *parts):
        return write_json(self.path(*parts), payload, self.provenance)


def make_context(config=None, seed=None, out="actiprofile_out", jobs=1, overrides=None):
    overrides = dict(overrides or {})
    if seed is not None:
        overrides["seed"] = seed
    if jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    return Context(load_config(config, overrides), out, jobs)


# ------------------------------------------------------------------ inputs

def _expand(paths, patterns=("*.csv", "*.csv.gz")):
    files = []
    for p in paths or ():
        p = Path(p)
        if p.is_dir():
            found = sorted({f for pat in patterns for f in p.glob(pat)})
            if not found:
                raise DataError(f"no CSV files in {p}")
            files += found
        elif p.exists():
            files.append(p)
        else:
            raise DataError(f"input {p} does not exist")
    return files


def _by_participant(files):
    out = {}
    for f in files:
        pid = ingest._stem(f)
        if pid in out:
            raise DataError(f"two inputs for participant {pid}: {out[pid]} and {f}")
        out[pid] = f
    return out


# ------------------------------------------------------------------ store

def _save_array(path, array):
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, np.ascontiguousarray(array), allow_pickle=False)


def load_store(ctx):
    index = read_json(require(ctx.path(STORE, "index.json"), "run ingest"))
    out = {}
    for entry in index["participants"]:
        pid = entry["participant_id"]
        start = pd.Timestamp(entry["start_time"]).to_pydatetime()
        counts = ingest.CountEpochSeries(
            pid, start, 60, np.load(require(ctx.path(STORE, entry["counts"]))), unit="cpm",
            vm_mismatches=entry["vm_mismatches"])
        seconds = None
        if entry.get("seconds"):
            means = np.load(require(ctx.path(STORE, entry["means"]))) if entry.get("means") else None
            seconds = ingest.SecondSdSeries(
                pid, pd.Timestamp(entry["seconds_start"]).to_pydatetime(),
                np.load(require(ctx.path(STORE, entry["seconds"]))), means)
        out[pid] = (counts, seconds)
    return out


def cmd_ingest(ctx, counts, seconds=(), raw=()):
    """Read count exports plus optional per-second SD or raw exports into the store."""
    c = ctx.cfg.ingest
    cols = c.columns
    count_fmt = ingest.CountCsvFormat(cols.timestamp, cols.axis1, cols.axis2, cols.axis3, cols.vm,
                                      c.epoch_seconds)
    sec_fmt = ingest.SecondCsvFormat(c.second_columns.timestamp, tuple(c.second_columns.sd),
                                     tuple(c.second_columns.means))
    raw_fmt = ingest.RawCsvFormat(c.raw_columns.timestamp, tuple(c.raw_columns.axes), c.raw_columns.rate_hz)
    count_files = _by_participant(_expand(counts))
    if not count_files:
        raise DataError("no count inputs given")
    second_files = _by_participant(_expand(seconds))
    raw_files = _by_participant(_expand(raw))
    both = sorted(set(second_files) & set(raw_files))
    if both:
        raise DataError(f"participant {both[0]} has both per-second and raw inputs")
    orphans = sorted((set(second_files) | set(raw_files)) - set(count_files))
    if orphans:
        raise DataError(f"per-second or raw input for {orphans[0]} has no count file")

    entries = []
    for pid, path in sorted(count_files.items()):
        series = ingest.load_count_csv(path, count_fmt, pid, c.vm_tolerance)
        if series.epoch_seconds != 60:
            if 60 % series.epoch_seconds:
                raise ConfigError(f"{path}: {series.epoch_seconds} s epochs do not aggregate to 1 minute")
            series = ingest.aggregate_counts_to_cpm(series, 60)
        entry = {"participant_id": pid, "source": str(path), "start_time": series.start_time.isoformat(),
                 "counts": f"{pid}.counts.npy", "n_minutes": len(series),
                 "vm_mismatches": series.vm_mismatches, "seconds": None, "means": None}
        _save_array(ctx.path(STORE, entry["counts"]), series.cpm())
        sec = None
        if pid in second_files:
            sec = ingest.load_second_csv(second_files[pid], sec_fmt, pid)
        elif pid in raw_files:
            sec = ingest.compute_second_sd(ingest.load_raw_csv(raw_files[pid], raw_fmt, pid))
        if sec is not None:
            entry.update(seconds=f"{pid}.seconds.npy", seconds_start=sec.start_time.isoformat(),
                         seconds_source=str(second_files.get(pid) or raw_files[pid]))
            _save_array(ctx.path(STORE, entry["seconds"]), sec.values)
            if sec.means is not None:
                entry["means"] = f"{pid}.means.npy"
                _save_array(ctx.path(STORE, entry["means"]), sec.means)
        entries.append(entry)
    ctx.json({"participants": entries}, STORE, "index.json")
    log.info("ingested %d participant(s)", len(entries))
    return entries


# ------------------------------------------------------------------ quality

DAY_COLUMNS = ["participant_id", "date", "valid", "retained", "nonwear_minutes",
               "spike_seconds", "stuck_seconds"]


def cmd_quality(ctx):
    """Day records on the analysis window, retained days, and the wear-window grid."""
    q = ctx.cfg.quality
    choi = quality.ChoiParams(q.choi.window_minutes, q.choi.spike_tolerance_minutes,
                              q.choi.flank_zero_minutes)
    store = load_store(ctx)
    grid = ctx.grid
    full_records, analysis = [], []
    for pid, (counts, seconds) in store.items():
        records = quality.assess_participant(
            counts, seconds, choi, q.malfunction.max_plausible_sd, q.malfunction.stuck_run_seconds,
            quality.FULL_DAY, q.nonwear_axis)
        full_records += records
        analysis += [r.restrict(grid) for r in records]
    kept = {(r.participant_id, r.date) for r in quality.retain_days(analysis, q.max_days_per_participant)}
    rows = [{"participant_id": r.participant_id, "date": str(r.date), "valid": r.valid,
             "retained": (r.participant_id, r.date) in kept, "nonwear_minutes": r.nonwear_minutes,
             "spike_seconds": r.spike_seconds, "stuck_seconds": r.stuck_seconds}
            for r in sorted(analysis, key=lambda r: (r.participant_id, r.date))]
    ctx.table(pd.DataFrame(rows, columns=DAY_COLUMNS), QUALITY, "day_records.csv")
    grid_table = quality.window_grid_report(full_records, quality.default_windows(), list(store))
    ctx.table(grid_table, QUALITY, "window_grid.tsv", sep="\t")
    return rows


def retained_days(ctx):
    frame = read_table(require(ctx.path(QUALITY, "day_records.csv"), "run quality"),
                       dtype={"participant_id": str})
    frame = frame[frame["retained"].astype(str) == "True"]
    out = {}
    for pid, day in zip(frame["participant_id"], frame["date"]):
        out.setdefault(pid, []).append(date.fromisoformat(day))
    return out


def _window_counts(counts, day, grid):
    return quality.window_values(counts.vm, counts.start_time, 60, day, grid, np.nan)


def _window_seconds(seconds, day, grid):
    return quality.window_values(seconds.values, seconds.start_time, 1, day, grid, np.nan)


# ------------------------------------------------------------------ summaries

def cmd_summarize(ctx):
    """Per-participant category minutes and Bai measures over retained days."""
    cfg = ctx.cfg
    scheme = _scheme(cfg)
    store = load_store(ctx)
    days = retained_days(ctx)
    grid = ctx.grid
    cat_days, bai_days, pool = {}, {}, []
    for pid in sorted(store):
        counts, seconds = store[pid]
        cat_days[pid] = [categories.tabulate_day(_window_counts(counts, d, grid), scheme, grid.n_minutes)
                         for d in days.get(pid, [])]
        if seconds is None:
            continue
        bai_days[pid] = []
        for d in days.get(pid, []):
            sd = _window_seconds(seconds, d, grid)
            labels = bai.label_activity(sd, cfg.bai.cut_point, cfg.bai.axis)
            bai_days[pid].append(bai.day_stats(labels, sd, cfg.bai.axis))
            pool.append(bai.sd_channel(sd, cfg.bai.axis))
    ctx.table(categories.category_table(cat_days), SUMMARIES, "categories.csv")
    if bai_days:
        ctx.table(bai.bai_table(bai_days, cfg.bai.intensity_pooling), SUMMARIES, "bai.csv")
    if pool:
        density = bai.sd_density_export(np.concatenate(pool), cfg.bai.density_bins, cfg.bai.cut_point)
        ctx.table(density.to_frame(), SUMMARIES, "sd_density.tsv", sep="\t")


def _scheme(cfg):
    name = cfg.categories.scheme
    custom = cfg.categories.schemes
    if name in custom:
        spec = custom[name]
        try:
            return categories.CutpointScheme(name, float(spec["sb_max"]), float(spec["lpa_max"]),
                                             float(spec["mpa_max"]))
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"config key categories.schemes.{name}: expected sb_max, lpa_max, "
                              "mpa_max numbers") from None
    if name not in categories.SCHEMES:
        raise ConfigError(f"config key categories.scheme: unknown scheme {name!r}")
    return categories.SCHEMES[name]


# ------------------------------------------------------------------ profiles

def sort_variants(cfg):
    return [profiles.parse_sort_label("none" if s is None else s) for s in cfg.profile.sort]


def cmd_profile(ctx):
    """One matrix of daily 10-minute profiles per configured sort variant."""
    store = load_store(ctx)
    days = retained_days(ctx)
    grid = ctx.grid
    daily = []
    for pid in sorted(days):
        counts, _ = store[pid]
        for d in days[pid]:
            daily.append(profiles.build_daily_profile(
                _window_counts(counts, d, grid), pid, d, ctx.cfg.profile.bin_minutes, grid.n_minutes))
    if not daily:
        raise DataError("no retained days; nothing to profile")
    written = []
    for segments in sort_variants(ctx.cfg):
        matrix = profiles.assemble_matrix(daily, segments)
        written.append(ctx.table(matrix.to_frame(), PROFILES, f"{matrix.label}.csv"))
    return written


# ------------------------------------------------------------------ clustering

def cmd_cluster(ctx):
    """Per sort variant: choose k by prediction strength, fit, and tabulate memberships."""
    c = ctx.cfg.cluster
    seed = ctx.cfg.cluster_seed
    results = {}
    for segments in sort_variants(ctx.cfg):
        label = profiles.sort_label(segments)
        frame = read_table(require(ctx.path(PROFILES, f"{label}.csv"), "run profile"),
                           dtype={"participant_id": str})
        matrix = profiles.ProfileMatrix.from_frame(frame)
        curve = clustering.prediction_strength_curve(matrix.values, c.k_max, c.splits, seed, c.restarts,
                                                     c.max_iter, c.tol, ctx.jobs)
        k, rule = clustering.select_k(curve, c.threshold)
        model = clustering.kmeans_fit(matrix.values, k, seed, c.restarts, c.max_iter, c.tol, ctx.jobs)
        members = clustering.membership_distribution(model.labels, matrix.participants, k)
        ctx.table(curve.to_frame(), CLUSTER, label, "ps_curve.tsv", sep="\t")
        ctx.table(clustering.centroid_frame(model, ctx.cfg.profile.bin_minutes, ctx.grid.start_minute),
                  CLUSTER, label, "centroids.tsv", sep="\t")
        ctx.table(members.to_frame(), CLUSTER, label, "membership.csv")
        ctx.table(clustering.cluster_report(model, matrix.participants), CLUSTER, label, "report.csv")
        days = pd.DataFrame({"participant_id": matrix.participants,
                             "date": [str(d) for _, d in matrix.index],
                             "cluster": model.labels + 1})
        ctx.table(days, CLUSTER, label, "day_labels.csv")
        ctx.json({"variant": label, "k": k, "rule": rule, "threshold": c.threshold,
                  "model": model.to_dict()}, CLUSTER, label, "model.json")
        results[label] = (k, rule)
    return results


# ------------------------------------------------------------------ regression

def regression_rows(ctx, participants_csv):
    cfg = ctx.cfg.regression
    rows = regression.load_participants(participants_csv, cfg.sex_coding, cfg.transforms)
    for name in ("categories.csv", "bai.csv"):
        path = ctx.path(SUMMARIES, name)
        if path.exists():
            rows = rows.join(read_table(path, dtype={"participant_id": str}).set_index("participant_id"))
        else:
            log.warning("%s not found; those cells will be unavailable", path)
    for segments in sort_variants(ctx.cfg):
        label = profiles.sort_label(segments)
        path = ctx.path(CLUSTER, label, "membership.csv")
        if not path.exists():
            log.warning("%s not found; %s cells will be unavailable", path, label)
            continue
        members = read_table(path, dtype={"participant_id": str}).set_index("participant_id")
        members = members.drop(columns="days_observed").add_prefix(f"{label}:")
        rows = rows.join(members)
    return rows


def cmd_regress(ctx, participants_csv):
    """Comparison table of R2/AIC by outcome and predictor family, plus measure correlations."""
    rows = regression_rows(ctx, require(participants_csv, "participant table"))
    outcomes = ctx.cfg.regression.outcomes
    table, fits = regression.comparison_table(rows, outcomes, regression.TABLE_COLUMNS)
    write_table(ctx.path(REGRESS, "comparison_table.csv"), regression.table_to_csv_frame(table),
                ctx.provenance)
    measures = [*outcomes, *regression.BAI_MEASURES, "SB", "LPA", "MPA", "VPA", "MVPA"]
    corr = regression.correlation_matrix(rows, measures)
    ctx.table(corr.reset_index(names="measure"), REGRESS, "correlation.csv")
    ctx.json({"fits": {f"{o}|{col}": fit.to_dict() for (o, col), fit in sorted(fits.items())}},
             REGRESS, "fits.json")
    return table


# ------------------------------------------------------------------ simulate

def cmd_simulate(ctx, out_dir=None):
    """Synthetic cohort files in the ingestible formats, plus ground truth."""
    s = ctx.cfg.synth
    spec = synth.spec_from_config(s, ctx.cfg.seed)
    cohort = synth.generate_cohort(spec, with_seconds=s.with_seconds)
    target = Path(out_dir) if out_dir else ctx.path("cohort")
    synth.write_cohort(cohort, target, ctx.provenance)
    return target


# ------------------------------------------------------------------ report

def _versions():
    import matplotlib
    import scipy

    return {"actiprofile": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "pandas": pd.__version__, "scipy": scipy.__version__, "matplotlib": matplotlib.__version__}


def cmd_report(ctx):
    """Consolidated JSON summary with provenance, and PNG figures of the plot series."""
    from . import plotting

    figures = ctx.path(REPORT, "figures")
    days = read_table(require(ctx.path(QUALITY, "day_records.csv"), "run quality"),
                      dtype={"participant_id": str})
    summary = {"versions": _versions(), "config": ctx.cfg.to_dict(),
               "participants": int(days["participant_id"].nunique()),
               "days": int(len(days)), "valid_days": int(days["valid"].astype(str).eq("True").sum()),
               "retained_days": int(days["retained"].astype(str).eq("True").sum()),
               "clusters": {}}
    density_path = ctx.path(SUMMARIES, "sd_density.tsv")
    if density_path.exists():
        plotting.sd_density_figure(read_table(density_path, sep="\t"), ctx.cfg.bai.cut_point,
                                   figures / "sd_density.png", ctx.provenance)
    for segments in sort_variants(ctx.cfg):
        label = profiles.sort_label(segments)
        info = read_json(require(ctx.path(CLUSTER, label, "model.json"), "run cluster"))
        curve = read_table(ctx.path(CLUSTER, label, "ps_curve.tsv"), sep="\t")
        centroids = read_table(ctx.path(CLUSTER, label, "centroids.tsv"), sep="\t")
        summary["clusters"][label] = {"k": info["k"], "rule": info["rule"],
                                      "ps": dict(zip(curve["k"].astype(str), curve["ps_mean"]))}
        plotting.ps_curve_figure(curve, info["threshold"], info["k"], figures / f"ps_curve_{label}.png",
                                 ctx.provenance, title=label)
        values = centroids.pivot(index="cluster", columns="bin", values="cpm").to_numpy()
        plotting.centroid_figure(values, ctx.grid.start_minute, ctx.cfg.profile.bin_minutes,
                                 figures / f"centroids_{label}.png", ctx.provenance, title=label)
    table = read_table(require(ctx.path(REGRESS, "comparison_table.csv"), "run regress"))
    summary["comparison_table"] = table.to_dict(orient="records")
    corr = read_table(ctx.path(REGRESS, "correlation.csv")).set_index("measure")
    plotting.correlation_figure(corr, figures / "correlation.png", ctx.provenance)
    ctx.json(summary, REPORT, "report.json")
    return summary


def cmd_run(ctx, counts, participants_csv, seconds=(), raw=()):
    cmd_ingest(ctx, counts, seconds, raw)
    cmd_quality(ctx)
    cmd_summarize(ctx)
    cmd_profile(ctx)
    cmd_cluster(ctx)
    cmd_regress(ctx, participants_csv)
    return cmd_report(ctx)


# ------------------------------------------------------------------ argv

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--seed", type=int, help="global seed (overrides config)")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for clustering")
    common.add_argument("--out", default="actiprofile_out", help="work directory")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = _Parser(prog="actiprofile", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def inputs(p, required=True):
        p.add_argument("--counts", nargs="+", required=required, help="count CSV files or directories")
        p.add_argument("--seconds", nargs="+", default=(), help="per-second SD CSVs or directories")
        p.add_argument("--raw", nargs="+", default=(), help="raw acceleration CSVs or directories")

    inputs(sub.add_parser("ingest", parents=[common], help=cmd_ingest.__doc__))
    for name, fn in (("quality", cmd_quality), ("summarize", cmd_summarize), ("profile", cmd_profile),
                     ("cluster", cmd_cluster), ("report", cmd_report)):
        sub.add_parser(name, parents=[common], help=fn.__doc__)
    p = sub.add_parser("regress", parents=[common], help=cmd_regress.__doc__)
    p.add_argument("--participants", required=True, help="participant CSV")
    p = sub.add_parser("simulate", parents=[common], help=cmd_simulate.__doc__)
    p.add_argument("--cohort-dir", help="where to write the cohort (default <out>/cohort)")
    p = sub.add_parser("run", parents=[common], help="ingest through report in one go")
    inputs(p)
    p.add_argument("--participants", required=True, help="participant CSV")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        ctx = make_context(args.config, args.seed, args.out, args.jobs)
        command = args.command
        if command == "ingest":
            cmd_ingest(ctx, args.counts, args.seconds, args.raw)
        elif command == "regress":
            cmd_regress(ctx, args.participants)
        elif command == "simulate":
            print(cmd_simulate(ctx, args.cohort_dir))
        elif command == "run":
            cmd_run(ctx, args.counts, args.participants, args.seconds, args.raw)
        else:
            globals()[f"cmd_{command}"](ctx)
    except ActiprofileError as exc:
        print(f"actiprofile: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
