import json
import shutil

import pandas as pd
import pytest

from actiprofile import cli
from actiprofile.artifacts import read_table
from actiprofile.regression import MEMBERSHIP_VARIANTS, TABLE_COLUMNS

SMALL = """\
seed: 3
synth:
  n_participants: 6
  days_per_participant: 3
  nonwear_rate: 0.2
  malfunction_rate: 0.1
cluster:
  k_max: 4
  splits: 3
  restarts: 2
"""


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "small.yaml"
    config.write_text(SMALL)
    cohort = root / "cohort"
    out = root / "out"
    common = ["--config", str(config), "--out", str(out)]
    assert cli.main(["simulate", *common, "--cohort-dir", str(cohort)]) == 0
    assert cli.main(["run", *common, "--counts", str(cohort / "counts"), "--seconds", str(cohort / "seconds"),
                     "--participants", str(cohort / "participants.csv")]) == 0
    return {"root": root, "config": config, "cohort": cohort, "out": out}


def test_simulate_writes_ingestible_files(pipeline):
    cohort = pipeline["cohort"]
    assert len(list((cohort / "counts").glob("*.csv"))) == 6
    assert len(list((cohort / "seconds").glob("*.csv.gz"))) == 6
    assert (cohort / "participants.csv").read_text().startswith("# actiprofile 0.1.0 config_hash=")
    assert "provenance" in json.loads((cohort / "truth.json").read_text())


def test_every_artifact_present(pipeline):
    out = pipeline["out"]
    expected = ["store/index.json", "quality/day_records.csv", "quality/window_grid.tsv",
                "summaries/categories.csv", "summaries/bai.csv", "summaries/sd_density.tsv",
                "regress/comparison_table.csv", "regress/correlation.csv", "regress/fits.json",
                "report/report.json", "report/figures/sd_density.png", "report/figures/correlation.png"]
    for variant in MEMBERSHIP_VARIANTS:
        expected += [f"profiles/{variant}.csv", f"cluster/{variant}/membership.csv",
                     f"cluster/{variant}/ps_curve.tsv", f"cluster/{variant}/model.json",
                     f"report/figures/ps_curve_{variant}.png", f"report/figures/centroids_{variant}.png"]
    missing = [p for p in expected if not (out / p).exists()]
    assert not missing


def test_provenance_on_every_table(pipeline):
    out = pipeline["out"]
    tables = [p for p in out.rglob("*") if p.suffix in (".csv", ".tsv")]
    assert tables
    for path in tables:
        first = path.read_text().splitlines()[0]
        assert first.startswith("# actiprofile 0.1.0 config_hash=") and "seed=3" in first, path
    for path in out.rglob("*.json"):
        assert json.loads(path.read_text())["provenance"]["seed"] == 3


def test_comparison_table_layout(pipeline):
    table = read_table(pipeline["out"] / "regress" / "comparison_table.csv")
    assert list(table.columns) == ["outcome", "statistic", *TABLE_COLUMNS]
    assert table["outcome"].tolist() == ["Waist (cm)"] * 2 + ["Insulin"] * 2 + ["Triglyceride"] * 2


def test_day_records_cover_cohort(pipeline):
    days = read_table(pipeline["out"] / "quality" / "day_records.csv", dtype={"participant_id": str})
    assert days["participant_id"].nunique() == 6 and len(days) == 18


def test_cluster_rerun_byte_identical(pipeline):
    ctx = cli.make_context(pipeline["config"], None, pipeline["out"])
    before = {p: p.read_bytes() for p in (pipeline["out"] / "cluster").rglob("*") if p.is_file()}
    cli.cmd_cluster(ctx)
    after = {p: p.read_bytes() for p in (pipeline["out"] / "cluster").rglob("*") if p.is_file()}
    assert before == after


def test_regress_without_memberships(pipeline, tmp_path):
    shutil.copytree(pipeline["out"] / "summaries", tmp_path / "summaries")
    ctx = cli.make_context(pipeline["config"], None, tmp_path)
    table = cli.cmd_regress(ctx, pipeline["cohort"] / "participants.csv")
    assert table[list(MEMBERSHIP_VARIANTS)].isna().all().all()
    assert table["baseline"].notna().all()


def test_seed_override_changes_header(pipeline, tmp_path):
    ctx = cli.make_context(pipeline["config"], 11, tmp_path)
    assert ctx.cfg.seed == 11 and "seed=11" in ctx.provenance.header()


def test_missing_upstream_exits_2(tmp_path, capsys):
    assert cli.main(["quality", "--out", str(tmp_path)]) == 2
    assert "run ingest" in capsys.readouterr().err


def test_bad_config_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("cluster:\n  k_maximum: 3\n")
    assert cli.main(["quality", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert "cluster.k_maximum" in capsys.readouterr().err


def test_usage_error_exits_1(capsys):
    assert cli.main(["regress"]) == 1
    assert cli.main(["no-such-command"]) == 1


def test_bad_input_exits_2(tmp_path):
    counts = tmp_path / "p.csv"
    counts.write_text("timestamp,axis1,axis2,axis3\n2024-01-01T00:00:00,1,2,oops\n")
    assert cli.main(["ingest", "--out", str(tmp_path / "o"), "--counts", str(counts)]) == 2


def test_report_summary(pipeline):
    report = json.loads((pipeline["out"] / "report" / "report.json").read_text())
    assert report["participants"] == 6 and set(report["clusters"]) == set(MEMBERSHIP_VARIANTS)
    assert isinstance(pd.DataFrame(report["comparison_table"]), pd.DataFrame)
