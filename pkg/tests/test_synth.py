import json
from datetime import date

import numpy as np
import pytest

from actiprofile import synth
from actiprofile.errors import ConfigError
from actiprofile.ingest import DayGrid, align_to_day_grid, load_count_csv, load_second_csv
from actiprofile.quality import assess_participant
from oracles import matched_agreement


def small(**kw):
    base = dict(n_participants=6, days_per_participant=3, seed=4)
    base.update(kw)
    return synth.CohortSpec(**base)


class TestGenerate:
    def test_noise_free_days_equal_archetypes(self):
        spec = small(noise_sd=0)
        c = synth.generate_cohort(spec)
        for key, label in c.truth.day_labels.items():
            assert np.array_equal(c.profiles[key], spec.archetypes[label])

    def test_window_minutes_match_profile(self):
        c = synth.generate_cohort(small())
        pid = "P001"
        day = align_to_day_grid(c.counts[pid], DayGrid())[0]
        assert np.array_equal(day.values[:, 3], np.repeat(c.profiles[(pid, day.date)], 10))

    def test_deterministic(self):
        a, b = synth.generate_cohort(small()), synth.generate_cohort(small())
        assert all(np.array_equal(a.counts[p].values, b.counts[p].values) for p in a.counts)
        assert a.participants.equals(b.participants)

    def test_seed_changes_output(self):
        a, b = synth.generate_cohort(small()), synth.generate_cohort(small(seed=5))
        assert not np.array_equal(a.counts["P001"].values, b.counts["P001"].values)

    def test_memberships_sum_to_one(self):
        c = synth.generate_cohort(small(n_participants=20))
        assert np.allclose(c.truth.memberships.sum(axis=1), 1.0)

    def test_days_and_ids(self):
        c = synth.generate_cohort(small())
        assert sorted(c.counts) == [f"P{i:03d}" for i in range(1, 7)]
        assert len(c.truth.day_labels) == 18
        assert min(d for _, d in c.truth.day_labels) == date(2024, 1, 1)

    def test_planted_outcomes_noise_free(self):
        outcomes = {"waist": synth.OutcomeModel(50.0, 2.0, 1.0, (10.0, -5.0, 0.0), 0.0)}
        c = synth.generate_cohort(small(outcomes=outcomes))
        p = c.participants.set_index("participant_id")
        share = c.truth.memberships
        expect = 50 + 2 * p["age"] + p["sex"] + 10 * share.iloc[:, 0] - 5 * share.iloc[:, 1]
        assert np.allclose(p["waist"], expect)

    def test_nonwear_detected_by_choi(self):
        c = synth.generate_cohort(small(nonwear_rate=1.5, n_participants=10))
        assert c.truth.nonwear
        flagged = {(r.participant_id, r.date)
                   for pid, series in c.counts.items()
                   for r in assess_participant(series, grid=DayGrid()) if not r.valid}
        planted = {(p, d) for p, d, _, _ in c.truth.nonwear}
        assert flagged == planted

    def test_seconds_malfunctions_detected(self):
        c = synth.generate_cohort(small(malfunction_rate=1.0, n_participants=3, days_per_participant=2),
                                  with_seconds=True)
        assert c.truth.malfunctions
        bad = {(r.participant_id, r.date)
               for pid in c.counts
               for r in assess_participant(c.counts[pid], c.seconds[pid], grid=DayGrid()) if not r.valid}
        assert {(p, d) for p, d, *_ in c.truth.malfunctions} <= bad


class TestSpecValidation:
    def test_weights(self):
        with pytest.raises(ConfigError):
            small(weights=[0.5, 0.5, 0.5])

    def test_archetype_width(self):
        with pytest.raises(ConfigError):
            small(archetypes=[np.zeros(95)] * 3)

    def test_membership_effects(self):
        with pytest.raises(ConfigError):
            small(outcomes={"waist": synth.OutcomeModel(0, 0, 0, (1.0,), 1.0)})

    def test_infeasible_events(self):
        with pytest.raises(ConfigError):
            synth.generate_cohort(small(nonwear_rate=50.0))


class TestRecovery:
    def test_perfect(self):
        assert synth.score_recovery(np.array([0, 1, 2, 2]), np.array([2, 0, 1, 1])).agreement == 1.0

    def test_one_mislabel(self):
        t = np.repeat([0, 1], 50)
        c = t.copy()
        c[0] = 1
        assert synth.score_recovery(t, c).agreement == pytest.approx(0.99)

    def test_random_near_third(self, rng):
        t = np.repeat([0, 1, 2], 2000)
        score = synth.score_recovery(t, rng.integers(0, 3, t.size)).agreement
        assert abs(score - 1 / 3) < 0.02

    def test_matches_permutation_oracle(self, rng):
        for _ in range(20):
            t, c = rng.integers(0, 3, 30), rng.integers(0, 3, 30)
            t[:3], c[:3] = [0, 1, 2], [0, 1, 2]
            assert synth.score_recovery(t, c).agreement == pytest.approx(matched_agreement(t, c))

    def test_k_mismatch(self):
        s = synth.score_recovery(np.array([0, 0, 1, 1]), np.array([0, 0, 0, 0]))
        assert s.k_mismatch and s.agreement == 0.5


class TestWrite:
    def test_round_trip(self, tmp_path):
        c = synth.generate_cohort(small(n_participants=2, days_per_participant=1, malfunction_rate=0.5),
                                  with_seconds=True)
        synth.write_cohort(c, tmp_path)
        back = load_count_csv(tmp_path / "counts" / "P001.csv")
        assert np.array_equal(back.values, c.counts["P001"].values)
        assert back.start_time == c.counts["P001"].start_time
        sec = load_second_csv(tmp_path / "seconds" / "P001.csv.gz")
        assert np.array_equal(sec.values[:, :3], c.seconds["P001"].values[:, :3])
        assert np.array_equal(sec.means, c.seconds["P001"].means)
        truth = json.loads((tmp_path / "truth.json").read_text())
        assert len(truth["day_labels"]) == 2

    def test_bytes_reproducible(self, tmp_path):
        spec = small(n_participants=1, days_per_participant=1)
        for sub in ("a", "b"):
            synth.write_cohort(synth.generate_cohort(spec, with_seconds=True), tmp_path / sub)
        for rel in ("counts/P001.csv", "seconds/P001.csv.gz", "participants.csv", "truth.json"):
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_presets_distinct():
    arch = synth.preset_archetypes()
    assert len(arch) == 3 and synth.max_separation(list(arch.values())) > 0
