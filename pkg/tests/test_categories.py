import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actiprofile import categories as cat
from actiprofile.categories import Category
from actiprofile.errors import AlignmentError, ConfigError, DataError


def test_classify_examples(test_scheme):
    assert cat.classify_epoch(0, test_scheme) is Category.SB
    assert cat.classify_epoch(2000, test_scheme) is Category.LPA
    assert cat.classify_epoch(4001, test_scheme) is Category.VPA
    assert cat.classify_epoch(100, test_scheme) is Category.SB
    assert cat.classify_epoch(100.5, test_scheme) is Category.LPA
    assert cat.classify_epoch(4000, test_scheme) is Category.MPA


def test_scheme_must_increase():
    with pytest.raises(ConfigError):
        cat.CutpointScheme("bad", 100, 100, 200)


def test_negative_cpm_rejected(test_scheme):
    with pytest.raises(DataError):
        cat.classify([-1.0], test_scheme)


def test_shipped_scheme_is_ordered():
    s = cat.ROMANZINI_2014_VM
    assert 0 <= s.sb_max < s.lpa_max < s.mpa_max


@given(st.lists(st.floats(0, 20000, allow_nan=False), min_size=1, max_size=200))
@settings(max_examples=100, deadline=None)
def test_classify_matches_scalar_rule_and_is_monotone(values):
    got = cat.classify(values, cat.CutpointScheme("t", 100, 2000, 4000))
    for v, c in zip(values, got):
        expect = 0 if v <= 100 else 1 if v <= 2000 else 2 if v <= 4000 else 3
        assert c == expect
    order = np.argsort(values, kind="stable")
    assert (np.diff(got[order]) >= 0).all()


class TestTabulate:
    def test_all_zero(self, test_scheme):
        d = cat.tabulate_day(np.zeros(960), test_scheme)
        assert (d.sb, d.lpa, d.mpa, d.vpa, d.mvpa) == (960, 0, 0, 0, 0)

    def test_half_vpa(self, test_scheme):
        d = cat.tabulate_day(np.r_[np.zeros(480), np.full(480, 5000.0)], test_scheme)
        assert (d.sb, d.vpa) == (480, 480)

    def test_counting_oracle(self, test_scheme, rng):
        cpm = rng.uniform(0, 6000, 960)
        d = cat.tabulate_day(cpm, test_scheme)
        assert d.sb == int((cpm <= 100).sum())
        assert d.lpa == int(((cpm > 100) & (cpm <= 2000)).sum())
        assert d.mpa == int(((cpm > 2000) & (cpm <= 4000)).sum())
        assert d.vpa == int((cpm > 4000).sum())
        assert d.total == 960 and d.mvpa == d.mpa + d.vpa

    def test_wrong_length(self, test_scheme):
        with pytest.raises(AlignmentError):
            cat.tabulate_day(np.zeros(959), test_scheme)


class TestMeans:
    def test_two_days(self):
        m = cat.participant_mean_durations([cat.CategoryDurations(900, 60, 0, 0),
                                            cat.CategoryDurations(920, 40, 0, 0)])
        assert m.sb == 910 and m.total == 960

    def test_identical_days(self):
        d = cat.CategoryDurations(500, 300, 100, 60)
        assert cat.participant_mean_durations([d] * 4) == cat.CategoryDurations(500, 300, 100, 60)

    def test_seven_day_oracle(self, rng, test_scheme):
        days = [cat.tabulate_day(rng.uniform(0, 6000, 960), test_scheme) for _ in range(7)]
        m = cat.participant_mean_durations(days)
        arr = np.array([[d.sb, d.lpa, d.mpa, d.vpa] for d in days])
        assert np.allclose([m.sb, m.lpa, m.mpa, m.vpa], arr.mean(axis=0), atol=1e-12)
        assert m.total == pytest.approx(960)

    def test_no_days(self):
        with pytest.raises(DataError):
            cat.participant_mean_durations([])

    def test_table_skips_empty(self):
        t = cat.category_table({"a": [cat.CategoryDurations(960, 0, 0, 0)], "b": []})
        assert list(t["participant_id"]) == ["a"]
        assert list(t.columns) == ["participant_id", "SB", "LPA", "MPA", "VPA", "MVPA"]


class TestReclassify:
    def test_all_sb(self, test_scheme):
        cpm = np.zeros(10)
        for mode in ("mean_cpm", "modal_class"):
            assert list(cat.reclassify_at_epoch(cpm, test_scheme, 10, mode)) == [Category.SB]

    def test_tie_goes_up(self, test_scheme):
        cpm = np.r_[np.zeros(5), np.full(5, 5000.0)]
        assert list(cat.reclassify_at_epoch(cpm, test_scheme, 10, "modal_class")) == [Category.VPA]

    def test_modes_diverge(self, test_scheme):
        cpm = np.r_[np.zeros(9), [50000.0]]
        assert cat.reclassify_at_epoch(cpm, test_scheme, 10, "mean_cpm")[0] == Category.VPA
        assert cat.reclassify_at_epoch(cpm, test_scheme, 10, "modal_class")[0] == Category.SB

    def test_full_day_shape(self, test_scheme, rng):
        out = cat.reclassify_at_epoch(rng.uniform(0, 5000, 960), test_scheme)
        assert out.shape == (96,)

    @given(st.lists(st.sampled_from([0.0, 500.0, 3000.0, 9000.0]), min_size=1, max_size=12))
    @settings(max_examples=50, deadline=None)
    def test_modes_agree_on_uniform_blocks(self, block_values):
        scheme = cat.CutpointScheme("t", 100, 2000, 4000)
        cpm = np.repeat(block_values, 10)
        assert np.array_equal(cat.reclassify_at_epoch(cpm, scheme, 10, "mean_cpm"),
                              cat.reclassify_at_epoch(cpm, scheme, 10, "modal_class"))

    def test_unknown_mode(self, test_scheme):
        with pytest.raises(ConfigError):
            cat.reclassify_at_epoch(np.zeros(10), test_scheme, 10, "median")
