import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scourwatch.dataset import (
    FeatureCombo,
    FeatureMatrix,
    WindowSpec,
    add_time_features,
    batches,
    chronological_split,
    make_windows,
    time_features,
    window_count,
    year_fraction,
)
from scourwatch.errors import ParameterError
from scourwatch.preprocess import ProcessedSeries, Segment

from conftest import utc


class TestTimeFeatures:
    def test_january_first(self):
        tau = year_fraction(utc(2017, 1, 1, 0, 0))
        s, c = time_features(tau)
        assert s == pytest.approx(0.0, abs=1e-12)
        assert c == pytest.approx(1.0, abs=1e-12)

    def test_quarter_year(self):
        s, c = time_features(0.25)
        assert s == pytest.approx(1.0, abs=1e-12)
        assert c == pytest.approx(0.0, abs=1e-12)

    def test_unit_circle(self):
        for month in range(1, 13):
            s, c = time_features(year_fraction(utc(2019, month, 7, 13)))
            assert s * s + c * c == pytest.approx(1.0, abs=1e-12)

    def test_channels_added(self, small_processed):
        with_time = add_time_features(small_processed)
        assert with_time.channel_names[-2:] == ["year_sin", "year_cos"]
        seg = with_time.segments[0]
        norm = seg.values[:, -2] ** 2 + seg.values[:, -1] ** 2
        np.testing.assert_allclose(norm, 1.0, atol=1e-12)


class TestCombos:
    def test_channel_lists(self):
        assert FeatureCombo("ss").channels == ("sonar", "stage")
        assert FeatureCombo("ssy").channels == ("sonar", "stage", "year_sin", "year_cos")
        assert FeatureCombo("ssd").channels == ("sonar", "stage", "discharge")
        assert FeatureCombo("sd").channels == ("sonar", "discharge")

    def test_sonar_always_first(self):
        for code in ("ss", "ssy", "ssd", "sd"):
            combo = FeatureCombo(code)
            assert combo.channels[0] == "sonar"
            assert combo.label_channels[0] == "sonar"

    def test_label_channels(self):
        assert FeatureCombo("ss").label_channels == ("sonar", "stage")
        assert FeatureCombo("sd").label_channels == ("sonar", "discharge")

    def test_unknown_rejected(self):
        with pytest.raises(ParameterError):
            FeatureCombo("xx")


class TestSplit:
    def test_ten_year_series(self):
        r = chronological_split(10 * 8760, 8760, 8760)
        assert r.train == (0, 8 * 8760)
        assert r.validation == (8 * 8760, 9 * 8760)
        assert r.test == (9 * 8760, 10 * 8760)

    def test_degenerate_empty_train(self):
        with pytest.raises(ParameterError, match="too short"):
            chronological_split(2 * 8760, 8760, 8760)

    def test_three_year_series(self):
        r = chronological_split(3 * 8760, 8760, 8760)
        assert r.train == (0, 8760)

    def test_ranges_exhaustive_and_disjoint(self):
        r = chronological_split(1000, 100, 50)
        assert r.train[1] == r.validation[0]
        assert r.validation[1] == r.test[0]
        assert r.test[1] == 1000


def flat_series(length, n_channels=2, start=0):
    values = np.arange(length * n_channels, dtype=float).reshape(length, n_channels)
    seg = Segment(start, values, np.zeros((length, n_channels), dtype=bool))
    return ProcessedSeries(utc(2015, 1, 1), 3600, ["sonar", "stage"], [seg])


class TestWindows:
    def test_single_window_boundary(self):
        series = flat_series(504)
        m = FeatureMatrix(series, FeatureCombo("ss"))
        r = chronological_split(504, 1, 1)  # degenerate-ish but legal
        ws = make_windows(m, WindowSpec(336, 168), r)
        total = sum(len(ws[s]) for s in ws)
        assert total == 0  # split boundaries cut the lone window
        full = make_windows(
            m, WindowSpec(336, 168),
            type(r)(train=(0, 504), validation=(0, 0), test=(0, 0)),
        )
        assert len(full["train"]) == 1

    def test_count_formula_8760(self):
        assert window_count(8760, WindowSpec(336, 168)) == 8257

    def test_too_short_gives_zero(self):
        assert window_count(503, WindowSpec(336, 168)) == 0

    @settings(max_examples=50, deadline=None)
    @given(
        st.integers(1, 2000),
        st.integers(1, 400),
        st.integers(1, 400),
    )
    def test_count_matches_enumeration(self, length, in_w, out_w):
        spec = WindowSpec(in_w, out_w)
        brute = sum(
            1 for start in range(length) if start + spec.total_width <= length
        )
        assert window_count(length, spec) == brute

    def test_paper_window_counts(self):
        for spec in (WindowSpec(336, 168), WindowSpec(720, 168), WindowSpec(720, 336)):
            length = 8760
            brute = sum(
                1 for s in range(length) if s + spec.total_width <= length
            )
            assert window_count(length, spec) == brute

    def test_windows_never_cross_segments(self, small_processed):
        from scourwatch.preprocess import compute_norm_stats, normalize_series

        stats = compute_norm_stats(small_processed, small_processed.n_steps)
        normed = normalize_series(small_processed, stats)
        m = FeatureMatrix(normed, FeatureCombo("ss"))
        r = chronological_split(normed.n_steps, 150 * 24, 120 * 24)
        spec = WindowSpec(336, 168)
        ws = make_windows(m, spec, r)
        spans = {(s.start, s.start + len(v))
                 for s, v in zip(normed.segments, m.segments)}
        for split in ws.values():
            for seg_idx, gstart in split.entries:
                seg_start = m.segment_starts[seg_idx]
                seg_end = seg_start + len(m.segments[seg_idx])
                assert (seg_start, seg_end) in spans
                assert gstart >= seg_start
                assert gstart + spec.total_width <= seg_end

    def test_no_training_label_leaks_into_later_splits(self, small_factory):
        spec = WindowSpec(336, 168)
        ws = small_factory.windows("ss", spec)
        val_start = small_factory.ranges.validation[0]
        for _, gstart in ws["train"].entries:
            assert gstart + spec.total_width <= val_start


class TestBatches:
    def make_windows(self, n, spec=WindowSpec(4, 2)):
        series = flat_series(n + spec.total_width - 1)
        m = FeatureMatrix(series, FeatureCombo("ss"))
        r = chronological_split(series.n_steps, 1, 1)
        full = type(r)(train=(0, series.n_steps), validation=(0, 0), test=(0, 0))
        return make_windows(m, spec, full)["train"]

    def test_partial_final_batch(self):
        ws = self.make_windows(70)
        sizes = [len(x) for x, _, _ in batches(ws, 32, shuffle_seed=1)]
        assert sizes == [32, 32, 6]

    def test_same_seed_same_order(self):
        ws = self.make_windows(50)
        a = [x for x, _, _ in batches(ws, 8, shuffle_seed=7)]
        b = [x for x, _, _ in batches(ws, 8, shuffle_seed=7)]
        for xa, xb in zip(a, b):
            np.testing.assert_array_equal(xa, xb)

    def test_small_set_single_batch(self):
        ws = self.make_windows(10)
        sizes = [len(x) for x, _, _ in batches(ws, 32, shuffle_seed=1)]
        assert sizes == [10]

    def test_unshuffled_is_sequential(self):
        ws = self.make_windows(10)
        x, y, _ = next(batches(ws, 10))
        # first window starts at index 0: values are the raw arange block
        assert x[0, 0, 0] == 0.0
        assert x[1, 0, 0] == 2.0  # stride-1: next window starts one step later

    def test_labels_follow_inputs(self):
        ws = self.make_windows(5, WindowSpec(3, 2))
        x, y, _ = next(batches(ws, 1))
        # label block starts right where the input block ends
        assert y[0, 0, 0] == x[0, -1, 0] + 2.0

    def test_bad_batch_size(self):
        with pytest.raises(ParameterError):
            list(batches(self.make_windows(5), 0))


class TestExoAssembly:
    def test_time_exo_uses_true_future(self, small_factory):
        ws = small_factory.windows("ssy", WindowSpec(24, 6))
        x, y, exo = ws["train"].materialize([0])
        assert exo.shape == (1, 6, 2)
        norm = exo[0, :, 0] ** 2 + exo[0, :, 1] ** 2
        np.testing.assert_allclose(norm, 1.0, atol=1e-12)

    def test_discharge_exo_is_persisted(self, small_factory):
        ws = small_factory.windows("ssd", WindowSpec(24, 6))
        x, y, exo = ws["train"].materialize([5])
        np.testing.assert_allclose(exo[0, :, 0], x[0, -1, 2])
