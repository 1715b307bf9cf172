import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diarkit.vad import (PosteriorTrack, VadConfig, parse_posteriors, run_vad,
                         segment, smooth_speech, threshold_posteriors,
                         write_posteriors)
from diarkit.core import Timeline


def track(values, step=0.01, rec="r"):
    return PosteriorTrack(rec, step, np.asarray(values, dtype=float))


class TestThreshold:
    def test_single_run(self):
        tl = threshold_posteriors(track([0.1, 0.9, 0.9, 0.1]), 0.5)
        assert tl.intervals == ((10, 30),)

    def test_all_silence(self):
        assert not threshold_posteriors(track([0.0, 0.0, 0.0]), 0.5)

    def test_zero_threshold_covers_track(self):
        tl = threshold_posteriors(track([0.0, 0.3, 0.0, 1.0]), 0.0)
        assert tl.intervals == ((0, 40),)

    def test_boundary_value_is_speech(self):
        tl = threshold_posteriors(track([0.5]), 0.5)
        assert tl.intervals == ((0, 10),)

    def test_threshold_out_of_range(self):
        with pytest.raises(ValueError):
            threshold_posteriors(track([0.5]), 1.5)

    def test_values_outside_unit_interval_rejected(self):
        with pytest.raises(ValueError):
            track([0.5, 1.2])

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=200),
           st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=200)
    def test_raising_threshold_never_adds_speech(self, values, t1, t2):
        lo, hi = sorted((t1, t2))
        t = track(values)
        assert threshold_posteriors(t, hi).duration_ms \
            <= threshold_posteriors(t, lo).duration_ms


class TestSmooth:
    def test_short_chunk_removed(self):
        tl = Timeline.from_intervals("r", [(0, 0.15)])
        assert not smooth_speech(tl, 0.2)

    def test_boundary_chunk_kept(self):
        tl = Timeline.from_intervals("r", [(0, 0.20)])
        assert smooth_speech(tl, 0.2).intervals == ((0, 200),)

    def test_empty_is_empty(self):
        assert not smooth_speech(Timeline("r"), 0.2)


class TestSegment:
    def test_small_gap_bridged(self):
        tl = Timeline.from_intervals("r", [(0, 1), (1.4, 2)])
        segs = segment(tl, 0.5)
        assert len(segs) == 1
        assert segs[0].span_ms == (0, 2000)

    def test_long_gap_splits(self):
        tl = Timeline.from_intervals("r", [(0, 1), (1.6, 2)])
        segs = segment(tl, 0.5)
        assert [s.span_ms for s in segs] == [(0, 1000), (1600, 2000)]

    def test_boundary_gap_bridges(self):
        tl = Timeline.from_intervals("r", [(0, 1), (1.5, 2)])
        assert len(segment(tl, 0.5)) == 1

    def test_single_interval(self):
        tl = Timeline.from_intervals("r", [(0.2, 1)])
        segs = segment(tl, 0.5)
        assert len(segs) == 1 and segs[0].intervals == tl.intervals


def burst_track(spans, total_s=4.0, step=0.01):
    """Posterior 0.9 inside the spans, 0.1 elsewhere."""
    n = int(round(total_s / step))
    values = np.full(n, 0.1)
    for a, b in spans:
        values[int(round(a / step)):int(round(b / step))] = 0.9
    return track(values, step)


class TestRunVad:
    def test_two_bursts_with_short_silence_merge(self):
        t = burst_track([(0.5, 1.5), (1.8, 2.8)])
        segs = run_vad(t, VadConfig(threshold=0.5))
        assert [s.span_ms for s in segs] == [(500, 2800)]

    def test_two_bursts_with_long_silence_split(self):
        t = burst_track([(0.5, 1.5), (2.3, 3.3)])
        segs = run_vad(t, VadConfig(threshold=0.5))
        assert [s.span_ms for s in segs] == [(500, 1500), (2300, 3300)]

    def test_tiny_burst_removed(self):
        t = burst_track([(1.0, 1.1)])
        assert run_vad(t, VadConfig()) == []

    def random_tracks(self, n_tracks, rng):
        for _ in range(n_tracks):
            n = int(rng.integers(5, 400))
            values = rng.random(n)
            # seed longer speech stretches so smoothing has something to keep
            for _ in range(int(rng.integers(0, 4))):
                a = int(rng.integers(0, n))
                b = min(n, a + int(rng.integers(10, 60)))
                values[a:b] = rng.uniform(0.6, 1.0)
            yield track(values)

    def test_output_properties_on_random_tracks(self):
        rng = np.random.default_rng(1234)
        cfg = VadConfig()
        for t in self.random_tracks(300, rng):
            for seg_tl in run_vad(t, cfg):
                for a, b in seg_tl:
                    assert b - a >= 200
                for a, b in seg_tl.gaps():
                    assert b - a <= 500


class TestPosteriorIO:
    def test_round_trip(self):
        t = track([0.25, 0.5, 1.0], step=0.02, rec="recX")
        parsed = parse_posteriors(write_posteriors(t))
        assert parsed.recording_id == "recX"
        assert parsed.frame_step == 0.02
        assert np.array_equal(parsed.values, t.values)

    def test_bad_header(self):
        with pytest.raises(ValueError, match="header"):
            parse_posteriors("just-one-field\n0.5\n")

    def test_empty_file(self):
        with pytest.raises(ValueError, match="empty"):
            parse_posteriors("")


def test_config_validation():
    with pytest.raises(ValueError):
        VadConfig(threshold=-0.1)
    with pytest.raises(ValueError):
        VadConfig(min_speech=-1)
    with pytest.raises(ValueError):
        VadConfig(max_intra_gap=-1)
