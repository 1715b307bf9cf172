import numpy as np
import pytest

from diarkit.embeddings import (EmbeddingSet, SubsegmentSpec, load_embeddings,
                                make_subsegments, parse_anchors,
                                write_anchors, write_embedding_matrix)

SPEC = SubsegmentSpec()  # 1.5 s window, 0.75 s shift, 0.5 s minimum


class TestMakeSubsegments:
    def test_four_second_segment_folds_short_tail(self):
        anchors = make_subsegments([(0, 4000)], SPEC)
        assert anchors == [(0, 1500), (750, 1500), (1500, 1500), (2250, 1750)]

    def test_segment_shorter_than_window_is_one_anchor(self):
        assert make_subsegments([(0, 1000)], SPEC) == [(0, 1000)]

    def test_segment_shorter_than_min_subsegment_is_one_anchor(self):
        assert make_subsegments([(100, 400)], SPEC) == [(100, 300)]

    def test_empty_input(self):
        assert make_subsegments([], SPEC) == []

    def test_long_tail_becomes_own_anchor(self):
        # leftover after the last full window is 0.6 s >= the 0.5 s minimum
        anchors = make_subsegments([(0, 2100)], SPEC)
        assert anchors == [(0, 1500), (1500, 600)]

    def test_offset_segments_are_shifted(self):
        anchors = make_subsegments([(1000, 5000)], SPEC)
        assert anchors == [(1000, 1500), (1750, 1500), (2500, 1500),
                           (3250, 1750)]

    def test_anchors_stay_inside_and_cover_segment(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            onset = int(rng.integers(0, 10_000))
            dur = int(rng.integers(100, 20_000))
            segs = [(onset, onset + dur)]
            anchors = make_subsegments(segs, SPEC)
            assert anchors[0][0] == onset
            covered = onset
            for a, d in anchors:
                assert a >= onset and a + d <= onset + dur
                assert a <= covered  # no gap
                covered = max(covered, a + d)
            assert covered == onset + dur

    def test_interior_anchors_overlap_by_window_minus_shift(self):
        anchors = make_subsegments([(0, 6000)], SPEC)
        for (a1, d1), (a2, _) in zip(anchors[:-2], anchors[1:-1]):
            assert a1 + d1 - a2 == 750

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SubsegmentSpec(window=1.0, shift=1.5)
        with pytest.raises(ValueError):
            SubsegmentSpec(min_subsegment=0)


class TestEmbeddingIO:
    def anchors(self, n):
        return [(i * 750, 1500) for i in range(n)]

    def test_load_binds_rows_to_anchors(self):
        matrix = np.arange(4 * 256, dtype=float).reshape(4, 256)
        text = write_embedding_matrix(matrix)
        es = load_embeddings("rec", self.anchors(4), text)
        assert (es.n, es.dim) == (4, 256)
        assert np.array_equal(es.vectors, matrix)

    def test_count_mismatch_message(self):
        text = write_embedding_matrix(np.zeros((3, 8)))
        with pytest.raises(ValueError, match="count mismatch 4 vs 3"):
            load_embeddings("rec", self.anchors(4), text)

    def test_nan_row_is_named(self):
        matrix = np.zeros((4, 8))
        matrix[2, 3] = np.nan
        with pytest.raises(ValueError, match="row 2"):
            EmbeddingSet("rec", tuple(self.anchors(4)), matrix)

    def test_ragged_row_rejected(self):
        text = "2 3\n1 2 3\n1 2\n"
        with pytest.raises(ValueError, match="row 1"):
            load_embeddings("rec", self.anchors(2), text)

    def test_header_row_count_checked(self):
        text = "3 2\n1 2\n3 4\n"
        with pytest.raises(ValueError, match="header says 3"):
            load_embeddings("rec", self.anchors(3), text)

    def test_matrix_round_trip_is_exact(self):
        rng = np.random.default_rng(0)
        matrix = rng.standard_normal((5, 7))
        from diarkit.embeddings import parse_embedding_matrix
        assert np.array_equal(parse_embedding_matrix(
            write_embedding_matrix(matrix)), matrix)


class TestAnchorSidecar:
    def test_round_trip(self):
        anchors = [(0, 1500), (750, 1500), (1500, 1750)]
        text = write_anchors("recA", anchors)
        assert parse_anchors(text) == {"recA": anchors}

    def test_bad_line_reports_number(self):
        with pytest.raises(ValueError, match="line 2"):
            parse_anchors("recA 0.000 1.500\nrecA 0.75\n")
