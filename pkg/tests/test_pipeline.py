import numpy as np
import pytest

from diarkit.core import Annotation
from diarkit.metrics import ScoreConfig, score
from diarkit.pipeline import (PipelineConfig, compute_anchors,
                              diarize_recording, labels_to_turns)
from diarkit.plda import PldaModel
from diarkit.sim import SimConfig, simulate


class TestLabelsToTurns:
    def test_same_label_overlapping_anchors_merge(self):
        anchors = [(0, 1500), (750, 1500), (1500, 1500)]
        ann = labels_to_turns("r", anchors, [0, 0, 0])
        assert len(ann) == 1
        turn = ann.turns[0]
        assert (turn.onset_ms, turn.offset_ms, turn.speaker) == (0, 3000, "spk00")

    def test_speaker_change_splits_at_overlap_midpoint(self):
        anchors = [(0, 1500), (750, 1500)]
        ann = labels_to_turns("r", anchors, [0, 1])
        # overlap region [750, 1500) -> boundary at 1125
        assert [(t.onset_ms, t.offset_ms, t.speaker) for t in ann] == \
            [(0, 1125, "spk00"), (1125, 2250, "spk01")]

    def test_gap_closes_turn_even_for_same_label(self):
        anchors = [(0, 1000), (2000, 1000)]
        ann = labels_to_turns("r", anchors, [0, 0])
        assert [(t.onset_ms, t.offset_ms) for t in ann] == \
            [(0, 1000), (2000, 3000)]

    def test_no_zero_gap_splits(self):
        anchors = [(0, 1500), (750, 1500), (1500, 1750), (3250, 1000)]
        ann = labels_to_turns("r", anchors, [0, 0, 0, 0])
        assert len(ann) == 1

    def test_empty(self):
        assert len(labels_to_turns("r", [], [])) == 0


def run_sim_pipeline(seed, skip_vb=False, **cfg_kwargs):
    sim = simulate(SimConfig(n_speakers=4, duration=120.0, seed=seed,
                             **cfg_kwargs))
    model = PldaModel.identity(sim.psi)
    cfg = PipelineConfig(apply_preprocess=False, skip_vb=skip_vb)
    result = diarize_recording(sim.track, sim.embeddings, model, cfg)
    return sim, result


class TestDiarizeRecording:
    def test_recovers_speaker_count_on_separated_data(self):
        sim, result = run_sim_pipeline(seed=0)
        truth = len(sim.reference.speakers(sim.recording_id))
        assert len(result.hypothesis.speakers(sim.recording_id)) == truth
        report = score(sim.reference, result.hypothesis, ScoreConfig())
        assert report.der is not None and report.der < 0.05

    def test_skip_vb_returns_ahc_labels(self):
        sim, full = run_sim_pipeline(seed=1)
        _, ahc_only = run_sim_pipeline(seed=1, skip_vb=True)
        assert ahc_only.vb_state is None
        assert ahc_only.labels == ahc_only.ahc_assignment.labels

    def test_deterministic_end_to_end(self):
        _, a = run_sim_pipeline(seed=2)
        _, b = run_sim_pipeline(seed=2)
        assert a.hypothesis == b.hypothesis

    def test_hypothesis_turns_stay_inside_segments(self):
        sim, result = run_sim_pipeline(seed=3)
        anchors = result.anchors
        starts = min(a for a, _ in anchors)
        ends = max(a + d for a, d in anchors)
        for turn in result.hypothesis:
            assert turn.onset_ms >= starts and turn.offset_ms <= ends

    def test_empty_track_yields_empty_annotation(self):
        from diarkit.vad import PosteriorTrack
        from diarkit.embeddings import EmbeddingSet

        track = PosteriorTrack("rec", 0.01, np.zeros(100))
        empty = EmbeddingSet("rec", (), np.zeros((0, 4)))
        result = diarize_recording(track, empty, PldaModel.identity(np.ones(4)),
                                   PipelineConfig(apply_preprocess=False))
        assert result.hypothesis == Annotation()

    def test_dimension_mismatch_without_preprocess(self):
        sim, _ = run_sim_pipeline(seed=4)
        wrong = PldaModel.identity(np.ones(sim.config.embedding_dim + 1))
        with pytest.raises(ValueError, match="dim"):
            diarize_recording(sim.track, sim.embeddings, wrong,
                              PipelineConfig(apply_preprocess=False))

    def test_compute_anchors_matches_sim_anchors(self):
        sim = simulate(SimConfig(n_speakers=3, duration=60.0, seed=5))
        cfg = PipelineConfig()
        assert tuple(compute_anchors(sim.track, cfg)) == sim.embeddings.anchors
