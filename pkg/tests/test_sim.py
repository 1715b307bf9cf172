import numpy as np
import pytest

from diarkit.metrics import ScoreConfig, score
from diarkit.pipeline import PipelineConfig, diarize_recording
from diarkit.plda import PldaModel
from diarkit.sim import (SimConfig, embeddings_for_anchors, load_world,
                         save_world, simulate)


class TestDeterminism:
    def test_fixed_seed_reproduces_everything(self):
        cfg = SimConfig(n_speakers=3, duration=60.0, seed=11)
        a = simulate(cfg)
        b = simulate(cfg)
        assert a.reference == b.reference
        assert np.array_equal(a.track.values, b.track.values)
        assert np.array_equal(a.embeddings.vectors, b.embeddings.vectors)
        assert a.embeddings.anchors == b.embeddings.anchors

    def test_different_seeds_differ(self):
        a = simulate(SimConfig(n_speakers=3, duration=60.0, seed=1))
        b = simulate(SimConfig(n_speakers=3, duration=60.0, seed=2))
        assert a.reference != b.reference

    def test_world_round_trip(self):
        cfg = SimConfig(n_speakers=3, duration=60.0, seed=5)
        sim = simulate(cfg)
        clone = load_world(save_world(sim))
        assert clone.reference == sim.reference
        assert np.array_equal(clone.track.values, sim.track.values)
        assert np.array_equal(clone.embeddings.vectors, sim.embeddings.vectors)

    def test_anchor_keyed_embeddings_are_stable(self):
        sim = simulate(SimConfig(n_speakers=2, duration=30.0, seed=3))
        anchors = list(sim.embeddings.anchors)
        subset, _ = embeddings_for_anchors(sim, anchors[2:5])
        assert np.array_equal(subset.vectors, sim.embeddings.vectors[2:5])


class TestStructure:
    def test_single_speaker_reference(self):
        sim = simulate(SimConfig(n_speakers=1, duration=30.0, seed=0))
        assert sim.reference.speakers(sim.recording_id) == ("spk00",)

    def test_reference_turns_do_not_overlap(self):
        sim = simulate(SimConfig(n_speakers=4, duration=120.0, seed=7))
        turns = sorted(sim.reference, key=lambda t: t.onset_ms)
        for prev, cur in zip(turns, turns[1:]):
            assert cur.onset_ms >= prev.offset_ms

    def test_posteriors_respect_noise_band(self):
        cfg = SimConfig(n_speakers=2, duration=30.0, seed=2,
                        posterior_noise=0.1)
        sim = simulate(cfg)
        values = sim.track.values
        assert np.all((values >= 0.8) | (values <= 0.2))

    def test_anchor_count_matches_embedding_rows(self):
        sim = simulate(SimConfig(n_speakers=3, duration=60.0, seed=9))
        assert sim.embeddings.n == len(sim.embeddings.anchors)
        assert sim.embeddings.dim == sim.config.embedding_dim

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SimConfig(n_speakers=0, duration=10)
        with pytest.raises(ValueError):
            SimConfig(n_speakers=1, duration=10, posterior_noise=0.5)
        with pytest.raises(ValueError):
            SimConfig(n_speakers=1, duration=-5)


class TestGenerativeScatter:
    def test_between_and_within_scatter_match_model(self):
        # 1e4 draws from the generative model the simulator uses
        cfg = SimConfig(n_speakers=2, duration=20.0, seed=13,
                        embedding_dim=4, psi=50.0)
        sim = simulate(cfg)
        rng = np.random.default_rng(99)
        n_speakers, per_speaker = 2000, 5
        y = rng.standard_normal((n_speakers, cfg.embedding_dim))
        draws = np.empty((n_speakers, per_speaker, cfg.embedding_dim))
        for s in range(n_speakers):
            noise = rng.standard_normal((per_speaker, cfg.embedding_dim))
            draws[s] = np.sqrt(sim.psi) * y[s] + noise
        means = draws.mean(axis=1)
        within = np.mean([np.cov(draws[s].T) for s in range(n_speakers)],
                         axis=0)
        between = np.cov(means.T) - within / per_speaker
        np.testing.assert_allclose(np.diag(within), 1.0, rtol=0.1)
        np.testing.assert_allclose(np.diag(between), 50.0, rtol=0.1)
        off = between - np.diag(np.diag(between))
        assert np.abs(off).max() < 0.1 * 50.0


class TestDownstreamSignal:
    def run_der(self, psi_value, seed):
        cfg = SimConfig(n_speakers=3, duration=90.0, seed=seed, psi=psi_value)
        sim = simulate(cfg)
        model = PldaModel.identity(sim.psi)
        result = diarize_recording(sim.track, sim.embeddings, model,
                                   PipelineConfig(apply_preprocess=False))
        return score(sim.reference, result.hypothesis, ScoreConfig()).der

    def test_informative_embeddings_beat_noise(self):
        seeds = range(10)
        informative = [self.run_der(100.0, s) for s in seeds]
        noise_only = [self.run_der(0.0, s) for s in seeds]
        assert np.mean(noise_only) > np.mean(informative) + 0.2
        better = sum(1 for a, b in zip(informative, noise_only) if b > a)
        assert better >= 8
