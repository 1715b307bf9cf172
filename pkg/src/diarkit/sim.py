"""Synthetic conversations with ground truth for end-to-end testing.

Generates a single-speaker-at-a-time turn sequence, frame posteriors with
controllable noise, and per-subsegment embeddings drawn from the same
generative model the similarity scorer assumes: speaker vector y ~ N(0, I),
embedding ~ N(sqrt(psi) * y, I). Embeddings are therefore already in the
scoring space and need no further preprocessing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import Annotation, Turn
from .embeddings import Anchor, EmbeddingSet, SubsegmentSpec, make_subsegments
from .vad import PosteriorTrack, VadConfig, run_vad

_EMBEDDING_SALT = 0x5EED


@dataclass(frozen=True)
class SimConfig:
    n_speakers: int
    duration: float
    mean_turn: float = 3.0
    mean_pause: float = 0.4
    p_long_pause: float = 0.1
    embedding_dim: int = 32
    psi: float = 100.0           # scalar, broadcast over dimensions
    posterior_noise: float = 0.1
    seed: int = 0
    frame_step: float = 0.01

    def __post_init__(self):
        if self.n_speakers < 1:
            raise ValueError("n_speakers must be >= 1")
        if self.duration <= 0 or self.mean_turn <= 0 or self.mean_pause <= 0:
            raise ValueError("duration and mean durations must be > 0")
        if not 0.0 <= self.p_long_pause <= 1.0:
            raise ValueError("p_long_pause must be in [0, 1]")
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be >= 1")
        if self.psi < 0:
            raise ValueError("psi must be >= 0")
        if not 0.0 <= self.posterior_noise < 0.5:
            raise ValueError("posterior_noise must be in [0, 0.5)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.frame_step <= 0:
            raise ValueError("frame_step must be > 0")

    @property
    def psi_vector(self) -> np.ndarray:
        return np.full(self.embedding_dim, float(self.psi))

    @property
    def recording_id(self) -> str:
        return f"sim-{self.seed}"


@dataclass
class Simulation:
    """Ground truth plus derived inputs for one synthetic recording."""

    config: SimConfig
    recording_id: str
    reference: Annotation
    track: PosteriorTrack
    speaker_vectors: np.ndarray      # n_speakers x embedding_dim
    embeddings: EmbeddingSet
    anchor_speakers: list[str | None] = field(default_factory=list)

    @property
    def psi(self) -> np.ndarray:
        return self.config.psi_vector


_MIN_EVENT = 0.1  # shortest turn or pause, seconds


def _draw_turns(cfg: SimConfig, rng: np.random.Generator) -> Annotation:
    speakers = [f"spk{i:02d}" for i in range(cfg.n_speakers)]
    turns = []
    t = 0.0
    prev: str | None = None
    while t < cfg.duration:
        if cfg.n_speakers == 1:
            spk = speakers[0]
        else:
            options = [s for s in speakers if s != prev]
            spk = options[int(rng.integers(len(options)))]
        length = max(_MIN_EVENT, float(rng.exponential(cfg.mean_turn)))
        length = min(length, cfg.duration - t)
        if length < _MIN_EVENT:
            break
        turns.append(Turn.from_seconds(cfg.recording_id, t, length, spk))
        prev = spk
        t += length
        pause = float(rng.exponential(cfg.mean_pause))
        if rng.random() < cfg.p_long_pause:
            pause += 0.5  # force a segmentation-splitting silence
        t += max(_MIN_EVENT, pause)
    return Annotation.from_turns(turns)


def _draw_posteriors(cfg: SimConfig, reference: Annotation,
                     rng: np.random.Generator) -> PosteriorTrack:
    n_frames = int(round(cfg.duration / cfg.frame_step))
    speech = reference.speech_timeline(cfg.recording_id)
    from .core import seconds_to_ms

    mid = np.array([seconds_to_ms((i + 0.5) * cfg.frame_step)
                    for i in range(n_frames)])
    is_speech = np.array([speech.covers_ms(int(m)) for m in mid])
    noise = cfg.posterior_noise
    jitter = rng.random(n_frames)
    values = np.where(is_speech, 1.0 - 2.0 * noise * jitter, 2.0 * noise * jitter)
    return PosteriorTrack(cfg.recording_id, cfg.frame_step, values)


def _dominant_speaker(reference: Annotation, recording_id: str,
                      anchor: Anchor) -> str | None:
    from .core import Timeline

    window = Timeline.from_intervals_ms(recording_id,
                                        [(anchor[0], anchor[0] + anchor[1])])
    best: tuple[int, str] | None = None
    for spk in reference.speakers(recording_id):
        overlap = reference.speaker_timeline(recording_id, spk).intersect(window)
        dur = overlap.duration_ms
        if dur > 0 and (best is None or dur > best[0]
                        or (dur == best[0] and spk < best[1])):
            best = (dur, spk)
    return best[1] if best else None


def _anchor_rng(seed: int, anchor: Anchor) -> np.random.Generator:
    return np.random.default_rng([seed, _EMBEDDING_SALT, anchor[0], anchor[1]])


def embeddings_for_anchors(sim: Simulation,
                           anchors: list[Anchor]) -> tuple[EmbeddingSet, list[str | None]]:
    """Draw embeddings for arbitrary anchors against this simulation's truth.

    Each anchor is attributed to the reference speaker with the largest
    overlap and gets an independent draw keyed on (seed, anchor), so sweeps
    that re-run VAD with different settings stay deterministic.
    """
    cfg = sim.config
    sqrt_psi = np.sqrt(sim.psi)
    vectors = np.empty((len(anchors), cfg.embedding_dim))
    labels: list[str | None] = []
    for i, anchor in enumerate(anchors):
        spk = _dominant_speaker(sim.reference, sim.recording_id, anchor)
        labels.append(spk)
        rng = _anchor_rng(cfg.seed, anchor)
        noise = rng.standard_normal(cfg.embedding_dim)
        if spk is None:
            vectors[i] = noise
        else:
            y = sim.speaker_vectors[int(spk.removeprefix("spk"))]
            vectors[i] = sqrt_psi * y + noise
    return EmbeddingSet(sim.recording_id, tuple(anchors), vectors), labels


def simulate(cfg: SimConfig) -> Simulation:
    """Generate one synthetic recording; deterministic for a fixed seed.

    Anchors are produced by running the default VAD post-processing and
    subsegmentation on the generated posteriors, so a pipeline run with
    default settings sees exactly one embedding per anchor it derives.
    """
    rng = np.random.default_rng(cfg.seed)
    reference = _draw_turns(cfg, rng)
    track = _draw_posteriors(cfg, reference, rng)
    speaker_vectors = rng.standard_normal((cfg.n_speakers, cfg.embedding_dim))
    sim = Simulation(config=cfg, recording_id=cfg.recording_id,
                     reference=reference, track=track,
                     speaker_vectors=speaker_vectors,
                     embeddings=EmbeddingSet(cfg.recording_id, (),
                                             np.zeros((0, cfg.embedding_dim))))
    segments = run_vad(track, VadConfig())
    anchors = make_subsegments([tl.span_ms for tl in segments if tl.span_ms],
                               SubsegmentSpec())
    sim.embeddings, sim.anchor_speakers = embeddings_for_anchors(sim, anchors)
    return sim


def save_world(sim: Simulation) -> str:
    """Serialize everything needed to re-derive embeddings for new anchors."""
    payload = {
        "config": {
            "n_speakers": sim.config.n_speakers,
            "duration": sim.config.duration,
            "mean_turn": sim.config.mean_turn,
            "mean_pause": sim.config.mean_pause,
            "p_long_pause": sim.config.p_long_pause,
            "embedding_dim": sim.config.embedding_dim,
            "psi": sim.config.psi,
            "posterior_noise": sim.config.posterior_noise,
            "seed": sim.config.seed,
            "frame_step": sim.config.frame_step,
        },
        "recording_id": sim.recording_id,
        "turns": [[t.onset_ms, t.duration_ms, t.speaker]
                  for t in sim.reference],
        "speaker_vectors": sim.speaker_vectors.tolist(),
        "posterior_values": sim.track.values.tolist(),
    }
    return json.dumps(payload)


def load_world(text: str) -> Simulation:
    payload = json.loads(text)
    cfg = SimConfig(**payload["config"])
    rec = payload["recording_id"]
    reference = Annotation.from_turns(
        Turn(rec, onset, dur, spk) for onset, dur, spk in payload["turns"])
    track = PosteriorTrack(rec, cfg.frame_step,
                           np.array(payload["posterior_values"]))
    sim = Simulation(config=cfg, recording_id=rec, reference=reference,
                     track=track,
                     speaker_vectors=np.array(payload["speaker_vectors"]),
                     embeddings=EmbeddingSet(rec, (),
                                             np.zeros((0, cfg.embedding_dim))))
    segments = run_vad(track, VadConfig())
    anchors = make_subsegments([tl.span_ms for tl in segments if tl.span_ms],
                               SubsegmentSpec())
    sim.embeddings, sim.anchor_speakers = embeddings_for_anchors(sim, anchors)
    return sim
