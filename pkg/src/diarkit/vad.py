"""Speech-activity post-processing on frame-level posterior tracks.

The chain is: threshold the posteriors into speech frames, remove speech
chunks that are too short, then bridge short silences so that only long
silences start a new segment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Timeline, seconds_to_ms


@dataclass(frozen=True)
class PosteriorTrack:
    """Uniform frame grid of speech probabilities for one recording.

    Frame ``i`` covers ``[i * frame_step, (i + 1) * frame_step)``.
    """

    recording_id: str
    frame_step: float
    values: np.ndarray

    def __post_init__(self):
        if self.frame_step <= 0:
            raise ValueError(f"frame_step must be > 0, got {self.frame_step}")
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("posterior values must be a 1-d sequence")
        if values.size and (not np.all(np.isfinite(values))
                            or values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("posterior values must be finite and within [0, 1]")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.size)

    def frame_ms(self, index: int) -> int:
        """Millisecond position of frame boundary ``index``."""
        return seconds_to_ms(index * self.frame_step)


@dataclass(frozen=True)
class VadConfig:
    threshold: float = 0.5
    min_speech: float = 0.2
    max_intra_gap: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.min_speech < 0:
            raise ValueError(f"min_speech must be >= 0, got {self.min_speech}")
        if self.max_intra_gap < 0:
            raise ValueError(f"max_intra_gap must be >= 0, got {self.max_intra_gap}")


def threshold_posteriors(track: PosteriorTrack, threshold: float) -> Timeline:
    """Maximal runs of frames with posterior >= threshold, as a Timeline."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    mask = track.values >= threshold
    if not mask.any():
        return Timeline(track.recording_id)
    edges = np.diff(mask.astype(np.int8))
    starts = list(np.flatnonzero(edges == 1) + 1)
    ends = list(np.flatnonzero(edges == -1) + 1)
    if mask[0]:
        starts.insert(0, 0)
    if mask[-1]:
        ends.append(len(mask))
    intervals = [(track.frame_ms(a), track.frame_ms(b))
                 for a, b in zip(starts, ends)]
    return Timeline.from_intervals_ms(track.recording_id, intervals)


def smooth_speech(timeline: Timeline, min_speech: float) -> Timeline:
    """Drop speech runs strictly shorter than ``min_speech`` seconds."""
    floor_ms = seconds_to_ms(min_speech)
    kept = tuple((a, b) for a, b in timeline if b - a >= floor_ms)
    return Timeline(timeline.recording_id, kept)


def segment(timeline: Timeline, max_intra_gap: float) -> list[Timeline]:
    """Group speech runs into segments, splitting only at long silences.

    Consecutive runs whose gap is <= ``max_intra_gap`` seconds belong to one
    segment; a strictly longer gap starts a new one. Each returned Timeline
    holds the speech runs of its segment; the segment extent is its span.
    """
    gap_ms = seconds_to_ms(max_intra_gap)
    groups: list[list[tuple[int, int]]] = []
    for interval in timeline:
        if groups and interval[0] - groups[-1][-1][1] <= gap_ms:
            groups[-1].append(interval)
        else:
            groups.append([interval])
    return [Timeline(timeline.recording_id, tuple(g)) for g in groups]


def run_vad(track: PosteriorTrack, config: VadConfig) -> list[Timeline]:
    """Full post-processing chain: threshold, smooth, segment."""
    speech = threshold_posteriors(track, config.threshold)
    speech = smooth_speech(speech, config.min_speech)
    return segment(speech, config.max_intra_gap)


def parse_posteriors(text: str) -> PosteriorTrack:
    """Read a posterior file: header ``<recording> <frame_step>``, then one
    value per line."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty posterior file")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError(f"bad posterior header {lines[0]!r}")
    try:
        step = float(header[1])
        values = np.array([float(v) for v in lines[1:]], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"bad posterior value: {exc}") from None
    return PosteriorTrack(header[0], step, values)


def write_posteriors(track: PosteriorTrack) -> str:
    lines = [f"{track.recording_id} {track.frame_step:.17g}\n"]
    lines.extend(f"{v:.17g}\n" for v in track.values)
    return "".join(lines)
