"""Diarization scoring: DER and JER against a reference annotation.

Speakers are matched by an exact assignment on overlapped duration; error
durations are then accumulated by an interval-boundary sweep over integer
milliseconds, so there is no frame quantization anywhere in the scorer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import Annotation, Timeline, Uem, ms_to_seconds, seconds_to_ms


@dataclass(frozen=True)
class ScoreConfig:
    collar: float = 0.25
    score_overlap: bool = True
    uem: Uem | None = None
    collar_in_jer: bool = False  # JER conventionally ignores the collar

    def __post_init__(self):
        if self.collar < 0:
            raise ValueError("collar must be >= 0")


@dataclass
class ScoreReport:
    """Duration components in seconds plus the derived rates.

    ``der`` and ``jer`` are None when undefined (no scored reference time
    or no reference speakers), which is distinct from a perfect 0. Speaker
    keys are (recording_id, speaker) pairs.
    """

    fa: float = 0.0
    miss: float = 0.0
    error: float = 0.0
    total: float = 0.0
    der: float | None = None
    per_speaker_jer: dict[tuple[str, str], float] = field(default_factory=dict)
    jer: float | None = None
    n_speakers: int = 0
    mapping: dict[tuple[str, str], str] = field(default_factory=dict)


def solve_overlap_assignment(overlap: np.ndarray) -> list[tuple[int, int]]:
    """Optimal one-to-one pairing maximizing total overlap.

    Zero-overlap pairs are left unmatched. Solved exactly with the
    rectangular assignment algorithm.
    """
    overlap = np.asarray(overlap, dtype=np.float64)
    if overlap.size == 0:
        return []
    rows, cols = linear_sum_assignment(-overlap)
    return [(int(r), int(c)) for r, c in zip(rows, cols) if overlap[r, c] > 0]


def _speaker_timelines(annotation: Annotation, recording_id: str,
                       region: Timeline | None) -> dict[str, Timeline]:
    out = {}
    for spk in annotation.speakers(recording_id):
        tl = annotation.speaker_timeline(recording_id, spk)
        if region is not None:
            tl = tl.intersect(region)
        if tl:
            out[spk] = tl
    return out


def _collar_timeline(ref: Annotation, recording_id: str, collar_ms: int) -> Timeline:
    """Exclusion zones of +/- collar around every reference turn boundary."""
    if collar_ms == 0:
        return Timeline(recording_id)
    zones = []
    for t in ref.for_recording(recording_id):
        zones.append((max(0, t.onset_ms - collar_ms), t.onset_ms + collar_ms))
        zones.append((max(0, t.offset_ms - collar_ms), t.offset_ms + collar_ms))
    return Timeline.from_intervals_ms(recording_id, zones)


def _overlap_regions(timelines: dict[str, Timeline], recording_id: str) -> Timeline:
    """Regions where two or more of the given speakers are active."""
    events: list[tuple[int, int]] = []
    for tl in timelines.values():
        for a, b in tl:
            events.append((a, 1))
            events.append((b, -1))
    events.sort()
    out = []
    depth = 0
    start = None
    for pos, delta in events:
        was = depth
        depth += delta
        if was < 2 <= depth:
            start = pos
        elif was >= 2 > depth and start is not None and pos > start:
            out.append((start, pos))
            start = None
    return Timeline.from_intervals_ms(recording_id, out)


def _restrict(timelines: dict[str, Timeline], region_subtract: Timeline) -> dict[str, Timeline]:
    out = {}
    for spk, tl in timelines.items():
        cut = tl.difference(region_subtract)
        if cut:
            out[spk] = cut
    return out


def _sweep_der(ref_tls: dict[str, Timeline], hyp_tls: dict[str, Timeline],
               mapping: dict[str, str]) -> tuple[int, int, int, int]:
    """Boundary sweep returning (fa, miss, error, total) in milliseconds."""
    boundaries = sorted({p for tl in list(ref_tls.values()) + list(hyp_tls.values())
                         for a, b in tl for p in (a, b)})
    fa_ms = miss_ms = err_ms = total_ms = 0
    for a, b in zip(boundaries, boundaries[1:]):
        length = b - a
        ref_active = [s for s, tl in ref_tls.items() if tl.covers_ms(a)]
        if not ref_active:
            hyp_n = sum(1 for tl in hyp_tls.values() if tl.covers_ms(a))
            fa_ms += hyp_n * length
            continue
        hyp_active = {s for s, tl in hyp_tls.items() if tl.covers_ms(a)}
        n_ref, n_hyp = len(ref_active), len(hyp_active)
        matched = sum(1 for s in ref_active if mapping.get(s) in hyp_active)
        total_ms += n_ref * length
        miss_ms += max(0, n_ref - n_hyp) * length
        fa_ms += max(0, n_hyp - n_ref) * length
        err_ms += (min(n_ref, n_hyp) - matched) * length
    return fa_ms, miss_ms, err_ms, total_ms


def optimal_mapping(ref: Annotation, hyp: Annotation,
                    uem: Uem | None = None) -> dict[tuple[str, str], str]:
    """Per-recording speaker pairing maximizing total overlapped duration."""
    mapping: dict[tuple[str, str], str] = {}
    for rec in sorted(set(ref.recordings()) | set(hyp.recordings())):
        region = uem.timeline_for(rec) if uem else None
        ref_tls = _speaker_timelines(ref, rec, region)
        hyp_tls = _speaker_timelines(hyp, rec, region)
        ref_spks = sorted(ref_tls)
        hyp_spks = sorted(hyp_tls)
        if not ref_spks or not hyp_spks:
            continue
        overlap = np.zeros((len(ref_spks), len(hyp_spks)))
        for i, r in enumerate(ref_spks):
            for j, h in enumerate(hyp_spks):
                overlap[i, j] = ref_tls[r].intersect(hyp_tls[h]).duration_ms
        for i, j in solve_overlap_assignment(overlap):
            mapping[(rec, ref_spks[i])] = hyp_spks[j]
    return mapping


def score(ref: Annotation, hyp: Annotation,
          config: ScoreConfig = ScoreConfig()) -> ScoreReport:
    """Compute DER and JER in one pass.

    DER excludes +/- collar around reference turn boundaries from all four
    duration components; overlapped reference speech counts once per active
    speaker unless ``score_overlap`` is off, in which case overlap regions
    are not scored at all. JER uses the same speaker mapping, by default
    without the collar.
    """
    collar_ms = seconds_to_ms(config.collar)
    mapping = optimal_mapping(ref, hyp, config.uem)
    report = ScoreReport(mapping=dict(mapping))
    fa_ms = miss_ms = err_ms = total_ms = 0
    speaker_jers: dict[tuple[str, str], float] = {}

    for rec in sorted(set(ref.recordings()) | set(hyp.recordings())):
        region = config.uem.timeline_for(rec) if config.uem else None
        ref_tls = _speaker_timelines(ref, rec, region)
        hyp_tls = _speaker_timelines(hyp, rec, region)
        rec_map = {r: h for (r_rec, r), h in mapping.items() if r_rec == rec}

        # DER sweep on the collar-excluded (and optionally overlap-excluded) view
        excluded = _collar_timeline(ref, rec, collar_ms)
        if region is not None:
            excluded = excluded.intersect(region)
        if not config.score_overlap:
            excluded = excluded.union(_overlap_regions(ref_tls, rec))
        ref_cut = _restrict(ref_tls, excluded)
        hyp_cut = _restrict(hyp_tls, excluded)
        fa, miss, err, total = _sweep_der(ref_cut, hyp_cut, rec_map)
        fa_ms += fa
        miss_ms += miss
        err_ms += err
        total_ms += total

        # JER per reference speaker
        if config.collar_in_jer:
            jref = _restrict(ref_tls, excluded)
            jhyp = _restrict(hyp_tls, excluded)
        else:
            jref, jhyp = ref_tls, hyp_tls
        for spk, ref_tl in sorted(jref.items()):
            hyp_spk = rec_map.get(spk)
            if hyp_spk is None or hyp_spk not in jhyp:
                speaker_jers[(rec, spk)] = 1.0
                continue
            hyp_tl = jhyp[hyp_spk]
            inter = ref_tl.intersect(hyp_tl).duration_ms
            union = ref_tl.union(hyp_tl).duration_ms
            speaker_jers[(rec, spk)] = (union - inter) / union

    report.fa = ms_to_seconds(fa_ms)
    report.miss = ms_to_seconds(miss_ms)
    report.error = ms_to_seconds(err_ms)
    report.total = ms_to_seconds(total_ms)
    report.der = (fa_ms + miss_ms + err_ms) / total_ms if total_ms > 0 else None
    report.per_speaker_jer = speaker_jers
    report.n_speakers = len(speaker_jers)
    report.jer = (sum(speaker_jers.values()) / len(speaker_jers)
                  if speaker_jers else None)
    return report


def der(ref: Annotation, hyp: Annotation,
        config: ScoreConfig = ScoreConfig()) -> ScoreReport:
    """DER-focused entry point (the report also carries JER fields)."""
    return score(ref, hyp, config)


def jer(ref: Annotation, hyp: Annotation,
        config: ScoreConfig = ScoreConfig()) -> ScoreReport:
    """JER-focused entry point (the report also carries DER fields)."""
    return score(ref, hyp, config)
