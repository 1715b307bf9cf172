"""Time-interval algebra, speaker turns, and RTTM/UEM file I/O.

All times are stored internally as integer milliseconds so that interval
arithmetic and the scorer are exact; the public API accepts and reports
seconds. Every container is immutable after construction and all operations
are pure functions, so objects can be shared freely across threads.
"""

from __future__ import annotations

import logging
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)

MS_PER_SECOND = 1000


def seconds_to_ms(seconds: float) -> int:
    """Quantize a time in seconds to the internal 1 ms grid."""
    return int(round(float(seconds) * MS_PER_SECOND))


def ms_to_seconds(ms: int) -> float:
    return ms / MS_PER_SECOND


def format_seconds(ms: int) -> str:
    """Render an internal time with exactly three decimal places."""
    return f"{ms / MS_PER_SECOND:.3f}"


class RttmParseError(ValueError):
    """Malformed RTTM/UEM input; carries the 1-based source line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True, order=True)
class Turn:
    """One speaker-homogeneous interval of a recording."""

    recording_id: str
    onset_ms: int
    duration_ms: int
    speaker: str

    def __post_init__(self):
        if self.onset_ms < 0:
            raise ValueError(f"turn onset must be >= 0, got {self.onset_ms} ms")
        if self.duration_ms <= 0:
            raise ValueError(f"turn duration must be > 0, got {self.duration_ms} ms")
        if not self.speaker:
            raise ValueError("turn speaker label must be non-empty")

    @classmethod
    def from_seconds(cls, recording_id: str, onset: float, duration: float,
                     speaker: str) -> Turn:
        return cls(recording_id, seconds_to_ms(onset), seconds_to_ms(duration), speaker)

    @property
    def offset_ms(self) -> int:
        return self.onset_ms + self.duration_ms

    @property
    def onset(self) -> float:
        return ms_to_seconds(self.onset_ms)

    @property
    def duration(self) -> float:
        return ms_to_seconds(self.duration_ms)

    @property
    def offset(self) -> float:
        return ms_to_seconds(self.offset_ms)


def _merge_intervals(intervals: Iterable[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    """Sort intervals and coalesce overlapping or abutting ones."""
    merged: list[list[int]] = []
    for onset, offset in sorted(intervals):
        if offset <= onset:
            raise ValueError(f"interval offset must exceed onset, got [{onset}, {offset})")
        if merged and onset <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], offset)
        else:
            merged.append([onset, offset])
    return tuple((a, b) for a, b in merged)


@dataclass(frozen=True)
class Timeline:
    """Disjoint, sorted set of [onset, offset) intervals on one recording."""

    recording_id: str
    intervals: tuple[tuple[int, int], ...] = ()

    @classmethod
    def from_intervals_ms(cls, recording_id: str,
                          intervals: Iterable[tuple[int, int]]) -> Timeline:
        return cls(recording_id, _merge_intervals(intervals))

    @classmethod
    def from_intervals(cls, recording_id: str,
                       intervals: Iterable[tuple[float, float]]) -> Timeline:
        """Build from (onset, offset) pairs in seconds."""
        return cls.from_intervals_ms(
            recording_id,
            ((seconds_to_ms(a), seconds_to_ms(b)) for a, b in intervals))

    def __post_init__(self):
        prev = None
        for onset, offset in self.intervals:
            if offset <= onset:
                raise ValueError(f"empty interval [{onset}, {offset})")
            if prev is not None and onset <= prev:
                raise ValueError("intervals must be disjoint and sorted")
            prev = offset

    def __bool__(self) -> bool:
        return bool(self.intervals)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self.intervals)

    @property
    def duration_ms(self) -> int:
        return sum(b - a for a, b in self.intervals)

    @property
    def duration(self) -> float:
        return ms_to_seconds(self.duration_ms)

    @property
    def span_ms(self) -> tuple[int, int] | None:
        """Smallest [onset, offset) covering the whole timeline."""
        if not self.intervals:
            return None
        return self.intervals[0][0], self.intervals[-1][1]

    def _check_same_recording(self, other: Timeline):
        if self.recording_id != other.recording_id:
            raise ValueError(
                f"recording mismatch: {self.recording_id!r} vs {other.recording_id!r}")

    def union(self, other: Timeline) -> Timeline:
        self._check_same_recording(other)
        return Timeline.from_intervals_ms(
            self.recording_id, list(self.intervals) + list(other.intervals))

    def intersect(self, other: Timeline) -> Timeline:
        self._check_same_recording(other)
        out: list[tuple[int, int]] = []
        i = j = 0
        a, b = self.intervals, other.intervals
        while i < len(a) and j < len(b):
            lo = max(a[i][0], b[j][0])
            hi = min(a[i][1], b[j][1])
            if lo < hi:
                out.append((lo, hi))
            if a[i][1] <= b[j][1]:
                i += 1
            else:
                j += 1
        return Timeline(self.recording_id, tuple(out))

    def difference(self, other: Timeline) -> Timeline:
        """Parts of this timeline not covered by ``other``."""
        self._check_same_recording(other)
        out: list[tuple[int, int]] = []
        j = 0
        b = other.intervals
        for lo, hi in self.intervals:
            cur = lo
            while j < len(b) and b[j][1] <= cur:
                j += 1
            k = j
            while k < len(b) and b[k][0] < hi:
                if b[k][0] > cur:
                    out.append((cur, b[k][0]))
                cur = max(cur, b[k][1])
                k += 1
            if cur < hi:
                out.append((cur, hi))
        return Timeline(self.recording_id, tuple(out))

    def gaps(self) -> Timeline:
        """Internal silences between consecutive intervals."""
        out = [(a[1], b[0]) for a, b in zip(self.intervals, self.intervals[1:])]
        return Timeline(self.recording_id, tuple(out))

    def covers_ms(self, t: int) -> bool:
        idx = bisect_right(self.intervals, (t, float("inf"))) - 1
        return idx >= 0 and self.intervals[idx][0] <= t < self.intervals[idx][1]


@dataclass(frozen=True)
class Annotation:
    """Speaker-attributed turns, kept sorted by (recording, onset).

    Turns of different speakers may overlap (cross-talk); turns of one
    speaker must not overlap each other.
    """

    turns: tuple[Turn, ...] = ()

    @classmethod
    def from_turns(cls, turns: Iterable[Turn]) -> Annotation:
        return cls(tuple(sorted(turns)))

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(sorted(self.turns)))
        last_offset: dict[tuple[str, str], int] = {}
        for t in self.turns:
            key = (t.recording_id, t.speaker)
            if key in last_offset and t.onset_ms < last_offset[key]:
                raise ValueError(
                    f"speaker {t.speaker!r} overlaps itself on recording "
                    f"{t.recording_id!r} near {format_seconds(t.onset_ms)} s")
            last_offset[key] = max(last_offset.get(key, 0), t.offset_ms)

    def __len__(self) -> int:
        return len(self.turns)

    def __iter__(self) -> Iterator[Turn]:
        return iter(self.turns)

    def recordings(self) -> tuple[str, ...]:
        return tuple(sorted({t.recording_id for t in self.turns}))

    def speakers(self, recording_id: str | None = None) -> tuple[str, ...]:
        return tuple(sorted({t.speaker for t in self.turns
                             if recording_id is None
                             or t.recording_id == recording_id}))

    def for_recording(self, recording_id: str) -> Annotation:
        return Annotation(tuple(t for t in self.turns
                                if t.recording_id == recording_id))

    def speaker_timeline(self, recording_id: str, speaker: str) -> Timeline:
        return Timeline.from_intervals_ms(
            recording_id,
            ((t.onset_ms, t.offset_ms) for t in self.turns
             if t.recording_id == recording_id and t.speaker == speaker))

    def speech_timeline(self, recording_id: str) -> Timeline:
        return Timeline.from_intervals_ms(
            recording_id,
            ((t.onset_ms, t.offset_ms) for t in self.turns
             if t.recording_id == recording_id))


@dataclass(frozen=True)
class Uem:
    """Scoring regions per recording. Immutable after construction."""

    regions: dict[str, Timeline] = field(default_factory=dict)

    def timeline_for(self, recording_id: str) -> Timeline | None:
        return self.regions.get(recording_id)

    def recordings(self) -> tuple[str, ...]:
        return tuple(sorted(self.regions))


def parse_rttm(text: str) -> Annotation:
    """Parse RTTM content into an Annotation.

    Only SPEAKER lines are consumed; other line types (SPKR-INFO etc.) are
    skipped with a warning. Field 4 is the onset, field 5 the duration and
    field 8 the speaker label. Errors report the 1-based line number.
    """
    turns = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if fields[0] != "SPEAKER":
            logger.warning("skipping RTTM line %d: unsupported type %r",
                           lineno, fields[0])
            continue
        if len(fields) < 9:
            raise RttmParseError(
                lineno, f"expected >= 9 fields, got {len(fields)}")
        try:
            onset = float(fields[3])
            duration = float(fields[4])
        except ValueError:
            raise RttmParseError(
                lineno,
                f"non-numeric onset/duration {fields[3]!r} {fields[4]!r}") from None
        try:
            turns.append(Turn.from_seconds(fields[1], onset, duration, fields[7]))
        except ValueError as exc:
            raise RttmParseError(lineno, str(exc)) from None
    return Annotation.from_turns(turns)


def write_rttm(annotation: Annotation) -> str:
    """Render an Annotation as RTTM text, times with exactly 3 decimals."""
    lines = []
    for t in annotation:
        lines.append(
            f"SPEAKER {t.recording_id} 1 {format_seconds(t.onset_ms)} "
            f"{format_seconds(t.duration_ms)} <NA> <NA> {t.speaker} <NA> <NA>\n")
    return "".join(lines)


def parse_uem(text: str) -> Uem:
    """Parse UEM lines ``<recording> 1 <onset> <offset>``."""
    per_rec: dict[str, list[tuple[int, int]]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 4:
            raise RttmParseError(lineno, f"expected 4 fields, got {len(fields)}")
        try:
            onset = seconds_to_ms(float(fields[2]))
            offset = seconds_to_ms(float(fields[3]))
        except ValueError:
            raise RttmParseError(
                lineno,
                f"non-numeric onset/offset {fields[2]!r} {fields[3]!r}") from None
        if offset <= onset:
            raise RttmParseError(lineno, "offset must exceed onset")
        per_rec.setdefault(fields[0], []).append((onset, offset))
    return Uem({rec: Timeline.from_intervals_ms(rec, ivs)
                for rec, ivs in per_rec.items()})


def write_uem(uem: Uem) -> str:
    lines = []
    for rec in uem.recordings():
        for onset, offset in uem.regions[rec]:
            lines.append(f"{rec} 1 {format_seconds(onset)} {format_seconds(offset)}\n")
    return "".join(lines)
