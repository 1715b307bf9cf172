"""Subsegmentation of speech segments and binding of external embeddings.

Speech segments are sliced into fixed-length, fixed-stride windows; one
embedding vector per window is then read from a separately produced matrix
file.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import format_seconds, seconds_to_ms

Anchor = tuple[int, int]  # (onset_ms, duration_ms)


@dataclass(frozen=True)
class SubsegmentSpec:
    window: float = 1.5
    shift: float = 0.75
    min_subsegment: float = 0.5

    def __post_init__(self):
        if not 0 < self.shift <= self.window:
            raise ValueError("need 0 < shift <= window")
        if not 0 < self.min_subsegment <= self.window:
            raise ValueError("need 0 < min_subsegment <= window")


def make_subsegments(segments: Iterable[tuple[int, int]],
                     spec: SubsegmentSpec) -> list[Anchor]:
    """Slice segment spans (ms) into sliding-window anchors.

    Within a segment of duration D: full windows start at 0, shift, 2*shift,
    ... while they fit. A leftover tail shorter than ``min_subsegment`` is
    absorbed by extending the last window to the segment end; a longer tail
    becomes its own anchor. Segments no longer than one window yield a single
    anchor covering the whole segment.
    """
    window = seconds_to_ms(spec.window)
    shift = seconds_to_ms(spec.shift)
    min_sub = seconds_to_ms(spec.min_subsegment)
    anchors: list[Anchor] = []
    for onset, offset in segments:
        dur = offset - onset
        if dur <= 0:
            raise ValueError(f"empty segment [{onset}, {offset})")
        if dur <= window:
            anchors.append((onset, dur))
            continue
        starts = list(range(0, dur - window + 1, shift))
        spans = [[s, s + window] for s in starts]
        tail = dur - spans[-1][1]
        if tail > 0:
            if tail < min_sub:
                spans[-1][1] = dur
            else:
                spans.append([spans[-1][1], dur])
        anchors.extend((onset + a, b - a) for a, b in spans)
    return anchors


@dataclass(frozen=True)
class EmbeddingSet:
    """Anchors plus one embedding row per anchor."""

    recording_id: str
    anchors: tuple[Anchor, ...]
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError("embedding matrix must be 2-d")
        if vectors.shape[0] != len(self.anchors):
            raise ValueError(
                f"count mismatch {len(self.anchors)} vs {vectors.shape[0]}")
        bad = np.flatnonzero(~np.isfinite(vectors).all(axis=1))
        if bad.size:
            raise ValueError(f"non-finite embedding at row {int(bad[0])}")
        vectors.flags.writeable = False
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "anchors", tuple(self.anchors))

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def parse_embedding_matrix(text: str) -> np.ndarray:
    """Read a matrix file: header ``n d`` then n rows of d decimals."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty embedding file")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError(f"bad embedding header {lines[0]!r}")
    try:
        n, d = int(header[0]), int(header[1])
    except ValueError:
        raise ValueError(f"bad embedding header {lines[0]!r}") from None
    rows = lines[1:]
    if len(rows) != n:
        raise ValueError(f"header says {n} rows, file has {len(rows)}")
    matrix = np.empty((n, d), dtype=np.float64)
    for i, row in enumerate(rows):
        parts = row.split()
        if len(parts) != d:
            raise ValueError(f"row {i} has {len(parts)} values, expected {d}")
        matrix[i] = [float(v) for v in parts]
    return matrix


def load_embeddings(recording_id: str, anchors: Sequence[Anchor],
                    text: str) -> EmbeddingSet:
    """Bind a parsed embedding matrix to the given anchors.

    The row count must equal the anchor count; rows must be finite and of one
    common dimension.
    """
    matrix = parse_embedding_matrix(text)
    if matrix.shape[0] != len(anchors):
        raise ValueError(f"count mismatch {len(anchors)} vs {matrix.shape[0]}")
    return EmbeddingSet(recording_id, tuple(anchors), matrix)


def write_embedding_matrix(vectors: np.ndarray) -> str:
    vectors = np.asarray(vectors, dtype=np.float64)
    lines = [f"{vectors.shape[0]} {vectors.shape[1]}\n"]
    for row in vectors:
        lines.append(" ".join(f"{v:.17g}" for v in row) + "\n")
    return "".join(lines)


def write_anchors(recording_id: str, anchors: Sequence[Anchor]) -> str:
    """Sidecar format: one ``<recording> <onset> <duration>`` line per anchor."""
    return "".join(
        f"{recording_id} {format_seconds(on)} {format_seconds(dur)}\n"
        for on, dur in anchors)


def parse_anchors(text: str) -> dict[str, list[Anchor]]:
    out: dict[str, list[Anchor]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ValueError(f"line {lineno}: expected 3 fields, got {len(fields)}")
        try:
            onset = seconds_to_ms(float(fields[1]))
            dur = seconds_to_ms(float(fields[2]))
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric anchor times") from None
        out.setdefault(fields[0], []).append((onset, dur))
    return out
