"""Agglomerative hierarchical clustering over a similarity matrix.

Greedy average-linkage merging with a stopping threshold. The reference
implementation is intentionally the naive O(n^3) scheme; ties in the best
linkage are broken by the lexicographically smallest index pair so results
are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AhcConfig:
    threshold: float = 0.0
    linkage: str = "average"
    min_clusters: int = 1
    max_clusters: int | None = None

    def __post_init__(self):
        if self.linkage != "average":
            raise ValueError(f"unsupported linkage {self.linkage!r}")
        if self.min_clusters < 1:
            raise ValueError("min_clusters must be >= 1")
        if self.max_clusters is not None and self.max_clusters < self.min_clusters:
            raise ValueError("max_clusters must be >= min_clusters")


@dataclass(frozen=True)
class ClusterAssignment:
    labels: tuple[int, ...]
    n_clusters: int

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(int(v) for v in self.labels))
        if set(self.labels) != set(range(self.n_clusters)):
            raise ValueError(
                f"labels must use every id in 0..{self.n_clusters - 1}")


def relabel_first_occurrence(raw_labels) -> ClusterAssignment:
    """Map arbitrary labels to 0..K-1 in order of first appearance."""
    mapping: dict = {}
    labels = []
    for v in raw_labels:
        if v not in mapping:
            mapping[v] = len(mapping)
        labels.append(mapping[v])
    return ClusterAssignment(tuple(labels), len(mapping))


def ahc_cluster(similarity: np.ndarray, config: AhcConfig) -> ClusterAssignment:
    """Merge the most similar cluster pair until the threshold stops it.

    Average linkage: sim(A, B) is the mean of all pairwise scores between
    members. Merging stops when the best linkage falls below
    ``config.threshold`` (unless ``max_clusters`` still forces merges) or
    when ``min_clusters`` is reached.
    """
    s = np.asarray(similarity, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] < 1:
        raise ValueError(f"similarity must be square, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("similarity must be finite")
    if not np.array_equal(s, s.T):
        raise ValueError("similarity must be symmetric")
    n = s.shape[0]
    if n == 1:
        return ClusterAssignment((0,), 1)

    linkage = s.copy()
    active = np.ones(n, dtype=bool)
    sizes = np.ones(n, dtype=np.int64)
    members: list[list[int]] = [[i] for i in range(n)]
    n_active = n
    masked = linkage.copy()
    inactive_fill = -np.inf
    np.fill_diagonal(masked, inactive_fill)
    masked[np.tril_indices(n)] = inactive_fill

    while n_active > config.min_clusters:
        flat = int(np.argmax(masked))
        i, j = divmod(flat, n)
        best = masked[i, j]
        if best == -np.inf:
            break
        force = config.max_clusters is not None and n_active > config.max_clusters
        if best < config.threshold and not force:
            break
        # average linkage via weighted mean of the two merged rows
        others = active.copy()
        others[i] = others[j] = False
        combined = (sizes[i] * linkage[i] + sizes[j] * linkage[j]) / (sizes[i] + sizes[j])
        linkage[i, others] = combined[others]
        linkage[others, i] = combined[others]
        sizes[i] += sizes[j]
        members[i].extend(members[j])
        active[j] = False
        n_active -= 1
        masked[j, :] = inactive_fill
        masked[:, j] = inactive_fill
        cols = np.flatnonzero(others)
        masked[i, cols[cols > i]] = linkage[i, cols[cols > i]]
        masked[cols[cols < i], i] = linkage[i, cols[cols < i]]

    raw = np.empty(n, dtype=np.int64)
    for root in np.flatnonzero(active):
        raw[members[root]] = root
    return relabel_first_occurrence(raw.tolist())
