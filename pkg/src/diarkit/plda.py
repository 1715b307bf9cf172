"""Embedding preprocessing and two-covariance PLDA similarity scoring.

The model keeps a centering mean, a discriminative projection, and a
transform that whitens the within-speaker covariance while diagonalizing the
between-speaker covariance to ``psi``. In that space the log-likelihood
ratio of the same-speaker vs different-speaker hypotheses factorizes over
dimensions and has a closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embeddings import Anchor, EmbeddingSet


@dataclass(frozen=True)
class PldaModel:
    """Preprocessing chain parameters plus between-speaker variances.

    ``preprocess`` maps a raw embedding x to
    ``diag_transform @ lengthnorm(proj.T @ (x - mu))`` where lengthnorm
    scales to norm sqrt(p). In the resulting space the within-speaker
    covariance is the identity and the between-speaker covariance is
    ``diag(psi)``.
    """

    mu: np.ndarray
    proj: np.ndarray
    diag_transform: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        proj = np.asarray(self.proj, dtype=np.float64)
        w = np.asarray(self.diag_transform, dtype=np.float64)
        psi = np.asarray(self.psi, dtype=np.float64)
        if mu.ndim != 1 or proj.ndim != 2 or w.ndim != 2 or psi.ndim != 1:
            raise ValueError("bad model array ranks")
        d, p = proj.shape
        if mu.shape[0] != d:
            raise ValueError(f"mu has dim {mu.shape[0]}, proj expects {d}")
        if p > d:
            raise ValueError(f"projection cannot raise dimension ({d} -> {p})")
        if w.shape != (p, p):
            raise ValueError(f"diag_transform must be {p}x{p}, got {w.shape}")
        if psi.shape[0] != p:
            raise ValueError(f"psi has dim {psi.shape[0]}, expected {p}")
        if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(proj)) \
                or not np.all(np.isfinite(w)) or not np.all(np.isfinite(psi)):
            raise ValueError("model arrays must be finite")
        if np.any(psi < 0):
            raise ValueError("psi must be non-negative")
        if np.linalg.matrix_rank(proj) < p:
            raise ValueError("proj must have full column rank")
        if np.linalg.matrix_rank(w) < p:
            raise ValueError("diag_transform is singular")
        for name, arr in (("mu", mu), ("proj", proj),
                          ("diag_transform", w), ("psi", psi)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def identity(cls, psi: np.ndarray) -> PldaModel:
        """Model whose preprocessing is length normalization only."""
        psi = np.asarray(psi, dtype=np.float64)
        p = psi.shape[0]
        return cls(np.zeros(p), np.eye(p), np.eye(p), psi)

    @property
    def dim(self) -> int:
        return self.proj.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.proj.shape[1]


@dataclass(frozen=True)
class PreprocessedSet:
    """Embeddings mapped to the scoring space, anchors carried through."""

    recording_id: str
    anchors: tuple[Anchor, ...]
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(self.anchors):
            raise ValueError("vector/anchor count mismatch")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("preprocessed vectors must be finite")
        vectors.flags.writeable = False
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "anchors", tuple(self.anchors))

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def length_normalize(rows: np.ndarray) -> np.ndarray:
    """Scale each row to norm sqrt(p). Zero rows are rejected by index."""
    rows = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"zero-norm vector at row {int(zero[0])}")
    return rows * (np.sqrt(rows.shape[1]) / norms)[:, None]


def preprocess(embeddings: EmbeddingSet, model: PldaModel) -> PreprocessedSet:
    """Center, project, length-normalize, and diagonalize embeddings."""
    if embeddings.dim != model.dim:
        raise ValueError(
            f"embedding dim {embeddings.dim} does not match model dim {model.dim}")
    projected = (embeddings.vectors - model.mu) @ model.proj
    normed = length_normalize(projected)
    return PreprocessedSet(embeddings.recording_id, embeddings.anchors,
                           normed @ model.diag_transform.T)


def _llr_coefficients(psi: np.ndarray):
    """Per-dimension constants of the closed-form pairwise LLR.

    With a = psi + 1 and b = 2*psi + 1, the same-speaker hypothesis has a
    2x2 per-dimension covariance [[a, psi], [psi, a]] (det b) and the
    different-speaker hypothesis [[a, 0], [0, a]]; the log-density
    difference reduces to const + sq_coef*(u^2 + v^2) + cross_coef*u*v.
    """
    a = psi + 1.0
    b = 2.0 * psi + 1.0
    const = 0.5 * (2.0 * np.log(a) - np.log(b))
    sq_coef = 0.5 * (1.0 / a - a / b)
    cross_coef = psi / b
    return const, sq_coef, cross_coef


def llr_pair(u: np.ndarray, v: np.ndarray, psi: np.ndarray) -> float:
    """Same-vs-different speaker log-likelihood ratio for one pair."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ValueError("inputs must be finite")
    const, sq_coef, cross_coef = _llr_coefficients(psi)
    return float(np.sum(const + sq_coef * (u * u + v * v) + cross_coef * (u * v)))


def similarity_matrix(preprocessed: PreprocessedSet, model: PldaModel) -> np.ndarray:
    """Dense n x n matrix of pairwise LLR scores (symmetric; diagonal is the
    self-score and is ignored by clustering)."""
    x = preprocessed.vectors
    if x.shape[1] != model.latent_dim:
        raise ValueError(
            f"vectors have dim {x.shape[1]}, psi expects {model.latent_dim}")
    const, sq_coef, cross_coef = _llr_coefficients(model.psi)
    sq = x * x
    out = np.empty((x.shape[0], x.shape[0]), dtype=np.float64)
    for i in range(x.shape[0]):
        terms = const + sq_coef * (sq[i] + sq) + cross_coef * (x[i] * x)
        out[i] = terms.sum(axis=1)
    return out


_MODEL_HEADER = "diarkit-plda-v1"


def write_plda_model(model: PldaModel) -> str:
    """Serialize to the documented structured-text layout."""
    def fmt(row) -> str:
        return " ".join(f"{v:.17g}" for v in np.atleast_1d(row))

    lines = [f"{_MODEL_HEADER}\n",
             f"d {model.dim}\n",
             f"p {model.latent_dim}\n",
             "mu\n", fmt(model.mu) + "\n",
             "proj\n"]
    lines.extend(fmt(r) + "\n" for r in model.proj)
    lines.append("diag_transform\n")
    lines.extend(fmt(r) + "\n" for r in model.diag_transform)
    lines.append("psi\n")
    lines.append(fmt(model.psi) + "\n")
    return "".join(lines)


def load_plda_model(text: str) -> PldaModel:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != _MODEL_HEADER:
        raise ValueError(f"not a PLDA model file (expected {_MODEL_HEADER!r} header)")
    try:
        pos = 1

        def take() -> str:
            nonlocal pos
            row = lines[pos]
            pos += 1
            return row

        def expect(tag: str):
            row = take()
            if row != tag:
                raise ValueError(f"expected {tag!r}, found {row!r}")

        def ints(tag: str) -> int:
            name, value = take().split()
            if name != tag:
                raise ValueError(f"expected {tag!r}, found {name!r}")
            return int(value)

        def row_of(n: int) -> np.ndarray:
            values = np.array([float(v) for v in take().split()], dtype=np.float64)
            if values.shape[0] != n:
                raise ValueError(f"expected {n} values, got {values.shape[0]}")
            return values

        d = ints("d")
        p = ints("p")
        expect("mu")
        mu = row_of(d)
        expect("proj")
        proj = np.stack([row_of(p) for _ in range(d)])
        expect("diag_transform")
        w = np.stack([row_of(p) for _ in range(p)])
        expect("psi")
        psi = row_of(p)
    except IndexError:
        raise ValueError("truncated PLDA model file") from None
    return PldaModel(mu, proj, w, psi)


def fit_plda_model(vectors: np.ndarray, labels: Sequence, latent_dim: int) -> PldaModel:
    """Estimate a model from labeled vectors via within/between scatter.

    Intended for synthetic data in tests and demos, not as a production
    trainer. The projection keeps the ``latent_dim`` most discriminative
    directions; the diagonalizing transform and psi are then fit in the
    length-normalized projected space.
    """
    import scipy.linalg

    x = np.asarray(vectors, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if x.ndim != 2 or x.shape[0] != labels.shape[0]:
        raise ValueError("vectors/labels mismatch")
    if classes.size < 2:
        raise ValueError("need at least two classes")
    if not 1 <= latent_dim <= x.shape[1]:
        raise ValueError("latent_dim out of range")

    def scatters(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grand = data.mean(axis=0)
        dim = data.shape[1]
        within = np.zeros((dim, dim))
        between = np.zeros((dim, dim))
        for c in classes:
            rows = data[labels == c]
            center = rows.mean(axis=0)
            delta = rows - center
            within += delta.T @ delta
            offset = center - grand
            between += rows.shape[0] * np.outer(offset, offset)
        within /= max(data.shape[0] - classes.size, 1)
        between /= max(classes.size - 1, 1)
        return within, between

    mu = x.mean(axis=0)
    within, between = scatters(x - mu)
    # generalized eigenproblem for the discriminative directions
    reg = 1e-9 * np.trace(within) / x.shape[1] * np.eye(x.shape[1])
    evals, evecs = scipy.linalg.eigh(between, within + reg)
    proj = evecs[:, np.argsort(evals)[::-1][:latent_dim]]

    normed = length_normalize((x - mu) @ proj)
    within_p, between_p = scatters(normed)
    wvals, wvecs = np.linalg.eigh(within_p)
    wvals = np.maximum(wvals, 1e-12)
    whiten = wvecs / np.sqrt(wvals)  # columns scaled: whiten.T @ W @ whiten = I
    bvals, bvecs = np.linalg.eigh(whiten.T @ between_p @ whiten)
    order = np.argsort(bvals)[::-1]
    transform = (whiten @ bvecs[:, order]).T
    psi = np.maximum(bvals[order], 0.0)
    return PldaModel(mu, proj, transform, psi)
