"""Variational Bayes HMM refinement of an initial subsegment clustering.

Hidden states are speakers; the state sequence follows a sticky transition
model (probability ``loop_p`` of staying, otherwise a draw from the speaker
prior ``pi``). Each speaker has a latent vector with a standard-normal prior;
an observation assigned to speaker s is normal with mean ``sqrt(psi) * y_s``
and identity covariance. Inference alternates closed-form updates of the
speaker-vector posteriors, a scaled forward-backward pass for the state
responsibilities, and a prior update, with an evidence lower bound tracked
every iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ahc import ClusterAssignment, relabel_first_occurrence
from .plda import PreprocessedSet

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class VbhmmConfig:
    fa: float = 0.3            # acoustic log-likelihood scale
    fb: float = 17.0           # speaker-prior (regularization) scale
    loop_p: float = 0.99       # self-transition probability
    max_iters: int = 40
    elbo_eps: float = 1e-6
    min_occupancy: float = 1e-3  # drop speakers whose total responsibility falls below

    def __post_init__(self):
        if self.fa <= 0 or self.fb <= 0:
            raise ValueError("fa and fb must be > 0")
        if not 0.0 < self.loop_p < 1.0:
            raise ValueError("loop_p must be inside (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.elbo_eps < 0:
            raise ValueError("elbo_eps must be >= 0")
        if self.min_occupancy < 0:
            raise ValueError("min_occupancy must be >= 0")


@dataclass
class VbhmmState:
    """Posterior quantities of the final iteration plus the ELBO trace."""

    gamma: np.ndarray          # n x S responsibilities, rows sum to 1
    alpha: np.ndarray          # S x p posterior means of speaker vectors
    precision: np.ndarray      # S x p diagonal posterior precisions, >= 1
    pi: np.ndarray             # speaker priors, sums to 1
    elbo_trace: list[float] = field(default_factory=list)
    n_iters: int = 0


def _transition_matrix(pi: np.ndarray, loop_p: float) -> np.ndarray:
    return loop_p * np.eye(pi.shape[0]) + (1.0 - loop_p) * pi[None, :]


def _forward_backward(log_emission: np.ndarray, pi: np.ndarray, loop_p: float):
    """Scaled forward-backward pass.

    Returns responsibilities, summed pairwise state marginals, and the log
    normalizer of the emission-weighted chain. Emissions are rescaled per
    timestep by their maximum so the recursion never underflows; the removed
    factors are added back to the log normalizer.
    """
    n, n_states = log_emission.shape
    shift = log_emission.max(axis=1)
    emission = np.exp(log_emission - shift[:, None])
    a = _transition_matrix(pi, loop_p)

    forward = np.empty((n, n_states))
    scale = np.empty(n)
    forward[0] = pi * emission[0]
    scale[0] = forward[0].sum()
    forward[0] /= scale[0]
    for t in range(1, n):
        forward[t] = (forward[t - 1] @ a) * emission[t]
        scale[t] = forward[t].sum()
        forward[t] /= scale[t]

    backward = np.empty((n, n_states))
    backward[-1] = 1.0
    for t in range(n - 2, -1, -1):
        backward[t] = (a @ (emission[t + 1] * backward[t + 1])) / scale[t + 1]

    gamma = forward * backward
    if n > 1:
        weighted = emission[1:] * backward[1:] / scale[1:, None]
        xi_sum = (forward[:-1].T @ weighted) * a
    else:
        xi_sum = np.zeros((n_states, n_states))
    log_norm = float(np.log(scale).sum() + shift.sum())
    return gamma, xi_sum, log_norm


def _update_pi(pi: np.ndarray, gamma0: np.ndarray, xi_sum: np.ndarray,
               loop_p: float) -> np.ndarray:
    """Minorize-maximize step for the speaker prior.

    Self-loop transitions are a mixture of the sticky term and a prior draw;
    only the prior-draw share of their expected count (plus all cross-speaker
    jumps and the initial state) feeds the updated occupancies.
    """
    stay = np.diag(xi_sum)
    jumps_in = xi_sum.sum(axis=0) - stay
    draw_share = (1.0 - loop_p) * pi / (loop_p + (1.0 - loop_p) * pi)
    weights = gamma0 + jumps_in + stay * draw_share
    total = weights.sum()
    if total <= 0:
        return pi
    return weights / total


def vb_resegment(preprocessed: PreprocessedSet, psi: np.ndarray,
                 init: ClusterAssignment,
                 config: VbhmmConfig = VbhmmConfig()) -> tuple[ClusterAssignment, VbhmmState]:
    """Refine an initial clustering of temporally ordered subsegments.

    Returns the refined assignment (argmax responsibilities, ids renumbered
    by first appearance) and the terminal state including the ELBO trace.
    Speakers whose total responsibility drops below ``config.min_occupancy``
    are removed and never reintroduced.
    """
    x = preprocessed.vectors
    psi = np.asarray(psi, dtype=np.float64)
    if x.shape[0] == 0:
        raise ValueError("no subsegments to resegment")
    if psi.shape != (x.shape[1],):
        raise ValueError(f"psi must have dim {x.shape[1]}, got {psi.shape}")
    if np.any(psi < 0):
        raise ValueError("psi must be non-negative")
    if init.n_clusters < 1:
        raise ValueError("initial assignment needs at least one cluster")
    if len(init.labels) != x.shape[0]:
        raise ValueError(
            f"{len(init.labels)} initial labels for {x.shape[0]} subsegments")

    n, p = x.shape
    n_states = init.n_clusters
    sqrt_psi = np.sqrt(psi)
    ratio = config.fa / config.fb
    emission_const = -0.5 * (p * _LOG_2PI + np.einsum("ij,ij->i", x, x))

    if n_states == 1:
        gamma = np.ones((n, 1))
    else:
        gamma = np.full((n, n_states), 0.1 / (n_states - 1))
        gamma[np.arange(n), np.array(init.labels)] = 0.9
    pi = np.full(n_states, 1.0 / n_states)
    alpha = np.zeros((n_states, p))
    precision = np.ones((n_states, p))
    trace: list[float] = []
    iterations = 0

    for _ in range(config.max_iters):
        iterations += 1
        # speaker-vector posteriors given current responsibilities
        occupancy = gamma.sum(axis=0)
        precision = 1.0 + ratio * occupancy[:, None] * psi[None, :]
        alpha = ratio / precision * sqrt_psi[None, :] * (gamma.T @ x)

        # expected emission log-likelihood per (subsegment, speaker)
        log_emission = config.fa * (
            x @ (sqrt_psi[None, :] * alpha).T
            - 0.5 * ((alpha * alpha + 1.0 / precision) * psi[None, :]).sum(axis=1)[None, :]
            + emission_const[:, None])

        gamma, xi_sum, log_norm = _forward_backward(log_emission, pi, config.loop_p)
        row_sums = gamma.sum(axis=1)
        if not np.allclose(row_sums, 1.0, atol=1e-9):
            raise RuntimeError("responsibilities lost normalization")

        kl = 0.5 * np.sum(alpha * alpha + 1.0 / precision - 1.0 + np.log(precision))
        elbo = log_norm - config.fb * kl
        if not np.isfinite(elbo):
            raise RuntimeError(
                "non-finite evidence bound: forward-backward underflow")
        trace.append(elbo)
        if len(trace) > 1 and trace[-1] - trace[-2] < config.elbo_eps:
            break

        pi = _update_pi(pi, gamma[0], xi_sum, config.loop_p)

        if n_states > 1:
            occupancy = gamma.sum(axis=0)
            keep = occupancy >= config.min_occupancy
            if not keep.any():
                keep[int(np.argmax(occupancy))] = True
            if not keep.all():
                gamma = gamma[:, keep]
                gamma /= gamma.sum(axis=1, keepdims=True)
                pi = pi[keep]
                pi /= pi.sum()
                alpha = alpha[keep]
                precision = precision[keep]
                n_states = int(keep.sum())

    assignment = relabel_first_occurrence(np.argmax(gamma, axis=1).tolist())
    state = VbhmmState(gamma=gamma, alpha=alpha, precision=precision, pi=pi,
                       elbo_trace=trace, n_iters=iterations)
    return assignment, state
