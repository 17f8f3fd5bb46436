"""
Left-right (Bakis) hidden Markov models with Gaussian mixture emissions.

Observations are N-dimensional log-odds vectors sampled from a semantic
grid; every state emits through a diagonal-covariance Gaussian mixture in
log-odds space (logit-normal probabilities). All recursions run in the log
domain.

This module contains:

- GmmParams / emission_logpdf: mixture emission densities
- PropertyModel / make_bakis: one HMM with a topology mask
- forward_backward, viterbi: inference
- baum_welch, init_emissions: unsupervised training and its initialization
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp
from sklearn.cluster import KMeans

from .exceptions import (
    DimensionError,
    EmptySequence,
    InvalidParams,
    NumericalFailure,
)

logger = logging.getLogger(__name__)

VAR_FLOOR = 1e-4
INIT_VAR = 0.1
REPRESENTATIONS = ("cellwise", "clustered", "pointcloud")
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class ObservationSequence:
    """
    Ordered log-odds vectors sampled along a trajectory.

    Parameters
    ----------
    frames : ndarray, shape (T, N)
        One N-dimensional log-odds vector per frame
    source : str
        Representation the frames were sampled from
        (cellwise, clustered or pointcloud)
    """

    frames: np.ndarray
    source: str = "cellwise"

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=float)
        if frames.size == 0:
            width = frames.shape[-1] if frames.ndim == 2 else 0
            frames = frames.reshape(0, width)
        if frames.ndim == 1:
            frames = frames[:, None]
        if frames.ndim != 2:
            raise DimensionError(
                f"frames must be a (T, N) array, got shape {frames.shape}"
            )
        if len(frames) and frames.shape[1] < 1:
            raise DimensionError("frames need at least one dimension")
        if not np.all(np.isfinite(frames)):
            raise InvalidParams("observation frames must be finite")
        if self.source not in REPRESENTATIONS:
            raise InvalidParams(
                f"unknown representation {self.source!r}; "
                f"expected one of {REPRESENTATIONS}"
            )
        self.frames = frames

    def __len__(self):
        return len(self.frames)

    @property
    def dimension(self) -> int:
        return self.frames.shape[1]


@dataclass
class GmmParams:
    """
    Diagonal-covariance Gaussian mixture.

    Parameters
    ----------
    weights : ndarray, shape (K,)
        Mixture weights summing to one
    means : ndarray, shape (K, N)
        Component means in log-odds units
    variances : ndarray, shape (K, N)
        Positive per-dimension component variances
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.variances = np.atleast_2d(np.asarray(self.variances, dtype=float))
        k = len(self.weights)
        if (
            self.means.shape[0] != k
            or self.variances.shape != self.means.shape
        ):
            raise DimensionError(
                f"inconsistent mixture shapes: weights {self.weights.shape}, "
                f"means {self.means.shape}, variances {self.variances.shape}"
            )
        if not all(
            np.all(np.isfinite(a))
            for a in (self.weights, self.means, self.variances)
        ):
            raise InvalidParams("mixture parameters must be finite")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise InvalidParams(
                f"mixture weights must be >= 0 and sum to 1, "
                f"got {self.weights.tolist()}"
            )
        if np.any(self.variances <= 0):
            raise InvalidParams("mixture variances must be positive")

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def n_features(self) -> int:
        return self.means.shape[1]

    def component_logpdf(self, frames: np.ndarray) -> np.ndarray:
        """Weighted log-densities of every component, shape (T, K)."""
        frames = np.asarray(frames, dtype=float).reshape(-1, self.n_features)
        diff = frames[:, None, :] - self.means[None, :, :]
        quad = (diff * diff / self.variances[None]).sum(axis=2)
        norm = np.log(self.variances).sum(axis=1) + self.n_features * _LOG_2PI
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        return log_w[None, :] - 0.5 * (quad + norm[None, :])

    def logpdf(self, frames: np.ndarray) -> np.ndarray:
        """Mixture log-density of each frame, shape (T,)."""
        return logsumexp(self.component_logpdf(frames), axis=1)

    def copy(self) -> "GmmParams":
        return GmmParams(
            self.weights.copy(), self.means.copy(), self.variances.copy()
        )


def emission_logpdf(gmm: GmmParams, frame) -> float:
    """
    Log-density of one N-dimensional frame under a mixture.

    Raises
    ------
    DimensionError
        If the frame dimension differs from the mixture's
    """
    frame = np.asarray(frame, dtype=float).ravel()
    if frame.size != gmm.n_features:
        raise DimensionError(
            f"frame has {frame.size} dimensions, mixture has "
            f"{gmm.n_features}"
        )
    return float(gmm.logpdf(frame[None, :])[0])


@dataclass
class PropertyModel:
    """
    One hidden Markov model ``(S, O, A, Phi, Pi)``.

    Parameters
    ----------
    transition : ndarray, shape (S, S)
        Row-stochastic transition matrix A
    start : ndarray, shape (S,)
        Start distribution Pi
    emissions : list of GmmParams
        One emission mixture per state
    mask : ndarray of bool, shape (S, S)
        Allowed transitions; A is exactly 0 wherever the mask forbids
    """

    transition: np.ndarray
    start: np.ndarray
    emissions: list[GmmParams]
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.transition = np.atleast_2d(np.array(self.transition, dtype=float))
        self.start = np.atleast_1d(np.asarray(self.start, dtype=float))
        s = len(self.start)
        if self.mask is None:
            self.mask = self.transition > 0
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.transition.shape != (s, s) or self.mask.shape != (s, s):
            raise DimensionError(
                f"transition {self.transition.shape} and mask "
                f"{self.mask.shape} must be ({s}, {s})"
            )
        if len(self.emissions) != s:
            raise DimensionError(
                f"{len(self.emissions)} emission mixtures for {s} states"
            )
        if len({g.n_features for g in self.emissions}) != 1:
            raise DimensionError("all states must share the frame dimension")
        self.transition[~self.mask] = 0.0
        rows = self.transition.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-9):
            raise InvalidParams(
                f"transition rows must sum to 1, got {rows.tolist()}"
            )
        if abs(self.start.sum() - 1.0) > 1e-9 or np.any(self.start < 0):
            raise InvalidParams(
                f"start distribution must sum to 1, got {self.start.tolist()}"
            )

    @property
    def num_states(self) -> int:
        return len(self.start)

    @property
    def n_features(self) -> int:
        return self.emissions[0].n_features

    def emission_matrix(self, frames: np.ndarray) -> np.ndarray:
        """Log-density of every frame under every state, shape (T, S)."""
        frames = _as_frames(frames, self.n_features)
        return np.stack([g.logpdf(frames) for g in self.emissions], axis=1)

    def copy(self) -> "PropertyModel":
        return PropertyModel(
            self.transition.copy(),
            self.start.copy(),
            [g.copy() for g in self.emissions],
            self.mask.copy(),
        )

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "mask": self.mask.tolist(),
            "transition": _encode(self.transition),
            "start": _encode(self.start),
            "emissions": [
                {
                    "weights": _encode(g.weights),
                    "means": _encode(g.means),
                    "variances": _encode(g.variances),
                }
                for g in self.emissions
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PropertyModel":
        return cls(
            transition=_decode(data["transition"]),
            start=_decode(data["start"]),
            emissions=[
                GmmParams(
                    _decode(e["weights"]),
                    _decode(e["means"]),
                    _decode(e["variances"]),
                )
                for e in data["emissions"]
            ],
            mask=np.array(data["mask"], dtype=bool),
        )


def bakis_mask(num_states: int, skip: int = 1) -> np.ndarray:
    """Left-right mask allowing ``i -> j`` iff ``0 <= j - i <= 1 + skip``."""
    offsets = np.subtract.outer(np.arange(num_states), np.arange(num_states))
    return (offsets <= 0) & (offsets >= -(1 + skip))


def make_bakis(
    num_states: int,
    skip: int = 1,
    n_features: int = 1,
    n_components: int = 1,
    init_var: float = INIT_VAR,
) -> PropertyModel:
    """
    Initialized left-right Bakis model.

    Transitions are uniform over each state's allowed successors, the
    start distribution sits on state 0 and every state emits a zero-mean
    mixture with variance ``init_var``.

    Raises
    ------
    InvalidParams
        If ``num_states < 1`` or ``skip < 0``
    """
    if num_states < 1 or skip < 0:
        raise InvalidParams(
            f"Bakis topology needs num_states >= 1 and skip >= 0, "
            f"got ({num_states}, {skip})"
        )
    mask = bakis_mask(num_states, skip)
    transition = mask / mask.sum(axis=1, keepdims=True)
    start = np.zeros(num_states)
    start[0] = 1.0
    emissions = [
        GmmParams(
            np.full(n_components, 1.0 / n_components),
            np.zeros((n_components, n_features)),
            np.full((n_components, n_features), init_var),
        )
        for _ in range(num_states)
    ]
    return PropertyModel(transition, start, emissions, mask)


@dataclass
class ForwardBackward:
    """Result of :func:`forward_backward`; ``xi`` has shape (T-1, S, S)."""

    log_likelihood: float
    gamma: np.ndarray
    xi: np.ndarray


def forward_backward(model: PropertyModel, obs) -> ForwardBackward:
    """
    Log-domain forward-backward recursion.

    Parameters
    ----------
    model : PropertyModel
        Model to evaluate
    obs : ObservationSequence or ndarray
        Observation frames, shape (T, N)

    Returns
    -------
    ForwardBackward
        Sequence log-likelihood, state posteriors gamma (T, S) and pair
        posteriors xi (T-1, S, S)

    Raises
    ------
    EmptySequence
        If the sequence has no frames
    NumericalFailure
        If the sequence has zero probability under the model
    """
    frames = _as_frames(obs, model.n_features)
    log_b = model.emission_matrix(frames)
    log_a, log_pi = _log(model.transition), _log(model.start)
    n_frames, n_states = log_b.shape

    log_alpha = np.empty((n_frames, n_states))
    log_beta = np.zeros((n_frames, n_states))
    with np.errstate(invalid="ignore"):
        log_alpha[0] = log_pi + log_b[0]
        for t in range(1, n_frames):
            log_alpha[t] = (
                logsumexp(log_alpha[t - 1][:, None] + log_a, axis=0)
                + log_b[t]
            )
        log_likelihood = float(logsumexp(log_alpha[-1]))
        if not np.isfinite(log_likelihood):
            raise NumericalFailure(
                "observation sequence has zero likelihood under the model"
            )
        for t in range(n_frames - 2, -1, -1):
            log_beta[t] = logsumexp(
                log_a + (log_b[t + 1] + log_beta[t + 1])[None, :], axis=1
            )

        gamma = np.exp(log_alpha + log_beta - log_likelihood)
        gamma /= gamma.sum(axis=1, keepdims=True)
        xi = np.exp(
            log_alpha[:-1, :, None]
            + log_a[None, :, :]
            + (log_b[1:] + log_beta[1:])[:, None, :]
            - log_likelihood
        )
    return ForwardBackward(log_likelihood, gamma, xi)


def viterbi(model: PropertyModel, obs) -> tuple[np.ndarray, float]:
    """
    Most probable state path.

    Returns
    -------
    path : ndarray of int, shape (T,)
        Maximizing state sequence; ties resolve to the lower state index
    log_prob : float
        Joint log-probability of the path and the observations

    Raises
    ------
    EmptySequence
        If the sequence has no frames
    """
    frames = _as_frames(obs, model.n_features)
    log_b = model.emission_matrix(frames)
    log_a, log_pi = _log(model.transition), _log(model.start)
    n_frames, n_states = log_b.shape

    delta = log_pi + log_b[0]
    back = np.zeros((n_frames, n_states), dtype=np.int64)
    columns = np.arange(n_states)
    for t in range(1, n_frames):
        scores = delta[:, None] + log_a
        back[t] = np.argmax(scores, axis=0)
        delta = scores[back[t], columns] + log_b[t]

    path = np.empty(n_frames, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for t in range(n_frames - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(delta[path[-1]])


def sample(
    model: PropertyModel, length: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``(states, frames)`` of the given length from the model."""
    states = np.empty(length, dtype=np.int64)
    frames = np.empty((length, model.n_features))
    state = rng.choice(model.num_states, p=model.start)
    for t in range(length):
        if t:
            state = rng.choice(model.num_states, p=model.transition[state])
        gmm = model.emissions[state]
        k = rng.choice(gmm.n_components, p=gmm.weights)
        states[t] = state
        frames[t] = rng.normal(gmm.means[k], np.sqrt(gmm.variances[k]))
    return states, frames


@dataclass(frozen=True)
class TrainingConfig:
    """
    Settings of :func:`baum_welch` and :func:`init_emissions`.

    Parameters
    ----------
    max_iters : int
        Maximum EM iterations
    tol : float
        Stop when the relative log-likelihood change falls below this
    var_floor : float
        Lower bound of every emission variance
    n_components : int
        Mixture components per state
    skip : int
        Bakis skip width
    init_var : float
        Initial emission variance for manual means
    seed : int
        Seed of k-means initialization and component jitter
    """

    max_iters: int = 100
    tol: float = 1e-4
    var_floor: float = VAR_FLOOR
    n_components: int = 1
    skip: int = 1
    init_var: float = INIT_VAR
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1 or self.n_components < 1 or self.skip < 0:
            raise InvalidParams(
                "max_iters and n_components must be >= 1 and skip >= 0"
            )
        if self.tol < 0 or self.var_floor <= 0 or self.init_var <= 0:
            raise InvalidParams(
                "tol must be >= 0; var_floor and init_var must be positive"
            )


def baum_welch(
    model: PropertyModel,
    sequences: Sequence,
    config: TrainingConfig = TrainingConfig(),
) -> tuple[PropertyModel, list[float]]:
    """
    Expectation-maximization training of a model on several sequences.

    Start distribution, transitions (restricted to the topology mask) and
    mixture parameters are re-estimated from the pooled posteriors of all
    sequences, accumulated in sequence order. Variances are floored at
    ``config.var_floor``; states or components that receive no posterior
    mass keep their parameters.

    Returns
    -------
    model : PropertyModel
        Trained model
    trace : list of float
        Total log-likelihood before each M-step (non-decreasing)

    Raises
    ------
    EmptySequence
        If no sequence is given or one of them is empty
    DimensionError
        If a sequence dimension differs from the model's
    """
    if len(sequences) == 0:
        raise EmptySequence("Baum-Welch needs at least one sequence")
    data = [_as_frames(seq, model.n_features) for seq in sequences]

    current = model.copy()
    trace: list[float] = []
    for iteration in range(config.max_iters):
        stats = _expectation(current, data)
        trace.append(stats.log_likelihood)
        logger.debug(
            "iteration %d: log-likelihood %.6f",
            iteration,
            stats.log_likelihood,
        )
        if iteration and abs(trace[-1] - trace[-2]) <= config.tol * abs(
            trace[-2]
        ):
            logger.debug("Baum-Welch converged after %d iterations", iteration)
            break
        current = _maximization(current, stats, config.var_floor)
    return current, trace


@dataclass
class _Statistics:
    log_likelihood: float
    start: np.ndarray
    transitions: np.ndarray
    occupancy: np.ndarray
    first_moment: np.ndarray
    second_moment: np.ndarray


def _expectation(model: PropertyModel, data: list[np.ndarray]) -> _Statistics:
    s = model.num_states
    k = max(g.n_components for g in model.emissions)
    n = model.n_features
    stats = _Statistics(
        0.0,
        np.zeros(s),
        np.zeros((s, s)),
        np.zeros((s, k)),
        np.zeros((s, k, n)),
        np.zeros((s, k, n)),
    )
    for frames in data:
        fb = forward_backward(model, frames)
        stats.log_likelihood += fb.log_likelihood
        stats.start += fb.gamma[0]
        stats.transitions += fb.xi.sum(axis=0)
        squares = frames * frames
        for i, gmm in enumerate(model.emissions):
            comp = gmm.component_logpdf(frames)
            with np.errstate(invalid="ignore"):
                post = np.exp(comp - logsumexp(comp, axis=1, keepdims=True))
            resp = fb.gamma[:, i, None] * np.nan_to_num(post)
            kk = gmm.n_components
            stats.occupancy[i, :kk] += resp.sum(axis=0)
            stats.first_moment[i, :kk] += resp.T @ frames
            stats.second_moment[i, :kk] += resp.T @ squares
    return stats


def _maximization(
    model: PropertyModel, stats: _Statistics, var_floor: float
) -> PropertyModel:
    start = stats.start / stats.start.sum()

    transition = model.transition.copy()
    rows = stats.transitions.sum(axis=1)
    visited = rows > 0
    transition[visited] = stats.transitions[visited] / rows[visited, None]
    transition[~model.mask] = 0.0
    transition /= transition.sum(axis=1, keepdims=True)

    emissions = []
    for i, gmm in enumerate(model.emissions):
        kk = gmm.n_components
        occupancy = stats.occupancy[i, :kk]
        if occupancy.sum() <= 0:
            emissions.append(gmm.copy())
            continue
        used = occupancy > 0
        means = gmm.means.copy()
        variances = gmm.variances.copy()
        means[used] = stats.first_moment[i, :kk][used] / occupancy[used, None]
        second = stats.second_moment[i, :kk][used] / occupancy[used, None]
        variances[used] = np.maximum(second - means[used] ** 2, var_floor)
        weights = occupancy / occupancy.sum()
        emissions.append(GmmParams(weights, means, variances))
    return PropertyModel(transition, start, emissions, model.mask.copy())


def init_emissions(
    strategy: str,
    num_states: int,
    data=None,
    config: TrainingConfig = TrainingConfig(),
    mean_table=None,
) -> list[GmmParams]:
    """
    Initial emission mixtures for ``num_states`` states.

    Parameters
    ----------
    strategy : {"manual_means", "kmeans"}
        ``manual_means`` sets every state's mean from ``mean_table`` with
        variance ``config.init_var``; ``kmeans`` clusters the pooled
        frames of ``data`` and orders the clusters left to right by their
        mean relative position within the sequences.
    num_states : int
        Number of states S
    data : list of ObservationSequence or ndarray, optional
        Training sequences (kmeans)
    config : TrainingConfig
        Variance settings, component count and seed
    mean_table : array_like, optional
        Shape (N,) shared by all states or (S, N) per state (manual_means)

    Raises
    ------
    InvalidParams
        On a missing mean table, missing data or an unknown strategy
    """
    rng = np.random.default_rng(config.seed)
    if strategy == "manual_means":
        if mean_table is None:
            raise InvalidParams(
                "manual_means initialization needs a mean table"
            )
        table = np.atleast_2d(np.asarray(mean_table, dtype=float))
        if table.shape[0] == 1:
            table = np.repeat(table, num_states, axis=0)
        if table.shape[0] != num_states:
            raise InvalidParams(
                f"mean table has {table.shape[0]} rows for {num_states} states"
            )
        return [
            _mixture_around(row, config.init_var, config, rng)
            for row in table
        ]
    if strategy == "kmeans":
        if not data:
            raise InvalidParams("kmeans initialization needs training frames")
        sequences = [_as_frames(seq) for seq in data]
        pooled = np.concatenate(sequences)
        if len(pooled) < num_states:
            raise InvalidParams(
                f"{len(pooled)} frames cannot initialize {num_states} states"
            )
        positions = np.concatenate(
            [np.linspace(0.0, 1.0, len(seq)) for seq in sequences]
        )
        # k-means cannot place more centers than there are distinct frames
        n_clusters = min(num_states, len(np.unique(pooled, axis=0)))
        km = KMeans(n_clusters=n_clusters, n_init=10, random_state=config.seed)
        labels = km.fit_predict(pooled)
        occupied = [c for c in range(n_clusters) if np.any(labels == c)]
        order = sorted(
            occupied, key=lambda c: (positions[labels == c].mean(), c)
        )
        emissions = []
        for c in order:
            members = pooled[labels == c]
            variance = np.maximum(members.var(axis=0), config.var_floor)
            emissions.append(
                _mixture_from_members(members, variance, config, rng)
            )
        if len(emissions) < num_states:
            logger.debug(
                "%d distinct frames for %d states; padding with the "
                "pooled mean",
                len(emissions),
                num_states,
            )
            variance = np.maximum(pooled.var(axis=0), config.var_floor)
            emissions.extend(
                _mixture_around(pooled.mean(axis=0), variance, config, rng)
                for _ in range(num_states - len(emissions))
            )
        return emissions
    raise InvalidParams(f"unknown initialization strategy {strategy!r}")


def _mixture_around(mean, variance, config, rng) -> GmmParams:
    k = config.n_components
    means = np.repeat(np.asarray(mean, dtype=float)[None, :], k, axis=0)
    if k > 1:
        # identical components would stay identical under EM
        means += rng.normal(0.0, 0.5 * np.sqrt(variance), size=means.shape)
    variances = np.full_like(means, variance)
    return GmmParams(np.full(k, 1.0 / k), means, variances)


def _mixture_from_members(members, variance, config, rng) -> GmmParams:
    k = config.n_components
    if k == 1 or len(np.unique(members, axis=0)) < k:
        return _mixture_around(members.mean(axis=0), variance, config, rng)
    km = KMeans(n_clusters=k, n_init=10, random_state=config.seed)
    labels = km.fit_predict(members)
    weights = np.bincount(labels, minlength=k) / len(members)
    if np.any(weights == 0):
        return _mixture_around(members.mean(axis=0), variance, config, rng)
    variances = np.stack(
        [
            np.maximum(members[labels == c].var(axis=0), config.var_floor)
            for c in range(k)
        ]
    )
    return GmmParams(weights, km.cluster_centers_, variances)


def _as_frames(obs, n_features: int | None = None) -> np.ndarray:
    frames = obs.frames if isinstance(obs, ObservationSequence) else obs
    frames = np.asarray(frames, dtype=float)
    if frames.ndim == 1:
        frames = frames[:, None] if n_features == 1 else frames[None, :]
    if frames.size == 0 or len(frames) == 0:
        raise EmptySequence("observation sequence has no frames")
    if n_features is not None and frames.shape[1] != n_features:
        raise DimensionError(
            f"frames have {frames.shape[1]} dimensions, model expects "
            f"{n_features}"
        )
    return frames


def _log(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(values)


def _encode(values) -> list:
    """Reals as decimal strings with 17 significant digits."""
    array = np.asarray(values, dtype=float)
    if array.ndim == 0:
        return format(float(array), ".17g")
    return [_encode(v) for v in array]


def _decode(values) -> np.ndarray:
    return np.asarray(_decode_nested(values), dtype=float)


def _decode_nested(values):
    if isinstance(values, list):
        return [_decode_nested(v) for v in values]
    return float(values)
