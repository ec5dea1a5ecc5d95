"""Phonetic GMMs and normalized Baum-Welch statistics.

A Pgmm holds one diagonal GMM per digit state (silence excluded).  Any
alignment source supplies per-frame state posteriors; multiplying by the
within-state component posterior gives joint mixture occupancies, from
which zeroth/first/second-order statistics are accumulated for the MAP
and i-vector backends.  Statistics and EM accumulators merge by addition,
so per-utterance accumulation can run in parallel.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import gmm as gmm_mod
from .errors import EmptyStateWarning, ShapeMismatch, StarvedState
from .features import FeatureSequence
from .gmm import DiagGmm
from .hmm import DIGIT_STATES, N_STATES, AlignmentMatrix, AlignSource, HmmSet

_EMPTY_COUNT = 1e-8
PRUNE_DEFAULT = 1e-6


@dataclass
class Pgmm:
    """One GMM per digit state; 30 states x n_components mixtures."""

    gmms: list              # 30 DiagGmm, indexed by digit state
    state_ids: tuple = DIGIT_STATES

    def __post_init__(self):
        if len(self.gmms) != len(self.state_ids):
            raise ShapeMismatch("one GMM per phonetic state required")

    @property
    def n_components(self):
        return self.gmms[0].n_components

    @property
    def dim(self):
        return self.gmms[0].dim

    @property
    def n_mixtures(self):
        return len(self.gmms) * self.n_components


@dataclass
class MixturePosteriors:
    """Per-frame (state, component) occupancies flattened to (T, M).

    Columns group the components of each entry of ``state_ids`` in order;
    ``state_ids`` is None for an unsupervised (single-block) model.  Rows
    carry total mass <= 1; mass on excluded states is simply absent.
    """

    gammas: np.ndarray
    source: str                       # "HMM" | "DNN"
    state_ids: tuple | None
    n_components: int

    def __post_init__(self):
        self.gammas = np.asarray(self.gammas, dtype=np.float64)
        if self.source not in ("HMM", "DNN"):
            raise ValueError(f"unknown posterior source {self.source!r}")
        expected = self.n_components * (len(self.state_ids) if self.state_ids else 1)
        if self.gammas.ndim != 2 or self.gammas.shape[1] != expected:
            raise ShapeMismatch(f"expected {expected} mixture columns")

    @property
    def n_frames(self):
        return self.gammas.shape[0]


@dataclass
class SuffStats:
    """Zeroth/first/second-order statistics centered on the background means."""

    n: np.ndarray    # (M,)
    f: np.ndarray    # (M, D) sum of gamma * (x - mu)
    s: np.ndarray    # (M, D) sum of gamma * (x - mu)^2, diagonal only
    background_id: str | None = None

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.float64)
        self.f = np.asarray(self.f, dtype=np.float64)
        self.s = np.asarray(self.s, dtype=np.float64)
        if self.f.shape != self.s.shape or self.n.shape[0] != self.f.shape[0]:
            raise ShapeMismatch("inconsistent statistics shapes")

    def merge(self, other: "SuffStats") -> "SuffStats":
        if self.f.shape != other.f.shape:
            raise ShapeMismatch("cannot merge statistics of different shapes")
        if (self.background_id and other.background_id
                and self.background_id != other.background_id):
            raise ShapeMismatch("cannot merge statistics from different backgrounds")
        return SuffStats(
            self.n + other.n, self.f + other.f, self.s + other.s,
            self.background_id or other.background_id,
        )


@dataclass
class Background:
    """Flattened mixture view of a UBM, HMM state set, or phonetic GMM."""

    means: np.ndarray       # (M, D)
    variances: np.ndarray   # (M, D)
    state_ids: tuple | None
    n_components: int
    model_id: str = ""

    @classmethod
    def from_ubm(cls, ubm: DiagGmm, model_id: str = "ubm"):
        return cls(ubm.means.copy(), ubm.variances.copy(), None, ubm.n_components, model_id)

    @classmethod
    def from_pgmm(cls, pgmm: Pgmm, model_id: str = "pgmm"):
        means = np.concatenate([g.means for g in pgmm.gmms], axis=0)
        variances = np.concatenate([g.variances for g in pgmm.gmms], axis=0)
        return cls(means, variances, pgmm.state_ids, pgmm.n_components, model_id)

    @classmethod
    def from_hmm_set(cls, hmms: HmmSet, drop_silence: bool = True, model_id: str = "hmm"):
        states = DIGIT_STATES if drop_silence else tuple(range(N_STATES))
        means = np.concatenate([hmms.gmms[s].means for s in states], axis=0)
        variances = np.concatenate([hmms.gmms[s].variances for s in states], axis=0)
        return cls(means, variances, states, hmms.n_components, model_id)

    @property
    def n_mixtures(self):
        return self.means.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    def empty_stats(self) -> SuffStats:
        return SuffStats(
            np.zeros(self.n_mixtures),
            np.zeros((self.n_mixtures, self.dim)),
            np.zeros((self.n_mixtures, self.dim)),
            self.model_id or None,
        )


def _model_states_gmms(model, drop_silence):
    if isinstance(model, Pgmm):
        return model.state_ids, model.gmms  # silence is already excluded
    if isinstance(model, HmmSet):
        if drop_silence:
            return DIGIT_STATES, [model.gmms[s] for s in DIGIT_STATES]
        return tuple(range(N_STATES)), model.gmms
    raise ShapeMismatch(f"unsupported model type {type(model).__name__}")


def mixture_posteriors(model, align: AlignmentMatrix, feats: FeatureSequence,
                       drop_silence: bool | None = None,
                       prune: float = PRUNE_DEFAULT) -> MixturePosteriors:
    """Joint (state, component) posteriors: state mass times within-state posterior.

    For a Pgmm the silence-state mass is discarded (never renormalized); for
    an HmmSet ``drop_silence`` selects between the full 33-state footprint
    and the digit-only one.  Entries below ``prune`` are zeroed for sparsity.
    """
    if drop_silence is None:
        drop_silence = isinstance(model, Pgmm)
    states, gmms = _model_states_gmms(model, drop_silence)
    if align.n_frames != feats.n_frames:
        raise ShapeMismatch("alignment and features disagree on frame count")
    if gmms[0].dim != feats.dim:
        raise ShapeMismatch(f"model dim {gmms[0].dim} vs feature dim {feats.dim}")

    n_comp = gmms[0].n_components
    t = feats.n_frames
    gammas = np.empty((t, len(states) * n_comp))
    for k, (s, g) in enumerate(zip(states, gmms)):
        state_mass = align.posteriors[:, s:s + 1]
        gammas[:, k * n_comp:(k + 1) * n_comp] = (
            state_mass * gmm_mod.component_posterior_matrix(g, feats.frames)
        )
    if prune > 0:
        gammas[gammas < prune] = 0.0
    source = "DNN" if align.source == AlignSource.DNN else "HMM"
    return MixturePosteriors(gammas, source, states, n_comp)


def ubm_mixture_posteriors(ubm: DiagGmm, feats: FeatureSequence,
                           prune: float = PRUNE_DEFAULT) -> MixturePosteriors:
    """Unsupervised component posteriors under a single background GMM."""
    gammas = gmm_mod.component_posterior_matrix(ubm, feats.frames)
    if prune > 0:
        gammas = np.where(gammas < prune, 0.0, gammas)
    return MixturePosteriors(gammas, "HMM", None, ubm.n_components)


def accumulate_stats(gammas: MixturePosteriors, feats: FeatureSequence,
                     means: np.ndarray, background_id: str | None = None) -> SuffStats:
    """Normalized Baum-Welch statistics around the given background means."""
    means = np.asarray(means, dtype=np.float64)
    if gammas.n_frames != feats.n_frames:
        raise ShapeMismatch("posterior and feature frame counts differ")
    if means.shape != (gammas.gammas.shape[1], feats.dim):
        raise ShapeMismatch(f"means shape {means.shape} does not match posteriors/features")
    g = gammas.gammas
    x = feats.frames
    n = g.sum(axis=0)
    gx = g.T @ x
    gxx = g.T @ (x ** 2)
    f = gx - n[:, None] * means
    s = gxx - 2.0 * means * gx + n[:, None] * means ** 2
    return SuffStats(n, f, s, background_id)


class PgmmEmAccumulator:
    """Raw EM accumulator for Pgmm updates; merges by addition."""

    def __init__(self, pgmm: Pgmm):
        self.n = np.zeros((len(pgmm.state_ids), pgmm.n_components))
        self.sx = np.zeros((len(pgmm.state_ids), pgmm.n_components, pgmm.dim))
        self.sxx = np.zeros_like(self.sx)
        self._shape_key = (len(pgmm.state_ids), pgmm.n_components, pgmm.dim)

    def add(self, pgmm: Pgmm, align: AlignmentMatrix, feats: FeatureSequence):
        if (len(pgmm.state_ids), pgmm.n_components, pgmm.dim) != self._shape_key:
            raise ShapeMismatch("accumulator does not match this model")
        x = feats.frames
        for k, (state, g) in enumerate(zip(pgmm.state_ids, pgmm.gmms)):
            mass = align.posteriors[:, state]
            if not mass.any():
                continue
            resp = gmm_mod.component_posterior_matrix(g, x) * mass[:, None]
            self.n[k] += resp.sum(axis=0)
            self.sx[k] += resp.T @ x
            self.sxx[k] += resp.T @ (x ** 2)
        return self

    def merge(self, other: "PgmmEmAccumulator") -> "PgmmEmAccumulator":
        if other._shape_key != self._shape_key:
            raise ShapeMismatch("cannot merge accumulators of different shapes")
        self.n += other.n
        self.sx += other.sx
        self.sxx += other.sxx
        return self


def _as_lists(aligns, feats):
    if isinstance(aligns, AlignmentMatrix):
        aligns = [aligns]
    if isinstance(feats, FeatureSequence):
        feats = [feats]
    if len(aligns) != len(feats):
        raise ShapeMismatch("alignment and feature lists must be parallel")
    return aligns, feats


def pgmm_em_step(pgmm: Pgmm, aligns=None, feats=None,
                 accum: PgmmEmAccumulator | None = None,
                 variance_floor: float = 1e-3) -> Pgmm:
    """One EM update of all state GMMs under fixed alignments.

    Per state the new weights normalize the component occupancies, means are
    occupancy-weighted sample means and variances the matching (floored)
    spreads.  States with ~zero total occupancy are left unchanged and
    reported via EmptyStateWarning.
    """
    if accum is None:
        accum = PgmmEmAccumulator(pgmm)
    if aligns is not None:
        aligns, feats = _as_lists(aligns, feats)
        for a, f in zip(aligns, feats):
            accum.add(pgmm, a, f)

    global_second = accum.sxx.sum(axis=(0, 1))
    global_first = accum.sx.sum(axis=(0, 1))
    total_n = accum.n.sum()
    global_mean = global_first / max(total_n, _EMPTY_COUNT)
    global_var = global_second / max(total_n, _EMPTY_COUNT) - global_mean ** 2
    floor = np.maximum(variance_floor * np.maximum(global_var, 0.0), 1e-10)

    new_gmms = []
    empty_states = []
    for k, (state, g) in enumerate(zip(pgmm.state_ids, pgmm.gmms)):
        state_n = accum.n[k].sum()
        if state_n < _EMPTY_COUNT:
            empty_states.append(state)
            new_gmms.append(g)
            continue
        weights = accum.n[k] / state_n
        counts = accum.n[k]
        live = counts >= _EMPTY_COUNT
        means = g.means.copy()
        variances = g.variances.copy()
        means[live] = accum.sx[k][live] / counts[live, None]
        variances[live] = np.maximum(
            accum.sxx[k][live] / counts[live, None] - means[live] ** 2, floor
        )
        new_gmms.append(DiagGmm(weights, means, variances))
    if empty_states:
        warnings.warn(
            f"states {empty_states} received no occupancy; left unchanged",
            EmptyStateWarning,
        )
    return Pgmm(new_gmms, pgmm.state_ids)


def pgmm_objective(pgmm: Pgmm, aligns, feats) -> float:
    """Alignment-weighted data log-likelihood; nondecreasing under pgmm_em_step."""
    aligns, feats = _as_lists(aligns, feats)
    total = 0.0
    for a, f in zip(aligns, feats):
        for state, g in zip(pgmm.state_ids, pgmm.gmms):
            mass = a.posteriors[:, state]
            if mass.any():
                total += float(mass @ gmm_mod.log_likelihoods(g, f.frames))
    return total


def init_pgmm(alignments, feats_list, n_components: int = 16,
              em_iterations: int = 10, variance_floor: float = 1e-3,
              seed: int = 0) -> Pgmm:
    """Initialize state GMMs from hard (argmax) frame assignments.

    Every digit state must receive at least ``n_components`` frames,
    otherwise StarvedState identifies the first starved one.
    """
    alignments, feats_list = _as_lists(alignments, feats_list)
    buckets: dict[int, list] = {s: [] for s in DIGIT_STATES}
    for align, feats in zip(alignments, feats_list):
        hard = align.posteriors.argmax(axis=1)
        for s in np.unique(hard):
            if s in buckets:
                buckets[s].append(feats.frames[hard == s])

    gmms = []
    for s in DIGIT_STATES:
        frames = np.concatenate(buckets[s], axis=0) if buckets[s] else np.empty((0, 1))
        if frames.shape[0] < n_components:
            raise StarvedState(s, f"state {s} got {frames.shape[0]} frames, "
                                  f"needs >= {n_components}")
        cfg = gmm_mod.GmmTrainConfig(
            target_components=n_components,
            em_iterations=em_iterations,
            variance_floor=variance_floor,
            seed=seed,
        )
        gmms.append(gmm_mod.train_em(frames, cfg))
    return Pgmm(gmms)
