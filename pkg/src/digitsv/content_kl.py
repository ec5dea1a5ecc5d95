"""Content verification by KL divergence between alignment posteriors.

State (or whole-digit) posterior sequences from the transcription-forced
HMM alignment and the free-running DNN alignment are pooled into phonetic
classes, epsilon-smoothed, and compared frame-by-frame.  A small divergence
means the spoken content matches the prompt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotSmoothed, ShapeMismatch, SourceMismatch, WidthMismatch
from .features import FeatureSequence
from .hmm import (
    N_STATES,
    STATES_PER_WORD,
    AlignmentMatrix,
    AlignSource,
    HmmSet,
    compile_graph,
    fb_align,
    fb_align_hybrid,
)
from .pgmm import MixturePosteriors

EPSILON_DEFAULT = 1e-5

STATE_LEVEL = "state"
DIGIT_LEVEL = "digit"


@dataclass(frozen=True)
class PhoneticClassMap:
    """Total mapping from the 33 global states to phonetic classes."""

    level: str
    state_to_class: tuple

    @classmethod
    def state_level(cls):
        return cls(STATE_LEVEL, tuple(range(N_STATES)))

    @classmethod
    def digit_level(cls):
        # ten digit classes plus silence pooled into an 11th class
        return cls(DIGIT_LEVEL, tuple(s // STATES_PER_WORD for s in range(N_STATES)))

    @classmethod
    def for_level(cls, level: str):
        if level == STATE_LEVEL:
            return cls.state_level()
        if level == DIGIT_LEVEL:
            return cls.digit_level()
        raise ValueError(f"unknown phonetic class level {level!r}")

    @property
    def n_classes(self):
        return max(self.state_to_class) + 1


@dataclass
class ClassPosteriorSequence:
    posteriors: np.ndarray    # (T, P)
    source: str               # "HMM" | "DNN"
    smoothed: bool = False

    def __post_init__(self):
        self.posteriors = np.asarray(self.posteriors, dtype=np.float64)
        if self.posteriors.ndim != 2:
            raise ShapeMismatch("class posteriors must be T x P")
        if np.any(self.posteriors < 0):
            raise ValueError("class posteriors must be nonnegative")


def _state_mass(gammas) -> tuple[np.ndarray, str]:
    """Per-frame mass on each of the 33 states, plus the source tag."""
    if isinstance(gammas, AlignmentMatrix):
        source = "DNN" if gammas.source == AlignSource.DNN else "HMM"
        return gammas.posteriors, source
    if isinstance(gammas, MixturePosteriors):
        if gammas.state_ids is None:
            raise WidthMismatch("unsupervised posteriors carry no phonetic states")
        mass = np.zeros((gammas.n_frames, N_STATES))
        c = gammas.n_components
        for k, s in enumerate(gammas.state_ids):
            mass[:, s] = gammas.gammas[:, k * c:(k + 1) * c].sum(axis=1)
        return mass, gammas.source
    raise WidthMismatch(f"cannot pool {type(gammas).__name__}")


def pool_classes(gammas, class_map: PhoneticClassMap) -> ClassPosteriorSequence:
    """Sum state (and component) mass into phonetic classes, per frame."""
    mass, source = _state_mass(gammas)
    if mass.shape[1] != N_STATES:
        raise WidthMismatch(f"expected {N_STATES} states, got {mass.shape[1]}")
    pooled = np.zeros((mass.shape[0], class_map.n_classes))
    np.add.at(pooled.T, np.asarray(class_map.state_to_class), mass.T)
    return ClassPosteriorSequence(pooled, source, smoothed=False)


def smooth(posteriors: ClassPosteriorSequence, epsilon: float = EPSILON_DEFAULT) -> ClassPosteriorSequence:
    """Add epsilon to every class and renormalize each frame."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    bumped = posteriors.posteriors + epsilon
    bumped /= bumped.sum(axis=1, keepdims=True)
    return ClassPosteriorSequence(bumped, posteriors.source, smoothed=True)


def kl_score(hmm_post: ClassPosteriorSequence, dnn_post: ClassPosteriorSequence) -> float:
    """Frame-averaged KL(HMM || DNN) over phonetic classes; lower = better match."""
    if not (hmm_post.smoothed and dnn_post.smoothed):
        raise NotSmoothed("both posterior sequences must be smoothed first")
    if hmm_post.posteriors.shape != dnn_post.posteriors.shape:
        raise ShapeMismatch("posterior sequences differ in shape")
    if hmm_post.source != "HMM" or dnn_post.source != "DNN":
        raise SourceMismatch(
            f"expected (HMM, DNN) sources, got ({hmm_post.source}, {dnn_post.source})"
        )
    p = hmm_post.posteriors
    q = dnn_post.posteriors
    return float(np.sum(p * (np.log(p) - np.log(q))) / p.shape[0])


@dataclass
class ContentDecision:
    kl: float
    accept: bool | None
    threshold: float | None = None


def content_verify(feats: FeatureSequence, transcription: str, hmms: HmmSet,
                   dnn_align: AlignmentMatrix,
                   class_map: PhoneticClassMap | None = None,
                   epsilon: float = EPSILON_DEFAULT,
                   threshold: float | None = None,
                   silence_policy: str = "optional_between",
                   hmm_mode: str = "gmm",
                   priors: np.ndarray | None = None) -> ContentDecision:
    """Score one utterance against its prompted transcription.

    The prompt drives a forward-backward HMM alignment (GMM emissions, or
    DNN scaled likelihoods when ``hmm_mode='hybrid'``); the given DNN
    posteriors act as the transcription-free reference.  Returns the KL
    divergence and, if a threshold is given, the accept decision
    (accept iff kl <= threshold).
    """
    if dnn_align.source != AlignSource.DNN:
        raise SourceMismatch("reference alignment must come from the DNN")
    class_map = class_map or PhoneticClassMap.digit_level()
    graph = compile_graph(transcription, hmms, silence_policy)
    if hmm_mode == "gmm":
        hmm_align = fb_align(graph, feats)
    elif hmm_mode == "hybrid":
        if priors is None:
            raise ValueError("hybrid alignment needs state priors")
        hmm_align = fb_align_hybrid(graph, dnn_align, priors)
    else:
        raise ValueError(f"unknown hmm_mode {hmm_mode!r}")

    hmm_cps = smooth(pool_classes(hmm_align, class_map), epsilon)
    dnn_cps = smooth(pool_classes(dnn_align, class_map), epsilon)
    kl = kl_score(hmm_cps, dnn_cps)
    accept = None if threshold is None else bool(kl <= threshold)
    return ContentDecision(kl, accept, threshold)
