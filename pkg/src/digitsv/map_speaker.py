"""GMM-MAP speaker enrollment and log-likelihood-ratio scoring.

Only mixture means are adapted: the adapted mean interpolates the
background mean toward the enrollment sample mean with data-dependent
weight N/(N+r), where r is the relevance factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyEnrollment, NoRetainedFrames, ShapeMismatch
from .features import FeatureSequence
from .pgmm import Background, MixturePosteriors, SuffStats, accumulate_stats

RELEVANCE_DEFAULT = 5.0


@dataclass
class SpeakerModel:
    means: np.ndarray         # (M, D) adapted means
    background_id: str
    relevance: float

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        if not np.all(np.isfinite(self.means)):
            raise ValueError("adapted means must be finite")


def map_adapt(background: Background, stats: SuffStats,
              relevance: float = RELEVANCE_DEFAULT) -> SpeakerModel:
    """Mean-only MAP adaptation: mu_hat = F/(N+r) + mu per mixture."""
    if relevance <= 0:
        raise ValueError("relevance factor must be positive")
    if stats.f.shape != background.means.shape:
        raise ShapeMismatch(
            f"stats shape {stats.f.shape} vs background {background.means.shape}"
        )
    alpha = 1.0 / (stats.n + relevance)
    means = alpha[:, None] * stats.f + background.means
    return SpeakerModel(means, background.model_id, relevance)


def enroll(background: Background, utterances, relevance: float = RELEVANCE_DEFAULT) -> SpeakerModel:
    """Merge statistics over enrollment utterances, then adapt once.

    ``utterances`` is a list of (MixturePosteriors, FeatureSequence) pairs.
    """
    if not utterances:
        raise EmptyEnrollment("enrollment needs at least one utterance")
    stats = background.empty_stats()
    for gammas, feats in utterances:
        stats = stats.merge(
            accumulate_stats(gammas, feats, background.means, background.model_id)
        )
    return map_adapt(background, stats, relevance)


def llr_score(speaker: SpeakerModel, background: Background,
              gammas: MixturePosteriors, feats: FeatureSequence) -> float:
    """Average per-frame log-likelihood ratio of speaker vs background.

    Shared variances make the log-determinants cancel, leaving a
    posterior-weighted difference of quadratic terms.  The sum is divided
    by the number of frames carrying any retained mixture mass.
    """
    if speaker.means.shape != background.means.shape:
        raise ShapeMismatch("speaker and background models differ in shape")
    if gammas.gammas.shape[1] != background.means.shape[0]:
        raise ShapeMismatch("posterior columns do not match the background mixtures")
    if feats.dim != background.means.shape[1]:
        raise ShapeMismatch("feature dim does not match the model")
    if gammas.n_frames != feats.n_frames:
        raise ShapeMismatch("posterior and feature frame counts differ")

    g = gammas.gammas
    rows, cols = np.nonzero(g)
    retained = np.unique(rows).size
    if retained == 0:
        raise NoRetainedFrames("no frame carries any non-silence mixture mass")

    x = feats.frames[rows]
    mu_b = background.means[cols]
    mu_s = speaker.means[cols]
    inv2v = 0.5 / background.variances[cols]
    per_entry = np.sum(((x - mu_b) ** 2 - (x - mu_s) ** 2) * inv2v, axis=1)
    return float(np.dot(g[rows, cols], per_entry) / retained)
