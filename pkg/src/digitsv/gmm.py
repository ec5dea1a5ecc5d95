"""Diagonal-covariance Gaussian mixture models.

EM training with binary mixture splitting, log-domain likelihoods and
component posteriors.  Models are treated as immutable once trained.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateData, DimMismatch, TooFewSamples

_LOG_2PI = np.log(2.0 * np.pi)
_EMPTY_COUNT = 1e-8


@dataclass
class DiagGmm:
    weights: np.ndarray   # (C,)
    means: np.ndarray     # (C, D)
    variances: np.ndarray  # (C, D)
    training_log: list | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if self.means.shape != self.variances.shape or self.weights.shape[0] != self.means.shape[0]:
            raise DimMismatch("inconsistent mixture parameter shapes")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"mixture weights sum to {self.weights.sum()!r}, not 1")
        if np.any(self.variances <= 0):
            raise ValueError("variances must be strictly positive")

    @property
    def n_components(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]


@dataclass
class GmmTrainConfig:
    target_components: int = 512
    em_iterations: int = 10
    variance_floor: float = 1e-3  # fraction of global per-dim variance
    seed: int = 0

    def __post_init__(self):
        c = self.target_components
        if c < 1 or (c & (c - 1)) != 0:
            raise ValueError("target_components must be a power of 2 (mixtures grow by splitting)")


def _check_frames(gmm: DiagGmm, frames: np.ndarray) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 1:
        frames = frames[None, :]
    if frames.shape[1] != gmm.dim:
        raise DimMismatch(f"frame dim {frames.shape[1]} vs model dim {gmm.dim}")
    return frames


def log_weighted_densities(gmm: DiagGmm, frames: np.ndarray) -> np.ndarray:
    """(T, C) matrix of log w_c + log N(x_t; mu_c, var_c)."""
    frames = _check_frames(gmm, frames)
    inv_var = 1.0 / gmm.variances
    const = (
        np.log(np.maximum(gmm.weights, 1e-300))
        - 0.5 * (gmm.dim * _LOG_2PI + np.sum(np.log(gmm.variances), axis=1))
        - 0.5 * np.sum(gmm.means ** 2 * inv_var, axis=1)
    )
    quad = -0.5 * (frames ** 2) @ inv_var.T + frames @ (gmm.means * inv_var).T
    return quad + const


def log_likelihoods(gmm: DiagGmm, frames: np.ndarray) -> np.ndarray:
    """Per-frame mixture log-likelihoods, (T,)."""
    lw = log_weighted_densities(gmm, frames)
    m = lw.max(axis=1, keepdims=True)
    return (m + np.log(np.sum(np.exp(lw - m), axis=1, keepdims=True)))[:, 0]


def log_likelihood(gmm: DiagGmm, frame: np.ndarray) -> float:
    """log sum_c w_c N(x; mu_c, var_c) for a single frame."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 1:
        raise DimMismatch("log_likelihood expects a single frame vector")
    return float(log_likelihoods(gmm, frame)[0])


def component_posterior_matrix(gmm: DiagGmm, frames: np.ndarray) -> np.ndarray:
    """(T, C) responsibilities, computed in the log domain with max-subtraction."""
    lw = log_weighted_densities(gmm, frames)
    lw -= lw.max(axis=1, keepdims=True)
    p = np.exp(lw)
    p /= p.sum(axis=1, keepdims=True)
    return p


def component_posteriors(gmm: DiagGmm, frame: np.ndarray) -> np.ndarray:
    """P(c | x) for a single frame, (C,); entries sum to 1."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 1:
        raise DimMismatch("component_posteriors expects a single frame vector")
    return component_posterior_matrix(gmm, frame)[0]


def split_components(gmm: DiagGmm) -> DiagGmm:
    """Double the mixture size, perturbing each mean by +-0.2 stddev per dim."""
    offset = 0.2 * np.sqrt(gmm.variances)
    c, d = gmm.means.shape
    means = np.empty((2 * c, d))
    means[0::2] = gmm.means - offset
    means[1::2] = gmm.means + offset
    variances = np.repeat(gmm.variances, 2, axis=0)
    weights = np.repeat(gmm.weights, 2) / 2.0
    return DiagGmm(weights, means, variances)


def _closed_form_single(data: np.ndarray, floor: np.ndarray) -> DiagGmm:
    mean = data.mean(axis=0)
    var = np.maximum(data.var(axis=0), floor)
    return DiagGmm(np.array([1.0]), mean[None, :], var[None, :])


def _em_update(gmm: DiagGmm, data: np.ndarray, floor: np.ndarray,
               global_var: np.ndarray,
               frame_weights: np.ndarray | None = None) -> tuple[DiagGmm, float]:
    """One (optionally frame-weighted) EM iteration.

    Returns the new model and the weighted data log-likelihood under the
    old one.
    """
    lw = log_weighted_densities(gmm, data)
    m = lw.max(axis=1, keepdims=True)
    log_tot = m + np.log(np.sum(np.exp(lw - m), axis=1, keepdims=True))
    resp = np.exp(lw - log_tot)
    if frame_weights is None:
        ll = float(log_tot.sum())
    else:
        ll = float(frame_weights @ log_tot[:, 0])
        resp = resp * frame_weights[:, None]

    counts = resp.sum(axis=0)
    empties = np.nonzero(counts < _EMPTY_COUNT)[0]
    if empties.size:
        # re-seed dead components on the worst-modeled frames
        order = np.argsort(log_tot[:, 0], kind="stable")
        weights = gmm.weights.copy()
        means = gmm.means.copy()
        variances = gmm.variances.copy()
        for k, comp in enumerate(empties):
            frame = data[order[min(k, data.shape[0] - 1)]]
            means[comp] = frame
            variances[comp] = np.maximum(global_var, floor)
            weights[comp] = 1e-3
        weights /= weights.sum()
        return DiagGmm(weights, means, variances), ll

    weights = counts / counts.sum()
    means = (resp.T @ data) / counts[:, None]
    second = (resp.T @ (data ** 2)) / counts[:, None]
    variances = np.maximum(second - means ** 2, floor)
    return DiagGmm(weights, means, variances), ll


def train_em(data: np.ndarray, cfg: GmmTrainConfig) -> DiagGmm:
    """Fit a diagonal GMM by closed-form start, then split -> EM to the target size.

    The returned model carries a ``training_log`` of
    ``(n_components, [log-likelihood per EM iteration])`` entries; within one
    size level the log-likelihood is nondecreasing.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise DimMismatch("training data must be an N x D matrix")
    n = data.shape[0]
    if n < cfg.target_components:
        raise TooFewSamples(f"{n} samples cannot support {cfg.target_components} components")
    global_var = data.var(axis=0)
    if np.max(global_var) <= 0.0:
        raise DegenerateData("training data has zero variance")
    floor = np.maximum(cfg.variance_floor * global_var, 1e-10)

    log: list = []
    gmm = _closed_form_single(data, floor)
    while gmm.n_components < cfg.target_components:
        gmm = split_components(gmm)
        lls = []
        for _ in range(cfg.em_iterations):
            gmm, ll = _em_update(gmm, data, floor, global_var)
            lls.append(ll)
        lls.append(float(log_likelihoods(gmm, data).sum()))
        log.append((gmm.n_components, lls))
    gmm.training_log = log
    return gmm
