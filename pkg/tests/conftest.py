import itertools

import numpy as np
import pytest

from digitsv.features import FeatureKind, FeatureSequence
from digitsv.gmm import DiagGmm
from digitsv.hmm import N_STATES, HmmSet


def make_hmm_set(dim=2, n_components=1, self_loop=0.6, rng=None, spread=6.0):
    """A full 33-state set of 60-dim GMMs whose means tile a (C, dim) pattern.

    Pairs with ``mfcc_feats``: both tile their base pattern up to 60 dims,
    so hand arithmetic done in the base dimension carries over.
    """
    rng = rng or np.random.default_rng(0)
    reps = 60 // dim
    gmms = []
    for _ in range(N_STATES):
        means = np.tile(spread * rng.standard_normal((n_components, dim)), (1, reps))
        variances = np.ones((n_components, 60))
        weights = np.full(n_components, 1.0 / n_components)
        gmms.append(DiagGmm(weights, means, variances))
    return HmmSet(gmms, np.full(N_STATES, self_loop))


def mfcc_feats(frames):
    """Wrap a (T, d) matrix as MFCC60 features by tiling to 60 dims."""
    frames = np.asarray(frames, dtype=np.float64)
    reps = 60 // frames.shape[1]
    assert 60 % frames.shape[1] == 0
    return FeatureSequence(np.tile(frames, (1, reps)), FeatureKind.MFCC60)


def scalar_log_gauss(x, mean, var):
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)


def scalar_gmm_loglike(gmm: DiagGmm, frame):
    """Direct density summation, one scalar at a time (max-shifted)."""
    comp_logs = []
    for c in range(gmm.n_components):
        log_n = np.log(gmm.weights[c])
        for d in range(gmm.dim):
            log_n += scalar_log_gauss(frame[d], gmm.means[c, d], gmm.variances[c, d])
        comp_logs.append(log_n)
    shift = max(comp_logs)
    return shift + np.log(sum(np.exp(v - shift) for v in comp_logs))


def enumerate_paths(n_states, t_max):
    """All monotone no-skip paths over states 0..n_states-1 of length t_max."""
    paths = []
    for bounds in itertools.combinations(range(1, t_max), n_states - 1):
        path = []
        prev = 0
        for s, b in enumerate(bounds):
            path.extend([s] * (b - prev))
            prev = b
        path.extend([n_states - 1] * (t_max - prev))
        paths.append(path)
    return paths


def enumeration_marginals(loglikes, self_loops):
    """Exhaustive-path state marginals, best path and both log-probabilities.

    ``loglikes`` is (T, S) for a linear left-to-right chain; transition out
    of state s has probability 1 - self_loops[s] (no branch splitting).
    Everything is computed with plain scalar arithmetic.
    """
    t_max, n_states = loglikes.shape
    paths = enumerate_paths(n_states, t_max)
    joint = []
    for path in paths:
        logp = loglikes[0][path[0]]
        for t in range(1, t_max):
            a, b = path[t - 1], path[t]
            trans = self_loops[a] if a == b else 1.0 - self_loops[a]
            logp += np.log(trans) + loglikes[t][b]
        joint.append(logp)
    joint = np.array(joint)
    best = int(np.argmax(joint))
    total = np.log(np.sum(np.exp(joint - joint.max()))) + joint.max()
    marg = np.zeros((t_max, n_states))
    for logp, path in zip(joint, paths):
        w = np.exp(logp - total)
        for t, s in enumerate(path):
            marg[t, s] += w
    return marg, np.array(paths[best]), float(joint[best]), float(total)


@pytest.fixture(scope="session")
def bench_corpus():
    from digitsv.synth import SynthConfig, generate_corpus

    return generate_corpus(SynthConfig(n_speakers=20, seed=42))


@pytest.fixture(scope="session")
def bench_models(bench_corpus):
    from digitsv.pipeline import train_desk_models

    return train_desk_models(bench_corpus)


@pytest.fixture(scope="session")
def small_corpus():
    from digitsv.synth import SynthConfig, generate_corpus

    return generate_corpus(SynthConfig(n_speakers=6, n_test=3, seed=11))


@pytest.fixture(scope="session")
def small_models(small_corpus):
    from digitsv.pipeline import train_desk_models

    return train_desk_models(small_corpus, hmm_components=4, ubm_components=16,
                             pgmm_components=4, mlp_hidden=(64, 64), mlp_epochs=6)
