"""Whole-word left-to-right HMMs over ten digits plus silence.

Each word has 3 emitting states with diagonal-GMM emissions and a
self-loop/forward transition pair; global state indices run word-major,
so digit d owns states 3d..3d+2 and silence owns 30..32.  Provides
transcription-graph compilation, Viterbi and forward-backward alignment
(in the log domain), and flat-start Baum-Welch training with mixture growth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import gmm as gmm_mod
from .errors import (
    MissingDigitCoverage,
    SourceMismatch,
    TooShort,
    UnalignableUtterance,
    UnknownToken,
)
from .features import FeatureKind, FeatureSequence
from .gmm import DiagGmm

WORDS = ("0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "sil")
STATES_PER_WORD = 3
N_STATES = len(WORDS) * STATES_PER_WORD  # 33
SILENCE_WORD = 10
SILENCE_STATES = tuple(range(SILENCE_WORD * STATES_PER_WORD, N_STATES))  # 30..32
DIGIT_STATES = tuple(range(SILENCE_WORD * STATES_PER_WORD))  # 0..29

SILENCE_POLICIES = ("none", "ends_only", "optional_between")

_LOG_ZERO = -np.inf


class AlignSource(str, Enum):
    HMM_FB = "hmm_fb"
    HMM_VITERBI = "hmm_viterbi"
    DNN = "dnn"


@dataclass
class AlignmentMatrix:
    """Per-frame posteriors over the 33 global states."""

    posteriors: np.ndarray  # (T, 33)
    source: AlignSource

    def __post_init__(self):
        self.posteriors = np.asarray(self.posteriors, dtype=np.float64)
        if self.posteriors.ndim != 2 or self.posteriors.shape[1] != N_STATES:
            raise ValueError(f"alignment must be T x {N_STATES}")
        if np.any(self.posteriors < 0):
            raise ValueError("alignment posteriors must be nonnegative")
        sums = self.posteriors.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            raise ValueError("alignment rows must sum to 1")

    @property
    def n_frames(self):
        return self.posteriors.shape[0]


@dataclass
class HmmSet:
    """The 33 state GMMs plus per-state self-loop probabilities."""

    gmms: list[DiagGmm]
    self_loop: np.ndarray  # (33,)
    training_log: list | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.gmms) != N_STATES:
            raise ValueError(f"need {N_STATES} state models, got {len(self.gmms)}")
        self.self_loop = np.asarray(self.self_loop, dtype=np.float64)
        if self.self_loop.shape != (N_STATES,):
            raise ValueError("self_loop must have one entry per state")
        if np.any(self.self_loop <= 0) or np.any(self.self_loop >= 1):
            raise ValueError("self-loop probabilities must lie strictly inside (0, 1)")

    @property
    def n_components(self):
        return self.gmms[0].n_components

    @property
    def dim(self):
        return self.gmms[0].dim


def word_states(word_index: int) -> range:
    return range(word_index * STATES_PER_WORD, (word_index + 1) * STATES_PER_WORD)


@dataclass
class StateGraph:
    """Linear digit/silence state sequence with optional-silence skip arcs.

    ``cross_preds[j]`` lists the nodes that can transition into node ``j``
    from the previous frame (self-loops are implicit); ``n_succ[i]`` counts
    the cross successors of node ``i``, over which the forward probability
    mass is split uniformly.  Entry is node 0 and exit is the last node.
    """

    states: np.ndarray            # (L,) global state indices
    optional: np.ndarray          # (L,) True for skippable silence nodes
    cross_preds: tuple            # tuple of tuples of node indices
    n_succ: np.ndarray            # (L,)
    min_frames: int
    transcription: str
    silence_policy: str
    hmms: HmmSet

    @property
    def n_nodes(self):
        return self.states.shape[0]


def compile_graph(transcription: str, hmms: HmmSet,
                  silence_policy: str = "optional_between") -> StateGraph:
    """Compile a digit string into a left-to-right state graph."""
    if silence_policy not in SILENCE_POLICIES:
        raise ValueError(f"unknown silence policy {silence_policy!r}")
    if not transcription:
        raise UnknownToken("empty transcription")
    word_idx = []
    for ch in transcription:
        if ch not in WORDS[:10]:
            raise UnknownToken(f"token {ch!r} is not a digit")
        word_idx.append(int(ch))

    blocks: list[tuple[int, bool]] = []  # (word index, optional?)
    if silence_policy == "none":
        blocks = [(w, False) for w in word_idx]
    else:
        blocks.append((SILENCE_WORD, False))
        for k, w in enumerate(word_idx):
            if k > 0 and silence_policy == "optional_between":
                blocks.append((SILENCE_WORD, True))
            blocks.append((w, False))
        blocks.append((SILENCE_WORD, False))

    states = []
    optional = []
    block_of_node = []
    for b, (w, opt) in enumerate(blocks):
        for s in word_states(w):
            states.append(s)
            optional.append(opt)
            block_of_node.append(b)
    states = np.array(states, dtype=np.int64)
    optional = np.array(optional, dtype=bool)

    first_node = {}
    last_node = {}
    for j, b in enumerate(block_of_node):
        first_node.setdefault(b, j)
        last_node[b] = j

    cross_preds: list[list[int]] = [[] for _ in states]
    n_succ = np.zeros(len(states), dtype=np.int64)
    for j in range(1, len(states)):
        b = block_of_node[j]
        if j != first_node[b]:
            cross_preds[j].append(j - 1)
            n_succ[j - 1] += 1
        else:
            prev = b - 1
            cross_preds[j].append(last_node[prev])
            n_succ[last_node[prev]] += 1
            # an optional block may be skipped entirely
            if blocks[prev][1] and prev > 0:
                cross_preds[j].append(last_node[prev - 1])
                n_succ[last_node[prev - 1]] += 1

    min_frames = STATES_PER_WORD * sum(1 for _, opt in blocks if not opt)
    return StateGraph(
        states=states,
        optional=optional,
        cross_preds=tuple(tuple(sorted(p)) for p in cross_preds),
        n_succ=n_succ,
        min_frames=min_frames,
        transcription=transcription,
        silence_policy=silence_policy,
        hmms=hmms,
    )


def _node_loglikes(graph: StateGraph, frames: np.ndarray) -> np.ndarray:
    """(T, L) emission log-likelihoods, one column per graph node."""
    uniq = np.unique(graph.states)
    per_state = {s: gmm_mod.log_likelihoods(graph.hmms.gmms[s], frames) for s in uniq}
    return np.stack([per_state[s] for s in graph.states], axis=1)


def _arc_arrays(graph: StateGraph):
    """Vectorized arc tables.

    Returns per-node self-loop log-probs plus up to two incoming cross arcs
    (pred index / log-prob, missing = index 0 with -inf prob) and the mirrored
    outgoing arcs.  Cross arcs carry the source's forward probability split
    uniformly over its successors.
    """
    loop = np.log(graph.hmms.self_loop[graph.states])
    fwd = np.log1p(-graph.hmms.self_loop[graph.states])
    n = graph.n_nodes
    p1 = np.zeros(n, dtype=np.int64)
    a1 = np.full(n, _LOG_ZERO)
    p2 = np.zeros(n, dtype=np.int64)
    a2 = np.full(n, _LOG_ZERO)
    for j in range(n):
        preds = graph.cross_preds[j]
        if len(preds) >= 1:
            p1[j] = preds[0]
            a1[j] = fwd[preds[0]] - np.log(graph.n_succ[preds[0]])
        if len(preds) == 2:
            p2[j] = preds[1]
            a2[j] = fwd[preds[1]] - np.log(graph.n_succ[preds[1]])
    s1 = np.zeros(n, dtype=np.int64)
    b1 = np.full(n, _LOG_ZERO)
    s2 = np.zeros(n, dtype=np.int64)
    b2 = np.full(n, _LOG_ZERO)
    for j in range(n):
        for p, arc in ((p1[j], a1[j]), (p2[j], a2[j])):
            if arc == _LOG_ZERO:
                continue
            if b1[p] == _LOG_ZERO:
                s1[p], b1[p] = j, arc
            else:
                s2[p], b2[p] = j, arc
    return loop, (p1, a1, p2, a2), (s1, b1, s2, b2)


def _check_alignable(graph: StateGraph, n_frames: int):
    if n_frames < graph.min_frames:
        raise TooShort(
            f"{n_frames} frames cannot traverse a graph needing {graph.min_frames}"
        )


def _viterbi_nodes(graph: StateGraph, loglikes: np.ndarray) -> tuple[np.ndarray, float]:
    """Best node path and its joint log-probability.

    Ties break toward the lower-index predecessor so alignments are
    deterministic.
    """
    t_max, n_nodes = loglikes.shape
    loop, (p1, a1, p2, a2), _ = _arc_arrays(graph)
    nodes = np.arange(n_nodes)
    delta = np.full(n_nodes, _LOG_ZERO)
    delta[0] = loglikes[0, 0]
    back = np.zeros((t_max, n_nodes), dtype=np.int64)
    for t in range(1, t_max):
        # candidates evaluated lowest predecessor first; strict > keeps ties low
        best = delta[p1] + a1
        best_p = p1.copy()
        cand = delta[p2] + a2
        better = cand > best
        best = np.where(better, cand, best)
        best_p = np.where(better, p2, best_p)
        cand = delta + loop
        better = cand > best
        best = np.where(better, cand, best)
        best_p = np.where(better, nodes, best_p)
        delta = best + loglikes[t]
        back[t] = best_p
    path = np.empty(t_max, dtype=np.int64)
    path[-1] = n_nodes - 1
    for t in range(t_max - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(delta[-1])


def _forward_backward_nodes(graph: StateGraph, loglikes: np.ndarray):
    """Node occupation posteriors (T, L), total log-probability, alpha, beta."""
    t_max, n_nodes = loglikes.shape
    loop, (p1, a1, p2, a2), (s1, b1, s2, b2) = _arc_arrays(graph)

    alpha = np.full((t_max, n_nodes), _LOG_ZERO)
    alpha[0, 0] = loglikes[0, 0]
    for t in range(1, t_max):
        prev = alpha[t - 1]
        acc = np.logaddexp(prev + loop, prev[p1] + a1)
        acc = np.logaddexp(acc, prev[p2] + a2)
        alpha[t] = acc + loglikes[t]

    beta = np.full((t_max, n_nodes), _LOG_ZERO)
    beta[-1, n_nodes - 1] = 0.0
    for t in range(t_max - 2, -1, -1):
        nxt = beta[t + 1] + loglikes[t + 1]
        acc = np.logaddexp(loop + nxt, b1 + nxt[s1])
        beta[t] = np.logaddexp(acc, b2 + nxt[s2])

    total = float(alpha[-1, n_nodes - 1])
    if not np.isfinite(total):
        raise TooShort("no valid path through the graph")
    gamma = np.exp(alpha + beta - total)
    return gamma, total, alpha, beta


def _nodes_to_states(graph: StateGraph, gamma_nodes: np.ndarray) -> np.ndarray:
    post = np.zeros((gamma_nodes.shape[0], N_STATES))
    np.add.at(post.T, graph.states, gamma_nodes.T)
    return post


def viterbi_align(graph: StateGraph, feats: FeatureSequence) -> np.ndarray:
    """Hard forced alignment: the most likely global state per frame."""
    if feats.kind != FeatureKind.MFCC60:
        raise SourceMismatch(f"alignment expects MFCC60 features, got {feats.kind.value}")
    _check_alignable(graph, feats.n_frames)
    path, _ = _viterbi_nodes(graph, _node_loglikes(graph, feats.frames))
    return graph.states[path]


def fb_align(graph: StateGraph, feats: FeatureSequence) -> AlignmentMatrix:
    """Soft forced alignment from forward-backward occupation probabilities."""
    if feats.kind != FeatureKind.MFCC60:
        raise SourceMismatch(f"alignment expects MFCC60 features, got {feats.kind.value}")
    _check_alignable(graph, feats.n_frames)
    gamma, _, _, _ = _forward_backward_nodes(graph, _node_loglikes(graph, feats.frames))
    return AlignmentMatrix(_nodes_to_states(graph, gamma), AlignSource.HMM_FB)


def _hybrid_loglikes(graph: StateGraph, state_posteriors: AlignmentMatrix,
                     priors: np.ndarray) -> np.ndarray:
    """Scaled-likelihood emissions from classifier posteriors and state priors."""
    priors = np.asarray(priors, dtype=np.float64)
    if priors.shape != (N_STATES,):
        raise SourceMismatch("need one prior per global state")
    post = np.maximum(state_posteriors.posteriors, 1e-30)
    scores = np.log(post) - np.log(np.maximum(priors, 1e-30))
    return scores[:, graph.states]


def viterbi_align_hybrid(graph: StateGraph, state_posteriors: AlignmentMatrix,
                         priors: np.ndarray) -> np.ndarray:
    """Hard alignment with DNN-derived scaled-likelihood emissions."""
    _check_alignable(graph, state_posteriors.n_frames)
    path, _ = _viterbi_nodes(graph, _hybrid_loglikes(graph, state_posteriors, priors))
    return graph.states[path]


def fb_align_hybrid(graph: StateGraph, state_posteriors: AlignmentMatrix,
                    priors: np.ndarray) -> AlignmentMatrix:
    """Soft alignment with DNN-derived scaled-likelihood emissions."""
    _check_alignable(graph, state_posteriors.n_frames)
    gamma, _, _, _ = _forward_backward_nodes(graph, _hybrid_loglikes(graph, state_posteriors, priors))
    return AlignmentMatrix(_nodes_to_states(graph, gamma), AlignSource.HMM_FB)


def path_to_alignment(path: np.ndarray) -> AlignmentMatrix:
    """Turn a hard state path into a 0/1 AlignmentMatrix."""
    post = np.zeros((len(path), N_STATES))
    post[np.arange(len(path)), path] = 1.0
    return AlignmentMatrix(post, AlignSource.HMM_VITERBI)


@dataclass
class HmmTrainConfig:
    target_components: int = 16
    init_passes: int = 4
    passes_per_size: int = 2
    silence_policy: str = "optional_between"
    variance_floor: float = 1e-3
    self_loop_init: float = 0.6
    transition_floor: float = 1e-3
    seed: int = 0


def _flat_start(corpus, graphs, dim, floor, global_mean, global_var) -> HmmSet:
    """Uniform segmentation over each utterance's mandatory nodes."""
    sums = np.zeros((N_STATES, dim))
    sqs = np.zeros((N_STATES, dim))
    counts = np.zeros(N_STATES)
    for (feats, _), graph in zip(corpus, graphs):
        mandatory = graph.states[~graph.optional]
        t = feats.n_frames
        bounds = np.floor(np.arange(len(mandatory) + 1) * t / len(mandatory)).astype(int)
        for k, s in enumerate(mandatory):
            seg = feats.frames[bounds[k]:bounds[k + 1]]
            if seg.shape[0]:
                sums[s] += seg.sum(axis=0)
                sqs[s] += (seg ** 2).sum(axis=0)
                counts[s] += seg.shape[0]
    gmms = []
    for s in range(N_STATES):
        if counts[s] >= 2:
            mean = sums[s] / counts[s]
            var = np.maximum(sqs[s] / counts[s] - mean ** 2, floor)
        else:
            mean, var = global_mean, np.maximum(global_var, floor)
        gmms.append(DiagGmm(np.array([1.0]), mean[None, :], var[None, :]))
    return gmms


def _realign_pass(hmms: HmmSet, corpus, graphs, cfg, floor, global_var):
    """One Baum-Welch realignment pass.

    Soft forward-backward occupation drives the emission and transition
    updates (the EM objective is the total data log-likelihood); the corpus
    Viterbi log-likelihood is computed from the same emission scores for
    the training log.
    """
    all_frames = []
    all_occ = []
    self_mass = np.zeros(N_STATES)
    cross_mass = np.zeros(N_STATES)
    total_fb = 0.0
    total_viterbi = 0.0
    for (feats, _), graph in zip(corpus, graphs):
        loglikes = _node_loglikes(graph, feats.frames)
        gamma, fb_ll, alpha, beta = _forward_backward_nodes(graph, loglikes)
        _, vit_ll = _viterbi_nodes(graph, loglikes)
        total_fb += fb_ll
        total_viterbi += vit_ll

        loop, _, _ = _arc_arrays(graph)
        # expected self-transition mass per node; leaving mass is the rest
        xi_self = np.exp(alpha[:-1] + loop + loglikes[1:] + beta[1:] - fb_ll)
        node_self = xi_self.sum(axis=0)
        node_cross = np.maximum(gamma[:-1].sum(axis=0) - node_self, 0.0)
        np.add.at(self_mass, graph.states, node_self)
        np.add.at(cross_mass, graph.states, node_cross)

        occ = np.zeros((feats.n_frames, N_STATES))
        np.add.at(occ.T, graph.states, gamma.T)
        all_frames.append(feats.frames)
        all_occ.append(occ)

    frames = np.concatenate(all_frames, axis=0)
    occ = np.concatenate(all_occ, axis=0)
    gmms = []
    for s in range(N_STATES):
        weights = occ[:, s]
        sel = weights > 1e-12
        if not sel.any():
            gmms.append(hmms.gmms[s])
            continue
        new, _ = gmm_mod._em_update(hmms.gmms[s], frames[sel], floor, global_var,
                                    frame_weights=weights[sel])
        gmms.append(new)

    leaving = self_mass + cross_mass
    loop = np.where(leaving > 0, self_mass / np.maximum(leaving, 1e-30), hmms.self_loop)
    loop = np.clip(loop, cfg.transition_floor, 1.0 - cfg.transition_floor)
    return HmmSet(gmms, loop), total_fb, total_viterbi


def train_hmm_set(corpus, cfg: HmmTrainConfig | None = None) -> HmmSet:
    """Flat start, iterative forward-backward realignment, and mixture growth.

    ``corpus`` is a list of (FeatureSequence, transcription) pairs; every
    digit 0..9 must occur somewhere.  The returned set's ``training_log``
    records per-pass rows with the total (``fb_ll``, the EM objective) and
    best-path (``viterbi_ll``) corpus log-likelihoods; within a fixed
    mixture size both are nondecreasing.
    """
    cfg = cfg or HmmTrainConfig()
    covered = set()
    for _, text in corpus:
        covered.update(text)
    missing = [d for d in WORDS[:10] if d not in covered]
    if missing:
        raise MissingDigitCoverage(f"digits {missing} never occur in the corpus")

    all_frames = np.concatenate([f.frames for f, _ in corpus], axis=0)
    global_mean = all_frames.mean(axis=0)
    global_var = all_frames.var(axis=0)
    floor = np.maximum(cfg.variance_floor * global_var, 1e-10)

    # graphs are fixed across training; validate alignability up front
    placeholder = HmmSet(
        [DiagGmm(np.array([1.0]), global_mean[None, :], np.maximum(global_var, floor)[None, :])
         for _ in range(N_STATES)],
        np.full(N_STATES, cfg.self_loop_init),
    )
    graphs = []
    for idx, (feats, text) in enumerate(corpus):
        graph = compile_graph(text, placeholder, cfg.silence_policy)
        if feats.n_frames < graph.min_frames:
            raise UnalignableUtterance(idx, f"utterance {idx} has {feats.n_frames} frames, "
                                            f"needs {graph.min_frames}")
        graphs.append(graph)

    gmms = _flat_start(corpus, graphs, all_frames.shape[1], floor, global_mean, global_var)
    hmms = HmmSet(gmms, np.full(N_STATES, cfg.self_loop_init))
    log = []

    def rebind(graphs, hmms):
        for g in graphs:
            g.hmms = hmms

    size = 1
    passes = cfg.init_passes
    while True:
        for k in range(passes):
            rebind(graphs, hmms)
            hmms, fb_ll, vit_ll = _realign_pass(hmms, corpus, graphs, cfg, floor, global_var)
            log.append({"n_components": size, "pass": k,
                        "fb_ll": fb_ll, "viterbi_ll": vit_ll})
        if size >= cfg.target_components:
            break
        hmms = HmmSet([gmm_mod.split_components(g) for g in hmms.gmms], hmms.self_loop)
        size *= 2
        passes = cfg.passes_per_size

    hmms.training_log = log
    return hmms


def hmm_mixture_posteriors(hmms: HmmSet, align: AlignmentMatrix, feats: FeatureSequence):
    """Joint state/component posteriors under an HMM alignment.

    Per frame the (state, component) masses multiply the state posterior by
    the within-state Gaussian posterior and sum to 1 over all 33 states.
    """
    if align.source not in (AlignSource.HMM_FB, AlignSource.HMM_VITERBI):
        raise SourceMismatch(f"expected an HMM alignment, got {align.source.value}")
    from .pgmm import mixture_posteriors

    return mixture_posteriors(hmms, align, feats, drop_silence=False, prune=0.0)
