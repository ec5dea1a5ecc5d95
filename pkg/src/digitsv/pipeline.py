"""In-memory orchestration of the full verification pipeline.

Glue between the synthetic corpus (or any utterance provider) and the
alignment/backend modules: model training at desk scale, speaker
enrollment, per-trial speaker scoring, and per-trial content scoring.
The CLI wraps the same functions around on-disk artifacts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import content_kl, eval_trials, hmm as hmm_mod, map_speaker, pgmm as pgmm_mod
from .errors import ConfigInvalid, UnknownCondition
from .gmm import DiagGmm, GmmTrainConfig, train_em
from .hmm import AlignmentMatrix, HmmSet, HmmTrainConfig, compile_graph, train_hmm_set
from .neural_aligner import MlpModel, MlpTrainConfig, mlp_posteriors, train_mlp
from .pgmm import Background, MixturePosteriors, Pgmm, PgmmEmAccumulator
from .features import FeatureKind, FeatureSequence


@dataclass
class AlignerModels:
    hmms: HmmSet | None = None
    mlp: MlpModel | None = None
    pgmm: Pgmm | None = None
    ubm: DiagGmm | None = None


def viterbi_label_frames(hmms: HmmSet, utterances, silence_policy: str):
    """Hard-aligned (frames, state labels) from (feats, transcription) pairs."""
    frames, labels = [], []
    for feats, text in utterances:
        graph = compile_graph(text, hmms, silence_policy)
        path = hmm_mod.viterbi_align(graph, feats)
        frames.append(feats.frames)
        labels.append(path)
    return np.concatenate(frames, axis=0), np.concatenate(labels)


def train_desk_models(corpus, *, hmm_components=16, ubm_components=32,
                      pgmm_components=16, pgmm_em_iterations=4,
                      mlp_hidden=(256, 256), mlp_epochs=8,
                      silence_policy="optional_between", seed=0,
                      include=("hmms", "mlp", "pgmm", "ubm")) -> AlignerModels:
    """Train alignment models from a corpus's enrollment utterances.

    Sizes default to desk scale; the unsupervised background model is kept
    slightly below the state count so its components straddle phonetic
    units, as they do on real speech.  ``include`` limits which models are
    built (the mlp needs hmms; the pgmm needs both).
    """
    enroll_pairs = [
        (u.feats, u.content) for u in corpus.utterances if u.split == "enroll"
    ]
    models = AlignerModels()
    need_mlp = "mlp" in include or "pgmm" in include
    if "hmms" in include or need_mlp:
        models.hmms = train_hmm_set(
            enroll_pairs,
            HmmTrainConfig(target_components=hmm_components,
                           silence_policy=silence_policy, seed=seed),
        )

    frames = None
    if need_mlp:
        frames, labels = viterbi_label_frames(models.hmms, enroll_pairs, silence_policy)
        models.mlp = train_mlp(frames, labels, MlpTrainConfig(
            hidden_dims=tuple(mlp_hidden),
            epochs=mlp_epochs,
            input_kind=FeatureKind.MFCC60,
            seed=seed,
        ))

    if "pgmm" in include:
        feats_list = [feats for feats, _ in enroll_pairs]
        dnn_aligns = [mlp_posteriors(models.mlp, feats) for feats in feats_list]
        pgmm = pgmm_mod.init_pgmm(dnn_aligns, feats_list,
                                  n_components=pgmm_components, seed=seed)
        for _ in range(pgmm_em_iterations):
            accum = PgmmEmAccumulator(pgmm)
            for align, feats in zip(dnn_aligns, feats_list):
                accum.add(pgmm, align, feats)
            pgmm = pgmm_mod.pgmm_em_step(pgmm, accum=accum)
        models.pgmm = pgmm

    if "ubm" in include:
        if frames is None:
            frames = np.concatenate([f.frames for f, _ in enroll_pairs], axis=0)
        models.ubm = train_em(frames, GmmTrainConfig(target_components=ubm_components,
                                                     seed=seed))
    return models


class SpeakerSystem:
    """One alignment source plus its background, ready to produce statistics.

    Sources: ``gmm-hmm`` (forced FB alignment over HMM-state mixtures),
    ``dnn`` (classifier posteriors over phonetic GMMs), ``dnn-hmm``
    (graph-constrained alignment with classifier emissions over phonetic
    GMMs), and ``ubm`` (unsupervised component posteriors).  Apart from the
    UBM, silence mass is dropped before statistics.
    """

    def __init__(self, source: str, models: AlignerModels,
                 silence_policy: str = "optional_between"):
        self.source = source
        self.models = models
        self.silence_policy = silence_policy
        if source == "gmm-hmm":
            self._need(models.hmms, "hmms")
            self.background = Background.from_hmm_set(models.hmms, model_id="gmm-hmm")
        elif source in ("dnn", "dnn-hmm"):
            self._need(models.pgmm, "pgmm")
            self._need(models.mlp, "mlp")
            if source == "dnn-hmm":
                self._need(models.hmms, "hmms")
            self.background = Background.from_pgmm(models.pgmm, model_id=source)
        elif source == "ubm":
            self._need(models.ubm, "ubm")
            self.background = Background.from_ubm(models.ubm, model_id="ubm")
        else:
            raise ConfigInvalid(f"unknown alignment source {source!r}")

    @staticmethod
    def _need(model, name):
        if model is None:
            raise ConfigInvalid(f"alignment source requires a trained {name} model")

    def dnn_alignment(self, dnn_feats: FeatureSequence) -> AlignmentMatrix:
        return mlp_posteriors(self.models.mlp, dnn_feats)

    def alignment(self, feats: FeatureSequence, prompt: str | None,
                  dnn_align: AlignmentMatrix | None = None) -> AlignmentMatrix | None:
        """State alignment for one utterance (None for the UBM source)."""
        if self.source == "ubm":
            return None
        if self.source == "dnn":
            return dnn_align
        if prompt is None:
            raise ConfigInvalid(f"{self.source} alignment needs the prompted transcription")
        graph = compile_graph(prompt, self.models.hmms, self.silence_policy)
        if self.source == "gmm-hmm":
            return hmm_mod.fb_align(graph, feats)
        return hmm_mod.fb_align_hybrid(graph, dnn_align, self.models.mlp.class_priors)

    def stats_posteriors(self, feats: FeatureSequence, prompt: str | None = None,
                         dnn_align: AlignmentMatrix | None = None) -> MixturePosteriors:
        """MixturePosteriors feeding statistics, with silence mass dropped."""
        if self.source == "ubm":
            return pgmm_mod.ubm_mixture_posteriors(self.models.ubm, feats)
        align = self.alignment(feats, prompt, dnn_align)
        if self.source == "gmm-hmm":
            return pgmm_mod.mixture_posteriors(self.models.hmms, align, feats,
                                               drop_silence=True)
        return pgmm_mod.mixture_posteriors(self.models.pgmm, align, feats)


class AlignmentCache:
    """Per-(utterance, prompt) memoization for trial scoring."""

    def __init__(self, system: SpeakerSystem, dnn_feats_for):
        self.system = system
        self.dnn_feats_for = dnn_feats_for
        self._dnn: dict = {}
        self._stats: dict = {}

    def dnn_align(self, utt):
        if utt.utt_id not in self._dnn:
            self._dnn[utt.utt_id] = self.system.dnn_alignment(self.dnn_feats_for(utt))
        return self._dnn[utt.utt_id]

    def stats_posteriors(self, utt, prompt):
        key = (utt.utt_id, prompt if self.system.source != "ubm" else None)
        if key not in self._stats:
            dnn = self.dnn_align(utt) if self.system.source in ("dnn", "dnn-hmm") else None
            self._stats[key] = self.system.stats_posteriors(utt.feats, prompt, dnn)
        return self._stats[key]


def enroll_speakers(corpus, system: SpeakerSystem,
                    relevance: float = map_speaker.RELEVANCE_DEFAULT,
                    dnn_feats_for=None) -> dict:
    """MAP-enroll every corpus speaker from its enrollment utterances."""
    dnn_feats_for = dnn_feats_for or (lambda u: u.feats)
    cache = AlignmentCache(system, dnn_feats_for)
    speakers = {}
    for spk in corpus.speakers:
        utts = corpus.enrollment(spk)
        pairs = [(cache.stats_posteriors(u, u.content), u.feats) for u in utts]
        speakers[spk] = map_speaker.enroll(system.background, pairs, relevance)
    return speakers


def score_speaker_trials(corpus, trials, system: SpeakerSystem, speakers: dict,
                         dnn_feats_for=None) -> list:
    """Log-likelihood-ratio speaker score per trial, in trial order."""
    dnn_feats_for = dnn_feats_for or (lambda u: u.feats)
    cache = AlignmentCache(system, dnn_feats_for)
    scores = []
    for trial in trials:
        utt = corpus.by_id(trial.utterance)
        gammas = cache.stats_posteriors(utt, trial.prompt)
        scores.append(
            map_speaker.llr_score(speakers[trial.speaker], system.background,
                                  gammas, utt.feats)
        )
    return scores


def score_content_trials(corpus, trials, models: AlignerModels,
                         level: str = "digit", epsilon: float = 1e-5,
                         hmm_mode: str = "hybrid",
                         silence_policy: str = "optional_between",
                         dnn_feats_for=None) -> list:
    """KL content score per trial (lower = content matches the prompt)."""
    dnn_feats_for = dnn_feats_for or (lambda u: u.feats)
    class_map = content_kl.PhoneticClassMap.for_level(level)
    dnn_cache: dict = {}
    kl_cache: dict = {}
    scores = []
    for trial in trials:
        utt = corpus.by_id(trial.utterance)
        key = (utt.utt_id, trial.prompt)
        if key not in kl_cache:
            if utt.utt_id not in dnn_cache:
                dnn_cache[utt.utt_id] = mlp_posteriors(models.mlp, dnn_feats_for(utt))
            decision = content_kl.content_verify(
                utt.feats, trial.prompt, models.hmms, dnn_cache[utt.utt_id],
                class_map=class_map, epsilon=epsilon,
                silence_policy=silence_policy, hmm_mode=hmm_mode,
                priors=models.mlp.class_priors if hmm_mode == "hybrid" else None,
            )
            kl_cache[key] = decision.kl
        scores.append(kl_cache[key])
    return scores


def evaluate_condition(trials, scores, condition: str,
                       dcf_params=(eval_trials.SRE08, eval_trials.SRE10),
                       negate: bool = False):
    """EER and minDCFs for one condition; set negate=True for KL scores."""
    if condition not in eval_trials.CONDITIONS:
        raise UnknownCondition(f"unknown condition {condition!r}")
    nontarget = eval_trials.CONDITIONS[condition]
    values, labels = [], []
    for trial, score in zip(trials, scores):
        if trial.category == "TC":
            values.append(score)
            labels.append(True)
        elif trial.category == nontarget:
            values.append(score)
            labels.append(False)
    values = np.asarray(values)
    if negate:
        values = -values
    ss = eval_trials.ScoreSet(values, np.asarray(labels))
    eer = eval_trials.compute_eer(ss)
    dcfs = [eval_trials.compute_min_dcf(ss, p) for p in dcf_params]
    return eer, dcfs
