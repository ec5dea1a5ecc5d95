"""Command-line pipeline: one subcommand per stage, file handoffs between.

Every stage is restartable from its on-disk inputs and deterministic under
fixed seeds.  Progress goes to stderr as `progress key=value ...` lines,
results to stdout.  Exit codes: 0 success, 1 usage error, 2 data error.

Corpus directory layout (written by `synth`, read by the other stages):

    corpus/feats/<utt>.dvfe
    corpus/transcripts/transcripts.txt   # <utt-id> <digit-string>
    corpus/trials/trials.txt             # <speaker> <utt-id> <digits> <category>
    corpus/splits/enroll.txt             # <utt-id> <speaker>
    corpus/splits/test.txt               # <utt-id> <speaker>
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import (
    eval_trials,
    features,
    formats,
    gmm as gmm_mod,
    hmm as hmm_mod,
    ivector as ivec_mod,
    neural_aligner,
    pgmm as pgmm_mod,
    pipeline,
    synth as synth_mod,
)
from .config import load_config
from .errors import DigitsvError, UsageError


def _progress(stage, **kv):
    parts = " ".join(f"{k}={v}" for k, v in kv.items())
    print(f"progress stage={stage} {parts}".rstrip(), file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


# --- on-disk corpus access -------------------------------------------------

@dataclass
class DiskUtterance:
    utt_id: str
    speaker: str
    content: str
    split: str
    _dir: str
    _feats: features.FeatureSequence | None = None

    @property
    def feats(self) -> features.FeatureSequence:
        if self._feats is None:
            self._feats = formats.read_dvfe(
                os.path.join(self._dir, "corpus", "feats", f"{self.utt_id}.dvfe")
            )
        return self._feats


class DiskCorpus:
    """Read-only view of a corpus directory, API-compatible with synth.Corpus."""

    def __init__(self, root: str):
        self.root = root
        transcripts = {}
        with open(os.path.join(root, "corpus", "transcripts", "transcripts.txt")) as fh:
            for line in fh:
                if line.strip():
                    utt, text = line.split()
                    transcripts[utt] = text
        self.utterances = []
        for split in ("enroll", "test"):
            path = os.path.join(root, "corpus", "splits", f"{split}.txt")
            with open(path) as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    utt, spk = line.split()
                    self.utterances.append(
                        DiskUtterance(utt, spk, transcripts[utt], split, root)
                    )
        self.speakers = sorted({u.speaker for u in self.utterances})
        self._index = {u.utt_id: u for u in self.utterances}

    def by_id(self, utt_id):
        return self._index[utt_id]

    def enrollment(self, speaker):
        return [u for u in self.utterances if u.speaker == speaker and u.split == "enroll"]

    def trials_path(self):
        return os.path.join(self.root, "corpus", "trials", "trials.txt")


def _enroll_pairs(corpus):
    return [(u.feats, u.content) for u in corpus.utterances if u.split == "enroll"]


def _load_models(args) -> pipeline.AlignerModels:
    return pipeline.AlignerModels(
        hmms=formats.load_hmm_set(args.hmm) if getattr(args, "hmm", None) else None,
        mlp=formats.load_mlp(args.mlp) if getattr(args, "mlp", None) else None,
        pgmm=formats.load_pgmm(args.pgmm) if getattr(args, "pgmm", None) else None,
        ubm=formats.load_diag_gmm(args.ubm) if getattr(args, "ubm", None) else None,
    )


# --- stages ------------------------------------------------------------------

def _cmd_synth(args):
    cfg = synth_mod.SynthConfig(
        n_speakers=args.speakers, n_test=args.test_per_speaker,
        speaker_scale=args.speaker_scale, noise_scale=args.noise_scale,
        mean_separation=args.separation, tw_mode=args.tw_mode, seed=args.seed,
    )
    corpus = synth_mod.generate_corpus(cfg)
    root = args.out
    for sub in ("corpus/feats", "corpus/transcripts", "corpus/trials", "corpus/splits"):
        os.makedirs(os.path.join(root, sub), exist_ok=True)
    splits = {"enroll": [], "test": []}
    with open(os.path.join(root, "corpus", "transcripts", "transcripts.txt"), "w") as fh:
        for u in corpus.utterances:
            formats.write_dvfe(os.path.join(root, "corpus", "feats", f"{u.utt_id}.dvfe"),
                               u.feats)
            fh.write(f"{u.utt_id} {u.content}\n")
            splits[u.split].append(u)
    for split, utts in splits.items():
        with open(os.path.join(root, "corpus", "splits", f"{split}.txt"), "w") as fh:
            for u in utts:
                fh.write(f"{u.utt_id} {u.speaker}\n")
    with open(os.path.join(root, "corpus", "trials", "trials.txt"), "w") as fh:
        for t in corpus.trials:
            fh.write(f"{t.speaker} {t.utterance} {t.prompt} {t.category}\n")
    _progress("synth", utterances=len(corpus.utterances), trials=len(corpus.trials))
    print(root)
    return 0


def _cmd_extract_feats(args):
    clip = features.read_wav(args.wav)
    if args.kind == "fbank":
        feats = features.extract_fbank(clip)
    elif args.kind == "spliced":
        feats = features.splice(features.extract_fbank(clip), args.context)
    else:
        feats = features.extract_mfcc(clip)
        if not args.no_cmvn:
            feats = features.apply_cmvn(feats)
    formats.write_dvfe(args.out, feats)
    _progress("extract-feats", frames=feats.n_frames, dim=feats.dim)
    print(args.out)
    return 0


def _cmd_train_hmm(args):
    cfg = load_config(args.config, {"hmm_components": args.components,
                                    "silence_policy": args.silence_policy,
                                    "seed": args.seed})
    corpus = DiskCorpus(args.corpus)
    hmms = hmm_mod.train_hmm_set(_enroll_pairs(corpus), hmm_mod.HmmTrainConfig(
        target_components=cfg.hmm_components,
        silence_policy=cfg.silence_policy, seed=cfg.seed,
    ))
    for row in hmms.training_log:
        _progress("train-hmm", components=row["n_components"], pass_=row["pass"],
                  fb_ll=f"{row['fb_ll']:.4f}", viterbi_ll=f"{row['viterbi_ll']:.4f}")
    formats.save_hmm_set(args.out, hmms)
    print(args.out)
    return 0


def _cmd_train_ubm(args):
    cfg = load_config(args.config, {"ubm_components": args.components, "seed": args.seed})
    corpus = DiskCorpus(args.corpus)
    frames = np.concatenate([f.frames for f, _ in _enroll_pairs(corpus)], axis=0)
    ubm = gmm_mod.train_em(frames, gmm_mod.GmmTrainConfig(
        target_components=cfg.ubm_components, seed=cfg.seed))
    for size, lls in ubm.training_log:
        _progress("train-ubm", components=size, ll=f"{lls[-1]:.4f}")
    formats.save_diag_gmm(args.out, ubm)
    print(args.out)
    return 0


def _cmd_train_mlp(args):
    cfg = load_config(args.config, {
        "mlp_hidden": args.hidden, "mlp_epochs": args.epochs, "seed": args.seed,
    })
    corpus = DiskCorpus(args.corpus)
    hmms = formats.load_hmm_set(args.hmm)
    pairs = _enroll_pairs(corpus)
    frames, labels = pipeline.viterbi_label_frames(hmms, pairs, args.silence_policy)
    if args.dnn_feats_dir:
        stacked = []
        for u in (u for u in corpus.utterances if u.split == "enroll"):
            stacked.append(formats.read_dvfe(
                os.path.join(args.dnn_feats_dir, f"{u.utt_id}.dvfe")).frames)
        dnn_frames = np.concatenate(stacked, axis=0)
        if dnn_frames.shape[0] != labels.shape[0]:
            raise DigitsvError("classifier features and alignment labels disagree in length")
        input_kind = features.FeatureKind(cfg.dnn_feature_kind)
    else:
        dnn_frames, input_kind = frames, features.FeatureKind.MFCC60
    model = neural_aligner.train_mlp(dnn_frames, labels, neural_aligner.MlpTrainConfig(
        hidden_dims=cfg.mlp_hidden_dims, epochs=cfg.mlp_epochs,
        learning_rate=cfg.mlp_learning_rate, batch_size=cfg.mlp_batch_size,
        input_kind=input_kind, seed=cfg.seed,
    ))
    formats.save_mlp(args.out, model)
    _progress("train-mlp", frames=len(labels))
    print(args.out)
    return 0


def _read_feats_arg(path):
    return formats.read_dvfe(path)


def _require_flags(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if not getattr(args, n, None)]
    if missing:
        raise UsageError(f"{args.command}: missing {', '.join(missing)}")


def _cmd_align(args):
    mode = args.mode
    if args.source == "dnn":
        _require_flags(args, "mlp")
        if not (args.dnn_feats or args.feats):
            raise UsageError("align: missing --feats or --dnn-feats")
        mlp = formats.load_mlp(args.mlp)
        feats = _read_feats_arg(args.dnn_feats or args.feats)
        align = neural_aligner.mlp_posteriors(mlp, feats)
        matrix = align.posteriors
        if mode == "viterbi":
            matrix = hmm_mod.path_to_alignment(matrix.argmax(axis=1)).posteriors
    else:
        _require_flags(args, "hmm", "feats", "transcript")
        if args.source == "dnn-hmm":
            _require_flags(args, "mlp")
        hmms = formats.load_hmm_set(args.hmm)
        feats = _read_feats_arg(args.feats)
        graph = hmm_mod.compile_graph(args.transcript, hmms, args.silence_policy)
        if args.source == "gmm-hmm":
            if mode == "fb":
                matrix = hmm_mod.fb_align(graph, feats).posteriors
            else:
                matrix = hmm_mod.path_to_alignment(
                    hmm_mod.viterbi_align(graph, feats)).posteriors
        else:  # dnn-hmm
            mlp = formats.load_mlp(args.mlp)
            dnn_feats = _read_feats_arg(args.dnn_feats or args.feats)
            post = neural_aligner.mlp_posteriors(mlp, dnn_feats)
            if mode == "fb":
                matrix = hmm_mod.fb_align_hybrid(graph, post, mlp.class_priors).posteriors
            else:
                matrix = hmm_mod.path_to_alignment(
                    hmm_mod.viterbi_align_hybrid(graph, post, mlp.class_priors)).posteriors
    formats.write_dvpo(args.out, matrix)
    _progress("align", source=args.source, mode=mode, frames=matrix.shape[0])
    print(args.out)
    return 0


def _cmd_train_pgmm(args):
    cfg = load_config(args.config, {
        "pgmm_components": args.components,
        "pgmm_em_iterations": args.em_iterations,
        "seed": args.seed,
    })
    corpus = DiskCorpus(args.corpus)
    enroll = [u for u in corpus.utterances if u.split == "enroll"]
    feats_list = [u.feats for u in enroll]
    if args.align_dir:
        aligns = [
            hmm_mod.AlignmentMatrix(
                formats.read_dvpo(os.path.join(args.align_dir, f"{u.utt_id}.dvpo"),
                                  expect_states=hmm_mod.N_STATES),
                hmm_mod.AlignSource.DNN,
            )
            for u in enroll
        ]
    elif args.mlp:
        mlp = formats.load_mlp(args.mlp)
        aligns = [neural_aligner.mlp_posteriors(mlp, f) for f in feats_list]
    else:
        raise UsageError("train-pgmm needs --align-dir or --mlp")
    model = pgmm_mod.init_pgmm(aligns, feats_list, n_components=cfg.pgmm_components,
                               seed=cfg.seed)
    for k in range(cfg.pgmm_em_iterations):
        accum = pgmm_mod.PgmmEmAccumulator(model)
        for a, f in zip(aligns, feats_list):
            accum.add(model, a, f)
        model = pgmm_mod.pgmm_em_step(model, accum=accum)
        _progress("train-pgmm", iteration=k,
                  objective=f"{pgmm_mod.pgmm_objective(model, aligns, feats_list):.4f}")
    formats.save_pgmm(args.out, model)
    print(args.out)
    return 0


def _background_for(args, models: pipeline.AlignerModels):
    system = pipeline.SpeakerSystem(args.source, models, args.silence_policy)
    return system


def _cmd_accumulate_stats(args):
    if args.source == "ubm":
        _require_flags(args, "ubm")
    else:
        _require_flags(args, "align")
        _require_flags(args, "hmm" if args.source == "gmm-hmm" else "pgmm")
    models = _load_models(args)
    feats = _read_feats_arg(args.feats)
    if args.source == "ubm":
        gammas = pgmm_mod.ubm_mixture_posteriors(models.ubm, feats)
        background = pgmm_mod.Background.from_ubm(models.ubm, model_id="ubm")
    else:
        matrix = formats.read_dvpo(args.align, expect_states=hmm_mod.N_STATES)
        source = hmm_mod.AlignSource.DNN if args.source == "dnn" else hmm_mod.AlignSource.HMM_FB
        align = hmm_mod.AlignmentMatrix(matrix, source)
        if args.source == "gmm-hmm":
            gammas = pgmm_mod.mixture_posteriors(models.hmms, align, feats, drop_silence=True)
            background = pgmm_mod.Background.from_hmm_set(models.hmms, model_id="gmm-hmm")
        else:
            gammas = pgmm_mod.mixture_posteriors(models.pgmm, align, feats)
            background = pgmm_mod.Background.from_pgmm(models.pgmm, model_id=args.source)
    stats = pgmm_mod.accumulate_stats(gammas, feats, background.means, background.model_id)
    formats.write_dvst(args.out, stats)
    _progress("accumulate-stats", mixtures=stats.n.shape[0], total=f"{stats.n.sum():.4f}")
    print(args.out)
    return 0


def _cmd_enroll_map(args):
    cfg = load_config(args.config, {"relevance": args.relevance})
    corpus = DiskCorpus(args.corpus)
    system = _background_for(args, _load_models(args))
    speakers = pipeline.enroll_speakers(corpus, system, cfg.relevance)
    formats.save_speaker_models(args.out, speakers, system.background.model_id,
                                cfg.relevance)
    _progress("enroll-map", speakers=len(speakers))
    print(args.out)
    return 0


def _stats_paths(args):
    paths = list(args.stats or [])
    if args.stats_dir:
        paths.extend(sorted(
            os.path.join(args.stats_dir, name)
            for name in os.listdir(args.stats_dir) if name.endswith(".dvst")
        ))
    if not paths:
        raise UsageError("no statistics files given")
    return paths


def _cmd_train_tv(args):
    cfg = load_config(args.config, {"ivector_rank": args.rank,
                                    "tv_iterations": args.iterations,
                                    "seed": args.seed})
    system = _background_for(args, _load_models(args))
    stats = [formats.read_dvst(p) for p in _stats_paths(args)]
    tv = ivec_mod.train_tv(stats, system.background, cfg.ivector_rank,
                           iterations=cfg.tv_iterations, seed=cfg.seed)
    for k, aux in enumerate(tv.training_log):
        _progress("train-tv", iteration=k, objective=f"{aux:.4f}")
    formats.save_tv(args.out, tv)
    print(args.out)
    return 0


def _cmd_extract_ivector(args):
    tv = formats.load_tv(args.tv)
    entries = []
    for path in _stats_paths(args):
        stats = formats.read_dvst(path)
        utt_id = os.path.splitext(os.path.basename(path))[0]
        entries.append((utt_id, ivec_mod.extract_ivector(stats, tv)))
    formats.write_dviv(args.out, entries)
    _progress("extract-ivector", count=len(entries))
    print(args.out)
    return 0


def _read_utt2spk(path):
    mapping = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                utt, spk = line.split()
                mapping[utt] = spk
    return mapping


def _cmd_train_backend(args):
    cfg = load_config(args.config, {"lda_dim": args.lda_dim,
                                    "plda_iterations": args.plda_iterations})
    entries = formats.read_dviv(args.ivectors)
    utt2spk = _read_utt2spk(args.utt2spk)
    missing = [utt for utt, _ in entries if utt not in utt2spk]
    if missing:
        raise UsageError(f"no speaker label for utterances {missing[:5]}")
    ivectors = [iv for _, iv in entries]
    labels = [utt2spk[utt] for utt, _ in entries]
    backend = ivec_mod.train_backend(ivectors, labels, cfg.lda_dim,
                                     plda_iterations=cfg.plda_iterations)
    for k, ll in enumerate(backend.training_log):
        _progress("train-backend", iteration=k, log_likelihood=f"{ll:.4f}")
    formats.save_plda_backend(args.out, backend)
    print(args.out)
    return 0


def _ensure_parent(path):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def _write_scores(path, trials, scores):
    _ensure_parent(path)
    with open(path, "w") as fh:
        for trial, score in zip(trials, scores):
            fh.write(f"{trial.speaker} {trial.utterance} {score:.10g}\n")


def _cmd_score_speaker(args):
    cfg = load_config(args.config, {"relevance": args.relevance})
    corpus = DiskCorpus(args.corpus)
    trials = eval_trials.load_trials(args.trials or corpus.trials_path())
    models = _load_models(args)
    system = pipeline.SpeakerSystem(args.source, models, args.silence_policy)
    if args.backend == "map":
        _require_flags(args, "speakers")
        speakers = formats.load_speaker_models(args.speakers)
        enrolled_on = next(iter(speakers.values())).background_id
        if enrolled_on != system.background.model_id:
            raise DigitsvError(
                f"speaker models were enrolled with the {enrolled_on!r} alignment "
                f"source; scoring requested {system.background.model_id!r}"
            )
        scores = pipeline.score_speaker_trials(corpus, trials, system, speakers)
    else:
        _require_flags(args, "tv", "plda")
        tv = formats.load_tv(args.tv)
        backend = formats.load_plda_backend(args.plda)
        cache = pipeline.AlignmentCache(system, lambda u: u.feats)
        enroll_ivecs = {}
        for spk in corpus.speakers:
            prepared = []
            for u in corpus.enrollment(spk):
                stats = pgmm_mod.accumulate_stats(
                    cache.stats_posteriors(u, u.content), u.feats,
                    system.background.means, system.background.model_id)
                prepared.append(backend.prepare(ivec_mod.extract_ivector(stats, tv)))
            enroll_ivecs[spk] = prepared
        scores = []
        test_cache = {}
        for trial in trials:
            key = (trial.utterance, trial.prompt)
            if key not in test_cache:
                u = corpus.by_id(trial.utterance)
                stats = pgmm_mod.accumulate_stats(
                    cache.stats_posteriors(u, trial.prompt), u.feats,
                    system.background.means, system.background.model_id)
                test_cache[key] = backend.prepare(ivec_mod.extract_ivector(stats, tv))
            scores.append(ivec_mod.plda_score(backend, enroll_ivecs[trial.speaker],
                                              test_cache[key]))
    _write_scores(args.out, trials, scores)
    _progress("score-speaker", trials=len(trials), backend=args.backend)
    print(args.out)
    return 0


def _cmd_score_content(args):
    cfg = load_config(args.config, {"epsilon": args.epsilon, "class_level": args.level})
    corpus = DiskCorpus(args.corpus)
    trials = eval_trials.load_trials(args.trials or corpus.trials_path())
    models = _load_models(args)
    scores = pipeline.score_content_trials(
        corpus, trials, models, level=cfg.class_level, epsilon=cfg.epsilon,
        hmm_mode=args.hmm_mode, silence_policy=args.silence_policy,
    )
    _ensure_parent(args.out)
    with open(args.out, "w") as fh:
        for trial, kl in zip(trials, scores):
            trial_id = f"{trial.speaker}:{trial.utterance}:{trial.prompt}"
            fh.write(f"{trial_id} {kl:.10g} {trial.category}\n")
    _progress("score-content", trials=len(trials), level=cfg.class_level)
    print(args.out)
    return 0


def _read_score_file(path, trials, content):
    with open(path) as fh:
        lines = [line.split() for line in fh if line.strip()]
    if len(lines) != len(trials):
        raise DigitsvError(f"{path}: {len(lines)} scores for {len(trials)} trials")
    scores = []
    for no, (parts, trial) in enumerate(zip(lines, trials), start=1):
        if len(parts) != 3:
            raise DigitsvError(f"{path} line {no}: expected 3 fields")
        if content:
            expected = f"{trial.speaker}:{trial.utterance}:{trial.prompt}"
            if parts[0] != expected or parts[2] != trial.category:
                raise DigitsvError(f"{path} line {no}: does not match trial list")
            raw = parts[1]
        else:
            if parts[0] != trial.speaker or parts[1] != trial.utterance:
                raise DigitsvError(f"{path} line {no}: does not match trial list")
            raw = parts[2]
        try:
            scores.append(float(raw))
        except ValueError:
            raise DigitsvError(f"{path} line {no}: bad score {raw!r}") from None
    return scores


def _cmd_evaluate(args):
    cfg = load_config(args.config)
    trials = eval_trials.load_trials(args.trials)
    scores = _read_score_file(args.scores, trials, args.content)
    dcf_sets = args.dcf or ["sre08", "sre10"]
    params = [cfg.dcf_params(name) for name in dcf_sets]
    rows = []
    for condition in args.condition:
        key = condition.replace("-", "_")
        eer, dcfs = pipeline.evaluate_condition(trials, scores, key,
                                                dcf_params=params,
                                                negate=args.content)
        rows.append((condition, eer, dcfs))
    names = [f"minDCF{name[-2:]}" for name in dcf_sets]
    print(eval_trials.format_report(rows, dcf_names=names))
    return 0


# --- parser -------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="digitsv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        p.add_argument("--config", default=None, help="key=value config file")
        return p

    p = add("synth", _cmd_synth, help="generate the synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--speakers", type=int, default=20)
    p.add_argument("--test-per-speaker", type=int, default=5)
    p.add_argument("--speaker-scale", type=float, default=0.35)
    p.add_argument("--noise-scale", type=float, default=1.0)
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--tw-mode", choices=synth_mod.TW_MODES, default="whole_prompt")
    p.add_argument("--seed", type=int, default=42)

    p = add("extract-feats", _cmd_extract_feats, help="WAV to DVFE features")
    p.add_argument("--wav", required=True)
    p.add_argument("--kind", choices=("fbank", "mfcc", "spliced"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--context", type=int, default=5)
    p.add_argument("--no-cmvn", action="store_true")

    p = add("train-hmm", _cmd_train_hmm, help="train the word HMM set")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--components", type=int, default=None)
    p.add_argument("--silence-policy", choices=hmm_mod.SILENCE_POLICIES, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = add("train-ubm", _cmd_train_ubm, help="train the unsupervised background GMM")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--components", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = add("train-mlp", _cmd_train_mlp, help="train the frame classifier")
    p.add_argument("--corpus", required=True)
    p.add_argument("--hmm", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dnn-feats-dir", default=None,
                   help="spliced-feature directory (defaults to the corpus features)")
    p.add_argument("--hidden", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--silence-policy", choices=hmm_mod.SILENCE_POLICIES,
                   default="optional_between")
    p.add_argument("--seed", type=int, default=None)

    p = add("align", _cmd_align, help="align one utterance, write DVPO posteriors")
    p.add_argument("--source", choices=("gmm-hmm", "dnn", "dnn-hmm"), required=True)
    p.add_argument("--mode", choices=("fb", "viterbi"), default="fb")
    p.add_argument("--feats")
    p.add_argument("--dnn-feats", default=None)
    p.add_argument("--hmm", default=None)
    p.add_argument("--mlp", default=None)
    p.add_argument("--transcript", default=None)
    p.add_argument("--silence-policy", choices=hmm_mod.SILENCE_POLICIES,
                   default="optional_between")
    p.add_argument("--out", required=True)

    p = add("train-pgmm", _cmd_train_pgmm, help="train phonetic GMMs under an alignment")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--align-dir", default=None)
    p.add_argument("--mlp", default=None)
    p.add_argument("--components", type=int, default=None)
    p.add_argument("--em-iterations", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = add("accumulate-stats", _cmd_accumulate_stats,
            help="Baum-Welch statistics for one utterance")
    p.add_argument("--source", choices=("gmm-hmm", "dnn", "dnn-hmm", "ubm"), required=True)
    p.add_argument("--feats", required=True)
    p.add_argument("--align", default=None)
    p.add_argument("--hmm", default=None)
    p.add_argument("--mlp", default=None)
    p.add_argument("--pgmm", default=None)
    p.add_argument("--ubm", default=None)
    p.add_argument("--out", required=True)

    def add_system_flags(p):
        p.add_argument("--source", choices=("gmm-hmm", "dnn", "dnn-hmm", "ubm"),
                       required=True)
        p.add_argument("--hmm", default=None)
        p.add_argument("--mlp", default=None)
        p.add_argument("--pgmm", default=None)
        p.add_argument("--ubm", default=None)
        p.add_argument("--silence-policy", choices=hmm_mod.SILENCE_POLICIES,
                       default="optional_between")

    p = add("enroll-map", _cmd_enroll_map, help="MAP-enroll all corpus speakers")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--relevance", type=float, default=None)
    add_system_flags(p)

    p = add("train-tv", _cmd_train_tv, help="train the total-variability subspace")
    p.add_argument("--stats", nargs="*", default=None)
    p.add_argument("--stats-dir", default=None)
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    add_system_flags(p)

    p = add("extract-ivector", _cmd_extract_ivector, help="extract i-vectors to a DVIV archive")
    p.add_argument("--tv", required=True)
    p.add_argument("--stats", nargs="*", default=None)
    p.add_argument("--stats-dir", default=None)
    p.add_argument("--out", required=True)

    p = add("train-backend", _cmd_train_backend, help="fit LDA and PLDA on labeled i-vectors")
    p.add_argument("--ivectors", required=True)
    p.add_argument("--utt2spk", required=True)
    p.add_argument("--lda-dim", type=int, default=None)
    p.add_argument("--plda-iterations", type=int, default=None)
    p.add_argument("--out", required=True)

    p = add("score-speaker", _cmd_score_speaker, help="score speaker trials")
    p.add_argument("--corpus", required=True)
    p.add_argument("--trials", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", choices=("map", "ivector"), default="map")
    p.add_argument("--speakers", default=None, help="speaker models (map backend)")
    p.add_argument("--tv", default=None)
    p.add_argument("--plda", default=None)
    p.add_argument("--relevance", type=float, default=None)
    add_system_flags(p)

    p = add("score-content", _cmd_score_content, help="score content trials by KL divergence")
    p.add_argument("--corpus", required=True)
    p.add_argument("--trials", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--hmm", required=True)
    p.add_argument("--mlp", required=True)
    p.add_argument("--hmm-mode", choices=("gmm", "hybrid"), default="hybrid")
    p.add_argument("--level", choices=("digit", "state"), default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--silence-policy", choices=hmm_mod.SILENCE_POLICIES,
                   default="optional_between")

    p = add("evaluate", _cmd_evaluate, help="EER/minDCF report from scores and trials")
    p.add_argument("--trials", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--condition", action="append", required=True,
                   help="TC-IC, TC-TW or TC-IW (repeatable)")
    p.add_argument("--dcf", action="append", choices=("sre08", "sre10"), default=None)
    p.add_argument("--content", action="store_true",
                   help="scores are KL divergences (negated for metrics)")

    return parser


def cli_dispatch(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError(parser.format_usage())
        return args.fn(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DigitsvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
