"""Bit-exact binary file formats tying the pipeline stages together.

Every artifact starts with a 4-byte magic and a little-endian u16 version,
so the first 6 bytes identify type and version unambiguously.  Readers
reject bad magic, unknown versions, truncation and trailing garbage with
byte-positioned errors, and validate payload sanity (finiteness, row
normalization) before handing data back.

Formats:
  DVFE  features     rows u32, cols u32, f32 row-major
  DVPO  posteriors   same layout; rows must sum to 1 within 1e-3
  DVST  statistics   mixtures u32, dim u32, per-mixture N/F/S blocks (f64)
  DVIV  i-vectors    count u32, rank u32, records of (id, normalized, f64s)
  DVMD  models       kind string plus a tagged recursive payload
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import (
    BadMagic,
    CorruptData,
    RowNotNormalized,
    Truncated,
    UnsupportedVersion,
    WrongStateCount,
)
from .features import FeatureKind, FeatureSequence

VERSION = 1

_KIND_BY_COLS = {120: FeatureKind.FBANK120, 60: FeatureKind.MFCC60}


class _Reader:
    """Byte cursor with positioned truncation errors."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise Truncated(self.pos, f"needed {n} bytes at offset {self.pos}, "
                                      f"file has {len(self.data)}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def array(self, dtype, count):
        itemsize = np.dtype(dtype).itemsize
        start = self.pos
        raw = self.take(itemsize * count)
        if np.dtype(dtype).kind == "f":
            with np.errstate(invalid="ignore"):  # garbage bytes may be sNaN
                arr = np.frombuffer(raw, dtype=dtype).astype(np.float64)
            if not np.all(np.isfinite(arr)):
                raise CorruptData(start, "non-finite values in numeric block")
        else:
            arr = np.frombuffer(raw, dtype=dtype)
        return arr

    def string(self) -> str:
        n = self.u16()
        start = self.pos
        raw = self.take(n)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptData(start, f"invalid UTF-8 string: {exc}") from None

    def done(self):
        if self.pos != len(self.data):
            raise CorruptData(self.pos, f"{len(self.data) - self.pos} trailing bytes")


def _read_header(data: bytes, magic: bytes) -> _Reader:
    rd = _Reader(data)
    got = rd.take(4)
    if got != magic:
        raise BadMagic(f"expected magic {magic!r}, found {got!r}")
    version = rd.u16()
    if version != VERSION:
        raise UnsupportedVersion(f"unsupported {magic.decode()} version {version}")
    return rd


def _header(magic: bytes) -> bytes:
    return magic + struct.pack("<H", VERSION)


def _create(path):
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
    return open(path, "wb")


def _check_counts(rd: _Reader, rows: int, cols: int, itemsize: int, what: str):
    remaining = len(rd.data) - rd.pos
    need = rows * cols * itemsize
    if need > remaining:
        raise Truncated(rd.pos, f"{what} promises {need} data bytes, {remaining} left")


# --- DVFE: feature matrices ------------------------------------------------

def write_dvfe(path, feats: FeatureSequence):
    with _create(path) as fh:
        fh.write(_header(b"DVFE"))
        fh.write(struct.pack("<II", feats.n_frames, feats.dim))
        fh.write(feats.frames.astype("<f4").tobytes())


def read_dvfe(path) -> FeatureSequence:
    with open(path, "rb") as fh:
        rd = _read_header(fh.read(), b"DVFE")
    rows, cols = rd.u32(), rd.u32()
    if rows < 1 or cols < 1:
        raise CorruptData(6, f"implausible shape {rows} x {cols}")
    _check_counts(rd, rows, cols, 4, "DVFE")
    frames = rd.array("<f4", rows * cols).reshape(rows, cols)
    rd.done()
    if cols % 120 == 0 and (cols // 120) % 2 == 1:
        kind = FeatureKind.SPLICED if cols != 120 else FeatureKind.FBANK120
    else:
        kind = _KIND_BY_COLS.get(cols)
    if kind is None:
        raise CorruptData(6, f"no feature kind has {cols} dims")
    return FeatureSequence(frames, kind)


# --- DVPO: posterior matrices -------------------------------------------------

def write_dvpo(path, posteriors: np.ndarray):
    posteriors = np.asarray(posteriors, dtype=np.float64)
    with _create(path) as fh:
        fh.write(_header(b"DVPO"))
        fh.write(struct.pack("<II", posteriors.shape[0], posteriors.shape[1]))
        fh.write(posteriors.astype("<f4").tobytes())


def read_dvpo(path, expect_states: int | None = None) -> np.ndarray:
    """Read posteriors; rows within 1e-3 of summing to 1 are renormalized."""
    with open(path, "rb") as fh:
        rd = _read_header(fh.read(), b"DVPO")
    rows, cols = rd.u32(), rd.u32()
    if rows < 1 or cols < 1:
        raise CorruptData(6, f"implausible shape {rows} x {cols}")
    if expect_states is not None and cols != expect_states:
        raise WrongStateCount(f"expected {expect_states} states, file has {cols}")
    _check_counts(rd, rows, cols, 4, "DVPO")
    matrix = rd.array("<f4", rows * cols).reshape(rows, cols)
    rd.done()
    if np.any(matrix < 0):
        raise CorruptData(10, "negative posterior entries")
    sums = matrix.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > 1e-3)[0]
    if bad.size:
        raise RowNotNormalized(
            f"row {bad[0]} sums to {sums[bad[0]]:.6f}, outside 1 +- 1e-3"
        )
    return matrix / sums[:, None]


# --- DVST: Baum-Welch statistics ------------------------------------------------

def write_dvst(path, stats):
    mixtures, dim = stats.f.shape
    with _create(path) as fh:
        fh.write(_header(b"DVST"))
        fh.write(struct.pack("<II", mixtures, dim))
        for m in range(mixtures):
            fh.write(struct.pack("<d", stats.n[m]))
            fh.write(stats.f[m].astype("<f8").tobytes())
            fh.write(stats.s[m].astype("<f8").tobytes())


def read_dvst(path):
    from .pgmm import SuffStats

    with open(path, "rb") as fh:
        rd = _read_header(fh.read(), b"DVST")
    mixtures, dim = rd.u32(), rd.u32()
    if mixtures < 1 or dim < 1:
        raise CorruptData(6, f"implausible shape {mixtures} x {dim}")
    _check_counts(rd, mixtures, 2 * dim + 1, 8, "DVST")
    n = np.empty(mixtures)
    f = np.empty((mixtures, dim))
    s = np.empty((mixtures, dim))
    for m in range(mixtures):
        n[m] = rd.f64()
        f[m] = rd.array("<f8", dim)
        s[m] = rd.array("<f8", dim)
    rd.done()
    if not np.all(np.isfinite(n)) or np.any(n < 0):
        raise CorruptData(10, "invalid zeroth-order statistics")
    return SuffStats(n, f, s)


# --- DVIV: i-vector archives ------------------------------------------------------

def write_dviv(path, entries):
    """``entries`` is a list of (utt_id, IVector)."""
    if not entries:
        raise ValueError("refusing to write an empty i-vector archive")
    rank = entries[0][1].vector.shape[0]
    with _create(path) as fh:
        fh.write(_header(b"DVIV"))
        fh.write(struct.pack("<II", len(entries), rank))
        for utt_id, iv in entries:
            raw = utt_id.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(struct.pack("<B", 1 if iv.normalized else 0))
            fh.write(iv.vector.astype("<f8").tobytes())


def read_dviv(path):
    from .ivector import IVector

    with open(path, "rb") as fh:
        rd = _read_header(fh.read(), b"DVIV")
    count, rank = rd.u32(), rd.u32()
    if count < 1 or rank < 1:
        raise CorruptData(6, f"implausible archive header {count} x {rank}")
    entries = []
    for _ in range(count):
        utt_id = rd.string()
        flag = rd.u8()
        if flag not in (0, 1):
            raise CorruptData(rd.pos - 1, f"invalid normalization flag {flag}")
        vec = rd.array("<f8", rank)
        entries.append((utt_id, IVector(vec, normalized=bool(flag))))
    rd.done()
    return entries


# --- DVMD: tagged model container ---------------------------------------------------

def _write_tagged(out: list, value):
    if isinstance(value, dict):
        out.append(b"D" + struct.pack("<I", len(value)))
        for key in value:  # insertion order keeps writes deterministic
            raw = key.encode("utf-8")
            out.append(struct.pack("<H", len(raw)) + raw)
            _write_tagged(out, value[key])
    elif isinstance(value, np.ndarray):
        if value.dtype.kind == "f":
            arr, code = value.astype("<f8"), b"d"
        elif value.dtype.kind in "iu":
            arr, code = value.astype("<i8"), b"l"
        else:
            raise TypeError(f"cannot serialize array dtype {value.dtype}")
        out.append(b"A" + code + struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        out.append(b"S" + struct.pack("<I", len(raw)) + raw)
    elif isinstance(value, bool):
        out.append(b"B" + (b"\x01" if value else b"\x00"))
    elif isinstance(value, (int, np.integer)):
        out.append(b"I" + struct.pack("<q", int(value)))
    elif isinstance(value, float):
        out.append(b"F" + struct.pack("<d", value))
    elif value is None:
        out.append(b"N")
    elif isinstance(value, (list, tuple)):
        out.append(b"L" + struct.pack("<I", len(value)))
        for item in value:
            _write_tagged(out, item)
    else:
        raise TypeError(f"cannot serialize {type(value).__name__}")


def _read_tagged(rd: _Reader):
    start = rd.pos
    code = rd.take(1)
    if code == b"D":
        count = rd.u32()
        if count > 1_000_000:
            raise CorruptData(start, f"implausible dict size {count}")
        return {rd.string(): _read_tagged(rd) for _ in range(count)}
    if code == b"A":
        dtype_code = rd.take(1)
        if dtype_code not in (b"d", b"l"):
            raise CorruptData(start, f"unknown array dtype {dtype_code!r}")
        ndim = rd.u8()
        if ndim > 8:
            raise CorruptData(start, f"implausible array rank {ndim}")
        shape = tuple(rd.u32() for _ in range(ndim))
        count = 1
        for dim in shape:  # plain int math cannot overflow
            count *= dim
        if count > 200_000_000 or any(dim > 200_000_000 for dim in shape):
            raise CorruptData(start, f"implausible array shape {shape}")
        dtype = "<f8" if dtype_code == b"d" else "<i8"
        return rd.array(dtype, count).reshape(shape)
    if code == b"S":
        n = rd.u32()
        raw = rd.take(n)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptData(start, f"invalid UTF-8: {exc}") from None
    if code == b"B":
        return rd.u8() != 0
    if code == b"I":
        return rd.i64()
    if code == b"F":
        val = rd.f64()
        if not np.isfinite(val):
            raise CorruptData(start, "non-finite scalar")
        return val
    if code == b"N":
        return None
    if code == b"L":
        count = rd.u32()
        if count > 1_000_000:
            raise CorruptData(start, f"implausible list size {count}")
        return [_read_tagged(rd) for _ in range(count)]
    raise CorruptData(start, f"unknown tag {code!r}")


def write_dvmd(path, kind: str, payload: dict):
    out = [_header(b"DVMD")]
    raw = kind.encode("utf-8")
    out.append(struct.pack("<H", len(raw)) + raw)
    _write_tagged(out, payload)
    with _create(path) as fh:
        fh.write(b"".join(out))


def read_dvmd(path, expect_kind: str | None = None):
    with open(path, "rb") as fh:
        rd = _read_header(fh.read(), b"DVMD")
    kind = rd.string()
    payload = _read_tagged(rd)
    rd.done()
    if not isinstance(payload, dict):
        raise CorruptData(6, "model payload must be a dict")
    if expect_kind is not None and kind != expect_kind:
        raise BadMagic(f"expected a {expect_kind!r} container, found {kind!r}")
    return kind, payload


# --- model container adapters -----------------------------------------------

def _require(payload: dict, keys):
    missing = [k for k in keys if k not in payload]
    if missing:
        raise CorruptData(6, f"model payload missing fields {missing}")


def save_diag_gmm(path, gmm):
    write_dvmd(path, "diag_gmm", {
        "weights": gmm.weights, "means": gmm.means, "variances": gmm.variances,
    })


def load_diag_gmm(path):
    from .gmm import DiagGmm

    _, payload = read_dvmd(path, "diag_gmm")
    _require(payload, ("weights", "means", "variances"))
    return DiagGmm(payload["weights"], payload["means"], payload["variances"])


def save_hmm_set(path, hmms):
    write_dvmd(path, "hmm_set", {
        "weights": np.stack([g.weights for g in hmms.gmms]),
        "means": np.stack([g.means for g in hmms.gmms]),
        "variances": np.stack([g.variances for g in hmms.gmms]),
        "self_loop": hmms.self_loop,
    })


def load_hmm_set(path):
    from .gmm import DiagGmm
    from .hmm import HmmSet

    _, payload = read_dvmd(path, "hmm_set")
    _require(payload, ("weights", "means", "variances", "self_loop"))
    gmms = [
        DiagGmm(w, m, v)
        for w, m, v in zip(payload["weights"], payload["means"], payload["variances"])
    ]
    return HmmSet(gmms, payload["self_loop"])


def save_pgmm(path, pgmm):
    write_dvmd(path, "pgmm", {
        "state_ids": np.asarray(pgmm.state_ids, dtype=np.int64),
        "weights": np.stack([g.weights for g in pgmm.gmms]),
        "means": np.stack([g.means for g in pgmm.gmms]),
        "variances": np.stack([g.variances for g in pgmm.gmms]),
    })


def load_pgmm(path):
    from .gmm import DiagGmm
    from .pgmm import Pgmm

    _, payload = read_dvmd(path, "pgmm")
    _require(payload, ("state_ids", "weights", "means", "variances"))
    gmms = [
        DiagGmm(w, m, v)
        for w, m, v in zip(payload["weights"], payload["means"], payload["variances"])
    ]
    return Pgmm(gmms, tuple(int(s) for s in payload["state_ids"]))


def save_mlp(path, model):
    write_dvmd(path, "mlp", {
        "weights": list(model.weights),
        "biases": list(model.biases),
        "input_mean": model.input_mean,
        "input_std": model.input_std,
        "input_kind": model.input_kind.value,
        "class_priors": model.class_priors,
    })


def load_mlp(path):
    from .neural_aligner import MlpModel

    _, payload = read_dvmd(path, "mlp")
    _require(payload, ("weights", "biases", "input_mean", "input_std",
                       "input_kind", "class_priors"))
    return MlpModel(
        weights=list(payload["weights"]),
        biases=list(payload["biases"]),
        input_mean=payload["input_mean"],
        input_std=payload["input_std"],
        input_kind=FeatureKind(payload["input_kind"]),
        class_priors=payload["class_priors"],
    )


def _background_payload(background):
    return {
        "means": background.means,
        "variances": background.variances,
        "state_ids": None if background.state_ids is None
        else np.asarray(background.state_ids, dtype=np.int64),
        "n_components": background.n_components,
        "model_id": background.model_id,
    }


def _background_from(payload):
    from .pgmm import Background

    state_ids = payload["state_ids"]
    return Background(
        means=payload["means"],
        variances=payload["variances"],
        state_ids=None if state_ids is None else tuple(int(s) for s in state_ids),
        n_components=int(payload["n_components"]),
        model_id=payload["model_id"],
    )


def save_background(path, background):
    write_dvmd(path, "background", _background_payload(background))


def load_background(path):
    _, payload = read_dvmd(path, "background")
    _require(payload, ("means", "variances", "state_ids", "n_components", "model_id"))
    return _background_from(payload)


def save_tv(path, tv):
    write_dvmd(path, "tv", {
        "matrix": tv.matrix,
        "background": _background_payload(tv.background),
    })


def load_tv(path):
    from .ivector import TvModel

    _, payload = read_dvmd(path, "tv")
    _require(payload, ("matrix", "background"))
    return TvModel(payload["matrix"], _background_from(payload["background"]))


def save_plda_backend(path, backend):
    write_dvmd(path, "plda_backend", {
        "lda": backend.lda, "mean": backend.mean,
        "between": backend.between, "within": backend.within,
    })


def load_plda_backend(path):
    from .ivector import PldaBackend

    _, payload = read_dvmd(path, "plda_backend")
    _require(payload, ("lda", "mean", "between", "within"))
    return PldaBackend(payload["lda"], payload["mean"],
                       payload["between"], payload["within"])


def save_speaker_models(path, speakers: dict, background_id: str, relevance: float):
    """``speakers`` maps speaker id -> SpeakerModel."""
    ids = sorted(speakers)
    write_dvmd(path, "speaker_models", {
        "background_id": background_id,
        "relevance": float(relevance),
        "ids": ids,
        "means": np.stack([speakers[s].means for s in ids]),
    })


def load_speaker_models(path):
    from .map_speaker import SpeakerModel

    _, payload = read_dvmd(path, "speaker_models")
    _require(payload, ("background_id", "relevance", "ids", "means"))
    return {
        sid: SpeakerModel(means, payload["background_id"], payload["relevance"])
        for sid, means in zip(payload["ids"], payload["means"])
    }
