"""Training: ADADELTA over shuffled minibatches with periodic dev selection.

One replicate trains for up to `max_epochs` epochs, decoding the dev set
greedily every `eval_every` epochs and keeping the parameters of the best
dev-accuracy epoch (earliest epoch on ties).  Experiments average several
replicates that share one training corpus (augmentation drawn once from the
experiment seed) but use distinct initialization/shuffling seeds.

Checkpoints are a self-contained binary format: magic, format version,
JSON metadata, the vocabulary, every parameter array in float64
little-endian, and a SHA-256 checksum over the whole body.  Writing is
atomic (temp file + rename), and a byte-identical file reloads to
byte-identical arrays.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from . import model as M
from .data import (
    DataError,
    Dataset,
    SegExample,
    Vocabulary,
    build_training_corpus,
    build_xling_corpus,
    decorate_for_mode,
    encode_example,
)
from .evaluation import EvalReport, evaluate, token_accuracy


class TrainingDivergedError(RuntimeError):
    """The loss left the finite range; the run cannot continue."""


class CheckpointError(Exception):
    """Base for checkpoint file problems."""


class CheckpointVersionError(CheckpointError):
    """The file's format version is not supported."""


class CheckpointIntegrityError(CheckpointError):
    """The file is not a checkpoint or fails its checksum."""


# Auxiliary-corpus multipliers that worked best per language in the
# reference experiments; used when m is not given explicitly.
DEFAULT_M = {
    "MTT-U": {"MX": 4, "NA": 4, "WX": 4, "YN": 1},
    "MTT-R": {"MX": 8, "NA": 8, "WX": 4, "YN": 8},
    "DA-U": {"MX": 1, "NA": 2, "WX": 1, "YN": 1},
    "DA-R": {"MX": 4, "NA": 8, "WX": 4, "YN": 4},
}


@dataclass
class TrainConfig:
    mode: str = "S2S"
    m: int | None = None  # None: DEFAULT_M for a known language
    seed: int = 1
    max_epochs: int = 200
    eval_every: int = 5
    batch_size: int = 20
    replicates: int = 5
    hidden: int = 100
    embed_dim: int = 300
    attn_dim: int | None = None  # None: same as hidden
    rho: float = 0.95
    eps: float = 1e-6
    stop_at_perfect_dev: bool = True

    @property
    def attention_dim(self) -> int:
        return self.attn_dim if self.attn_dim is not None else self.hidden


def resolve_m(config: TrainConfig, lang: str | None) -> int:
    """Auxiliary multiplier for a run: explicit value, else the per-language
    default, else an error for unknown languages."""
    if config.mode in ("S2S", "XLING"):
        return 0
    if config.m is not None:
        return config.m
    table = DEFAULT_M.get(config.mode, {})
    if lang in table:
        return table[lang]
    raise DataError(
        f"no default m for mode {config.mode} and language {lang!r}; set m explicitly"
    )


# ---------------------------------------------------------------------------
# initialization and optimizer


def init_params(
    vocab: Vocabulary,
    hidden: int = 100,
    embed_dim: int = 300,
    attn_dim: int | None = None,
    seed: int = 0,
) -> M.ModelParams:
    """Fresh parameters: identity for the square state-to-state matrices,
    zero biases, uniform +-0.08 everywhere else (drawn in sorted-name order
    so a seed pins every array)."""
    attn_dim = attn_dim if attn_dim is not None else hidden
    out = M.OutputMap.from_vocab(vocab)
    shapes = M.parameter_shapes(len(vocab), len(out), hidden, embed_dim, attn_dim)
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}
    for name in sorted(shapes):
        shape = shapes[name]
        if name in M.RECURRENT_SQUARE:
            arrays[name] = np.eye(shape[0])
        elif name in M.BIAS_NAMES:
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = rng.uniform(-0.08, 0.08, shape)
    return M.ModelParams(arrays, vocab, hidden, embed_dim, attn_dim)


@dataclass
class AdadeltaState:
    sq_grad: dict[str, np.ndarray]
    sq_delta: dict[str, np.ndarray]

    @classmethod
    def zeros(cls, arrays: Mapping[str, np.ndarray]) -> "AdadeltaState":
        return cls(
            {k: np.zeros_like(v) for k, v in arrays.items()},
            {k: np.zeros_like(v) for k, v in arrays.items()},
        )


def adadelta_step(
    arrays: dict[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdadeltaState,
    rho: float = 0.95,
    eps: float = 1e-6,
) -> None:
    """One accumulator-scaled update per array:

        E[g^2]  <- rho E[g^2] + (1-rho) g^2
        delta   =  -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
        E[dx^2] <- rho E[dx^2] + (1-rho) delta^2

    Arrays are replaced, not written in place, so graphs already built keep
    their values."""
    for name, g in grads.items():
        acc_g = rho * state.sq_grad[name] + (1.0 - rho) * g * g
        delta = -np.sqrt(state.sq_delta[name] + eps) / np.sqrt(acc_g + eps) * g
        state.sq_grad[name] = acc_g
        state.sq_delta[name] = rho * state.sq_delta[name] + (1.0 - rho) * delta * delta
        arrays[name] = arrays[name] + delta


# ---------------------------------------------------------------------------
# one replicate


@dataclass(frozen=True)
class ReplicateResult:
    seed: int
    eval_points: tuple[tuple[int, float], ...]  # (epoch, dev accuracy)
    selected_epoch: int
    selected_dev_accuracy: float
    test_reports: dict[str, EvalReport] | None = None  # key "" for monolingual


def select_best(eval_points: Sequence[tuple[int, float]]) -> tuple[int, float]:
    """Best dev accuracy, earliest epoch on ties."""
    if not eval_points:
        raise ValueError("no evaluation points")
    best_epoch, best_acc = eval_points[0]
    for epoch, acc in eval_points[1:]:
        if acc > best_acc:
            best_epoch, best_acc = epoch, acc
    return best_epoch, best_acc


def train(
    config: TrainConfig,
    corpus: Sequence[SegExample],
    dev: Sequence[SegExample],
    vocab: Vocabulary,
    seed: int,
    init_arrays: dict[str, np.ndarray] | None = None,
    on_eval: Callable[[int, int, float], None] | None = None,
) -> tuple[M.ModelParams, ReplicateResult]:
    """Train one replicate and return the dev-selected parameters.

    Epoch regime: shuffle, then stable-sort by source length so batches hold
    similar lengths (little padding), then visit the batches in shuffled
    order.  The loss per batch is the sum of example negative
    log-likelihoods.  Dev accuracy is exact-match over greedy decodes; a
    perfect dev score ends the run early (no later epoch could be selected
    over it)."""
    if not corpus:
        raise DataError("empty training corpus")
    if not dev:
        raise DataError("model selection needs a dev set")
    if config.max_epochs < 1:
        raise ValueError("max_epochs must be at least 1")
    if init_arrays is not None:
        mp = M.ModelParams(
            dict(init_arrays), vocab, config.hidden, config.embed_dim,
            config.attention_dim,
        )
    else:
        mp = init_params(
            vocab, config.hidden, config.embed_dim, config.attention_dim, seed
        )
    encoded = [encode_example(vocab, ex) for ex in corpus]
    enc_dev = [encode_example(vocab, ex) for ex in dev]
    dev_targets = [ex.target for ex in dev]
    lens = np.array([len(e.src) for e in encoded])
    state = AdadeltaState.zeros(mp.arrays)
    rng = np.random.default_rng(seed)

    eval_points: list[tuple[int, float]] = []
    best: tuple[int, float, dict[str, np.ndarray]] | None = None
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(len(encoded))
        order = perm[np.argsort(lens[perm], kind="stable")]
        batches = [
            order[i : i + config.batch_size]
            for i in range(0, len(order), config.batch_size)
        ]
        for bi in rng.permutation(len(batches)):
            batch = M.make_batch(mp, [encoded[i] for i in batches[bi]])
            loss = M.batch_nll(mp, batch)
            if not np.isfinite(loss.value):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} (seed {seed})"
                )
            grads = ad.backward(loss)
            adadelta_step(mp.arrays, grads, state, config.rho, config.eps)
        if epoch % config.eval_every == 0 or epoch == config.max_epochs:
            preds = [M.segment_word(mp, e).text for e in enc_dev]
            acc = token_accuracy(preds, dev_targets)
            eval_points.append((epoch, acc))
            if best is None or acc > best[1]:
                best = (epoch, acc, {k: v.copy() for k, v in mp.arrays.items()})
            if on_eval is not None:
                on_eval(seed, epoch, acc)
            if config.stop_at_perfect_dev and acc == 1.0:
                break

    best_epoch, best_acc, best_arrays = best
    selected = select_best(eval_points)
    assert selected == (best_epoch, best_acc)
    best_mp = M.ModelParams(
        best_arrays, vocab, config.hidden, config.embed_dim, config.attention_dim
    )
    return best_mp, ReplicateResult(
        seed=seed,
        eval_points=tuple(eval_points),
        selected_epoch=best_epoch,
        selected_dev_accuracy=best_acc,
    )


# ---------------------------------------------------------------------------
# experiments: several replicates over one corpus


@dataclass(frozen=True)
class RunHistory:
    replicates: tuple[ReplicateResult, ...]

    def dev_summary(self) -> tuple[float, float]:
        accs = [r.selected_dev_accuracy for r in self.replicates]
        return float(np.mean(accs)), float(np.std(accs))

    def test_summary(self) -> dict[str, dict[str, tuple[float, float]]]:
        """Per language-key mean/std of accuracy, precision, recall, F1
        across replicates (empty if no test reports were computed)."""
        out: dict[str, dict[str, tuple[float, float]]] = {}
        if not self.replicates or self.replicates[0].test_reports is None:
            return out
        for key in self.replicates[0].test_reports:
            metrics = {}
            for attr in ("accuracy", "precision", "recall", "f1"):
                vals = [
                    getattr(r.test_reports[key], attr) for r in self.replicates
                ]
                metrics[attr] = (float(np.mean(vals)), float(np.std(vals)))
            out[key] = metrics
        return out


def test_report(
    mp: M.ModelParams, ds: Dataset, mode: str, lang: str | None
) -> EvalReport:
    """Greedy-decode a held-out set and score it."""
    preds = [
        M.segment_word(mp, encode_example(mp.vocab, decorate_for_mode(ex, mode, lang))).text
        for ex in ds
    ]
    return evaluate(
        preds, [ex.target for ex in ds], sources=[ex.source for ex in ds]
    )


def run_replicates(
    config: TrainConfig,
    train_data: Dataset | Mapping[str, Dataset],
    dev_data: Dataset | Mapping[str, Dataset],
    test_data: Dataset | Mapping[str, Dataset] | None = None,
    aux_words: Sequence[str] | None = None,
    on_eval: Callable[[int, int, float], None] | None = None,
) -> tuple[RunHistory, list[M.ModelParams]]:
    """Run `config.replicates` training replicates over one shared corpus.

    The corpus (including any augmentation draw) is built once from
    `config.seed`; replicate r then trains with seed config.seed + r.  For
    multilingual training pass per-language mappings; dev selection pools
    the languages, test reports stay per language.  Diverged replicates are
    skipped with a warning unless none survive."""
    mode = config.mode
    if mode == "XLING":
        if not isinstance(train_data, Mapping) or not isinstance(dev_data, Mapping):
            raise DataError("multilingual training needs per-language data mappings")
        corpus = build_xling_corpus(train_data)
        dev_examples = [
            decorate_for_mode(ex, mode, lang=tag)
            for tag in sorted(dev_data)
            for ex in dev_data[tag]
        ]
    else:
        if isinstance(train_data, Mapping):
            raise DataError(f"mode {mode} trains on a single dataset")
        m = resolve_m(config, train_data.lang)
        corpus = build_training_corpus(
            train_data, mode, m=m, aux_words=aux_words, seed=config.seed
        )
        dev_examples = [decorate_for_mode(ex, mode) for ex in dev_data]
    vocab = Vocabulary.build(corpus)

    replicates: list[ReplicateResult] = []
    models: list[M.ModelParams] = []
    for r in range(config.replicates):
        seed = config.seed + r
        try:
            mp, rep = train(config, corpus, dev_examples, vocab, seed, on_eval=on_eval)
        except TrainingDivergedError as err:
            warnings.warn(f"skipping diverged replicate: {err}")
            continue
        if test_data is not None:
            if mode == "XLING":
                reports = {
                    tag: test_report(mp, test_data[tag], mode, tag)
                    for tag in sorted(test_data)
                }
            else:
                reports = {"": test_report(mp, test_data, mode, None)}
            rep = replace(rep, test_reports=reports)
        replicates.append(rep)
        models.append(mp)
    if not replicates:
        raise TrainingDivergedError("every replicate diverged")
    return RunHistory(tuple(replicates)), models


# ---------------------------------------------------------------------------
# checkpoints


MAGIC = b"MSEGCKPT"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, mp: M.ModelParams, meta: Mapping | None = None) -> None:
    """Write a checkpoint atomically.  `meta` entries must be JSON-safe; the
    model dimensions and vocabulary layout are always stored."""
    full_meta = {
        "hidden": mp.hidden,
        "embed_dim": mp.embed_dim,
        "attn_dim": mp.attn_dim,
        "sigma_start": mp.vocab.sigma_start,
        **(dict(meta) if meta else {}),
    }
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<I", CHECKPOINT_VERSION)
    meta_bytes = json.dumps(full_meta, sort_keys=True, separators=(",", ":")).encode()
    buf += struct.pack("<I", len(meta_bytes)) + meta_bytes
    buf += struct.pack("<I", len(mp.vocab.symbols))
    for sym in mp.vocab.symbols:
        sb = sym.encode()
        buf += struct.pack("<H", len(sb)) + sb
    buf += struct.pack("<I", len(mp.arrays))
    for name in sorted(mp.arrays):
        arr = mp.arrays[name]
        nb = name.encode()
        buf += struct.pack("<H", len(nb)) + nb
        buf += struct.pack("<B", arr.ndim)
        for d in arr.shape:
            buf += struct.pack("<I", d)
        buf += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    buf += hashlib.sha256(buf).digest()
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(buf)
    os.replace(tmp, path)


class _Cursor:
    def __init__(self, blob: bytes, offset: int):
        self.blob = blob
        self.off = offset

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.blob):
            raise CheckpointIntegrityError("truncated checkpoint")
        piece = self.blob[self.off : self.off + n]
        self.off += n
        return piece

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]


def load_checkpoint(path) -> tuple[M.ModelParams, dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 4 + 32 or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointIntegrityError(f"{path}: not a model checkpoint")
    cur = _Cursor(blob, len(MAGIC))
    version = cur.unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, expected {CHECKPOINT_VERSION}"
        )
    if hashlib.sha256(blob[:-32]).digest() != blob[-32:]:
        raise CheckpointIntegrityError(f"{path}: checksum mismatch")
    body = _Cursor(blob[:-32], cur.off)
    try:
        meta = json.loads(body.take(body.unpack("<I")).decode())
        symbols = tuple(
            body.take(body.unpack("<H")).decode() for _ in range(body.unpack("<I"))
        )
        arrays: dict[str, np.ndarray] = {}
        for _ in range(body.unpack("<I")):
            name = body.take(body.unpack("<H")).decode()
            ndim = body.unpack("<B")
            shape = tuple(body.unpack("<I") for _ in range(ndim))
            count = int(np.prod(shape)) if shape else 1
            arrays[name] = (
                np.frombuffer(body.take(count * 8), dtype="<f8").reshape(shape).copy()
            )
        if body.off != len(body.blob):
            raise CheckpointIntegrityError(f"{path}: trailing bytes")
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointIntegrityError(f"{path}: malformed checkpoint: {err}") from None
    vocab = Vocabulary.from_symbols(symbols, meta["sigma_start"])
    mp = M.ModelParams(
        arrays, vocab, meta["hidden"], meta["embed_dim"], meta["attn_dim"]
    )
    return mp, meta
