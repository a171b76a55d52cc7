"""Character-level attention encoder-decoder.

The encoder is a bidirectional gated recurrent network over character
embeddings; each source position i is represented by the concatenation
h_i = [forward state; backward state].  The decoder is a gated recurrent
network whose initial state is a learned projection of the final backward
encoder state; at every step it attends over the h_i with an additive score
v^T tanh(W s + U h_i), consumes [embedding of previous output; context] as
input, and emits a distribution over the output symbols (the alphabet, the
boundary separator, the unknown symbol, and end-of-sequence).

Gate equations, with x the input and h the previous state:

    z = sigmoid(x Wz + h Uz + bz)        update gate
    r = sigmoid(x Wr + h Ur + br)        reset gate
    n = tanh(x Wn + (r * h) Un + bn)     candidate state
    h' = z * h + (1 - z) * n

Two routes compute the same model: a graph route (`batch_nll`) used for
training, built on the autodiff tape over padded, masked batches, and a
plain-array route (`encode` / `attend` / `decode_step` / `greedy_decode` /
`example_nll`) used for decoding and diagnostics.  Tests hold the two routes
to agreement within 1e-10 per example.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .data import EncodedExample, Vocabulary

GATES = ("z", "r", "n")
CELLS = ("enc_fw", "enc_bw", "dec")

# Square state-to-state matrices (three gates per cell, plus the decoder
# initialization projection); these are the ones set to identity at init.
RECURRENT_SQUARE = tuple(f"{cell}.u{g}" for cell in CELLS for g in GATES) + ("init.w",)

BIAS_NAMES = tuple(
    f"{cell}.b{g}" for cell in CELLS for g in GATES
) + ("init.b", "out.b")


class ModelError(ValueError):
    """Inconsistent model configuration or parameters."""


@dataclass(frozen=True)
class OutputMap:
    """Mapping between output slots and vocabulary ids.

    Slot order: end-of-sequence, unknown, separator, then the alphabet.
    Padding, the start symbol, task markers, and language tags are source
    side only and have no output slot.
    """

    slots: tuple[int, ...]
    slot_of: dict[int, int] = field(repr=False, compare=False)

    @classmethod
    def from_vocab(cls, vocab: Vocabulary) -> "OutputMap":
        slots = (vocab.eos_id, vocab.unk_id, vocab.sep_id) + tuple(
            range(vocab.sigma_start, len(vocab))
        )
        return cls(slots, {vid: s for s, vid in enumerate(slots)})

    def __len__(self) -> int:
        return len(self.slots)


def parameter_shapes(
    n_symbols: int, n_out: int, hidden: int, embed_dim: int, attn_dim: int
) -> dict[str, tuple[int, ...]]:
    """Name -> shape for every trainable array.  Weights are stored
    [input x output] so activations multiply on the left."""
    if min(n_symbols, n_out, hidden, embed_dim, attn_dim) < 1:
        raise ModelError("all dimensions must be positive")
    shapes: dict[str, tuple[int, ...]] = {"embed": (n_symbols, embed_dim)}
    for cell, x_dim in (
        ("enc_fw", embed_dim),
        ("enc_bw", embed_dim),
        ("dec", embed_dim + 2 * hidden),
    ):
        for g in GATES:
            shapes[f"{cell}.w{g}"] = (x_dim, hidden)
            shapes[f"{cell}.u{g}"] = (hidden, hidden)
            shapes[f"{cell}.b{g}"] = (1, hidden)
    shapes["attn.w"] = (hidden, attn_dim)
    shapes["attn.u"] = (2 * hidden, attn_dim)
    shapes["attn.v"] = (attn_dim, 1)
    shapes["init.w"] = (hidden, hidden)
    shapes["init.b"] = (1, hidden)
    shapes["out.w"] = (hidden, n_out)
    shapes["out.b"] = (1, n_out)
    return shapes


@dataclass
class ModelParams:
    """The trained arrays plus everything needed to use them: the vocabulary
    and the dimensions.  `arrays` entries are replaced (never mutated) by
    optimizer steps."""

    arrays: dict[str, np.ndarray]
    vocab: Vocabulary
    hidden: int
    embed_dim: int
    attn_dim: int
    out: OutputMap = field(init=False, repr=False)

    def __post_init__(self):
        self.out = OutputMap.from_vocab(self.vocab)
        expected = parameter_shapes(
            len(self.vocab), len(self.out), self.hidden, self.embed_dim, self.attn_dim
        )
        if set(self.arrays) != set(expected):
            missing = set(expected) - set(self.arrays)
            extra = set(self.arrays) - set(expected)
            raise ModelError(f"array names mismatch: missing={missing} extra={extra}")
        for name, shape in expected.items():
            if self.arrays[name].shape != shape:
                raise ModelError(
                    f"{name}: expected shape {shape}, got {self.arrays[name].shape}"
                )

    @property
    def n_out(self) -> int:
        return len(self.out)

    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays.values())


# ---------------------------------------------------------------------------
# batched graph route (training)


@dataclass
class EncodedBatch:
    """Right-padded integer batch: source ids and mask, decoder inputs
    (start symbol followed by the shifted targets), target output slots, and
    the target mask weighting real steps."""

    src: np.ndarray  # [B, n] int64
    src_mask: np.ndarray  # [B, n] float64
    dec_in: np.ndarray  # [B, T] int64
    tgt_slots: np.ndarray  # [B, T] int64
    tgt_mask: np.ndarray  # [B, T] float64
    word_lens: np.ndarray  # [B] int64


def make_batch(mp: ModelParams, encoded: Sequence[EncodedExample]) -> EncodedBatch:
    if not encoded:
        raise ModelError("empty batch")
    vocab, out = mp.vocab, mp.out
    b = len(encoded)
    n = max(len(e.src) for e in encoded)
    t = max(len(e.tgt) for e in encoded)
    src = np.full((b, n), vocab.pad_id, dtype=np.int64)
    src_mask = np.zeros((b, n))
    dec_in = np.full((b, t), vocab.pad_id, dtype=np.int64)
    tgt_slots = np.zeros((b, t), dtype=np.int64)
    tgt_mask = np.zeros((b, t))
    word_lens = np.zeros(b, dtype=np.int64)
    for i, e in enumerate(encoded):
        ls, lt = len(e.src), len(e.tgt)
        src[i, :ls] = e.src
        src_mask[i, :ls] = 1.0
        dec_in[i, 0] = vocab.bos_id
        dec_in[i, 1:lt] = e.tgt[:-1]
        try:
            tgt_slots[i, :lt] = [out.slot_of[int(v)] for v in e.tgt]
        except KeyError as err:
            raise ModelError(f"target symbol id {err} has no output slot") from None
        tgt_mask[i, :lt] = 1.0
        word_lens[i] = e.word_len
    return EncodedBatch(src, src_mask, dec_in, tgt_slots, tgt_mask, word_lens)


def _gru_nodes(P, cell: str, x, h):
    z = ad.sigmoid(
        ad.add_row(
            ad.add(ad.matmul(x, P[f"{cell}.wz"]), ad.matmul(h, P[f"{cell}.uz"])),
            P[f"{cell}.bz"],
        )
    )
    r = ad.sigmoid(
        ad.add_row(
            ad.add(ad.matmul(x, P[f"{cell}.wr"]), ad.matmul(h, P[f"{cell}.ur"])),
            P[f"{cell}.br"],
        )
    )
    n = ad.tanh(
        ad.add_row(
            ad.add(
                ad.matmul(x, P[f"{cell}.wn"]),
                ad.matmul(ad.hadamard(r, h), P[f"{cell}.un"]),
            ),
            P[f"{cell}.bn"],
        )
    )
    return ad.add(ad.hadamard(z, h), ad.hadamard(ad.one_minus(z), n))


def _mask_mix(h_new, h_prev, mask_col: np.ndarray):
    """Keep the previous state on padded rows (mask 0)."""
    if np.all(mask_col == 1.0):
        return h_new
    m = ad.constant(mask_col.reshape(-1, 1))
    return ad.add(ad.scale_rows(h_new, m), ad.scale_rows(h_prev, ad.one_minus(m)))


@dataclass
class _EncNodes:
    states: object  # [(n*B), 2H] node, position-major blocks
    ua_states: object  # [(n*B), A] node: states @ attn.u, precomputed
    s0: object  # [B, H] node
    n: int
    b: int


def _encode_nodes(P, mp: ModelParams, batch: EncodedBatch) -> _EncNodes:
    b, n = batch.src.shape
    h0 = ad.constant(np.zeros((b, mp.hidden)))
    emb = [ad.rows(P["embed"], batch.src[:, t]) for t in range(n)]

    h = h0
    fw = []
    for t in range(n):
        h = _mask_mix(_gru_nodes(P, "enc_fw", emb[t], h), h, batch.src_mask[:, t])
        fw.append(h)
    h = h0
    bw = [None] * n
    for t in reversed(range(n)):
        h = _mask_mix(_gru_nodes(P, "enc_bw", emb[t], h), h, batch.src_mask[:, t])
        bw[t] = h

    per_pos = [ad.concat_cols([fw[t], bw[t]]) for t in range(n)]
    states = ad.concat_rows(per_pos) if n > 1 else per_pos[0]
    ua_states = ad.matmul(states, P["attn.u"])
    s0 = ad.tanh(ad.add_row(ad.matmul(h, P["init.w"]), P["init.b"]))
    return _EncNodes(states, ua_states, s0, n, b)


def _attend_nodes(P, enc: _EncNodes, s, src_mask: np.ndarray):
    """Additive attention for a whole batch at one decoder step.

    The per-position states are stacked position-major, so one tile of the
    query and a single [.,A] x [A,1] product scores every (position, row)
    pair at once; scores reshape to [B, n] for the masked softmax.
    """
    q = ad.matmul(s, P["attn.w"])  # [B, A]
    e = ad.matmul(
        ad.tanh(ad.add(ad.tile_rows(q, enc.n), enc.ua_states)), P["attn.v"]
    )  # [(n*B), 1]
    scores = ad.transpose(ad.reshape(e, (enc.n, enc.b)))  # [B, n]
    alpha = ad.softmax(scores, mask=src_mask)
    flat = ad.reshape(ad.transpose(alpha), (enc.n * enc.b, 1))
    context = ad.sum_blocks(ad.scale_rows(enc.states, flat), enc.n)  # [B, 2H]
    return context, alpha


def batch_nll(
    mp: ModelParams,
    batch: EncodedBatch,
    arrays: dict[str, np.ndarray] | None = None,
) -> ad.Node:
    """Sum of the per-example negative log-likelihoods of the batch targets
    under teacher forcing (a scalar node; `aux` carries the per-row sums).
    Padded positions contribute exactly nothing."""
    P = {k: ad.param(k, v) for k, v in (arrays or mp.arrays).items()}
    enc = _encode_nodes(P, mp, batch)
    b, t_max = batch.dec_in.shape
    s = enc.s0
    total = None
    per_row = np.zeros(b)
    for t in range(t_max):
        context, _ = _attend_nodes(P, enc, s, batch.src_mask)
        x = ad.concat_cols([ad.rows(P["embed"], batch.dec_in[:, t]), context])
        s = _gru_nodes(P, "dec", x, s)
        dist = ad.softmax(ad.add_row(ad.matmul(s, P["out.w"]), P["out.b"]))
        step = ad.nll_sum(dist, batch.tgt_slots[:, t], batch.tgt_mask[:, t])
        per_row = per_row + step.aux
        total = step if total is None else ad.add(total, step)
    total.aux = per_row
    return total


# ---------------------------------------------------------------------------
# plain-array route (decoding, scoring)


@dataclass
class EncoderStates:
    states: np.ndarray  # [n, 2H]
    ua_states: np.ndarray  # [n, A]
    s0: np.ndarray  # [1, H]


@dataclass
class DecoderState:
    s: np.ndarray  # [1, H]
    dist: np.ndarray  # [n_out]
    alpha: np.ndarray  # [n]


@dataclass(frozen=True)
class GreedyResult:
    text: str
    truncated: bool


def _np_sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def _np_gru(a, cell, x, h):
    z = _np_sigmoid(x @ a[f"{cell}.wz"] + h @ a[f"{cell}.uz"] + a[f"{cell}.bz"])
    r = _np_sigmoid(x @ a[f"{cell}.wr"] + h @ a[f"{cell}.ur"] + a[f"{cell}.br"])
    n = np.tanh(x @ a[f"{cell}.wn"] + (r * h) @ a[f"{cell}.un"] + a[f"{cell}.bn"])
    return z * h + (1.0 - z) * n


def encode(mp: ModelParams, src_ids: np.ndarray) -> EncoderStates:
    """Run the bidirectional encoder over one source sequence."""
    src_ids = np.asarray(src_ids, dtype=np.int64)
    if src_ids.ndim != 1 or src_ids.size == 0:
        raise ModelError("source must be a non-empty id vector")
    a = mp.arrays
    emb = a["embed"][src_ids]  # [n, E]
    n = len(src_ids)
    h = np.zeros((1, mp.hidden))
    fw = np.empty((n, mp.hidden))
    for t in range(n):
        h = _np_gru(a, "enc_fw", emb[t : t + 1], h)
        fw[t] = h[0]
    h = np.zeros((1, mp.hidden))
    bw = np.empty((n, mp.hidden))
    for t in reversed(range(n)):
        h = _np_gru(a, "enc_bw", emb[t : t + 1], h)
        bw[t] = h[0]
    states = np.concatenate([fw, bw], axis=1)
    s0 = np.tanh(h @ a["init.w"] + a["init.b"])
    return EncoderStates(states, states @ a["attn.u"], s0)


def attend(mp: ModelParams, enc: EncoderStates, s: np.ndarray):
    """Attention context and weights for one decoder state [1, H]."""
    a = mp.arrays
    e = (np.tanh(s @ a["attn.w"] + enc.ua_states) @ a["attn.v"]).ravel()  # [n]
    e = np.exp(e - e.max())
    alpha = e / e.sum()
    context = (alpha @ enc.states).reshape(1, -1)  # [1, 2H]
    return context, alpha


def decode_step(
    mp: ModelParams, enc: EncoderStates, s: np.ndarray, prev_id: int
) -> DecoderState:
    """Advance the decoder one step from state `s` given the previous output
    symbol (a vocabulary id); returns the new state and the next-symbol
    distribution over output slots."""
    a = mp.arrays
    context, alpha = attend(mp, enc, s)
    x = np.concatenate([a["embed"][prev_id : prev_id + 1], context], axis=1)
    s_new = _np_gru(a, "dec", x, s)
    logits = (s_new @ a["out.w"] + a["out.b"]).ravel()
    e = np.exp(logits - logits.max())
    return DecoderState(s_new, e / e.sum(), alpha)


def max_decode_len(word_len: int) -> int:
    """Decoding-length cap: twice the word length plus five."""
    return 2 * word_len + 5


def greedy_decode(
    mp: ModelParams, src_ids: np.ndarray, max_len: int | None = None
) -> GreedyResult:
    """Greedily decode one source sequence to text.  Decoding stops at the
    end symbol or after `max_len` emitted symbols, whichever comes first;
    hitting the cap sets `truncated`."""
    src_ids = np.asarray(src_ids, dtype=np.int64)
    if max_len is None:
        max_len = max_decode_len(len(src_ids))
    enc = encode(mp, src_ids)
    s = enc.s0
    prev = mp.vocab.bos_id
    pieces: list[str] = []
    for _ in range(max_len):
        st = decode_step(mp, enc, s, prev)
        vid = mp.out.slots[int(np.argmax(st.dist))]
        if vid == mp.vocab.eos_id:
            return GreedyResult("".join(pieces), False)
        pieces.append(mp.vocab.render(vid))
        s, prev = st.s, vid
    return GreedyResult("".join(pieces), True)


def segment_word(mp: ModelParams, encoded: EncodedExample) -> GreedyResult:
    """Greedy segmentation with the standard length cap for the word."""
    return greedy_decode(mp, encoded.src, max_decode_len(encoded.word_len))


def example_nll(mp: ModelParams, encoded: EncodedExample) -> float:
    """Teacher-forced negative log-likelihood of one example via the
    plain-array route (cross-check for the graph route)."""
    enc = encode(mp, encoded.src)
    s = enc.s0
    prev = mp.vocab.bos_id
    total = 0.0
    for tid in encoded.tgt:
        st = decode_step(mp, enc, s, prev)
        p = st.dist[mp.out.slot_of[int(tid)]]
        total -= float(np.log(max(p, ad.PROB_FLOOR)))
        s, prev = st.s, int(tid)
    return total
