"""Small encoder-decoder translation model.

A pre-norm transformer sized for desk-scale experiments (2 layers, 2
heads, 32-dimensional states by default). It has two jobs besides
translating: exposing encoder and decoder hidden states for the
discriminative aligner, and exposing encoder-decoder attention weights
for the attention-average alignment baseline.

Decoder states are teacher-forced: the gold target feeds the decoder
input, shifted right behind a begin token. The state for target token j
is the final decoder layer's output at the position holding that token;
attention rows are taken at the positions predicting each target token.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .corpus import BOS_ID, EOS_ID, ParallelCorpus, SentencePair, Vocabulary
from .numerics import (
    Matrix,
    ParamStore,
    adam_step,
    add,
    concat_cols,
    constant,
    gather_rows,
    layer_norm,
    matmul,
    relu,
    row_softmax,
    scale,
    softmax_xent_sum,
    transpose,
)

MASK_VALUE = -1e9


class VocabularyOverflow(ValueError):
    """A token id fell outside the embedding table."""


@dataclass(frozen=True)
class Seq2SeqConfig:
    src_vocab_size: int
    tgt_vocab_size: int
    layers: int = 2
    heads: int = 2
    dim: int = 32
    ff_dim: int = 64
    tie_embeddings: bool = False
    learning_rate: float = 3e-3
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.layers, self.heads, self.dim, self.ff_dim) < 1:
            raise ValueError("all dimensions must be >= 1")
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by {self.heads} heads")
        if min(self.src_vocab_size, self.tgt_vocab_size) < 5:
            raise ValueError("vocabulary must cover the four reserved entries")
        if self.tie_embeddings and self.src_vocab_size != self.tgt_vocab_size:
            raise ValueError("tied embeddings need equal vocabulary sizes")


@dataclass
class HiddenStates:
    encoder: Matrix  # N x d
    decoder: Matrix  # M x d


@dataclass(frozen=True)
class AttentionStack:
    """Encoder-decoder attention weights, one M x N matrix per head."""

    layers: tuple[tuple[np.ndarray, ...], ...]

    @property
    def final(self) -> tuple[np.ndarray, ...]:
        return self.layers[-1]

    def averaged(self) -> np.ndarray:
        """Mean over the final layer's heads."""
        return np.mean(np.stack(self.final), axis=0)


@dataclass
class Seq2SeqModel:
    config: Seq2SeqConfig
    store: ParamStore
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    loss_history: list[float] = field(default_factory=list)


def positional_encoding(n: int, dim: int) -> np.ndarray:
    pos = np.arange(n, dtype=np.float64)[:, None]
    k = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * (k // 2) / dim)
    out = np.where(k % 2 == 0, np.sin(angle), np.cos(angle))
    return out


def init_params(config: Seq2SeqConfig) -> ParamStore:
    store = ParamStore(seed=config.seed)
    rng = store.rng
    d, ff, hd = config.dim, config.ff_dim, config.dim // config.heads

    def uniform(name, rows, cols, fan_in):
        limit = 1.0 / math.sqrt(fan_in)
        store.add(name, rng.uniform(-limit, limit, size=(rows, cols)))

    def norm_pair(prefix):
        store.add(prefix + ".g", np.ones((1, d)))
        store.add(prefix + ".b", np.zeros((1, d)))

    if config.tie_embeddings:
        store.add("embed", rng.normal(0.0, 1.0 / math.sqrt(d),
                                      size=(config.src_vocab_size, d)))
    else:
        store.add("src_embed", rng.normal(0.0, 1.0 / math.sqrt(d),
                                          size=(config.src_vocab_size, d)))
        store.add("tgt_embed", rng.normal(0.0, 1.0 / math.sqrt(d),
                                          size=(config.tgt_vocab_size, d)))

    def attn_block(prefix):
        for h in range(config.heads):
            uniform(f"{prefix}.h{h}.wq", d, hd, d)
            uniform(f"{prefix}.h{h}.wk", d, hd, d)
            uniform(f"{prefix}.h{h}.wv", d, hd, d)
        uniform(f"{prefix}.wo", d, d, d)

    def ff_block(prefix):
        uniform(f"{prefix}.w1", d, ff, d)
        store.add(f"{prefix}.b1", np.zeros((1, ff)))
        uniform(f"{prefix}.w2", ff, d, ff)
        store.add(f"{prefix}.b2", np.zeros((1, d)))

    for l in range(config.layers):
        attn_block(f"enc{l}.attn")
        ff_block(f"enc{l}.ff")
        norm_pair(f"enc{l}.ln1")
        norm_pair(f"enc{l}.ln2")
        attn_block(f"dec{l}.self")
        attn_block(f"dec{l}.cross")
        ff_block(f"dec{l}.ff")
        norm_pair(f"dec{l}.ln1")
        norm_pair(f"dec{l}.ln2")
        norm_pair(f"dec{l}.ln3")
    norm_pair("enc.ln_out")
    norm_pair("dec.ln_out")
    # near-zero output projection keeps the initial loss at ln(vocab)
    store.add("out.w", rng.normal(0.0, 1e-3, size=(d, config.tgt_vocab_size)))
    store.add("out.b", np.zeros((1, config.tgt_vocab_size)))
    return store


def _embed(table: Matrix, ids: Sequence[int], dim: int) -> Matrix:
    if ids and max(ids) >= table.rows:
        raise VocabularyOverflow(
            f"token id {max(ids)} outside table of {table.rows} rows")
    x = scale(gather_rows(table, ids), math.sqrt(dim))
    return add(x, constant(positional_encoding(len(ids), dim)))


def _attention(store: ParamStore, prefix: str, x: Matrix, memory: Matrix,
               config: Seq2SeqConfig, mask: Matrix | None = None,
               capture: list | None = None) -> Matrix:
    head_dim = config.dim // config.heads
    heads = []
    for h in range(config.heads):
        q = matmul(x, store[f"{prefix}.h{h}.wq"])
        k = matmul(memory, store[f"{prefix}.h{h}.wk"])
        v = matmul(memory, store[f"{prefix}.h{h}.wv"])
        scores = scale(matmul(q, transpose(k)), 1.0 / math.sqrt(head_dim))
        if mask is not None:
            scores = add(scores, mask)
        weights = row_softmax(scores)
        if capture is not None:
            capture.append(weights.data.copy())
        heads.append(matmul(weights, v))
    return matmul(concat_cols(heads), store[f"{prefix}.wo"])


def _ff(store: ParamStore, prefix: str, x: Matrix) -> Matrix:
    hidden = relu(add(matmul(x, store[f"{prefix}.w1"]), store[f"{prefix}.b1"]))
    return add(matmul(hidden, store[f"{prefix}.w2"]), store[f"{prefix}.b2"])


def _ln(store: ParamStore, prefix: str, x: Matrix) -> Matrix:
    return layer_norm(x, store[f"{prefix}.g"], store[f"{prefix}.b"])


def _causal_mask(n: int) -> Matrix:
    return constant(np.triu(np.full((n, n), MASK_VALUE), k=1))


def _src_table(store: ParamStore) -> Matrix:
    return store["embed"] if "embed" in store else store["src_embed"]


def _tgt_table(store: ParamStore) -> Matrix:
    return store["embed"] if "embed" in store else store["tgt_embed"]


def encode_source(model: Seq2SeqModel, src_ids: Sequence[int]) -> Matrix:
    store, config = model.store, model.config
    x = _embed(_src_table(store), src_ids, config.dim)
    for l in range(config.layers):
        normed = _ln(store, f"enc{l}.ln1", x)
        x = add(x, _attention(store, f"enc{l}.attn", normed, normed, config))
        x = add(x, _ff(store, f"enc{l}.ff", _ln(store, f"enc{l}.ln2", x)))
    return _ln(store, "enc.ln_out", x)


def decode_states(model: Seq2SeqModel, tgt_input_ids: Sequence[int],
                  encoder_out: Matrix,
                  capture_layers: list | None = None) -> Matrix:
    store, config = model.store, model.config
    x = _embed(_tgt_table(store), tgt_input_ids, config.dim)
    mask = _causal_mask(len(tgt_input_ids))
    for l in range(config.layers):
        normed = _ln(store, f"dec{l}.ln1", x)
        x = add(x, _attention(store, f"dec{l}.self", normed, normed, config,
                              mask=mask))
        capture = [] if capture_layers is not None else None
        x = add(x, _attention(store, f"dec{l}.cross",
                              _ln(store, f"dec{l}.ln2", x), encoder_out,
                              config, capture=capture))
        if capture_layers is not None:
            capture_layers.append(capture)
        x = add(x, _ff(store, f"dec{l}.ff", _ln(store, f"dec{l}.ln3", x)))
    return _ln(store, "dec.ln_out", x)


def pair_loss(model: Seq2SeqModel, pair: SentencePair) -> tuple[Matrix, int]:
    """Teacher-forced cross-entropy summed over target positions.

    The M+1 predictions cover the M target tokens plus the end token.
    """
    src_ids = model.src_vocab.encode(pair.source)
    tgt_ids = model.tgt_vocab.encode(pair.target)
    enc = encode_source(model, src_ids)
    dec = decode_states(model, [BOS_ID] + tgt_ids, enc)
    logits = add(matmul(dec, model.store["out.w"]), model.store["out.b"])
    gold = tgt_ids + [EOS_ID]
    return softmax_xent_sum(logits, gold), len(gold)


def pretrain_mt(corpus: ParallelCorpus, config: Seq2SeqConfig, steps: int,
                batch_size: int = 8) -> Seq2SeqModel:
    """Train on bitext; deterministic for a given config seed.

    Per-step loss (mean nats per target token) lands in loss_history.
    """
    if not corpus:
        raise ValueError("empty training corpus")
    src_vocab = Vocabulary.build((p.source for p in corpus),
                                 max_size=config.src_vocab_size)
    tgt_vocab = Vocabulary.build((p.target for p in corpus),
                                 max_size=config.tgt_vocab_size)
    model = Seq2SeqModel(config, init_params(config), src_vocab, tgt_vocab)
    shuffle_rng = np.random.default_rng(config.seed + 1)

    order: list[int] = []
    for _ in range(steps):
        batch = []
        while len(batch) < batch_size:
            if not order:
                order = list(shuffle_rng.permutation(len(corpus)))
            batch.append(corpus[order.pop()])
        model.store.zero_grads()
        losses, tokens = [], 0
        for pair in batch:
            loss, n = pair_loss(model, pair)
            losses.append(loss)
            tokens += n
        total = losses[0]
        for extra in losses[1:]:
            total = add(total, extra)
        total = scale(total, 1.0 / tokens)
        total.backward()
        adam_step(model.store, config.learning_rate)
        model.loss_history.append(total.item())
    return model


def encode_pair(model: Seq2SeqModel,
                pair: SentencePair) -> tuple[HiddenStates, AttentionStack]:
    """Teacher-forced states and attention for one sentence pair.

    Encoder rows cover the N source tokens. Decoder row j is the state
    at target token j's own input position (the teacher-forced decoder
    has read token j there, so the row carries that token's identity,
    not just a prediction of it). Attention rows are the M emission
    positions, so each head matrix is M x N.
    """
    src_ids = model.src_vocab.encode(pair.source)
    tgt_ids = model.tgt_vocab.encode(pair.target)
    enc = encode_source(model, src_ids)
    captured: list[list[np.ndarray]] = []
    dec_all = decode_states(model, [BOS_ID] + tgt_ids, enc,
                            capture_layers=captured)
    m = len(tgt_ids)
    dec = gather_rows(dec_all, list(range(1, m + 1)))
    stack = AttentionStack(layers=tuple(
        tuple(head[:m] for head in layer) for layer in captured))
    return HiddenStates(encoder=enc, decoder=dec), stack


def attention_align(stack: AttentionStack, alpha: float):
    """Average the final layer's heads; link (i, j) iff the averaged
    weight of target j on source i reaches alpha."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    avg = stack.averaged()
    rows, cols = np.nonzero(avg >= alpha)
    return {(int(i), int(j)) for j, i in zip(rows, cols)}


def attention_prob_matrix(stack: AttentionStack) -> np.ndarray:
    """Averaged attention transposed to the N x M alignment layout."""
    return stack.averaged().T.copy()


def translate(model: Seq2SeqModel, source: Sequence[str],
              max_length: int = 64) -> list[str]:
    """Greedy decoding until the end token or the length cap."""
    if not source:
        return []
    src_ids = model.src_vocab.encode(source)
    enc = encode_source(model, src_ids)
    out_ids: list[int] = []
    while len(out_ids) < max_length:
        dec = decode_states(model, [BOS_ID] + out_ids, enc)
        logits = (dec.data[-1] @ model.store["out.w"].data
                  + model.store["out.b"].data[0])
        next_id = int(np.argmax(logits))
        if next_id == EOS_ID:
            break
        out_ids.append(next_id)
    return model.tgt_vocab.decode(out_ids)


def save_seq2seq(model: Seq2SeqModel, path) -> None:
    from .numerics import save_container

    meta = {
        "kind": "seq2seq",
        "config": asdict(model.config),
        "src_vocab": model.src_vocab.tokens(),
        "tgt_vocab": model.tgt_vocab.tokens(),
        "loss_history": model.loss_history,
    }
    save_container(path, model.store.arrays(), meta)


def load_seq2seq(path) -> Seq2SeqModel:
    from .numerics import load_container

    arrays, meta = load_container(path)
    if meta.get("kind") != "seq2seq":
        raise ValueError(f"not a translation model file: {path}")
    config = Seq2SeqConfig(**meta["config"])
    store = init_params(config)
    store.load_arrays(arrays)
    return Seq2SeqModel(config, store, Vocabulary(meta["src_vocab"]),
                        Vocabulary(meta["tgt_vocab"]),
                        list(meta.get("loss_history", [])))
