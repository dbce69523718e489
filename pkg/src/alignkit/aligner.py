"""Discriminative alignment head over pretrained translation states.

Encoder and decoder states of a sentence pair are pushed through one
shared three-layer MLP (tanh, tanh, linear), giving projections S' and
T' in a common space. Their dot products form a score matrix A, a 3x3
convolution with scalar bias turns each score into a context-aware
logit, and a sigmoid yields independent link probabilities. Training is
per-cell binary cross-entropy against gold links; decoding thresholds
each cell on its own.

State rows cover exactly the real tokens of both sides, so begin/end
markers never enter the loss grid. The translation model is frozen by
default; a flag unfreezes it for joint finetuning, and freeze_decoder
keeps the decoder half pinned while the encoder adapts.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .corpus import AlignmentSet, SentencePair, validate_links
from .numerics import (
    Matrix,
    ParamStore,
    adam_step,
    add,
    bce_sum,
    constant,
    conv2d_same,
    matmul,
    scale,
    sigmoid,
    tanh,
    transpose,
)
from .scoring import sweep_threshold, threshold_decode
from .seq2seq import HiddenStates, Seq2SeqModel, encode_pair

CONV_NOISE = 0.02


@dataclass(frozen=True)
class AlignerConfig:
    hidden: int = 64
    learning_rate: float = 1e-3
    steps: int = 1200
    batch_size: int = 8
    freeze_encoder: bool = True
    freeze_decoder: bool = False
    train_conv: bool = True
    alpha: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden < 1 or self.steps < 1 or self.batch_size < 1:
            raise ValueError("hidden, steps, and batch_size must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


@dataclass
class Aligner:
    config: AlignerConfig
    store: ParamStore
    state_dim: int
    alpha: float


def init_aligner(state_dim: int, config: AlignerConfig) -> Aligner:
    store = ParamStore(seed=config.seed)
    rng = store.rng
    h = config.hidden

    def uniform(name, rows, cols, fan_in):
        limit = 1.0 / math.sqrt(fan_in)
        store.add(name, rng.uniform(-limit, limit, size=(rows, cols)))

    uniform("mlp.w1", state_dim, h, state_dim)
    store.add("mlp.b1", np.zeros((1, h)))
    uniform("mlp.w2", h, h, h)
    store.add("mlp.b2", np.zeros((1, h)))
    uniform("mlp.w3", h, h, h)
    store.add("mlp.b3", np.zeros((1, h)))

    kernel = np.zeros((3, 3))
    kernel[1, 1] = 1.0
    if config.train_conv:
        kernel = kernel + rng.normal(0.0, CONV_NOISE, size=(3, 3))
    store.add("conv.w", kernel)
    store.add("conv.b", np.zeros((1, 1)))
    return Aligner(config, store, state_dim, config.alpha)


def project_states(aligner: Aligner, states: Matrix) -> Matrix:
    """Shared projection: the same weights serve source and target rows."""
    s = aligner.store
    x = tanh(add(matmul(states, s["mlp.w1"]), s["mlp.b1"]))
    x = tanh(add(matmul(x, s["mlp.w2"]), s["mlp.b2"]))
    return add(matmul(x, s["mlp.w3"]), s["mlp.b3"])


def score_matrix(s_proj: Matrix, t_proj: Matrix) -> Matrix:
    return matmul(s_proj, transpose(t_proj))


def forward(aligner: Aligner, states: HiddenStates) -> Matrix:
    """Link probabilities, one sigmoid cell per (source, target) pair."""
    scores = score_matrix(project_states(aligner, states.encoder),
                          project_states(aligner, states.decoder))
    logits = add(conv2d_same(scores, aligner.store["conv.w"]),
                 aligner.store["conv.b"])
    return sigmoid(logits)


def _label_matrix(links: AlignmentSet, n: int, m: int) -> Matrix:
    validate_links(links, n, m, where="aligner training")
    labels = np.zeros((n, m))
    for i, j in links:
        labels[i, j] = 1.0
    return constant(labels)


def pair_bce(aligner: Aligner, states: HiddenStates,
             links: AlignmentSet) -> Matrix:
    probs = forward(aligner, states)
    return bce_sum(probs, _label_matrix(links, probs.rows, probs.cols))


def _frozen(states: HiddenStates) -> HiddenStates:
    return HiddenStates(encoder=constant(states.encoder.data.copy()),
                        decoder=constant(states.decoder.data.copy()))


def train_aligner(pairs: Sequence[SentencePair],
                  gold: Sequence[AlignmentSet],
                  model: Seq2SeqModel,
                  config: AlignerConfig = AlignerConfig(),
                  dev_pairs: Sequence[SentencePair] = (),
                  dev_gold: Sequence[AlignmentSet] = ()) -> Aligner:
    """Fit the head on labeled pairs; per-sentence BCE sums averaged
    over each batch. With dev data the decision threshold is re-tuned
    post-hoc by an F1 sweep."""
    if len(pairs) != len(gold):
        raise ValueError("one gold link set per training pair required")
    if not pairs:
        raise ValueError("no training pairs")
    aligner = init_aligner(model.config.dim, config)
    # a finetuning run is a fresh optimization problem: drop whatever
    # Adam state pretraining left behind so in-memory and loaded models
    # train identically
    model.store.reset_optimizer()
    skip = () if config.train_conv else ("conv.w",)
    # decoder-side params: self/cross attention stacks, target embeddings,
    # output projection; tied "embed" stays trainable since it also feeds
    # the encoder
    model_skip = tuple(n for n in model.store.names()
                       if n.startswith(("dec", "tgt_embed", "out."))) \
        if config.freeze_decoder else ()

    cached: list[HiddenStates] = []
    if config.freeze_encoder:
        cached = [_frozen(encode_pair(model, p)[0]) for p in pairs]

    shuffle_rng = np.random.default_rng(config.seed + 1)
    order: list[int] = []
    for _ in range(config.steps):
        batch = []
        while len(batch) < config.batch_size:
            if not order:
                order = list(shuffle_rng.permutation(len(pairs)))
            batch.append(order.pop())
        aligner.store.zero_grads()
        if not config.freeze_encoder:
            model.store.zero_grads()
        total = None
        for idx in batch:
            states = cached[idx] if config.freeze_encoder \
                else encode_pair(model, pairs[idx])[0]
            loss = pair_bce(aligner, states, gold[idx])
            total = loss if total is None else add(total, loss)
        total = scale(total, 1.0 / len(batch))
        total.backward()
        adam_step(aligner.store, config.learning_rate, skip=skip)
        if not config.freeze_encoder:
            adam_step(model.store, config.learning_rate, skip=model_skip)

    if len(dev_pairs):
        probs = [prob_matrix(aligner, model, p) for p in dev_pairs]
        sweep = sweep_threshold(probs, list(dev_gold))
        aligner.alpha = sweep.best_alpha
    return aligner


def prob_matrix(aligner: Aligner, model: Seq2SeqModel,
                pair: SentencePair) -> np.ndarray:
    states, _ = encode_pair(model, pair)
    return forward(aligner, _frozen(states)).data.copy()


def align(aligner: Aligner, model: Seq2SeqModel, pair: SentencePair,
          alpha: float | None = None) -> AlignmentSet:
    threshold = aligner.alpha if alpha is None else alpha
    return threshold_decode(prob_matrix(aligner, model, pair), threshold)


def align_corpus(aligner: Aligner, model: Seq2SeqModel,
                 pairs: Sequence[SentencePair],
                 alpha: float | None = None) -> list[AlignmentSet]:
    return [align(aligner, model, pair, alpha) for pair in pairs]


def save_aligner(aligner: Aligner, path) -> None:
    from .numerics import save_container

    meta = {
        "kind": "aligner",
        "config": asdict(aligner.config),
        "state_dim": aligner.state_dim,
        "alpha": aligner.alpha,
    }
    save_container(path, aligner.store.arrays(), meta)


def load_aligner(path) -> Aligner:
    from .numerics import load_container

    arrays, meta = load_container(path)
    if meta.get("kind") != "aligner":
        raise ValueError(f"not an aligner file: {path}")
    config = AlignerConfig(**meta["config"])
    aligner = init_aligner(meta["state_dim"], config)
    aligner.store.load_arrays(arrays)
    aligner.alpha = float(meta["alpha"])
    return aligner
