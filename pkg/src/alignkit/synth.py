"""Synthetic aligned bitext with controllable difficulty.

The generator draws source sentences over a bijective lexicon
(``s7 -> t7``), then derives the target side, gold links, and BIO tags.
Three knobs create alignment difficulty:

* ``reorder_window``: target tokens are permuted within consecutive
  windows of this width (1 keeps the order).
* ``insertion_rate``: each emitted target slot is, with this probability,
  an unaligned function word from a disjoint vocabulary (``f3``).
* ``ambiguity_rate``: this fraction of source tokens (in expectation)
  belongs to confusable word pairs. The pair's two source words ``pA7``
  and ``pB7`` are emitted adjacently and share the target pair ``qA7``
  and ``qB7``; which word maps to which is decided by the parity of the
  word immediately before the block (sentence start counts as even). A
  context-free lexical aligner sees both assignments equally often, so
  its expected F1 tops out at 1 - ambiguity_rate / 2; resolving the
  ambiguity requires looking at the neighboring context.

``zipf_exponent`` skews regular-word frequencies by a power law over
type ranks (0 keeps them uniform). Combined with a large vocabulary it
reproduces the long-tail sparsity of natural bitext: count-based
aligners starve on tail types while subword models keep generalizing
from the shared digit structure of the word forms.

Every source token carries exactly one gold link, and no source word
repeats within a sentence (regular words and pair indices are sampled
without replacement), so the gold alignment is recoverable from the
lexicon alone except inside confusable blocks. Gold target tags are the
gold-alignment projection of the source tags.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .corpus import AlignmentSet, SentencePair, TaggedSentence
from .projection import ProjectionPolicy, project_tags
from .statalign import NULL_WORD, StatModel


@dataclass(frozen=True)
class TagSpec:
    types: tuple[str, ...] = ("PER", "LOC", "ORG")
    span_rate: float = 0.15
    max_span_len: int = 3


@dataclass(frozen=True)
class SynthSpec:
    vocab_size: int = 60
    ambiguous_pairs: int = 12
    function_words: int = 8
    min_len: int = 4
    max_len: int = 10
    reorder_window: int = 1
    insertion_rate: float = 0.0
    ambiguity_rate: float = 0.0
    zipf_exponent: float = 0.0
    tags: TagSpec = field(default_factory=TagSpec)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.vocab_size < 2 or self.min_len < 1 or self.max_len < self.min_len:
            raise ValueError("bad vocabulary or length bounds")
        if self.reorder_window < 1:
            raise ValueError("reorder_window must be >= 1")
        if not 0.0 <= self.insertion_rate < 1.0:
            raise ValueError("insertion_rate must be in [0, 1)")
        if not 0.0 <= self.ambiguity_rate < 1.0:
            raise ValueError("ambiguity_rate must be in [0, 1)")
        if self.zipf_exponent < 0.0:
            raise ValueError("zipf_exponent must be >= 0")
        if self.vocab_size < self.max_len:
            raise ValueError("vocab_size must cover a full sentence without repeats")
        needed = (self.max_len + 2) // 2
        if self.ambiguity_rate > 0.0 and self.ambiguous_pairs < needed:
            raise ValueError(f"ambiguity requires >= {needed} confusable pairs")

    def manifest(self) -> dict:
        # JSON round-trip turns tuples into lists, matching what a
        # written spec.json reads back as
        return json.loads(json.dumps(asdict(self)))

    def with_seed(self, seed: int) -> "SynthSpec":
        return replace(self, seed=seed)


@dataclass
class SynthCorpus:
    spec: SynthSpec
    pairs: list[SentencePair]
    alignments: list[AlignmentSet]
    source_tags: list[TaggedSentence]
    target_tags: list[TaggedSentence]

    def __len__(self) -> int:
        return len(self.pairs)


def _word_parity(word: str, vocab_size: int) -> int:
    if word.startswith("s"):
        return int(word[1:]) % 2
    if word.startswith("pA"):
        return (vocab_size + 2 * int(word[2:])) % 2
    if word.startswith("pB"):
        return (vocab_size + 2 * int(word[2:]) + 1) % 2
    raise ValueError(f"not a source word: {word!r}")


def generate(spec: SynthSpec, n_sentences: int) -> SynthCorpus:
    """Generate a corpus; identical spec (seed included) gives identical output."""
    if n_sentences < 1:
        raise ValueError("n_sentences must be >= 1")
    rng = np.random.default_rng(spec.seed)
    # probability that one emission step produces a two-token confusable
    # block, chosen so the expected fraction of block tokens is the rate
    block_prob = spec.ambiguity_rate / (2.0 - spec.ambiguity_rate)
    reg_weights = None
    if spec.zipf_exponent > 0.0:
        ranks = np.arange(1, spec.vocab_size + 1, dtype=float)
        reg_weights = ranks ** -spec.zipf_exponent
        reg_weights /= reg_weights.sum()

    pairs: list[SentencePair] = []
    alignments: list[AlignmentSet] = []
    source_tags: list[TaggedSentence] = []
    target_tags: list[TaggedSentence] = []

    for idx in range(n_sentences):
        source, gold_words = _draw_source(spec, rng, block_prob, reg_weights)
        order = _window_permutation(len(source), spec.reorder_window, rng)
        target, links = _emit_target(gold_words, order, spec, rng)
        tags = _draw_tags(len(source), spec.tags, rng)

        pair = SentencePair(tuple(source), tuple(target), str(idx + 1))
        tagged_src = TaggedSentence(tuple(source), tags)
        pairs.append(pair)
        alignments.append(links)
        source_tags.append(tagged_src)
        target_tags.append(project_tags(tagged_src, links, pair.target,
                                        ProjectionPolicy()))
    return SynthCorpus(spec, pairs, alignments, source_tags, target_tags)


def _draw_source(spec: SynthSpec, rng: np.random.Generator,
                 block_prob: float,
                 reg_weights: np.ndarray | None) -> tuple[list[str], list[str]]:
    """Source tokens plus the gold target word for each position."""
    length = int(rng.integers(spec.min_len, spec.max_len + 1))
    # per-sentence pools keep every source word unique within a sentence
    if reg_weights is None:
        word_pool = iter(rng.permutation(spec.vocab_size))
    else:
        word_pool = iter(rng.choice(spec.vocab_size, size=spec.max_len,
                                    replace=False, p=reg_weights))
    pair_pool = iter(rng.permutation(max(spec.ambiguous_pairs, 1)))
    source: list[str] = []
    gold: list[str] = []
    while len(source) < length:
        if block_prob > 0.0 and rng.random() < block_prob:
            m = int(next(pair_pool))
            word_a, word_b = f"pA{m}", f"pB{m}"
            prev_even = (not source) or \
                _word_parity(source[-1], spec.vocab_size) == 0
            if prev_even:
                mapping = {word_a: f"qA{m}", word_b: f"qB{m}"}
            else:
                mapping = {word_a: f"qB{m}", word_b: f"qA{m}"}
            block = (word_a, word_b) if rng.random() < 0.5 else (word_b, word_a)
            for word in block:  # may overshoot the drawn length by one
                source.append(word)
                gold.append(mapping[word])
        else:
            k = int(next(word_pool))
            source.append(f"s{k}")
            gold.append(f"t{k}")
    return source, gold


def _window_permutation(n: int, window: int, rng: np.random.Generator) -> list[int]:
    """Emission order of source positions, shuffled within width-w windows."""
    order: list[int] = []
    for start in range(0, n, window):
        chunk = list(range(start, min(start + window, n)))
        if len(chunk) > 1:
            chunk = [chunk[k] for k in rng.permutation(len(chunk))]
        order.extend(chunk)
    return order


def _emit_target(gold_words: Sequence[str], order: Sequence[int],
                 spec: SynthSpec, rng: np.random.Generator,
                 ) -> tuple[list[str], AlignmentSet]:
    target: list[str] = []
    links: AlignmentSet = set()
    for source_pos in order:
        while spec.insertion_rate > 0.0 and rng.random() < spec.insertion_rate:
            target.append(f"f{int(rng.integers(spec.function_words))}")
        links.add((source_pos, len(target)))
        target.append(gold_words[source_pos])
    return target, links


def _draw_tags(n: int, tag_spec: TagSpec, rng: np.random.Generator) -> tuple[str, ...]:
    tags = ["O"] * n
    pos = 0
    while pos < n:
        if rng.random() < tag_spec.span_rate:
            ttype = tag_spec.types[int(rng.integers(len(tag_spec.types)))]
            end = min(pos + int(rng.integers(1, tag_spec.max_span_len + 1)), n)
            tags[pos] = "B-" + ttype
            for k in range(pos + 1, end):
                tags[k] = "I-" + ttype
            pos = end
        else:
            pos += 1
    return tuple(tags)


def true_lexicon_model(spec: SynthSpec) -> StatModel:
    """The best context-free lexical decoder for this corpus family.

    Regular words map with probability 1; confusable pairs split their
    mass evenly (their corpus marginal); function words belong to the
    null word. Decoding with this model realizes the context-free F1
    ceiling of 1 - ambiguity_rate / 2 in expectation.
    """
    lex: dict[str, dict[str, float]] = {}
    for k in range(spec.vocab_size):
        lex[f"s{k}"] = {f"t{k}": 1.0}
    for m in range(spec.ambiguous_pairs):
        shared = {f"qA{m}": 0.5, f"qB{m}": 0.5}
        lex[f"pA{m}"] = dict(shared)
        lex[f"pB{m}"] = dict(shared)
    lex[NULL_WORD] = {
        f"f{k}": 1.0 / spec.function_words for k in range(spec.function_words)
    }
    return StatModel(lex=lex, tension=0.0, null_prob=0.5)
