"""Byte-pair encoding over whitespace-tokenized text.

A word is split into characters with an end-of-word marker appended to
its final symbol, so "abc" starts as ``a b c</w>``. Merges are learned
greedily by pair frequency (ties broken by lexicographic pair order) and
never cross word boundaries. Segmentation maps record which contiguous
run of subword positions each word occupies, which is what alignment
expansion and reduction work from.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import AlignmentSet, Link

END_OF_WORD = "</w>"

MergePair = tuple[str, str]

DEFAULT_MERGES = 200


def word_symbols(word: str) -> tuple[str, ...]:
    """Initial symbol sequence for a word: characters, marker on the last."""
    if not word:
        raise ValueError("cannot segment an empty word")
    chars = list(word)
    chars[-1] = chars[-1] + END_OF_WORD
    return tuple(chars)


def merge_word(symbols: Sequence[str], pair: MergePair) -> tuple[str, ...]:
    """Replace every adjacent occurrence of ``pair``, scanning left to right."""
    left, right = pair
    out: list[str] = []
    k = 0
    while k < len(symbols):
        if k + 1 < len(symbols) and symbols[k] == left and symbols[k + 1] == right:
            out.append(left + right)
            k += 2
        else:
            out.append(symbols[k])
            k += 1
    return tuple(out)


def learn_bpe(sentences: Iterable[Sequence[str]],
              n_merges: int = DEFAULT_MERGES) -> list[MergePair]:
    """Learn up to ``n_merges`` merges from one side of a corpus.

    Learning stops early once every word is a single symbol.
    """
    if n_merges < 0:
        raise ValueError("n_merges must be non-negative")
    word_freq: dict[str, int] = {}
    for sent in sentences:
        for word in sent:
            word_freq[word] = word_freq.get(word, 0) + 1
    words: dict[str, tuple[str, ...]] = {
        w: word_symbols(w) for w in word_freq
    }
    merges: list[MergePair] = []
    for _ in range(n_merges):
        pair_counts: dict[MergePair, int] = {}
        for word, symbols in words.items():
            freq = word_freq[word]
            for a, b in zip(symbols, symbols[1:]):
                pair_counts[(a, b)] = pair_counts.get((a, b), 0) + freq
        if not pair_counts:
            break
        best = min(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        merges.append(best)
        words = {w: merge_word(s, best) for w, s in words.items()}
    return merges


def apply_bpe_word(word: str, merges: Sequence[MergePair]) -> tuple[str, ...]:
    """Segment a single word by replaying the merge table in order."""
    symbols = word_symbols(word)
    for pair in merges:
        if len(symbols) == 1:
            break
        symbols = merge_word(symbols, pair)
    return symbols


def join_subwords(subwords: Sequence[str]) -> str:
    """Inverse of segmentation for one word: strip the marker, concatenate."""
    if not subwords or not subwords[-1].endswith(END_OF_WORD):
        raise ValueError(f"not a full word segmentation: {subwords!r}")
    pieces = list(subwords[:-1]) + [subwords[-1][: -len(END_OF_WORD)]]
    return "".join(pieces)


@dataclass(frozen=True)
class SegmentationMap:
    """Word-to-subword bookkeeping for one sentence.

    ``ranges[w]`` is the half-open span of subword positions belonging to
    word ``w``; the spans tile [0, n_subwords) in order.
    """

    ranges: tuple[tuple[int, int], ...]
    n_subwords: int

    def __post_init__(self) -> None:
        cursor = 0
        for start, end in self.ranges:
            if start != cursor or end <= start:
                raise ValueError(f"ranges do not tile subword positions: {self.ranges}")
            cursor = end
        if cursor != self.n_subwords:
            raise ValueError("ranges do not cover all subword positions")

    @property
    def n_words(self) -> int:
        return len(self.ranges)

    def word_of(self, subword_index: int) -> int:
        for w, (start, end) in enumerate(self.ranges):
            if start <= subword_index < end:
                return w
        raise IndexError(f"subword index {subword_index} out of range")

    def subwords_of(self, word_index: int) -> range:
        start, end = self.ranges[word_index]
        return range(start, end)


def segment_sentence(tokens: Sequence[str],
                     merges: Sequence[MergePair]) -> tuple[tuple[str, ...], SegmentationMap]:
    """Segment a tokenized sentence; returns subwords plus the word map."""
    subwords: list[str] = []
    ranges: list[tuple[int, int]] = []
    for token in tokens:
        pieces = apply_bpe_word(token, merges)
        start = len(subwords)
        subwords.extend(pieces)
        ranges.append((start, len(subwords)))
    return tuple(subwords), SegmentationMap(tuple(ranges), len(subwords))


def unsegment_sentence(subwords: Sequence[str],
                       seg: SegmentationMap) -> tuple[str, ...]:
    """Recover the original tokens from subwords and their map."""
    return tuple(
        join_subwords([subwords[k] for k in seg.subwords_of(w)])
        for w in range(seg.n_words)
    )


def expand_alignment(links: AlignmentSet, source_map: SegmentationMap,
                     target_map: SegmentationMap) -> AlignmentSet:
    """Word links to subword links: full cross product of the two spans."""
    out: AlignmentSet = set()
    for i, j in links:
        if i >= source_map.n_words or j >= target_map.n_words or i < 0 or j < 0:
            raise IndexError(f"word link {i}-{j} outside segmentation maps")
        for a in source_map.subwords_of(i):
            for b in target_map.subwords_of(j):
                out.add((a, b))
    return out


def reduce_alignment(links: AlignmentSet, source_map: SegmentationMap,
                     target_map: SegmentationMap) -> AlignmentSet:
    """Subword links to word links: any linked subword pair links the words."""
    src_owner = _owner_table(source_map)
    tgt_owner = _owner_table(target_map)
    out: AlignmentSet = set()
    for a, b in links:
        if not (0 <= a < source_map.n_subwords) or not (0 <= b < target_map.n_subwords):
            raise IndexError(f"subword link {a}-{b} outside segmentation maps")
        out.add((src_owner[a], tgt_owner[b]))
    return out


def _owner_table(seg: SegmentationMap) -> list[int]:
    owner = [0] * seg.n_subwords
    for w, (start, end) in enumerate(seg.ranges):
        for k in range(start, end):
            owner[k] = w
    return owner


# ---------------------------------------------------------------------------
# merge table files: one merge per line, two symbols separated by a space


def write_merges(merges: Sequence[MergePair], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for left, right in merges:
            fh.write(f"{left} {right}\n")


def read_merges(path) -> list[MergePair]:
    merges: list[MergePair] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 2:
                raise ValueError(f"malformed merge at line {line_no}: {line!r}")
            merges.append((parts[0], parts[1]))
    return merges
