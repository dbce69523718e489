"""Readers, writers, and validation for bitext, alignment, and tag files.

File conventions:

* bitext: one sentence pair per line, ``source tokens ||| target tokens``,
  whitespace-tokenized.
* alignments: one line per pair of space-separated ``i-j`` links, where
  ``i`` indexes source tokens and ``j`` target tokens, both 0-based.
* tagged text: blank-line-separated blocks of ``token<TAB>tag`` rows with
  BIO tags (``O``, ``B-TYPE``, ``I-TYPE``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

logger = logging.getLogger(__name__)

Link = tuple[int, int]
AlignmentSet = set[Link]

BITEXT_SEPARATOR = " ||| "


class CorpusFormatError(ValueError):
    """An input file does not match its expected format."""


class AlignmentBoundsError(ValueError):
    """An alignment link points outside its sentence pair."""


@dataclass(frozen=True)
class SentencePair:
    """A tokenized source/target pair. Both sides must be non-empty."""

    source: tuple[str, ...]
    target: tuple[str, ...]
    id: str = ""

    def __post_init__(self) -> None:
        for side, tokens in (("source", self.source), ("target", self.target)):
            if len(tokens) == 0:
                raise CorpusFormatError(f"empty {side} side in pair {self.id!r}")
            for tok in tokens:
                if not tok or any(c.isspace() for c in tok):
                    raise CorpusFormatError(
                        f"bad {side} token {tok!r} in pair {self.id!r}"
                    )

    @property
    def n_source(self) -> int:
        return len(self.source)

    @property
    def n_target(self) -> int:
        return len(self.target)


ParallelCorpus = list[SentencePair]


@dataclass(frozen=True)
class TaggedSentence:
    """Tokens with one tag per token."""

    tokens: tuple[str, ...]
    tags: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.tags):
            raise CorpusFormatError(
                f"{len(self.tokens)} tokens but {len(self.tags)} tags"
            )


def validate_links(links: Iterable[Link], n_source: int, n_target: int,
                   where: str = "") -> AlignmentSet:
    """Check links against sentence bounds; out-of-range is a hard error."""
    out: AlignmentSet = set()
    ctx = f" in {where}" if where else ""
    for link in links:
        i, j = link
        if not (0 <= i < n_source) or not (0 <= j < n_target):
            raise AlignmentBoundsError(
                f"link {i}-{j} outside {n_source}x{n_target} sentence{ctx}"
            )
        out.add((int(i), int(j)))
    return out


# ---------------------------------------------------------------------------
# bitext


def parse_bitext_line(line: str, line_no: int) -> SentencePair:
    parts = line.split("|||")
    if len(parts) != 2:
        raise CorpusFormatError(f"malformed bitext at line {line_no}: {line!r}")
    source = tuple(parts[0].split())
    target = tuple(parts[1].split())
    if not source:
        raise CorpusFormatError(f"empty source at line {line_no}")
    if not target:
        raise CorpusFormatError(f"empty target at line {line_no}")
    return SentencePair(source=source, target=target, id=str(line_no))


def read_bitext(path: str | Path) -> ParallelCorpus:
    """Read a bitext file; the 1-based line number becomes the pair id."""
    pairs: ParallelCorpus = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                raise CorpusFormatError(f"blank bitext line at line {line_no}")
            pairs.append(parse_bitext_line(line, line_no))
    return pairs


def write_bitext(pairs: Iterable[SentencePair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(" ".join(pair.source))
            fh.write(BITEXT_SEPARATOR)
            fh.write(" ".join(pair.target))
            fh.write("\n")


# ---------------------------------------------------------------------------
# alignments (one line of i-j links per sentence pair)


def parse_alignment_line(line: str, line_no: int = 0) -> AlignmentSet:
    links: AlignmentSet = set()
    for field in line.split():
        left, sep, right = field.partition("-")
        if not sep or not left.isdigit() or not right.isdigit():
            raise CorpusFormatError(
                f"malformed link {field!r} at line {line_no}"
            )
        links.add((int(left), int(right)))
    return links


def format_alignment_line(links: Iterable[Link]) -> str:
    return " ".join(f"{i}-{j}" for i, j in sorted(set(links)))


def read_alignments(path: str | Path) -> list[AlignmentSet]:
    """Read one alignment set per line; an empty line is an empty set."""
    out: list[AlignmentSet] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            out.append(parse_alignment_line(raw.strip(), line_no))
    return out


def write_alignments(alignments: Iterable[Iterable[Link]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for links in alignments:
            fh.write(format_alignment_line(links))
            fh.write("\n")


def validate_corpus_alignments(pairs: Sequence[SentencePair],
                               alignments: Sequence[AlignmentSet]) -> None:
    """Pair up a corpus with its alignment file and bounds-check every link."""
    if len(pairs) != len(alignments):
        raise CorpusFormatError(
            f"{len(pairs)} sentence pairs but {len(alignments)} alignment lines"
        )
    for pair, links in zip(pairs, alignments):
        validate_links(links, pair.n_source, pair.n_target, where=f"pair {pair.id}")


# ---------------------------------------------------------------------------
# BIO tags


def split_tag(tag: str) -> tuple[str, str]:
    """Return (prefix, type); 'O' maps to ('O', '')."""
    if tag == "O":
        return "O", ""
    if len(tag) > 2 and tag[1] == "-" and tag[0] in ("B", "I"):
        return tag[0], tag[2:]
    raise CorpusFormatError(f"bad tag {tag!r}")


def bio_is_valid(tags: Sequence[str]) -> bool:
    prev_type = ""
    for tag in tags:
        prefix, ttype = split_tag(tag)
        if prefix == "I" and ttype != prev_type:
            return False
        prev_type = ttype if prefix in ("B", "I") else ""
    return True


def bio_repair(tags: Sequence[str]) -> tuple[str, ...]:
    """Turn any I-X without an open X span into B-X."""
    repaired: list[str] = []
    prev_type = ""
    for tag in tags:
        prefix, ttype = split_tag(tag)
        if prefix == "I" and ttype != prev_type:
            tag = "B-" + ttype
        repaired.append(tag)
        prev_type = ttype if prefix in ("B", "I") else ""
    return tuple(repaired)


def runs_to_bio(types: Sequence[str]) -> tuple[str, ...]:
    """Tag types per token ('' for outside) to BIO: each maximal run of one
    non-empty type becomes B-X I-X ..."""
    tags: list[str] = []
    prev = ""
    for ttype in types:
        if not ttype:
            tags.append("O")
        elif ttype == prev:
            tags.append("I-" + ttype)
        else:
            tags.append("B-" + ttype)
        prev = ttype
    return tuple(tags)


def tag_spans(tags: Sequence[str]) -> list[tuple[int, int, str]]:
    """Spans as (start, end_exclusive, type) for a BIO-valid sequence."""
    spans: list[tuple[int, int, str]] = []
    start, cur_type = -1, ""
    for pos, tag in enumerate(tags):
        prefix, ttype = split_tag(tag)
        if prefix == "B" or (prefix == "I" and ttype != cur_type):
            if cur_type:
                spans.append((start, pos, cur_type))
            start, cur_type = pos, ttype
        elif prefix == "O":
            if cur_type:
                spans.append((start, pos, cur_type))
            cur_type = ""
    if cur_type:
        spans.append((start, len(tags), cur_type))
    return spans


# ---------------------------------------------------------------------------
# tagged text


def read_tagged(path: str | Path, repair: bool = True) -> list[TaggedSentence]:
    """Read blank-line-separated token<TAB>tag blocks.

    BIO violations (I-X with no open X span) are repaired to B-X and
    reported through the module logger. Lines starting with '#' are
    treated as file headers and skipped.
    """
    sentences: list[TaggedSentence] = []
    tokens: list[str] = []
    tags: list[str] = []

    def flush(line_no: int) -> None:
        if not tokens:
            return
        fixed = tuple(tags)
        if repair and not bio_is_valid(fixed):
            logger.warning(
                "BIO violation repaired in block ending at line %d of %s",
                line_no, path,
            )
            fixed = bio_repair(fixed)
        sentences.append(TaggedSentence(tokens=tuple(tokens), tags=fixed))
        tokens.clear()
        tags.clear()

    with open(path, encoding="utf-8") as fh:
        line_no = 0
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if line.startswith("#"):
                continue
            if not line.strip():
                flush(line_no)
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise CorpusFormatError(
                    f"expected token<TAB>tag at line {line_no}, got {line!r}"
                )
            token, tag = cols
            split_tag(tag)  # validates the shape
            tokens.append(token)
            tags.append(tag)
        flush(line_no)
    return sentences


def write_tagged(sentences: Iterable[TaggedSentence], path: str | Path,
                 header_lines: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for sent in sentences:
            for token, tag in zip(sent.tokens, sent.tags):
                fh.write(f"{token}\t{tag}\n")
            fh.write("\n")


# ---------------------------------------------------------------------------
# vocabulary

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
RESERVED_TOKENS = (PAD, UNK, BOS, EOS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3


class Vocabulary:
    """Token/id bijection with fixed reserved entries at ids 0..3."""

    def __init__(self, tokens: Iterable[str]):
        self._id_to_token: list[str] = list(RESERVED_TOKENS)
        self._token_to_id: dict[str, int] = {
            tok: idx for idx, tok in enumerate(self._id_to_token)
        }
        for tok in tokens:
            if tok in RESERVED_TOKENS:
                raise CorpusFormatError(f"token {tok!r} collides with a reserved entry")
            if tok in self._token_to_id:
                raise CorpusFormatError(f"duplicate token {tok!r}")
            self._token_to_id[tok] = len(self._id_to_token)
            self._id_to_token.append(tok)

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]],
              max_size: int | None = None) -> "Vocabulary":
        """Build from tokenized sentences, most frequent first.

        Ties break lexicographically. ``max_size`` caps the total size
        including the four reserved entries.
        """
        counts: dict[str, int] = {}
        for sent in sentences:
            for tok in sent:
                counts[tok] = counts.get(tok, 0) + 1
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if max_size is not None:
            if max_size < len(RESERVED_TOKENS):
                raise ValueError("max_size smaller than the reserved entries")
            ranked = ranked[: max_size - len(RESERVED_TOKENS)]
        return cls(tok for tok, _ in ranked)

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def id(self, token: str) -> int:
        return self._token_to_id.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self._id_to_token[idx]

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self._id_to_token[i] for i in ids]

    def tokens(self) -> list[str]:
        """Non-reserved tokens in id order (for serialization)."""
        return self._id_to_token[len(RESERVED_TOKENS):]

    def __iter__(self) -> Iterator[str]:
        return iter(self._id_to_token)
