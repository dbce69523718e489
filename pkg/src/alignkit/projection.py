"""Tag projection across word alignments.

Each target token takes the tag of its aligned source token; unaligned
target tokens fall back to the policy's default tag. When a target token
is linked to several sources, the conflict rule picks either the tag of
the smallest source index or the majority tag (ties again resolved by
the smallest source index carrying a winning tag). Output is made
BIO-valid by rewriting each maximal run of same-type tags as B-X I-X...
unless repair is disabled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

from .corpus import (
    AlignmentSet,
    TaggedSentence,
    runs_to_bio,
    split_tag,
    validate_links,
)


@dataclass(frozen=True)
class ProjectionPolicy:
    default_tag: str = "O"
    conflict: Literal["first", "majority"] = "first"
    bio_repair: bool = True

    def __post_init__(self) -> None:
        if self.conflict not in ("first", "majority"):
            raise ValueError(f"unknown conflict rule {self.conflict!r}")


def _pick_tag(source_tags: Sequence[str], aligned: list[int],
              policy: ProjectionPolicy) -> str:
    if policy.conflict == "first":
        return source_tags[aligned[0]]
    counts: dict[str, int] = {}
    for i in aligned:
        counts[source_tags[i]] = counts.get(source_tags[i], 0) + 1
    top = max(counts.values())
    for i in aligned:  # aligned is sorted, so this is smallest-index-first
        if counts[source_tags[i]] == top:
            return source_tags[i]
    raise AssertionError("unreachable")


def project_tags(source: TaggedSentence, links: AlignmentSet,
                 target_tokens: Sequence[str],
                 policy: ProjectionPolicy = ProjectionPolicy()) -> TaggedSentence:
    """Project source tags onto target tokens through alignment links."""
    n, m = len(source.tokens), len(target_tokens)
    validate_links(links, n, m, where="projection")
    by_target: dict[int, list[int]] = {}
    for i, j in sorted(links):
        by_target.setdefault(j, []).append(i)
    raw: list[str] = []
    for j in range(m):
        if j in by_target:
            raw.append(_pick_tag(source.tags, by_target[j], policy))
        else:
            raw.append(policy.default_tag)
    if policy.bio_repair:
        types = [split_tag(tag)[1] for tag in raw]
        tags = runs_to_bio(types)
    else:
        tags = tuple(raw)
    return TaggedSentence(tokens=tuple(target_tokens), tags=tags)


def project_corpus(sources: Sequence[TaggedSentence],
                   targets: Sequence[Sequence[str]],
                   alignments: Sequence[AlignmentSet],
                   policy: ProjectionPolicy = ProjectionPolicy()) -> list[TaggedSentence]:
    if not len(sources) == len(targets) == len(alignments):
        raise ValueError("sources, targets, and alignments must have equal length")
    return [project_tags(s, a, t, policy)
            for s, t, a in zip(sources, targets, alignments)]


@dataclass(frozen=True)
class TagScore:
    precision: float
    recall: float
    f1: float
    n_pred: int
    n_gold: int
    n_correct: int


def projected_tag_f1(predicted: Sequence[TaggedSentence],
                     gold: Sequence[TaggedSentence]) -> TagScore:
    """Token-level exact-tag F1 over non-O positions, pooled corpus-wide."""
    if len(predicted) != len(gold):
        raise ValueError("prediction/gold sentence count mismatch")
    n_pred = n_gold = n_correct = 0
    for p, g in zip(predicted, gold):
        if len(p.tags) != len(g.tags):
            raise ValueError("prediction/gold token count mismatch")
        for pt, gt in zip(p.tags, g.tags):
            if pt != "O":
                n_pred += 1
            if gt != "O":
                n_gold += 1
            if pt == gt != "O":
                n_correct += 1
    precision = n_correct / n_pred if n_pred else (1.0 if n_gold == 0 else 0.0)
    recall = n_correct / n_gold if n_gold else (1.0 if n_pred == 0 else 0.0)
    f1 = 2 * precision * recall / (precision + recall) \
        if precision + recall > 0 else 0.0
    return TagScore(precision, recall, f1, n_pred, n_gold, n_correct)
