"""Alignment scoring: precision, recall, F1, span filters, threshold sweeps.

Macro scores average per-sentence values and are the headline numbers;
micro scores pool link counts over the corpus and are always co-reported.
A sentence with an empty prediction and empty gold scores 1.0 on all
three metrics; an empty prediction against non-empty gold (or the
reverse) scores 0.0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import AlignmentSet, TaggedSentence, tag_spans, validate_links


@dataclass(frozen=True)
class SentenceScore:
    n_pred: int
    n_gold: int
    n_correct: int

    @property
    def precision(self) -> float:
        if self.n_pred == 0:
            return 1.0 if self.n_gold == 0 else 0.0
        return self.n_correct / self.n_pred

    @property
    def recall(self) -> float:
        if self.n_gold == 0:
            return 1.0 if self.n_pred == 0 else 0.0
        return self.n_correct / self.n_gold

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass(frozen=True)
class ScoreReport:
    """Macro scores (headline) with micro scores alongside."""

    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    n_sentences: int
    n_pred_links: int
    n_gold_links: int
    n_correct_links: int
    restriction: str = ""
    per_sentence: tuple[SentenceScore, ...] = field(default=(), repr=False)

    # headline aliases
    @property
    def precision(self) -> float:
        return self.macro_precision

    @property
    def recall(self) -> float:
        return self.macro_recall

    @property
    def f1(self) -> float:
        return self.macro_f1

    def to_tsv(self) -> str:
        lines = ["mode\tprecision\trecall\tf1"]
        lines.append(f"macro\t{self.macro_precision:.6f}\t{self.macro_recall:.6f}"
                     f"\t{self.macro_f1:.6f}")
        lines.append(f"micro\t{self.micro_precision:.6f}\t{self.micro_recall:.6f}"
                     f"\t{self.micro_f1:.6f}")
        return "\n".join(lines)

    def to_json(self) -> str:
        payload = {
            "macro": {"precision": self.macro_precision,
                      "recall": self.macro_recall, "f1": self.macro_f1},
            "micro": {"precision": self.micro_precision,
                      "recall": self.micro_recall, "f1": self.micro_f1},
            "counts": {"sentences": self.n_sentences,
                       "predicted_links": self.n_pred_links,
                       "gold_links": self.n_gold_links,
                       "correct_links": self.n_correct_links},
        }
        if self.restriction:
            payload["restriction"] = self.restriction
        return json.dumps(payload, sort_keys=True)


def _pool_ratio(num: int, den: int, other_total: int) -> float:
    if den == 0:
        return 1.0 if other_total == 0 else 0.0
    return num / den


def score(predicted: Sequence[AlignmentSet], gold: Sequence[AlignmentSet],
          restriction: str = "") -> ScoreReport:
    """Score predicted link sets against gold, sentence by sentence."""
    if len(predicted) != len(gold):
        raise ValueError(
            f"{len(predicted)} predictions vs {len(gold)} gold sentences")
    if not predicted:
        raise ValueError("nothing to score")
    sentence_scores = tuple(
        SentenceScore(len(p), len(g), len(set(p) & set(g)))
        for p, g in zip(predicted, gold)
    )
    n_pred = sum(s.n_pred for s in sentence_scores)
    n_gold = sum(s.n_gold for s in sentence_scores)
    n_correct = sum(s.n_correct for s in sentence_scores)
    micro_p = _pool_ratio(n_correct, n_pred, n_gold)
    micro_r = _pool_ratio(n_correct, n_gold, n_pred)
    micro_f1 = 2 * micro_p * micro_r / (micro_p + micro_r) \
        if micro_p + micro_r > 0 else 0.0
    count = len(sentence_scores)
    return ScoreReport(
        macro_precision=sum(s.precision for s in sentence_scores) / count,
        macro_recall=sum(s.recall for s in sentence_scores) / count,
        macro_f1=sum(s.f1 for s in sentence_scores) / count,
        micro_precision=micro_p,
        micro_recall=micro_r,
        micro_f1=micro_f1,
        n_sentences=count,
        n_pred_links=n_pred,
        n_gold_links=n_gold,
        n_correct_links=n_correct,
        restriction=restriction,
        per_sentence=sentence_scores,
    )


def restrict_to_sources(links: AlignmentSet, source_indices: set[int]) -> AlignmentSet:
    """Keep only links whose source token index is in the given set."""
    return {(i, j) for i, j in links if i in source_indices}


def span_source_indices(tagged: TaggedSentence) -> set[int]:
    """Source token indices covered by any tagged span."""
    out: set[int] = set()
    for start, end, _ in tag_spans(tagged.tags):
        out.update(range(start, end))
    return out


def score_span_restricted(predicted: Sequence[AlignmentSet],
                          gold: Sequence[AlignmentSet],
                          source_spans: Sequence[set[int]]) -> ScoreReport:
    """Score only links whose source index falls inside a tagged span."""
    if not len(predicted) == len(gold) == len(source_spans):
        raise ValueError("predictions, gold, and spans must align")
    pred_f = [restrict_to_sources(p, s) for p, s in zip(predicted, source_spans)]
    gold_f = [restrict_to_sources(g, s) for g, s in zip(gold, source_spans)]
    return score(pred_f, gold_f, restriction="source-spans")


# ---------------------------------------------------------------------------
# probability thresholds


def threshold_decode(probs: np.ndarray, alpha: float) -> AlignmentSet:
    """Independent per-cell decode: link (i, j) iff probs[i, j] >= alpha."""
    if probs.ndim != 2:
        raise ValueError(f"expected a 2-D probability matrix, got {probs.shape}")
    if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    rows, cols = np.nonzero(probs >= alpha)
    return {(int(i), int(j)) for i, j in zip(rows, cols)}


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    precision: float
    recall: float
    f1: float

    def to_tsv(self) -> str:
        return f"{self.alpha:g}\t{self.precision:.6f}\t{self.recall:.6f}\t{self.f1:.6f}"


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    best_alpha: float
    best_f1: float

    def to_tsv(self) -> str:
        header = "alpha\tprecision\trecall\tf1"
        return "\n".join([header] + [row.to_tsv() for row in self.rows])


DEFAULT_ALPHA_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))


def sweep_threshold(prob_matrices: Sequence[np.ndarray],
                    gold: Sequence[AlignmentSet],
                    grid: Sequence[float] = DEFAULT_ALPHA_GRID) -> SweepResult:
    """Score a threshold grid; the best row maximizes macro F1 with ties
    going to the smaller alpha. Gold links are bounds-checked against the
    matrices."""
    if len(prob_matrices) != len(gold):
        raise ValueError("one probability matrix per gold sentence required")
    for probs, links in zip(prob_matrices, gold):
        validate_links(links, probs.shape[0], probs.shape[1], where="sweep gold")
    rows = []
    best: SweepRow | None = None
    for alpha in grid:
        decoded = [threshold_decode(m, alpha) for m in prob_matrices]
        report = score(decoded, gold)
        row = SweepRow(alpha=float(alpha), precision=report.macro_precision,
                       recall=report.macro_recall, f1=report.macro_f1)
        rows.append(row)
        if best is None or row.f1 > best.f1:
            best = row
    return SweepResult(rows=tuple(rows), best_alpha=best.alpha, best_f1=best.f1)
