"""EM-trained lexical alignment models and symmetrization heuristics.

The model family is a lexical translation table t(target | source) with a
positional prior over source positions. With tension 0 the prior is
uniform (classic Model 1); with tension lambda > 0 it decays as
exp(-lambda * |i/N - j/M|) in relative positions, and lambda itself is
re-estimated once per EM iteration by golden-section search on the
expected complete-data log-likelihood. A reserved null source word takes
a fixed probability mass p0 and absorbs unaligned target words.

Decoding is per-target-position argmax (Viterbi for this model class)
with ties broken toward the smaller source index; the null word wins
exact ties against real positions. Unseen lexical pairs score 1e-12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .corpus import AlignmentSet, SentencePair

NULL_WORD = "<null>"
UNSEEN_PROB = 1e-12

Mode = Literal["model1", "model2_loglinear"]

DEFAULT_TENSION = 4.0
TENSION_BOUNDS = (0.0, 50.0)


@dataclass
class StatModel:
    """Lexical table plus positional prior parameters."""

    lex: dict[str, dict[str, float]]
    tension: float = 0.0
    null_prob: float = 0.0

    def prob(self, source_word: str, target_word: str) -> float:
        return self.lex.get(source_word, {}).get(target_word, UNSEEN_PROB)


def _distance_matrix(n_source: int, n_target: int) -> np.ndarray:
    """|relative target position - relative source position|, target-major."""
    src = (np.arange(n_source) + 1.0) / n_source
    tgt = (np.arange(n_target) + 1.0) / n_target
    return np.abs(tgt[:, None] - src[None, :])


def position_prior(n_source: int, n_target: int, tension: float,
                   null_prob: float) -> np.ndarray:
    """Prior over source positions per target row; rows sum to 1 - p0."""
    weights = np.exp(-tension * _distance_matrix(n_source, n_target))
    weights /= weights.sum(axis=1, keepdims=True)
    return (1.0 - null_prob) * weights


def _golden_section_max(fn, lo: float, hi: float, iterations: int = 60) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iterations):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    return (a + b) / 2.0


def em_train(pairs: Sequence[SentencePair], iterations: int,
             mode: Mode = "model1", null_prob: float = 0.0,
             tension: float = DEFAULT_TENSION) -> tuple[StatModel, list[float]]:
    """Train the lexical table by EM.

    Returns the model and the per-iteration observed-data log-likelihood,
    each evaluated under the parameters that iteration started from.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not 0.0 <= null_prob < 1.0:
        raise ValueError("null_prob must be in [0, 1)")
    if mode not in ("model1", "model2_loglinear"):
        raise ValueError(f"unknown mode {mode!r}")
    if not pairs:
        raise ValueError("empty corpus")

    use_null = null_prob > 0.0
    lam = tension if mode == "model2_loglinear" else 0.0

    # uniform initialization over co-occurring words
    cooc: dict[str, set[str]] = {}
    for pair in pairs:
        tgt_set = set(pair.target)
        for s in pair.source:
            cooc.setdefault(s, set()).update(tgt_set)
        if use_null:
            cooc.setdefault(NULL_WORD, set()).update(tgt_set)
    lex: dict[str, dict[str, float]] = {
        s: {x: 1.0 / len(xs) for x in sorted(xs)} for s, xs in sorted(cooc.items())
    }

    shapes = sorted({(p.n_source, p.n_target) for p in pairs})
    distances = {shape: _distance_matrix(*shape) for shape in shapes}

    history: list[float] = []
    for _ in range(iterations):
        counts: dict[str, dict[str, float]] = {}
        # expected link mass per (target row, source column), pooled by shape;
        # enough to re-fit the tension without a second corpus pass
        gamma_by_shape = {(n, m): np.zeros((m, n)) for (n, m) in shapes}
        log_likelihood = 0.0

        for pair in pairs:
            n, m = pair.n_source, pair.n_target
            prior = position_prior(n, m, lam, null_prob)
            gamma_rows = gamma_by_shape[(n, m)]
            for j, x in enumerate(pair.target):
                scores = [prior[j, i] * lex[s].get(x, 0.0)
                          for i, s in enumerate(pair.source)]
                null_score = null_prob * lex[NULL_WORD].get(x, 0.0) if use_null else 0.0
                denom = sum(scores) + null_score
                if denom <= 0.0:
                    continue
                log_likelihood += math.log(denom)
                for i, s in enumerate(pair.source):
                    if scores[i] == 0.0:
                        continue
                    gamma = scores[i] / denom
                    row = counts.setdefault(s, {})
                    row[x] = row.get(x, 0.0) + gamma
                    gamma_rows[j, i] += gamma
                if use_null and null_score > 0.0:
                    row = counts.setdefault(NULL_WORD, {})
                    row[x] = row.get(x, 0.0) + null_score / denom
        history.append(log_likelihood)

        # M step: renormalize the lexical table
        for s, row in counts.items():
            total = sum(row.values())
            if total > 0.0:
                lex[s] = {x: c / total for x, c in sorted(row.items())}

        # tension step: one golden-section update per iteration
        if mode == "model2_loglinear":
            lam = _update_tension(gamma_by_shape, distances)

    return StatModel(lex=lex, tension=lam, null_prob=null_prob), history


def _update_tension(gamma_by_shape: dict, distances: dict) -> float:
    def expected_ll(lam: float) -> float:
        total = 0.0
        for shape, gammas in gamma_by_shape.items():
            if not gammas.any():
                continue
            d = distances[shape]
            weights = np.exp(-lam * d)
            log_z = np.log(weights.sum(axis=1))
            total += -lam * (gammas * d).sum() - (gammas.sum(axis=1) * log_z).sum()
        return total

    return _golden_section_max(expected_ll, *TENSION_BOUNDS)


def viterbi_align(model: StatModel, pair: SentencePair) -> AlignmentSet:
    """Per-target-position argmax decode, null included.

    Real positions need a strictly higher score than the null word;
    among real positions the smaller source index wins ties.
    """
    links: AlignmentSet = set()
    prior = position_prior(pair.n_source, pair.n_target,
                           model.tension, model.null_prob)
    null_row = model.lex.get(NULL_WORD, {})
    for j, x in enumerate(pair.target):
        best_i = -1
        best_score = model.null_prob * null_row.get(x, UNSEEN_PROB)
        for i, s in enumerate(pair.source):
            score = prior[j, i] * model.prob(s, x)
            if score > best_score:
                best_score = score
                best_i = i
        if best_i >= 0:
            links.add((best_i, j))
    return links


def align_corpus(model: StatModel, pairs: Sequence[SentencePair]) -> list[AlignmentSet]:
    return [viterbi_align(model, pair) for pair in pairs]


def swap_pair(pair: SentencePair) -> SentencePair:
    return SentencePair(source=pair.target, target=pair.source, id=pair.id)


def swap_links(links: AlignmentSet) -> AlignmentSet:
    return {(j, i) for i, j in links}


Heuristic = Literal["intersection", "union", "grow-diag-final-and", "forward", "backward"]


def symmetrize(forward: AlignmentSet, backward: AlignmentSet,
               heuristic: Heuristic = "grow-diag-final-and") -> AlignmentSet:
    """Combine source->target and target->source link sets.

    ``backward`` must already be in (source index, target index) order,
    i.e. swapped back from the reversed model's output.

    grow-diag-final-and starts from the intersection, then repeatedly
    scans the remaining union links in (i, j) order, adding any link that
    is 8-adjacent to a link already in the set while its source or target
    word is still uncovered, until a full pass adds nothing; a final pass
    adds union links whose endpoints are both uncovered.
    """
    inter = forward & backward
    union = forward | backward
    if heuristic == "intersection":
        return set(inter)
    if heuristic == "union":
        return set(union)
    if heuristic == "forward":
        return set(forward)
    if heuristic == "backward":
        return set(backward)
    if heuristic != "grow-diag-final-and":
        raise ValueError(f"unknown heuristic {heuristic!r}")

    links = set(inter)
    src_covered = {i for i, _ in links}
    tgt_covered = {j for _, j in links}
    candidates = sorted(union - links)

    def adjacent(i: int, j: int) -> bool:
        return any(abs(i - a) <= 1 and abs(j - b) <= 1 for a, b in links)

    changed = True
    while changed:
        changed = False
        for i, j in candidates:
            if (i, j) in links:
                continue
            if i in src_covered and j in tgt_covered:
                continue
            if adjacent(i, j):
                links.add((i, j))
                src_covered.add(i)
                tgt_covered.add(j)
                changed = True

    for i, j in candidates:
        if (i, j) not in links and i not in src_covered and j not in tgt_covered:
            links.add((i, j))
            src_covered.add(i)
            tgt_covered.add(j)
    return links


def bidirectional_align(pairs: Sequence[SentencePair], iterations: int,
                        mode: Mode = "model2_loglinear", null_prob: float = 0.0,
                        heuristic: Heuristic = "grow-diag-final-and",
                        decode_pairs: Sequence[SentencePair] | None = None,
                        ) -> tuple[list[AlignmentSet], StatModel, StatModel]:
    """Train both directions on ``pairs`` and decode ``decode_pairs``
    (default: the training pairs) with the given symmetrization."""
    if decode_pairs is None:
        decode_pairs = pairs
    fwd_model, _ = em_train(pairs, iterations, mode, null_prob)
    bwd_model, _ = em_train([swap_pair(p) for p in pairs], iterations, mode, null_prob)
    out: list[AlignmentSet] = []
    for pair in decode_pairs:
        fwd = viterbi_align(fwd_model, pair)
        bwd = swap_links(viterbi_align(bwd_model, swap_pair(pair)))
        out.append(symmetrize(fwd, bwd, heuristic))
    return out, fwd_model, bwd_model


# ---------------------------------------------------------------------------
# text serialization: a header line with tension and p0, then one
# "source target prob" line per lexical entry, sorted lexicographically


def save_stat_model(model: StatModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{model.tension:.17g}\t{model.null_prob:.17g}\n")
        for s in sorted(model.lex):
            for x in sorted(model.lex[s]):
                fh.write(f"{s} {x} {model.lex[s][x]:.17g}\n")


def load_stat_model(path) -> StatModel:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        parts = header.split("\t")
        if len(parts) != 2:
            raise ValueError(f"malformed stat model header: {header!r}")
        tension, null_prob = float(parts[0]), float(parts[1])
        lex: dict[str, dict[str, float]] = {}
        for line_no, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line:
                continue
            fields = line.split(" ")
            if len(fields) != 3:
                raise ValueError(f"malformed lexicon line {line_no}: {line!r}")
            s, x, prob = fields[0], fields[1], float(fields[2])
            lex.setdefault(s, {})[x] = prob
    return StatModel(lex=lex, tension=tension, null_prob=null_prob)
