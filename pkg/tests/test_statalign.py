import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alignkit import statalign as sa
from alignkit.corpus import SentencePair


def mk(src: str, tgt: str, pid: str = "") -> SentencePair:
    return SentencePair(tuple(src.split()), tuple(tgt.split()), pid)


# ---------------------------------------------------------------------------
# enumeration oracle: EM where posteriors come from brute-force enumeration
# over every alignment function, rather than the factorized per-position form


def _enum_estep(pair, lex, tension, null_prob):
    n, m = pair.n_source, pair.n_target
    prior = sa.position_prior(n, m, tension, null_prob)
    posts = np.zeros((m, n + 1))  # column 0 is the null word
    total = 0.0
    for assign in itertools.product(range(-1, n), repeat=m):
        p = 1.0
        for j, i in enumerate(assign):
            x = pair.target[j]
            if i == -1:
                p *= null_prob * lex.get(sa.NULL_WORD, {}).get(x, 0.0)
            else:
                p *= prior[j, i] * lex[pair.source[i]].get(x, 0.0)
        total += p
        for j, i in enumerate(assign):
            posts[j, i + 1] += p
    posts /= total
    return posts, math.log(total)


def oracle_em(pairs, iterations, null_prob=0.0, tension=0.0):
    cooc = {}
    for pair in pairs:
        for s in pair.source:
            cooc.setdefault(s, set()).update(pair.target)
        if null_prob > 0.0:
            cooc.setdefault(sa.NULL_WORD, set()).update(pair.target)
    lex = {s: {x: 1.0 / len(xs) for x in xs} for s, xs in cooc.items()}
    history = []
    for _ in range(iterations):
        counts = {}
        ll = 0.0
        for pair in pairs:
            posts, pair_ll = _enum_estep(pair, lex, tension, null_prob)
            ll += pair_ll
            for j, x in enumerate(pair.target):
                if null_prob > 0.0:
                    counts.setdefault(sa.NULL_WORD, {}).setdefault(x, 0.0)
                    counts[sa.NULL_WORD][x] += posts[j, 0]
                for i, s in enumerate(pair.source):
                    counts.setdefault(s, {}).setdefault(x, 0.0)
                    counts[s][x] += posts[j, i + 1]
        history.append(ll)
        for s, row in counts.items():
            total = sum(row.values())
            if total > 0.0:
                lex[s] = {x: c / total for x, c in row.items()}
    return lex, history


TINY = [mk("a b", "x y", "1"), mk("a", "x", "2")]


def test_em_matches_enumeration_oracle():
    model, history = sa.em_train(TINY, iterations=5, mode="model1")
    oracle_lex, oracle_history = oracle_em(TINY, iterations=5)
    np.testing.assert_allclose(history, oracle_history, rtol=0, atol=1e-12)
    for s, row in oracle_lex.items():
        for x, p in row.items():
            assert model.lex[s][x] == pytest.approx(p, abs=1e-12)


def test_em_trajectory_frozen_values():
    # the two-pair corpus above, by enumeration: after 5 iterations the
    # frequent pairing has consolidated, the rare one is still on its way
    model, history = sa.em_train(TINY, iterations=5, mode="model1")
    assert model.lex["a"]["x"] == pytest.approx(0.955198636027, abs=1e-10)
    assert model.lex["b"]["y"] == pytest.approx(0.826958641556, abs=1e-10)
    assert model.lex["a"]["x"] > 0.95
    assert history[0] == pytest.approx(3 * math.log(0.5), abs=1e-12)
    # the same run extended: the rare pairing also converges
    model15, _ = sa.em_train(TINY, iterations=15, mode="model1")
    assert model15.lex["b"]["y"] > 0.95


def test_em_with_null_matches_enumeration_oracle():
    pairs = [mk("a b", "x q y"), mk("b", "y q"), mk("a", "x")]
    model, history = sa.em_train(pairs, iterations=4, mode="model1", null_prob=0.2)
    oracle_lex, oracle_history = oracle_em(pairs, iterations=4, null_prob=0.2)
    np.testing.assert_allclose(history, oracle_history, rtol=0, atol=1e-10)
    for s, row in oracle_lex.items():
        for x, p in row.items():
            assert model.lex[s][x] == pytest.approx(p, abs=1e-10)


def test_em_log_likelihood_non_decreasing():
    rng = np.random.default_rng(11)
    lexicon = {f"s{k}": f"t{k}" for k in range(12)}
    keys = sorted(lexicon)
    pairs = []
    for idx in range(60):
        words = rng.choice(keys, size=rng.integers(2, 6), replace=False)
        pairs.append(SentencePair(
            tuple(words), tuple(lexicon[w] for w in words), str(idx)))
    for mode in ("model1", "model2_loglinear"):
        _, history = sa.em_train(pairs, iterations=8, mode=mode, null_prob=0.05)
        for before, after in zip(history, history[1:]):
            assert after >= before - 1e-9, f"{mode}: {history}"


def test_lexical_rows_sum_to_one():
    pairs = [mk("a b c", "x y"), mk("b", "z"), mk("a c", "x z")]
    model, _ = sa.em_train(pairs, iterations=3, mode="model2_loglinear", null_prob=0.1)
    for s, row in model.lex.items():
        assert sum(row.values()) == pytest.approx(1.0, abs=1e-9), s


def test_tension_update_matches_grid_search_oracle():
    # diagonal corpus: the learned tension must essentially match a dense
    # grid argmax of the same expected-likelihood objective
    rng = np.random.default_rng(3)
    pairs = []
    for idx in range(40):
        length = int(rng.integers(3, 7))
        words = [f"w{rng.integers(0, 20)}" for _ in range(length)]
        pairs.append(SentencePair(
            tuple(words), tuple("T" + w for w in words), str(idx)))
    model, _ = sa.em_train(pairs, iterations=3, mode="model2_loglinear")
    assert model.tension > 0.0

    # recompute the final-iteration posteriors under the trained model and
    # check its tension is optimal on a fine grid of the same objective
    shapes = sorted({(p.n_source, p.n_target) for p in pairs})
    distances = {shape: sa._distance_matrix(*shape) for shape in shapes}
    gamma_by_shape = {(n, m): np.zeros((m, n)) for n, m in shapes}
    for pair in pairs:
        prior = sa.position_prior(pair.n_source, pair.n_target, model.tension, 0.0)
        for j, x in enumerate(pair.target):
            scores = np.array([prior[j, i] * model.prob(s, x)
                               for i, s in enumerate(pair.source)])
            gamma_by_shape[(pair.n_source, pair.n_target)][j] += scores / scores.sum()

    def objective(lam):
        total = 0.0
        for shape, gammas in gamma_by_shape.items():
            d = distances[shape]
            log_z = np.log(np.exp(-lam * d).sum(axis=1))
            total += -lam * (gammas * d).sum() - (gammas.sum(axis=1) * log_z).sum()
        return total

    best = sa._update_tension(gamma_by_shape, distances)
    grid = np.linspace(*sa.TENSION_BOUNDS, 2001)
    grid_best = grid[int(np.argmax([objective(l) for l in grid]))]
    assert abs(best - grid_best) < 0.05
    assert objective(best) >= objective(grid_best) - 1e-9


def test_em_rejects_bad_arguments():
    with pytest.raises(ValueError):
        sa.em_train(TINY, iterations=0)
    with pytest.raises(ValueError):
        sa.em_train(TINY, iterations=1, null_prob=1.0)
    with pytest.raises(ValueError):
        sa.em_train(TINY, iterations=1, mode="model3")
    with pytest.raises(ValueError):
        sa.em_train([], iterations=1)


# ---------------------------------------------------------------------------
# decoding


def test_viterbi_perfect_lexicon():
    model = sa.StatModel(lex={"a": {"x": 1.0}, "b": {"y": 1.0}})
    assert sa.viterbi_align(model, mk("a b", "x y")) == {(0, 0), (1, 1)}


def test_viterbi_null_absorbs_under_high_p0():
    lex = {"a": {"x": 0.5, "y": 0.5}, sa.NULL_WORD: {"x": 0.5, "y": 0.5}}
    model = sa.StatModel(lex=lex, null_prob=0.99)
    assert sa.viterbi_align(model, mk("a", "x y")) == set()


def test_viterbi_tie_breaks_toward_smaller_source_index():
    lex = {"a": {"x": 0.5}, "b": {"x": 0.5}}
    model = sa.StatModel(lex=lex)
    assert sa.viterbi_align(model, mk("a b", "x")) == {(0, 0)}


def test_viterbi_unseen_word_uses_floor_probability():
    model = sa.StatModel(lex={"a": {"x": 1.0}})
    # "q" was never seen: every source scores the same floor, leftmost wins
    assert sa.viterbi_align(model, mk("a b", "q")) == {(0, 0)}


def test_align_corpus_lengths():
    model = sa.StatModel(lex={"a": {"x": 1.0}})
    out = sa.align_corpus(model, [mk("a", "x"), mk("a a", "x x")])
    assert len(out) == 2


def test_em_bijective_lexicon_recovers_diagonal():
    rng = np.random.default_rng(5)
    vocab = [f"w{k}" for k in range(15)]
    pairs = []
    for idx in range(80):
        words = rng.choice(vocab, size=rng.integers(2, 6), replace=False)
        pairs.append(SentencePair(
            tuple(words), tuple("T" + w for w in words), str(idx)))
    links, _, _ = sa.bidirectional_align(pairs, iterations=8, mode="model1")
    for pair, got in zip(pairs, links):
        assert got == {(k, k) for k in range(pair.n_source)}


# ---------------------------------------------------------------------------
# symmetrization


def test_symmetrize_intersection_union():
    fwd = {(0, 0), (1, 1)}
    bwd = {(0, 0), (1, 2)}
    assert sa.symmetrize(fwd, bwd, "intersection") == {(0, 0)}
    assert sa.symmetrize(fwd, bwd, "union") == {(0, 0), (1, 1), (1, 2)}
    assert sa.symmetrize(fwd, bwd, "forward") == fwd
    assert sa.symmetrize(fwd, bwd, "backward") == bwd


def test_gdfa_grows_adjacent_links_while_uncovered():
    # (1,1) joins by diagonal adjacency; (1,2) then joins because target 2
    # is still uncovered and it touches the freshly added (1,1)
    fwd = {(0, 0), (1, 1)}
    bwd = {(0, 0), (1, 2)}
    assert sa.symmetrize(fwd, bwd) == {(0, 0), (1, 1), (1, 2)}


def test_gdfa_chain_growth():
    fwd = {(0, 0), (1, 1), (2, 2)}
    bwd = {(0, 0)}
    assert sa.symmetrize(fwd, bwd) == {(0, 0), (1, 1), (2, 2)}


def test_gdfa_final_and_requires_both_endpoints_uncovered():
    # far-away link with both endpoints free: added by the final pass
    assert sa.symmetrize({(0, 0), (3, 3)}, {(0, 0)}) == {(0, 0), (3, 3)}
    # same source already covered: the final pass must not add it
    assert sa.symmetrize({(0, 0), (0, 3)}, {(0, 0)}) == {(0, 0)}


def test_gdfa_identity_on_equal_inputs():
    links = {(0, 0), (2, 1), (5, 5)}
    assert sa.symmetrize(links, links) == links


def test_symmetrize_unknown_heuristic():
    with pytest.raises(ValueError):
        sa.symmetrize(set(), set(), "magic")


links_sets = st.sets(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=12)


@settings(max_examples=120, deadline=None)
@given(links_sets, links_sets)
def test_gdfa_between_intersection_and_union(fwd, bwd):
    gdfa = sa.symmetrize(fwd, bwd)
    assert fwd & bwd <= gdfa
    assert gdfa <= (fwd | bwd)


@settings(max_examples=60, deadline=None)
@given(links_sets)
def test_gdfa_of_identical_sets_is_identity(links):
    assert sa.symmetrize(links, links) == links


def test_swap_helpers():
    pair = mk("a b", "x")
    swapped = sa.swap_pair(pair)
    assert swapped.source == ("x",) and swapped.target == ("a", "b")
    assert sa.swap_links({(0, 1), (2, 0)}) == {(1, 0), (0, 2)}


# ---------------------------------------------------------------------------
# serialization


def test_stat_model_text_round_trip(tmp_path):
    pairs = [mk("a b", "x y"), mk("a", "x")]
    model, _ = sa.em_train(pairs, iterations=4, mode="model2_loglinear", null_prob=0.1)
    path = tmp_path / "model.txt"
    sa.save_stat_model(model, path)
    back = sa.load_stat_model(path)
    assert back.tension == model.tension
    assert back.null_prob == model.null_prob
    assert back.lex == model.lex
    # decode equivalence
    for pair in pairs:
        assert sa.viterbi_align(back, pair) == sa.viterbi_align(model, pair)


def test_stat_model_file_is_sorted(tmp_path):
    model = sa.StatModel(lex={"b": {"y": 1.0}, "a": {"z": 0.5, "x": 0.5}})
    path = tmp_path / "model.txt"
    sa.save_stat_model(model, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "0\t0"
    assert [l.split()[0:2] for l in lines[1:]] == \
        [["a", "x"], ["a", "z"], ["b", "y"]]


def test_load_stat_model_rejects_malformed(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("just-one-field\na b 0.5\n")
    with pytest.raises(ValueError):
        sa.load_stat_model(path)
