import math
import random

import numpy as np
import pytest

from gridlock.bp import (
    OOV_TOKEN,
    FactorGraph,
    MarginalSet,
    WordMarginal,
    build_graph,
    greedy_fill,
    run_bp,
)
from gridlock.corpus import ALPHABET, build_letter_lm
from gridlock.evaluation import exact_marginals
from gridlock.grid import SlotId, Solution

from helpers import cand_list, grid_from_pattern, loopy_instance, make_corpus, tree_instance

LM = build_letter_lm(make_corpus([("c1", "AB"), ("c2", "BA"), ("c3", "CD")]))


def two_by_two(probs_by_slot):
    grid = grid_from_pattern(2, 2)
    cands = {SlotId.parse(k): cand_list(v) for k, v in probs_by_slot.items()}
    return grid, cands


def test_graph_structure_counts():
    grid, cands = two_by_two({
        "1-across": {"AB": 0.6, "BA": 0.4},
        "1-down": {"AB": 0.6, "BA": 0.4},
        "2-down": {"AB": 0.6, "BA": 0.4},
        "3-across": {"AB": 0.6, "BA": 0.4},
    })
    graph = build_graph(grid, cands, LM)
    assert graph.num_clue_nodes == 4
    assert graph.num_cell_nodes == 4
    assert graph.num_edges == 8
    for slot in grid.slots:
        assert graph.nodes[slot.id].length == len(slot.cells)


def test_prior_equals_qa_probs_when_no_oov():
    grid, cands = two_by_two({
        "1-across": {"AB": 0.6, "BA": 0.4},
        "1-down": {"AB": 0.7, "BA": 0.3},
        "2-down": {"AB": 0.2, "BA": 0.8},
        "3-across": {"AB": 0.5, "BA": 0.5},
    })
    graph = build_graph(grid, cands, LM, lambda_oov=0.0)
    for sid, clist in cands.items():
        node = graph.nodes[sid]
        for cand in clist.candidates:
            i = node.answers.index(cand.answer)
            assert node.log_prior[i] == math.log(cand.prob)
        assert node.log_oov == float("-inf")


def test_oov_mass_mixes_lambda_and_generator_mass():
    grid = grid_from_pattern(1, 2)
    cands = {SlotId(1, "across"): cand_list({"AB": 0.9}, oov=0.1)}
    graph = build_graph(grid, cands, LM, lambda_oov=0.02)
    node = graph.nodes[SlotId(1, "across")]
    assert math.exp(node.log_oov) == pytest.approx(0.02 + 0.98 * 0.1, rel=1e-12)
    assert math.exp(node.log_prior[0]) == pytest.approx(0.98 * 0.9, rel=1e-12)


def test_empty_candidate_slot_emits_letter_lm_messages():
    grid = grid_from_pattern(1, 2)
    cands = {SlotId(1, "across"): cand_list({}, oov=1.0)}
    graph = build_graph(grid, cands, LM, lambda_oov=0.0)
    run_bp(graph, max_iters=1, epsilon=1e-12)
    expected = np.array([LM.prob(ch) for ch in ALPHABET])
    for pos in range(2):
        assert np.allclose(graph.to_cell[SlotId(1, "across")][pos], expected, atol=1e-12)


def test_build_graph_validation():
    grid, cands = two_by_two({
        "1-across": {"AB": 1.0},
        "1-down": {"AB": 1.0},
        "2-down": {"BA": 1.0},
        "3-across": {"BA": 1.0},
    })
    with pytest.raises(ValueError, match="lambda_oov"):
        build_graph(grid, cands, LM, lambda_oov=1.0)
    missing = dict(cands)
    del missing[SlotId(3, "across")]
    with pytest.raises(ValueError, match="no candidate list"):
        build_graph(grid, missing, LM)
    wrong = dict(cands)
    wrong[SlotId(3, "across")] = cand_list({"ABC": 1.0})
    with pytest.raises(ValueError, match="length"):
        build_graph(grid, wrong, LM)


def test_run_bp_validation():
    grid, cands = two_by_two({
        "1-across": {"AB": 1.0},
        "1-down": {"AB": 1.0},
        "2-down": {"BA": 1.0},
        "3-across": {"BA": 1.0},
    })
    graph = build_graph(grid, cands, LM)
    with pytest.raises(ValueError, match="max_iters"):
        run_bp(graph, max_iters=0)
    with pytest.raises(ValueError, match="epsilon"):
        run_bp(graph, epsilon=0.0)
    with pytest.raises(ValueError, match="damping"):
        run_bp(graph, damping=1.0)


def test_uncoupled_slots_keep_their_priors():
    # two across slots separated by a blocked row never exchange messages
    grid = grid_from_pattern(3, 2, blocks=[(1, 0), (1, 1)])
    cands = {
        SlotId(1, "across"): cand_list({"AB": 0.6, "BA": 0.4}),
        SlotId(2, "across"): cand_list({"CD": 0.9, "DC": 0.1}),
    }
    graph = build_graph(grid, cands, LM, lambda_oov=0.0)
    m = run_bp(graph)
    assert m.converged
    assert m.word_marginals[SlotId(1, "across")].probs["AB"] == pytest.approx(0.6, abs=1e-12)
    assert m.word_marginals[SlotId(2, "across")].probs["CD"] == pytest.approx(0.9, abs=1e-12)
    assert m.char_marginals[(0, 0)][0] == pytest.approx(0.6, abs=1e-12)


def test_symmetric_two_by_two_matches_enumeration():
    # this instance oscillates undamped (its message cycle is measure
    # preserving); any positive damping settles it onto the exact marginals
    grid, cands = two_by_two({
        "1-across": {"AB": 0.6, "BA": 0.4},
        "1-down": {"AB": 0.6, "BA": 0.4},
        "2-down": {"AB": 0.6, "BA": 0.4},
        "3-across": {"AB": 0.6, "BA": 0.4},
    })
    graph = build_graph(grid, cands, LM, lambda_oov=0.0)
    m = run_bp(graph, max_iters=300, epsilon=1e-10, damping=0.3)
    assert m.converged
    exact_word, exact_char = exact_marginals(grid, cands)
    for sid, dist in exact_word.items():
        for answer, p in dist.items():
            assert m.word_marginals[sid].probs[answer] == pytest.approx(p, abs=1e-6)
    for cell, arr in exact_char.items():
        assert np.allclose(m.char_marginals[cell], arr, atol=1e-6)
    # the exact answer here is an even split
    assert m.word_marginals[SlotId(1, "across")].probs["AB"] == pytest.approx(0.5, abs=1e-6)
    assert m.char_marginals[(0, 0)][0] == pytest.approx(0.5, abs=1e-6)


def test_bp_is_exact_on_tree_instances():
    rng = random.Random(71)
    for _ in range(12):
        grid, cands = tree_instance(rng)
        graph = build_graph(grid, cands, LM, lambda_oov=0.0)
        m = run_bp(graph, max_iters=50, epsilon=1e-12, validate_each_iteration=True)
        assert m.converged
        exact = exact_marginals(grid, cands)
        assert exact is not None
        exact_word, exact_char = exact
        for sid, dist in exact_word.items():
            got = m.word_marginals[sid]
            assert got.oov == pytest.approx(0.0, abs=1e-12)
            for answer, p in dist.items():
                assert got.probs[answer] == pytest.approx(p, abs=1e-9)
        for cell, arr in exact_char.items():
            assert np.allclose(m.char_marginals[cell], arr, atol=1e-9)


def test_messages_and_beliefs_stay_normalized():
    rng = random.Random(73)
    for _ in range(8):
        grid, cands = loopy_instance(rng)
        graph = build_graph(grid, cands, LM)
        m = run_bp(graph, validate_each_iteration=True)
        m.validate(tol=1e-9)
        for wm in m.word_marginals.values():
            total = sum(wm.probs.values()) + wm.oov
            assert total == pytest.approx(1.0, abs=1e-9)


def test_converged_marginals_are_fixed_point_stable():
    rng = random.Random(79)
    grid, cands = loopy_instance(rng, size=3)
    graph = build_graph(grid, cands, LM)
    first = run_bp(graph, max_iters=25, epsilon=1e-6)
    assert first.converged
    again = run_bp(graph, max_iters=1, epsilon=1e-6)
    assert again.final_delta < 1e-6
    for sid in first.word_marginals:
        for answer, p in first.word_marginals[sid].probs.items():
            assert again.word_marginals[sid].probs[answer] == pytest.approx(p, abs=1e-5)


def test_run_bp_is_deterministic():
    rng1 = random.Random(83)
    rng2 = random.Random(83)
    grid1, cands1 = loopy_instance(rng1, size=3)
    grid2, cands2 = loopy_instance(rng2, size=3)
    m1 = run_bp(build_graph(grid1, cands1, LM))
    m2 = run_bp(build_graph(grid2, cands2, LM))
    assert m1.iterations == m2.iterations
    assert m1.final_delta == m2.final_delta
    for sid in m1.word_marginals:
        assert m1.word_marginals[sid].probs == m2.word_marginals[sid].probs
    for cell in m1.char_marginals:
        assert np.array_equal(m1.char_marginals[cell], m2.char_marginals[cell])


def test_char_prob_accessor():
    grid = grid_from_pattern(1, 2)
    cands = {SlotId(1, "across"): cand_list({"AB": 1.0})}
    graph = build_graph(grid, cands, LM, lambda_oov=0.0)
    m = run_bp(graph)
    assert m.char_prob((0, 0), "A") == pytest.approx(1.0, abs=1e-9)
    assert m.char_prob((0, 1), "B") == pytest.approx(1.0, abs=1e-9)


def _uniform_chars(grid):
    return {cell: np.full(26, 1.0 / 26) for cell in grid.fillable_cells}


def _marginal_set(grid, word, char=None):
    return MarginalSet(
        word_marginals={SlotId.parse(k): WordMarginal(dict(v), 1.0 - sum(v.values())) for k, v in word.items()},
        char_marginals=char if char is not None else _uniform_chars(grid),
        iterations=1,
        converged=True,
        final_delta=0.0,
    )


def test_greedy_single_slot_takes_top_marginal():
    grid = grid_from_pattern(1, 3)
    cands = {SlotId(1, "across"): cand_list({"CAT": 0.55, "DOG": 0.45})}
    marginals = _marginal_set(grid, {"1-across": {"CAT": 0.55, "DOG": 0.45}})
    sol = greedy_fill(grid, cands, marginals)
    assert sol.answers[SlotId(1, "across")] == "CAT"


def test_greedy_tie_breaks_lexicographically():
    grid = grid_from_pattern(1, 3)
    cands = {SlotId(1, "across"): cand_list({"CAT": 0.5, "BAT": 0.5})}
    marginals = _marginal_set(grid, {"1-across": {"CAT": 0.5, "BAT": 0.5}})
    assert greedy_fill(grid, cands, marginals).answers[SlotId(1, "across")] == "BAT"


def test_greedy_consistent_top_candidates_fill_directly():
    grid, cands = two_by_two({
        "1-across": {"AB": 0.9, "BA": 0.1},
        "1-down": {"AB": 0.8, "BA": 0.2},
        "2-down": {"BA": 0.7, "AB": 0.3},
        "3-across": {"BA": 0.6, "AB": 0.4},
    })
    word = {str(sid): {c.answer: c.prob for c in cl.candidates} for sid, cl in cands.items()}
    sol = greedy_fill(grid, cands, _marginal_set(grid, word))
    assert sol.answers == {
        SlotId(1, "across"): "AB",
        SlotId(1, "down"): "AB",
        SlotId(2, "down"): "BA",
        SlotId(3, "across"): "BA",
    }


def test_greedy_adversarial_hand_trace():
    """Constructed so the commit order and the final fill are forced:
    2-down commits first (0.7), its B at (1,1) starves 3-across, and the
    fallback never runs because crossings already cover its cells."""
    grid, cands = two_by_two({
        "1-across": {"AB": 0.6, "BA": 0.4},
        "3-across": {"BA": 0.6, "AB": 0.4},
        "1-down": {"AB": 0.55, "BA": 0.45},
        "2-down": {"BB": 0.7, "AA": 0.3},
    })
    word = {str(sid): {c.answer: c.prob for c in cl.candidates} for sid, cl in cands.items()}
    sol = greedy_fill(grid, cands, _marginal_set(grid, word))
    assert sol.letters == {(0, 0): "A", (0, 1): "B", (1, 0): "B", (1, 1): "B"}
    assert sol.answers[SlotId(3, "across")] == "BB"  # not among its candidates


def test_greedy_fallback_uses_char_argmax():
    grid = grid_from_pattern(1, 2)
    chars = {
        (0, 0): np.zeros(26),
        (0, 1): np.zeros(26),
    }
    chars[(0, 0)][ALPHABET.index("Q")] = 1.0
    # exact tie between J and K resolves alphabetically
    chars[(0, 1)][ALPHABET.index("K")] = 0.5
    chars[(0, 1)][ALPHABET.index("J")] = 0.5
    cands = {SlotId(1, "across"): cand_list({}, oov=1.0)}
    marginals = _marginal_set(grid, {"1-across": {}}, chars)
    sol = greedy_fill(grid, cands, marginals)
    assert sol.letters == {(0, 0): "Q", (0, 1): "J"}


def test_greedy_requires_marginals_for_every_slot():
    grid = grid_from_pattern(1, 2)
    cands = {SlotId(1, "across"): cand_list({"AB": 1.0})}
    empty = MarginalSet({}, {}, 0, True, 0.0)
    with pytest.raises(ValueError, match="no word marginal"):
        greedy_fill(grid, cands, empty)


def test_greedy_rejects_marginals_with_unknown_answers():
    grid = grid_from_pattern(1, 2)
    cands = {SlotId(1, "across"): cand_list({"AB": 1.0})}
    marginals = _marginal_set(grid, {"1-across": {"AB": 0.5, "ZZ": 0.5}})
    with pytest.raises(ValueError, match="not in candidates"):
        greedy_fill(grid, cands, marginals)


def test_greedy_output_is_complete_and_consistent():
    rng = random.Random(89)
    for _ in range(10):
        grid, cands = loopy_instance(rng)
        graph = build_graph(grid, cands, LM)
        m = run_bp(graph)
        sol = greedy_fill(grid, cands, m)
        assert set(sol.letters) == set(grid.fillable_cells)
        for slot in grid.slots:
            assert sol.answers[slot.id] == "".join(sol.letters[c] for c in slot.cells)
            assert len(sol.answers[slot.id]) == slot.length


def test_oov_token_name():
    assert OOV_TOKEN == "<oov>"


def test_word_marginal_includes_oov_share():
    grid = grid_from_pattern(1, 2)
    cands = {SlotId(1, "across"): cand_list({"AB": 0.5}, oov=0.5)}
    graph = build_graph(grid, cands, LM, lambda_oov=0.0)
    m = run_bp(graph)
    wm = m.word_marginals[SlotId(1, "across")]
    assert wm.oov > 0
    assert wm.probs["AB"] + wm.oov == pytest.approx(1.0, abs=1e-9)
