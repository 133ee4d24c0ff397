"""Accuracy metrics, tournament scoring, and the brute-force exact oracle
used to verify approximate inference on small instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Mapping, Sequence

import numpy as np

from .corpus import ALPHABET
from .grid import PuzzleGrid, SlotId, Solution
from .qa import CandidateList

DEFAULT_ORACLE_CAP = 10**6
PERFECT_BONUS = 150
POINTS_PER_WORD = 10
POINTS_PER_MINUTE = 25
PENALTY_PER_WRONG_LETTER = 25


@dataclass(frozen=True)
class PuzzleScore:
    letter_acc: float
    word_acc: float
    perfect: bool
    acpt_points: int


def acpt_score(
    word_count: int,
    correct_words: int,
    wrong_letters: int,
    minutes_remaining: int,
    perfect: bool,
) -> int:
    """Tournament points: 10 per correct word, 150 perfection bonus, and a
    time bonus of 25 per full minute remaining reduced by 25 per wrong letter,
    floored at zero."""
    if min(word_count, correct_words, wrong_letters, minutes_remaining) < 0:
        raise ValueError("counts must be nonnegative")
    if correct_words > word_count:
        raise ValueError(f"correct_words {correct_words} exceeds word_count {word_count}")
    time_term = POINTS_PER_MINUTE * minutes_remaining - PENALTY_PER_WRONG_LETTER * wrong_letters
    return (
        POINTS_PER_WORD * correct_words
        + (PERFECT_BONUS if perfect else 0)
        + max(0, time_term)
    )


def score_solution_vs_gold(
    grid: PuzzleGrid,
    sol: Solution,
    gold: Solution,
    minutes_remaining: int = 0,
) -> PuzzleScore:
    """Cell-level, slot-level, and tournament scores of sol against gold."""
    cells = grid.fillable_cells
    for name, solution in (("solution", sol), ("gold", gold)):
        if set(solution.letters) != set(cells):
            raise ValueError(f"{name} does not cover this grid's cells")
    correct_cells = sum(1 for c in cells if sol.letters[c] == gold.letters[c])
    correct_words = sum(
        1 for slot in grid.slots if sol.answers[slot.id] == gold.answers[slot.id]
    )
    perfect = correct_cells == len(cells)
    return PuzzleScore(
        letter_acc=correct_cells / len(cells),
        word_acc=correct_words / len(grid.slots),
        perfect=perfect,
        acpt_points=acpt_score(
            word_count=len(grid.slots),
            correct_words=correct_words,
            wrong_letters=len(cells) - correct_cells,
            minutes_remaining=minutes_remaining,
            perfect=perfect,
        ),
    )


def aggregate_scores(
    scored: Sequence[tuple[PuzzleScore, int, int]],
) -> dict[str, float]:
    """Aggregate (score, fillable_cell_count, slot_count) rows: letter
    accuracy weighted by cells, word accuracy by slots, perfect by puzzle."""
    if not scored:
        raise ValueError("nothing to aggregate")
    cells = sum(n for _, n, _ in scored)
    slots = sum(k for _, _, k in scored)
    return {
        "puzzles": len(scored),
        "perfect": sum(1 for s, _, _ in scored if s.perfect) / len(scored),
        "word_acc": sum(s.word_acc * k for s, _, k in scored) / slots,
        "letter_acc": sum(s.letter_acc * n for s, n, _ in scored) / cells,
    }


class Objective(Enum):
    MAX_LIKELIHOOD = "max_likelihood"
    MAX_EXPECTED_OVERLAP = "max_expected_overlap"


class OracleCapacityError(ValueError):
    """The joint assignment space exceeds the configured enumeration cap."""


def _check_oracle_inputs(
    grid: PuzzleGrid, candidates: Mapping[SlotId, CandidateList], cap: int
) -> list[tuple[SlotId, tuple[tuple[int, int], ...], list[tuple[str, float]]]]:
    space = 1
    per_slot = []
    for slot in grid.slots:
        clist = candidates.get(slot.id)
        if clist is None:
            raise ValueError(f"slot {slot.id} has no candidate list")
        if clist.oov_mass != 0:
            raise ValueError(
                f"slot {slot.id} has oov_mass {clist.oov_mass}; the oracle is "
                "closed-world and requires 0"
            )
        options = [(c.answer, c.prob) for c in clist.candidates]
        space *= len(options)
        per_slot.append((slot.id, slot.cells, options))
    if space > cap:
        raise OracleCapacityError(f"assignment space {space} exceeds cap {cap}")
    return per_slot


def _iter_assignments(
    per_slot: Sequence[tuple[SlotId, tuple[tuple[int, int], ...], list[tuple[str, float]]]],
) -> Iterator[tuple[tuple[str, ...], float]]:
    """All crossing-consistent joint assignments, with their prior products,
    by backtracking in SlotId order."""
    n = len(per_slot)
    chosen: list[str] = [""] * n
    letters: dict[tuple[int, int], str] = {}

    def recurse(i: int, weight: float) -> Iterator[tuple[tuple[str, ...], float]]:
        if i == n:
            yield tuple(chosen), weight
            return
        _, cells, options = per_slot[i]
        for answer, prob in options:
            placed = []
            ok = True
            for pos, cell in enumerate(cells):
                existing = letters.get(cell)
                if existing is None:
                    letters[cell] = answer[pos]
                    placed.append(cell)
                elif existing != answer[pos]:
                    ok = False
                    break
            if ok:
                chosen[i] = answer
                yield from recurse(i + 1, weight * prob)
            for cell in placed:
                del letters[cell]

    yield from recurse(0, 1.0)


def _solution_from_answers(
    grid: PuzzleGrid,
    per_slot: Sequence[tuple[SlotId, tuple[tuple[int, int], ...], list[tuple[str, float]]]],
    answers: tuple[str, ...],
) -> Solution:
    letters: dict[tuple[int, int], str] = {}
    for (sid, cells, _), answer in zip(per_slot, answers):
        for pos, cell in enumerate(cells):
            letters[cell] = answer[pos]
    return Solution.from_letters(grid, letters)


def exact_marginals(
    grid: PuzzleGrid,
    candidates: Mapping[SlotId, CandidateList],
    cap: int = DEFAULT_ORACLE_CAP,
) -> tuple[dict[SlotId, dict[str, float]], dict[tuple[int, int], np.ndarray]] | None:
    """Exact per-slot answer marginals and per-cell letter marginals by full
    enumeration, or None when no consistent assignment exists."""
    per_slot = _check_oracle_inputs(grid, candidates, cap)
    word_sums: list[dict[str, float]] = [
        {answer: 0.0 for answer, _ in options} for _, _, options in per_slot
    ]
    char_sums = {cell: np.zeros(len(ALPHABET)) for cell in grid.fillable_cells}
    letter_index = {ch: i for i, ch in enumerate(ALPHABET)}
    z = 0.0
    for answers, weight in _iter_assignments(per_slot):
        z += weight
        for i, answer in enumerate(answers):
            word_sums[i][answer] += weight
        # Crossing slots agree on shared cells, so last-write-wins is exact.
        sol_letters: dict[tuple[int, int], str] = {}
        for (_, cells, _), answer in zip(per_slot, answers):
            for pos, cell in enumerate(cells):
                sol_letters[cell] = answer[pos]
        for cell, ch in sol_letters.items():
            char_sums[cell][letter_index[ch]] += weight
    if z == 0.0:
        return None
    word = {
        sid: {answer: s / z for answer, s in sums.items()}
        for (sid, _, _), sums in zip(per_slot, word_sums)
    }
    char = {cell: arr / z for cell, arr in char_sums.items()}
    return word, char


def exact_oracle(
    grid: PuzzleGrid,
    candidates: Mapping[SlotId, CandidateList],
    objective: Objective,
    cap: int = DEFAULT_ORACLE_CAP,
) -> Solution | None:
    """Optimal consistent assignment under the chosen objective, by full
    enumeration; None when no consistent assignment exists. Ties break
    lexicographically by the answer tuple in SlotId order.
    """
    per_slot = _check_oracle_inputs(grid, candidates, cap)
    if objective is Objective.MAX_EXPECTED_OVERLAP:
        marginals = exact_marginals(grid, candidates, cap)
        if marginals is None:
            return None
        word, _ = marginals
        slot_margs = [word[sid] for sid, _, _ in per_slot]

        def value(answers: tuple[str, ...], weight: float) -> float:
            return sum(m[a] for m, a in zip(slot_margs, answers))

    elif objective is Objective.MAX_LIKELIHOOD:

        def value(answers: tuple[str, ...], weight: float) -> float:
            return weight

    else:
        raise ValueError(f"unknown objective {objective!r}")

    best: tuple[float, tuple[str, ...]] | None = None
    for answers, weight in _iter_assignments(per_slot):
        v = value(answers, weight)
        if best is None or v > best[0] or (v == best[0] and answers < best[1]):
            best = (v, answers)
    if best is None:
        return None
    return _solution_from_answers(grid, per_slot, best[1])
