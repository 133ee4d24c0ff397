"""Shared builders for the test suite.

Instances built here are closed-world (no out-of-vocabulary mass) unless a
test says otherwise, so the enumeration oracle can score them.
"""

from __future__ import annotations

import json
import random

from gridlock.corpus import ALPHABET, ClueCorpus, CluePair
from gridlock.grid import PuzzleGrid, Slot, SlotId, extract_slots, parse_puzzle
from gridlock.qa import Candidate, CandidateList


def puzzle_json(
    rows: int,
    cols: int,
    blocks=(),
    across=None,
    down=None,
    solution=None,
    themed=None,
) -> str:
    doc = {
        "rows": rows,
        "cols": cols,
        "blocks": [list(b) for b in blocks],
        "clues": {
            "across": {str(k): v for k, v in (across or {}).items()},
            "down": {str(k): v for k, v in (down or {}).items()},
        },
    }
    if solution is not None:
        doc["solution"] = [list(row) if isinstance(row, str) else row for row in solution]
    if themed is not None:
        doc["themed"] = themed
    return json.dumps(doc)


def auto_clues(rows, cols, blocks=()):
    """Placeholder clue maps covering every slot of the block pattern."""
    cells = [[(r, c) not in set(map(tuple, blocks)) for c in range(cols)] for r in range(rows)]
    slots = extract_slots(cells)
    across = {}
    down = {}
    for slot in slots:
        target = across if slot.id.direction == "across" else down
        target[slot.id.number] = f"clue {slot.id}"
    return across, down


def grid_from_pattern(rows, cols, blocks=(), across=None, down=None) -> PuzzleGrid:
    """Parse a block pattern; clue maps default to placeholders, and any
    entries passed in override the placeholder for that slot number."""
    auto_across, auto_down = auto_clues(rows, cols, blocks)
    auto_across.update(across or {})
    auto_down.update(down or {})
    return parse_puzzle(puzzle_json(rows, cols, blocks, auto_across, auto_down))


def corpus_lines(pairs) -> str:
    """pairs: iterables of (clue, answer[, source[, year]])."""
    lines = []
    for pair in pairs:
        clue, answer = pair[0], pair[1]
        record = {"clue": clue, "answer": answer}
        record["source"] = pair[2] if len(pair) > 2 else "test"
        record["year"] = pair[3] if len(pair) > 3 else 2020
        lines.append(json.dumps(record))
    return "\n".join(lines) + "\n"


def make_corpus(pairs) -> ClueCorpus:
    made = []
    for pair in pairs:
        clue, answer = pair[0], pair[1]
        source = pair[2] if len(pair) > 2 else "test"
        year = pair[3] if len(pair) > 3 else 2020
        made.append(CluePair(clue, answer, source, year))
    return ClueCorpus(made)


def cand_list(probs: dict[str, float], oov: float = 0.0, slot=None) -> CandidateList:
    """Candidates sorted the way the generator emits them: prob desc, answer asc."""
    ordered = sorted(probs.items(), key=lambda kv: (-kv[1], kv[0]))
    return CandidateList(
        tuple(Candidate(a, p) for a, p in ordered), oov_mass=oov, slot=slot
    )


def dict_counts(words, count=100):
    return {w: count for w in words}


# Closed-world random instances for oracle cross-checks. Every instance
# plants a gold assignment so at least one consistent assignment exists.


def _plant_candidates(rng, grid, gold_letters, n_distractors, alphabet, gold_weight):
    candidates = {}
    for slot in grid.slots:
        gold = "".join(gold_letters[cell] for cell in slot.cells)
        pool = {gold}
        while len(pool) < 1 + n_distractors:
            pool.add("".join(rng.choice(alphabet) for _ in range(slot.length)))
        weights = {}
        for answer in sorted(pool):
            weights[answer] = gold_weight if answer == gold else rng.uniform(0.05, 1.0)
        total = sum(weights.values())
        candidates[slot.id] = cand_list({a: w / total for a, w in weights.items()})
    return candidates


def tree_instance(rng: random.Random, alphabet="ABC", max_distractors=4):
    """Comb-shaped puzzle: an across spine in row 0 plus down teeth at
    non-adjacent columns. The clue/cell factor graph is acyclic.
    """
    cols = rng.randint(2, 8)
    tooth_cols = [c for c in range(cols) if rng.random() < 0.5]
    tooth_cols = [c for i, c in enumerate(tooth_cols) if i == 0 or c - tooth_cols[i - 1] > 1]
    depths = {c: rng.randint(1, 3) for c in tooth_cols}
    rows = 1 + max(depths.values(), default=0)
    blocks = [
        (r, c)
        for r in range(1, rows)
        for c in range(cols)
        if r > depths.get(c, 0)
    ]
    grid = grid_from_pattern(rows, cols, blocks)
    gold_letters = {cell: rng.choice(alphabet) for cell in grid.fillable_cells}
    n_distractors = rng.randint(0, max_distractors)
    gold_weight = rng.uniform(0.5, 2.0)
    candidates = _plant_candidates(rng, grid, gold_letters, n_distractors, alphabet, gold_weight)
    return grid, candidates


def loopy_instance(rng: random.Random, size=None, alphabet="ABCDEF", max_candidates=10):
    """Fully crossed square grid (2x2 or 3x3), every cell in two slots."""
    n = size if size is not None else rng.choice((2, 3))
    grid = grid_from_pattern(n, n)
    gold_letters = {cell: rng.choice(alphabet) for cell in grid.fillable_cells}
    n_distractors = rng.randint(1, max_candidates - 1)
    gold_weight = rng.uniform(1.5, 4.0)
    candidates = _plant_candidates(rng, grid, gold_letters, n_distractors, alphabet, gold_weight)
    return grid, candidates


def random_letters(rng: random.Random, length: int, alphabet=ALPHABET) -> str:
    return "".join(rng.choice(alphabet) for _ in range(length))


# A 15x15 block pattern with 66 slots (31 across, 35 down), rotationally
# symmetric, minimum run length 3, every fillable cell in exactly two slots.
GRID15_ROWS = [
    "......#........",
    "......#........",
    "...............",
    "##.....#.......",
    ".....#.....#...",
    "........#....##",
    "...#......#....",
    "...............",
    "....#......#...",
    "##....#........",
    "...#.....#.....",
    ".......#.....##",
    "...............",
    "........#......",
    "........#......",
]


def pattern_blocks(rows):
    return [
        (r, c) for r, row in enumerate(rows) for c, ch in enumerate(row) if ch == "#"
    ]
