"""Crossword grid model: cells, slots, numbering, and the puzzle JSON format.

A grid is a rectangular lattice of blocked and fillable cells. Slots are
maximal horizontal/vertical runs of fillable cells, numbered in the standard
row-major convention (a cell is numbered iff it starts an across or a down
slot). Grids and solutions are immutable once built and safe to share.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

ACROSS = "across"
DOWN = "down"
DEFAULT_MIN_SLOT_LENGTH = 2


class PuzzleFormatError(ValueError):
    """A puzzle file violates the puzzle JSON contract."""


@dataclass(frozen=True, order=True)
class SlotId:
    number: int
    direction: str

    def __str__(self) -> str:
        return f"{self.number}-{self.direction}"

    @classmethod
    def parse(cls, key: str) -> "SlotId":
        num, _, direction = key.partition("-")
        if direction not in (ACROSS, DOWN) or not num.isdigit():
            raise ValueError(f"bad slot id {key!r}")
        return cls(int(num), direction)


@dataclass(frozen=True)
class Slot:
    id: SlotId
    cells: tuple[tuple[int, int], ...]

    @property
    def length(self) -> int:
        return len(self.cells)

    @property
    def direction(self) -> str:
        return self.id.direction


class PuzzleGrid:
    """Immutable grid: cell matrix, slots, and clue texts keyed by slot id."""

    def __init__(
        self,
        rows: int,
        cols: int,
        cells: Sequence[Sequence[bool]],
        slots: Sequence[Slot],
        clue_texts: Mapping[SlotId, str],
    ):
        self.rows = rows
        self.cols = cols
        self.cells = tuple(tuple(bool(c) for c in row) for row in cells)
        self.slots = tuple(sorted(slots, key=lambda s: s.id))
        self.clue_texts = dict(clue_texts)

    def is_fillable(self, row: int, col: int) -> bool:
        return self.cells[row][col]

    @cached_property
    def fillable_cells(self) -> tuple[tuple[int, int], ...]:
        return tuple(
            (r, c)
            for r in range(self.rows)
            for c in range(self.cols)
            if self.cells[r][c]
        )

    @cached_property
    def slot_map(self) -> dict[SlotId, Slot]:
        return {s.id: s for s in self.slots}

    @cached_property
    def cell_slots(self) -> dict[tuple[int, int], tuple[tuple[SlotId, int], ...]]:
        """For each fillable cell: the (slot id, position in slot) pairs covering it."""
        found: dict[tuple[int, int], list[tuple[SlotId, int]]] = {
            cell: [] for cell in self.fillable_cells
        }
        for slot in self.slots:
            for pos, cell in enumerate(slot.cells):
                found[cell].append((slot.id, pos))
        return {cell: tuple(pairs) for cell, pairs in found.items()}

    def clue(self, slot_id: SlotId) -> str:
        return self.clue_texts[slot_id]


@dataclass(frozen=True)
class Solution:
    """A complete letter assignment plus the per-slot answers it induces."""

    letters: dict[tuple[int, int], str]
    answers: dict[SlotId, str]

    @classmethod
    def from_letters(
        cls, grid: PuzzleGrid, letters: Mapping[tuple[int, int], str]
    ) -> "Solution":
        for cell in grid.fillable_cells:
            ch = letters.get(cell)
            if ch is None:
                raise ValueError(f"missing letter for cell {cell}")
            if len(ch) != 1 or not ("A" <= ch <= "Z"):
                raise ValueError(f"cell {cell} holds {ch!r}, expected one of A-Z")
        answers = {
            slot.id: "".join(letters[cell] for cell in slot.cells)
            for slot in grid.slots
        }
        return cls(dict(letters), answers)


def extract_slots(
    cells: Sequence[Sequence[bool]],
    min_slot_length: int = DEFAULT_MIN_SLOT_LENGTH,
) -> list[Slot]:
    """Find all maximal fillable runs of length >= min_slot_length, numbered
    in row-major start-cell order. Deterministic; empty for all-block grids.
    """
    rows = len(cells)
    cols = len(cells[0]) if rows else 0
    if any(len(row) != cols for row in cells):
        raise ValueError("cell matrix is ragged")

    def fillable(r: int, c: int) -> bool:
        return 0 <= r < rows and 0 <= c < cols and bool(cells[r][c])

    def run_cells(r: int, c: int, dr: int, dc: int) -> tuple[tuple[int, int], ...]:
        out = []
        while fillable(r, c):
            out.append((r, c))
            r, c = r + dr, c + dc
        return tuple(out)

    slots: list[Slot] = []
    number = 0
    for r in range(rows):
        for c in range(cols):
            if not fillable(r, c):
                continue
            starts_across = not fillable(r, c - 1) and len(run_cells(r, c, 0, 1)) >= min_slot_length
            starts_down = not fillable(r - 1, c) and len(run_cells(r, c, 1, 0)) >= min_slot_length
            if not (starts_across or starts_down):
                continue
            number += 1
            if starts_across:
                slots.append(Slot(SlotId(number, ACROSS), run_cells(r, c, 0, 1)))
            if starts_down:
                slots.append(Slot(SlotId(number, DOWN), run_cells(r, c, 1, 0)))
    return sorted(slots, key=lambda s: s.id)


@dataclass(frozen=True)
class PuzzleFile:
    """A parsed puzzle file: the grid plus optional gold solution and theme tag."""

    grid: PuzzleGrid
    gold: Solution | None
    themed: bool


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise PuzzleFormatError(message)


def parse_puzzle_file(
    text: str, min_slot_length: int = DEFAULT_MIN_SLOT_LENGTH
) -> PuzzleFile:
    """Parse and fully validate the puzzle JSON format.

    Validates grid shape, block coordinates, clue numbering against the
    numbering derived from the block pattern, and (when present) the gold
    solution. Every error message names the offending location.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PuzzleFormatError(f"malformed JSON: {exc}") from exc
    _require(isinstance(data, dict), "top-level value must be an object")

    rows, cols = data.get("rows"), data.get("cols")
    _require(isinstance(rows, int) and rows > 0, "\"rows\" must be a positive integer")
    _require(isinstance(cols, int) and cols > 0, "\"cols\" must be a positive integer")

    blocks = data.get("blocks", [])
    _require(isinstance(blocks, list), "\"blocks\" must be a list of [row, col] pairs")
    block_set: set[tuple[int, int]] = set()
    for i, entry in enumerate(blocks):
        ok = (
            isinstance(entry, list)
            and len(entry) == 2
            and all(isinstance(v, int) for v in entry)
        )
        _require(ok, f"blocks[{i}] must be an [row, col] integer pair")
        r, c = entry
        _require(0 <= r < rows and 0 <= c < cols, f"blocks[{i}] = {entry} out of bounds")
        block_set.add((r, c))

    cells = [[(r, c) not in block_set for c in range(cols)] for r in range(rows)]
    slots = extract_slots(cells, min_slot_length)
    slot_ids = {s.id for s in slots}

    covered = {cell for slot in slots for cell in slot.cells}
    for r in range(rows):
        for c in range(cols):
            if cells[r][c] and (r, c) not in covered:
                raise PuzzleFormatError(
                    f"fillable cell ({r}, {c}) belongs to no slot"
                )

    clues = data.get("clues")
    _require(isinstance(clues, dict), "\"clues\" must be an object")
    clue_texts: dict[SlotId, str] = {}
    for direction in (ACROSS, DOWN):
        section = clues.get(direction, {})
        _require(
            isinstance(section, dict), f"clues.{direction} must be an object"
        )
        for key, value in section.items():
            _require(
                isinstance(key, str) and key.isdigit(),
                f"clues.{direction} key {key!r} is not a slot number",
            )
            _require(
                isinstance(value, str),
                f"clues.{direction}.{key} must be a string",
            )
            slot_id = SlotId(int(key), direction)
            _require(
                slot_id in slot_ids,
                f"clue {key} {direction} references a nonexistent slot",
            )
            clue_texts[slot_id] = value
    for slot_id in sorted(slot_ids):
        _require(slot_id in clue_texts, f"slot {slot_id} has no clue")
    _require(
        len(clue_texts) == len(slots),
        f"clue count {len(clue_texts)} does not match slot count {len(slots)}",
    )

    grid = PuzzleGrid(rows, cols, cells, slots, clue_texts)

    gold = None
    if "solution" in data and data["solution"] is not None:
        gold = _parse_gold(data["solution"], grid)

    themed = data.get("themed", False)
    _require(isinstance(themed, bool), "\"themed\" must be a boolean")

    return PuzzleFile(grid=grid, gold=gold, themed=themed)


def _parse_gold(raw: object, grid: PuzzleGrid) -> Solution:
    _require(
        isinstance(raw, list) and len(raw) == grid.rows,
        f"solution must have {grid.rows} rows",
    )
    letters: dict[tuple[int, int], str] = {}
    for r, row in enumerate(raw):
        _require(
            isinstance(row, list) and len(row) == grid.cols,
            f"solution row {r} must have {grid.cols} entries",
        )
        for c, entry in enumerate(row):
            _require(isinstance(entry, str), f"solution[{r}][{c}] must be a string")
            if not grid.is_fillable(r, c):
                _require(
                    entry == "#",
                    f"solution[{r}][{c}] must be \"#\" at a block, got {entry!r}",
                )
                continue
            if len(entry) > 1:
                raise PuzzleFormatError(
                    f"solution[{r}][{c}] holds {entry!r}: rebus cells "
                    "(multiple letters per cell) are not supported"
                )
            _require(
                len(entry) == 1 and "A" <= entry <= "Z",
                f"solution[{r}][{c}] must be a letter A-Z, got {entry!r}",
            )
            letters[(r, c)] = entry
    return Solution.from_letters(grid, letters)


def parse_puzzle(text: str, min_slot_length: int = DEFAULT_MIN_SLOT_LENGTH) -> PuzzleGrid:
    """Parse the puzzle JSON format, returning just the validated grid."""
    return parse_puzzle_file(text, min_slot_length).grid


def serialize_puzzle(
    grid: PuzzleGrid, gold: Solution | None = None, themed: bool = False
) -> str:
    """Render a grid back to canonical puzzle JSON (sorted keys, 2-space indent)."""
    blocks = [
        [r, c]
        for r in range(grid.rows)
        for c in range(grid.cols)
        if not grid.is_fillable(r, c)
    ]
    clues: dict[str, dict[str, str]] = {ACROSS: {}, DOWN: {}}
    for slot in grid.slots:
        clues[slot.direction][str(slot.id.number)] = grid.clue_texts[slot.id]
    data: dict[str, object] = {
        "rows": grid.rows,
        "cols": grid.cols,
        "blocks": blocks,
        "clues": clues,
    }
    if gold is not None:
        data["solution"] = [
            [gold.letters[(r, c)] if grid.is_fillable(r, c) else "#" for c in range(grid.cols)]
            for r in range(grid.rows)
        ]
    if themed:
        data["themed"] = True
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def render_solution(grid: PuzzleGrid, sol: Solution) -> str:
    """Fixed-width ASCII rendering: blocks as '#', one grid row per line."""
    lines = []
    for r in range(grid.rows):
        chars = []
        for c in range(grid.cols):
            if not grid.is_fillable(r, c):
                chars.append("#")
            else:
                ch = sol.letters.get((r, c))
                if ch is None:
                    raise ValueError(f"missing cell assignment at ({r}, {c})")
                chars.append(ch)
        lines.append("".join(chars))
    return "\n".join(lines)
