"""Second-pass repair: hill-climbing over 1- and 2-letter edits.

Proposals must clear one of two gates: every flipped letter keeps probability
at or above a threshold under the BP character marginals, or every affected
slot's new answer either segments into dictionary words or belongs to the
closed answer set. Each round scores all proposals with a pluggable
answer-given-clue scorer and applies the single best strictly improving edit;
the search stops at the first round with no improvement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .corpus import ALPHABET, ClueCorpus, SegmentationDictionary
from .grid import PuzzleGrid, SlotId, Solution
from .qa import TfidfIndex, build_index, generate
from .segment import segment, segments_validly

DEFAULT_THRESHOLD = 0.01
DEFAULT_MAX_ROUNDS = 100
DEFAULT_SCORER_WEIGHTS = (0.5, 0.3, 0.2)

MARGINAL_GATE = "marginal"
SEGMENTATION_GATE = "segmentation"

_LETTER_INDEX = {ch: i for i, ch in enumerate(ALPHABET)}

Flip = tuple[tuple[int, int], str]


@dataclass(frozen=True)
class EditProposal:
    flips: tuple[Flip, ...]
    affected_slots: frozenset[SlotId]
    provenance: str


@dataclass(frozen=True)
class EditRecord:
    flips: tuple[Flip, ...]
    provenance: str
    delta: float
    score_after: float


@dataclass(frozen=True)
class LocalSearchResult:
    solution: Solution
    edits: tuple[EditRecord, ...]
    initial_score: float
    final_score: float


class SecondPassScorer(Protocol):
    def score(self, clue: str, answer: str) -> float:
        """Log-likelihood of the answer given the clue; finite for any A-Z string."""


class ScoreMismatchError(RuntimeError):
    """Incremental rescoring diverged from full recomputation."""


def score_solution(scorer: SecondPassScorer, grid: PuzzleGrid, sol: Solution) -> float:
    """Sum of per-slot answer log-likelihoods given their clues."""
    return sum(
        scorer.score(grid.clue_texts[slot.id], sol.answers[slot.id])
        for slot in grid.slots
    )


def _new_answers(
    grid: PuzzleGrid, current: Solution, flips: Sequence[Flip]
) -> dict[SlotId, str]:
    """Answers of the slots touched by the flips, after applying them."""
    overrides = dict(flips)
    out: dict[SlotId, str] = {}
    for cell, _ in flips:
        for sid, _pos in grid.cell_slots[cell]:
            if sid in out:
                continue
            slot = grid.slot_map[sid]
            out[sid] = "".join(
                overrides.get(c, current.letters[c]) for c in slot.cells
            )
    return out


def generate_proposals(
    grid: PuzzleGrid,
    current: Solution,
    char_marginals: Mapping[tuple[int, int], np.ndarray],
    dictionary: SegmentationDictionary,
    threshold: float = DEFAULT_THRESHOLD,
    answer_set: frozenset[str] = frozenset(),
    validity_cache: dict[str, bool] | None = None,
) -> list[EditProposal]:
    """All gated 1-flips, plus 2-flips whose cells share a slot. Output order
    is deterministic: 1-flips by (cell, letter), then 2-flips by cells and
    letters. A proposal passing the marginal gate is tagged marginal even when
    the segmentation gate would also admit it.
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    cache = validity_cache if validity_cache is not None else {}

    def answer_ok(answer: str) -> bool:
        if answer in answer_set:
            return True
        hit = cache.get(answer)
        if hit is None:
            hit = segments_validly(dictionary, answer)
            cache[answer] = hit
        return hit

    def gated(flips: tuple[Flip, ...]) -> EditProposal | None:
        if all(
            float(char_marginals[cell][_LETTER_INDEX[letter]]) >= threshold
            for cell, letter in flips
        ):
            provenance = MARGINAL_GATE
        elif all(
            answer_ok(ans) for ans in _new_answers(grid, current, flips).values()
        ):
            provenance = SEGMENTATION_GATE
        else:
            return None
        affected = frozenset(
            sid for cell, _ in flips for sid, _pos in grid.cell_slots[cell]
        )
        return EditProposal(flips=flips, affected_slots=affected, provenance=provenance)

    proposals: list[EditProposal] = []
    cells = grid.fillable_cells
    for cell in cells:
        for letter in ALPHABET:
            if letter == current.letters[cell]:
                continue
            proposal = gated(((cell, letter),))
            if proposal is not None:
                proposals.append(proposal)
    sharing: set[tuple[tuple[int, int], tuple[int, int]]] = set()
    for slot in grid.slots:
        for a, b in combinations(slot.cells, 2):
            sharing.add((a, b) if a < b else (b, a))
    for a, b in sorted(sharing):
        for la in ALPHABET:
            if la == current.letters[a]:
                continue
            for lb in ALPHABET:
                if lb == current.letters[b]:
                    continue
                proposal = gated(((a, la), (b, lb)))
                if proposal is not None:
                    proposals.append(proposal)
    return proposals


def local_search(
    grid: PuzzleGrid,
    start: Solution,
    char_marginals: Mapping[tuple[int, int], np.ndarray],
    scorer: SecondPassScorer,
    dictionary: SegmentationDictionary,
    answer_set: frozenset[str] = frozenset(),
    threshold: float = DEFAULT_THRESHOLD,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
) -> LocalSearchResult:
    """Apply the best strictly improving edit per round until none remains.
    Deltas are computed incrementally over affected slots and checked against
    a full recomputation after every applied edit.
    """
    current = start
    score = score_solution(scorer, grid, current)
    initial = score
    edits: list[EditRecord] = []
    cache: dict[str, bool] = {}
    for _ in range(max_rounds):
        proposals = generate_proposals(
            grid,
            current,
            char_marginals,
            dictionary,
            threshold=threshold,
            answer_set=answer_set,
            validity_cache=cache,
        )
        best_delta = 0.0
        best: EditProposal | None = None
        for proposal in proposals:
            delta = 0.0
            for sid, new_answer in _new_answers(grid, current, proposal.flips).items():
                clue = grid.clue_texts[sid]
                delta += scorer.score(clue, new_answer)
                delta -= scorer.score(clue, current.answers[sid])
            if delta > best_delta:
                best_delta = delta
                best = proposal
        if best is None:
            break
        letters = dict(current.letters)
        for cell, letter in best.flips:
            letters[cell] = letter
        current = Solution.from_letters(grid, letters)
        score += best_delta
        full = score_solution(scorer, grid, current)
        if abs(full - score) > 1e-9:
            raise ScoreMismatchError(
                f"incremental score {score} != full recomputation {full}"
            )
        score = full
        edits.append(
            EditRecord(
                flips=best.flips,
                provenance=best.provenance,
                delta=best_delta,
                score_after=score,
            )
        )
    return LocalSearchResult(
        solution=current,
        edits=tuple(edits),
        initial_score=initial,
        final_score=score,
    )


_EXACT_MATCH_P = 0.9
_TOP1_P = 0.5
_IN_SET_P = 0.05
_MISS_P = 0.001
_SEG_FAIL_CHAR_P = 0.02
_NGRAM_ORDER = 4
_NGRAM_DISCOUNT = 0.75
_END = "$"
_PAD = "^"


class CharGramLM:
    """Character n-gram model with absolute discounting, backing off through
    shorter contexts to a uniform base over A-Z plus the end marker."""

    def __init__(self, answers: Iterable[str], order: int = _NGRAM_ORDER, discount: float = _NGRAM_DISCOUNT):
        if not 0 < discount < 1:
            raise ValueError(f"discount must be in (0, 1), got {discount}")
        self.order = order
        self.discount = discount
        self.vocab_size = len(ALPHABET) + 1
        self.counts: dict[str, dict[str, int]] = {}
        trained = False
        for answer in answers:
            trained = True
            padded = _PAD * (order - 1) + answer + _END
            for i in range(order - 1, len(padded)):
                ch = padded[i]
                for n in range(order):
                    context = padded[i - n : i]
                    table = self.counts.setdefault(context, {})
                    table[ch] = table.get(ch, 0) + 1
        if not trained:
            raise ValueError("cannot train a character model on no answers")

    def _prob(self, context: str, ch: str) -> float:
        if not context:
            table = self.counts.get("", {})
            total = sum(table.values())
            base = 1.0 / self.vocab_size
            if not total:
                return base
            count = table.get(ch, 0)
            backoff = self.discount * len(table) / total
            return max(count - self.discount, 0.0) / total + backoff * base
        table = self.counts.get(context)
        if not table:
            return self._prob(context[1:], ch)
        total = sum(table.values())
        count = table.get(ch, 0)
        backoff = self.discount * len(table) / total
        return max(count - self.discount, 0.0) / total + backoff * self._prob(
            context[1:], ch
        )

    def log_prob(self, answer: str) -> float:
        context = _PAD * (self.order - 1)
        total = 0.0
        for ch in answer + _END:
            total += math.log(self._prob(context, ch))
            context = (context + ch)[1:]
        return total


class InterpolatedScorer:
    """Log-interpolates a corpus-lookup tier score, a character n-gram model,
    and a segmentation word-unigram score."""

    def __init__(
        self,
        corpus: ClueCorpus,
        dictionary: SegmentationDictionary,
        weights: tuple[float, float, float] = DEFAULT_SCORER_WEIGHTS,
        index: TfidfIndex | None = None,
    ):
        if len(weights) != 3 or any(w < 0 for w in weights):
            raise ValueError(f"weights must be three nonnegative reals, got {weights}")
        self.corpus = corpus
        self.dictionary = dictionary
        self.weights = weights
        self.index = index if index is not None else build_index(corpus)
        self.chargram = CharGramLM(p.answer for p in corpus.pairs)
        self._top1_cache: dict[tuple[str, int], str | None] = {}

    def _lookup_log_prob(self, clue: str, answer: str) -> float:
        if answer in self.corpus.answers_by_clue.get(clue, ()):
            return math.log(_EXACT_MATCH_P)
        key = (clue, len(answer))
        if key not in self._top1_cache:
            top = generate(self.index, clue, len(answer), top_k=1).answers()
            self._top1_cache[key] = top[0] if top else None
        if self._top1_cache[key] == answer:
            return math.log(_TOP1_P)
        if answer in self.corpus.answer_set:
            return math.log(_IN_SET_P)
        return math.log(_MISS_P)

    def _segmentation_log_prob(self, answer: str) -> float:
        seg = segment(self.dictionary, answer)
        if seg is None:
            return len(answer) * math.log(_SEG_FAIL_CHAR_P)
        return seg.score

    def score(self, clue: str, answer: str) -> float:
        w_lookup, w_chars, w_seg = self.weights
        total = 0.0
        if w_lookup:
            total += w_lookup * self._lookup_log_prob(clue, answer)
        if w_chars:
            total += w_chars * self.chargram.log_prob(answer)
        if w_seg:
            total += w_seg * self._segmentation_log_prob(answer)
        return total


def ngram_scorer(
    corpus: ClueCorpus,
    dictionary: SegmentationDictionary,
    weights: tuple[float, float, float] = DEFAULT_SCORER_WEIGHTS,
    index: TfidfIndex | None = None,
) -> InterpolatedScorer:
    return InterpolatedScorer(corpus, dictionary, weights=weights, index=index)
