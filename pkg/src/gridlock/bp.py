"""Loopy belief propagation over the clue/cell bipartite graph, plus greedy
constrained decoding of a complete solution.

Clue nodes act as factors over their candidate answers plus an explicit
out-of-set component whose letters factorize per position under the unigram
letter model. Cell nodes range over the 26 letters. One iteration updates all
clue-to-cell messages in parallel from the previous cell messages, then all
cell-to-clue messages in parallel from the fresh clue messages. All message
math runs in log space with renormalization, so underflow never surfaces as
an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .corpus import ALPHABET, LetterLM
from .grid import PuzzleGrid, SlotId, Solution
from .qa import CandidateList

DEFAULT_LAMBDA_OOV = 0.02
DEFAULT_MAX_ITERS = 25
DEFAULT_EPSILON = 1e-4
DEFAULT_DAMPING = 0.0
OOV_TOKEN = "<oov>"
N_LETTERS = len(ALPHABET)

LETTER_INDEX = {ch: i for i, ch in enumerate(ALPHABET)}


@dataclass(frozen=True)
class ClueNode:
    slot_id: SlotId
    cells: tuple[tuple[int, int], ...]
    answers: tuple[str, ...]
    letters: np.ndarray  # (num answers, slot length) letter indices
    log_prior: np.ndarray  # (num answers,)
    log_oov: float

    @property
    def length(self) -> int:
        return len(self.cells)


class FactorGraph:
    """BP state: one node per slot, messages stored per (slot, position) edge
    in both directions, always normalized."""

    def __init__(self, grid: PuzzleGrid, nodes: dict[SlotId, ClueNode], lm: LetterLM):
        self.grid = grid
        self.nodes = nodes
        self.lm_probs = np.array([lm.prob(ch) for ch in ALPHABET])
        self.lm_log = np.log(self.lm_probs)
        uniform = np.full(N_LETTERS, 1.0 / N_LETTERS)
        self.to_cell = {
            sid: np.tile(uniform, (node.length, 1)) for sid, node in nodes.items()
        }
        self.to_clue = {
            sid: np.tile(uniform, (node.length, 1)) for sid, node in nodes.items()
        }

    @property
    def num_clue_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_cell_nodes(self) -> int:
        return len(self.grid.fillable_cells)

    @property
    def num_edges(self) -> int:
        return sum(node.length for node in self.nodes.values())


@dataclass(frozen=True)
class WordMarginal:
    probs: dict[str, float]
    oov: float


@dataclass(frozen=True)
class MarginalSet:
    word_marginals: dict[SlotId, WordMarginal]
    char_marginals: dict[tuple[int, int], np.ndarray]
    iterations: int
    converged: bool
    final_delta: float

    def char_prob(self, cell: tuple[int, int], letter: str) -> float:
        return float(self.char_marginals[cell][LETTER_INDEX[letter]])

    def validate(self, tol: float = 1e-9) -> None:
        for sid, wm in self.word_marginals.items():
            total = sum(wm.probs.values()) + wm.oov
            if abs(total - 1.0) > tol:
                raise ValueError(f"word marginal for {sid} sums to {total}")
        for cell, arr in self.char_marginals.items():
            if abs(float(arr.sum()) - 1.0) > tol:
                raise ValueError(f"char marginal for {cell} sums to {arr.sum()}")


def build_graph(
    grid: PuzzleGrid,
    candidates: Mapping[SlotId, CandidateList],
    lm: LetterLM,
    lambda_oov: float = DEFAULT_LAMBDA_OOV,
) -> FactorGraph:
    """Clue-node priors mix the generator's probabilities with an out-of-set
    component: prior(a) = (1 - lambda_oov) * prob(a) and the out-of-set mass
    is lambda_oov + (1 - lambda_oov) * oov_mass. Messages start uniform.
    """
    if not 0 <= lambda_oov < 1:
        raise ValueError(f"lambda_oov must be in [0, 1), got {lambda_oov}")
    nodes: dict[SlotId, ClueNode] = {}
    for slot in grid.slots:
        clist = candidates.get(slot.id)
        if clist is None:
            raise ValueError(f"slot {slot.id} has no candidate list")
        answers = []
        probs = []
        for cand in clist.candidates:
            if len(cand.answer) != slot.length:
                raise ValueError(
                    f"candidate {cand.answer!r} has length {len(cand.answer)}, "
                    f"slot {slot.id} needs {slot.length}"
                )
            answers.append(cand.answer)
            probs.append(cand.prob)
        letters = np.array(
            [[LETTER_INDEX[ch] for ch in a] for a in answers], dtype=np.intp
        ).reshape(len(answers), slot.length)
        prior = (1.0 - lambda_oov) * np.array(probs, dtype=float)
        oov = lambda_oov + (1.0 - lambda_oov) * clist.oov_mass
        with np.errstate(divide="ignore"):
            log_prior = np.log(prior)
        nodes[slot.id] = ClueNode(
            slot_id=slot.id,
            cells=slot.cells,
            answers=tuple(answers),
            letters=letters,
            log_prior=log_prior,
            log_oov=math.log(oov) if oov > 0 else -math.inf,
        )
    return FactorGraph(grid, nodes, lm)


def _candidate_logs(node: ClueNode, incoming: np.ndarray) -> np.ndarray | None:
    """Per-answer, per-position log contribution excluding that position's own
    incoming message. Exact for zero-probability messages: an answer blocked
    at any other position contributes -inf, computed without 0/0 artifacts.
    Returns None for a node with no candidates.
    """
    m, length = node.letters.shape
    if m == 0:
        return None
    with np.errstate(divide="ignore"):
        log_in = np.log(incoming)
    picked = log_in[np.arange(length)[None, :], node.letters]  # (m, L)
    blocked = np.isneginf(picked)
    finite = np.where(blocked, 0.0, picked)
    row_sum = finite.sum(axis=1)
    blocked_count = blocked.sum(axis=1)
    others_blocked = blocked_count[:, None] - blocked
    with np.errstate(invalid="ignore"):
        out = np.where(
            others_blocked > 0,
            -np.inf,
            node.log_prior[:, None] + row_sum[:, None] - finite,
        )
    return out


def _clue_messages(graph: FactorGraph, node: ClueNode, incoming: np.ndarray) -> np.ndarray:
    """Messages from a clue node to each of its cells: marginalize the node's
    prior times the other positions' incoming messages onto each position."""
    length = node.length
    oov_mix = incoming @ graph.lm_probs  # (L,) strictly positive
    log_mix = np.log(oov_mix)
    mix_total = log_mix.sum()
    contrib = _candidate_logs(node, incoming)
    out = np.empty((length, N_LETTERS))
    for j in range(length):
        oov_row = node.log_oov + graph.lm_log + (mix_total - log_mix[j])
        peak = float(oov_row.max())
        if contrib is not None and contrib.shape[0]:
            peak = max(peak, float(contrib[:, j].max()))
        if peak == -math.inf:
            out[j] = 1.0 / N_LETTERS
            continue
        weights = np.exp(oov_row - peak)
        if contrib is not None:
            weights = weights + np.bincount(
                node.letters[:, j],
                weights=np.exp(contrib[:, j] - peak),
                minlength=N_LETTERS,
            )
        out[j] = weights / weights.sum()
    return out


def run_bp(
    graph: FactorGraph,
    max_iters: int = DEFAULT_MAX_ITERS,
    epsilon: float = DEFAULT_EPSILON,
    damping: float = DEFAULT_DAMPING,
    validate_each_iteration: bool = False,
) -> MarginalSet:
    """Synchronous sum-product until the largest message change drops below
    epsilon or max_iters is reached. Returns final beliefs."""
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not 0 <= damping < 1:
        raise ValueError(f"damping must be in [0, 1), got {damping}")
    uniform = np.full(N_LETTERS, 1.0 / N_LETTERS)
    cell_slots = graph.grid.cell_slots
    iterations = 0
    converged = False
    delta = math.inf
    for _ in range(max_iters):
        delta = 0.0
        fresh_to_cell: dict[SlotId, np.ndarray] = {}
        for sid, node in graph.nodes.items():
            msg = _clue_messages(graph, node, graph.to_clue[sid])
            if damping > 0:
                msg = (1.0 - damping) * msg + damping * graph.to_cell[sid]
            delta = max(delta, float(np.abs(msg - graph.to_cell[sid]).max()))
            fresh_to_cell[sid] = msg
        graph.to_cell = fresh_to_cell
        fresh_to_clue: dict[SlotId, np.ndarray] = {}
        for sid, node in graph.nodes.items():
            block = np.empty((node.length, N_LETTERS))
            for pos, cell in enumerate(node.cells):
                entries = cell_slots[cell]
                if len(entries) == 1:
                    msg = uniform
                else:
                    other_sid, other_pos = next(
                        e for e in entries if e != (sid, pos)
                    )
                    msg = graph.to_cell[other_sid][other_pos]
                if damping > 0:
                    msg = (1.0 - damping) * msg + damping * graph.to_clue[sid][pos]
                delta = max(delta, float(np.abs(msg - graph.to_clue[sid][pos]).max()))
                block[pos] = msg
            fresh_to_clue[sid] = block
        graph.to_clue = fresh_to_clue
        iterations += 1
        if validate_each_iteration:
            _check_normalized(graph)
        if delta < epsilon:
            converged = True
            break
    marginals = _beliefs(graph, iterations, converged, delta)
    if validate_each_iteration:
        marginals.validate()
    return marginals


def _check_normalized(graph: FactorGraph, tol: float = 1e-9) -> None:
    for table in (graph.to_cell, graph.to_clue):
        for sid, block in table.items():
            sums = block.sum(axis=1)
            if np.abs(sums - 1.0).max() > tol:
                raise AssertionError(f"messages for {sid} are not normalized")


def _beliefs(
    graph: FactorGraph, iterations: int, converged: bool, delta: float
) -> MarginalSet:
    word: dict[SlotId, WordMarginal] = {}
    for sid, node in graph.nodes.items():
        incoming = graph.to_clue[sid]
        oov_mix = incoming @ graph.lm_probs
        log_oov_belief = node.log_oov + float(np.log(oov_mix).sum())
        m = len(node.answers)
        if m:
            with np.errstate(divide="ignore"):
                log_in = np.log(incoming)
            picked = log_in[np.arange(node.length)[None, :], node.letters]
            blocked = picked == -np.inf
            finite = np.where(blocked, 0.0, picked)
            logb = np.where(
                blocked.any(axis=1), -np.inf, node.log_prior + finite.sum(axis=1)
            )
            peak = max(float(logb.max()), log_oov_belief)
        else:
            logb = np.empty(0)
            peak = log_oov_belief
        if peak == -math.inf:
            # No support anywhere; fall back to the prior mixture.
            probs = {a: math.exp(lp) for a, lp in zip(node.answers, node.log_prior)}
            oov = math.exp(node.log_oov) if node.log_oov > -math.inf else 0.0
            total = sum(probs.values()) + oov
            word[sid] = WordMarginal(
                probs={a: p / total for a, p in probs.items()}, oov=oov / total
            )
            continue
        weights = np.exp(logb - peak)
        oov_weight = math.exp(log_oov_belief - peak)
        z = float(weights.sum()) + oov_weight
        word[sid] = WordMarginal(
            probs={a: float(w) / z for a, w in zip(node.answers, weights)},
            oov=oov_weight / z,
        )
    char: dict[tuple[int, int], np.ndarray] = {}
    for cell in graph.grid.fillable_cells:
        prod = np.ones(N_LETTERS)
        for sid, pos in graph.grid.cell_slots[cell]:
            prod = prod * graph.to_cell[sid][pos]
        total = float(prod.sum())
        if total > 0:
            char[cell] = prod / total
        else:
            char[cell] = np.full(N_LETTERS, 1.0 / N_LETTERS)
    return MarginalSet(
        word_marginals=word,
        char_marginals=char,
        iterations=iterations,
        converged=converged,
        final_delta=delta,
    )


def greedy_fill(
    grid: PuzzleGrid,
    candidates: Mapping[SlotId, CandidateList],
    marginals: MarginalSet,
) -> Solution:
    """Commit the slot whose best committed-letter-consistent candidate has
    the highest renormalized marginal, prune conflicting candidates of
    crossing slots implicitly via the consistency filter, and repeat. Slots
    left with no consistent candidate are filled per cell by char-marginal
    argmax. Ties break by SlotId order, then lexicographically by answer.
    """
    for slot in grid.slots:
        if slot.id not in marginals.word_marginals:
            raise ValueError(f"no word marginal for slot {slot.id}")
        known = set(candidates[slot.id].answers()) if slot.id in candidates else set()
        extra = set(marginals.word_marginals[slot.id].probs) - known
        if extra:
            raise ValueError(f"marginal answers {sorted(extra)} not in candidates")
    committed: dict[tuple[int, int], str] = {}
    filled: set[SlotId] = set()
    while True:
        best_value = 0.0
        best_slot = None
        best_answer = None
        for slot in grid.slots:
            if slot.id in filled:
                continue
            wm = marginals.word_marginals[slot.id]
            consistent_mass = 0.0
            top_answer = None
            top_prob = 0.0
            for answer in sorted(wm.probs):
                prob = wm.probs[answer]
                if any(
                    committed.get(cell, answer[pos]) != answer[pos]
                    for pos, cell in enumerate(slot.cells)
                ):
                    continue
                consistent_mass += prob
                if prob > top_prob:
                    top_prob = prob
                    top_answer = answer
            denom = consistent_mass + wm.oov
            if top_answer is None or denom <= 0 or top_prob <= 0:
                continue
            value = top_prob / denom
            if value > best_value:
                best_value = value
                best_slot = slot
                best_answer = top_answer
        if best_slot is None:
            break
        filled.add(best_slot.id)
        for pos, cell in enumerate(best_slot.cells):
            committed[cell] = best_answer[pos]
    for cell in grid.fillable_cells:
        if cell not in committed:
            committed[cell] = ALPHABET[int(np.argmax(marginals.char_marginals[cell]))]
    return Solution.from_letters(grid, committed)
