"""Command-line entry point: solve puzzles, measure retrieval recall,
evaluate puzzle directories, and segment strings.

All commands are deterministic: same inputs and flags produce byte-identical
stdout and artifact files. Progress and warnings go to stderr only. Exit
codes: 0 success, 2 input error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import bp, evaluation, localsearch, qa
from .corpus import (
    ClueCorpus,
    SegmentationDictionary,
    build_letter_lm,
    canonicalize_answer,
    ingest_pairs,
    load_dictionary,
)
from .grid import (
    DEFAULT_MIN_SLOT_LENGTH,
    PuzzleFile,
    PuzzleFormatError,
    SlotId,
    Solution,
    parse_puzzle_file,
    render_solution,
)
from .segment import segment

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_INTERNAL_ERROR = 3


@dataclass(frozen=True)
class QAConfig:
    top_k: int = qa.DEFAULT_TOP_K
    temperature: float = qa.DEFAULT_TEMPERATURE
    oov_floor: float = qa.DEFAULT_OOV_FLOOR
    scale: float = qa.COSINE_SCALE


@dataclass(frozen=True)
class BPConfig:
    max_iters: int = bp.DEFAULT_MAX_ITERS
    epsilon: float = bp.DEFAULT_EPSILON
    lambda_oov: float = bp.DEFAULT_LAMBDA_OOV
    damping: float = bp.DEFAULT_DAMPING


@dataclass(frozen=True)
class LSConfig:
    threshold: float = localsearch.DEFAULT_THRESHOLD
    max_rounds: int = localsearch.DEFAULT_MAX_ROUNDS
    scorer_weights: tuple[float, float, float] = localsearch.DEFAULT_SCORER_WEIGHTS


@dataclass(frozen=True)
class RunConfig:
    qa: QAConfig = field(default_factory=QAConfig)
    bp: BPConfig = field(default_factory=BPConfig)
    ls: LSConfig = field(default_factory=LSConfig)
    year_split: int | None = None
    min_slot_length: int = DEFAULT_MIN_SLOT_LENGTH
    seed: int = 0


class InputError(Exception):
    """User-facing input problem; maps to exit code 2."""


@dataclass
class SolveOutcome:
    solution: Solution
    marginals: bp.MarginalSet
    candidates: dict[SlotId, qa.CandidateList]
    ls_result: localsearch.LocalSearchResult | None


class Solver:
    """Reusable pipeline: candidate generation, BP, greedy fill, local search."""

    def __init__(
        self,
        corpus: ClueCorpus,
        dictionary: SegmentationDictionary | None,
        config: RunConfig,
    ):
        self.corpus = corpus
        self.dictionary = dictionary if dictionary is not None else SegmentationDictionary.empty()
        self.config = config
        self.index = qa.build_index(corpus)
        self.letter_lm = build_letter_lm(corpus)
        self.scorer = localsearch.ngram_scorer(
            corpus, self.dictionary, weights=config.ls.scorer_weights, index=self.index
        )

    def solve(self, puzzle: PuzzleFile, use_local_search: bool = True) -> SolveOutcome:
        grid = puzzle.grid
        cfg = self.config
        candidates = {
            slot.id: qa.generate(
                self.index,
                grid.clue_texts[slot.id],
                slot.length,
                top_k=cfg.qa.top_k,
                temperature=cfg.qa.temperature,
                oov_floor=cfg.qa.oov_floor,
                scale=cfg.qa.scale,
                slot=slot.id,
            )
            for slot in grid.slots
        }
        graph = bp.build_graph(grid, candidates, self.letter_lm, cfg.bp.lambda_oov)
        marginals = bp.run_bp(
            graph,
            max_iters=cfg.bp.max_iters,
            epsilon=cfg.bp.epsilon,
            damping=cfg.bp.damping,
        )
        solution = bp.greedy_fill(grid, candidates, marginals)
        ls_result = None
        if use_local_search:
            ls_result = localsearch.local_search(
                grid,
                solution,
                marginals.char_marginals,
                self.scorer,
                self.dictionary,
                answer_set=self.corpus.answer_set,
                threshold=cfg.ls.threshold,
                max_rounds=cfg.ls.max_rounds,
            )
            solution = ls_result.solution
        return SolveOutcome(
            solution=solution,
            marginals=marginals,
            candidates=candidates,
            ls_result=ls_result,
        )


def _read_text(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {what} {path}: {exc}") from exc


def _load_corpus(path: str, year_split: int | None) -> ClueCorpus:
    text = _read_text(path, "corpus")
    corpus = ingest_pairs(text.splitlines(), max_year=year_split)
    report = corpus.report
    if report is not None:
        skipped = (
            report.skipped_malformed
            + report.skipped_missing_field
            + report.skipped_bad_answer
        )
        if skipped:
            print(f"corpus: skipped {skipped} bad records", file=sys.stderr)
    if not corpus.pairs:
        raise InputError(f"corpus {path} contains no usable pairs")
    return corpus


def _load_dictionary(path: str | None) -> SegmentationDictionary | None:
    if path is None:
        return None
    try:
        return load_dictionary(_read_text(path, "dictionary"))
    except ValueError as exc:
        raise InputError(f"dictionary {path}: {exc}") from exc


def _load_puzzle(path: str, min_slot_length: int) -> PuzzleFile:
    text = _read_text(path, "puzzle")
    try:
        return parse_puzzle_file(text, min_slot_length=min_slot_length)
    except PuzzleFormatError as exc:
        raise InputError(f"puzzle {path}: {exc}") from exc


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    file_cfg: dict = {}
    if getattr(args, "config", None):
        try:
            file_cfg = json.loads(_read_text(args.config, "config"))
        except json.JSONDecodeError as exc:
            raise InputError(f"config {args.config}: malformed JSON: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise InputError(f"config {args.config}: top level must be an object")

    def pick(name: str, section: str, key: str, default):
        value = getattr(args, name, None)
        if value is not None:
            return value
        sec = file_cfg.get(section)
        if isinstance(sec, dict) and sec.get(key) is not None:
            return sec[key]
        return default

    weights = pick("scorer_weights", "ls", "scorer_weights", None)
    if isinstance(weights, str):
        weights = _parse_weights(weights)
    elif isinstance(weights, (list, tuple)):
        weights = tuple(float(w) for w in weights)
    elif weights is None:
        weights = localsearch.DEFAULT_SCORER_WEIGHTS
    if len(weights) != 3 or any(w < 0 for w in weights):
        raise InputError(f"scorer weights must be three nonnegative reals, got {weights}")

    config = RunConfig(
        qa=QAConfig(
            top_k=int(pick("top_k", "qa", "top_k", qa.DEFAULT_TOP_K)),
            temperature=float(
                pick("temperature", "qa", "temperature", qa.DEFAULT_TEMPERATURE)
            ),
            oov_floor=float(pick("oov_floor", "qa", "oov_floor", qa.DEFAULT_OOV_FLOOR)),
            scale=float(pick("scale", "qa", "scale", qa.COSINE_SCALE)),
        ),
        bp=BPConfig(
            max_iters=int(pick("bp_max_iters", "bp", "max_iters", bp.DEFAULT_MAX_ITERS)),
            epsilon=float(pick("bp_epsilon", "bp", "epsilon", bp.DEFAULT_EPSILON)),
            lambda_oov=float(
                pick("lambda_oov", "bp", "lambda_oov", bp.DEFAULT_LAMBDA_OOV)
            ),
            damping=float(pick("bp_damping", "bp", "damping", bp.DEFAULT_DAMPING)),
        ),
        ls=LSConfig(
            threshold=float(
                pick("ls_threshold", "ls", "threshold", localsearch.DEFAULT_THRESHOLD)
            ),
            max_rounds=int(
                pick("ls_max_rounds", "ls", "max_rounds", localsearch.DEFAULT_MAX_ROUNDS)
            ),
            scorer_weights=weights,
        ),
        year_split=pick("year_split", "", "year_split", None),
        min_slot_length=int(
            pick("min_slot_length", "", "min_slot_length", DEFAULT_MIN_SLOT_LENGTH)
        ),
        seed=int(pick("seed", "", "seed", 0)),
    )
    _validate_config(config)
    return config


def _validate_config(config: RunConfig) -> None:
    checks = [
        (config.qa.top_k >= 1, "top_k must be >= 1"),
        (config.qa.temperature > 0, "temperature must be positive"),
        (0 <= config.qa.oov_floor < 1, "oov floor must be in [0, 1)"),
        (config.bp.max_iters >= 1, "bp max_iters must be >= 1"),
        (config.bp.epsilon > 0, "bp epsilon must be positive"),
        (0 <= config.bp.lambda_oov < 1, "lambda_oov must be in [0, 1)"),
        (0 <= config.bp.damping < 1, "bp damping must be in [0, 1)"),
        (0 < config.ls.threshold <= 1, "ls threshold must be in (0, 1]"),
        (config.ls.max_rounds >= 0, "ls max_rounds must be >= 0"),
        (config.min_slot_length >= 1, "min_slot_length must be >= 1"),
    ]
    for ok, message in checks:
        if not ok:
            raise InputError(message)


def _parse_weights(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise InputError(f"bad scorer weights {text!r}") from exc


def _solution_json(grid, solution: Solution) -> str:
    letters = [
        [
            solution.letters[(r, c)] if grid.is_fillable(r, c) else "#"
            for c in range(grid.cols)
        ]
        for r in range(grid.rows)
    ]
    answers = {str(slot.id): solution.answers[slot.id] for slot in grid.slots}
    return json.dumps({"answers": answers, "letters": letters}, sort_keys=True)


def _score_json(score: evaluation.PuzzleScore) -> dict:
    return {
        "letter_acc": score.letter_acc,
        "word_acc": score.word_acc,
        "perfect": score.perfect,
        "acpt_points": score.acpt_points,
    }


def _marginal_dump(marginals: bp.MarginalSet) -> dict:
    word = {}
    for sid, wm in marginals.word_marginals.items():
        entry = {answer: prob for answer, prob in sorted(wm.probs.items())}
        entry[bp.OOV_TOKEN] = wm.oov
        word[str(sid)] = entry
    char = {
        f"{r},{c}": {
            letter: float(p) for letter, p in zip(bp.ALPHABET, arr)
        }
        for (r, c), arr in sorted(marginals.char_marginals.items())
    }
    return {
        "iterations": marginals.iterations,
        "converged": marginals.converged,
        "word": word,
        "char": char,
    }


def _edits_dump(result: localsearch.LocalSearchResult | None) -> dict:
    if result is None:
        return {"enabled": False, "edits": []}
    return {
        "enabled": True,
        "initial_score": result.initial_score,
        "final_score": result.final_score,
        "edits": [
            {
                "flips": [[r, c, letter] for (r, c), letter in record.flips],
                "provenance": record.provenance,
                "delta": record.delta,
                "score_after": record.score_after,
            }
            for record in result.edits
        ],
    }


def cmd_solve(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    corpus = _load_corpus(args.corpus, config.year_split)
    dictionary = _load_dictionary(args.dictionary)
    puzzle = _load_puzzle(args.puzzle, config.min_slot_length)
    solver = Solver(corpus, dictionary, config)
    outcome = solver.solve(puzzle, use_local_search=not args.no_local_search)
    print(
        f"bp: {'converged' if outcome.marginals.converged else 'stopped'} "
        f"after {outcome.marginals.iterations} iterations",
        file=sys.stderr,
    )
    out = sys.stdout
    out.write(render_solution(puzzle.grid, outcome.solution) + "\n")
    out.write(_solution_json(puzzle.grid, outcome.solution) + "\n")
    if puzzle.gold is not None:
        score = evaluation.score_solution_vs_gold(
            puzzle.grid, outcome.solution, puzzle.gold
        )
        out.write(json.dumps(_score_json(score), sort_keys=True) + "\n")
    if args.dump_marginals:
        Path(args.dump_marginals).write_text(
            json.dumps(_marginal_dump(outcome.marginals), sort_keys=True, indent=2)
            + "\n",
            encoding="utf-8",
        )
    if args.dump_edits:
        Path(args.dump_edits).write_text(
            json.dumps(_edits_dump(outcome.ls_result), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
    return EXIT_OK


def _load_eval_pairs(path: str) -> list[tuple[str, str]]:
    text = _read_text(path, "eval pairs")
    pairs: list[tuple[str, str]] = []
    skipped = 0
    for line in text.splitlines():
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError:
            skipped += 1
            continue
        clue = record.get("clue") if isinstance(record, dict) else None
        answer = record.get("answer") if isinstance(record, dict) else None
        canonical = canonicalize_answer(answer) if isinstance(answer, str) else None
        if not isinstance(clue, str) or canonical is None:
            skipped += 1
            continue
        pairs.append((clue, canonical))
    if skipped:
        print(f"eval pairs: skipped {skipped} bad records", file=sys.stderr)
    if not pairs:
        raise InputError(f"eval pair file {path} contains no usable pairs")
    return pairs


def cmd_recall(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    corpus = _load_corpus(args.corpus, config.year_split)
    pairs = _load_eval_pairs(args.eval)
    try:
        ks = sorted({int(part) for part in args.k.split(",")})
    except ValueError as exc:
        raise InputError(f"bad k list {args.k!r}") from exc
    if not ks or ks[0] < 1:
        raise InputError("k values must be positive integers")
    index = qa.build_index(corpus)
    generator = qa.make_generator(
        index,
        temperature=config.qa.temperature,
        oov_floor=config.qa.oov_floor,
        scale=config.qa.scale,
    )
    report = {
        "pairs": len(pairs),
        "recall": [
            {"k": k, "recall": qa.topk_recall(generator, pairs, k)} for k in ks
        ],
    }
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    corpus = _load_corpus(args.corpus, config.year_split)
    dictionary = _load_dictionary(args.dictionary)
    directory = Path(args.directory)
    if not directory.is_dir():
        raise InputError(f"{args.directory} is not a directory")
    paths = sorted(directory.glob("*.json"))
    if not paths:
        raise InputError(f"no .json puzzles in {args.directory}")
    solver = Solver(corpus, dictionary, config)
    scored: list[tuple[evaluation.PuzzleScore, int, int]] = []
    lines: list[str] = []
    for path in paths:
        puzzle = _load_puzzle(str(path), config.min_slot_length)
        if puzzle.gold is None:
            print(f"skipping {path.name}: no gold solution", file=sys.stderr)
            continue
        if args.themeless_only and puzzle.themed:
            print(f"skipping {path.name}: themed", file=sys.stderr)
            continue
        outcome = solver.solve(puzzle, use_local_search=not args.no_local_search)
        score = evaluation.score_solution_vs_gold(
            puzzle.grid, outcome.solution, puzzle.gold
        )
        row = {"puzzle": path.name}
        row.update(_score_json(score))
        lines.append(json.dumps(row, sort_keys=True))
        scored.append(
            (score, len(puzzle.grid.fillable_cells), len(puzzle.grid.slots))
        )
    if not scored:
        raise InputError("no puzzles with gold solutions to evaluate")
    for line in lines:
        print(line)
    print(json.dumps({"aggregate": evaluation.aggregate_scores(scored)}, sort_keys=True))
    return EXIT_OK


def cmd_segment(args: argparse.Namespace) -> int:
    dictionary = _load_dictionary(args.dictionary)
    if dictionary is None:
        raise InputError("segment requires --dictionary")
    s = args.string.upper()
    if not s or not all("A" <= ch <= "Z" for ch in s):
        raise InputError(f"segment target must be letters only, got {args.string!r}")
    result = segment(dictionary, s)
    print(" ".join(result.words) if result is not None else "NO-SEGMENTATION")
    return EXIT_OK


def _add_shared_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--year-split", type=int, dest="year_split",
                        help="keep only corpus pairs with year <= this")
    parser.add_argument("--seed", type=int, help="reserved for stochastic plug-ins")
    parser.add_argument("--min-slot-length", type=int, dest="min_slot_length")
    parser.add_argument("--top-k", type=int, dest="top_k")
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--oov-floor", type=float, dest="oov_floor")
    parser.add_argument("--scale", type=float)
    parser.add_argument("--lambda-oov", type=float, dest="lambda_oov")
    parser.add_argument("--bp-max-iters", type=int, dest="bp_max_iters")
    parser.add_argument("--bp-epsilon", type=float, dest="bp_epsilon")
    parser.add_argument("--bp-damping", type=float, dest="bp_damping")
    parser.add_argument("--ls-threshold", type=float, dest="ls_threshold")
    parser.add_argument("--ls-max-rounds", type=int, dest="ls_max_rounds")
    parser.add_argument("--scorer-weights", dest="scorer_weights",
                        help="three comma-separated interpolation weights")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridlock",
        description="Crossword solving engine: retrieval QA, belief propagation, "
        "greedy fill, and local-search repair.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one puzzle")
    p_solve.add_argument("puzzle")
    p_solve.add_argument("--corpus", required=True)
    p_solve.add_argument("--dictionary")
    p_solve.add_argument("--no-local-search", action="store_true")
    p_solve.add_argument("--dump-marginals", metavar="PATH")
    p_solve.add_argument("--dump-edits", metavar="PATH")
    _add_shared_flags(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_recall = sub.add_parser("recall", help="top-k recall of the candidate generator")
    p_recall.add_argument("--corpus", required=True)
    p_recall.add_argument("--eval", required=True)
    p_recall.add_argument("--k", default="1,10,100,1000")
    _add_shared_flags(p_recall)
    p_recall.set_defaults(func=cmd_recall)

    p_eval = sub.add_parser("eval", help="solve and score a directory of puzzles")
    p_eval.add_argument("directory")
    p_eval.add_argument("--corpus", required=True)
    p_eval.add_argument("--dictionary")
    p_eval.add_argument("--themeless-only", action="store_true")
    p_eval.add_argument("--no-local-search", action="store_true")
    _add_shared_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_segment = sub.add_parser("segment", help="segment a string into dictionary words")
    p_segment.add_argument("string")
    p_segment.add_argument("--dictionary", required=True)
    _add_shared_flags(p_segment)
    p_segment.set_defaults(func=cmd_segment)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (AssertionError, RuntimeError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL_ERROR


def entry() -> None:
    sys.exit(main())
