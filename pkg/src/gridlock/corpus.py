"""Clue-answer corpus: ingestion, the closed answer set, a smoothed unigram
letter model, and the word dictionary used for segmentation.

Corpus records arrive as JSONL, one object per line with fields clue, answer,
source, and year. Answers are canonicalized to bare A-Z uppercase. The corpus
is built single-threaded and immutable afterwards.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


@dataclass(frozen=True)
class CluePair:
    clue: str
    answer: str
    source: str
    year: int


@dataclass(frozen=True)
class IngestReport:
    records_read: int = 0
    pairs_kept: int = 0
    skipped_malformed: int = 0
    skipped_missing_field: int = 0
    skipped_bad_answer: int = 0
    skipped_year_filter: int = 0
    duplicates_removed: int = 0


def canonicalize_answer(raw: str) -> str | None:
    """Uppercase and strip everything outside A-Z. Answers containing digits
    are rejected (None) rather than silently mangled; an answer with nothing
    left after stripping is also rejected.
    """
    if any(ch.isdigit() for ch in raw):
        return None
    kept = "".join(ch for ch in raw.upper() if "A" <= ch <= "Z")
    return kept or None


class ClueCorpus:
    """Immutable list of canonical clue-answer pairs plus derived lookups."""

    def __init__(self, pairs: Sequence[CluePair], report: IngestReport | None = None):
        self.pairs = tuple(pairs)
        self.report = report

    def __len__(self) -> int:
        return len(self.pairs)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ClueCorpus) and self.pairs == other.pairs

    @cached_property
    def answer_set(self) -> frozenset[str]:
        return frozenset(p.answer for p in self.pairs)

    @cached_property
    def answers_by_length(self) -> dict[int, tuple[str, ...]]:
        by_len: dict[int, set[str]] = {}
        for pair in self.pairs:
            by_len.setdefault(len(pair.answer), set()).add(pair.answer)
        return {n: tuple(sorted(answers)) for n, answers in sorted(by_len.items())}

    @cached_property
    def answers_by_clue(self) -> dict[str, tuple[str, ...]]:
        by_clue: dict[str, set[str]] = {}
        for pair in self.pairs:
            by_clue.setdefault(pair.clue, set()).add(pair.answer)
        return {clue: tuple(sorted(a)) for clue, a in by_clue.items()}


def ingest_pairs(lines: Iterable[str], max_year: int | None = None) -> ClueCorpus:
    """Build a corpus from JSONL lines, skipping bad records and counting what
    was skipped. Exact duplicate (clue, canonical answer) pairs are dropped;
    repeated clues with different answers are kept. max_year, when given,
    keeps only pairs with year <= max_year.
    """
    pairs: list[CluePair] = []
    seen: set[tuple[str, str]] = set()
    read = malformed = missing = bad_answer = year_filtered = dupes = 0
    for line in lines:
        if not line.strip():
            continue
        read += 1
        try:
            record = json.loads(line)
        except json.JSONDecodeError:
            malformed += 1
            continue
        if not isinstance(record, dict):
            malformed += 1
            continue
        clue = record.get("clue")
        answer = record.get("answer")
        # source and year are optional metadata; clue and answer are not
        source = record.get("source", "")
        year = record.get("year", 0)
        if (
            not isinstance(clue, str)
            or not isinstance(answer, str)
            or not isinstance(source, str)
            or not isinstance(year, int)
            or isinstance(year, bool)
        ):
            missing += 1
            continue
        canonical = canonicalize_answer(answer)
        if canonical is None:
            bad_answer += 1
            continue
        if max_year is not None and year > max_year:
            year_filtered += 1
            continue
        key = (clue, canonical)
        if key in seen:
            dupes += 1
            continue
        seen.add(key)
        pairs.append(CluePair(clue, canonical, source, year))
    report = IngestReport(
        records_read=read,
        pairs_kept=len(pairs),
        skipped_malformed=malformed,
        skipped_missing_field=missing,
        skipped_bad_answer=bad_answer,
        skipped_year_filter=year_filtered,
        duplicates_removed=dupes,
    )
    return ClueCorpus(pairs, report)


@dataclass(frozen=True)
class LetterLM:
    """Add-one-smoothed unigram distribution over A-Z."""

    probs: dict[str, float]

    def prob(self, letter: str) -> float:
        return self.probs[letter]

    def log_prob(self, letter: str) -> float:
        if letter not in self.probs:
            raise ValueError(f"{letter!r} is not a letter A-Z")
        return math.log(self.probs[letter])


def build_letter_lm(corpus: ClueCorpus) -> LetterLM:
    """Relative letter frequencies over all answer characters, add-one
    smoothed so every letter has strictly positive probability."""
    if not corpus.pairs:
        raise ValueError("cannot build a letter model from an empty corpus")
    counts = dict.fromkeys(ALPHABET, 0)
    total = 0
    for pair in corpus.pairs:
        for ch in pair.answer:
            counts[ch] += 1
            total += 1
    denom = total + len(ALPHABET)
    return LetterLM({ch: (counts[ch] + 1) / denom for ch in ALPHABET})


def string_letter_log_prob(lm: LetterLM, s: str) -> float:
    """Log of the product of per-letter probabilities; 0.0 for the empty
    string (empty product)."""
    return sum(lm.log_prob(ch) for ch in s)


class SegmentationDictionary:
    """Frequency-weighted word list; weights are unigram log-probabilities."""

    def __init__(self, log_probs: Mapping[str, float]):
        for word, weight in log_probs.items():
            if not word or not all("a" <= ch <= "z" for ch in word):
                raise ValueError(f"dictionary word {word!r} is not lowercase a-z")
            if not math.isfinite(weight):
                raise ValueError(f"dictionary word {word!r} has non-finite weight")
        self.log_probs = dict(log_probs)
        self.max_word_length = max((len(w) for w in log_probs), default=0)

    def __contains__(self, word: str) -> bool:
        return word in self.log_probs

    def __len__(self) -> int:
        return len(self.log_probs)

    def log_prob(self, word: str) -> float:
        return self.log_probs[word]

    @classmethod
    def from_counts(cls, counts: Mapping[str, float]) -> "SegmentationDictionary":
        for word, count in counts.items():
            if not (math.isfinite(count) and count > 0):
                raise ValueError(f"count for {word!r} must be positive, got {count!r}")
        total = sum(counts.values())
        return cls({w.lower(): math.log(c / total) for w, c in counts.items()})

    @classmethod
    def empty(cls) -> "SegmentationDictionary":
        return cls({})


def load_dictionary(text: str) -> SegmentationDictionary:
    """Parse `word<TAB>count` lines into a normalized dictionary."""
    counts: dict[str, float] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        word, sep, count_text = line.partition("\t")
        if not sep:
            raise ValueError(f"dictionary line {lineno}: expected word<TAB>count")
        word = word.strip().lower()
        if not word or not all("a" <= ch <= "z" for ch in word):
            raise ValueError(f"dictionary line {lineno}: bad word {word!r}")
        try:
            count = int(count_text.strip())
        except ValueError as exc:
            raise ValueError(
                f"dictionary line {lineno}: bad count {count_text.strip()!r}"
            ) from exc
        if count <= 0:
            raise ValueError(f"dictionary line {lineno}: count must be positive")
        counts[word] = counts.get(word, 0) + count
    return SegmentationDictionary.from_counts(counts)
