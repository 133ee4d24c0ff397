"""First-pass candidate generation: TFIDF retrieval over the clue corpus.

For a clue and a target length, retrieval scores corpus pairs by cosine
similarity over lowercased unigram+bigram clue tokens, aggregates per distinct
answer (max over supporting pairs), filters to the exact length, and softmaxes
the top scores into a probability distribution with a reserved out-of-set
floor. Any generator honoring the CandidateList contract can stand in for the
TFIDF baseline.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from functools import partial
from typing import Callable, Sequence

from .corpus import ClueCorpus
from .grid import SlotId

DEFAULT_TOP_K = 1000
DEFAULT_TEMPERATURE = 1.0
DEFAULT_OOV_FLOOR = 0.02
COSINE_SCALE = 10.0

_WORD_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric unigrams plus space-joined adjacent bigrams."""
    unigrams = _WORD_RE.findall(text.lower())
    bigrams = [f"{a} {b}" for a, b in zip(unigrams, unigrams[1:])]
    return unigrams + bigrams


@dataclass(frozen=True)
class Candidate:
    answer: str
    prob: float


@dataclass(frozen=True)
class CandidateList:
    """Ranked length-compatible answers for one clue; probs plus the
    out-of-set mass sum to 1."""

    candidates: tuple[Candidate, ...]
    oov_mass: float
    slot: SlotId | None = None

    def answers(self) -> list[str]:
        return [c.answer for c in self.candidates]

    def validate(self, length: int | None = None) -> None:
        seen: set[str] = set()
        prev = float("inf")
        total = 0.0
        for cand in self.candidates:
            if length is not None and len(cand.answer) != length:
                raise ValueError(f"candidate {cand.answer!r} has wrong length")
            if cand.answer in seen:
                raise ValueError(f"duplicate candidate {cand.answer!r}")
            seen.add(cand.answer)
            if not cand.prob > 0:
                raise ValueError(f"candidate {cand.answer!r} has prob {cand.prob}")
            if cand.prob > prev:
                raise ValueError("candidate probs are not sorted non-increasing")
            prev = cand.prob
            total += cand.prob
        if not 0 <= self.oov_mass <= 1:
            raise ValueError(f"oov_mass {self.oov_mass} outside [0, 1]")
        if abs(total + self.oov_mass - 1.0) > 1e-9:
            raise ValueError(f"probs + oov_mass = {total + self.oov_mass}, expected 1")


class TfidfIndex:
    """Inverted index over corpus clue tokens with idf = ln(N/df) and raw
    term counts. Pairs whose every term has zero idf carry no signal and are
    left out of the norm table (they can never be retrieved)."""

    def __init__(self, corpus: ClueCorpus):
        if not corpus.pairs:
            raise ValueError("cannot index an empty corpus")
        self.corpus = corpus
        self.pair_terms: list[Counter[str]] = [
            Counter(tokenize(pair.clue)) for pair in corpus.pairs
        ]
        df: Counter[str] = Counter()
        for terms in self.pair_terms:
            df.update(terms.keys())
        n = len(corpus.pairs)
        self.vocabulary: dict[str, int] = dict(df)
        self.idf: dict[str, float] = {t: math.log(n / d) for t, d in df.items()}
        self.postings: dict[str, list[tuple[int, int]]] = {t: [] for t in df}
        for pid, terms in enumerate(self.pair_terms):
            for term, tf in terms.items():
                self.postings[term].append((pid, tf))
        self.norms: dict[int, float] = {}
        for pid, terms in enumerate(self.pair_terms):
            sq = sum((tf * self.idf[t]) ** 2 for t, tf in terms.items())
            if sq > 0:
                self.norms[pid] = math.sqrt(sq)

    def cosine_scores(self, clue: str) -> dict[int, float]:
        """Cosine similarity against every pair sharing a positive-idf term
        with the query; pairs absent from the result score 0."""
        query_tf = Counter(tokenize(clue))
        weights = {
            t: tf * self.idf[t]
            for t, tf in query_tf.items()
            if t in self.idf and self.idf[t] > 0
        }
        qnorm = math.sqrt(sum(w * w for w in weights.values()))
        if qnorm == 0:
            return {}
        dots: dict[int, float] = {}
        for term in sorted(weights):
            wq = weights[term]
            idf = self.idf[term]
            for pid, tf in self.postings[term]:
                dots[pid] = dots.get(pid, 0.0) + wq * tf * idf
        return {
            pid: dot / (qnorm * self.norms[pid])
            for pid, dot in sorted(dots.items())
            if pid in self.norms and dot > 0
        }


def build_index(corpus: ClueCorpus) -> TfidfIndex:
    return TfidfIndex(corpus)


def generate(
    index: TfidfIndex,
    clue: str,
    length: int,
    top_k: int = DEFAULT_TOP_K,
    temperature: float = DEFAULT_TEMPERATURE,
    oov_floor: float = DEFAULT_OOV_FLOOR,
    scale: float = COSINE_SCALE,
    slot: SlotId | None = None,
) -> CandidateList:
    """Retrieve, aggregate per answer, length-filter, then softmax the top_k
    scores at the given temperature. Ties everywhere break lexicographically
    by answer. An empty retrieval yields no candidates and oov_mass 1.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if not 0 <= oov_floor < 1:
        raise ValueError(f"oov_floor must be in [0, 1), got {oov_floor}")
    if scale < 0:
        raise ValueError(f"scale must be nonnegative, got {scale}")
    scores = index.cosine_scores(clue)
    best_by_answer: dict[str, float] = {}
    for pid, score in scores.items():
        answer = index.corpus.pairs[pid].answer
        if len(answer) != length:
            continue
        prev = best_by_answer.get(answer)
        if prev is None or score > prev:
            best_by_answer[answer] = score
    ranked = sorted(best_by_answer.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]
    if not ranked:
        return CandidateList(candidates=(), oov_mass=1.0, slot=slot)
    scaled = [scale * score / temperature for _, score in ranked]
    peak = max(scaled)
    exps = [math.exp(s - peak) for s in scaled]
    z = sum(exps)
    keep = 1.0 - oov_floor
    candidates = tuple(
        Candidate(answer=answer, prob=keep * e / z)
        for (answer, _), e in zip(ranked, exps)
    )
    return CandidateList(candidates=candidates, oov_mass=oov_floor, slot=slot)


def make_generator(
    index: TfidfIndex,
    temperature: float = DEFAULT_TEMPERATURE,
    oov_floor: float = DEFAULT_OOV_FLOOR,
    scale: float = COSINE_SCALE,
) -> Callable[[str, int, int], CandidateList]:
    """Bind index and softmax settings into the generator call shape
    generate(clue, length, top_k) used by the recall harness and solver."""
    return partial(
        generate, index, temperature=temperature, oov_floor=oov_floor, scale=scale
    )


def topk_recall(
    generator: Callable[[str, int, int], CandidateList],
    eval_pairs: Sequence[tuple[str, str]],
    k: int,
) -> float:
    """Fraction of (clue, gold) pairs whose gold answer appears among the
    generator's top k candidates at the gold answer's length."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not eval_pairs:
        raise ValueError("eval_pairs must be nonempty")
    hits = 0
    for clue, gold in eval_pairs:
        result = generator(clue, len(gold), k)
        if gold in result.answers():
            hits += 1
    return hits / len(eval_pairs)
