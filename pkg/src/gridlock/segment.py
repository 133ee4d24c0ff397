"""Dictionary-based word segmentation.

Splits an unsegmented uppercase answer string into dictionary words by
dynamic programming over split points, maximizing the sum of unigram word
log-probabilities. Used to restore natural-language answer forms and as a
validity gate for local-search proposals. Pure functions over an immutable
dictionary.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import SegmentationDictionary


@dataclass(frozen=True)
class Segmentation:
    words: tuple[str, ...]
    score: float


def _check_input(s: str) -> None:
    if not s or not all("A" <= ch <= "Z" for ch in s):
        raise ValueError(f"expected a nonempty A-Z string, got {s!r}")


def segment(dictionary: SegmentationDictionary, s: str) -> Segmentation | None:
    """Best full cover of `s` by dictionary words, or None when no cover
    exists. Ties broken by higher score, then fewer words, then
    lexicographically earliest word sequence; deterministic.
    """
    _check_input(s)
    lowered = s.lower()
    n = len(lowered)
    max_len = dictionary.max_word_length
    # best[i] covers lowered[:i]; score sums are accumulated left to right so
    # they are bit-identical to a left-to-right enumeration oracle.
    best: list[tuple[float, int, tuple[str, ...]] | None] = [None] * (n + 1)
    best[0] = (0.0, 0, ())
    for i in range(1, n + 1):
        for j in range(max(0, i - max_len), i):
            prefix = best[j]
            if prefix is None:
                continue
            word = lowered[j:i]
            if word not in dictionary:
                continue
            score = prefix[0] + dictionary.log_prob(word)
            words = prefix[2] + (word,)
            candidate = (score, prefix[1] + 1, words)
            incumbent = best[i]
            if incumbent is None or _better(candidate, incumbent):
                best[i] = candidate
    final = best[n]
    if final is None:
        return None
    return Segmentation(words=final[2], score=final[0])


def _better(a: tuple[float, int, tuple[str, ...]], b: tuple[float, int, tuple[str, ...]]) -> bool:
    if a[0] != b[0]:
        return a[0] > b[0]
    if a[1] != b[1]:
        return a[1] < b[1]
    return a[2] < b[2]


def segments_validly(dictionary: SegmentationDictionary, s: str) -> bool:
    """True iff `s` has at least one full cover by dictionary words."""
    _check_input(s)
    lowered = s.lower()
    n = len(lowered)
    max_len = dictionary.max_word_length
    reachable = [False] * (n + 1)
    reachable[0] = True
    for i in range(1, n + 1):
        for j in range(max(0, i - max_len), i):
            if reachable[j] and lowered[j:i] in dictionary:
                reachable[i] = True
                break
    return reachable[n]
