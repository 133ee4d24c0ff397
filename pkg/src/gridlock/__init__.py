"""Crossword solving engine: retrieval QA, belief propagation, greedy fill,
local-search repair, and evaluation tooling."""

__version__ = "0.1.0"
