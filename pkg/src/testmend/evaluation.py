"""Aggregate metrics over session results and the n-gram overlap check."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .javasrc import tokenize
from .model import Phase, SessionResult


@dataclass(frozen=True)
class Metrics:
    sessions: int
    cpr: float  # compilation pass rate, percent
    tpr: float  # test pass rate, percent
    line_coverage: Optional[float]  # None when no best candidate passed
    branch_coverage: Optional[float]
    mutation_score: Optional[float]

    def as_dict(self) -> dict:
        return {"sessions": self.sessions, "cpr": self.cpr, "tpr": self.tpr,
                "line_coverage": self.line_coverage, "branch_coverage": self.branch_coverage,
                "mutation_score": self.mutation_score}

    def table(self) -> str:
        def fmt(v):
            return "n/a" if v is None else f"{v:.2f}"
        rows = [("sessions", str(self.sessions)), ("CPR %", fmt(self.cpr)), ("TPR %", fmt(self.tpr)),
                ("line coverage %", fmt(self.line_coverage)), ("branch coverage %", fmt(self.branch_coverage)),
                ("mutation score %", fmt(self.mutation_score))]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _mean(values: Sequence[float]) -> Optional[float]:
    if not values:
        return None
    return round(sum(values) / len(values), 2)


def aggregate_metrics(results: Sequence[SessionResult]) -> Metrics:
    """Pass rates over all sessions; quality means over sessions whose best candidate passed."""
    if not results:
        raise ValueError("aggregate_metrics needs at least one session result")
    n = len(results)
    compiled = [r for r in results if r.best_outcome.phase_reached is not Phase.COMPILE_FAILED]
    passed = [r for r in results if r.best_outcome.phase_reached is Phase.PASSED]
    return Metrics(
        n,
        round(100.0 * len(compiled) / n, 2),
        round(100.0 * len(passed) / n, 2),
        _mean([r.best_outcome.coverage.line_coverage_pct for r in passed]),
        _mean([r.best_outcome.coverage.branch_coverage_pct for r in passed]),
        _mean([r.best_outcome.mutation.mutation_score_pct for r in passed]),
    )


def ngrams(text: str, n: int) -> set[tuple[str, ...]]:
    toks = tokenize(text)
    return {tuple(toks[i:i + n]) for i in range(len(toks) - n + 1)}


def ngram_overlap(generated: Sequence[str], reference: Sequence[str], n: int = 4) -> float:
    """Share of distinct generated n-grams that also occur in the reference corpus.

    Returns 0.0 when the generated side has no n-gram at all.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    gen: set = set()
    for text in generated:
        gen |= ngrams(text, n)
    if not gen:
        return 0.0
    ref: set = set()
    for text in reference:
        ref |= ngrams(text, n)
    return len(gen & ref) / len(gen)
