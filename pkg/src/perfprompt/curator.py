"""Corpus rebalancing and near-duplicate test-case removal."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

from perfprompt.cpg import SourceUnit
from perfprompt.evaluator import TestCase

DEFAULT_CAP = 10
DEFAULT_N = 4
DEFAULT_THRESHOLD = 0.9
DEFAULT_MAX_KEEP = 10


@dataclass(frozen=True)
class ProblemSample:
    problem_id: str
    sample_id: str
    source: SourceUnit
    cases: tuple[TestCase, ...] = ()


def _natural(key: str) -> tuple[int, int, str]:
    return (0, int(key), "") if key.isdigit() else (1, 0, key)


def cap_per_problem(samples: Iterable[ProblemSample], cap: int = DEFAULT_CAP) -> list[ProblemSample]:
    """Keep at most ``cap`` samples per problem, lowest sample ids first.

    Problems keep their first-appearance order, so no problem disappears and
    the output is stable for a given input.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    groups: OrderedDict[str, list[ProblemSample]] = OrderedDict()
    for s in samples:
        groups.setdefault(s.problem_id, []).append(s)
    out = []
    for group in groups.values():
        out.extend(sorted(group, key=lambda s: _natural(s.sample_id))[:cap])
    return out


def char_ngrams(text: str, n: int) -> set[str]:
    if len(text) < n:
        return {text} if text else set()
    return {text[i:i + n] for i in range(len(text) - n + 1)}


def ngram_similarity(a: str, b: str, n: int = DEFAULT_N) -> float:
    """Jaccard similarity of the character ``n``-gram sets of ``a`` and ``b``.

    A non-empty text shorter than ``n`` contributes itself as its only gram;
    two empty texts are identical (1.0).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    ga, gb = char_ngrams(a, n), char_ngrams(b, n)
    if not ga and not gb:
        return 1.0
    return len(ga & gb) / len(ga | gb)


def dedup_cases(cases: Sequence[TestCase], n: int = DEFAULT_N, threshold: float = DEFAULT_THRESHOLD,
                max_keep: int = DEFAULT_MAX_KEEP) -> list[TestCase]:
    """Greedy near-duplicate removal, official cases considered first.

    A case is kept when its input's similarity to every kept input is below
    ``threshold``; at most ``max_keep`` cases survive.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    ordered = [c for c in cases if c.origin == "official"] + [c for c in cases if c.origin != "official"]
    kept: list[TestCase] = []
    grams: list[set[str]] = []
    for case in ordered:
        if len(kept) >= max_keep:
            break
        g = char_ngrams(case.input, n)
        if all(_jaccard(g, other) < threshold for other in grams):
            kept.append(case)
            grams.append(g)
    return kept


def _jaccard(a: set[str], b: set[str]) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


@dataclass
class CurationReport:
    rows: list[tuple[str, int, int, float]] = field(default_factory=list)  # problem, before, after, max sim
    n: int = DEFAULT_N
    threshold: float = DEFAULT_THRESHOLD

    def add(self, problem_id: str, before: Sequence[TestCase], after: Sequence[TestCase]) -> None:
        sims = [ngram_similarity(a.input, b.input, self.n) for a, b in combinations(after, 2)]
        self.rows.append((problem_id, len(before), len(after), max(sims, default=0.0)))

    def table(self) -> str:
        lines = [f"# n={self.n} threshold={self.threshold}",
                 f"{'problem':<20} {'cases':>6} {'kept':>6} {'dropped':>8} {'max_sim':>8}"]
        for pid, before, after, sim in self.rows:
            lines.append(f"{pid:<20} {before:>6} {after:>6} {before - after:>8} {sim:>8.3f}")
        return "\n".join(lines)


def curate(samples: Iterable[ProblemSample], cap: int = DEFAULT_CAP, n: int = DEFAULT_N,
           threshold: float = DEFAULT_THRESHOLD, max_keep: int = DEFAULT_MAX_KEEP
           ) -> tuple[list[ProblemSample], CurationReport]:
    """Cap samples per problem, then dedup each sample's cases."""
    report = CurationReport(n=n, threshold=threshold)
    out = []
    for s in cap_per_problem(samples, cap):
        kept = dedup_cases(s.cases, n, threshold, max_keep)
        report.add(f"{s.problem_id}/{s.sample_id}", s.cases, kept)
        out.append(ProblemSample(s.problem_id, s.sample_id, s.source, tuple(kept)))
    return out, report
