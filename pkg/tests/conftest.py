from __future__ import annotations

from pathlib import Path

import pytest

from perfprompt.cpg import SourceUnit

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

# Expected directive for each slow snippet in fixtures/, byte for byte.
SNIPPET_DIAGNOSES = {
    "recursion": "The following methods are purely recursive: [{method: fib, lines: 1--4}]. "
    "Applying memoization or dynamic programming can significantly reduce its execution time.",
    "vector": "The following vectors do not use dynamic operations: [{variable: v, lines: 2--4}]. "
    "Replacing them with a static array or fixed-size container can improve performance.",
    "stream_io": "The following I/O library calls rely on slow operations: [{call: cin, lines: 2--2}, "
    "{call: cout, lines: 4--4}]. Replacing them with faster alternatives (scanf, printf) can improve performance.",
    "loop_sort": "The following redundant calls are placed inside loops: [{call: sort, lines: 3--4}]. "
    "Moving these calls outside the loop, or caching their results, can eliminate redundant work "
    "and improve efficiency.",
}
SNIPPET_RULES = {"recursion": "ALG001", "vector": "DS001", "stream_io": "LIB001", "loop_sort": "LOOP001"}
SNIPPETS = tuple(SNIPPET_RULES)


def fixture_unit(name: str) -> SourceUnit:
    return SourceUnit.from_file(FIXTURES / name)


@pytest.fixture
def slow_snippets():
    return {n: fixture_unit(f"{n}_slow.cpp") for n in SNIPPETS}


@pytest.fixture
def fast_snippets():
    return {n: fixture_unit(f"{n}_fast.cpp") for n in SNIPPETS}


_CRITERIA = {
    "test_ac1_rule_fixtures": "1 rule fixtures",
    "test_ac2_metric_algebra": "2 metric algebra",
    "test_ac3_best_at_k": "3 best@k properties",
    "test_ac4_retrieval_oracle": "4 retrieval oracle",
    "test_ac5_prompt_goldens": "5 prompt golden files",
    "test_ac6_curation": "6 curation",
    "test_ac7_end_to_end_mock": "7 end-to-end mock run",
    "test_ac8_resolved_check": "8 resolved-bottleneck check",
    "test_ac9_histogram": "9 histogram",
}
_outcomes: dict[str, str] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if name not in _CRITERIA or not report.nodeid.startswith("tests/test_acceptance.py"):
        return
    if report.when == "call" or report.failed or report.skipped:
        _outcomes.setdefault(name, "PASS" if report.passed else "SKIP" if report.skipped else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for name, label in _CRITERIA.items():
        if name in _outcomes:
            terminalreporter.write_line(f"[{_outcomes[name]}] criterion {label}")
