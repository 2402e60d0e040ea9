from __future__ import annotations

import random
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perfprompt.cpg import SourceUnit
from perfprompt.curator import (
    ProblemSample,
    cap_per_problem,
    char_ngrams,
    curate,
    dedup_cases,
    ngram_similarity,
)
from perfprompt.evaluator import TestCase

SRC = SourceUnit("int main(){}\n")


def samples(counts):
    out = []
    for p, n in counts.items():
        out.extend(ProblemSample(p, str(i), SRC) for i in range(n))
    return out


def per_problem(items):
    counts = {}
    for s in items:
        counts[s.problem_id] = counts.get(s.problem_id, 0) + 1
    return counts


def test_cap_fixture():
    assert per_problem(cap_per_problem(samples({"a": 15, "b": 5, "c": 2}), 10)) == {"a": 10, "b": 5, "c": 2}


def test_cap_one_and_stable_order():
    items = list(reversed(samples({"a": 3, "b": 2})))
    capped = cap_per_problem(items, 1)
    assert [(s.problem_id, s.sample_id) for s in capped] == [("b", "0"), ("a", "0")]
    assert cap_per_problem(samples({"a": 12}), 10)[-1].sample_id == "9"


def test_balanced_input_unchanged():
    items = samples({"a": 3, "b": 3})
    assert cap_per_problem(items, 10) == items
    with pytest.raises(ValueError):
        cap_per_problem(items, 0)


def test_bigram_example():
    assert char_ngrams("abcd", 2) == {"ab", "bc", "cd"}
    assert ngram_similarity("abcd", "abce", 2) == 0.5


def test_similarity_extremes():
    assert ngram_similarity("hello world", "hello world") == 1.0
    assert ngram_similarity("abcabc", "xyzxyz", 2) == 0.0
    assert ngram_similarity("", "") == 1.0
    with pytest.raises(ValueError):
        ngram_similarity("a", "b", 0)


def case(i, text, origin="official"):
    return TestCase(str(i), text, "", origin)


def test_identical_inputs_collapse():
    assert len(dedup_cases([case(0, "1 2 3"), case(1, "1 2 3")])) == 1


def test_official_preferred_over_generated():
    kept = dedup_cases([case(0, "5 5 5 5", "generated"), case(1, "5 5 5 5", "official")])
    assert [c.case_id for c in kept] == ["1"]


def test_max_keep_takes_priority_prefix():
    rng = random.Random(0)
    cases = [case(i, "".join(rng.choices("abcdefghijklmnopqrstuvwxyz0123456789", k=40))) for i in range(15)]
    assert all(ngram_similarity(a.input, b.input) < 0.9 for a, b in combinations(cases, 2))
    assert [c.case_id for c in dedup_cases(cases, max_keep=10)] == [str(i) for i in range(10)]


def test_threshold_validation():
    with pytest.raises(ValueError):
        dedup_cases([], threshold=0)


_case_sets = st.lists(
    st.tuples(st.text(alphabet="ab 1\n", max_size=12), st.sampled_from(["official", "generated"])),
    max_size=14,
)


@settings(max_examples=100)
@given(raw=_case_sets, n=st.integers(1, 4), threshold=st.floats(0.05, 1.0))
def test_dedup_properties(raw, n, threshold):
    cases = [case(i, text, origin) for i, (text, origin) in enumerate(raw)]
    kept = dedup_cases(cases, n, threshold)
    assert all(k in cases for k in kept) and len(kept) <= 10
    for a, b in combinations(kept, 2):
        assert ngram_similarity(a.input, b.input, n) < threshold
    assert dedup_cases(kept, n, threshold) == kept


def test_curate_report():
    cases = (case(0, "1 2"), case(1, "1 2"), case(2, "9 9 9 9 9"))
    items = [ProblemSample("p", "0", SRC, cases)]
    out, report = curate(items)
    assert len(out[0].cases) == 2
    table = report.table()
    assert "p/0" in table and "threshold=0.9" in table
