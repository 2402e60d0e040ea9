from __future__ import annotations

import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perfprompt.cpg import (
    LineSpan,
    SourceUnit,
    build_cpg,
    call_sites,
    container_operations,
    declares,
    dump_graph,
    indirect_reads,
    indirect_writes,
    loop_scopes,
    self_call_methods,
)
from perfprompt.errors import ParseError, UnknownIdentifier, UnknownMethod



def test_source_unit_line_count():
    assert SourceUnit("a\nb\nc\n").line_count == 3
    assert SourceUnit("a\nb").line_count == 2


def test_empty_source_rejected():
    with pytest.raises(ValueError):
        SourceUnit("   \n")


def test_span_rejects_inverted_range():
    with pytest.raises(ValueError):
        LineSpan(3, 2)
    with pytest.raises(ValueError):
        LineSpan(0, 1)


def test_fib_graph(slow_snippets):
    g = build_cpg(slow_snippets["recursion"])
    assert [m.name for m in g.methods] == ["fib"]
    assert g.methods[0].span == LineSpan(1, 4)
    assert [c.name for c in g.calls] == ["fib", "fib"]
    assert all(c.callee == g.methods[0].id for c in g.calls)


def test_empty_main():
    g = build_cpg("int main(){}")
    assert len(g.methods) == 1 and not g.calls and not g.loops


def test_loop_sort_single_loop(slow_snippets):
    g = build_cpg(slow_snippets["loop_sort"])
    loops = loop_scopes(g)
    assert len(loops) == 1
    names = {c.name for c in g.calls if c.id in loops[0].calls}
    assert names == {"sort"}
    assert {"a", "n"}.isdisjoint(loops[0].mutated)


def test_self_call_methods(slow_snippets):
    g = build_cpg(slow_snippets["recursion"])
    assert {m.name for m in self_call_methods(g)} == {"fib"}


def test_iterative_fib_has_no_self_calls():
    src = "int fib(int n){ int a=0,b=1; for(int i=0;i<n;i++){int t=a+b;a=b;b=t;} return a; }"
    assert self_call_methods(build_cpg(src)) == frozenset()


def test_mutual_recursion_is_not_self_call():
    src = "int odd(int n);\nint even(int n){ return n==0 ? 1 : odd(n-1); }\nint odd(int n){ return n==0 ? 0 : even(n-1); }\n"
    g = build_cpg(src)
    assert {c.name for c in g.calls} == {"odd", "even"}
    assert all(c.resolved for c in g.calls)
    assert self_call_methods(g) == frozenset()


def test_memo_table_indirect_access(fast_snippets):
    g = build_cpg(fast_snippets["recursion"])
    assert "dp" in indirect_reads(g, "fib")
    assert "dp" in indirect_writes(g, "fib")
    assert declares(g, "fib", "dp") is False


def test_scalar_method_has_no_indirect_access():
    g = build_cpg("int f(int x){ int y = x + 1; y *= 2; return y; }")
    assert indirect_reads(g, "f") == frozenset()
    assert indirect_writes(g, "f") == frozenset()


def test_subscript_classification():
    g = build_cpg("void f(int *a, int *b, int i){ a[i] = b[i] + 1; }")
    assert indirect_reads(g, "f") == {"b"}
    assert indirect_writes(g, "f") == {"a"}


def test_declares_locals_not_params():
    g = build_cpg("int f(int n){ int t = n; return t; }")
    assert declares(g, "f", "t")
    assert not declares(g, "f", "n")


def test_unknown_method():
    g = build_cpg("int f(){ return 0; }")
    with pytest.raises(UnknownMethod):
        indirect_reads(g, "nope")
    with pytest.raises(UnknownMethod):
        declares(g, "nope", "x")


def test_stream_sites(slow_snippets):
    g = build_cpg(slow_snippets["stream_io"])
    sites = call_sites(g, {"cin", "cout"})
    assert [(c.name, c.span.start_line) for c in sites] == [("cin", 2), ("cout", 4)]
    assert call_sites(g, {"pow"}) == []
    assert len(call_sites(g)) == len(g.calls)


def test_stream_chain_is_one_site():
    g = build_cpg("int main(){ int a, b, c; cin >> a >> b >> c; cout << a << b << endl; }")
    assert [c.name for c in g.calls] == ["cin", "cout"]


def test_qualified_filter():
    g = build_cpg("int main(){ int a[3]; std::sort(a, a + 3); }")
    assert [c.name for c in call_sites(g, {"std::sort"})] == ["sort"]


def test_nested_loops():
    g = build_cpg("int main(){ for(int i=0;i<3;i++) for(int j=0;j<3;j++) {} }")
    outer, inner = loop_scopes(g)
    assert inner.parent == outer.id
    assert outer.span.contains(inner.span)


def test_loop_free_source():
    assert loop_scopes(build_cpg("int main(){ return 0; }")) == []


def test_container_operations(slow_snippets):
    g = build_cpg(slow_snippets["vector"])
    assert container_operations(g, "v") == [("push_back", LineSpan(4, 4))]


def test_container_operations_order_and_unused():
    src = "int main(){\n vector<int> v;\n vector<int> w;\n v.insert(v.begin(), 1);\n v.erase(v.begin());\n}\n"
    g = build_cpg(src)
    assert [op for op, _ in container_operations(g, "v")] == ["insert", "begin", "erase", "begin"]
    assert container_operations(g, "w") == []
    with pytest.raises(UnknownIdentifier):
        container_operations(g, "zzz")


def test_strict_parse_error_position():
    with pytest.raises(ParseError) as info:
        build_cpg("int main() {\n  int x = ;\n}\n")
    assert info.value.line == 2


def test_partial_parse_records_warnings():
    g = build_cpg("int main() {\n  int x = ;\n  return 0;\n}\n", strict=False)
    assert g.warnings and g.warnings[0].line == 2


def test_function_like_macro_is_skipped_not_fatal():
    src = "#define rep(i,n) for(int i=0;i<(n);++i)\nint main(){ int s=0; rep(i,10) s+=i; return s; }\n"
    g = build_cpg(src)
    assert any("macro" in w.reason for w in g.warnings)
    assert "rep" not in {c.name for c in g.calls}


def test_reference_argument_counts_as_write():
    src = "void inc(int &x){ x++; }\nint main(){ int k = 0; for(int i=0;i<3;i++) inc(k); }\n"
    g = build_cpg(src)
    assert "k" in g.loops[0].mutated


def test_dump_lines(slow_snippets):
    buf = io.StringIO()
    dump_graph(build_cpg(slow_snippets["recursion"]), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].startswith("method\tm0\t1-4\t")
    assert all(len(line.split("\t")) == 4 for line in lines)


_SNIPPETS = [
    "int f(int n){ return n <= 1 ? n : f(n-1) + f(n-2); }",
    "int main(){ int n; cin >> n; vector<int> v; for(int i=0;i<n;i++) v.push_back(i); cout << v.size(); }",
    "int a[100]; int main(){ int s = 0; for(int i=0;i<100;i++){ s += a[i]; } printf(\"%d\", s); }",
    "void g(int *p){ *p = 3; }\nint main(){ int x; g(&x); while(x--) { x -= 1; } }",
    "int main(){ int q; long r = 0; do { r += pow(q, 2); } while(--q); }",
]


@settings(max_examples=40, deadline=None)
@given(parts=st.lists(st.sampled_from(_SNIPPETS), min_size=1, max_size=4), pad=st.integers(0, 3))
def test_graph_invariants(parts, pad):
    text = ("\n" * pad) + "\n".join(p.replace("main", f"main{i}") for i, p in enumerate(parts)) + "\n"
    g = build_cpg(text)
    assert g == build_cpg(text)
    ids = {m.id for m in g.methods}
    for c in g.calls:
        assert c.caller in ids
        assert c.callee is None or c.callee in ids
    spans = [m.span for m in g.methods] + [c.span for c in g.calls] + [u.span for u in g.identifiers]
    spans += [lp.span for lp in g.loops] + [d.span for d in g.declarations]
    assert all(1 <= s.start_line <= s.end_line <= g.line_count for s in spans)
    assert self_call_methods(g) <= set(g.methods)
    for m in g.methods:
        used = {u.name for u in g.uses_in(m)}
        assert indirect_reads(g, m) | indirect_writes(g, m) <= used


def test_graph_is_immutable(slow_snippets):
    g = build_cpg(slow_snippets["recursion"])
    with pytest.raises(AttributeError):
        g.methods = ()
