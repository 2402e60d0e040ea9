"""Rule engine that turns code-property-graph patterns into bottleneck diagnoses.

Each rule pairs a detector (a pure function of the graph) with a text
template.  Detectors emit one :class:`RuleMatch` per offending entity;
:func:`advise` merges all matches of a rule into a single diagnosis that lists
the entities in source order.
"""
from __future__ import annotations

import json
import re
import string
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from perfprompt.cpg import (
    CallSite,
    CodePropertyGraph,
    LineSpan,
    LoopScope,
    MUTATING_MEMBERS,
    SourceUnit,
    build_cpg,
    declares,
    indirect_reads,
    indirect_writes,
    self_call_methods,
)
from perfprompt.errors import MissingPlaceholder, ParseError, RuleConfigError

CATEGORIES = ("InefficientAlgorithm", "DataStructureUsage", "LibraryUsage", "LoopStructure")
DEFAULT_ENTITY_FORMAT = "{{{kind}: {name}, lines: {start}--{end}}}"
_INTEGRAL = re.compile(
    r"^(const\s+)?(unsigned\s+|signed\s+)?(int|long|long long|short|char|size_t|int\d+_t|uint\d+_t|ll|ull|long int)$"
)
_INT_LITERAL = re.compile(r"^[+-]?(0[xX][0-9a-fA-F]+|\d+)[uUlL]*$")


@dataclass(frozen=True)
class Entity:
    kind: str
    name: str
    span: LineSpan


@dataclass(frozen=True)
class RuleMatch:
    rule_id: str
    entities: tuple[Entity, ...]

    def __post_init__(self) -> None:
        if not self.entities:
            raise ValueError("a rule match needs at least one entity")


@dataclass(frozen=True)
class RuleTemplatePair:
    rule_id: str
    category: str
    template: str
    detector: str
    params: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class BottleneckDiagnosis:
    rule_id: str
    category: str
    text: str
    entities: tuple[Entity, ...]

    def to_record(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "category": self.category,
            "entities": [
                {"kind": e.kind, "name": e.name, "start_line": e.span.start_line, "end_line": e.span.end_line}
                for e in self.entities
            ],
            "text": self.text,
        }


@dataclass(frozen=True)
class RuleSet:
    version: int
    rules: tuple[RuleTemplatePair, ...]
    entity_format: str = DEFAULT_ENTITY_FORMAT

    def rule(self, rule_id: str) -> RuleTemplatePair:
        for r in self.rules:
            if r.rule_id == rule_id:
                return r
        raise RuleConfigError(f"unknown rule {rule_id!r}")

    def subset(self, rule_ids: Iterable[str]) -> RuleSet:
        wanted = set(rule_ids)
        return RuleSet(self.version, tuple(r for r in self.rules if r.rule_id in wanted), self.entity_format)


# --------------------------------------------------------------------------
# Detectors
# --------------------------------------------------------------------------


def _ordered(matches: Iterable[RuleMatch]) -> list[RuleMatch]:
    return sorted(matches, key=lambda m: (m.entities[0].span, m.entities[0].name))


def detect_recursion_without_memoization(g: CodePropertyGraph, rule_id: str = "ALG001",
                                         **_: object) -> list[RuleMatch]:
    """Flag self-calling methods that maintain no memo table.

    A table is an identifier both read and written through a subscript,
    dereference, or member access inside the method, which the method does not
    re-create per call (it lives outside the body or is ``static``).
    """
    out = []
    for f in self_call_methods(g):
        shared = indirect_reads(g, f) & indirect_writes(g, f)
        memoized = any(not declares(g, f, name) or _static_local(g, f.id, name) for name in shared)
        if not memoized:
            out.append(RuleMatch(rule_id, (Entity("method", f.name, f.span),)))
    return _ordered(out)


def _static_local(g: CodePropertyGraph, method_id: str, name: str) -> bool:
    return any(d.method == method_id and d.name == name and d.static for d in g.declarations)


def detect_static_replaceable_container(
    g: CodePropertyGraph,
    rule_id: str = "DS001",
    container_types: Sequence[str] = ("vector",),
    allowed_operations: Sequence[str] = ("push_back", "operator[]", "size", "at", "front", "back"),
    **_: object,
) -> list[RuleMatch]:
    """Flag containers only ever appended to, indexed, or sized.

    Any bare use of the variable (passing it to a function, assigning it,
    taking its address) disqualifies it, as does a nested-container element
    type or an array of containers.
    """
    type_re = re.compile(rf"^(std::)?({'|'.join(map(re.escape, container_types))})\s*<(.*)>$")
    allowed = set(allowed_operations)
    out = []
    for d in g.declarations:
        if d.scope == "param":
            continue
        m = type_re.match(d.type_text.strip())
        if m is None or type_re.match(m.group(3).strip()) or "<" in m.group(3):
            continue
        ops = [op for op in g.container_ops if op.decl == d.id]
        if not ops or any(op.operation not in allowed for op in ops):
            continue
        bare = [u for u in g.identifiers if u.decl == d.id and u.directness == "direct" and not u.initializer]
        if bare:
            continue
        end = max([d.span.end_line] + [op.span.end_line for op in ops])
        out.append(RuleMatch(rule_id, (Entity("variable", d.name, LineSpan(d.span.start_line, end)),)))
    return _ordered(out)


def detect_slow_library_calls(
    g: CodePropertyGraph,
    rule_id: str = "LIB001",
    calls: Sequence[str] = ("cin", "cout", "endl", "getline", "pow"),
    suppressed_by: Sequence[str] = (),
    integer_exponent_only: bool = True,
    **_: object,
) -> list[RuleMatch]:
    """One match per call site named in the slow-call table.

    ``pow`` is only reported when its exponent is an integer literal or an
    integral-typed variable, the case where repeated multiplication wins.
    """
    table = set(calls)
    present = {c.name for c in g.calls}
    if any(s in present for s in suppressed_by):
        return []
    out = []
    for c in g.calls:
        if c.name not in table or c.kind == "member":
            continue
        if c.name == "pow" and integer_exponent_only and not _integer_exponent(g, c):
            continue
        out.append(RuleMatch(rule_id, (Entity("call", c.name, c.span),)))
    return _ordered(out)


def _integer_exponent(g: CodePropertyGraph, call: CallSite) -> bool:
    if len(call.args) != 2:
        return False
    exponent = call.args[1].strip()
    if _INT_LITERAL.match(exponent):
        return True
    if re.fullmatch(r"[A-Za-z_]\w*", exponent):
        for d in g.declarations:
            if d.name == exponent and (d.method in (call.caller, None)):
                return bool(_INTEGRAL.match(d.type_text.strip()))
    return False


def detect_loop_invariant_calls(
    g: CodePropertyGraph,
    rule_id: str = "LOOP001",
    ignore_calls: Sequence[str] = (),
    impure_calls: Sequence[str] = (),
    idempotent_mutators: Sequence[str] = ("sort", "fill", "memset"),
    **_: object,
) -> list[RuleMatch]:
    """Flag calls whose arguments the innermost enclosing loop never mutates.

    The mutation set is conservative: writes anywhere in the loop, globals
    written by user functions it calls, and the first argument of in-place
    library mutators such as ``sort`` all count.  A flagged call's span is
    widened over the directly following loop-body statements that only
    consume loop-invariant values (the work that moves out with the call).
    """
    skip = set(ignore_calls) | set(impure_calls)
    mutators = set(idempotent_mutators)
    by_id = {c.id: c for c in g.calls}
    impure_methods = _impure_methods(g, set(impure_calls))
    global_writes = _global_writes(g)
    children: dict[str, set[str]] = {}
    for lp in g.loops:
        if lp.parent is not None:
            children.setdefault(lp.parent, set()).update(lp.calls)
    out = []
    for lp in g.loops:
        loop_calls = [by_id[cid] for cid in lp.calls]
        innermost = [c for c in loop_calls if c.id not in children.get(lp.id, set())]
        base_mutated = set(lp.mutated)
        for c in loop_calls:
            if c.callee is not None:
                base_mutated |= global_writes.get(c.callee, set())
        for c in innermost:
            if not _call_candidate(c, skip, impure_methods):
                continue
            mutated = set(base_mutated)
            for other in loop_calls:
                if other.id != c.id and other.name in mutators and other.arg_identifiers:
                    mutated |= other.arg_identifiers[0]
            if c.receiver is not None and c.receiver in mutated:
                continue
            if any(ids & mutated for ids in c.arg_identifiers):
                continue
            span = _widen(lp, c, mutated)
            label = f"{c.receiver}.{c.name}" if c.receiver else c.name
            out.append(RuleMatch(rule_id, (Entity("call", label, span),)))
    return _ordered(out)


def _call_candidate(c: CallSite, skip: set[str], impure_methods: set[str]) -> bool:
    if c.kind == "stream" or c.name in skip or c.qualified_name in skip:
        return False
    if c.kind == "member":
        return c.receiver is not None and c.name not in MUTATING_MEMBERS
    if not c.args:
        return False
    return c.callee is None or c.callee not in impure_methods


def _global_writes(g: CodePropertyGraph) -> dict[str, set[str]]:
    """Non-local identifiers each method writes, closed over its callees."""
    file_decls = {d.id for d in g.declarations if d.scope == "file"}
    direct: dict[str, set[str]] = {m.id: set() for m in g.methods}
    for u in g.identifiers:
        if u.kind == "write" and (u.decl is None or u.decl in file_decls):
            direct[u.enclosing_method].add(u.name)
    return _close_over_calls(g, direct)


def _close_over_calls(g: CodePropertyGraph, sets: dict[str, set[str]]) -> dict[str, set[str]]:
    edges: dict[str, set[str]] = {m.id: set() for m in g.methods}
    for c in g.calls:
        if c.callee is not None:
            edges[c.caller].add(c.callee)
    changed = True
    while changed:
        changed = False
        for mid, callees in edges.items():
            for callee in callees:
                extra = sets[callee] - sets[mid]
                if extra:
                    sets[mid] |= extra
                    changed = True
    return sets


def _impure_methods(g: CodePropertyGraph, impure_calls: set[str]) -> set[str]:
    flags: dict[str, set[str]] = {m.id: set() for m in g.methods}
    for m in g.methods:
        if any(m.by_reference):
            flags[m.id].add("ref")
    for c in g.calls:
        if c.kind == "stream" or c.name in impure_calls or c.name in ("scanf", "printf", "puts", "getchar", "putchar"):
            flags[c.caller].add("io")
    for mid, names in _global_writes(g).items():
        if names:
            flags[mid].add("global")
    flags = _close_over_calls(g, flags)
    return {mid for mid, f in flags.items() if f}


def _widen(lp: LoopScope, call: CallSite, mutated: set[str]) -> LineSpan:
    stmts = list(lp.body)
    pos = next((i for i, s in enumerate(stmts) if call.id in s.calls), None)
    if pos is None:
        return call.span
    own = stmts[pos]
    invariant_vars: set[str] = set()

    def invariant(s) -> bool:
        return not (s.reads & (mutated - invariant_vars)) and s.writes <= s.declares

    if not invariant(own):
        return call.span
    invariant_vars |= own.declares
    end = own.span.end_line
    for s in stmts[pos + 1:]:
        if not invariant(s):
            break
        invariant_vars |= s.declares
        end = s.span.end_line
    return LineSpan(call.span.start_line, max(end, call.span.end_line))


DETECTORS: dict[str, Callable[..., list[RuleMatch]]] = {
    "recursion_without_memoization": detect_recursion_without_memoization,
    "static_replaceable_container": detect_static_replaceable_container,
    "slow_library_calls": detect_slow_library_calls,
    "loop_invariant_calls": detect_loop_invariant_calls,
}


# --------------------------------------------------------------------------
# Rule sets and instantiation
# --------------------------------------------------------------------------


def load_rules(path: str | Path | None = None) -> RuleSet:
    """Load a rule set; the bundled default is used when ``path`` is None."""
    if path is None:
        raw = resources.files("perfprompt").joinpath("data/rules.json").read_text(encoding="utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise RuleConfigError(f"rule file is not valid JSON: {exc}") from exc
    return parse_rules(data)


def parse_rules(data: Mapping) -> RuleSet:
    if not isinstance(data, Mapping) or "rules" not in data:
        raise RuleConfigError("rule set needs a 'rules' list")
    seen: set[str] = set()
    rules = []
    for entry in data["rules"]:
        try:
            rule = RuleTemplatePair(
                rule_id=str(entry["rule_id"]),
                category=str(entry["category"]),
                template=str(entry["template"]),
                detector=str(entry["detector"]),
                params=dict(entry.get("params", {})),
            )
        except (KeyError, TypeError) as exc:
            raise RuleConfigError(f"malformed rule entry {entry!r}") from exc
        if rule.rule_id in seen:
            raise RuleConfigError(f"duplicate rule_id {rule.rule_id!r}")
        if rule.category not in CATEGORIES:
            raise RuleConfigError(f"rule {rule.rule_id}: unknown category {rule.category!r}")
        if rule.detector not in DETECTORS:
            raise RuleConfigError(f"rule {rule.rule_id}: unknown detector {rule.detector!r}")
        seen.add(rule.rule_id)
        rules.append(rule)
    return RuleSet(int(data.get("version", 1)), tuple(rules), str(data.get("entity_format", DEFAULT_ENTITY_FORMAT)))


def format_entity(entity: Entity, entity_format: str = DEFAULT_ENTITY_FORMAT) -> str:
    return entity_format.format(kind=entity.kind, name=entity.name, start=entity.span.start_line,
                                end=entity.span.end_line)


def instantiate(rule: RuleTemplatePair, match: RuleMatch,
                entity_format: str = DEFAULT_ENTITY_FORMAT) -> BottleneckDiagnosis:
    """Substitute a match's entities into the rule template.

    Supported placeholders: ``entities`` (the formatted entity list),
    ``names``, ``count``, ``rule_id``, ``category``.
    """
    if not match.entities:
        raise ValueError("cannot instantiate an empty match")
    entities = tuple(sorted(match.entities, key=lambda e: (e.span, e.name)))
    values = {
        "entities": ", ".join(format_entity(e, entity_format) for e in entities),
        "names": ", ".join(e.name for e in entities),
        "count": str(len(entities)),
        "rule_id": rule.rule_id,
        "category": rule.category,
    }
    fields = {f for _, f, _, _ in string.Formatter().parse(rule.template) if f is not None}
    missing = fields - values.keys()
    if missing:
        raise MissingPlaceholder(f"template for {rule.rule_id} uses unknown placeholder(s) {sorted(missing)}")
    return BottleneckDiagnosis(rule.rule_id, rule.category, rule.template.format(**values), entities)


def run_rule(rule: RuleTemplatePair, g: CodePropertyGraph) -> list[RuleMatch]:
    return DETECTORS[rule.detector](g, rule_id=rule.rule_id, **rule.params)


def diagnose_graph(g: CodePropertyGraph, rules: RuleSet) -> list[BottleneckDiagnosis]:
    out = []
    for rule in sorted(rules.rules, key=lambda r: r.rule_id):
        matches = run_rule(rule, g)
        if matches:
            merged = RuleMatch(rule.rule_id, tuple(e for m in matches for e in m.entities))
            out.append(instantiate(rule, merged, rules.entity_format))
    return out


def advise(src: SourceUnit | str, rules: RuleSet | None = None, strict: bool = True) -> list[BottleneckDiagnosis]:
    """Diagnose ``src``: one diagnosis per firing rule, ordered by rule id."""
    rules = rules or load_rules()
    if isinstance(src, str):
        src = SourceUnit(src)
    return diagnose_graph(build_cpg(src, strict=strict), rules)


def check_resolved(rule_id: str, optimized_src: SourceUnit | str, rules: RuleSet | None = None) -> bool:
    """True when ``rule_id`` no longer fires on ``optimized_src``."""
    rules = rules or load_rules()
    if isinstance(optimized_src, str):
        optimized_src = SourceUnit(optimized_src)
    return not run_rule(rules.rule(rule_id), build_cpg(optimized_src))


@dataclass
class Histogram:
    counts: dict[str, int]
    skipped: list[tuple[str, str]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def bottleneck_histogram(corpus: Iterable[SourceUnit], rules: RuleSet | None = None,
                         workers: int = 1) -> Histogram:
    """Count rule matches per category over a corpus.

    Units that fail to parse are skipped and listed in ``skipped`` as
    ``(label, error message)``.
    """
    rules = rules or load_rules()
    units = list(corpus)

    def count(unit: SourceUnit) -> Counter | ParseError:
        try:
            g = build_cpg(unit)
        except ParseError as exc:
            return exc
        c: Counter = Counter()
        for rule in rules.rules:
            c[rule.category] += sum(len(m.entities) for m in run_rule(rule, g))
        return c

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(count, units))
    else:
        results = [count(u) for u in units]
    hist = Histogram({cat: 0 for cat in CATEGORIES})
    for i, (unit, res) in enumerate(zip(units, results)):
        if isinstance(res, ParseError):
            hist.skipped.append((unit.path or f"#{i}", str(res)))
            continue
        for cat, n in res.items():
            hist.counts[cat] += n
    return hist
