"""End-to-end optimization run: advise, retrieve, compose, generate, evaluate."""
from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from perfprompt.advisor import RuleSet, advise, load_rules
from perfprompt.composer import compose
from perfprompt.config import PipelineConfig
from perfprompt.cpg import SourceUnit
from perfprompt.errors import GatewayError, ParseError, PerfPromptError
from perfprompt.evaluator import (
    CompilerConfig,
    EvalRecord,
    MetricsSummary,
    Problem,
    aggregate,
    best_at_k,
    evaluate_candidate,
    load_problems,
    measure_original,
    summary_table,
)
from perfprompt.gateway import Gateway, GenerationRequest, estimate_tokens, truncate_to_budget
from perfprompt.retriever import (
    RoiIndex,
    analysis_from_diagnoses,
    analyze_performance,
    load_or_build_index,
    retrieve,
)
from perfprompt.roi_store import RoiDatabase, load_db

MARKER = "Optimized Code"
_FENCE = re.compile(r"^(```|~~~)[^\n`]*\n(.*?)^\1[ \t]*$", re.MULTILINE | re.DOTALL)


def extract_code(response: str) -> str | None:
    """First fenced code block after the last "Optimized Code" marker.

    The prompt itself ends with the marker, so a response that does not
    repeat it is searched from the start.
    """
    pos = response.rfind(MARKER)
    tail = response[pos + len(MARKER):] if pos != -1 else response
    m = _FENCE.search(tail)
    if m is None or not m.group(2).strip():
        return None
    return m.group(2)


@dataclass
class PipelineContext:
    config: PipelineConfig
    gateway: Gateway
    rules: RuleSet
    db: RoiDatabase | None = None
    index: RoiIndex | None = None

    @classmethod
    def create(cls, config: PipelineConfig, gateway: Gateway) -> PipelineContext:
        rules = load_rules(config.rules)
        db = index = None
        if config.roi_db is not None:
            db = load_db(config.roi_db)
            if len(db):
                index = load_or_build_index(db, config.roi_db, config.embedding_dim)
        return cls(config, gateway, rules, db, index)

    @property
    def compiler(self) -> CompilerConfig:
        return CompilerConfig(self.config.compiler, self.config.compiler_flags)


def build_prompt(src: SourceUnit, ctx: PipelineContext) -> str:
    """The combined prompt for ``src``, truncated to the input budget."""
    cfg = ctx.config
    try:
        diagnoses = advise(src, ctx.rules, strict=False)
    except ParseError:
        diagnoses = []
    triplets = []
    if ctx.db is not None and len(ctx.db):
        if cfg.analysis == "model":
            analysis = analyze_performance(src, ctx.gateway, cfg.gateway.model_name, cfg.temperature)
        else:
            analysis = analysis_from_diagnoses(diagnoses, src.path)
        triplets = retrieve(analysis, ctx.db, cfg.top_k, ctx.index).triplets
    prompt = compose("eco", src, diagnoses, triplets).text
    if estimate_tokens(prompt) > cfg.max_input_tokens:
        prompt = truncate_to_budget(prompt, cfg.max_input_tokens)
    return prompt


def generate_candidates(prompt: str, ctx: PipelineContext) -> list[str | None]:
    cfg = ctx.config
    out = []
    for i in range(cfg.k):
        req = GenerationRequest(prompt, cfg.gateway.model_name, cfg.temperature, cfg.max_output_tokens, i)
        out.append(extract_code(ctx.gateway.complete(req).text))
    return out


@dataclass
class ProblemOutcome:
    key: str
    records: list[EvalRecord] = field(default_factory=list)
    error: str | None = None
    gateway_failure: bool = False

    def to_json(self) -> str:
        return json.dumps({"key": self.key, "error": self.error,
                           "records": [json.loads(r.to_json()) for r in self.records]}, sort_keys=True)


@dataclass
class E2EResult:
    outcomes: list[ProblemOutcome]
    k: int

    @property
    def failures(self) -> list[ProblemOutcome]:
        return [o for o in self.outcomes if o.error is not None]

    @property
    def gateway_failed(self) -> bool:
        return any(o.gateway_failure for o in self.outcomes)

    def summaries(self) -> list[tuple[str, MetricsSummary]]:
        done = [o for o in self.outcomes if o.error is None]
        if not done:
            return []
        rows = [("best@1", aggregate([o.records[0] for o in done]))]
        if self.k > 1:
            rows.append((f"best@{self.k}", aggregate([best_at_k(o.records) for o in done])))
        return rows

    def summary_text(self) -> str:
        rows = self.summaries()
        lines = [summary_table(rows)] if rows else ["no problem completed"]
        for o in self.failures:
            lines.append(f"FAILED {o.key}: {o.error}")
        return "\n".join(lines)


def run_source(problem: Problem, stem: str, ctx: PipelineContext) -> ProblemOutcome:
    cfg = ctx.config
    key = f"{problem.problem_id}/{stem}"
    src = problem.sources[stem]
    try:
        candidates = generate_candidates(build_prompt(src, ctx), ctx)
    except GatewayError as exc:
        return ProblemOutcome(key, error=f"{type(exc).__name__}: {exc}", gateway_failure=True)
    except PerfPromptError as exc:
        return ProblemOutcome(key, error=f"{type(exc).__name__}: {exc}")
    try:
        baseline = measure_original(src, problem.cases, ctx.compiler, cfg.reps, cfg.timeout)
        records = [evaluate_candidate(str(i), c, baseline, ctx.compiler, cfg.reps, cfg.timeout, key)
                   for i, c in enumerate(candidates)]
    except (PerfPromptError, ValueError) as exc:
        return ProblemOutcome(key, error=f"{type(exc).__name__}: {exc}")
    return ProblemOutcome(key, records)


def run_e2e(ctx: PipelineContext, problems: Sequence[Problem] | None = None) -> E2EResult:
    """Run every source of every problem; one failing problem never stops the rest."""
    if problems is None:
        if ctx.config.problems is None:
            raise ValueError("no problems directory configured")
        problems = load_problems(ctx.config.problems)
    jobs = [(p, stem) for p in problems for stem in p.sources]
    with ThreadPoolExecutor(max_workers=ctx.config.workers) as pool:
        outcomes = list(pool.map(lambda job: run_source(job[0], job[1], ctx), jobs))
    return E2EResult(outcomes, ctx.config.k)


def write_outcomes(result: E2EResult, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for o in result.outcomes:
            fh.write(o.to_json() + "\n")
