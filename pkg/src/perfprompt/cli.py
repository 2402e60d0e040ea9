"""Command-line entry point: ``perfprompt <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path
from typing import Sequence

from perfprompt.advisor import advise, bottleneck_histogram, check_resolved, load_rules
from perfprompt.composer import MODES, compose
from perfprompt.config import PipelineConfig, load_config
from perfprompt.cpg import SourceUnit, build_cpg, dump_graph
from perfprompt.curator import ProblemSample, curate
from perfprompt.errors import ConfigError, PerfPromptError
from perfprompt.evaluator import (
    CompilerConfig,
    aggregate,
    best_at_k,
    evaluate_tree,
    load_problems,
    summary_table,
)
from perfprompt.gateway import Gateway, HttpGateway, MockGateway
from perfprompt.pipeline import PipelineContext, run_e2e, write_outcomes
from perfprompt.retriever import (
    analysis_from_diagnoses,
    analyze_performance,
    load_or_build_index,
    retrieve,
)
from perfprompt.roi_store import build_db, load_db, load_pairs


def _read_source(path: str) -> SourceUnit:
    if path == "-":
        return SourceUnit.from_stream(sys.stdin)
    return SourceUnit.from_file(path)


def _gateway(cfg: PipelineConfig) -> Gateway:
    if cfg.fixtures is not None:
        return MockGateway(cfg.fixtures)
    if cfg.gateway.base_url:
        g = cfg.gateway
        return HttpGateway(g.base_url, g.model_name, g.token_env, g.timeout, g.max_in_flight)
    raise ConfigError("no gateway configured: pass --mock <dir> or set gateway.base_url")


def _config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config)
    overrides = {
        "fixtures": getattr(args, "mock", None),
        "rules": getattr(args, "rules", None),
        "roi_db": getattr(args, "db", None),
        "problems": getattr(args, "problems", None),
        "k": getattr(args, "k", None),
        "top_k": getattr(args, "top_k", None),
        "reps": getattr(args, "reps", None),
        "timeout": getattr(args, "timeout", None),
        "workers": getattr(args, "workers", None),
    }
    if getattr(args, "from_advisor", False):
        overrides["analysis"] = "advisor"
    return cfg.with_overrides(**overrides).validate()


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_distill(args: argparse.Namespace) -> int:
    cfg = _config(args)
    db = build_db(load_pairs(args.pairs), _gateway(cfg), args.out, cfg.workers,
                  marker=args.marker or None, model_name=cfg.gateway.model_name)
    print(f"{len(db)} triplets in {args.out}; {len(db.errors)} errors")
    for err in db.errors:
        print(json.dumps({"error": str(err)}), file=sys.stderr)
    return 0


def cmd_advise(args: argparse.Namespace) -> int:
    cfg = _config(args)
    src = _read_source(args.code)
    diagnoses = advise(src, load_rules(cfg.rules), strict=not args.partial)
    for d in diagnoses:
        print(json.dumps(d.to_record()) if args.format == "jsonl" else d.text)
    return 0


def cmd_resolved(args: argparse.Namespace) -> int:
    cfg = _config(args)
    resolved = check_resolved(args.rule, _read_source(args.code), load_rules(cfg.rules))
    print(json.dumps({"rule_id": args.rule, "resolved": resolved}))
    return 0


def _analysis(src: SourceUnit, cfg: PipelineConfig):
    if cfg.analysis == "advisor":
        return analysis_from_diagnoses(advise(src, load_rules(cfg.rules), strict=False), src.path)
    return analyze_performance(src, _gateway(cfg), cfg.gateway.model_name, cfg.temperature)


def _retrieved(src: SourceUnit, cfg: PipelineConfig, k: int):
    if cfg.roi_db is None:
        raise ConfigError("--db is required")
    db = load_db(cfg.roi_db)
    index = load_or_build_index(db, cfg.roi_db, cfg.embedding_dim) if len(db) else None
    return retrieve(_analysis(src, cfg), db, k, index)


def cmd_retrieve(args: argparse.Namespace) -> int:
    cfg = _config(args)
    result = _retrieved(_read_source(args.code), cfg, args.n)
    for t, score in result.ranked:
        print(json.dumps({"pair_id": t.pair.pair_id, "score": round(score, 6)}))
    return 0


def cmd_prompt(args: argparse.Namespace) -> int:
    cfg = _config(args)
    src = _read_source(args.code)
    kind, _ = MODES[args.mode]
    diagnoses = advise(src, load_rules(cfg.rules), strict=False) if kind in ("combined", "symbolic") else []
    triplets = []
    if kind in ("combined", "retrieval") and cfg.roi_db is not None:
        triplets = _retrieved(src, cfg, cfg.top_k).triplets
    sys.stdout.write(compose(args.mode, src, diagnoses, triplets).text + "\n")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _config(args)
    compiler = CompilerConfig(cfg.compiler, cfg.compiler_flags)
    results = evaluate_tree(args.problems, args.candidates, cfg.k, compiler, cfg.reps, cfg.timeout)
    if not results:
        raise ValueError("no problems evaluated")
    for records in results.values():
        for r in records:
            print(r.to_json())
    rows = [("best@1", aggregate([rs[0] for rs in results.values()]))]
    if cfg.k > 1:
        rows.append((f"best@{cfg.k}", aggregate([best_at_k(rs) for rs in results.values()])))
    print(summary_table(rows))
    return 0


def cmd_curate(args: argparse.Namespace) -> int:
    cfg = _config(args)
    problems = load_problems(args.problems)
    samples = [ProblemSample(p.problem_id, stem, src, tuple(p.cases))
               for p in problems for stem, src in p.sources.items()]
    kept, report = curate(samples, cfg.cap if args.cap is None else args.cap, cfg.ngram_n,
                          cfg.similarity_threshold, cfg.max_keep)
    print(report.table())
    if args.out:
        _write_curated(Path(args.problems), Path(args.out), kept)
    return 0


def _write_curated(src_root: Path, out_root: Path, kept: Sequence[ProblemSample]) -> None:
    for s in kept:
        pdir = out_root / s.problem_id
        (pdir / "src").mkdir(parents=True, exist_ok=True)
        shutil.copyfile(src_root / s.problem_id / "src" / f"{s.sample_id}.cpp", pdir / "src" / f"{s.sample_id}.cpp")
        origins = {}
        for case in s.cases:
            (pdir / f"input.{case.case_id}.txt").write_text(case.input, encoding="utf-8")
            (pdir / f"output.{case.case_id}.txt").write_text(case.expected_output, encoding="utf-8")
            if case.origin != "official":
                origins[case.case_id] = case.origin
        if origins:
            (pdir / "case_origins.json").write_text(json.dumps(origins, sort_keys=True), encoding="utf-8")


def cmd_histogram(args: argparse.Namespace) -> int:
    cfg = _config(args)
    paths = sorted(Path(args.corpus).rglob("*.cpp"))
    hist = bottleneck_histogram((SourceUnit.from_file(p) for p in paths), load_rules(cfg.rules), cfg.workers)
    for cat, n in hist.counts.items():
        print(f"{cat}\t{n}")
    for label, msg in hist.skipped:
        print(json.dumps({"skipped": label, "error": msg}), file=sys.stderr)
    return 0


def cmd_e2e(args: argparse.Namespace) -> int:
    cfg = _config(args)
    result = run_e2e(PipelineContext.create(cfg, _gateway(cfg)))
    if args.records:
        write_outcomes(result, args.records)
    for o in result.failures:
        print(json.dumps({"error": o.error, "problem": o.key}), file=sys.stderr)
    print(result.summary_text())
    return 1 if result.gateway_failed or not result.summaries() else 0


def cmd_cpg(args: argparse.Namespace) -> int:
    dump_graph(build_cpg(_read_source(args.code), strict=not args.partial))
    return 0


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline config")
    common.add_argument("--rules", help="rule/template file (default: bundled rules)")

    gw = argparse.ArgumentParser(add_help=False)
    gw.add_argument("--mock", metavar="DIR", help="replay responses from a fixture directory")

    timing = argparse.ArgumentParser(add_help=False)
    timing.add_argument("--reps", type=int)
    timing.add_argument("--timeout", type=float, help="per-run timeout in seconds")

    parser = argparse.ArgumentParser(prog="perfprompt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distill", parents=[common, gw], help="build the ROI database from slow/fast pairs")
    p.add_argument("--pairs", required=True, help="<problem>/<pair>/{slow,fast}.cpp tree")
    p.add_argument("--out", required=True, help="JSONL database to create or extend")
    p.add_argument("--marker", default="</think>", help="reasoning terminator ('' to disable)")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("advise", parents=[common], help="print bottleneck diagnoses")
    p.add_argument("code", help="C++ file, or - for stdin")
    p.add_argument("--format", choices=("text", "jsonl"), default="text")
    p.add_argument("--partial", action="store_true", help="skip unparsable regions instead of failing")
    p.set_defaults(func=cmd_advise)

    p = sub.add_parser("resolved", parents=[common], help="check whether a rule no longer fires")
    p.add_argument("rule")
    p.add_argument("code")
    p.set_defaults(func=cmd_resolved)

    p = sub.add_parser("retrieve", parents=[common, gw], help="rank ROI examples for a program")
    p.add_argument("code")
    p.add_argument("--db", required=True)
    p.add_argument("-n", type=int, default=2, help="number of results")
    p.add_argument("--from-advisor", action="store_true", help="derive the analysis from diagnoses")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("prompt", parents=[common, gw], help="compose an optimization prompt")
    p.add_argument("code")
    p.add_argument("--mode", choices=sorted(MODES), default="eco")
    p.add_argument("--db")
    p.add_argument("--top-k", type=int)
    p.add_argument("--from-advisor", action="store_true")
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("eval", parents=[common, timing], help="score candidate programs")
    p.add_argument("--problems", required=True)
    p.add_argument("--candidates", required=True, help="<problem>/<src>/<i>.cpp tree")
    p.add_argument("-k", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curate", parents=[common], help="cap samples and dedup test cases")
    p.add_argument("--problems", required=True)
    p.add_argument("--out", help="write the curated problem tree here")
    p.add_argument("--cap", type=int)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("histogram", parents=[common], help="count rule matches per category")
    p.add_argument("corpus", help="directory searched recursively for .cpp files")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("e2e", parents=[common, gw, timing], help="run the full pipeline")
    p.add_argument("--problems")
    p.add_argument("--db")
    p.add_argument("-k", type=int)
    p.add_argument("--top-k", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--from-advisor", action="store_true")
    p.add_argument("--records", help="write per-problem JSONL records here")
    p.set_defaults(func=cmd_e2e)

    p = sub.add_parser("cpg", help="dump the code property graph as TSV")
    p.add_argument("code")
    p.add_argument("--partial", action="store_true")
    p.set_defaults(func=cmd_cpg, config=None)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PerfPromptError, OSError, ValueError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
