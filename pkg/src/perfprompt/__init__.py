"""Performance-aware prompting for C++ optimization.

Static bottleneck diagnoses and retrieved optimization examples are combined
into prompts; generated candidates are compiled, tested and timed.
"""
from perfprompt.advisor import BottleneckDiagnosis, advise, bottleneck_histogram, check_resolved, load_rules
from perfprompt.composer import PromptBundle, compose
from perfprompt.cpg import CodePropertyGraph, SourceUnit, build_cpg
from perfprompt.evaluator import EvalRecord, MetricsSummary, aggregate, best_at_k, opt_flag, speedup
from perfprompt.retriever import retrieve
from perfprompt.roi_store import RoiDatabase, RoiTriplet, load_db

__version__ = "0.1.0"

__all__ = [
    "BottleneckDiagnosis", "CodePropertyGraph", "EvalRecord", "MetricsSummary", "PromptBundle",
    "RoiDatabase", "RoiTriplet", "SourceUnit", "advise", "aggregate", "best_at_k", "bottleneck_histogram",
    "build_cpg", "check_resolved", "compose", "load_db", "load_rules", "opt_flag", "retrieve", "speedup",
]
