"""Judge harness: compile, run against test cases, time, and score candidates.

Timing uses the median wall-clock time of several runs per case.  All timing
runs in the process share one lock so that two measurements never overlap.
"""
from __future__ import annotations

import json
import math
import shlex
import shutil
import statistics
import subprocess
import tempfile
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from perfprompt.cpg import SourceUnit
from perfprompt.errors import CompileError, NonpositiveTime

OPT_THRESHOLD = 0.1
DEFAULT_REPS = 5
DEFAULT_TIMEOUT = 2.0
DEFAULT_OUTPUT_LIMIT = 64 * 1024 * 1024
TIMING_LOCK = threading.Lock()


@dataclass(frozen=True)
class CompilerConfig:
    command: tuple[str, ...] = ("g++",)
    flags: tuple[str, ...] = ("-std=c++17", "-O3")
    timeout: float = 120.0

    def argv(self, source: Path, output: Path) -> list[str]:
        return [*self.command, *self.flags, str(source), "-o", str(output)]


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest test class

    case_id: str
    input: str
    expected_output: str
    origin: str = "official"

    def __post_init__(self) -> None:
        if self.origin not in ("official", "generated"):
            raise ValueError(f"origin must be official or generated, got {self.origin!r}")


@dataclass(frozen=True)
class RunResult:
    case_id: str
    passed: bool
    runtime: float
    exit_status: int | None
    status: str = "ok"  # ok | wrong_answer | timeout | crash | output_limit


@dataclass
class Binary:
    path: Path
    command: list[str]
    _workdir: Path | None = None

    def cleanup(self) -> None:
        if self._workdir is not None:
            shutil.rmtree(self._workdir, ignore_errors=True)
            self._workdir = None

    def __enter__(self) -> Binary:
        return self

    def __exit__(self, *exc: object) -> None:
        self.cleanup()


@dataclass
class EvalRecord:
    candidate_id: str
    correct: bool
    t_original: float
    t_new: float
    sp: float
    opt: bool
    problem_id: str = ""
    note: str = ""
    compile_command: str = ""

    def to_json(self) -> str:
        d = asdict(self)
        for key in ("t_original", "t_new"):
            if not math.isfinite(d[key]):
                d[key] = None
        return json.dumps(d, sort_keys=True)


@dataclass(frozen=True)
class MetricsSummary:
    acc_percent: float
    mean_sp: float
    opt_percent: float
    acc_std: float = 0.0
    sp_std: float = 0.0
    opt_std: float = 0.0
    n_problems: int = 0
    n_trials: int = 1


# --------------------------------------------------------------------------
# Compile and run
# --------------------------------------------------------------------------


def compile_source(src: SourceUnit | str, config: CompilerConfig = CompilerConfig()) -> Binary:
    """Compile ``src`` into a fresh temporary directory."""
    text = src.text if isinstance(src, SourceUnit) else src
    workdir = Path(tempfile.mkdtemp(prefix="perfprompt-"))
    source, output = workdir / "main.cpp", workdir / "main"
    source.write_text(text, encoding="utf-8")
    argv = config.argv(source, output)
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=config.timeout)
    except subprocess.TimeoutExpired as exc:
        shutil.rmtree(workdir, ignore_errors=True)
        raise CompileError("compiler timed out", argv) from exc
    if proc.returncode != 0 or not output.exists():
        shutil.rmtree(workdir, ignore_errors=True)
        raise CompileError(proc.stderr, argv)
    return Binary(output, argv, workdir)


def normalize_output(text: str) -> str:
    """Drop trailing whitespace on each line and trailing blank lines."""
    return "\n".join(line.rstrip() for line in text.splitlines()).rstrip("\n")


def _run_once(binary: Binary, case: TestCase, timeout: float, output_limit: int) -> tuple[RunResult, str]:
    with tempfile.TemporaryFile("w+b") as stdin, tempfile.TemporaryFile("w+b") as stdout:
        stdin.write(case.input.encode("utf-8"))
        stdin.seek(0)
        start = time.perf_counter()
        try:
            proc = subprocess.run([str(binary.path)], stdin=stdin, stdout=stdout, stderr=subprocess.DEVNULL,
                                  timeout=timeout)
        except subprocess.TimeoutExpired:
            return RunResult(case.case_id, False, timeout, None, "timeout"), ""
        elapsed = max(time.perf_counter() - start, 1e-9)
        if stdout.tell() > output_limit:
            return RunResult(case.case_id, False, elapsed, proc.returncode, "output_limit"), ""
        stdout.seek(0)
        out = stdout.read().decode("utf-8", errors="replace")
    if proc.returncode != 0:
        return RunResult(case.case_id, False, elapsed, proc.returncode, "crash"), out
    passed = normalize_output(out) == normalize_output(case.expected_output)
    return RunResult(case.case_id, passed, elapsed, 0, "ok" if passed else "wrong_answer"), out


def run_case(binary: Binary, case: TestCase, reps: int = DEFAULT_REPS, timeout: float = DEFAULT_TIMEOUT,
             output_limit: int = DEFAULT_OUTPUT_LIMIT) -> RunResult:
    """Check ``case`` and, if it passes, report the median of ``reps`` timings."""
    if reps < 3 or reps % 2 == 0:
        raise ValueError("reps must be odd and at least 3")
    with TIMING_LOCK:
        first, _ = _run_once(binary, case, timeout, output_limit)
        if not first.passed:
            return first
        times = [first.runtime]
        for _ in range(reps - 1):
            res, _ = _run_once(binary, case, timeout, output_limit)
            if not res.passed:
                return res
            times.append(res.runtime)
    return RunResult(case.case_id, True, statistics.median(times), 0, "ok")


def run_cases(binary: Binary, cases: Sequence[TestCase], reps: int = DEFAULT_REPS,
              timeout: float = DEFAULT_TIMEOUT, stop_on_failure: bool = True) -> list[RunResult]:
    results = []
    for case in cases:
        res = run_case(binary, case, reps, timeout)
        results.append(res)
        if stop_on_failure and not res.passed:
            break
    return results


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------


def accuracy(results: Sequence[RunResult]) -> bool:
    """True iff every case passed."""
    if not results:
        raise ValueError("accuracy needs at least one result")
    return all(r.passed for r in results)


def _check_times(t_o: float, t_n: float) -> None:
    if not t_o > 0 or not t_n > 0:
        raise NonpositiveTime(f"runtimes must be positive, got t_o={t_o}, t_n={t_n}")


def speedup(t_o: float, t_n: float, correct: bool) -> float:
    _check_times(t_o, t_n)
    if correct and t_n < t_o:
        return t_o / t_n
    return 1.0


def opt_flag(t_o: float, t_n: float, correct: bool) -> bool:
    _check_times(t_o, t_n)
    return bool(correct and (t_o - t_n) > OPT_THRESHOLD * t_o)


def make_record(candidate_id: str, t_original: float, t_new: float, correct: bool,
                problem_id: str = "", note: str = "") -> EvalRecord:
    return EvalRecord(candidate_id, correct, t_original, t_new, speedup(t_original, t_new, correct),
                      opt_flag(t_original, t_new, correct), problem_id, note)


def best_at_k(records: Sequence[EvalRecord]) -> EvalRecord:
    """Highest speedup; ties prefer correct records, then the lowest candidate id."""
    if not records:
        raise ValueError("best_at_k needs at least one record")
    return min(records, key=lambda r: (-r.sp, not r.correct, _id_order(r.candidate_id)))


def _id_order(candidate_id: str) -> tuple[int, int, str]:
    return (0, int(candidate_id), "") if candidate_id.isdigit() else (1, 0, candidate_id)


def _summary_of(records: Sequence[EvalRecord]) -> tuple[float, float, float]:
    n = len(records)
    return (100.0 * sum(r.correct for r in records) / n,
            sum(r.sp for r in records) / n,
            100.0 * sum(r.opt for r in records) / n)


def aggregate(per_problem_best: Sequence[EvalRecord],
              trials: Sequence[Sequence[EvalRecord]] | None = None) -> MetricsSummary:
    """Headline metrics plus population standard deviations across trials."""
    if not per_problem_best:
        raise ValueError("aggregate needs at least one record")
    acc, sp, opt = _summary_of(per_problem_best)
    trial_stats = [_summary_of(t) for t in (trials or []) if t]
    if len(trial_stats) > 1:
        acc_std, sp_std, opt_std = (statistics.pstdev(col) for col in zip(*trial_stats))
    else:
        acc_std = sp_std = opt_std = 0.0
    return MetricsSummary(acc, sp, opt, acc_std, sp_std, opt_std, len(per_problem_best), max(1, len(trial_stats)))


# --------------------------------------------------------------------------
# Problem directories
# --------------------------------------------------------------------------


@dataclass
class Problem:
    problem_id: str
    cases: list[TestCase]
    sources: dict[str, SourceUnit] = field(default_factory=dict)


def _case_number(path: Path) -> int:
    return int(path.name.split(".")[1])


def load_problem(directory: str | Path) -> Problem:
    """Read ``input.N.txt``/``output.N.txt`` pairs and ``src/*.cpp``.

    An optional ``case_origins.json`` maps case numbers to ``"generated"``;
    unlisted cases are official.
    """
    directory = Path(directory)
    origins_file = directory / "case_origins.json"
    origins = json.loads(origins_file.read_text()) if origins_file.exists() else {}
    cases = []
    for inp in sorted(directory.glob("input.*.txt"), key=_case_number):
        num = _case_number(inp)
        out = directory / f"output.{num}.txt"
        if not out.exists():
            continue
        cases.append(TestCase(str(num), inp.read_text(encoding="utf-8"), out.read_text(encoding="utf-8"),
                              origins.get(str(num), "official")))
    sources = {p.stem: SourceUnit.from_file(p) for p in sorted((directory / "src").glob("*.cpp"))}
    return Problem(directory.name, cases, sources)


def load_problems(root: str | Path) -> list[Problem]:
    root = Path(root)
    return [load_problem(d) for d in sorted(root.iterdir()) if d.is_dir() and any(d.glob("input.*.txt"))]


@dataclass
class Baseline:
    """Timings of the original program on the cases it passes."""

    passing: list[TestCase]
    results: list[RunResult]

    @property
    def total(self) -> float:
        return sum(r.runtime for r in self.results)


def measure_original(src: SourceUnit, cases: Sequence[TestCase], config: CompilerConfig = CompilerConfig(),
                     reps: int = DEFAULT_REPS, timeout: float = DEFAULT_TIMEOUT) -> Baseline:
    with compile_source(src, config) as binary:
        results = run_cases(binary, cases, reps, timeout, stop_on_failure=False)
    passing = [c for c, r in zip(cases, results) if r.passed]
    return Baseline(passing, [r for r in results if r.passed])


def evaluate_candidate(candidate_id: str, src: SourceUnit | str | None, baseline: Baseline,
                       config: CompilerConfig = CompilerConfig(), reps: int = DEFAULT_REPS,
                       timeout: float = DEFAULT_TIMEOUT, problem_id: str = "") -> EvalRecord:
    """Score one candidate against the original's passing cases.

    ``src=None`` stands for a model response with no extractable code; such a
    candidate, like one that fails to compile, is recorded as incorrect.
    """
    if not baseline.passing:
        raise ValueError(f"original program of {problem_id or 'problem'} passes no test case")
    t_o = baseline.total
    if src is None:
        return make_record(candidate_id, t_o, math.inf, False, problem_id, "no code block")
    try:
        binary = compile_source(src, config)
    except CompileError as exc:
        record = make_record(candidate_id, t_o, math.inf, False, problem_id, "compile error: " + exc.diagnostics[:200])
        record.compile_command = shlex.join(exc.command)
        return record
    with binary:
        results = run_cases(binary, baseline.passing, reps, timeout)
    correct = len(results) == len(baseline.passing) and accuracy(results)
    t_n = sum(r.runtime for r in results) if correct else math.inf
    note = "" if correct else f"{results[-1].status} on case {results[-1].case_id}"
    record = make_record(candidate_id, t_o, t_n, correct, problem_id, note)
    record.compile_command = shlex.join(binary.command)
    return record


def evaluate_tree(problems_root: str | Path, candidates_root: str | Path, k: int = 1,
                  config: CompilerConfig = CompilerConfig(), reps: int = DEFAULT_REPS,
                  timeout: float = DEFAULT_TIMEOUT) -> dict[str, list[EvalRecord]]:
    """Evaluate ``<candidates>/<problem>/<src_stem>/<i>.cpp`` for ``i < k``.

    Returns candidate records keyed by ``"<problem>/<src_stem>"``; a missing
    candidate file counts as a response without code.
    """
    out: dict[str, list[EvalRecord]] = {}
    for problem in load_problems(problems_root):
        for stem, src in problem.sources.items():
            key = f"{problem.problem_id}/{stem}"
            baseline = measure_original(src, problem.cases, config, reps, timeout)
            records = []
            for i in range(k):
                path = Path(candidates_root) / problem.problem_id / stem / f"{i}.cpp"
                cand = SourceUnit.from_file(path) if path.exists() and path.read_text().strip() else None
                records.append(evaluate_candidate(str(i), cand, baseline, config, reps, timeout, key))
            out[key] = records
    return out


def summary_table(rows: Iterable[tuple[str, MetricsSummary]]) -> str:
    lines = [f"{'setting':<12} {'ACC%':>7} {'SP':>7} {'OPT%':>7} {'n':>4}"]
    for name, s in rows:
        lines.append(f"{name:<12} {s.acc_percent:7.1f} {s.mean_sp:7.2f} {s.opt_percent:7.1f} {s.n_problems:>4}")
    return "\n".join(lines)
