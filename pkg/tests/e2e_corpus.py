"""A three-problem corpus whose fast solutions do exactly half the work.

Each slow program runs its pseudo-random kernel twice (``REPS = 2``) and
prints the second result; the fast program runs it once.  A volatile sink
keeps the compiler from discarding the redundant pass, so the expected
speedup is 2 by construction.
"""
from __future__ import annotations

import subprocess
from pathlib import Path

from perfprompt.cpg import SourceUnit
from perfprompt.evaluator import CompilerConfig, compile_source
from perfprompt.gateway import write_fixture
from perfprompt.pipeline import PipelineContext, build_prompt
from perfprompt.retriever import analysis_prompt

N_STEPS = 150_000_000

KERNELS = {
    "lcg": "x = x * 6364136223846793005ULL + 1442695040888963407ULL;\n            acc ^= x >> 17;",
    "xorshift": "x ^= x << 13;\n            x ^= x >> 7;\n            x ^= x << 17;\n            acc += x & 1023;",
    "mix": "x = (x ^ (x >> 31)) * 0x9E3779B97F4A7C15ULL + i;\n            acc ^= x;",
}

PROGRAM = """#include <cstdio>

int main() {{
    unsigned long long n, seed;
    if (scanf("%llu %llu", &n, &seed) != 2) return 1;
    unsigned long long result = 0;
    volatile unsigned long long sink;
    for (int rep = 0; rep < {reps}; rep++) {{
        volatile unsigned long long start = seed;
        unsigned long long x = start, acc = 0;
        for (unsigned long long i = 0; i < n; i++) {{
            {kernel}
        }}
        sink = acc;
        result = acc;
    }}
    printf("%llu\\n", result);
    return 0;
}}
"""


def program(kernel: str, reps: int) -> str:
    return PROGRAM.format(kernel=KERNELS[kernel], reps=reps)


def make_corpus(root: Path, n_steps: int = N_STEPS) -> dict[str, tuple[str, str]]:
    """Write ``<root>/<kernel>/{input.1.txt, output.1.txt, src/orig.cpp}``.

    Expected outputs come from running the compiled fast program.  Returns
    ``{problem_id: (slow_text, fast_text)}``.
    """
    out = {}
    for seed, kernel in enumerate(KERNELS, 3):
        slow, fast = program(kernel, 2), program(kernel, 1)
        pdir = root / kernel
        (pdir / "src").mkdir(parents=True)
        (pdir / "src" / "orig.cpp").write_text(slow)
        stdin = f"{n_steps} {seed}\n"
        (pdir / "input.1.txt").write_text(stdin)
        with compile_source(fast, CompilerConfig()) as binary:
            proc = subprocess.run([str(binary.path)], input=stdin, capture_output=True, text=True, check=True)
        (pdir / "output.1.txt").write_text(proc.stdout)
        out[kernel] = (slow, fast)
    return out


ANALYSIS_TEXT = "The program repeats the same random-number loop several times; redundant recomputation dominates."


def write_fixtures(ctx: PipelineContext, root: Path, corpus: dict[str, tuple[str, str]], fixture_dir: Path,
                   responses: dict[str, list[str]] | None = None) -> None:
    """Record mock responses for every prompt the pipeline will send.

    By default sample 0 answers with the fast program in a fenced block;
    ``responses`` may give explicit per-sample texts per problem.
    """
    for problem_id, (_, fast) in corpus.items():
        src = SourceUnit.from_file(root / problem_id / "src" / "orig.cpp")
        write_fixture(fixture_dir, analysis_prompt(src), ANALYSIS_TEXT)
        prompt = build_prompt(src, ctx)
        texts = (responses or {}).get(problem_id, [f"Here it is.\n\n```cpp\n{fast}```\n"])
        for i, text in enumerate(texts):
            write_fixture(fixture_dir, prompt, text, i)
