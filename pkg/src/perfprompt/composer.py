"""Building optimization prompts from diagnoses and retrieved examples."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from perfprompt.advisor import BottleneckDiagnosis
from perfprompt.cpg import SourceUnit
from perfprompt.errors import TooManyExamples
from perfprompt.roi_store import RoiTriplet
from perfprompt.templating import fill, load_template

MAX_EXAMPLES = 2
KINDS = ("symbolic", "retrieval", "combined", "instruction_only", "cot")
# CLI mode -> (bundle kind, include ROI instructions in retrieval examples)
MODES = {
    "eco": ("combined", True),
    "symbolic": ("symbolic", True),
    "retrieval": ("retrieval", True),
    "icl": ("retrieval", False),
    "rag": ("retrieval", False),
    "cot": ("cot", False),
    "base": ("instruction_only", False),
}
_TEMPLATE_NAMES = r"(src_code|slow_code\d*|fast_code\d*|optimization_instruction\d*|where_and_how_to_optimize\d*|explanation|examples|tips|index|instruction)"
_COLLIDES = re.compile(rf"^\s*###|\{{{_TEMPLATE_NAMES}\}}", re.MULTILINE)


@dataclass(frozen=True)
class PromptBundle:
    kind: str
    text: str

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown prompt kind {self.kind!r}")


def source_block(src: SourceUnit | str) -> str:
    """Source text as inserted into a prompt.

    Trailing newlines are dropped (the template supplies its own spacing).
    Code that could be mistaken for template structure, a line starting with
    ``###`` or a literal placeholder name, is wrapped in a code fence.
    """
    text = (src.text if isinstance(src, SourceUnit) else src).rstrip("\n")
    if _COLLIDES.search(text):
        fence = "~~~" if "```" in text else "```"
        return f"{fence}cpp\n{text}\n{fence}"
    return text


def _tips(diagnoses: Sequence[BottleneckDiagnosis]) -> str:
    explanation = "\n".join(f"{i}. {d.text}" for i, d in enumerate(diagnoses, 1))
    return fill(load_template("tips"), {"explanation": explanation})


def _examples(triplets: Sequence[RoiTriplet], with_instructions: bool) -> str:
    if len(triplets) > MAX_EXAMPLES:
        raise TooManyExamples(f"at most {MAX_EXAMPLES} retrieved examples fit the prompt, got {len(triplets)}")
    parts = []
    for i, t in enumerate(triplets, 1):
        values = {"index": str(i), "slow_code": t.pair.slow.text, "fast_code": t.pair.fast.text}
        if with_instructions:
            values["optimization_instruction"] = t.instruction.as_text()
            parts.append(fill(load_template("example"), values))
        else:
            parts.append(fill(load_template("example_plain"), values))
    return "".join(parts)


def compose_symbolic(diagnoses: Sequence[BottleneckDiagnosis], src: SourceUnit | str) -> PromptBundle:
    text = fill(load_template("symbolic"), {"tips": _tips(diagnoses), "src_code": source_block(src)})
    return PromptBundle("symbolic", text)


def compose_retrieval(triplets: Sequence[RoiTriplet], src: SourceUnit | str,
                      with_instructions: bool = True) -> PromptBundle:
    """Few-shot prompt; ``with_instructions=False`` gives the plain ICL/RAG form."""
    if not triplets:
        raise ValueError("retrieval prompt needs at least one example")
    text = fill(load_template("retrieval"),
                {"examples": _examples(triplets, with_instructions), "src_code": source_block(src)})
    return PromptBundle("retrieval", text)


def compose_combined(diagnoses: Sequence[BottleneckDiagnosis], triplets: Sequence[RoiTriplet],
                     src: SourceUnit | str) -> PromptBundle:
    """Advisor tips followed by the retrieval prompt; the source appears once, last."""
    if not diagnoses and not triplets:
        raise ValueError("combined prompt needs diagnoses or retrieved examples")
    if not diagnoses:
        return compose_retrieval(triplets, src)
    if not triplets:
        return compose_symbolic(diagnoses, src)
    retrieval = compose_retrieval(triplets, src).text
    return PromptBundle("combined", _tips(diagnoses) + retrieval)


def compose_baseline(kind: str, src: SourceUnit | str) -> PromptBundle:
    base = fill(load_template("instruction_only"), {"src_code": source_block(src)})
    if kind == "instruction_only":
        return PromptBundle(kind, base)
    if kind == "cot":
        return PromptBundle(kind, fill(load_template("cot"), {"instruction": base}))
    raise ValueError(f"baseline kind must be instruction_only or cot, got {kind!r}")


def compose(mode: str, src: SourceUnit | str, diagnoses: Sequence[BottleneckDiagnosis] = (),
            triplets: Sequence[RoiTriplet] = ()) -> PromptBundle:
    """Dispatch on a CLI prompting mode (see ``MODES``)."""
    try:
        kind, with_instructions = MODES[mode]
    except KeyError:
        raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}") from None
    if kind == "combined":
        if not diagnoses and not triplets:
            return compose_symbolic((), src)
        return compose_combined(diagnoses, triplets, src)
    if kind == "symbolic":
        return compose_symbolic(diagnoses, src)
    if kind == "retrieval":
        return compose_retrieval(triplets, src, with_instructions)
    return compose_baseline(kind, src)
