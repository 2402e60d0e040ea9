"""Distilling runtime-optimization instructions (ROIs) and storing them.

The database is a JSON-lines file, one triplet per line with the fields
``pair_id, problem_id, slow, fast, roi_raw, points`` in that order.
"""
from __future__ import annotations

import itertools
import json
import threading
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from perfprompt.cpg import SourceUnit
from perfprompt.errors import CorruptRecord, PerfPromptError
from perfprompt.gateway import Gateway, GenerationRequest
from perfprompt.templating import fill, load_template

DEFAULT_MARKER = "</think>"
FIELDS = ("pair_id", "problem_id", "slow", "fast", "roi_raw", "points")


class RoiParseWarning(UserWarning):
    """A distilled response contained no usable JSON array of points."""


@dataclass(frozen=True)
class CodePair:
    pair_id: str
    problem_id: str
    slow: SourceUnit
    fast: SourceUnit


@dataclass(frozen=True)
class RoiPoint:
    description: str
    runtime_improvement: int
    category: str = "Other"

    def __post_init__(self) -> None:
        if not 1 <= self.runtime_improvement <= 10:
            raise ValueError(f"runtime_improvement {self.runtime_improvement} outside 1..10")

    def to_dict(self) -> dict:
        return {"description": self.description, "runtime_improvement": self.runtime_improvement,
                "category": self.category}


@dataclass(frozen=True)
class RoiInstruction:
    raw_text: str
    points: tuple[RoiPoint, ...] = ()

    @property
    def parse_warning(self) -> bool:
        return not self.points

    def as_text(self) -> str:
        """Compact text used for embedding and prompt instructions."""
        if not self.points:
            return self.raw_text.strip()
        return "\n".join(p.description for p in self.points)


@dataclass(frozen=True)
class RoiTriplet:
    pair: CodePair
    instruction: RoiInstruction


@dataclass
class RoiDatabase:
    triplets: list[RoiTriplet] = field(default_factory=list)
    errors: list[PerfPromptError | tuple[str, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.triplets)

    def __iter__(self) -> Iterator[RoiTriplet]:
        return iter(self.triplets)

    def __getitem__(self, i: int) -> RoiTriplet:
        return self.triplets[i]

    @property
    def pair_ids(self) -> set[str]:
        return {t.pair.pair_id for t in self.triplets}


# --------------------------------------------------------------------------
# Response parsing
# --------------------------------------------------------------------------


def strip_reasoning(text: str, marker: str | None = DEFAULT_MARKER) -> str:
    """Keep only what follows the last reasoning-terminator marker."""
    if marker and marker in text:
        return text.rsplit(marker, 1)[1]
    return text


def _coerce_point(obj: object) -> RoiPoint | None:
    if not isinstance(obj, dict) or not isinstance(obj.get("description"), str):
        return None
    rating = obj.get("runtime_improvement")
    try:
        value = float(rating)
    except (TypeError, ValueError):
        return None
    if not value.is_integer() or not 1 <= value <= 10 or isinstance(rating, bool):
        return None
    category = obj.get("category", "Other")
    return RoiPoint(obj["description"].strip(), int(value), category if isinstance(category, str) else "Other")


def _json_arrays(text: str) -> list[list]:
    decoder = json.JSONDecoder()
    found = []
    i = text.find("[")
    while i != -1:
        try:
            value, end = decoder.raw_decode(text, i)
        except json.JSONDecodeError:
            i = text.find("[", i + 1)
            continue
        if isinstance(value, list):
            found.append(value)
        i = text.find("[", end)
    return found


def parse_points(text: str) -> tuple[RoiPoint, ...]:
    """Points from the last well-formed JSON array of point objects in ``text``.

    Entries with a missing description or an out-of-range rating are dropped.
    A warning is raised when several candidate arrays are present.
    """
    candidates = [a for a in _json_arrays(text) if a and all(isinstance(x, dict) for x in a)]
    candidates = [a for a in candidates if any(_coerce_point(x) for x in a)]
    if not candidates:
        return ()
    if len(candidates) > 1:
        warnings.warn(f"{len(candidates)} JSON arrays in response; using the last", RoiParseWarning, stacklevel=3)
    return tuple(p for p in map(_coerce_point, candidates[-1]) if p is not None)


def distillation_prompt(pair: CodePair) -> str:
    return fill(load_template("distill"), {"slow_code": pair.slow.text, "fast_code": pair.fast.text})


def distill(pair: CodePair, gateway: Gateway, marker: str | None = DEFAULT_MARKER,
            model_name: str = "mock", temperature: float = 0.7) -> RoiInstruction:
    """Ask the model why ``pair.fast`` beats ``pair.slow`` and parse the answer."""
    resp = gateway.complete(GenerationRequest(distillation_prompt(pair), model_name, temperature))
    body = strip_reasoning(resp.text, marker).strip()
    points = parse_points(body)
    if not points:
        warnings.warn(f"no ROI points parsed for pair {pair.pair_id}", RoiParseWarning, stacklevel=2)
    return RoiInstruction(body, points)


# --------------------------------------------------------------------------
# Persistence
# --------------------------------------------------------------------------


def encode_triplet(t: RoiTriplet) -> str:
    record = {
        "pair_id": t.pair.pair_id,
        "problem_id": t.pair.problem_id,
        "slow": t.pair.slow.text,
        "fast": t.pair.fast.text,
        "roi_raw": t.instruction.raw_text,
        "points": [p.to_dict() for p in t.instruction.points],
    }
    return json.dumps(record, ensure_ascii=False)


def decode_triplet(line: str, line_no: int) -> RoiTriplet:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorruptRecord(line_no, f"invalid JSON ({exc.msg})") from exc
    if not isinstance(rec, dict) or tuple(rec) != FIELDS:
        raise CorruptRecord(line_no, f"expected fields {', '.join(FIELDS)}")
    if not all(isinstance(rec[k], str) for k in FIELDS[:5]) or not isinstance(rec["points"], list):
        raise CorruptRecord(line_no, "wrong field types")
    try:
        pair = CodePair(rec["pair_id"], rec["problem_id"], SourceUnit(rec["slow"]), SourceUnit(rec["fast"]))
        points = tuple(
            RoiPoint(p["description"], p["runtime_improvement"], p["category"]) for p in rec["points"]
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptRecord(line_no, str(exc)) from exc
    if any(type(p.runtime_improvement) is not int for p in points):
        raise CorruptRecord(line_no, "non-integer rating")
    return RoiTriplet(pair, RoiInstruction(rec["roi_raw"], points))


def save_db(db: RoiDatabase, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in db.triplets:
            fh.write(encode_triplet(t) + "\n")


def load_db(path: str | Path) -> RoiDatabase:
    """Load a database; corrupt lines are reported in ``errors`` and skipped."""
    db = RoiDatabase()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                db.triplets.append(decode_triplet(line.rstrip("\n"), line_no))
            except CorruptRecord as exc:
                db.errors.append(exc)
    return db


def build_db(pairs: Iterable[CodePair], gateway: Gateway, path: str | Path, workers: int = 1,
             marker: str | None = DEFAULT_MARKER, model_name: str = "mock") -> RoiDatabase:
    """Distill every pair not yet stored in ``path`` and append it.

    Pairs are consumed lazily in batches, so very large corpora never sit in
    memory at once.  A pair whose distillation fails is recorded in
    ``errors`` and the build moves on.
    """
    path = Path(path)
    db = load_db(path) if path.exists() else RoiDatabase()
    done = db.pair_ids
    lock = threading.Lock()

    def work(pair: CodePair) -> RoiTriplet | tuple[str, str]:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RoiParseWarning)
                return RoiTriplet(pair, distill(pair, gateway, marker, model_name))
        except PerfPromptError as exc:
            return (pair.pair_id, f"{type(exc).__name__}: {exc}")

    it = iter(pairs)
    batch_size = max(1, workers) * 8
    with open(path, "a", encoding="utf-8", newline="\n") as out, ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        while batch := [p for p in itertools.islice(it, batch_size)]:
            todo = []
            for p in batch:
                if p.pair_id not in done:
                    done.add(p.pair_id)
                    todo.append(p)
            for result in pool.map(work, todo):
                with lock:
                    if isinstance(result, RoiTriplet):
                        out.write(encode_triplet(result) + "\n")
                        out.flush()
                        db.triplets.append(result)
                    else:
                        db.errors.append(result)
    return db


def load_pairs(root: str | Path) -> Iterator[CodePair]:
    """Read pairs laid out as ``<root>/<problem_id>/<pair_name>/{slow,fast}.cpp``."""
    root = Path(root)
    for problem in sorted(p for p in root.iterdir() if p.is_dir()):
        for pair_dir in sorted(p for p in problem.iterdir() if p.is_dir()):
            slow, fast = pair_dir / "slow.cpp", pair_dir / "fast.cpp"
            if slow.is_file() and fast.is_file():
                yield CodePair(f"{problem.name}/{pair_dir.name}", problem.name,
                               SourceUnit.from_file(slow), SourceUnit.from_file(fast))
