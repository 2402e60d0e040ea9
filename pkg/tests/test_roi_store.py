from __future__ import annotations

import json

import pytest

from perfprompt.cpg import SourceUnit
from perfprompt.errors import CorruptRecord
from perfprompt.gateway import GenerationResponse, MockGateway, write_fixture
from perfprompt.roi_store import (
    CodePair,
    RoiParseWarning,
    RoiPoint,
    build_db,
    distill,
    distillation_prompt,
    load_db,
    load_pairs,
    parse_points,
    save_db,
    strip_reasoning,
)

# Shaped like the published example output: prose preamble, then an object
# wrapping a three-entry array with ratings 8, 6 and 3.
EXAMPLE_RESPONSE = """Here is the comparison of the two versions.
{"optimization_points": [
  {"description": "stream output swapped for printf", "runtime_improvement": 8, "category": "Algorithm"},
  {"description": "product hoisted into a local", "runtime_improvement": 6, "category": "Algorithm"},
  {"description": "loop bound written as i<10", "runtime_improvement": 3, "category": "Code Execution"}
]}"""


def pair(i: int = 0, problem: str = "p1") -> CodePair:
    return CodePair(f"{problem}/{i}", problem, SourceUnit(f"int main(){{ cout << {i}; }}\n"),
                    SourceUnit(f"int main(){{ printf(\"%d\", {i}); }}\n"))


class StubGateway:
    def __init__(self, text: str) -> None:
        self.text = text
        self.prompts: list[str] = []

    def complete(self, req):
        self.prompts.append(req.prompt)
        return GenerationResponse(self.text)


def test_prompt_substitutes_both_programs():
    prompt = distillation_prompt(pair(7))
    assert prompt.startswith("Identify each optimization in the Slow Code\n")
    assert "Slow Code:\nint main(){ cout << 7; }\n\n\nFast Code:\nint main(){ printf(\"%d\", 7); }\n" in prompt
    assert '"runtime_improvement": "Integer (1-10) rating of runtime gain."' in prompt


def test_distill_example_output():
    roi = distill(pair(), StubGateway(EXAMPLE_RESPONSE))
    assert [p.runtime_improvement for p in roi.points] == [8, 6, 3]
    assert roi.points[0].category == "Algorithm"
    assert not roi.parse_warning


def test_distill_without_array_warns():
    with pytest.warns(RoiParseWarning):
        roi = distill(pair(), StubGateway("nothing structured here"))
    assert roi.points == () and roi.parse_warning
    assert roi.raw_text == "nothing structured here"


def test_marker_strips_reasoning():
    text = "thinking about [1, 2] ...</think>\n" + EXAMPLE_RESPONSE
    roi = distill(pair(), StubGateway(text))
    assert "thinking" not in roi.raw_text and len(roi.points) == 3


def test_custom_marker():
    assert strip_reasoning("a<END>b<END>c", "<END>") == "c"
    assert strip_reasoning("abc", None) == "abc"


def test_last_array_wins_with_warning():
    text = '[{"description": "a", "runtime_improvement": 2}] then [{"description": "b", "runtime_improvement": 4}]'
    with pytest.warns(RoiParseWarning):
        points = parse_points(text)
    assert points == (RoiPoint("b", 4, "Other"),)


@pytest.mark.parametrize("rating, kept", [("7", True), (7.0, True), (0, False), (11, False), ("high", False), (True, False)])
def test_rating_bounds(rating, kept):
    text = json.dumps([{"description": "x", "runtime_improvement": rating}, {"description": "y", "runtime_improvement": 5}])
    assert len(parse_points(text)) == (2 if kept else 1)


def test_point_rejects_out_of_range():
    with pytest.raises(ValueError):
        RoiPoint("x", 11)


def test_build_db_and_idempotence(tmp_path):
    db_path = tmp_path / "roi.jsonl"
    gw = StubGateway(EXAMPLE_RESPONSE)
    db = build_db([pair(i) for i in range(3)], gw, db_path)
    assert len(db) == 3 and not db.errors
    again = build_db([pair(i) for i in range(3)], gw, db_path, workers=3)
    assert len(again) == 3 and len(gw.prompts) == 3
    assert len(db_path.read_text().splitlines()) == 3


def test_build_db_records_failures(tmp_path):
    fixtures = tmp_path / "fx"
    write_fixture(fixtures, distillation_prompt(pair(0)), EXAMPLE_RESPONSE)
    db = build_db([pair(0), pair(1)], MockGateway(fixtures), tmp_path / "db.jsonl")
    assert [t.pair.pair_id for t in db] == ["p1/0"]
    assert db.errors[0][0] == "p1/1" and "FixtureMiss" in db.errors[0][1]


def test_build_db_streams_generator(tmp_path):
    consumed = []

    def gen():
        for i in range(40):
            consumed.append(i)
            yield pair(i)

    db = build_db(gen(), StubGateway(EXAMPLE_RESPONSE), tmp_path / "db.jsonl", workers=2)
    assert len(db) == 40 and consumed == list(range(40))


def test_round_trip_byte_identical(tmp_path):
    db = build_db([pair(i) for i in range(3)], StubGateway(EXAMPLE_RESPONSE), tmp_path / "a.jsonl")
    save_db(db, tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    loaded = load_db(tmp_path / "b.jsonl")
    assert loaded.triplets == db.triplets
    save_db(loaded, tmp_path / "c.jsonl")
    assert (tmp_path / "c.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_empty_round_trip(tmp_path):
    save_db(load_db(_touch(tmp_path / "e.jsonl")), tmp_path / "f.jsonl")
    assert (tmp_path / "f.jsonl").read_bytes() == b""


def _touch(path):
    path.write_text("")
    return path


def test_record_fields_in_order(tmp_path):
    build_db([pair()], StubGateway(EXAMPLE_RESPONSE), tmp_path / "a.jsonl")
    rec = json.loads((tmp_path / "a.jsonl").read_text().splitlines()[0])
    assert list(rec) == ["pair_id", "problem_id", "slow", "fast", "roi_raw", "points"]


def test_corrupt_line(tmp_path):
    path = tmp_path / "a.jsonl"
    build_db([pair(i) for i in range(2)], StubGateway(EXAMPLE_RESPONSE), path)
    lines = path.read_text().splitlines()
    path.write_text(lines[0] + "\n{not json\n" + lines[1] + "\n")
    db = load_db(path)
    assert len(db) == 2
    assert isinstance(db.errors[0], CorruptRecord) and db.errors[0].line_no == 2


def test_load_pairs(tmp_path):
    d = tmp_path / "probA" / "x"
    d.mkdir(parents=True)
    (d / "slow.cpp").write_text("int main(){}\n")
    (d / "fast.cpp").write_text("int main(){return 0;}\n")
    [p] = list(load_pairs(tmp_path))
    assert p.pair_id == "probA/x" and p.problem_id == "probA"
