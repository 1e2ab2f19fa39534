import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foolmetrics import io as fio
from foolmetrics.analysis import CategorySubset
from foolmetrics.errors import InvariantViolation, ParseError
from foolmetrics.manifest import RunManifest, read_manifest, write_manifest
from foolmetrics.metrics import PredictionRecord, RecordSet


def three_records():
    recs = [
        PredictionRecord.from_ranking("a", 0, [1, 0, 2, 3]),
        PredictionRecord.from_ranking("b", 2, [2, 3, 1, 0]),
        PredictionRecord.from_ranking("c", 3, [0, 1, 2, 3], target_label=0),
    ]
    return RecordSet(recs, 4, attack="pgd", model="toy", meta={"eps": 0.5})


def test_three_record_file(tmp_path):
    p = tmp_path / "r.jsonl"
    fio.write_records(three_records(), p)
    rs = fio.read_records(p)
    assert len(rs) == 3 and rs.class_count == 4 and rs.attack == "pgd"
    assert rs.meta == {"eps": 0.5}
    assert rs.records == three_records().records
    assert p.read_text().splitlines()[0].startswith('{"_meta"')


def test_without_meta_line_class_count_from_ranking():
    text = fio.format_records(three_records(), with_meta=False)
    rs = fio.parse_records(text)
    assert rs.class_count == 4 and rs.attack == ""


@st.composite
def record_sets(draw):
    c = draw(st.integers(2, 12))
    n = draw(st.integers(1, 15))
    recs = []
    for i in range(n):
        ranking = draw(st.permutations(range(c)))
        pre = draw(st.integers(0, c - 1))
        tgt = draw(st.one_of(st.none(), st.integers(0, c - 1)))
        recs.append(PredictionRecord.from_ranking(f"r{i}", pre, list(ranking), tgt))
    return RecordSet(recs, c, attack=draw(st.sampled_from(["", "fgsm", "cw"])), meta={"k": n})


@settings(max_examples=100, deadline=None)
@given(record_sets())
def test_round_trip_is_identity(rs):
    text = fio.format_records(rs)
    back = fio.parse_records(text)
    assert back.records == rs.records
    assert (back.class_count, back.attack, back.meta) == (rs.class_count, rs.attack, rs.meta)
    assert fio.format_records(back) == text


def body(lines):
    return "\n".join(json.dumps(x) if not isinstance(x, str) else x for x in lines) + "\n"


def test_parse_errors_carry_line_numbers():
    good = {"id": "a", "pre_label": 0, "post_ranking": [0, 1], "pre_label_rank": 1}
    cases = [
        [good, "{broken"],
        [good, [1, 2]],
        [good, {"id": "b", "pre_label": 0, "post_ranking": [0, 1]}],
        [good, dict(good, extra=1)],
        [good, dict(good, pre_label=True)],
        [good, dict(good, post_ranking=[0, "1"])],
        [good, {"_meta": {}}],
    ]
    for lines in cases:
        with pytest.raises(ParseError, match="r.jsonl:2:"):
            fio.parse_records(body(lines), path="r.jsonl")


def test_invariant_violations_name_the_record():
    dup = {"id": "bad1", "pre_label": 0, "post_ranking": [0, 0], "pre_label_rank": 1}
    with pytest.raises(InvariantViolation, match="bad1") as ei:
        fio.parse_records(body([dup]), path="r.jsonl")
    assert ei.value.record_id == "bad1" and ei.value.line == 1
    rank = {"id": "bad2", "pre_label": 1, "post_ranking": [0, 1], "pre_label_rank": 1}
    with pytest.raises(InvariantViolation, match="bad2"):
        fio.parse_records(body([rank]))
    with pytest.raises(InvariantViolation):
        fio.parse_records(body([{"_meta": {"class_count": 3}},
                                {"id": "x", "pre_label": 0, "post_ranking": [0, 1], "pre_label_rank": 1}]))


def test_subsets_round_trip():
    subsets = [CategorySubset("dogs", frozenset({3, 1})), CategorySubset("cats", frozenset({0}))]
    again = fio.parse_subsets(fio.format_subsets(subsets))
    assert [s.name for s in again] == ["cats", "dogs"]
    assert again[1].members == {1, 3}
    with pytest.raises(ParseError):
        fio.parse_subsets('{"a": [1, "x"]}')
    with pytest.raises(ParseError):
        fio.parse_subsets("[1]")


def test_csv_writers_embed_provenance():
    prov = fio.provenance(7, command="curves")
    text = fio.format_fr_curve([(1, 0.5), (2, 0.25)], prov)
    lines = text.splitlines()
    assert lines[0] == "# foolmetrics 0.1.0 command=curves seed=7"
    assert lines[1:] == ["K,fr_at_k", "1,0.5", "2,0.25"]
    assert fio.format_sweep([(0.1, 0.0)]).splitlines() == ["threshold,mean_qi", "0.1,0.0"]


def test_manifest_round_trip(tmp_path):
    (tmp_path / "task.csv").write_text("label,x_0\n")
    m = RunManifest(str(tmp_path), seed=3, files={"task": "task.csv"})
    write_manifest(m)
    back = read_manifest(tmp_path)
    assert back.seed == 3 and back.file("task") == str(tmp_path / "task.csv")
    assert str(tmp_path) not in (tmp_path / "manifest.json").read_text()
    with pytest.raises(ParseError):
        back.file("model")
    (tmp_path / "task.csv").unlink()
    with pytest.raises(FileNotFoundError):
        read_manifest(tmp_path)
