import json
from pathlib import Path

import pytest

import apprisk

ROOT = Path(__file__).resolve().parents[2]
FIXTURES = ROOT / "data" / "fixtures"


def load(name):
    return json.loads((FIXTURES / f"{name}.json").read_text())


@pytest.fixture(scope="module")
def engine():
    return apprisk.Engine(ROOT)


def test_t_critical():
    assert apprisk.t_critical(0.95, 10) == pytest.approx(2.228139, abs=1e-6)


def test_confidence_interval_is_symmetric():
    lo, hi = apprisk.confidence_interval([1.0, 2.0, 3.0, 4.0], 0.95)
    assert (lo + hi) / 2 == pytest.approx(2.5)
    assert hi > lo


def test_validate_record():
    assert apprisk.validate_record(load("benign_app")) == []
    bad = load("benign_app")
    bad["collected_at"] = {"start": 10, "end": 5}
    assert apprisk.validate_record(bad)


def test_fixture_is_flagged(engine):
    out = engine.analyze(load("case_study_app"))
    assert out["status"] == "flagged"
    assert out["categories"] == ["AdPopups", "AppMorphing"]
    assert out["report"]["similar_delisted"]
    assert engine.analyze(load("case_study_app")) == out


def test_benign_is_clean(engine):
    assert engine.analyze(load("benign_app"))["status"] == "clean"


def test_batch_and_stats(engine):
    res = engine.analyze_batch([load("case_study_app"), load("benign_app")], parallelism=2)
    assert [o["status"] for o in res["outcomes"]] == ["flagged", "clean"]
    assert res["summary"]["flagged"] == 1
    assert engine.index_stats()["total"] == 52


def test_build_tree_matches_engine(engine):
    t = apprisk.build_tree(ROOT / "config" / "tree.json", ROOT / "data" / "history" / "delisted_cases.jsonl")
    assert t["version"] == engine.tree_version


def test_bad_gate_raises():
    with pytest.raises(Exception):
        apprisk.Engine(ROOT, gate="sometimes")


def test_outcome_matches_published_schema(engine):
    jsonschema = pytest.importorskip("jsonschema")
    doc = json.loads((ROOT / "docs" / "schemas" / "api.schema.json").read_text())
    for name in ("case_study_app", "benign_app"):
        out = engine.analyze(load(name))
        out["report_id"] = None
        jsonschema.validate(out, {**doc, "$ref": "#/$defs/AnalysisOutcome"})
