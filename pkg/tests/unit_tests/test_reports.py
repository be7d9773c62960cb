import numpy as np
import orjson
import pandas as pd
import pytest

from bnaudit.actions import reports
from bnaudit.actions.reports import ReportDocument, ReportFormat
from bnaudit.inference import Query
from bnaudit.model import ParamRef
from bnaudit.sensitivity import distances, sensitivity

from ..networks import small_network


@pytest.fixture
def document():
    table = pd.DataFrame(
        {"node": ["A", "B", "C", "D"], "value": [1.0, np.nan, np.inf, 1 / 3]}
    )
    return ReportDocument("example", table, {"total": 2.5})


def test_csv_formatting(document):
    assert document.to_csv() == (
        b"node,value\nA,1\nB,undefined\nC,inf\nD,0.333333\n"
    )
    with_metadata = document.to_csv({"bnaudit": "1.0", "data": "x.csv"})
    assert with_metadata.startswith(b"# bnaudit: 1.0\n# data: x.csv\nnode,value\n")
    assert document.render() == document.to_csv()


def test_json_formatting(document):
    doc = orjson.loads(document.render(ReportFormat.JSON, {"network": "abc"}))
    assert doc["analysis"] == "example"
    assert doc["metadata"] == {"network": "abc"}
    assert doc["total"] == 2.5
    assert doc["columns"] == ["node", "value"]
    assert [row["value"] for row in doc["rows"]] == [1.0, None, None, 1 / 3]
    assert document.render("json").endswith(b"}\n")


def test_query_table():
    bn = small_network()
    probabilities = np.array([[0.1, 0.2, 0.7], [0.3, 0.3, 0.4]])
    document = reports.query_table(bn.dag, [2], probabilities, given=[0])
    assert list(document.table.columns) == ["A", "C", "probability"]
    assert list(document.table["A"]) == ["no"] * 3 + ["yes"] * 3
    assert list(document.table["C"]) == ["low", "mid", "high"] * 2
    np.testing.assert_allclose(document.table["probability"], probabilities.ravel())
    assert document.extra == {"targets": ["C"], "given": ["A"]}


def test_marginal_table():
    bn = small_network()
    document = reports.marginal_table(
        bn.dag, {0: np.array([0.75, 0.25]), 2: np.array([0.4, 0.3, 0.3])}
    )
    assert list(document.table["node"]) == ["A", "A", "C", "C", "C"]
    assert list(document.table["level"]) == ["no", "yes", "low", "mid", "high"]


def test_sensitivity_table():
    bn = small_network()
    param = ParamRef.from_labels(bn.dag, "A", "yes", [])
    q = Query.from_labels(bn.dag, ["B"], {}, outcome=["on"])
    document = reports.sensitivity_table(
        sensitivity(bn, q, param, [0.0, 0.5, 1.0]), bn.dag
    )
    assert list(document.table.columns) == ["new_value", "probability"]
    np.testing.assert_allclose(document.table["probability"], [0.5, 0.625, 0.75])
    assert document.extra["parameter"] == {"node": "A", "value": "yes", "parents": {}}
    assert document.extra["query"] == {
        "targets": ["B"],
        "evidence": {},
        "outcome": ["on"],
    }
    assert document.extra["coefficients"]["c"] == pytest.approx(0.0, abs=1e-12)


def test_plots_are_deterministic(tmpdir):
    bn = small_network()
    param = ParamRef.from_labels(bn.dag, "C", "mid", ["yes"])
    result = distances(bn, param, [0.1, 0.375, 0.9])
    reports.plot_distances(result, bn.dag, tmpdir / "a.svg")
    reports.plot_distances(result, bn.dag, tmpdir / "b.svg")
    first = (tmpdir / "a.svg").read_binary()
    assert b"<svg" in first
    assert first == (tmpdir / "b.svg").read_binary()
