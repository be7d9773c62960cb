import logging

import numpy as np
import pytest

from bnaudit.actions import actions
from bnaudit.actions.ingest import load_dataset
from bnaudit.inference import Query, QueryError, query
from bnaudit.model import DiscreteBn, ParamRef, network_from_tables
from bnaudit.netfile import NetworkFile

from ..networks import SMALL_DAG, SMALL_DATA, small_network


@pytest.fixture
def small():
    dag = NetworkFile.from_file(SMALL_DAG).dag
    return dag, load_dataset(SMALL_DATA, dag.variables)


class TestFit:
    def test_fit_mle(self, small, caplog):
        caplog.set_level(logging.INFO)
        dag, data = small
        bn = actions.fit(dag, data)
        assert isinstance(bn, DiscreteBn)
        np.testing.assert_allclose(bn.cpt("A").table, [[0.7, 0.3]])
        assert "Fitted 24 parameters (mle) from 20 rows" in caplog.text

    def test_fit_bayes(self, small):
        dag, data = small
        bn = actions.fit(dag, data, "bayes")
        np.testing.assert_allclose(bn.cpt("A").table, [[16 / 24, 8 / 24]])
        bn = actions.fit(dag, data, actions.FitMethod.BAYES, alpha=1.0)
        np.testing.assert_allclose(bn.cpt("A").table, [[15 / 22, 7 / 22]])

    def test_fit_unknown_method(self, small):
        dag, data = small
        with pytest.raises(ValueError):
            actions.fit(dag, data, "em")


class TestQuery:
    def test_joint(self):
        bn = small_network()
        document = actions.run_query(bn, [1, 0], {}, "joint")
        assert list(document.table.columns) == ["B", "A", "probability"]
        np.testing.assert_allclose(
            document.table["probability"], query(bn, Query((1, 0))).ravel()
        )
        assert document.table["probability"].sum() == pytest.approx(1.0)

    def test_marginal(self):
        bn = small_network()
        document = actions.run_query(bn, [0, 1], {3: 1}, "marginal")
        assert len(document.table) == 4
        np.testing.assert_allclose(
            document.table["probability"][2:], query(bn, Query((1,), {3: 1}))
        )

    def test_conditional_tabulates_evidence(self):
        bn = small_network()
        document = actions.run_query(bn, [3], {1: 1}, "conditional")
        assert list(document.table.columns) == ["B", "D", "probability"]
        assert list(document.table["B"]) == ["off", "off", "on", "on"]
        for b in range(2):
            np.testing.assert_allclose(
                document.table["probability"][2 * b : 2 * b + 2],
                query(bn, Query((3,), {1: b})),
            )
        with pytest.raises(QueryError):
            actions.run_query(bn, [3], {}, actions.QueryType.CONDITIONAL)

    def test_conditional_impossible_configuration(self, caplog):
        caplog.set_level(logging.INFO)
        dag = small_network().dag
        tables = {i: small_network().cpt(i).table for i in range(4)}
        tables[0] = np.array([[1.0, 0.0]])
        bn = network_from_tables(dag, tables)
        document = actions.run_query(bn, [1], {0: 0}, "conditional")
        assert document.table["probability"][2:].isna().all()
        assert "Evidence configuration 2 is impossible" in caplog.text


class TestMonitors:
    def test_monitor_global(self, small, caplog):
        caplog.set_level(logging.INFO)
        dag, data = small
        document = actions.monitor_global(dag, data)
        assert document.analysis == "global-monitor"
        assert list(document.table["node"]) == ["A", "B", "C", "D"]
        assert document.extra["total"] == pytest.approx(document.table["score"].sum())
        assert "Total negative log likelihood" in caplog.text
        plugin = actions.monitor_global(dag, data, plugin=True)
        assert plugin.extra["predictive"] == "plugin"

    def test_monitor_nodes(self, small, tmpdir):
        dag, data = small
        result = actions.monitor_nodes(
            dag, data, "marginal", ["A", "D"], plot=tmpdir / "z.svg"
        )
        assert len(result["series"]) == 2
        table = result["report"].table
        assert len(table) == 40
        assert "parents" not in table.columns
        assert list(table["row"][:3]) == [1, 2, 3]
        assert result["num_undefined"] >= 2
        assert (tmpdir / "z.svg").exists()

        conditional = actions.monitor_nodes(dag, data, "conditional")
        assert conditional["report"].analysis == "conditional-monitor"
        assert len(conditional["series"]) == 4
        with pytest.raises(QueryError):
            actions.monitor_nodes(dag, data, "parent-child")

    def test_monitor_parent_child(self, small):
        dag, data = small
        every = actions.monitor_parent_child(dag, data, "D")
        assert len(every["series"]) == 6
        assert len(every["report"].table) == 20
        assert set(every["report"].table["parents"]) <= {
            f"B={b};C={c}" for b in ("off", "on") for c in ("low", "mid", "high")
        }
        one = actions.monitor_parent_child(dag, data, "D", ["on", "mid"])
        assert len(one["series"]) == 1
        assert one["series"][0].parent_config == (1, 1)


class TestInfluence:
    def test_influence(self, small):
        dag, data = small
        document = actions.influence(dag, data)
        assert len(document.table) == 20
        assert list(document.table.columns) == ["row", "A", "B", "C", "D", "score"]

    def test_influence_threshold(self, small):
        dag, data = small
        document = actions.influence(dag, data, threshold=0.0)
        scores = list(document.table["score"])
        assert scores == sorted(scores, reverse=True)
        assert len(document.table) == len(np.unique(data.rows, axis=0))
        assert document.extra["threshold"] == 0.0


class TestSensitivity:
    def test_sensitivity_analysis(self, tmpdir):
        bn = small_network()
        q = Query.from_labels(bn.dag, ["D"], {"A": "yes"}, outcome=["pos"])
        param = ParamRef.from_labels(bn.dag, "B", "on", ["yes"])
        document = actions.sensitivity_analysis(
            bn, q, param, "all", "uniform", plot=tmpdir / "s.svg"
        )
        assert len(document.table) == 101
        assert document.extra["scheme"] == "uniform"
        assert document.extra["original_value"] == 0.75
        assert (tmpdir / "s.svg").exists()

    def test_distance_analysis(self):
        bn = small_network()
        param = ParamRef.from_labels(bn.dag, "A", "yes")
        document = actions.distance_analysis(
            bn, param, [0.25, 0.5], measures=("cd", "kl")
        )
        assert list(document.table.columns) == ["new_value", "cd", "kl"]
        assert document.table["cd"][0] == pytest.approx(0.0, abs=1e-12)
        # log(0.5/0.25) + log(0.75/0.5)
        assert document.table["cd"][1] == pytest.approx(np.log(2) + np.log(1.5))

    def test_sensquery_analysis(self):
        bn = small_network()
        q = Query.from_labels(bn.dag, ["B"], {}, outcome=["on"])
        document = actions.sensquery_analysis(bn, q, 0.6)
        assert len(document.table) > 0
        assert document.extra["target"] == 0.6
        assert (document.table["suggested_value"] > 0).all()


def test_simulate(caplog):
    caplog.set_level(logging.INFO)
    bn = small_network()
    data = actions.simulate(bn, 50, seed=3)
    assert len(data) == 50
    assert data == actions.simulate(bn, 50, seed=3)
    assert "Simulated 50 rows (seed 3)" in caplog.text
    with pytest.raises(QueryError):
        actions.simulate(bn, -1)
