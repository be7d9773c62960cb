import math
import os
from pathlib import Path

import numpy as np
import pytest

from bnaudit.actions import actions
from bnaudit.actions.ingest import prepare_pima
from bnaudit.bayes import (
    CountTable,
    default_prior,
    log_marginal_likelihood,
    predictive_row,
)
from bnaudit.inference import Query, forward_sample, query
from bnaudit.model import Dag, ParamRef, Variable
from bnaudit.monitors import seq_marg_monitor
from bnaudit.netfile import NetworkFile
from bnaudit.sensitivity import sensitivity, sensquery

from ..networks import (
    DIABETES_DAG,
    FIXTURE_DIR,
    enumeration_conditional,
    random_network,
)

PIMA_RAW = Path(
    os.environ.get("BNAUDIT_PIMA_RAW", FIXTURE_DIR / "pima-indians-diabetes.csv")
)
needs_pima = pytest.mark.skipif(
    not PIMA_RAW.exists(), reason=f"raw Pima file not found at {PIMA_RAW}"
)

GLOBAL_MONITOR_EXPECTED = {
    "PREG": 236.2658,
    "GLUC": 274.3482,
    "PRES": 250.0871,
    "TRIC": 267.1841,
    "INS": 219.8782,
    "MASS": 231.8470,
    "PED": 272.6041,
    "AGE": 246.5046,
    "DIAB": 214.0108,
}


def test_inference_matches_enumeration():
    rng = np.random.default_rng(1984)
    for _ in range(200):
        bn = random_network(rng)
        n = len(bn.dag)
        for _ in range(5):
            perm = rng.permutation(n)
            n_targets = int(rng.integers(1, min(2, n) + 1))
            targets = tuple(int(v) for v in perm[:n_targets])
            n_evidence = int(rng.integers(0, n - n_targets + 1))
            evidence = {
                int(v): int(rng.integers(bn.cardinalities[v]))
                for v in perm[n_targets : n_targets + n_evidence]
            }
            np.testing.assert_allclose(
                query(bn, Query(targets, evidence)),
                enumeration_conditional(bn, targets, evidence),
                rtol=0,
                atol=1e-9,
            )


def test_likelihood_is_prequential_and_order_free():
    rng = np.random.default_rng(7)
    for _ in range(100):
        bn = random_network(rng, 3, 6)
        dag = bn.dag
        m = int(rng.integers(0, 51))
        data = forward_sample(bn, m, seed=int(rng.integers(10**6)))
        prior = default_prior(dag)
        counts = CountTable(dag)
        total = 0.0
        for row in data.rows:
            for i in range(len(dag)):
                config, level = counts.cell(i, row)
                total += math.log(predictive_row(prior, counts, i, config)[level])
            counts.increment(row)
        lml = log_marginal_likelihood(dag, data, prior).sum()
        assert lml == pytest.approx(total, rel=0, abs=1e-10)
        shuffled = data.subset(rng.permutation(len(data)))
        assert log_marginal_likelihood(dag, shuffled, prior).sum() == pytest.approx(
            lml, rel=0, abs=1e-10
        )


def test_marginal_monitor_calibration():
    rng = np.random.default_rng(500)
    dag = Dag(
        [Variable(f"X{i}", ("a", "b")) for i in range(5)],
        [(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)],
    )
    bn = random_network(rng, dag=dag)
    prior = default_prior(dag)
    exceed = np.zeros(len(dag), dtype=int)
    for seed in range(10):
        data = forward_sample(bn, 500, seed=seed)
        for i in range(len(dag)):
            series = seq_marg_monitor(dag, data, i, prior)
            if abs(series.z[-1]) > 1.96:
                exceed[i] += 1
    assert np.all(exceed <= 2), exceed


def test_sensitivity_shape_on_random_networks():
    rng = np.random.default_rng(31)
    for _ in range(100):
        bn = random_network(rng, 3, 6)
        n = len(bn.dag)
        target, other = (int(v) for v in rng.permutation(n)[:2])
        node = int(rng.integers(n))
        param = ParamRef(
            node,
            int(rng.integers(bn.cardinalities[node])),
            tuple(
                int(rng.integers(bn.cardinalities[p])) for p in bn.dag.parents(node)
            ),
        )
        outcome = (int(rng.integers(bn.cardinalities[target])),)
        with_evidence = Query(
            (target,), {other: int(rng.integers(bn.cardinalities[other]))}, outcome
        )
        assert sensitivity(bn, with_evidence, param).residual < 1e-9
        result = sensitivity(bn, Query((target,), {}, outcome), param)
        assert result.residual < 1e-9
        assert result.coefficients[2] == pytest.approx(0.0, abs=1e-9)


@needs_pima
def test_diabetes_pipeline():
    data = prepare_pima(PIMA_RAW)
    assert len(data) == 392
    assert data.rows.shape == (392, 9)
    assert data.rows.max() <= 1
    assert prepare_pima(PIMA_RAW) == data

    dag = NetworkFile.from_file(DIABETES_DAG).dag
    bn = actions.fit(dag, data)
    document = actions.run_query(
        bn, [dag.index("DIAB")], {dag.index("PRES"): 1}, "conditional"
    )
    assert len(document.table) == 4

    global_report = actions.monitor_global(dag, data)
    assert np.all(global_report.table["score"] > 0)
    influence = actions.influence(dag, data, threshold=8.5)
    assert list(influence.table["score"]) == sorted(
        influence.table["score"], reverse=True
    )

    q = Query.from_labels(dag, ["DIAB"], {"PRES": "high"}, outcome=["pos"])
    result = sensquery(bn, q, 0.4)
    assert [row.cd for row in result.rows] == sorted(row.cd for row in result.rows)


@needs_pima
@pytest.mark.xfail(reason="depends on the reconstructed diabetes DAG", strict=False)
def test_diabetes_reference_values():
    data = prepare_pima(PIMA_RAW)
    dag = NetworkFile.from_file(DIABETES_DAG).dag
    bn = actions.fit(dag, data)

    scores = actions.monitor_global(dag, data).table
    for name, score in zip(scores["node"], scores["score"]):
        assert score == pytest.approx(GLOBAL_MONITOR_EXPECTED[name], rel=5e-3)

    p = query(bn, Query.from_labels(dag, ["DIAB"], {"PRES": "high"}))
    assert p[1] == pytest.approx(0.38, abs=0.005)

    influence = actions.influence(dag, data, threshold=8.5)
    assert influence.table["score"].iloc[0] == pytest.approx(9.652, abs=0.01)
    assert len(influence.table) == 5

    q = Query.from_labels(dag, ["DIAB"], {"PRES": "high"}, outcome=["pos"])
    rows = sensquery(bn, q, 0.4).rows
    assert len(rows) == 5
    assert rows[0].cd == pytest.approx(0.18642, rel=0.01)
    assert rows[-1].cd == pytest.approx(1.67311, rel=0.01)
    assert dag.names[rows[0].param.node] == "GLUC"
    assert rows[0].suggested_value == pytest.approx(0.44091, rel=0.01)
