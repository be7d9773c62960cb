import logging
import math

import numpy as np
import pytest

from bnaudit.actions.ingest import load_dataset
from bnaudit.bayes import (
    CountTable,
    DirichletSpec,
    PriorError,
    accumulate,
    default_prior,
    log_marginal_likelihood,
    mle_bn,
    posterior_mean_bn,
    predictive_node_prob,
    predictive_row,
)
from bnaudit.inference import forward_sample
from bnaudit.model import Dag, Dataset, LevelIndexError, Variable
from bnaudit.netfile import NetworkFile

from ..networks import SMALL_DAG, SMALL_DATA, random_network


@pytest.fixture
def small():
    dag = NetworkFile.from_file(SMALL_DAG).dag
    return dag, load_dataset(SMALL_DATA, dag.variables)


def single_node(levels=("a", "b")):
    return Dag([Variable("X", levels)])


def test_default_prior():
    dag = NetworkFile.from_file(SMALL_DAG).dag
    prior = default_prior(dag)
    np.testing.assert_array_equal(prior.alpha(0), [[2.0, 2.0]])
    np.testing.assert_array_equal(prior.alpha(2), np.full((2, 3), 3.0))
    np.testing.assert_array_equal(prior.row_totals(3), np.full(6, 4.0))
    np.testing.assert_array_equal(
        default_prior(dag, 0.5).alpha(3), np.full((6, 2), 0.5)
    )
    with pytest.raises(PriorError):
        default_prior(dag, 0.0)
    with pytest.raises(PriorError):
        DirichletSpec(dag, [np.ones((1, 2))])
    with pytest.raises(PriorError):
        DirichletSpec(single_node(), [np.array([[1.0, -1.0]])])


def test_counts(small):
    dag, data = small
    counts = CountTable.from_dataset(dag, data)
    np.testing.assert_array_equal(counts.counts(0), [[14, 6]])
    assert counts.total(3) == 20
    np.testing.assert_array_equal(counts.row_totals(1), [14, 6])
    assert counts.counts(3).shape == (6, 2)

    row = data.rows[2]
    bigger = accumulate(counts, dag, row)
    assert bigger.total(0) == 21
    assert counts.total(0) == 20
    assert bigger.copy().increment(row, by=-1) == counts
    with pytest.raises(PriorError):
        CountTable(dag).increment(row, by=-1)
    with pytest.raises(LevelIndexError):
        CountTable(dag).increment([0, 0, 3, 0])


def test_counts_incremental_equals_batch(small):
    dag, data = small
    counts = CountTable(dag)
    for row in data.rows:
        counts.increment(row)
    assert counts == CountTable.from_dataset(dag, data)


def test_posterior_mean_and_mle(small):
    dag, data = small
    counts = CountTable.from_dataset(dag, data)
    np.testing.assert_allclose(mle_bn(dag, counts).cpt(0).table, [[0.7, 0.3]])
    np.testing.assert_allclose(
        posterior_mean_bn(dag, default_prior(dag), counts).cpt(0).table,
        [[16 / 24, 8 / 24]],
    )
    assert predictive_node_prob(default_prior(dag), counts, 0, 1) == pytest.approx(
        8 / 24
    )
    np.testing.assert_allclose(
        predictive_row(default_prior(dag), counts, 0, 0), [16 / 24, 8 / 24]
    )


def test_mle_unseen_configuration_is_uniform(caplog):
    caplog.set_level(logging.INFO)
    dag = Dag(
        [Variable("A", ("a", "b")), Variable("B", ("x", "y", "z"))], [(0, 1)]
    )
    data = Dataset(dag.variables, [[0, 0], [0, 1], [0, 1]])
    bn = mle_bn(dag, CountTable.from_dataset(dag, data))
    np.testing.assert_allclose(bn.cpt(1).table, [[1 / 3, 2 / 3, 0], [1 / 3] * 3])
    assert "unseen in data" in caplog.text


def test_predictive_node_prob_validation(small):
    dag, data = small
    prior = default_prior(dag)
    counts = CountTable.from_dataset(dag, data)
    with pytest.raises(LevelIndexError):
        predictive_node_prob(prior, counts, 3, 1, (1,))
    with pytest.raises(LevelIndexError):
        predictive_node_prob(prior, counts, 3, 2, (1, 1))
    assert predictive_node_prob(prior, counts, 3, 1, (1, 1)) > 0


def test_marginal_likelihood_single_node():
    dag = single_node()
    data = Dataset(dag.variables, [[0], [0], [1]])
    # 2/4 * 3/5 * 2/6
    assert log_marginal_likelihood(dag, data, default_prior(dag)).sum() == (
        pytest.approx(math.log(0.1), abs=1e-12)
    )
    empty = Dataset(dag.variables, [])
    assert log_marginal_likelihood(dag, empty, default_prior(dag)).sum() == 0.0


def test_marginal_likelihood_is_prequential_product():
    rng = np.random.default_rng(11)
    for _ in range(25):
        bn = random_network(rng, 3, 6)
        dag = bn.dag
        m = int(rng.integers(0, 51))
        data = forward_sample(bn, m, seed=int(rng.integers(1000)))
        prior = default_prior(dag, float(rng.uniform(0.5, 3.0)))
        counts = CountTable(dag)
        per_node = np.zeros(len(dag))
        for row in data.rows:
            for i in range(len(dag)):
                config, level = counts.cell(i, row)
                forecast = predictive_row(prior, counts, i, config)
                per_node[i] += math.log(forecast[level])
            counts.increment(row)
        lml = log_marginal_likelihood(dag, data, prior)
        np.testing.assert_allclose(lml, per_node, rtol=0, atol=1e-10)

        shuffled = data.subset(rng.permutation(len(data)))
        np.testing.assert_allclose(
            log_marginal_likelihood(dag, shuffled, prior).sum(),
            lml.sum(),
            rtol=0,
            atol=1e-10,
        )


def test_tables_from_another_network(small):
    dag, data = small
    other = single_node()
    with pytest.raises(PriorError):
        posterior_mean_bn(
            dag, default_prior(other), CountTable.from_dataset(dag, data)
        )
