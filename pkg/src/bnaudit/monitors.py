"""Prequential robustness diagnostics.

Node monitors follow the one-step-ahead scheme: the i-th observation is
scored by the network learned from the first i-1 rows (posterior means of
the Dirichlet-multinomial model), then added to the counts. For a log score
S_i with expectation E_i and variance V_i under the forecast,

    Z_i = (sum S - sum E) / sqrt(sum V)

over the first i observations. All logarithms are natural.
"""
from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np
from scipy.special import entr
from tqdm import tqdm
from tqdm.contrib.logging import logging_redirect_tqdm

from bnaudit import BnAuditInputError
from bnaudit.bayes import (
    CountTable,
    DirichletSpec,
    config_column,
    log_marginal_likelihood_from_counts,
    posterior_mean_bn,
    predictive_row,
)
from bnaudit.inference import Query, query
from bnaudit.model import Dag, Dataset, config_index, config_values

Z_THRESHOLD = 1.96
VARIANCE_TOLERANCE = 1e-12


class MonitorError(BnAuditInputError):
    pass


class MonitorKind(Enum):
    MARGINAL = "marginal"
    CONDITIONAL = "conditional"
    PARENT_CHILD = "parent-child"


class Predictive(Enum):
    """How the global monitor scores each observation.

    PREQUENTIAL uses the one-step-ahead predictive, PLUGIN the posterior
    mean fitted on the full dataset.
    """

    PREQUENTIAL = "prequential"
    PLUGIN = "plugin"


@dataclass(frozen=True, eq=False)
class MonitorSeries:
    """
    The sequence of scores of one node monitor.

    Attributes:
        node: variable index of the monitored node
        kind: marginal, conditional or parent-child
        score: S_i, the log score of the observed value
        expectation: E_i, the forecast entropy
        variance: V_i, the forecast variance of the log score
        z: standardized cumulative score, nan where undefined
        rows: 0-based dataset row of every monitor step
        parent_config: parent levels of a parent-child monitor
    """

    node: int
    kind: MonitorKind
    score: np.ndarray
    expectation: np.ndarray
    variance: np.ndarray
    z: np.ndarray
    rows: np.ndarray
    parent_config: Optional[tuple[int, ...]] = None

    def __len__(self) -> int:
        return len(self.score)

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.z)

    def exceedances(self, threshold: float = Z_THRESHOLD) -> np.ndarray:
        """Monitor steps (0-based) with |Z| above the threshold."""
        with np.errstate(invalid="ignore"):
            return np.flatnonzero(np.abs(self.z) > threshold)


@dataclass(frozen=True, eq=False)
class GlobalMonitorReport:
    """Per-node contributions to the negative log likelihood, in nats."""

    names: tuple[str, ...]
    scores: np.ndarray
    predictive: Predictive = Predictive.PREQUENTIAL

    @property
    def total(self) -> float:
        return float(self.scores.sum())

    def as_dict(self) -> dict[str, float]:
        return {name: float(s) for name, s in zip(self.names, self.scores)}


@dataclass(frozen=True, eq=False)
class InfluenceReport:
    """Leave-one-out change in the log marginal likelihood of every row."""

    scores: np.ndarray
    log_likelihood: float = field(default=float("nan"))

    def __len__(self) -> int:
        return len(self.scores)

    def ranking(self) -> np.ndarray:
        """Row indices by decreasing influence; ties keep row order."""
        return np.argsort(-self.scores, kind="stable")

    def unique_above(
        self, data: Dataset, threshold: float
    ) -> list[tuple[int, float]]:
        """First occurrence of each distinct row scoring above ``threshold``,
        by decreasing influence.

        :return: list of (0-based row index, score)
        """
        _, first = np.unique(data.rows, axis=0, return_index=True)
        chosen = [int(i) for i in first if self.scores[i] > threshold]
        chosen.sort(key=lambda i: (-self.scores[i], i))
        return [(i, float(self.scores[i])) for i in chosen]


def score_components(p: np.ndarray, k: int) -> tuple[float, float, float]:
    """Log score of level ``k`` under ``p`` with its expectation and variance.

    :return: (S, E, V) with S = -log p_k, E = -sum p log p and
        V = sum p (log p)^2 - E^2
    """
    p = np.asarray(p, dtype=float).ravel()
    if not p[k] > 0:
        raise MonitorError(f"Observed level {k} has forecast probability zero")
    positive = p > 0
    log_p = np.log(p[positive])
    expectation = float(entr(p).sum())
    variance = float(np.sum(p[positive] * (-log_p - expectation) ** 2))
    return float(-np.log(p[k])), expectation, variance


def standardize(
    score: np.ndarray, expectation: np.ndarray, variance: np.ndarray
) -> np.ndarray:
    """Cumulative standardized scores; nan while the summed variance is
    at most VARIANCE_TOLERANCE."""
    cum_var = np.cumsum(variance)
    defined = cum_var > VARIANCE_TOLERANCE
    z = np.full(len(score), np.nan)
    z[defined] = (np.cumsum(score) - np.cumsum(expectation))[defined] / np.sqrt(
        cum_var[defined]
    )
    return z


def _node_index(dag: Dag, node: Union[int, str]) -> int:
    if isinstance(node, str):
        return dag.index(node)
    if not 0 <= node < len(dag):
        raise MonitorError(f"Node index {node} out of range")
    return int(node)


def _series(
    node: int,
    kind: MonitorKind,
    components: Sequence[tuple[float, float, float]],
    rows: np.ndarray,
    parent_config: Optional[tuple[int, ...]] = None,
) -> MonitorSeries:
    logger = logging.getLogger(__name__)
    array = np.array(components, dtype=float).reshape(-1, 3)
    z = standardize(array[:, 0], array[:, 1], array[:, 2])
    series = MonitorSeries(
        node=node,
        kind=kind,
        score=array[:, 0],
        expectation=array[:, 1],
        variance=array[:, 2],
        z=z,
        rows=np.asarray(rows, dtype=np.int64),
        parent_config=parent_config,
    )
    logger.debug(
        f"{kind.value} monitor of node {node}: {len(series)} steps, "
        f"{int((~series.defined).sum())} undefined, "
        f"{len(series.exceedances())} beyond {Z_THRESHOLD}"
    )
    return series


def _prequential_monitor(
    dag: Dag,
    data: Dataset,
    node: Union[int, str],
    prior: DirichletSpec,
    kind: MonitorKind,
    show_progress: bool,
) -> MonitorSeries:
    data.check_matches(dag)
    index = _node_index(dag, node)
    counts = CountTable(dag)
    components = []
    with logging_redirect_tqdm():
        for row in tqdm(
            data.rows,
            desc=f"{kind.value} {dag.names[index]}",
            disable=not show_progress,
        ):
            bn = posterior_mean_bn(dag, prior, counts)
            evidence: Mapping[int, int] = (
                {j: int(v) for j, v in enumerate(row) if j != index}
                if kind is MonitorKind.CONDITIONAL
                else {}
            )
            forecast = query(bn, Query((index,), evidence))
            components.append(score_components(forecast, int(row[index])))
            counts.increment(row)
    return _series(index, kind, components, np.arange(len(data)))


def seq_marg_monitor(
    dag: Dag,
    data: Dataset,
    node: Union[int, str],
    prior: DirichletSpec,
    show_progress: bool = False,
) -> MonitorSeries:
    """Sequential marginal node monitor: row i is scored by the marginal
    forecast of the node under the network learned from rows before i."""
    return _prequential_monitor(
        dag, data, node, prior, MonitorKind.MARGINAL, show_progress
    )


def seq_cond_monitor(
    dag: Dag,
    data: Dataset,
    node: Union[int, str],
    prior: DirichletSpec,
    show_progress: bool = False,
) -> MonitorSeries:
    """Sequential conditional node monitor: as seq_marg_monitor, with the
    forecast conditioned on every other value of row i."""
    return _prequential_monitor(
        dag, data, node, prior, MonitorKind.CONDITIONAL, show_progress
    )


def seq_pa_ch_monitor(
    dag: Dag,
    data: Dataset,
    node: Union[int, str],
    parent_names: Sequence[Union[int, str]],
    parent_values: Sequence[Union[int, str]],
    prior: DirichletSpec,
) -> MonitorSeries:
    """
    Parent-child monitor of one CPT row.

    Only rows whose parents take ``parent_values`` are scored, each by the
    Dirichlet-multinomial predictive of that row given the earlier
    matching rows.

    :param parent_names: the node's parents, in any order
    :param parent_values: parent levels (labels or indices) aligned with
        ``parent_names``
    :return: a series indexed by the matching rows; ``rows`` maps each
        step back to the dataset
    """
    data.check_matches(dag)
    index = _node_index(dag, node)
    parents = dag.parents(index)
    given = [_node_index(dag, p) for p in parent_names]
    if len(given) != len(parent_values):
        raise MonitorError(
            f"Got {len(given)} parents but {len(parent_values)} parent values"
        )
    if sorted(given) != list(parents) or len(set(given)) != len(given):
        raise MonitorError(
            f"Parents of {dag.names[index]} are "
            f"({', '.join(dag.names[p] for p in parents)}), got "
            f"({', '.join(dag.names[p] for p in given)})"
        )
    levels = {
        p: dag.variables[p].index(v) if isinstance(v, str) else int(v)
        for p, v in zip(given, parent_values)
    }
    for p, level in levels.items():
        if not 0 <= level < dag.variables[p].cardinality:
            raise MonitorError(f"Level index {level} out of range for {dag.names[p]}")
    parent_config = tuple(levels[p] for p in parents)
    config = config_index(dag.parent_cardinalities(index), parent_config)

    rows = data.rows
    matching = np.flatnonzero(config_column(dag, index, rows) == config)
    counts = CountTable(dag)
    components = []
    for r in matching:
        forecast = predictive_row(prior, counts, index, config)
        components.append(score_components(forecast, int(rows[r, index])))
        counts.counts(index)[config, rows[r, index]] += 1
    return _series(
        index, MonitorKind.PARENT_CHILD, components, matching, parent_config
    )


def pa_ch_monitors(
    dag: Dag, data: Dataset, node: Union[int, str], prior: DirichletSpec
) -> list[MonitorSeries]:
    """Parent-child monitors for every parent configuration of a node."""
    index = _node_index(dag, node)
    parents = dag.parents(index)
    cards = dag.parent_cardinalities(index)
    return [
        seq_pa_ch_monitor(
            dag, data, index, parents, config_values(cards, j), prior
        )
        for j in range(dag.n_configs(index))
    ]


def global_monitor(
    dag: Dag,
    data: Dataset,
    prior: DirichletSpec,
    predictive: Predictive = Predictive.PREQUENTIAL,
) -> GlobalMonitorReport:
    """
    Contribution of every node to the negative log likelihood of the data.

    :param predictive: PREQUENTIAL sums one-step-ahead predictive log scores,
        which equals the negated log marginal likelihood; PLUGIN scores every
        row under the posterior mean fitted on all rows
    """
    logger = logging.getLogger(__name__)
    data.check_matches(dag)
    counts = CountTable.from_dataset(dag, data)
    if predictive is Predictive.PREQUENTIAL:
        scores = -log_marginal_likelihood_from_counts(prior, counts)
    else:
        bn = posterior_mean_bn(dag, prior, counts)
        scores = np.array(
            [
                -float(np.sum(counts.counts(i) * np.log(bn.cpt(i).table)))
                for i in range(len(dag))
            ]
        )
    scores = scores + 0.0  # no negative zeros on empty data
    logger.debug(
        f"Global monitor ({predictive.value}): total {scores.sum():.6g} nats "
        f"over {len(data)} rows"
    )
    return GlobalMonitorReport(dag.names, scores, predictive)


def influential_obs(
    dag: Dag, data: Dataset, prior: DirichletSpec
) -> InfluenceReport:
    """
    |log p(y) - log p(y without row i)| for every row i.

    Removing one row decrements a single count per node, so the change in
    the log marginal likelihood is sum over nodes of
    log(A_ij - 1) - log(A_ijk - 1), where A = alpha + N on the full data.
    """
    logger = logging.getLogger(__name__)
    data.check_matches(dag)
    if len(data) < 2:
        raise MonitorError(
            f"Influence needs at least 2 observations, got {len(data)}"
        )
    counts = CountTable.from_dataset(dag, data)
    rows = data.rows
    delta = np.zeros(len(data))
    for i in range(len(dag)):
        posterior = prior.alpha(i) + counts.counts(i)
        configs = config_column(dag, i, rows)
        a_jk = posterior[configs, rows[:, i]]
        a_j = posterior.sum(axis=1)[configs]
        delta += np.log(a_j - 1) - np.log(a_jk - 1)
    log_likelihood = float(log_marginal_likelihood_from_counts(prior, counts).sum())
    report = InfluenceReport(np.abs(delta), log_likelihood)
    top = int(report.ranking()[0])
    logger.debug(
        f"Most influential row: {top + 1} with score {report.scores[top]:.6g}"
    )
    return report
