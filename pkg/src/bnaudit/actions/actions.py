from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from enum import Enum
from os import PathLike
from typing import Optional, TypedDict, Union

import numpy as np

from bnaudit.actions import reports
from bnaudit.actions.reports import ReportDocument
from bnaudit.bayes import CountTable, default_prior, mle_bn, posterior_mean_bn
from bnaudit.inference import (
    ImpossibleEvidenceError,
    Query,
    QueryError,
    forward_sample,
    query,
)
from bnaudit.model import Dag, Dataset, DiscreteBn, ParamRef, config_values
from bnaudit.monitors import (
    MonitorKind,
    MonitorSeries,
    Predictive,
    global_monitor,
    influential_obs,
    pa_ch_monitors,
    seq_cond_monitor,
    seq_marg_monitor,
    seq_pa_ch_monitor,
)
from bnaudit.sensitivity import (
    CovariationScheme,
    DistanceMethod,
    distances,
    sensitivity,
    sensquery,
)


class FitMethod(Enum):
    MLE = "mle"
    BAYES = "bayes"


FIT_METHODS = tuple(m.value for m in FitMethod)


class QueryType(Enum):
    MARGINAL = "marginal"
    JOINT = "joint"
    CONDITIONAL = "conditional"


QUERY_TYPES = tuple(t.value for t in QueryType)


class MonitorResult(TypedDict):
    report: ReportDocument
    series: list[MonitorSeries]
    num_exceedances: int
    num_undefined: int


def fit(
    dag: Dag,
    data: Dataset,
    method: Union[FitMethod, str] = FitMethod.MLE,
    alpha: Optional[float] = None,
) -> DiscreteBn:
    """
    Estimate the CPTs of a DAG from data.

    :param method: maximum likelihood, or the posterior mean under the
        default Dirichlet prior
    :param alpha: overrides the default hyperparameter |Y_i| (bayes only)
    """
    logger = logging.getLogger(__name__)
    method = FitMethod(method)
    counts = CountTable.from_dataset(dag, data)
    if method is FitMethod.MLE:
        bn = mle_bn(dag, counts)
    else:
        bn = posterior_mean_bn(dag, default_prior(dag, alpha), counts)
    logger.info(
        f"Fitted {sum(c.table.size for c in bn.cpts)} parameters "
        f"({method.value}) from {len(data)} rows"
    )
    return bn


def run_query(
    bn: DiscreteBn,
    targets: Sequence[int],
    evidence: Mapping[int, int],
    query_type: Union[QueryType, str] = QueryType.JOINT,
) -> ReportDocument:
    """
    Answer a query.

    :param query_type: JOINT gives p(targets | evidence); MARGINAL gives
        p(target | evidence) for each target separately; CONDITIONAL gives
        p(targets | E) for every configuration of the evidence variables E,
        ignoring the evidence levels, with undefined rows where E is
        impossible
    """
    logger = logging.getLogger(__name__)
    query_type = QueryType(query_type)
    dag = bn.dag
    if query_type is QueryType.JOINT:
        probabilities = query(bn, Query(tuple(targets), evidence))
        return reports.query_table(dag, targets, probabilities)
    if query_type is QueryType.MARGINAL:
        return reports.marginal_table(
            dag, {t: query(bn, Query((t,), evidence)) for t in targets}
        )

    given = sorted(evidence)
    if not given:
        raise QueryError("A conditional query needs at least one evidence variable")
    given_cards = tuple(dag.variables[v].cardinality for v in given)
    target_shape = tuple(dag.variables[t].cardinality for t in targets)
    table = np.full((int(np.prod(given_cards)),) + target_shape, np.nan)
    for j in range(table.shape[0]):
        config = dict(zip(given, config_values(given_cards, j)))
        try:
            table[j] = query(bn, Query(tuple(targets), config))
        except ImpossibleEvidenceError:
            logger.info(f"Evidence configuration {j + 1} is impossible")
    return reports.query_table(dag, targets, table, given)


def monitor_global(
    dag: Dag,
    data: Dataset,
    alpha: Optional[float] = None,
    plugin: bool = False,
) -> ReportDocument:
    logger = logging.getLogger(__name__)
    report = global_monitor(
        dag,
        data,
        default_prior(dag, alpha),
        Predictive.PLUGIN if plugin else Predictive.PREQUENTIAL,
    )
    worst = int(np.argmax(report.scores)) if len(report.scores) else None
    logger.info(f"Total negative log likelihood: {report.total:.6g}")
    if worst is not None and len(data):
        logger.info(
            f"Largest contribution: {report.names[worst]} "
            f"({report.scores[worst]:.6g})"
        )
    return reports.global_table(report)


def _monitor_result(
    series: list[MonitorSeries], dag: Dag, data: Dataset
) -> MonitorResult:
    logger = logging.getLogger(__name__)
    num_exceedances = sum(len(s.exceedances()) for s in series)
    num_undefined = sum(int((~s.defined).sum()) for s in series)
    for s in series:
        flagged = s.exceedances()
        if len(flagged):
            logger.info(
                f"{dag.names[s.node]}: |Z| > threshold at {len(flagged)} of "
                f"{len(s)} steps, first at row {int(s.rows[flagged[0]]) + 1}"
            )
    if num_undefined:
        logger.info(f"{num_undefined} monitor values are undefined (zero variance)")
    return MonitorResult(
        report=reports.monitor_table(series, dag, data),
        series=series,
        num_exceedances=num_exceedances,
        num_undefined=num_undefined,
    )


def monitor_nodes(
    dag: Dag,
    data: Dataset,
    kind: Union[MonitorKind, str] = MonitorKind.MARGINAL,
    nodes: Iterable[Union[int, str]] = (),
    alpha: Optional[float] = None,
    show_progress: bool = False,
    plot: Optional[Union[str, PathLike]] = None,
) -> MonitorResult:
    """
    Sequential marginal or conditional node monitors.

    :param nodes: the monitored nodes; all nodes if empty
    :param plot: optional path of an SVG chart of the Z scores
    """
    kind = MonitorKind(kind)
    if kind is MonitorKind.PARENT_CHILD:
        raise QueryError("Use monitor_parent_child for parent-child monitors")
    monitor = seq_marg_monitor if kind is MonitorKind.MARGINAL else seq_cond_monitor
    prior = default_prior(dag, alpha)
    selected = list(nodes) or list(range(len(dag)))
    series = [
        monitor(dag, data, node, prior, show_progress=show_progress)
        for node in selected
    ]
    if plot is not None:
        reports.plot_monitors(series, dag, plot)
    return _monitor_result(series, dag, data)


def monitor_parent_child(
    dag: Dag,
    data: Dataset,
    node: Union[int, str],
    parent_values: Optional[Sequence[str]] = None,
    alpha: Optional[float] = None,
    plot: Optional[Union[str, PathLike]] = None,
) -> MonitorResult:
    """
    Parent-child monitors of one node.

    :param parent_values: parent levels in the DAG's parent order; every
        parent configuration if None
    """
    logger = logging.getLogger(__name__)
    prior = default_prior(dag, alpha)
    index = dag.index(node) if isinstance(node, str) else node
    if parent_values is None:
        series = pa_ch_monitors(dag, data, index, prior)
    else:
        series = [
            seq_pa_ch_monitor(
                dag, data, index, dag.parents(index), parent_values, prior
            )
        ]
    for s in series:
        if not len(s):
            logger.info(
                f"No rows match parent configuration {s.parent_config} "
                f"of {dag.names[index]}"
            )
    if plot is not None:
        reports.plot_monitors(series, dag, plot)
    return _monitor_result(series, dag, data)


def influence(
    dag: Dag,
    data: Dataset,
    alpha: Optional[float] = None,
    threshold: Optional[float] = None,
) -> ReportDocument:
    logger = logging.getLogger(__name__)
    report = influential_obs(dag, data, default_prior(dag, alpha))
    if threshold is not None:
        above = report.unique_above(data, threshold)
        logger.info(f"{len(above)} distinct rows with influence above {threshold}")
    return reports.influence_table(report, data, threshold)


def sensitivity_analysis(
    bn: DiscreteBn,
    q: Query,
    param: ParamRef,
    new_values: Union[str, Sequence[float]] = "all",
    scheme: Union[CovariationScheme, str] = CovariationScheme.PROPORTIONAL,
    plot: Optional[Union[str, PathLike]] = None,
) -> ReportDocument:
    logger = logging.getLogger(__name__)
    result = sensitivity(bn, q, param, new_values, CovariationScheme(scheme))
    a, b, c, d = result.coefficients
    logger.info(
        f"Sensitivity function ({a:.6g} t + {b:.6g}) / ({c:.6g} t + {d:.6g}), "
        f"original value {result.original_value:.6g}"
    )
    if plot is not None:
        reports.plot_sensitivity(result, bn.dag, plot)
    return reports.sensitivity_table(result, bn.dag)


def distance_analysis(
    bn: DiscreteBn,
    param: ParamRef,
    new_values: Union[str, Sequence[float]] = "all",
    scheme: Union[CovariationScheme, str] = CovariationScheme.PROPORTIONAL,
    measures: Sequence[str] = ("cd",),
    method: Union[DistanceMethod, str] = DistanceMethod.AUTO,
    plot: Optional[Union[str, PathLike]] = None,
) -> ReportDocument:
    result = distances(
        bn,
        param,
        new_values,
        CovariationScheme(scheme),
        DistanceMethod(method),
        measures=measures,
    )
    if plot is not None:
        reports.plot_distances(result, bn.dag, plot)
    return reports.distance_table(result, bn.dag)


def sensquery_analysis(
    bn: DiscreteBn,
    q: Query,
    target: float,
    show_progress: bool = False,
) -> ReportDocument:
    result = sensquery(bn, q, target, show_progress=show_progress)
    return reports.sensquery_table(result, bn.dag)


def simulate(bn: DiscreteBn, rows: int, seed: Optional[int] = None) -> Dataset:
    logger = logging.getLogger(__name__)
    if rows < 0:
        raise QueryError(f"Number of rows must be nonnegative, got {rows}")
    data = forward_sample(bn, rows, seed)
    logger.info(f"Simulated {rows} rows (seed {seed})")
    return data
