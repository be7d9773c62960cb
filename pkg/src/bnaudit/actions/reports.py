"""Tables, serialized reports and line charts for every analysis.

CSV tables print numbers with 6 significant digits, undefined values as
``undefined`` and infinite ones as ``inf``. JSON reports keep full
precision and write both undefined and infinite values as ``null``.
"""
from __future__ import annotations

import io
import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from os import PathLike
from typing import Any, Optional, Union

import matplotlib
import numpy as np
import orjson
import pandas as pd
from matplotlib.figure import Figure

from bnaudit.inference import Query
from bnaudit.model import Dag, Dataset, config_values
from bnaudit.monitors import (
    Z_THRESHOLD,
    GlobalMonitorReport,
    InfluenceReport,
    MonitorSeries,
)
from bnaudit.sensitivity import (
    DistanceResult,
    SensitivityResult,
    SensQueryResult,
)

UNDEFINED = "undefined"
FLOAT_FORMAT = "%.6g"


class ReportFormat(Enum):
    CSV = "csv"
    JSON = "json"


REPORT_FORMATS = tuple(f.value for f in ReportFormat)


@dataclass
class ReportDocument:
    """
    The result of one analysis.

    :param analysis: name of the analysis
    :param table: the tabular result
    :param extra: scalar results that are not part of the table; JSON only
    """

    analysis: str
    table: pd.DataFrame
    extra: dict[str, Any] = field(default_factory=dict)

    def to_csv(self, metadata: Optional[Mapping[str, Any]] = None) -> bytes:
        buffer = io.StringIO()
        if metadata:
            for key, value in metadata.items():
                buffer.write(f"# {key}: {value}\n")
        self.table.to_csv(
            buffer,
            index=False,
            float_format=FLOAT_FORMAT,
            na_rep=UNDEFINED,
            lineterminator="\n",
        )
        return buffer.getvalue().encode("utf-8")

    def to_json(self, metadata: Optional[Mapping[str, Any]] = None) -> bytes:
        doc: dict[str, Any] = {"analysis": self.analysis}
        if metadata:
            doc["metadata"] = dict(metadata)
        doc.update(self.extra)
        doc["columns"] = [str(c) for c in self.table.columns]
        doc["rows"] = [
            {str(k): _json_value(v) for k, v in record.items()}
            for record in self.table.to_dict(orient="records")
        ]
        return orjson.dumps(
            doc, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY
        )

    def render(
        self,
        fmt: Union[ReportFormat, str] = ReportFormat.CSV,
        metadata: Optional[Mapping[str, Any]] = None,
    ) -> bytes:
        if ReportFormat(fmt) is ReportFormat.JSON:
            return self.to_json(metadata) + b"\n"
        return self.to_csv(metadata)


def _json_value(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return float(value) if np.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def _labels(dag: Dag, nodes: Sequence[int], levels: Sequence[int]) -> str:
    return ";".join(
        f"{dag.names[n]}={dag.variables[n].levels[v]}" for n, v in zip(nodes, levels)
    )


def global_table(report: GlobalMonitorReport) -> ReportDocument:
    table = pd.DataFrame({"node": list(report.names), "score": report.scores})
    return ReportDocument(
        "global-monitor",
        table,
        {"predictive": report.predictive.value, "total": report.total},
    )


def monitor_table(
    series: Iterable[MonitorSeries], dag: Dag, data: Dataset
) -> ReportDocument:
    """One line per monitor step; ``step`` and ``row`` are 1-based."""
    frames = []
    kind = "node-monitor"
    for s in series:
        kind = f"{s.kind.value}-monitor"
        node = dag.names[s.node]
        levels = dag.variables[s.node].levels
        observed = [levels[int(data.rows[r, s.node])] for r in s.rows]
        frame = pd.DataFrame(
            {
                "node": node,
                "parents": (
                    _labels(dag, dag.parents(s.node), s.parent_config)
                    if s.parent_config is not None
                    else ""
                ),
                "step": np.arange(1, len(s) + 1),
                "row": s.rows + 1,
                "observed": observed,
                "score": s.score,
                "expectation": s.expectation,
                "variance": s.variance,
                "z": s.z,
            }
        )
        frames.append(frame)
    columns = [
        "node",
        "parents",
        "step",
        "row",
        "observed",
        "score",
        "expectation",
        "variance",
        "z",
    ]
    table = (
        pd.concat(frames, ignore_index=True)
        if frames
        else pd.DataFrame(columns=columns)
    )
    if kind != "parent-child-monitor":
        table = table.drop(columns="parents")
    return ReportDocument(kind, table, {"threshold": Z_THRESHOLD})


def influence_table(
    report: InfluenceReport, data: Dataset, threshold: Optional[float] = None
) -> ReportDocument:
    """Influence score of every row, or of the distinct rows above
    ``threshold`` by decreasing score."""
    if threshold is None:
        indices = list(range(len(report)))
    else:
        indices = [i for i, _ in report.unique_above(data, threshold)]
    table = pd.DataFrame({"row": [i + 1 for i in indices]})
    for c, name in enumerate(data.names):
        levels = data.variables[c].levels
        table[name] = [levels[int(data.rows[i, c])] for i in indices]
    table["score"] = report.scores[indices] if indices else np.array([], dtype=float)
    extra: dict[str, Any] = {"log_likelihood": report.log_likelihood}
    if threshold is not None:
        extra["threshold"] = threshold
    return ReportDocument("influence", table, extra)


def sensitivity_table(result: SensitivityResult, dag: Dag) -> ReportDocument:
    a, b, c, d = result.coefficients
    return ReportDocument(
        "sensitivity",
        pd.DataFrame(
            {"new_value": result.new_values, "probability": result.probabilities}
        ),
        {
            "parameter": _param_doc(result.param, dag),
            "query": _query_doc(result.query, dag),
            "scheme": result.scheme.value,
            "original_value": result.original_value,
            "coefficients": {"a": a, "b": b, "c": c, "d": d},
        },
    )


def distance_table(result: DistanceResult, dag: Dag) -> ReportDocument:
    table = pd.DataFrame({"new_value": result.new_values})
    for name in ("cd", "kl", "jeffreys"):
        column = getattr(result, name)
        if column is not None:
            table[name] = column
    return ReportDocument(
        "distances",
        table,
        {
            "parameter": _param_doc(result.param, dag),
            "scheme": result.scheme.value,
            "original_value": result.original_value,
        },
    )


def sensquery_table(result: SensQueryResult, dag: Dag) -> ReportDocument:
    records = []
    for row in result.rows:
        name, level, _ = row.param.labels(dag)
        records.append(
            {
                "node": name,
                "value": level,
                "parents": _labels(
                    dag, dag.parents(row.param.node), row.param.parent_config
                ),
                "original_value": row.original_value,
                "suggested_value": row.suggested_value,
                "cd": row.cd,
            }
        )
    columns = ["node", "value", "parents", "original_value", "suggested_value", "cd"]
    return ReportDocument(
        "sensquery",
        pd.DataFrame.from_records(records, columns=columns),
        {
            "query": _query_doc(result.query, dag),
            "target": result.target,
            "current": result.current,
        },
    )


def query_table(
    dag: Dag,
    targets: Sequence[int],
    probabilities: np.ndarray,
    given: Sequence[int] = (),
) -> ReportDocument:
    """
    Tabulate a query result.

    :param probabilities: array with one axis per variable in ``given``
        followed by one axis per target
    :param given: conditioning variables enumerated in the table
    """
    axes = list(given) + list(targets)
    cards = tuple(dag.variables[v].cardinality for v in axes)
    flat = np.asarray(probabilities, dtype=float).reshape(-1)
    records = []
    for index, p in enumerate(flat):
        levels = config_values(cards, index)
        record: dict[str, Any] = {
            dag.names[v]: dag.variables[v].levels[k] for v, k in zip(axes, levels)
        }
        record["probability"] = p
        records.append(record)
    columns = [dag.names[v] for v in axes] + ["probability"]
    return ReportDocument(
        "query",
        pd.DataFrame.from_records(records, columns=columns),
        {
            "targets": [dag.names[v] for v in targets],
            "given": [dag.names[v] for v in given],
        },
    )


def marginal_table(dag: Dag, distributions: Mapping[int, np.ndarray]) -> ReportDocument:
    """One block of (node, level, probability) lines per target."""
    table = pd.DataFrame(
        {
            "node": [dag.names[t] for t, p in distributions.items() for _ in p],
            "level": [lv for t in distributions for lv in dag.variables[t].levels],
            "probability": np.concatenate(
                [np.ravel(p) for p in distributions.values()]
            )
            if distributions
            else np.array([], dtype=float),
        }
    )
    return ReportDocument(
        "query", table, {"targets": [dag.names[t] for t in distributions]}
    )


def _param_doc(param, dag: Dag) -> dict[str, Any]:
    name, level, parent_levels = param.labels(dag)
    return {
        "node": name,
        "value": level,
        "parents": dict(
            zip((dag.names[p] for p in dag.parents(param.node)), parent_levels)
        ),
    }


def _query_doc(query: Query, dag: Dag) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "targets": [dag.names[t] for t in query.targets],
        "evidence": {
            dag.names[k]: dag.variables[k].levels[v] for k, v in query.evidence
        },
    }
    if query.outcome is not None:
        doc["outcome"] = [
            dag.variables[t].levels[v] for t, v in zip(query.targets, query.outcome)
        ]
    return doc


def _save_svg(fig, path: Union[str, PathLike]) -> None:
    logger = logging.getLogger(__name__)
    with matplotlib.rc_context({"svg.hashsalt": "bnaudit", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    logger.debug(f"Saved plot to {path}")


def plot_monitors(
    series: Sequence[MonitorSeries], dag: Dag, path: Union[str, PathLike]
) -> None:
    """Z against monitor step with the +-1.96 bands; undefined steps are
    drawn as hollow markers on the axis."""
    fig = Figure(figsize=(8, 4.5))
    ax = fig.subplots()
    for s in series:
        steps = np.arange(1, len(s) + 1)
        label = dag.names[s.node]
        if s.parent_config is not None and s.parent_config:
            label += f" | {_labels(dag, dag.parents(s.node), s.parent_config)}"
        (line,) = ax.plot(
            steps, s.z, marker=".", markersize=3, linewidth=1, label=label
        )
        undefined = ~s.defined
        if undefined.any():
            ax.plot(
                steps[undefined],
                np.zeros(int(undefined.sum())),
                linestyle="none",
                marker="o",
                markerfacecolor="none",
                color=line.get_color(),
            )
    for level in (Z_THRESHOLD, -Z_THRESHOLD):
        ax.axhline(level, color="grey", linestyle="--", linewidth=1)
    ax.set_xlabel("observation")
    ax.set_ylabel("standardized score")
    ax.grid(True)
    if series:
        ax.legend(loc="best", fontsize="small")
    _save_svg(fig, path)


def plot_sensitivity(
    result: SensitivityResult, dag: Dag, path: Union[str, PathLike]
) -> None:
    fig = Figure(figsize=(6, 4.5))
    ax = fig.subplots()
    ax.plot(result.new_values, result.probabilities, marker=".", linewidth=1)
    ax.axvline(result.original_value, color="grey", linestyle="--", linewidth=1)
    ax.set_xlabel(_param_label(result.param, dag))
    ax.set_ylabel("query probability")
    ax.set_xlim(0, 1)
    ax.grid(True)
    _save_svg(fig, path)


def plot_distances(
    result: DistanceResult, dag: Dag, path: Union[str, PathLike]
) -> None:
    fig = Figure(figsize=(6, 4.5))
    ax = fig.subplots()
    for measure in ("cd", "kl", "jeffreys"):
        column = getattr(result, measure)
        if column is not None:
            shown = np.where(np.isfinite(column), column, np.nan)
            ax.plot(result.new_values, shown, marker=".", linewidth=1, label=measure)
    ax.axvline(result.original_value, color="grey", linestyle="--", linewidth=1)
    ax.set_xlabel(_param_label(result.param, dag))
    ax.set_ylabel("distance")
    ax.set_xlim(0, 1)
    ax.grid(True)
    ax.legend(loc="best", fontsize="small")
    _save_svg(fig, path)


def _param_label(param, dag: Dag) -> str:
    name, level, parents = param.labels(dag)
    condition = _labels(dag, dag.parents(param.node), param.parent_config)
    return f"p({name}={level} | {condition})" if parents else f"p({name}={level})"
