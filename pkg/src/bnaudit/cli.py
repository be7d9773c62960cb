#!/usr/bin/env python
from __future__ import annotations

import functools
import logging
from collections.abc import Iterable, Iterator
from contextlib import contextmanager
from os import PathLike
from pathlib import Path
from typing import Any, Optional, Union

import click

from bnaudit import (
    BnAuditBaseException,
    BnAuditComputationError,
    BnAuditInputError,
    version,
)
from bnaudit.actions import actions, ingest
from bnaudit.actions.reports import REPORT_FORMATS, ReportDocument
from bnaudit.inference import Query, QueryError
from bnaudit.model import Dag, Dataset, DiscreteBn, ParamRef
from bnaudit.monitors import MonitorKind
from bnaudit.netfile import NetworkFile
from bnaudit.sensitivity import CovariationScheme, DistanceMethod

EXIT_INPUT_ERROR = 2
EXIT_COMPUTATION_ERROR = 3
COVARIATION_SCHEMES = tuple(s.value for s in CovariationScheme)
DISTANCE_METHODS = tuple(m.value for m in DistanceMethod)


def config_logging(debug: bool = False):
    if debug:
        logging.basicConfig(
            level=logging.DEBUG,
            format="%(levelname)s:%(name)s: %(message)s",
        )
    else:
        logging.basicConfig(
            level=logging.INFO,
            format="%(message)s",
        )


def click_exit(value: int = 0):
    ctx = click.get_current_context()
    ctx.exit(value)


def exit_codes(func):
    """Exit with status 2 on input errors and 3 on computation errors."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        logger = logging.getLogger(__name__)
        try:
            return func(*args, **kwargs)
        except BnAuditInputError as e:
            logger.error(f"Error: {e}")
            click_exit(EXIT_INPUT_ERROR)
        except BnAuditComputationError as e:
            logger.error(f"Computation failed: {e}")
            click_exit(EXIT_COMPUTATION_ERROR)

    return wrapper


@contextmanager
def input_context(flag: str, value: Any) -> Iterator[None]:
    """Prefix errors raised while handling an option with the option."""
    try:
        yield
    except BnAuditBaseException as e:
        e.args = (f"{flag} {value}: {e}",) + e.args[1:]
        raise


def parse_assignments(values: Iterable[str], flag: str) -> dict[str, str]:
    """``N=v[,N=v]`` pairs from one or more option values."""
    result: dict[str, str] = {}
    for value in values:
        for item in value.split(","):
            if not item.strip():
                continue
            name, sep, level = item.partition("=")
            if not sep or not name.strip() or not level.strip():
                raise click.BadParameter(
                    f"expected NAME=VALUE, got {item!r}", param_hint=flag
                )
            if name.strip() in result:
                raise click.BadParameter(
                    f"{name.strip()} is given twice", param_hint=flag
                )
            result[name.strip()] = level.strip()
    return result


def parse_list(value: Optional[str]) -> Optional[list[str]]:
    if value is None:
        return None
    return [v.strip() for v in value.split(",") if v.strip()]


def parse_new_values(value: str) -> Union[str, list[float]]:
    if value.strip() == "all":
        return "all"
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(
            f"expected 'all' or comma-separated numbers, got {value!r}",
            param_hint="--new-value",
        ) from None


def load_inputs(
    dag_path: Union[str, PathLike],
    data_path: Optional[Union[str, PathLike]] = None,
    method: str = actions.FitMethod.MLE.value,
    alpha: Optional[float] = None,
    require_network: bool = False,
) -> tuple[NetworkFile, Optional[DiscreteBn], Optional[Dataset]]:
    """
    Read the network file and dataset.

    With a dataset, CPTs are fitted to it; otherwise the CPTs of the network
    file are used.
    """
    with input_context("--dag", dag_path):
        network_file = NetworkFile.from_file(dag_path)
    data = None
    bn = network_file.network
    if data_path is not None:
        with input_context("--data", data_path):
            data = ingest.load_dataset(data_path, network_file.dag.variables)
        if require_network:
            bn = actions.fit(network_file.dag, data, method, alpha)
    if require_network and bn is None:
        raise BnAuditInputError(
            f"--dag {dag_path}: network file has no CPTs; pass --data to fit them"
        )
    return network_file, bn, data


def emit(
    document: ReportDocument,
    fmt: str,
    out: Optional[Union[str, PathLike]],
    metadata: Optional[dict[str, Any]] = None,
):
    payload = document.render(fmt, metadata)
    if out is None:
        click.echo(payload.decode("utf-8"), nl=False)
    else:
        Path(out).write_bytes(payload)
        logging.getLogger(__name__).debug(f"Wrote {document.analysis} to {out}")


def run_metadata(
    enabled: bool,
    network_file: NetworkFile,
    data_path: Optional[Union[str, PathLike]] = None,
) -> Optional[dict[str, Any]]:
    if not enabled:
        return None
    metadata: dict[str, Any] = {
        "bnaudit": version,
        "network": network_file.fingerprint,
    }
    if data_path is not None:
        metadata["data"] = Path(data_path).name
    return metadata


def query_from_options(
    dag: Dag, interest: dict[str, str], evidence: dict[str, str]
) -> Query:
    if not interest:
        raise QueryError("No query outcome given")
    return Query.from_labels(
        dag, list(interest), evidence, outcome=list(interest.values())
    )


def param_from_options(
    dag: Dag, node: str, value_node: str, value_parents: Optional[str]
) -> ParamRef:
    with input_context("--node", node):
        return ParamRef.from_labels(
            dag, node, value_node, parse_list(value_parents) or []
        )


# fmt: off
dag_option = click.option(
    "--dag", "dag_path", type=click.Path(dir_okay=False, exists=True),
    required=True,
    help="Network file (.json). Extensions .gz or .zst are decompressed.")
data_option = click.option(
    "--data", "data_path", type=click.Path(dir_okay=False, exists=True),
    help="Dataset CSV with a header row of variable names")
required_data_option = click.option(
    "--data", "data_path", type=click.Path(dir_okay=False, exists=True),
    required=True,
    help="Dataset CSV with a header row of variable names")
alpha_option = click.option(
    "--alpha", type=float, default=None,
    help="Dirichlet hyperparameter for every CPT entry "
         "(default: number of levels of the node)")
method_option = click.option(
    "--method", type=click.Choice(actions.FIT_METHODS), default="mle",
    help="How CPTs are fitted to --data (default=mle)")
format_option = click.option(
    "--format", "fmt", type=click.Choice(REPORT_FORMATS), default="csv",
    help="Report format (default=csv)")
out_option = click.option(
    "--out", type=click.Path(dir_okay=False), default=None,
    help="Write the report to this file instead of stdout")
plot_option = click.option(
    "--plot", type=click.Path(dir_okay=False), default=None,
    help="Also draw an SVG chart to this file")
metadata_option = click.option(
    "--metadata/--no-metadata", default=False,
    help="Prefix the report with the version and network fingerprint")
progress_option = click.option(
    "--progress/--no-progress", default=True,
    help="Show progress bars")
debug_option = click.option(
    "--debug", default=False, is_flag=True,
    help="Run in debug mode")
evidence_option = click.option(
    "--evidence", multiple=True,
    help="Observed values, NAME=VALUE[,NAME=VALUE]")
param_options = [
    click.option("--node", required=True,
                 help="Node of the varied CPT entry"),
    click.option("--value-node", required=True,
                 help="Level of the varied CPT entry"),
    click.option("--value-parents", default=None,
                 help="Parent levels of the varied CPT entry, comma-separated "
                      "in the network's parent order"),
    click.option("--new-value", default="all",
                 help="'all' (101 points on [0, 1]) or comma-separated values"),
    click.option("--covariation", type=click.Choice(COVARIATION_SCHEMES),
                 default="proportional",
                 help="How the rest of the row follows the varied entry "
                      "(default=proportional)"),
]
# fmt: on


def with_options(options):
    def decorator(func):
        for option in reversed(options):
            func = option(func)
        return func

    return decorator


# fmt: off
@click.command("query", help="Query probabilities of the network")
@dag_option
@data_option
@method_option
@alpha_option
@click.option("--target", "targets", multiple=True, required=True,
              help="Query variable (repeatable)")
@evidence_option
@click.option("--type", "query_type", type=click.Choice(actions.QUERY_TYPES),
              default="joint",
              help="joint: p(targets | evidence); marginal: each target "
                   "separately; conditional: a table over every evidence "
                   "configuration (default=joint)")
@format_option
@out_option
@metadata_option
@debug_option
# fmt: on
@exit_codes
def _query(
    dag_path: Union[str, PathLike],
    targets: tuple[str, ...],
    evidence: tuple[str, ...] = (),
    data_path: Optional[Union[str, PathLike]] = None,
    method: str = "mle",
    alpha: Optional[float] = None,
    query_type: str = "joint",
    fmt: str = "csv",
    out: Optional[Union[str, PathLike]] = None,
    metadata: bool = False,
    debug: bool = False,
):
    config_logging(debug=debug)
    network_file, bn, _ = load_inputs(
        dag_path, data_path, method, alpha, require_network=True
    )
    assert bn is not None
    dag = bn.dag
    evidence_labels = parse_assignments(evidence, "--evidence")
    with input_context("--evidence", ",".join(evidence)):
        given = {
            dag.index(name): dag.variable(name).index(level)
            for name, level in evidence_labels.items()
        }
    with input_context("--target", ",".join(targets)):
        target_idx = [dag.index(t) for t in targets]
    document = actions.run_query(bn, target_idx, given, query_type)
    emit(document, fmt, out, run_metadata(metadata, network_file, data_path))


# fmt: off
@click.command("fit", help="Fit CPTs to data and write a network file")
@dag_option
@required_data_option
@method_option
@alpha_option
@out_option
@debug_option
# fmt: on
@exit_codes
def _fit(
    dag_path: Union[str, PathLike],
    data_path: Union[str, PathLike],
    method: str = "mle",
    alpha: Optional[float] = None,
    out: Optional[Union[str, PathLike]] = None,
    debug: bool = False,
):
    config_logging(debug=debug)
    network_file, bn, _ = load_inputs(
        dag_path, data_path, method, alpha, require_network=True
    )
    assert bn is not None
    fitted = NetworkFile.from_network(bn)
    if out is None:
        click.echo(fitted.to_json(pretty=True).decode("utf-8"))
    else:
        fitted.to_file(out)
        logging.getLogger(__name__).info(f"Saved fitted network to {out}")


@click.group("monitor", help="Prequential monitors of a network against data")
def _monitor():
    pass


# fmt: off
@click.command("global", help="Contribution of each node to the log likelihood")
@dag_option
@required_data_option
@alpha_option
@click.option("--plugin", default=False, is_flag=True,
              help="Score rows with the full-data posterior mean instead of "
                   "one-step-ahead predictions")
@format_option
@out_option
@metadata_option
@debug_option
# fmt: on
@exit_codes
def _monitor_global(
    dag_path: Union[str, PathLike],
    data_path: Union[str, PathLike],
    alpha: Optional[float] = None,
    plugin: bool = False,
    fmt: str = "csv",
    out: Optional[Union[str, PathLike]] = None,
    metadata: bool = False,
    debug: bool = False,
):
    config_logging(debug=debug)
    network_file, _, data = load_inputs(dag_path, data_path)
    assert data is not None
    document = actions.monitor_global(network_file.dag, data, alpha, plugin)
    emit(document, fmt, out, run_metadata(metadata, network_file, data_path))


def _node_monitor_command(kind: MonitorKind, help_text: str):
    # fmt: off
    @click.command(kind.value, help=help_text)
    @dag_option
    @required_data_option
    @alpha_option
    @click.option("--node", "nodes", multiple=True,
                  help="Monitored node (repeatable, default: every node)")
    @format_option
    @out_option
    @plot_option
    @metadata_option
    @progress_option
    @debug_option
    # fmt: on
    @exit_codes
    def command(
        dag_path: Union[str, PathLike],
        data_path: Union[str, PathLike],
        alpha: Optional[float] = None,
        nodes: tuple[str, ...] = (),
        fmt: str = "csv",
        out: Optional[Union[str, PathLike]] = None,
        plot: Optional[Union[str, PathLike]] = None,
        metadata: bool = False,
        progress: bool = True,
        debug: bool = False,
    ):
        config_logging(debug=debug)
        network_file, _, data = load_inputs(dag_path, data_path)
        assert data is not None
        with input_context("--node", ",".join(nodes)):
            selected = [network_file.dag.index(n) for n in nodes]
        result = actions.monitor_nodes(
            network_file.dag,
            data,
            kind,
            selected,
            alpha=alpha,
            show_progress=progress,
            plot=plot,
        )
        emit(
            result["report"],
            fmt,
            out,
            run_metadata(metadata, network_file, data_path),
        )

    return command


# fmt: off
@click.command("pa-ch", help="Parent-child monitors of one node")
@dag_option
@required_data_option
@alpha_option
@click.option("--node", required=True, help="Monitored node")
@click.option("--value-parents", default=None,
              help="Parent levels, comma-separated in the network's parent "
                   "order (default: every parent configuration)")
@format_option
@out_option
@plot_option
@metadata_option
@debug_option
# fmt: on
@exit_codes
def _monitor_pa_ch(
    dag_path: Union[str, PathLike],
    data_path: Union[str, PathLike],
    node: str,
    value_parents: Optional[str] = None,
    alpha: Optional[float] = None,
    fmt: str = "csv",
    out: Optional[Union[str, PathLike]] = None,
    plot: Optional[Union[str, PathLike]] = None,
    metadata: bool = False,
    debug: bool = False,
):
    config_logging(debug=debug)
    network_file, _, data = load_inputs(dag_path, data_path)
    assert data is not None
    with input_context("--node", node):
        network_file.dag.index(node)
    with input_context("--value-parents", value_parents):
        result = actions.monitor_parent_child(
            network_file.dag,
            data,
            node,
            parse_list(value_parents),
            alpha=alpha,
            plot=plot,
        )
    emit(result["report"], fmt, out, run_metadata(metadata, network_file, data_path))


_monitor.add_command(_monitor_global)
_monitor.add_command(
    _node_monitor_command(
        MonitorKind.MARGINAL, "Sequential marginal node monitors"
    )
)
_monitor.add_command(
    _node_monitor_command(
        MonitorKind.CONDITIONAL,
        "Sequential node monitors given the other values of each row",
    )
)
_monitor.add_command(_monitor_pa_ch)


# fmt: off
@click.command("influence", help="Influence of each row on the log likelihood")
@dag_option
@required_data_option
@alpha_option
@click.option("--threshold", type=float, default=None,
              help="Only list distinct rows scoring above this value")
@format_option
@out_option
@metadata_option
@debug_option
# fmt: on
@exit_codes
def _influence(
    dag_path: Union[str, PathLike],
    data_path: Union[str, PathLike],
    alpha: Optional[float] = None,
    threshold: Optional[float] = None,
    fmt: str = "csv",
    out: Optional[Union[str, PathLike]] = None,
    metadata: bool = False,
    debug: bool = False,
):
    config_logging(debug=debug)
    network_file, _, data = load_inputs(dag_path, data_path)
    assert data is not None
    document = actions.influence(network_file.dag, data, alpha, threshold)
    emit(document, fmt, out, run_metadata(metadata, network_file, data_path))


# fmt: off
@click.command("sensitivity",
               help="Query probability as a function of one CPT entry")
@dag_option
@data_option
@method_option
@alpha_option
@with_options(param_options)
@click.option("--interest-node", required=True, help="Query variable")
@click.option("--interest-value", required=True, help="Level of the query variable")
@evidence_option
@format_option
@out_option
@plot_option
@metadata_option
@debug_option
# fmt: on
@exit_codes
def _sensitivity(
    dag_path: Union[str, PathLike],
    node: str,
    value_node: str,
    interest_node: str,
    interest_value: str,
    value_parents: Optional[str] = None,
    new_value: str = "all",
    covariation: str = "proportional",
    evidence: tuple[str, ...] = (),
    data_path: Optional[Union[str, PathLike]] = None,
    method: str = "mle",
    alpha: Optional[float] = None,
    fmt: str = "csv",
    out: Optional[Union[str, PathLike]] = None,
    plot: Optional[Union[str, PathLike]] = None,
    metadata: bool = False,
    debug: bool = False,
):
    config_logging(debug=debug)
    network_file, bn, _ = load_inputs(
        dag_path, data_path, method, alpha, require_network=True
    )
    assert bn is not None
    param = param_from_options(bn.dag, node, value_node, value_parents)
    with input_context("--interest-node", interest_node):
        q = query_from_options(
            bn.dag,
            {interest_node: interest_value},
            parse_assignments(evidence, "--evidence"),
        )
    document = actions.sensitivity_analysis(
        bn, q, param, parse_new_values(new_value), covariation, plot
    )
    emit(document, fmt, out, run_metadata(metadata, network_file, data_path))


def _distance_command(name: str, measures: tuple[str, ...], help_text: str):
    # fmt: off
    @click.command(name, help=help_text)
    @dag_option
    @data_option
    @method_option
    @alpha_option
    @with_options(param_options)
    @click.option("--distance-method", type=click.Choice(DISTANCE_METHODS),
                  default="auto",
                  help="local: single-row formulas; enumerate: full joint; "
                       "auto: enumerate small joints for KL (default=auto)")
    @format_option
    @out_option
    @plot_option
    @metadata_option
    @debug_option
    # fmt: on
    @exit_codes
    def command(
        dag_path: Union[str, PathLike],
        node: str,
        value_node: str,
        value_parents: Optional[str] = None,
        new_value: str = "all",
        covariation: str = "proportional",
        distance_method: str = "auto",
        data_path: Optional[Union[str, PathLike]] = None,
        method: str = "mle",
        alpha: Optional[float] = None,
        fmt: str = "csv",
        out: Optional[Union[str, PathLike]] = None,
        plot: Optional[Union[str, PathLike]] = None,
        metadata: bool = False,
        debug: bool = False,
    ):
        config_logging(debug=debug)
        network_file, bn, _ = load_inputs(
            dag_path, data_path, method, alpha, require_network=True
        )
        assert bn is not None
        param = param_from_options(bn.dag, node, value_node, value_parents)
        document = actions.distance_analysis(
            bn,
            param,
            parse_new_values(new_value),
            covariation,
            measures,
            distance_method,
            plot,
        )
        emit(document, fmt, out, run_metadata(metadata, network_file, data_path))

    return command


# fmt: off
@click.command("sensquery",
               help="Single CPT changes that bring a query to a target "
                    "probability, by increasing CD distance")
@dag_option
@data_option
@method_option
@alpha_option
@click.option("--target", "target", required=True,
              help="Query outcome, NAME=VALUE[,NAME=VALUE]")
@click.option("--target-value", "--value", "target_value", type=float,
              required=True, help="Required probability, in (0, 1)")
@evidence_option
@format_option
@out_option
@metadata_option
@progress_option
@debug_option
# fmt: on
@exit_codes
def _sensquery(
    dag_path: Union[str, PathLike],
    target: str,
    target_value: float,
    evidence: tuple[str, ...] = (),
    data_path: Optional[Union[str, PathLike]] = None,
    method: str = "mle",
    alpha: Optional[float] = None,
    fmt: str = "csv",
    out: Optional[Union[str, PathLike]] = None,
    metadata: bool = False,
    progress: bool = True,
    debug: bool = False,
):
    config_logging(debug=debug)
    network_file, bn, _ = load_inputs(
        dag_path, data_path, method, alpha, require_network=True
    )
    assert bn is not None
    with input_context("--target", target):
        q = query_from_options(
            bn.dag,
            parse_assignments([target], "--target"),
            parse_assignments(evidence, "--evidence"),
        )
    document = actions.sensquery_analysis(bn, q, target_value, show_progress=progress)
    emit(document, fmt, out, run_metadata(metadata, network_file, data_path))


# fmt: off
@click.command("prep-pima",
               help="Prepare the binary diabetes dataset from the raw Pima "
                    "Indians Diabetes file")
@click.argument("raw", type=click.Path(dir_okay=False, exists=True))
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Dataset CSV to write")
@debug_option
# fmt: on
@exit_codes
def _prep_pima(
    raw: Union[str, PathLike],
    out: Union[str, PathLike],
    debug: bool = False,
):
    config_logging(debug=debug)
    data = ingest.prepare_pima(raw)
    ingest.write_dataset(data, out)
    logging.getLogger(__name__).info(f"Wrote {len(data)} rows to {out}")


# fmt: off
@click.command("simulate", help="Sample a dataset from a network")
@dag_option
@click.option("--rows", type=int, required=True, help="Number of rows")
@click.option("--seed", type=int, default=None, help="Random seed")
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Dataset CSV to write")
@debug_option
# fmt: on
@exit_codes
def _simulate(
    dag_path: Union[str, PathLike],
    rows: int,
    out: Union[str, PathLike],
    seed: Optional[int] = None,
    debug: bool = False,
):
    config_logging(debug=debug)
    _, bn, _ = load_inputs(dag_path, require_network=True)
    assert bn is not None
    ingest.write_dataset(actions.simulate(bn, rows, seed), out)


CONTEXT_SETTINGS = dict(help_option_names=["-h", "--help"])


# fmt: off
@click.group(context_settings=CONTEXT_SETTINGS)
@click.version_option(version=version, prog_name="bnaudit",
                      message="%(prog)s %(version)s")
# fmt: on
def main():
    pass


main.add_command(_query)
main.add_command(_fit)
main.add_command(_monitor)
main.add_command(_influence)
main.add_command(_sensitivity)
main.add_command(
    _distance_command("cd", ("cd",), "CD distance along a grid of new values")
)
main.add_command(
    _distance_command(
        "kl", ("kl", "jeffreys"), "KL divergence and Jeffreys distance along a grid"
    )
)
main.add_command(_sensquery)
main.add_command(_prep_pima)
main.add_command(_simulate)


def _init():
    if __name__ == "__main__":
        main()


_init()
