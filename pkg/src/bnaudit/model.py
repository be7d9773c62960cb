from __future__ import annotations

import logging
from collections.abc import Generator, Iterable, Mapping, Sequence
from dataclasses import dataclass
from math import prod
from typing import Optional, Union

import networkx as nx
import numpy as np

from bnaudit import BnAuditInputError

NORMALIZATION_TOLERANCE = 1e-9
ROUNDING_TOLERANCE = 1e-12


class ModelException(BnAuditInputError):
    pass


class VariableError(ModelException):
    pass


class UnknownLevelError(ModelException):
    pass


class DagError(ModelException):
    pass


class CycleError(DagError):
    pass


class ParentMismatchError(ModelException):
    pass


class NormalizationError(ModelException):
    pass


class CardinalityError(ModelException):
    pass


class LevelIndexError(ModelException):
    pass


class DatasetError(ModelException):
    def __init__(
        self,
        message: str,
        row: Optional[int] = None,
        column: Optional[str] = None,
    ):
        super().__init__(message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class Variable:
    """A discrete variable and its ordered sample space

    Attributes:
        :name (str): identifier of the variable
        :levels (tuple[str, ...]): ordered, distinct, case-sensitive level labels
    """

    name: str
    levels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(str(lv) for lv in self.levels))
        if not self.name:
            raise VariableError("Variable name must not be empty")
        if not self.levels:
            raise VariableError(f"Variable {self.name} has no levels")
        if len(set(self.levels)) != len(self.levels):
            raise VariableError(
                f"Variable {self.name} has duplicate levels: {self.levels}"
            )

    @property
    def cardinality(self) -> int:
        return len(self.levels)

    def index(self, label: str) -> int:
        """Level index of a label (labels are case-sensitive)."""
        try:
            return self.levels.index(label)
        except ValueError:
            raise UnknownLevelError(
                f"Unknown level {label!r} for variable {self.name}, "
                f"expected one of {list(self.levels)}"
            ) from None


def config_index(cardinalities: Sequence[int], values: Sequence[int]) -> int:
    """Mixed-radix index of a configuration, last position varying fastest."""
    if len(values) != len(cardinalities):
        raise LevelIndexError(
            f"Expected {len(cardinalities)} level indices, got {len(values)}"
        )
    if not cardinalities:
        return 0
    try:
        return int(np.ravel_multi_index(tuple(int(v) for v in values), cardinalities))
    except ValueError:
        raise LevelIndexError(
            f"Level indices {tuple(values)} out of range for "
            f"cardinalities {tuple(cardinalities)}"
        ) from None


def config_values(cardinalities: Sequence[int], index: int) -> tuple[int, ...]:
    """Inverse of config_index."""
    size = prod(cardinalities)
    if not 0 <= index < size:
        raise LevelIndexError(f"Configuration index {index} out of range [0, {size})")
    if not cardinalities:
        return ()
    return tuple(int(v) for v in np.unravel_index(index, tuple(cardinalities)))


class Dag:
    """A directed acyclic graph over an ordered list of variables.

    Parents of a node are ordered by ascending variable index.
    """

    def __init__(
        self,
        variables: Sequence[Variable],
        edges: Iterable[tuple[int, int]] = (),
    ):
        self._variables: tuple[Variable, ...] = tuple(variables)
        names = [v.name for v in self._variables]
        if len(set(names)) != len(names):
            raise DagError(f"Duplicate variable names: {names}")
        n = len(self._variables)
        edge_list: list[tuple[int, int]] = []
        for edge in edges:
            parent, child = (int(i) for i in edge)
            if not (0 <= parent < n and 0 <= child < n):
                raise DagError(f"Edge {edge} has an endpoint outside [0, {n})")
            if parent == child:
                raise CycleError(f"Self-loop on variable {names[parent]}")
            if (parent, child) in edge_list:
                raise DagError(
                    f"Duplicate edge {names[parent]} -> {names[child]}"
                )
            edge_list.append((parent, child))

        graph = nx.DiGraph()
        graph.add_nodes_from(range(n))
        graph.add_edges_from(edge_list)
        if not nx.is_directed_acyclic_graph(graph):
            cycle = nx.find_cycle(graph)
            raise CycleError(
                "Cycle detected: "
                + " -> ".join(names[u] for u, _ in cycle)
                + f" -> {names[cycle[0][0]]}"
            )
        self._graph = nx.freeze(graph)
        self._edges: tuple[tuple[int, int], ...] = tuple(sorted(edge_list))
        self._parents = tuple(
            tuple(sorted(graph.predecessors(i))) for i in range(n)
        )
        self._children = tuple(tuple(sorted(graph.successors(i))) for i in range(n))
        self._order = tuple(nx.lexicographical_topological_sort(graph))
        self._index = {name: i for i, name in enumerate(names)}

    @classmethod
    def from_names(
        cls,
        variables: Sequence[Variable],
        edges: Iterable[tuple[str, str]] = (),
    ) -> Dag:
        """Build a Dag from (parent name, child name) pairs."""
        index = {v.name: i for i, v in enumerate(variables)}
        int_edges = []
        for parent, child in edges:
            for name in (parent, child):
                if name not in index:
                    raise DagError(f"Edge {parent} -> {child}: unknown variable {name}")
            int_edges.append((index[parent], index[child]))
        return cls(variables, int_edges)

    def __len__(self) -> int:
        return len(self._variables)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dag):
            return NotImplemented
        return self._variables == other._variables and self._edges == other._edges

    def __hash__(self) -> int:
        return hash((self._variables, self._edges))

    def __repr__(self) -> str:
        edges = ", ".join(f"{self.names[p]}->{self.names[c]}" for p, c in self._edges)
        return f"Dag({list(self.names)}, [{edges}])"

    @property
    def variables(self) -> tuple[Variable, ...]:
        return self._variables

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self._variables)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(v.cardinality for v in self._variables)

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        return self._edges

    @property
    def graph(self) -> nx.DiGraph:
        """A frozen networkx view of the graph (nodes are variable indices)."""
        return self._graph

    @property
    def topological_order(self) -> tuple[int, ...]:
        return self._order

    def parents(self, node: int) -> tuple[int, ...]:
        return self._parents[node]

    def children(self, node: int) -> tuple[int, ...]:
        return self._children[node]

    def parent_cardinalities(self, node: int) -> tuple[int, ...]:
        return tuple(self._variables[p].cardinality for p in self._parents[node])

    def n_configs(self, node: int) -> int:
        return prod(self.parent_cardinalities(node))

    def ancestral_set(self, nodes: Iterable[int]) -> set[int]:
        """The given nodes together with all of their ancestors."""
        result = set(nodes)
        for node in list(result):
            result |= nx.ancestors(self._graph, node)
        return result

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise VariableError(
                f"Unknown variable {name!r}, expected one of {list(self.names)}"
            ) from None

    def variable(self, node: Union[int, str]) -> Variable:
        if isinstance(node, str):
            node = self.index(node)
        return self._variables[node]


@dataclass(frozen=True, eq=False)
class Cpt:
    """Conditional probability table of one node

    Attributes:
        :node (int): index of the node
        :parents (tuple[int, ...]): parent indices, ascending
        :parent_cardinalities (tuple[int, ...]): cardinalities of the parents
        :table (np.ndarray): (configurations x levels) array, one probability
            row per parent configuration in mixed-radix order
    """

    node: int
    parents: tuple[int, ...]
    parent_cardinalities: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        logger = logging.getLogger(__name__)
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        object.__setattr__(
            self,
            "parent_cardinalities",
            tuple(int(c) for c in self.parent_cardinalities),
        )
        if len(self.parents) != len(self.parent_cardinalities):
            raise CardinalityError(
                f"CPT of node {self.node}: {len(self.parents)} parents but "
                f"{len(self.parent_cardinalities)} parent cardinalities"
            )
        table = np.array(self.table, dtype=float)
        if table.ndim == 1:
            table = table.reshape(1, -1)
        if table.ndim != 2 or table.shape[1] == 0:
            raise CardinalityError(
                f"CPT of node {self.node} must be a nonempty 2-d table, "
                f"got shape {table.shape}"
            )
        expected_rows = prod(self.parent_cardinalities)
        if table.shape[0] != expected_rows:
            raise CardinalityError(
                f"CPT of node {self.node} has {table.shape[0]} rows, "
                f"expected {expected_rows}"
            )
        if not np.all(np.isfinite(table)) or np.any(table < 0):
            raise NormalizationError(
                f"CPT of node {self.node} has entries outside [0, 1]"
            )
        if np.any(table > 1 + NORMALIZATION_TOLERANCE):
            raise NormalizationError(
                f"CPT of node {self.node} has entries outside [0, 1]"
            )
        sums = table.sum(axis=1)
        deviation = np.abs(sums - 1.0)
        if np.any(deviation > NORMALIZATION_TOLERANCE):
            row = int(np.argmax(deviation))
            raise NormalizationError(
                f"Row {row} of CPT for node {self.node} sums to {sums[row]!r}"
            )
        if np.any(deviation > 0):
            for row in np.flatnonzero(deviation > ROUNDING_TOLERANCE):
                logger.debug(
                    f"Renormalized row {row} of CPT for node {self.node} "
                    f"(sum {sums[row]!r})"
                )
            table = table / sums[:, None]
        table.flags.writeable = False
        object.__setattr__(self, "table", table)

    @property
    def cardinality(self) -> int:
        return self.table.shape[1]

    @property
    def n_rows(self) -> int:
        return self.table.shape[0]

    def config_index(self, parent_values: Sequence[int]) -> int:
        return config_index(self.parent_cardinalities, parent_values)

    def config_values(self, index: int) -> tuple[int, ...]:
        return config_values(self.parent_cardinalities, index)

    def row(self, parent_values: Sequence[int] = ()) -> np.ndarray:
        return self.table[self.config_index(parent_values)]

    def with_row(self, index: int, new_row: Sequence[float]) -> Cpt:
        """Copy of this CPT with one row replaced."""
        table = self.table.copy()
        table[index] = new_row
        return Cpt(self.node, self.parents, self.parent_cardinalities, table)


def parent_config_index(cpt: Cpt, parent_values: Sequence[int]) -> int:
    """Row index of a parent configuration (lexicographic, last parent fastest)."""
    return cpt.config_index(parent_values)


def parent_config_values(cpt: Cpt, index: int) -> tuple[int, ...]:
    """Parent level indices of a CPT row; inverse of parent_config_index."""
    return cpt.config_values(index)


@dataclass(frozen=True)
class ParamRef:
    """Address of a single CPT entry: node, node level, parent configuration."""

    node: int
    value: int
    parent_config: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "parent_config", tuple(int(v) for v in self.parent_config)
        )

    def validate(self, bn: DiscreteBn) -> None:
        if not 0 <= self.node < len(bn.dag):
            raise LevelIndexError(f"Node index {self.node} out of range")
        cpt = bn.cpt(self.node)
        if not 0 <= self.value < cpt.cardinality:
            raise LevelIndexError(
                f"Level index {self.value} out of range for {bn.names[self.node]}"
            )
        cpt.config_index(self.parent_config)

    def row_index(self, bn: DiscreteBn) -> int:
        self.validate(bn)
        return bn.cpt(self.node).config_index(self.parent_config)

    def labels(self, dag: Dag) -> tuple[str, str, tuple[str, ...]]:
        """Node name, level label and parent level labels."""
        variable = dag.variables[self.node]
        parent_labels = tuple(
            dag.variables[p].levels[v]
            for p, v in zip(dag.parents(self.node), self.parent_config)
        )
        return variable.name, variable.levels[self.value], parent_labels

    @classmethod
    def from_labels(
        cls,
        dag: Dag,
        node: str,
        value: str,
        parent_values: Sequence[str] = (),
    ) -> ParamRef:
        index = dag.index(node)
        parents = dag.parents(index)
        if len(parent_values) != len(parents):
            raise LevelIndexError(
                f"{node} has {len(parents)} parents "
                f"({', '.join(dag.names[p] for p in parents)}), "
                f"got {len(parent_values)} parent values"
            )
        return cls(
            node=index,
            value=dag.variables[index].index(value),
            parent_config=tuple(
                dag.variables[p].index(v) for p, v in zip(parents, parent_values)
            ),
        )


class DiscreteBn:
    """A Dag together with one validated CPT per node."""

    def __init__(self, dag: Dag, cpts: Iterable[Cpt]):
        by_node: dict[int, Cpt] = {}
        for cpt in cpts:
            if not 0 <= cpt.node < len(dag):
                raise CardinalityError(f"CPT for unknown node index {cpt.node}")
            if cpt.node in by_node:
                raise CardinalityError(
                    f"More than one CPT for node {dag.names[cpt.node]}"
                )
            by_node[cpt.node] = cpt
        missing = [dag.names[i] for i in range(len(dag)) if i not in by_node]
        if missing:
            raise CardinalityError(f"Missing CPTs for nodes: {missing}")
        for i in range(len(dag)):
            cpt = by_node[i]
            name = dag.names[i]
            if cpt.parents != dag.parents(i):
                raise ParentMismatchError(
                    f"CPT of {name} has parents "
                    f"{[dag.names[p] for p in cpt.parents]}, DAG has "
                    f"{[dag.names[p] for p in dag.parents(i)]}"
                )
            if cpt.parent_cardinalities != dag.parent_cardinalities(i):
                raise CardinalityError(
                    f"CPT of {name} has parent cardinalities "
                    f"{cpt.parent_cardinalities}, expected "
                    f"{dag.parent_cardinalities(i)}"
                )
            if cpt.cardinality != dag.variables[i].cardinality:
                raise CardinalityError(
                    f"CPT of {name} has {cpt.cardinality} columns, "
                    f"{name} has {dag.variables[i].cardinality} levels"
                )
        self._dag = dag
        self._cpts: tuple[Cpt, ...] = tuple(by_node[i] for i in range(len(dag)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DiscreteBn):
            return NotImplemented
        return self._dag == other._dag and all(
            np.array_equal(a.table, b.table) for a, b in zip(self._cpts, other._cpts)
        )

    __hash__ = None  # type: ignore

    @property
    def dag(self) -> Dag:
        return self._dag

    @property
    def cpts(self) -> tuple[Cpt, ...]:
        return self._cpts

    @property
    def names(self) -> tuple[str, ...]:
        return self._dag.names

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return self._dag.cardinalities

    def cpt(self, node: Union[int, str]) -> Cpt:
        if isinstance(node, str):
            node = self._dag.index(node)
        return self._cpts[node]

    def parameter(self, param: ParamRef) -> float:
        return float(self._cpts[param.node].table[param.row_index(self), param.value])

    def with_row(self, node: int, index: int, new_row: Sequence[float]) -> DiscreteBn:
        """Copy of the network with one CPT row replaced."""
        cpts = list(self._cpts)
        cpts[node] = cpts[node].with_row(index, new_row)
        return DiscreteBn(self._dag, cpts)

    def param_refs(self) -> Generator[ParamRef, None, None]:
        """Every CPT entry, by node, then row, then level."""
        for cpt in self._cpts:
            for index in range(cpt.n_rows):
                config = cpt.config_values(index)
                for value in range(cpt.cardinality):
                    yield ParamRef(cpt.node, value, config)


def build_network(dag: Dag, cpts: Iterable[Cpt]) -> DiscreteBn:
    """Validate CPTs against a DAG and assemble the network.

    :param dag: the network structure
    :param cpts: one Cpt per node, in any order
    :return: the validated DiscreteBn
    """
    return DiscreteBn(dag, cpts)


def network_from_tables(
    dag: Dag, tables: Mapping[int, Union[np.ndarray, Sequence[Sequence[float]]]]
) -> DiscreteBn:
    """Build a network from raw CPT arrays keyed by node index."""
    return build_network(
        dag,
        (
            Cpt(i, dag.parents(i), dag.parent_cardinalities(i), np.asarray(tables[i]))
            for i in range(len(dag))
        ),
    )


class Dataset:
    """An ordered table of complete categorical observations.

    Cells hold level indices; row order is significant.
    """

    def __init__(self, variables: Sequence[Variable], rows):
        self._variables: tuple[Variable, ...] = tuple(variables)
        n = len(self._variables)
        array = np.array(rows, dtype=np.int64)
        if array.size == 0:
            array = array.reshape(0, n)
        if array.ndim != 2 or array.shape[1] != n:
            raise DatasetError(
                f"Expected rows of {n} cells, got array of shape {array.shape}"
            )
        cards = np.array([v.cardinality for v in self._variables], dtype=np.int64)
        bad = (array < 0) | (array >= cards)
        if bad.any():
            r, c = (int(i) for i in np.argwhere(bad)[0])
            name = self._variables[c].name
            raise DatasetError(
                f"Row {r + 1}, column {name}: invalid level index {array[r, c]}",
                row=r + 1,
                column=name,
            )
        array.flags.writeable = False
        self._rows = array

    @classmethod
    def from_labels(
        cls,
        variables: Sequence[Variable],
        label_rows: Iterable[Sequence[str]],
    ) -> Dataset:
        """Build a Dataset from rows of level labels (row numbers are 1-based)."""
        variables = tuple(variables)
        rows = []
        for r, labels in enumerate(label_rows, start=1):
            if len(labels) != len(variables):
                raise DatasetError(
                    f"Row {r}: expected {len(variables)} cells, got {len(labels)}",
                    row=r,
                )
            row = []
            for variable, label in zip(variables, labels):
                try:
                    row.append(variable.index(label))
                except UnknownLevelError as e:
                    raise DatasetError(
                        f"Row {r}, column {variable.name}: {e}",
                        row=r,
                        column=variable.name,
                    ) from None
            rows.append(row)
        return cls(variables, rows)

    def __len__(self) -> int:
        return self._rows.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self._variables == other._variables and np.array_equal(
            self._rows, other._rows
        )

    __hash__ = None  # type: ignore

    @property
    def variables(self) -> tuple[Variable, ...]:
        return self._variables

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self._variables)

    @property
    def rows(self) -> np.ndarray:
        return self._rows

    def labels(self, index: int) -> tuple[str, ...]:
        return tuple(
            v.levels[int(k)] for v, k in zip(self._variables, self._rows[index])
        )

    def subset(self, indices: Iterable[int]) -> Dataset:
        return Dataset(self._variables, self._rows[list(indices)])

    def without(self, index: int) -> Dataset:
        return Dataset(self._variables, np.delete(self._rows, index, axis=0))

    def check_matches(self, dag: Dag) -> None:
        """Raise DatasetError unless columns match the DAG's variables."""
        if self._variables != dag.variables:
            expected = {v.name: v.levels for v in dag.variables}
            for v in self._variables:
                if v.name not in expected:
                    raise DatasetError(f"Unknown column {v.name}", column=v.name)
                if v.levels != expected[v.name]:
                    raise DatasetError(
                        f"Column {v.name} has levels {list(v.levels)}, "
                        f"network expects {list(expected[v.name])}",
                        column=v.name,
                    )
            raise DatasetError(
                f"Dataset columns {list(self.names)} do not match "
                f"network variables {list(dag.names)}"
            )
