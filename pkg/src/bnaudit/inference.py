"""Exact queries on a DiscreteBn.

Conditional and marginal queries are answered by variable elimination over
the ancestral set of the query variables, using a greedy min-degree
elimination order (ties broken by the lowest variable index). The full joint
table is available for small networks and serves as a reference oracle.
"""
from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from functools import reduce
from math import prod
from typing import Optional, Union

import networkx as nx
import numpy as np

from bnaudit import BnAuditComputationError, BnAuditInputError
from bnaudit.model import Cpt, Dag, Dataset, DiscreteBn, LevelIndexError

DEFAULT_ENUMERATION_CAP = 2**22


class InferenceException(BnAuditInputError):
    pass


class QueryError(InferenceException):
    pass


class IncompleteAssignmentError(InferenceException):
    pass


class DSeparationError(InferenceException):
    pass


class ImpossibleEvidenceError(BnAuditComputationError):
    pass


class StateSpaceError(BnAuditComputationError):
    pass


@dataclass(frozen=True, eq=False)
class Factor:
    """A nonnegative table over the joint levels of its scope.

    The table has one axis per scope variable, so its flattened (C order)
    layout is the mixed-radix layout of CPT rows.
    """

    scope: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        if table.ndim != len(self.scope):
            raise InferenceException(
                f"Factor over {len(self.scope)} variables has a "
                f"{table.ndim}-d table"
            )
        if len(set(self.scope)) != len(self.scope):
            raise InferenceException(f"Factor scope has duplicates: {self.scope}")
        object.__setattr__(self, "scope", tuple(self.scope))
        object.__setattr__(self, "table", table)

    @classmethod
    def from_cpt(cls, cpt: Cpt) -> Factor:
        return cls(
            cpt.parents + (cpt.node,),
            cpt.table.reshape(cpt.parent_cardinalities + (cpt.cardinality,)),
        )

    @classmethod
    def unit(cls) -> Factor:
        return cls((), np.array(1.0))

    def __mul__(self, other: Factor) -> Factor:
        if not self.scope:
            return Factor(other.scope, other.table * self.table)
        if not other.scope:
            return Factor(self.scope, self.table * other.table)
        scope = self.scope + tuple(v for v in other.scope if v not in self.scope)
        label = {v: i for i, v in enumerate(scope)}
        table = np.einsum(
            self.table,
            [label[v] for v in self.scope],
            other.table,
            [label[v] for v in other.scope],
            list(range(len(scope))),
        )
        return Factor(scope, table)

    def sum_out(self, var: int) -> Factor:
        axis = self.scope.index(var)
        return Factor(
            self.scope[:axis] + self.scope[axis + 1 :], self.table.sum(axis=axis)
        )

    def reduce(self, evidence: Mapping[int, int]) -> Factor:
        """Restrict the factor to observed levels, dropping those variables."""
        if not any(v in evidence for v in self.scope):
            return self
        index = tuple(
            evidence[v] if v in evidence else slice(None) for v in self.scope
        )
        return Factor(
            tuple(v for v in self.scope if v not in evidence), self.table[index]
        )

    def transpose(self, order: Sequence[int]) -> Factor:
        return Factor(
            tuple(order), np.transpose(self.table, [self.scope.index(v) for v in order])
        )


@dataclass(frozen=True)
class Query:
    """Targets O, evidence y_E and, optionally, the outcome y_O of interest."""

    targets: tuple[int, ...]
    evidence: Union[Mapping[int, int], tuple[tuple[int, int], ...]] = ()
    outcome: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        targets = tuple(int(t) for t in self.targets)
        evidence = (
            self.evidence.items()
            if isinstance(self.evidence, Mapping)
            else self.evidence
        )
        evidence_pairs = tuple(sorted((int(k), int(v)) for k, v in evidence))
        if not targets:
            raise QueryError("A query needs at least one target")
        if len(set(targets)) != len(targets):
            raise QueryError(f"Duplicate query targets: {targets}")
        if len({k for k, _ in evidence_pairs}) != len(evidence_pairs):
            raise QueryError("Evidence names a variable twice")
        if set(targets) & {k for k, _ in evidence_pairs}:
            raise QueryError("Query targets and evidence variables overlap")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "evidence", evidence_pairs)
        if self.outcome is not None:
            outcome = tuple(int(v) for v in self.outcome)
            if len(outcome) != len(targets):
                raise QueryError(
                    f"Outcome {outcome} does not match targets {targets}"
                )
            object.__setattr__(self, "outcome", outcome)

    @property
    def evidence_map(self) -> dict[int, int]:
        return dict(self.evidence)  # type: ignore[arg-type]

    @property
    def outcome_map(self) -> dict[int, int]:
        if self.outcome is None:
            raise QueryError("Query has no outcome of interest")
        return dict(zip(self.targets, self.outcome))

    def validate(self, dag: Dag) -> None:
        n = len(dag)
        assignments = list(self.evidence_map.items())
        if self.outcome is not None:
            assignments += list(zip(self.targets, self.outcome))
        for var in self.targets:
            if not 0 <= var < n:
                raise QueryError(f"Target index {var} out of range")
        for var, level in assignments:
            if not 0 <= var < n:
                raise QueryError(f"Variable index {var} out of range")
            if not 0 <= level < dag.variables[var].cardinality:
                raise LevelIndexError(
                    f"Level index {level} out of range for {dag.names[var]}"
                )

    @classmethod
    def from_labels(
        cls,
        dag: Dag,
        targets: Sequence[str],
        evidence: Optional[Mapping[str, str]] = None,
        outcome: Optional[Sequence[str]] = None,
    ) -> Query:
        target_idx = tuple(dag.index(t) for t in targets)
        evidence_idx = {
            dag.index(name): dag.variable(name).index(label)
            for name, label in (evidence or {}).items()
        }
        outcome_idx = (
            tuple(dag.variables[t].index(v) for t, v in zip(target_idx, outcome))
            if outcome is not None
            else None
        )
        if outcome is not None and len(outcome) != len(targets):
            raise QueryError(f"Outcome {outcome} does not match targets {targets}")
        return cls(target_idx, evidence_idx, outcome_idx)


def min_degree_order(
    scopes: Iterable[Iterable[int]], to_eliminate: Iterable[int]
) -> list[int]:
    """Greedy min-degree elimination order over the interaction graph."""
    remaining_scopes = [set(s) for s in scopes]
    remaining = set(to_eliminate)
    order = []

    def neighbors(v: int) -> set[int]:
        return set().union(*(s for s in remaining_scopes if v in s)) - {v}

    while remaining:
        var = min(remaining, key=lambda v: (len(neighbors(v)), v))
        merged = neighbors(var)
        remaining_scopes = [s for s in remaining_scopes if var not in s]
        if merged:
            remaining_scopes.append(merged)
        remaining.remove(var)
        order.append(var)
    return order


def eliminate(
    bn: DiscreteBn,
    targets: Sequence[int],
    evidence: Mapping[int, int],
    elimination_order: Optional[Sequence[int]] = None,
) -> Factor:
    """Unnormalized factor p(targets, evidence) over the targets.

    :param bn: the network
    :param targets: variables kept in the result, in result axis order
    :param evidence: observed levels
    :param elimination_order: optional order for the eliminated variables;
        variables outside the ancestral set of the query are skipped
    :return: a Factor whose scope is ``targets``
    """
    relevant = bn.dag.ancestral_set(set(targets) | set(evidence))
    factors = [Factor.from_cpt(bn.cpt(i)).reduce(evidence) for i in sorted(relevant)]
    hidden = relevant - set(targets) - set(evidence)
    if elimination_order is None:
        order = min_degree_order((f.scope for f in factors), hidden)
    else:
        order = [v for v in elimination_order if v in hidden]
        if set(order) != hidden or len(order) != len(hidden):
            raise QueryError(
                "Elimination order must list every non-query variable once"
            )
    for var in order:
        involved = [f for f in factors if var in f.scope]
        if not involved:
            continue
        product = reduce(Factor.__mul__, involved)
        factors = [f for f in factors if var not in f.scope]
        factors.append(product.sum_out(var))
    result = reduce(Factor.__mul__, factors, Factor.unit())
    return result.transpose(tuple(targets))


def query(
    bn: DiscreteBn,
    q: Query,
    elimination_order: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Exact conditional distribution p(y_O | y_E).

    :return: array with one axis per target (in target order), summing to 1
    :raises ImpossibleEvidenceError: if p(y_E) = 0
    """
    q.validate(bn.dag)
    factor = eliminate(bn, q.targets, q.evidence_map, elimination_order)
    total = factor.table.sum()
    if not total > 0:
        evidence = ", ".join(
            f"{bn.names[k]}={bn.dag.variables[k].levels[v]}" for k, v in q.evidence
        )
        raise ImpossibleEvidenceError(f"Evidence has probability zero: {evidence}")
    return factor.table / total


def evidence_probability(bn: DiscreteBn, evidence: Mapping[int, int]) -> float:
    """Marginal probability p(y_E) of a partial assignment."""
    return float(eliminate(bn, (), evidence).table)


def joint_probability(bn: DiscreteBn, assignment: Sequence[int]) -> float:
    """p_G(y) as the product of one CPT entry per node."""
    if len(assignment) != len(bn.dag):
        raise IncompleteAssignmentError(
            f"Assignment covers {len(assignment)} of {len(bn.dag)} variables"
        )
    probability = 1.0
    for cpt in bn.cpts:
        value = int(assignment[cpt.node])
        if not 0 <= value < cpt.cardinality:
            raise LevelIndexError(
                f"Level index {value} out of range for {bn.names[cpt.node]}"
            )
        row = cpt.config_index([assignment[p] for p in cpt.parents])
        probability *= float(cpt.table[row, value])
    return probability


def enumerate_joint(
    bn: DiscreteBn, cap: int = DEFAULT_ENUMERATION_CAP
) -> np.ndarray:
    """The full joint table, one axis per variable.

    :param cap: refuse joint spaces larger than this
    :raises StateSpaceError: if the joint space exceeds ``cap``
    """
    shape = bn.cardinalities
    size = prod(shape)
    if size > cap:
        raise StateSpaceError(f"Joint state space of {size} exceeds cap {cap}")
    labels = list(range(len(shape)))
    joint = np.ones(shape)
    for cpt in bn.cpts:
        factor = Factor.from_cpt(cpt)
        joint = np.einsum(joint, labels, factor.table, list(factor.scope), labels)
    return joint


def d_separated(dag: Dag, a: Iterable[int], b: Iterable[int], c: Iterable[int]) -> bool:
    """True iff every path between a and b is blocked given c.

    Tested on the moral graph of the ancestral set of a, b and c with c removed.
    """
    a, b, c = set(a), set(b), set(c)
    if a & b or a & c or b & c:
        raise DSeparationError("d-separation sets must be pairwise disjoint")
    for v in a | b | c:
        if not 0 <= v < len(dag):
            raise DSeparationError(f"Variable index {v} out of range")
    if not a or not b:
        return True
    ancestral = dag.ancestral_set(a | b | c)
    moral = nx.moral_graph(dag.graph.subgraph(ancestral))
    moral.remove_nodes_from(c)
    reachable: set[int] = set()
    for v in a:
        if v not in reachable:
            reachable |= nx.node_connected_component(moral, v)
    return not reachable & b


def forward_sample(bn: DiscreteBn, m: int, seed: Optional[int] = None) -> Dataset:
    """Draw m independent observations from p_G by ancestral sampling."""
    rng = np.random.default_rng(seed)
    rows = np.zeros((m, len(bn.dag)), dtype=np.int64)
    for node in bn.dag.topological_order:
        cpt = bn.cpt(node)
        if cpt.parents:
            configs = np.ravel_multi_index(
                tuple(rows[:, p] for p in cpt.parents), cpt.parent_cardinalities
            )
        else:
            configs = np.zeros(m, dtype=np.int64)
        cumulative = np.cumsum(cpt.table[configs], axis=1)
        draws = rng.random(m)
        rows[:, node] = np.minimum(
            (draws[:, None] >= cumulative).sum(axis=1), cpt.cardinality - 1
        )
    return Dataset(bn.dag.variables, rows)
