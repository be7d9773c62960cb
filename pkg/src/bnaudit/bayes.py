"""Dirichlet-multinomial learning of CPTs.

Every CPT row theta_ij gets an independent Dirichlet prior with
hyperparameters alpha_ijk > 0. Counts N_ijk are sufficient statistics; the
posterior of each row is Dirichlet(alpha_ijk + N_ijk).

The marginal likelihood used throughout is that of the *ordered* data
sequence, i.e. without a multinomial coefficient. It equals the product of
one-step-ahead predictive probabilities, which is what the prequential
monitors are built on.
"""
from __future__ import annotations

import logging
from collections.abc import Sequence
from typing import Optional

import numpy as np
from scipy.special import gammaln

from bnaudit import BnAuditInputError
from bnaudit.model import Cpt, Dag, Dataset, DiscreteBn, LevelIndexError, build_network


class PriorError(BnAuditInputError):
    pass


class DirichletSpec:
    """Dirichlet hyperparameters alpha_ijk, one (configurations x levels)
    array per node."""

    def __init__(self, dag: Dag, alphas: Sequence[np.ndarray]):
        if len(alphas) != len(dag):
            raise PriorError(
                f"Expected hyperparameters for {len(dag)} nodes, got {len(alphas)}"
            )
        arrays = []
        for i, alpha in enumerate(alphas):
            array = np.array(alpha, dtype=float)
            if array.ndim == 1:
                array = array.reshape(1, -1)
            expected = (dag.n_configs(i), dag.variables[i].cardinality)
            if array.shape != expected:
                raise PriorError(
                    f"Hyperparameters of {dag.names[i]} have shape {array.shape}, "
                    f"expected {expected}"
                )
            if not np.all(np.isfinite(array)) or np.any(array <= 0):
                raise PriorError(
                    f"Hyperparameters of {dag.names[i]} must be strictly positive"
                )
            array.flags.writeable = False
            arrays.append(array)
        self._dag = dag
        self._alphas: tuple[np.ndarray, ...] = tuple(arrays)

    @classmethod
    def uniform(cls, dag: Dag, alpha: float) -> DirichletSpec:
        """The same alpha for every entry of every node."""
        return cls(
            dag,
            [
                np.full((dag.n_configs(i), v.cardinality), float(alpha))
                for i, v in enumerate(dag.variables)
            ],
        )

    @property
    def dag(self) -> Dag:
        return self._dag

    def alpha(self, node: int) -> np.ndarray:
        return self._alphas[node]

    def row_totals(self, node: int) -> np.ndarray:
        """alpha_ij = sum_k alpha_ijk for every parent configuration j."""
        return self._alphas[node].sum(axis=1)


class CountTable:
    """Counts N_ijk, one integer (configurations x levels) array per node."""

    def __init__(self, dag: Dag, counts: Optional[Sequence[np.ndarray]] = None):
        self._dag = dag
        if counts is None:
            self._counts = [
                np.zeros((dag.n_configs(i), v.cardinality), dtype=np.int64)
                for i, v in enumerate(dag.variables)
            ]
        else:
            self._counts = [np.array(c, dtype=np.int64) for c in counts]
            for i, c in enumerate(self._counts):
                if c.shape != (dag.n_configs(i), dag.variables[i].cardinality):
                    raise PriorError(f"Counts of {dag.names[i]} have shape {c.shape}")
                if np.any(c < 0):
                    raise PriorError(f"Counts of {dag.names[i]} are negative")

    @classmethod
    def from_dataset(cls, dag: Dag, data: Dataset) -> CountTable:
        """Tabulate counts of a whole dataset in one pass."""
        data.check_matches(dag)
        table = cls(dag)
        rows = data.rows
        for i in range(len(dag)):
            np.add.at(table._counts[i], (config_column(dag, i, rows), rows[:, i]), 1)
        return table

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CountTable):
            return NotImplemented
        return self._dag == other._dag and all(
            np.array_equal(a, b) for a, b in zip(self._counts, other._counts)
        )

    __hash__ = None  # type: ignore

    @property
    def dag(self) -> Dag:
        return self._dag

    def counts(self, node: int) -> np.ndarray:
        return self._counts[node]

    def row_totals(self, node: int) -> np.ndarray:
        """N_ij = sum_k N_ijk for every parent configuration j."""
        return self._counts[node].sum(axis=1)

    def total(self, node: int) -> int:
        return int(self._counts[node].sum())

    def copy(self) -> CountTable:
        return CountTable(self._dag, [c.copy() for c in self._counts])

    def cell(self, node: int, observation: Sequence[int]) -> tuple[int, int]:
        """(parent configuration, level) of a node within an observation."""
        parents = self._dag.parents(node)
        if not parents:
            return 0, int(observation[node])
        config = np.ravel_multi_index(
            tuple(int(observation[p]) for p in parents),
            self._dag.parent_cardinalities(node),
        )
        return int(config), int(observation[node])

    def increment(self, observation: Sequence[int], by: int = 1) -> CountTable:
        """Add one observation in place (negative ``by`` removes it)."""
        _check_observation(self._dag, observation)
        for i in range(len(self._dag)):
            config, level = self.cell(i, observation)
            if self._counts[i][config, level] + by < 0:
                raise PriorError(
                    f"Removing an unseen observation from counts of "
                    f"{self._dag.names[i]}"
                )
            self._counts[i][config, level] += by
        return self


def config_column(dag: Dag, node: int, rows: np.ndarray) -> np.ndarray:
    parents = dag.parents(node)
    if not parents:
        return np.zeros(rows.shape[0], dtype=np.int64)
    return np.ravel_multi_index(
        tuple(rows[:, p] for p in parents), dag.parent_cardinalities(node)
    )


def _check_observation(dag: Dag, observation: Sequence[int]) -> None:
    if len(observation) != len(dag):
        raise LevelIndexError(
            f"Observation has {len(observation)} values, expected {len(dag)}"
        )
    for variable, value in zip(dag.variables, observation):
        if not 0 <= int(value) < variable.cardinality:
            raise LevelIndexError(
                f"Level index {value} out of range for {variable.name}"
            )


def _check_congruent(dag: Dag, *tables) -> None:
    for table in tables:
        if table.dag != dag:
            raise PriorError(
                f"{type(table).__name__} was built for a different network"
            )


def default_prior(dag: Dag, alpha: Optional[float] = None) -> DirichletSpec:
    """Dirichlet prior with alpha_ijk = |Y_i| for every node i.

    :param alpha: if given, use this value for every alpha_ijk instead
    """
    if alpha is not None:
        if not alpha > 0:
            raise PriorError(f"alpha must be strictly positive, got {alpha}")
        return DirichletSpec.uniform(dag, alpha)
    return DirichletSpec(
        dag,
        [
            np.full((dag.n_configs(i), v.cardinality), float(v.cardinality))
            for i, v in enumerate(dag.variables)
        ],
    )


def accumulate(counts: CountTable, dag: Dag, observation: Sequence[int]) -> CountTable:
    """A copy of ``counts`` with one more observation."""
    _check_congruent(dag, counts)
    return counts.copy().increment(observation)


def posterior_mean_bn(dag: Dag, prior: DirichletSpec, counts: CountTable) -> DiscreteBn:
    """Network with CPT entries (alpha_ijk + N_ijk) / (alpha_ij + N_ij)."""
    _check_congruent(dag, prior, counts)
    cpts = []
    for i in range(len(dag)):
        posterior = prior.alpha(i) + counts.counts(i)
        cpts.append(
            Cpt(
                i,
                dag.parents(i),
                dag.parent_cardinalities(i),
                posterior / posterior.sum(axis=1, keepdims=True),
            )
        )
    return build_network(dag, cpts)


def mle_bn(dag: Dag, counts: CountTable) -> DiscreteBn:
    """Network with CPT entries N_ijk / N_ij; unseen configurations are uniform."""
    logger = logging.getLogger(__name__)
    _check_congruent(dag, counts)
    cpts = []
    for i, variable in enumerate(dag.variables):
        n_ijk = counts.counts(i).astype(float)
        n_ij = n_ijk.sum(axis=1, keepdims=True)
        unseen = n_ij[:, 0] == 0
        if unseen.any():
            logger.info(
                f"{variable.name}: {int(unseen.sum())} parent configurations "
                f"unseen in data, using uniform rows"
            )
        table = np.where(
            unseen[:, None],
            1.0 / variable.cardinality,
            n_ijk / np.where(n_ij > 0, n_ij, 1.0),
        )
        cpts.append(Cpt(i, dag.parents(i), dag.parent_cardinalities(i), table))
    return build_network(dag, cpts)


def predictive_row(
    prior: DirichletSpec, counts: CountTable, node: int, config: int
) -> np.ndarray:
    """One-step-ahead predictive distribution of a node given a parent
    configuration index."""
    posterior = prior.alpha(node)[config] + counts.counts(node)[config]
    return posterior / posterior.sum()


def predictive_node_prob(
    prior: DirichletSpec,
    counts: CountTable,
    node: int,
    level: int,
    parent_config: Sequence[int] = (),
) -> float:
    """(alpha_ijk + N_ijk) / (alpha_ij + N_ij) for one CPT entry."""
    _check_congruent(prior.dag, counts)
    dag = prior.dag
    if not 0 <= level < dag.variables[node].cardinality:
        raise LevelIndexError(f"Level index {level} out of range for {dag.names[node]}")
    if len(parent_config) != len(dag.parents(node)):
        raise LevelIndexError(
            f"{dag.names[node]} has {len(dag.parents(node))} parents, "
            f"got {len(parent_config)} parent values"
        )
    config = (
        int(np.ravel_multi_index(tuple(parent_config), dag.parent_cardinalities(node)))
        if parent_config
        else 0
    )
    alpha = prior.alpha(node)[config]
    n = counts.counts(node)[config]
    return float((alpha[level] + n[level]) / (alpha.sum() + n.sum()))


def log_marginal_likelihood_from_counts(
    prior: DirichletSpec, counts: CountTable
) -> np.ndarray:
    """Per-node log of the ordered-sequence marginal likelihood."""
    _check_congruent(prior.dag, counts)
    scores = np.zeros(len(prior.dag))
    for i in range(len(prior.dag)):
        alpha = prior.alpha(i)
        n = counts.counts(i)
        alpha_j = alpha.sum(axis=1)
        n_j = n.sum(axis=1)
        scores[i] = np.sum(gammaln(alpha_j) - gammaln(alpha_j + n_j)) + np.sum(
            gammaln(alpha + n) - gammaln(alpha)
        )
    return scores


def log_marginal_likelihood(
    dag: Dag, data: Dataset, prior: DirichletSpec
) -> np.ndarray:
    """Per-node log marginal likelihood of the data sequence.

    The total log marginal likelihood is the sum of the returned vector.
    """
    _check_congruent(dag, prior)
    return log_marginal_likelihood_from_counts(
        prior, CountTable.from_dataset(dag, data)
    )
