"""Sensitivity analysis of a network to single CPT parameters.

A parameter theta_k of one CPT row is moved to a new value t and the rest of
the row co-varies to keep it a distribution. The output probability
p(y_O | y_E) is then a ratio of two functions linear in t, which is what
the sensitivity function coefficients and the inverse query solver use.
"""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np
from scipy.special import rel_entr
from tqdm import tqdm
from tqdm.contrib.logging import logging_redirect_tqdm

from bnaudit import BnAuditBaseException, BnAuditComputationError, BnAuditInputError
from bnaudit.inference import (
    Query,
    QueryError,
    enumerate_joint,
    evidence_probability,
)
from bnaudit.model import NORMALIZATION_TOLERANCE, DiscreteBn, ParamRef

DEFAULT_GRID_POINTS = 101
SENSQUERY_TOLERANCE = 1e-6
KL_ENUMERATION_CAP = 2**16
DEGENERACY_TOLERANCE = 1e-12


class SensitivityException(BnAuditBaseException):
    pass


class CovariationError(SensitivityException, BnAuditInputError):
    pass


class DegenerateRowError(SensitivityException, BnAuditComputationError):
    pass


class OrderViolationError(SensitivityException, BnAuditComputationError):
    pass


class DistanceError(SensitivityException, BnAuditComputationError):
    pass


class CovariationScheme(Enum):
    PROPORTIONAL = "proportional"
    UNIFORM = "uniform"
    ORDER_PRESERVING = "order-preserving"


class DistanceMethod(Enum):
    """AUTO enumerates the joint for KL when it has at most
    KL_ENUMERATION_CAP states and uses the local form for CD."""

    AUTO = "auto"
    LOCAL = "local"
    ENUMERATE = "enumerate"


def _ranked_above(row: np.ndarray, i: int, j: int) -> bool:
    return bool(row[i] > row[j] or (row[i] == row[j] and i < j))


def covary(
    row: Sequence[float],
    k: int,
    t: float,
    scheme: CovariationScheme = CovariationScheme.PROPORTIONAL,
) -> np.ndarray:
    """
    Set entry ``k`` of a probability row to ``t`` and redistribute the
    remaining mass 1 - t over the other entries.

    :param scheme: PROPORTIONAL scales the other entries by
        (1 - t) / (1 - row[k]); UNIFORM gives them equal shares;
        ORDER_PRESERVING scales proportionally and rejects values of ``t``
        that move entry ``k`` past another entry (ties by position)
    :raises DegenerateRowError: row[k] = 1 and t < 1 under proportional
        scaling
    :raises OrderViolationError: the rank of entry ``k`` would change
    """
    theta = np.asarray(row, dtype=float)
    n = len(theta)
    if not 0 <= k < n:
        raise CovariationError(f"Entry {k} out of range for a row of {n}")
    if not 0.0 <= t <= 1.0:
        raise CovariationError(f"New value {t!r} outside [0, 1]")
    if np.any(theta < 0) or abs(theta.sum() - 1.0) > NORMALIZATION_TOLERANCE:
        raise CovariationError(f"Not a probability row: {theta.tolist()}")
    if n == 1:
        if t != 1.0:
            raise DegenerateRowError("A single-level row can only take the value 1")
        return theta.copy()

    if scheme is CovariationScheme.UNIFORM:
        new = np.full(n, (1.0 - t) / (n - 1))
        new[k] = t
        return new

    rest = 1.0 - theta[k]
    if rest <= DEGENERACY_TOLERANCE:
        if t < 1.0:
            raise DegenerateRowError(
                f"Entry {k} holds all the mass of its row; "
                f"cannot redistribute {1.0 - t:.6g}"
            )
        new = np.zeros(n)
    else:
        new = theta * ((1.0 - t) / rest)
    new[k] = t

    if scheme is CovariationScheme.ORDER_PRESERVING:
        for j in range(n):
            if j != k and _ranked_above(theta, k, j) != _ranked_above(new, k, j):
                raise OrderViolationError(
                    f"New value {t:.6g} moves entry {k} past entry {j}"
                )
    return new


def perturb(
    bn: DiscreteBn,
    param: ParamRef,
    t: float,
    scheme: CovariationScheme = CovariationScheme.PROPORTIONAL,
) -> DiscreteBn:
    """Copy of the network with one parameter set to ``t``."""
    index = param.row_index(bn)
    row = bn.cpt(param.node).table[index]
    return bn.with_row(param.node, index, covary(row, param.value, t, scheme))


def expand_grid(new_values: Union[str, Sequence[float]]) -> np.ndarray:
    """``"all"`` is DEFAULT_GRID_POINTS equally spaced values on [0, 1]."""
    if isinstance(new_values, str):
        if new_values != "all":
            raise CovariationError(
                f"New values must be 'all' or numbers, got {new_values!r}"
            )
        return np.linspace(0.0, 1.0, DEFAULT_GRID_POINTS)
    grid = np.asarray(new_values, dtype=float).ravel()
    if np.any(~np.isfinite(grid)) or np.any((grid < 0) | (grid > 1)):
        raise CovariationError("New values must lie in [0, 1]")
    return grid


def _joint_evidence(bn: DiscreteBn, q: Query) -> tuple[dict[int, int], dict[int, int]]:
    if q.outcome is None:
        raise QueryError("Sensitivity analysis needs a query outcome")
    q.validate(bn.dag)
    evidence = q.evidence_map
    return {**evidence, **q.outcome_map}, evidence


def _numerator_denominator(
    bn: DiscreteBn, joint: dict[int, int], evidence: dict[int, int]
) -> tuple[float, float]:
    return evidence_probability(bn, joint), evidence_probability(bn, evidence)


def output_probability(bn: DiscreteBn, q: Query) -> float:
    """p(y_O | y_E) for a query with an outcome; nan if p(y_E) = 0."""
    numerator, denominator = _numerator_denominator(bn, *_joint_evidence(bn, q))
    return numerator / denominator if denominator > 0 else float("nan")


def linear_coefficients(
    bn: DiscreteBn,
    q: Query,
    param: ParamRef,
    scheme: CovariationScheme = CovariationScheme.PROPORTIONAL,
) -> tuple[float, float, float, float]:
    """
    Unnormalized (a, b, c, d) with p(y_O, y_E) = a t + b and
    p(y_E) = c t + d, read off the networks at t = 0 and t = 1.

    Order-preserving co-variation uses the proportional coefficients.

    :raises DegenerateRowError: the row cannot be moved to t = 0
    """
    if scheme is CovariationScheme.ORDER_PRESERVING:
        scheme = CovariationScheme.PROPORTIONAL
    joint, evidence = _joint_evidence(bn, q)
    n0, d0 = _numerator_denominator(perturb(bn, param, 0.0, scheme), joint, evidence)
    n1, d1 = _numerator_denominator(perturb(bn, param, 1.0, scheme), joint, evidence)
    return n1 - n0, n0, d1 - d0, d0


def normalize_coefficients(
    coefficients: tuple[float, float, float, float]
) -> tuple[float, float, float, float]:
    """Scale (a, b, c, d) so that d = 1, or c = 1 when d vanishes."""
    a, b, c, d = coefficients
    scale = d if abs(d) > DEGENERACY_TOLERANCE else c
    if abs(scale) <= DEGENERACY_TOLERANCE:
        return (float("nan"),) * 4  # type: ignore[return-value]
    return a / scale, b / scale, c / scale, d / scale


@dataclass(frozen=True, eq=False)
class SensitivityResult:
    """
    Output probability of a query along a grid of parameter values.

    Attributes:
        param: the varied CPT entry
        query: the query, with its outcome
        new_values: grid of parameter values t
        probabilities: p(y_O | y_E) at each t, nan where undefined
        coefficients: normalized (a, b, c, d) of f(t) = (a t + b) / (c t + d)
        original_value: the parameter's value in the network
        scheme: co-variation scheme used
    """

    param: ParamRef
    query: Query
    new_values: np.ndarray
    probabilities: np.ndarray
    coefficients: tuple[float, float, float, float]
    original_value: float
    scheme: CovariationScheme = CovariationScheme.PROPORTIONAL

    def evaluate(self, t: Union[float, np.ndarray]) -> np.ndarray:
        a, b, c, d = self.coefficients
        t = np.asarray(t, dtype=float)
        return (a * t + b) / (c * t + d)

    @property
    def residual(self) -> float:
        """Largest gap between the grid and the fitted form."""
        defined = ~np.isnan(self.probabilities)
        if not defined.any():
            return 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            fitted = self.evaluate(self.new_values[defined])
        return float(np.max(np.abs(fitted - self.probabilities[defined])))


def sensitivity(
    bn: DiscreteBn,
    query: Query,
    param: ParamRef,
    new_values: Union[str, Sequence[float]] = "all",
    scheme: CovariationScheme = CovariationScheme.PROPORTIONAL,
) -> SensitivityResult:
    """
    Sensitivity function of a query outcome to one CPT parameter.

    :param new_values: parameter values to evaluate, or ``"all"``
    :return: the evaluated grid and the fitted fractional-linear form;
        grid points where the row cannot be co-varied or the evidence has
        probability zero are nan
    """
    logger = logging.getLogger(__name__)
    param.validate(bn)
    joint, evidence = _joint_evidence(bn, query)
    grid = expand_grid(new_values)
    probabilities = np.full(len(grid), np.nan)
    for i, t in enumerate(grid):
        try:
            perturbed = perturb(bn, param, float(t), scheme)
        except (DegenerateRowError, OrderViolationError) as e:
            logger.debug(f"t={t:.6g} undefined: {e}")
            continue
        numerator, denominator = _numerator_denominator(perturbed, joint, evidence)
        if denominator > 0:
            probabilities[i] = numerator / denominator
        else:
            logger.debug(f"t={t:.6g} undefined: evidence has probability zero")
    try:
        coefficients = normalize_coefficients(
            linear_coefficients(bn, query, param, scheme)
        )
    except DegenerateRowError:
        coefficients = (float("nan"),) * 4  # type: ignore[assignment]
    n_undefined = int(np.isnan(probabilities).sum())
    if n_undefined:
        logger.info(f"{n_undefined} of {len(grid)} grid points are undefined")
    return SensitivityResult(
        param=param,
        query=query,
        new_values=grid,
        probabilities=probabilities,
        coefficients=coefficients,
        original_value=bn.parameter(param),
        scheme=scheme,
    )


@dataclass(frozen=True, eq=False)
class DistanceResult:
    """
    Distances between the network and its perturbations along a grid.

    Columns that were not requested are None; undefined grid points are nan
    and infinite distances are inf.
    """

    param: ParamRef
    new_values: np.ndarray
    original_value: float
    cd: Optional[np.ndarray] = None
    kl: Optional[np.ndarray] = None
    jeffreys: Optional[np.ndarray] = None
    scheme: CovariationScheme = CovariationScheme.PROPORTIONAL


def _check_distance_param(
    bn: DiscreteBn, param: ParamRef, scheme: CovariationScheme
) -> float:
    param.validate(bn)
    theta = bn.parameter(param)
    if scheme is not CovariationScheme.UNIFORM and (
        theta <= DEGENERACY_TOLERANCE or theta >= 1.0 - DEGENERACY_TOLERANCE
    ):
        name, level, parents = param.labels(bn.dag)
        given = f" | {', '.join(parents)}" if parents else ""
        raise DistanceError(
            f"p({name}={level}{given}) = {theta:.6g}: distances are undefined "
            f"for parameters equal to 0 or 1 under {scheme.value} co-variation"
        )
    return theta


def config_probability(bn: DiscreteBn, param: ParamRef) -> float:
    """Marginal probability of the parameter's parent configuration."""
    parents = bn.dag.parents(param.node)
    return evidence_probability(bn, dict(zip(parents, param.parent_config)))


def local_cd(old_row: np.ndarray, new_row: np.ndarray, p_config: float) -> float:
    """CD distance when a single CPT row changes.

    The joint ratio p'/p takes the values new/old over the row's positive
    entries, and the value 1 on states outside the parent configuration.
    """
    if p_config <= 0:
        return 0.0
    if np.any((old_row == 0) & (new_row > 0)):
        return float("inf")
    positive = old_row > 0
    ratios = new_row[positive] / old_row[positive]
    if p_config < 1.0 - DEGENERACY_TOLERANCE:
        ratios = np.append(ratios, 1.0)
    if ratios.min() == 0:
        return float("inf")
    return float(np.log(ratios.max()) - np.log(ratios.min()))


def local_kl(old_row: np.ndarray, new_row: np.ndarray, p_config: float) -> float:
    """KL(p || p') when a single CPT row changes: the row-level divergence
    weighted by the probability of its parent configuration."""
    if p_config <= 0:
        return 0.0
    return float(p_config * rel_entr(old_row, new_row).sum())


def enumerated_cd(p: np.ndarray, q: np.ndarray) -> float:
    """CD distance between two joint tables."""
    if np.any((p == 0) != (q == 0)):
        return float("inf")
    positive = p > 0
    ratios = q[positive] / p[positive]
    return float(np.log(ratios.max()) - np.log(ratios.min()))


def enumerated_kl(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) between two joint tables."""
    return float(rel_entr(p, q).sum())


def distances(
    bn: DiscreteBn,
    param: ParamRef,
    new_values: Union[str, Sequence[float]] = "all",
    scheme: CovariationScheme = CovariationScheme.PROPORTIONAL,
    method: DistanceMethod = DistanceMethod.AUTO,
    measures: Sequence[str] = ("cd", "kl", "jeffreys"),
) -> DistanceResult:
    """
    CD distance, KL divergence and Jeffreys distance between the network
    and its perturbations.

    :param measures: any of "cd", "kl", "jeffreys"
    :param method: LOCAL uses the single-row decompositions, ENUMERATE the
        full joint; AUTO enumerates KL/Jeffreys on small joints only
    :raises DistanceError: the parameter is 0 or 1 under proportional or
        order-preserving co-variation
    """
    logger = logging.getLogger(__name__)
    unknown = set(measures) - {"cd", "kl", "jeffreys"}
    if unknown:
        raise CovariationError(f"Unknown distance measures: {sorted(unknown)}")
    theta = _check_distance_param(bn, param, scheme)
    grid = expand_grid(new_values)
    index = param.row_index(bn)
    old_row = bn.cpt(param.node).table[index]

    joint_size = int(np.prod(bn.cardinalities))
    enumerate_kl = method is DistanceMethod.ENUMERATE or (
        method is DistanceMethod.AUTO and joint_size <= KL_ENUMERATION_CAP
    )
    enumerate_cd = method is DistanceMethod.ENUMERATE
    p_joint = enumerate_joint(bn) if enumerate_kl or enumerate_cd else None
    p_config = config_probability(bn, param)

    columns = {m: np.full(len(grid), np.nan) for m in measures}
    for i, t in enumerate(grid):
        try:
            new_row = covary(old_row, param.value, float(t), scheme)
        except (DegenerateRowError, OrderViolationError) as e:
            logger.debug(f"t={t:.6g} undefined: {e}")
            continue
        q_joint = (
            enumerate_joint(bn.with_row(param.node, index, new_row))
            if p_joint is not None
            else None
        )
        if "cd" in columns:
            columns["cd"][i] = (
                enumerated_cd(p_joint, q_joint)  # type: ignore[arg-type]
                if enumerate_cd
                else local_cd(old_row, new_row, p_config)
            )
        if "kl" in columns or "jeffreys" in columns:
            if enumerate_kl:
                forward = enumerated_kl(p_joint, q_joint)  # type: ignore[arg-type]
                backward = enumerated_kl(q_joint, p_joint)  # type: ignore[arg-type]
            else:
                forward = local_kl(old_row, new_row, p_config)
                backward = local_kl(new_row, old_row, p_config)
            if "kl" in columns:
                columns["kl"][i] = forward
            if "jeffreys" in columns:
                columns["jeffreys"][i] = forward + backward
    return DistanceResult(
        param=param,
        new_values=grid,
        original_value=theta,
        cd=columns.get("cd"),
        kl=columns.get("kl"),
        jeffreys=columns.get("jeffreys"),
        scheme=scheme,
    )


def cd_distance(
    bn: DiscreteBn,
    param: ParamRef,
    new_values: Union[str, Sequence[float]] = "all",
    scheme: CovariationScheme = CovariationScheme.PROPORTIONAL,
    method: DistanceMethod = DistanceMethod.AUTO,
) -> DistanceResult:
    """CD distance log max(p'/p) - log min(p'/p) along a grid."""
    return distances(bn, param, new_values, scheme, method, measures=("cd",))


def kl_divergence(
    bn: DiscreteBn,
    param: ParamRef,
    new_values: Union[str, Sequence[float]] = "all",
    scheme: CovariationScheme = CovariationScheme.PROPORTIONAL,
    method: DistanceMethod = DistanceMethod.AUTO,
) -> DistanceResult:
    return distances(bn, param, new_values, scheme, method, measures=("kl",))


def jeffreys(
    bn: DiscreteBn,
    param: ParamRef,
    new_values: Union[str, Sequence[float]] = "all",
    scheme: CovariationScheme = CovariationScheme.PROPORTIONAL,
    method: DistanceMethod = DistanceMethod.AUTO,
) -> DistanceResult:
    """KL(p || p') + KL(p' || p) along a grid."""
    return distances(bn, param, new_values, scheme, method, measures=("jeffreys",))


@dataclass(frozen=True)
class SensQueryRow:
    param: ParamRef
    original_value: float
    suggested_value: float
    cd: float


@dataclass(frozen=True, eq=False)
class SensQueryResult:
    """Single-parameter changes that bring a query to a target probability,
    by increasing CD distance."""

    query: Query
    target: float
    current: float
    rows: tuple[SensQueryRow, ...]

    def __len__(self) -> int:
        return len(self.rows)


def _solve(
    coefficients: tuple[float, float, float, float], target: float
) -> Optional[float]:
    a1, b1, a2, b2 = coefficients
    slope = a1 - target * a2
    if abs(slope) <= DEGENERACY_TOLERANCE * max(1.0, abs(a1), abs(a2)):
        return None
    return (target * b2 - b1) / slope


def _dedup_binary(rows: list[SensQueryRow], bn: DiscreteBn) -> list[SensQueryRow]:
    kept: dict[tuple, SensQueryRow] = {}
    result = []
    for row in rows:
        if bn.cpt(row.param.node).cardinality != 2:
            result.append(row)
            continue
        key = (row.param.node, row.param.parent_config)
        other = kept.get(key)
        raised = row.suggested_value >= row.original_value
        if other is None or (
            raised and other.suggested_value < other.original_value
        ):
            kept[key] = row
    return result + list(kept.values())


def sensquery(
    bn: DiscreteBn,
    query: Query,
    target: float,
    show_progress: bool = False,
) -> SensQueryResult:
    """
    Every single-parameter change that makes p(y_O | y_E) equal ``target``.

    Each CPT entry is varied under proportional co-variation. Entries equal
    to 1 cannot be varied and are skipped; entries equal to 0 are solved like
    any other and report an infinite CD distance. Solutions strictly inside
    (0, 1) that reproduce the target within SENSQUERY_TOLERANCE are kept; for
    binary nodes each row is reported once, by the level whose value is
    raised.

    :param target: the required probability, in (0, 1)
    """
    logger = logging.getLogger(__name__)
    if not 0.0 < target < 1.0:
        raise QueryError(f"Target probability {target!r} must lie in (0, 1)")
    joint, evidence = _joint_evidence(bn, query)
    numerator, denominator = _numerator_denominator(bn, joint, evidence)
    if not denominator > 0:
        raise QueryError("Query evidence has probability zero")
    current = numerator / denominator
    scheme = CovariationScheme.PROPORTIONAL

    params = list(bn.param_refs())
    solutions = []
    skipped = 0
    with logging_redirect_tqdm():
        for param in tqdm(params, desc="sensquery", disable=not show_progress):
            theta = bn.parameter(param)
            if theta >= 1.0 - DEGENERACY_TOLERANCE:
                skipped += 1
                continue
            coefficients = linear_coefficients(bn, query, param, scheme)
            t = _solve(coefficients, target)
            if t is None or not 0.0 < t < 1.0:
                continue
            perturbed = perturb(bn, param, t, scheme)
            n, d = _numerator_denominator(perturbed, joint, evidence)
            if not d > 0 or abs(n / d - target) > SENSQUERY_TOLERANCE:
                logger.debug(f"Rejected t={t:.6g} for {param}: fails verification")
                continue
            index = param.row_index(bn)
            cd = local_cd(
                bn.cpt(param.node).table[index],
                covary(bn.cpt(param.node).table[index], param.value, t, scheme),
                config_probability(bn, param),
            )
            solutions.append(SensQueryRow(param, theta, float(t), cd))

    if skipped:
        logger.info(f"Skipped {skipped} CPT entries equal to 1")
    rows = _dedup_binary(solutions, bn)
    rows.sort(
        key=lambda r: (r.cd, r.param.node, r.param.parent_config, r.param.value)
    )
    logger.info(
        f"{len(rows)} single-parameter changes reach {target:.6g} "
        f"(currently {current:.6g})"
    )
    return SensQueryResult(query, float(target), float(current), tuple(rows))
