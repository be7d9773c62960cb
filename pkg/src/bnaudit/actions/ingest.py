from __future__ import annotations

import logging
from collections.abc import Sequence
from os import PathLike
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from bnaudit.model import Dataset, DatasetError, Variable

PIMA_RAW_COLUMNS = (
    "Pregnancies",
    "Glucose",
    "BloodPressure",
    "SkinThickness",
    "Insulin",
    "BMI",
    "DiabetesPedigreeFunction",
    "Age",
    "Outcome",
)
PIMA_NAMES = ("PREG", "GLUC", "PRES", "TRIC", "INS", "MASS", "PED", "AGE", "DIAB")
PIMA_ZERO_IS_MISSING = ("GLUC", "PRES", "TRIC", "INS", "MASS")
PIMA_VARIABLES = tuple(Variable(name, ("low", "high")) for name in PIMA_NAMES[:-1]) + (
    Variable("DIAB", ("neg", "pos")),
)


class PimaFormatError(DatasetError):
    pass


def load_dataset(path: Union[str, PathLike], variables: Sequence[Variable]) -> Dataset:
    """
    Read a CSV of level labels into a Dataset.

    The header must name every variable exactly once, in any order. Labels
    are case-sensitive.

    :param path: a UTF-8, comma-separated file with a header row
    :param variables: the schema, usually the network's variables
    :raises DatasetError: with the 1-based data row and column of the first
        unknown column, missing cell or unknown label
    """
    logger = logging.getLogger(__name__)
    path = Path(path)
    try:
        # header=None keeps repeated header names instead of renaming them
        raw = pd.read_csv(
            path,
            header=None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{path}: file is empty, expected a header row") from None
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as e:
        raise DatasetError(f"{path}: {type(e).__name__} {e}") from None
    header = pd.Index([str(name) for name in raw.iloc[0]])
    df = raw.iloc[1:].reset_index(drop=True)
    df.columns = header

    expected = [v.name for v in variables]
    duplicated = header[header.duplicated()]
    if len(duplicated):
        raise DatasetError(
            f"{path}: duplicate column {duplicated[0]!r}", column=duplicated[0]
        )
    for column in header:
        if column not in expected:
            raise DatasetError(f"{path}: unknown column {column!r}", column=column)
    absent = [name for name in expected if name not in df.columns]
    if absent:
        raise DatasetError(f"{path}: missing columns {absent}", column=absent[0])

    df = df[expected]
    rows = np.zeros(df.shape, dtype=np.int64)
    for c, variable in enumerate(variables):
        column = df[variable.name]
        missing = column.isna() | (column.str.strip() == "")
        if missing.any():
            r = int(np.flatnonzero(missing.to_numpy())[0]) + 1
            raise DatasetError(
                f"{path}: row {r}, column {variable.name}: missing value",
                row=r,
                column=variable.name,
            )
        codes = pd.Categorical(column, categories=list(variable.levels)).codes
        unknown = np.flatnonzero(codes < 0)
        if len(unknown):
            r = int(unknown[0]) + 1
            raise DatasetError(
                f"{path}: row {r}, column {variable.name}: unknown level "
                f"{column.iloc[r - 1]!r}, expected one of {list(variable.levels)}",
                row=r,
                column=variable.name,
            )
        rows[:, c] = codes
    logger.debug(f"Read {len(df)} rows from {path}")
    return Dataset(variables, rows)


def write_dataset(data: Dataset, path: Union[str, PathLike]) -> None:
    """Write a Dataset as a CSV of level labels."""
    logger = logging.getLogger(__name__)
    df = pd.DataFrame(
        {
            v.name: np.asarray(v.levels, dtype=object)[data.rows[:, c]]
            for c, v in enumerate(data.variables)
        }
    )
    df.to_csv(path, index=False)
    logger.debug(f"Wrote {len(data)} rows to {path}")


def median_split(
    column: pd.Series, levels: tuple[str, str] = ("low", "high")
) -> pd.Series:
    """Binarize at the median; values equal to the median are low."""
    median = column.median()
    return pd.Series(
        np.where(column <= median, levels[0], levels[1]), index=column.index
    )


def read_raw_pima(raw_path: Union[str, PathLike]) -> pd.DataFrame:
    """The 9 numeric columns of a raw Pima Indians Diabetes file, renamed.

    A header row is optional.
    """
    raw_path = Path(raw_path)
    try:
        df = pd.read_csv(raw_path, header=None, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise PimaFormatError(f"{raw_path}: file is empty") from None
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as e:
        raise PimaFormatError(f"{raw_path}: {type(e).__name__} {e}") from None
    if df.shape[1] != len(PIMA_NAMES):
        raise PimaFormatError(
            f"{raw_path}: expected {len(PIMA_NAMES)} columns, got {df.shape[1]}"
        )
    first = pd.to_numeric(df.iloc[0], errors="coerce")
    has_header = bool(first.isna().any())
    if has_header:
        df = df.iloc[1:]
    df.columns = list(PIMA_NAMES)
    numeric = df.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().to_numpy()
    if bad.any():
        r, c = (int(i) for i in np.argwhere(bad)[0])
        line = r + 1 + int(has_header)
        raise PimaFormatError(
            f"{raw_path}: line {line}, column {PIMA_NAMES[c]}: "
            f"non-numeric value {df.iat[r, c]!r}",
            row=r + 1,
            column=PIMA_NAMES[c],
        )
    return numeric.reset_index(drop=True)


def prepare_pima(raw_path: Union[str, PathLike]) -> Dataset:
    """
    The binary diabetes dataset from the raw Pima Indians Diabetes file.

    Rows with a zero glucose, blood pressure, skin thickness, insulin or BMI
    (zero codes a missing measurement) are dropped. Every other column is
    split at its median over the remaining rows; the outcome maps to neg/pos.
    """
    logger = logging.getLogger(__name__)
    numeric = read_raw_pima(raw_path)
    complete = (numeric[list(PIMA_ZERO_IS_MISSING)] != 0).all(axis=1)
    numeric = numeric[complete].reset_index(drop=True)
    logger.info(
        f"Dropped {int((~complete).sum())} rows with missing values, "
        f"{len(numeric)} remain"
    )
    outcome = numeric["DIAB"]
    if not outcome.isin([0, 1]).all():
        r = int(np.flatnonzero(~outcome.isin([0, 1]).to_numpy())[0]) + 1
        raise PimaFormatError(
            f"{raw_path}: outcome must be 0 or 1 (complete row {r})",
            row=r,
            column="DIAB",
        )
    labels = pd.DataFrame(
        {name: median_split(numeric[name]) for name in PIMA_NAMES[:-1]}
    )
    labels["DIAB"] = np.where(outcome == 1, "pos", "neg")
    return Dataset.from_labels(PIMA_VARIABLES, labels.itertuples(index=False))
