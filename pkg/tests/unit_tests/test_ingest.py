import logging

import numpy as np
import pandas as pd
import pytest

from bnaudit.actions.ingest import (
    PIMA_NAMES,
    PimaFormatError,
    load_dataset,
    median_split,
    prepare_pima,
    read_raw_pima,
    write_dataset,
)
from bnaudit.model import DatasetError
from bnaudit.netfile import NetworkFile

from ..networks import PIMA_RAW_SMALL, SMALL_DAG, SMALL_DATA


@pytest.fixture
def variables():
    return NetworkFile.from_file(SMALL_DAG).dag.variables


def write(tmpdir, text, name="data.csv"):
    path = tmpdir / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_dataset(variables):
    data = load_dataset(SMALL_DATA, variables)
    assert len(data) == 20
    assert data.names == ("A", "B", "C", "D")
    assert data.labels(0) == ("no", "off", "low", "neg")
    assert data.labels(2) == ("yes", "on", "high", "pos")


def test_load_dataset_column_order(tmpdir, variables):
    path = write(tmpdir, "D,C,B,A\npos,mid,on,yes\n")
    data = load_dataset(path, variables)
    np.testing.assert_array_equal(data.rows, [[1, 1, 1, 1]])


def test_load_dataset_round_trip(tmpdir, variables):
    data = load_dataset(SMALL_DATA, variables)
    write_dataset(data, tmpdir / "out.csv")
    assert load_dataset(tmpdir / "out.csv", variables) == data


def test_load_dataset_header_only(tmpdir, variables):
    data = load_dataset(write(tmpdir, "A,B,C,D\n"), variables)
    assert len(data) == 0
    assert data.rows.shape == (0, 4)


def test_load_dataset_labels_are_case_sensitive(tmpdir, variables):
    path = write(tmpdir, "A,B,C,D\nno,off,low,neg\nno,Off,low,neg\n")
    with pytest.raises(DatasetError, match="unknown level 'Off'") as e:
        load_dataset(path, variables)
    assert e.value.row == 2
    assert e.value.column == "B"


@pytest.mark.parametrize(
    "text,column",
    [
        ("A,B,C,D,E\nno,off,low,neg,x\n", "E"),
        ("A,B,C\nno,off,low\n", "D"),
        ("A,B,C,D\nno,off,,neg\n", "C"),
    ],
)
def test_load_dataset_bad_columns(tmpdir, variables, text, column):
    with pytest.raises(DatasetError) as e:
        load_dataset(write(tmpdir, text), variables)
    assert e.value.column == column


def test_load_dataset_duplicate_column(tmpdir, variables):
    with pytest.raises(DatasetError, match="duplicate column 'A'") as e:
        load_dataset(write(tmpdir, "A,A,B,C,D\nno,no,off,low,neg\n"), variables)
    assert e.value.column == "A"


def test_load_dataset_not_utf8(tmpdir, variables):
    path = tmpdir / "data.csv"
    path.write_binary(b"A,B,C,D\n\xff\xfe,off,low,neg\n")
    with pytest.raises(DatasetError, match="UnicodeDecodeError"):
        load_dataset(path, variables)


def test_load_dataset_unreadable(tmpdir, variables):
    with pytest.raises(DatasetError, match="empty"):
        load_dataset(write(tmpdir, ""), variables)
    with pytest.raises(DatasetError):
        load_dataset(tmpdir / "missing.csv", variables)


def test_median_split():
    np.testing.assert_array_equal(
        median_split(pd.Series([1, 2, 3, 4])), ["low", "low", "high", "high"]
    )
    # ties at the median go low
    np.testing.assert_array_equal(
        median_split(pd.Series([5, 5, 5, 1]), ("a", "b")), ["a", "a", "a", "a"]
    )


def test_prepare_pima(caplog):
    caplog.set_level(logging.INFO)
    data = prepare_pima(PIMA_RAW_SMALL)
    assert len(data) == 8
    assert data.names == PIMA_NAMES
    columns = {
        name: [data.labels(r)[c] for r in range(8)]
        for c, name in enumerate(PIMA_NAMES)
    }
    assert columns["PREG"] == "low low high high low high low low".split()
    assert columns["GLUC"] == "low high low high high high low low".split()
    assert columns["DIAB"] == "neg pos pos pos pos pos pos neg".split()
    assert "Dropped 2 rows with missing values, 8 remain" in caplog.text


def test_read_raw_pima_without_header(tmpdir):
    lines = PIMA_RAW_SMALL.read_text().splitlines()[1:]
    path = write(tmpdir, "\n".join(lines) + "\n", "raw.csv")
    raw = read_raw_pima(path)
    assert len(raw) == 10
    assert list(raw.columns) == list(PIMA_NAMES)
    assert raw["GLUC"].iloc[0] == 89


def test_read_raw_pima_errors(tmpdir):
    with pytest.raises(PimaFormatError, match="expected 9 columns"):
        read_raw_pima(write(tmpdir, "1,2,3\n4,5,6\n", "raw.csv"))
    text = "1,89,66,23,94,28.1,0.167,21,0\n1,89,x,23,94,28.1,0.167,21,0\n"
    with pytest.raises(PimaFormatError, match="non-numeric") as e:
        read_raw_pima(write(tmpdir, text))
    assert e.value.column == "PRES"
    assert e.value.row == 2
    with pytest.raises(PimaFormatError, match="0 or 1"):
        prepare_pima(write(tmpdir, "1,89,66,23,94,28.1,0.167,21,2\n", "bad.csv"))
    with pytest.raises(PimaFormatError, match="empty"):
        read_raw_pima(write(tmpdir, "", "empty.csv"))
