import logging

import numpy as np
import orjson
import pytest
import zstandard

from bnaudit.model import CycleError, NormalizationError
from bnaudit.netfile import NetworkFile, NetworkFileException, load_network

from ..networks import SMALL_DAG, SMALL_NET, small_network

example_network_json = b"""{
"version": 1,
"variables": [
    {"name": "R", "levels": ["dry", "wet"]},
    {"name": "S", "levels": ["off", "on"]},
    {"name": "G", "levels": ["dry", "damp", "wet"]}
],
"edges": [["R", "G"], ["S", "G"]],
"cpts": {
    "G": {
        "parents": ["S", "R"],
        "table": [
            [0.5, 0.25, 0.25],
            [0.25, 0.25, 0.5],
            [0.25, 0.5, 0.25],
            [0.0, 0.25, 0.75]
        ]
    },
    "R": {"parents": [], "table": [[0.75, 0.25]]},
    "S": {"parents": [], "table": [[0.5, 0.5]]}
}
}"""


def test_network_file_load():
    network_file = NetworkFile.from_json(example_network_json)
    bn = network_file.require_network()
    assert network_file.dag.names == ("R", "S", "G")
    assert bn.cpt("G").parents == (0, 1)
    # rows were listed with S varying slowest; stored with R slowest
    np.testing.assert_array_equal(
        bn.cpt("G").table,
        [[0.5, 0.25, 0.25], [0.25, 0.5, 0.25], [0.25, 0.25, 0.5], [0.0, 0.25, 0.75]],
    )


def test_network_file_round_trip():
    network_file = NetworkFile.from_json(example_network_json)
    again = NetworkFile.from_json(network_file.to_json())
    assert again == network_file
    assert again.network == network_file.network
    assert again.fingerprint == network_file.fingerprint
    assert len(network_file.fingerprint) == 64
    assert list(orjson.loads(network_file.to_json())) == list(NetworkFile.KEY_ORDER)
    assert network_file.to_json(pretty=True) == again.to_json(pretty=True)


def test_network_file_structure_only():
    network_file = NetworkFile.from_file(SMALL_DAG)
    assert network_file.network is None
    assert "cpts" not in network_file.to_dict()
    with pytest.raises(NetworkFileException, match="no CPTs"):
        network_file.require_network()
    assert network_file.dag == load_network(SMALL_NET).dag
    assert network_file != load_network(SMALL_NET)


@pytest.mark.parametrize("suffix", [".json", ".json.gz", ".json.zst"])
def test_network_file_save_and_load(tmpdir, suffix, caplog):
    caplog.set_level(logging.DEBUG)
    network_file = NetworkFile.from_network(small_network())
    path = tmpdir / f"net{suffix}"
    network_file.to_file(path)
    assert NetworkFile.from_file(path) == network_file
    assert f"Saving network to {path}" in caplog.text


def test_network_file_saves_are_identical(tmpdir):
    network_file = NetworkFile.from_network(small_network())
    for name in ("a.json.gz", "b.json.gz"):
        network_file.to_file(tmpdir / name)
    assert (tmpdir / "a.json.gz").read_binary() == (tmpdir / "b.json.gz").read_binary()


def test_network_file_zstd_checksum_error(tmpdir, monkeypatch):
    network_file = NetworkFile.from_network(small_network())
    network_file.to_file(tmpdir / "net.json.zst")
    with open(tmpdir / "net.json.zst", "r+b") as f:
        f.seek(4)
        c = f.read(1)
        f.seek(4)
        f.write(bytes([ord(c) ^ 0b1]))
    with pytest.raises(NetworkFileException, match="ZstdError"):
        NetworkFile.from_file(tmpdir / "net.json.zst")

    network_file.to_file(tmpdir / "net.json.zst")
    monkeypatch.setattr(
        zstandard, "decompress", lambda _: network_file.to_json(pretty=True) + b" "
    )
    with pytest.raises(NetworkFileException, match="checksum"):
        NetworkFile.from_file(tmpdir / "net.json.zst")


def test_network_file_missing(tmpdir):
    with pytest.raises(NetworkFileException, match="Could not read"):
        NetworkFile.from_file(tmpdir / "none.json")


@pytest.mark.parametrize(
    "doc,message",
    [
        (b"[1, 2", "not valid JSON"),
        (b"[]", "JSON object"),
        (b'{"version": 2, "variables": []}', "version 2"),
        (b'{"variables": [], "extra": 1}', "Unknown keys"),
        (b'{"variables": [{"name": "A"}]}', "Malformed"),
        (
            b'{"variables": [{"name": "A", "levels": ["a", "b"]}], "cpts": {}}',
            "Missing CPTs",
        ),
        (
            b'{"variables": [{"name": "A", "levels": ["a", "b"]}],'
            b' "cpts": {"A": {"table": [[0.5, 0.5]]}}}',
            "Malformed CPT",
        ),
        (
            b'{"variables": [{"name": "A", "levels": ["a", "b"]}],'
            b' "cpts": {"A": {"parents": [], "table": [[0.5, 0.25, 0.25]]}}}',
            "3 entries, expected 2",
        ),
        (
            b'{"variables": [{"name": "A", "levels": ["a", "b"]}],'
            b' "cpts": {"A": {"parents": [], "table": [["x", 0.5]]}}}',
            "Malformed CPT for A: ValueError",
        ),
    ],
)
def test_network_file_invalid(doc, message):
    with pytest.raises(NetworkFileException, match=message):
        NetworkFile.from_json(doc)


def test_network_file_model_errors():
    doc = orjson.loads(example_network_json)
    doc["edges"].append(["G", "R"])
    with pytest.raises(CycleError):
        NetworkFile.from_dict(doc)

    doc = orjson.loads(example_network_json)
    doc["cpts"]["G"]["parents"] = ["R"]
    with pytest.raises(NetworkFileException, match="lists parents"):
        NetworkFile.from_dict(doc)

    doc = orjson.loads(example_network_json)
    doc["cpts"]["R"]["table"] = [[0.75, 0.5]]
    with pytest.raises(NormalizationError):
        NetworkFile.from_dict(doc)

    network_file = NetworkFile.from_dict(orjson.loads(example_network_json))
    other = NetworkFile.from_network(small_network())
    with pytest.raises(NetworkFileException):
        NetworkFile(network_file.dag, other.network)


@pytest.mark.parametrize("name", ["net.json.zst", "net.json.gz"])
def test_network_file_corrupt_archive(tmpdir, name):
    (tmpdir / name).write_binary(b"not an archive")
    with pytest.raises(NetworkFileException, match="Could not read"):
        NetworkFile.from_file(tmpdir / name)
