"""Network files: a JSON document describing variables, edges and CPTs.

.. code-block:: json

    {
      "version": 1,
      "variables": [{"name": "A", "levels": ["low", "high"]}],
      "edges": [["A", "B"]],
      "cpts": {"B": {"parents": ["A"], "table": [[0.25, 0.75], [0.5, 0.5]]}}
    }

CPT rows follow the lexicographic order of the listed parents' levels,
last parent varying fastest. Files ending in ``.gz`` or ``.zst`` are
compressed.
"""
from __future__ import annotations

import gzip
import logging
from os import PathLike, cpu_count
from pathlib import Path
from typing import Any, Optional, Union

import blake3
import numpy as np
import orjson
import xxhash
import zstandard as zstd

from bnaudit import BnAuditInputError
from bnaudit.model import Cpt, Dag, DiscreteBn, Variable, build_network


class NetworkFileException(BnAuditInputError):
    pass


class NetworkFile:
    VERSION = 1
    KEY_ORDER = ("version", "variables", "edges", "cpts")

    def __init__(self, dag: Dag, network: Optional[DiscreteBn] = None):
        if network is not None and network.dag != dag:
            raise NetworkFileException("Network does not belong to the given DAG")
        self._dag = dag
        self._network = network

    @classmethod
    def from_network(cls, network: DiscreteBn) -> NetworkFile:
        return cls(network.dag, network)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NetworkFile):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self) -> int:
        return hash(self.fingerprint)

    @property
    def dag(self) -> Dag:
        return self._dag

    @property
    def network(self) -> Optional[DiscreteBn]:
        return self._network

    def require_network(self) -> DiscreteBn:
        if self._network is None:
            raise NetworkFileException("Network file has no CPTs")
        return self._network

    @property
    def fingerprint(self) -> str:
        """blake3 digest of the compact JSON document."""
        return blake3.blake3(self.to_json(pretty=False)).hexdigest()

    def to_dict(self) -> dict[str, Any]:
        dag = self._dag
        doc: dict[str, Any] = {
            "version": self.VERSION,
            "variables": [
                {"name": v.name, "levels": list(v.levels)} for v in dag.variables
            ],
            "edges": [[dag.names[a], dag.names[b]] for a, b in dag.edges],
        }
        if self._network is not None:
            doc["cpts"] = {
                dag.names[cpt.node]: {
                    "parents": [dag.names[p] for p in cpt.parents],
                    "table": cpt.table.tolist(),
                }
                for cpt in self._network.cpts
            }
        return doc

    @classmethod
    def from_dict(cls, doc: Any) -> NetworkFile:
        if not isinstance(doc, dict):
            raise NetworkFileException("Network file must hold a JSON object")
        unknown = set(doc) - set(cls.KEY_ORDER)
        if unknown:
            raise NetworkFileException(
                f"Unknown keys in network file: {sorted(unknown)}"
            )
        version = doc.get("version", cls.VERSION)
        if version != cls.VERSION:
            raise NetworkFileException(f"Unsupported network file version {version}")
        try:
            variables = [
                Variable(str(v["name"]), tuple(v["levels"])) for v in doc["variables"]
            ]
            edges = [(str(a), str(b)) for a, b in doc.get("edges", [])]
        except (KeyError, TypeError, ValueError) as e:
            raise NetworkFileException(
                f"Malformed variables or edges: {type(e).__name__} {e}"
            ) from None
        dag = Dag.from_names(variables, edges)
        cpts_doc = doc.get("cpts")
        if cpts_doc is None:
            return cls(dag)
        if not isinstance(cpts_doc, dict):
            raise NetworkFileException("'cpts' must map node names to tables")
        missing = set(dag.names) - set(cpts_doc)
        if missing:
            raise NetworkFileException(f"Missing CPTs for {sorted(missing)}")
        cpts = []
        for name, entry in cpts_doc.items():
            try:
                cpts.append(_parse_cpt(dag, name, entry["parents"], entry["table"]))
            except (KeyError, TypeError, ValueError) as e:
                raise NetworkFileException(
                    f"Malformed CPT for {name}: {type(e).__name__} {e}"
                ) from None
        return cls(dag, build_network(dag, cpts))

    def to_json(self, pretty: bool = False) -> bytes:
        return orjson.dumps(
            self.to_dict(), option=orjson.OPT_INDENT_2 if pretty else 0
        )

    @classmethod
    def from_json(cls, json_data: bytes) -> NetworkFile:
        try:
            doc = orjson.loads(json_data)
        except orjson.JSONDecodeError as e:
            raise NetworkFileException(f"Network file is not valid JSON: {e}") from None
        return cls.from_dict(doc)

    @classmethod
    def from_file(cls, path: Union[str, PathLike]) -> NetworkFile:
        """Load a network file, decompressing .gz and .zst files."""
        logger = logging.getLogger(__name__)
        path = Path(path)
        logger.debug(f"Reading network from {path}")
        try:
            s = _read_bytes(path)
        except (OSError, EOFError, zstd.ZstdError) as e:
            raise NetworkFileException(
                f"Could not read {path}: {type(e).__name__} {e}"
            ) from None
        return cls.from_json(s)

    def to_file(self, path: Union[str, PathLike]) -> None:
        """Write the network file, compressing .gz and .zst files."""
        logger = logging.getLogger(__name__)
        path = Path(path)
        logger.debug(f"Saving network to {path}")
        save_bytes = self.to_json(pretty=True)
        if path.suffix == ".gz":
            with open(path, "wb") as f:
                f.write(gzip.compress(save_bytes, compresslevel=5, mtime=0))
        elif path.suffix == ".zst":
            with open(path, "wb") as f:
                cctx = zstd.ZstdCompressor(
                    level=7,
                    write_checksum=True,
                    threads=cpu_count() or 1,
                )
                f.write(cctx.compress(save_bytes))
        else:
            with open(path, "wb") as f:
                f.write(save_bytes)


def _read_bytes(path: Path) -> bytes:
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    if path.suffix == ".zst":
        with open(path, "rb") as f:
            c = f.read()
        has_checksum, checksum = (
            zstd.get_frame_parameters(c).has_checksum,
            c[-4:],
        )
        s = zstd.decompress(c)
        del c
        if (
            has_checksum
            and (s_hash := xxhash.xxh64_digest(s))
            and checksum != s_hash[-4:][::-1]
        ):
            raise NetworkFileException(
                f"zstd content checksum verification failed: "
                f"{checksum.hex()} != {s_hash.hex()}"
            )
        return s
    with open(path, "rb") as f:
        return f.read()


def _parse_cpt(dag: Dag, name: str, parent_names: list, table: list) -> Cpt:
    """A CPT whose parents may be listed in any order; its table is
    rearranged into the DAG's parent order."""
    node = dag.index(name)
    parents = dag.parents(node)
    given = [dag.index(str(p)) for p in parent_names]
    if sorted(given) != list(parents) or len(set(given)) != len(given):
        raise NetworkFileException(
            f"CPT for {name} lists parents {list(parent_names)}, DAG has "
            f"{[dag.names[p] for p in parents]}"
        )
    array = np.asarray(table, dtype=float)
    card = dag.variables[node].cardinality
    shape = tuple(dag.variables[p].cardinality for p in given) + (card,)
    if array.size != int(np.prod(shape)):
        raise NetworkFileException(
            f"CPT for {name} has {array.size} entries, expected {int(np.prod(shape))}"
        )
    if given != list(parents):
        axes = [given.index(p) for p in parents] + [len(given)]
        array = np.transpose(array.reshape(shape), axes)
    return Cpt(
        node, parents, dag.parent_cardinalities(node), array.reshape(-1, card)
    )


def load_network(path: Union[str, PathLike]) -> NetworkFile:
    return NetworkFile.from_file(path)
