#!/usr/bin/env python3
import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from bnaudit.model import Dag, Variable, network_from_tables
from bnaudit.netfile import NetworkFile


def generate_test_network(num_nodes=200, max_parents=3, cardinality=3, r_seed=42):
    rng = np.random.default_rng(r_seed)
    variables = [
        Variable(f"V{i:04d}", tuple(f"s{k}" for k in range(cardinality)))
        for i in range(num_nodes)
    ]
    edges = []
    for child in range(1, num_nodes):
        n_parents = int(rng.integers(0, min(max_parents, child) + 1))
        for parent in rng.choice(child, size=n_parents, replace=False):
            edges.append((int(parent), child))
    dag = Dag(variables, edges)
    tables = {}
    for i in range(num_nodes):
        raw = rng.uniform(0.05, 1.0, size=(dag.n_configs(i), cardinality))
        tables[i] = raw / raw.sum(axis=1, keepdims=True)
    return network_from_tables(dag, tables)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--bench-dir", type=str, default="/tmp/bnaudit_bench_dir")
    parser.add_argument("--num-nodes", type=int, default=2000)
    parser.add_argument("--r-seed", type=int, default=42)
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("-n", "--num-tests", type=int, default=3)
    args = parser.parse_args()

    bench_dir = Path(args.bench_dir)
    os.makedirs(bench_dir, exist_ok=True)

    results = []
    for i_test in range(args.num_tests):
        if args.verbose:
            print(f"Test {i_test}", file=sys.stderr)
        network_file = NetworkFile.from_network(
            generate_test_network(num_nodes=args.num_nodes, r_seed=args.r_seed + i_test)
        )

        timings = {}
        for suffix in ("json", "json.gz", "json.zst"):
            path = bench_dir / f"net.{suffix}"
            time0 = time.perf_counter()
            network_file.to_file(path)
            time1 = time.perf_counter()
            NetworkFile.from_file(path)
            time2 = time.perf_counter()
            name = suffix.rsplit(".", 1)[-1].replace("json", "raw")
            timings[f"{name}_save"] = time1 - time0
            timings[f"{name}_load"] = time2 - time1
            timings[f"{name}_size"] = os.path.getsize(path)

        results.append(
            {
                "num_parameters": sum(
                    cpt.table.size for cpt in network_file.require_network().cpts
                ),
                **timings,
            }
        )

    summary = {
        k: round(math.fsum(d[k] for d in results) / len(results), 3)
        for k in results[0].keys()
    }
    output = {"args": vars(args), "results": results, "summary": summary}
    print(json.dumps(output, indent=2))


if __name__ == "__main__":
    main()
