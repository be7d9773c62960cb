#!/usr/bin/env python3
import argparse
import json
import math
import sys
import time

import numpy as np

from bnaudit.inference import Query, query
from bnaudit.sensitivity import sensquery

from benchmarks.bench_netfile import generate_test_network


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--num-nodes", type=int, default=30)
    parser.add_argument("--num-queries", type=int, default=20)
    parser.add_argument("--r-seed", type=int, default=42)
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("-n", "--num-tests", type=int, default=3)
    args = parser.parse_args()

    results = []
    for i_test in range(args.num_tests):
        if args.verbose:
            print(f"Test {i_test}", file=sys.stderr)
        bn = generate_test_network(
            num_nodes=args.num_nodes, max_parents=2, r_seed=args.r_seed + i_test
        )
        rng = np.random.default_rng(args.r_seed + i_test)
        queries = []
        for _ in range(args.num_queries):
            target, observed = (int(v) for v in rng.permutation(args.num_nodes)[:2])
            queries.append(Query((target,), {observed: 0}, (0,)))

        time0 = time.perf_counter()
        for q in queries:
            query(bn, Query(q.targets, q.evidence_map))
        time1 = time.perf_counter()
        n_suggestions = len(sensquery(bn, queries[0], 0.5))
        time2 = time.perf_counter()

        results.append(
            {
                "query_time": (time1 - time0) / args.num_queries,
                "sensquery_time": time2 - time1,
                "num_suggestions": n_suggestions,
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
