#!/usr/bin/env python3
"""Run the bundled downlink analog end to end: elaborate, solve the
baseline, evaluate the standard scenario families, and print the
report table.  A thin driver over the same entry points the CLI uses.

    python3 scripts/run_du_analog.py
    python3 scripts/run_du_analog.py --budget 200000
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from ddtwin import scenarios as sc
from ddtwin.cli import build_graph, load_run, load_run_manifest, _solve_opts
from ddtwin.solver import solve_best_case

FIXTURE = Path(__file__).resolve().parent.parent \
    / "src" / "ddtwin" / "fixtures" / "du_analog" / "manifest.yaml"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--manifest", default=str(FIXTURE))
    ap.add_argument("--budget", type=int, default=None,
                    help="override both solver budgets")
    args = ap.parse_args()

    manifest = load_run_manifest(args.manifest)
    if args.budget is not None:
        manifest.budget_nodes = args.budget
        manifest.scenario_budget_nodes = args.budget
    loaded = load_run(manifest)
    graph = build_graph(loaded)
    print(f"{len(graph.tasks)} tasks, {len(graph.buffers)} buffers, "
          f"deadline {graph.deadline:,}")

    t0 = time.time()
    baseline = solve_best_case(graph, loaded.topology, loaded.catalog,
                               _solve_opts(manifest, loaded.deployment))
    print(f"baseline: {baseline.status} {baseline.makespan:,} "
          f"({time.time() - t0:.1f}s)")
    if baseline.makespan is None:
        return 1

    specs = sc.enumerate_scenarios(graph, loaded.catalog,
                                   small_threshold=manifest.small_threshold)
    opts = _solve_opts(manifest, loaded.deployment, scenario=True)
    t0 = time.time()
    results = [sc.evaluate_scenario(spec, graph, loaded.topology,
                                    loaded.catalog, opts, None, baseline)
               for spec in specs]
    ranked = sc.rank_scenarios(results)
    print(sc.render_scenario_table(ranked))
    for r in ranked:
        if r.note:
            print(f"note: {r.name}: {r.note}")
    print(f"{len(ranked)} scenarios in {time.time() - t0:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
