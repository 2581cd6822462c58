#!/usr/bin/env python3
"""Suppression/utility experiment on a synthetic corpus.

Builds N skills with injected detached privileged steps, runs the full
pipeline with constraining, then re-drives every validated (action, task)
pair against the constrained bundle. Reports the suppression rate over
unnecessary instances and completion/equivalence rates over necessary ones.
"""

from __future__ import annotations

import argparse
import json
import tempfile
from collections import Counter
from pathlib import Path

from skillfence import synth
from skillfence.config import Config
from skillfence.driver import GraphInterpreterDriver
from skillfence.oracle import RuleOracle
from skillfence.pipeline import run_pipeline_on_bundle
from skillfence.replay import normalize_trace, relevant_output
from skillfence.sandbox import Sandbox


def drive(bundle, task, work: Path, tag: str):
    driver = GraphInterpreterDriver(RuleOracle())
    sandbox = Sandbox(work / tag)
    if task.fixture is not None:
        sandbox.materialize(task.fixture.files)
    return driver.run(bundle, task.prompt, sandbox)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--skills", type=int, default=20)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--json", action="store_true", help="emit JSON instead of text")
    args = parser.parse_args()

    work = Path(tempfile.mkdtemp(prefix="skillfence-corpus-"))
    corpus = synth.injected_corpus(args.seed, args.skills)
    config = Config(constrain=True, seed=args.seed)

    totals = Counter()
    run_id = 0
    for i, files in enumerate(corpus):
        bundle = synth.load_fixture(files, work / f"skill-{i:03d}")
        result = run_pipeline_on_bundle(bundle, config, workdir=work / f"pipe-{i:03d}")
        constrained = result.constrained_bundle or bundle
        for verdict in result.verdicts:
            run_id += 1
            trace, output = drive(constrained, verdict.task, work, f"re-{run_id:05d}")
            node = result.graph.node(verdict.candidate)
            key = (node.op, node.obj)
            present = any((s.op, s.obj) == key for s in trace.steps)
            if verdict.unnecessary:
                totals["unnecessary"] += 1
                totals["suppressed"] += 0 if present else 1
            else:
                totals["necessary"] += 1
                totals["completed"] += 1 if output.structured.get("completed") else 0
                # compare against the original run for this task
                o_trace, o_out = drive(bundle, verdict.task, work, f"orig-{run_id:05d}")
                suppressed_ops = {
                    (result.graph.node(v.candidate).op, result.graph.node(v.candidate).obj)
                    for v in result.verdicts
                    if v.unnecessary and v.task.prompt == verdict.task.prompt
                }
                expected = [s for s in normalize_trace(o_trace)
                            if (s[0], s[1]) not in suppressed_ops]
                got = normalize_trace(trace)
                core = [tuple(s[:2]) for s in expected] == [tuple(s[:2]) for s in got]
                out_eq = (relevant_output(o_out, verdict.task.prompt)["fields"]
                          == relevant_output(output, verdict.task.prompt)["fields"])
                totals["core_eq"] += 1 if core else 0
                totals["out_eq"] += 1 if out_eq else 0

    summary = {
        "skills": args.skills,
        "unnecessary_instances": totals["unnecessary"],
        "suppressed": totals["suppressed"],
        "suppression_rate": (totals["suppressed"] / totals["unnecessary"]
                             if totals["unnecessary"] else 1.0),
        "necessary_instances": totals["necessary"],
        "completed": totals["completed"],
        "core_eq": totals["core_eq"],
        "out_eq": totals["out_eq"],
    }
    if args.json:
        print(json.dumps(summary, indent=2))
    else:
        print(f"skills analyzed:          {summary['skills']}")
        print(f"unnecessary instances:    {summary['unnecessary_instances']}")
        print(f"suppressed after guards:  {summary['suppressed']} "
              f"({100.0 * summary['suppression_rate']:.2f}%)")
        print(f"necessary instances:      {summary['necessary_instances']}")
        print(f"  completed:              {summary['completed']}")
        print(f"  core trace preserved:   {summary['core_eq']}")
        print(f"  output preserved:       {summary['out_eq']}")
    ok = summary["suppressed"] == summary["unnecessary_instances"]
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
