"""Command-line interface.

Subcommands: ``analyze`` (pipeline + report), ``constrain`` (pipeline with
guard projection, writes the constrained bundle), ``stats stratified``
(population-weighted validity rate). Exit codes: 0 clean, 2 over-privilege
found, 1 error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bundle import write_bundle
from .config import Config, load_config
from .errors import SkillfenceError
from .pipeline import run_pipeline
from .stats import StratifiedSample, as_percent, compute_stratified_validity

EXIT_CLEAN = 0
EXIT_ERROR = 1
EXIT_OVERPRIVILEGE = 2


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("bundle", help="path to the skill bundle directory")
    parser.add_argument("--config", help="JSON/TOML config file")
    parser.add_argument("--oracle", help="rule | remote | transcript:<file>")
    parser.add_argument("--seed", type=int, help="run seed")
    parser.add_argument("--max-chains", type=int, dest="max_chains")
    parser.add_argument("--max-depth", type=int, dest="max_depth")
    parser.add_argument("--report", help="write the analysis report JSON here")
    parser.add_argument("--graph-out", dest="graph_out", help="write the graph JSON here")
    parser.add_argument("--transcript-out", dest="transcript_out",
                        help="write the oracle transcript (JSON lines) here")


def _config_from_args(args: argparse.Namespace) -> Config:
    config = load_config(args.config) if args.config else Config()
    overrides = {}
    for key in ("oracle", "seed", "max_chains", "max_depth"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if overrides:
        config = config.replace(**overrides)
    return config


def _emit(result, args: argparse.Namespace) -> int:
    report = result.report
    if args.graph_out:
        Path(args.graph_out).write_text(result.graph.to_json(), encoding="utf-8")
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
    if args.transcript_out and result.oracle is not None:
        result.oracle.save_transcript(args.transcript_out)
    positives = [e for e in report.action_in_task if e.unnecessary]
    print(f"skill: {report.skill}")
    print(f"over-privilege: {'yes' if report.skill_verdict else 'no'}")
    print(f"candidates screened: {len(report.actions)}")
    print(f"action-in-task positives: {len(positives)}")
    for entry in positives:
        print(f"  - {entry.action}: unnecessary under {entry.prompt!r}")
    for diag in report.diagnostics:
        print(f"  note: {diag}")
    return EXIT_OVERPRIVILEGE if report.skill_verdict else EXIT_CLEAN


def cmd_analyze(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    result = run_pipeline(args.bundle, config)
    return _emit(result, args)


def cmd_constrain(args: argparse.Namespace) -> int:
    config = _config_from_args(args).replace(constrain=True)
    result = run_pipeline(args.bundle, config)
    code = _emit(result, args)
    out = Path(args.out)
    if result.constrained_bundle is None:
        print("no validated over-privilege: constrain stage is a no-op")
        return code
    write_bundle(result.constrained_bundle, out)
    manifest_path = out / "constraints.json"
    manifest_path.write_text(
        json.dumps(result.constrained_manifest, indent=2, sort_keys=False),
        encoding="utf-8",
    )
    print(f"constrained bundle written to {out}")
    print(f"manifest: {manifest_path}")
    return code


def cmd_stats(args: argparse.Namespace) -> int:
    data = json.loads(Path(args.input).read_text(encoding="utf-8"))
    z = float(data.pop("z", args.z))
    sample = StratifiedSample(**data)
    result = compute_stratified_validity(sample, z)
    rendered = {
        "p_hat_percent": as_percent(result["p_hat"]),
        "ci_percent": [as_percent(result["ci_low"]), as_percent(result["ci_high"])],
        "se": result["se"],
    }
    print(json.dumps(rendered, indent=2))
    return EXIT_CLEAN


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skillfence",
        description="Detect and constrain task-conditioned over-privilege in skill bundles",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_analyze = sub.add_parser("analyze", help="analyze one bundle")
    _add_common(p_analyze)
    p_analyze.set_defaults(fn=cmd_analyze)

    p_constrain = sub.add_parser("constrain", help="analyze and write a constrained bundle")
    _add_common(p_constrain)
    p_constrain.add_argument("--out", required=True, help="output directory")
    p_constrain.set_defaults(fn=cmd_constrain)

    p_stats = sub.add_parser("stats", help="reporting utilities")
    stats_sub = p_stats.add_subparsers(dest="stats_command", required=True)
    p_strat = stats_sub.add_parser("stratified", help="stratified validity rate")
    p_strat.add_argument("--input", required=True,
                         help="JSON file with N_I, N_C, n_I, n_C, h_I, h_C")
    p_strat.add_argument("--z", type=float, default=1.96)
    p_strat.set_defaults(fn=cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SkillfenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
