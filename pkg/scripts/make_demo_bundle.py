#!/usr/bin/env python3
"""Write the named fixture bundles to a directory for CLI experiments."""

from __future__ import annotations

import argparse
from pathlib import Path

from skillfence import synth

FIXTURES = {
    "deep-work": synth.deep_work_files,
    "repo-assistant": synth.repo_assistant_files,
    "note-formatter": synth.benign_files,
    "dataset-stats": synth.mixed_script_files,
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", help="output directory")
    parser.add_argument("--only", choices=sorted(FIXTURES), help="write one fixture")
    args = parser.parse_args()
    names = [args.only] if args.only else sorted(FIXTURES)
    for name in names:
        root = Path(args.out) / name
        synth.materialize(FIXTURES[name](), root)
        print(f"wrote {root}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
