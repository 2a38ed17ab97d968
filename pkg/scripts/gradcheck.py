#!/usr/bin/env python3
"""Finite-difference gradient suite.

Usage:
    python scripts/gradcheck.py                  # every op, loss and second-order case
    python scripts/gradcheck.py --cases 20       # fewer randomized cases per target
    python scripts/gradcheck.py --only op:matmul --only gradient_penalty
    python scripts/gradcheck.py --list           # list target names
"""
import argparse
import sys
from pathlib import Path

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from engine import gradcheck
from ganlab.config import gradcheck_cases, load_config
from ganlab.logging import configure_logging


def main() -> int:
    parser = argparse.ArgumentParser(description="Gradient oracle suite")
    parser.add_argument("--cases", type=int, help="Randomized cases per target")
    parser.add_argument("--seed", type=int, default=0, help="Root seed for case generation")
    parser.add_argument("--only", action="append", metavar="NAME", help="Restrict to one target (repeatable)")
    parser.add_argument("--list", action="store_true", help="List target names")
    args = parser.parse_args()

    if args.list:
        for name in gradcheck.case_names():
            print(name)
        return 0

    configure_logging(load_config())
    unknown = set(args.only or ()) - set(gradcheck.case_names())
    if unknown:
        print(f"Unknown target(s): {', '.join(sorted(unknown))}")
        return 2

    report = gradcheck.run_suite(args.cases or gradcheck_cases(), args.seed, args.only)
    for name, (ok, total) in report.summary().items():
        marker = "ok  " if ok == total else "FAIL"
        print(f"  {marker} {name}: {ok}/{total}")
    print()
    print(f"{len(report.results) - len(report.failures)}/{len(report.results)} passed")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
