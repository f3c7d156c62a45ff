#!/usr/bin/env python3
"""Optimize the design over a variance-weight sweep (mean/variance tradeoff).

Writes per-run iteration logs, optimal designs, and a summary table with
Monte Carlo statistics at each optimum.
"""

import argparse
import sys
from pathlib import Path

from porous_duu import cli

ROOT = Path(__file__).resolve().parent.parent


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--config", default=str(ROOT / "configs" / "tradeoff.yaml")
    )
    parser.add_argument("--out", default="out/tradeoff")
    args = parser.parse_args()
    return cli.main(["optimize", "--config", args.config, "--out", args.out])


if __name__ == "__main__":
    sys.exit(main())
