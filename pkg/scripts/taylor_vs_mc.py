#!/usr/bin/env python3
"""Compare Taylor risk estimates against Monte Carlo over a rank sweep."""

import argparse
import sys
from pathlib import Path

from porous_duu import cli

ROOT = Path(__file__).resolve().parent.parent


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--config", default=str(ROOT / "configs" / "default.yaml")
    )
    parser.add_argument("--out", default="out/taylor_vs_mc")
    parser.add_argument("--workers", type=int)
    args = parser.parse_args()
    argv = ["taylor-vs-mc", "--config", args.config, "--out", args.out]
    if args.workers is not None:
        argv += ["--workers", str(args.workers)]
    return cli.main(argv)


if __name__ == "__main__":
    sys.exit(main())
