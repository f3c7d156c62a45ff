#!/usr/bin/env python3
"""Run the sparsity-promoting continuation and log per-stage metrics."""

import argparse
import sys
from pathlib import Path

from porous_duu import cli

ROOT = Path(__file__).resolve().parent.parent


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--config", default=str(ROOT / "configs" / "continuation.yaml")
    )
    parser.add_argument("--out", default="out/continuation")
    args = parser.parse_args()
    return cli.main(["optimize", "--config", args.config, "--out", args.out])


if __name__ == "__main__":
    sys.exit(main())
