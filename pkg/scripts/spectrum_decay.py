#!/usr/bin/env python3
"""Eigenvalue decay of the preconditioned Hessian across a fine mesh pair."""

import argparse
import sys
from pathlib import Path

from porous_duu import cli

ROOT = Path(__file__).resolve().parent.parent


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--config", default=str(ROOT / "configs" / "spectrum_pair.yaml")
    )
    parser.add_argument("--out", default="out/spectrum_pair")
    args = parser.parse_args()
    return cli.main(["spectrum", "--config", args.config, "--out", args.out])


if __name__ == "__main__":
    sys.exit(main())
