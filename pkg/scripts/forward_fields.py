#!/usr/bin/env python3
"""Solve the coupled forward problem once and dump all fields as VTK."""

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
    parser.add_argument("--out", default="out/forward")
    args = parser.parse_args()
    return cli.main(["forward", "--config", args.config, "--out", args.out])


if __name__ == "__main__":
    sys.exit(main())
