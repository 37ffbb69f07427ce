#!/usr/bin/env python3
"""Sweep contrastive dropout ratios on a generated dataset via the CLI.

Writes a dataset with `gen-synthetic`, runs `sweep-dropout` across the
requested ratios, and echoes the resulting table. Handy for picking a ratio
before committing to a long run.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from promptattrib.cli import main as cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="working directory")
    ap.add_argument("--ratios", default="0.35,0.4,0.45")
    ap.add_argument("--pairs", type=int, default=120)
    ap.add_argument("--attributes", type=int, default=3)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--sweep-seeds", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=40)
    args = ap.parse_args()

    work = Path(args.out)
    data = work / "data"
    code = cli(
        ["gen-synthetic", "--out", str(data), "--pairs", str(args.pairs),
         "--attributes", str(args.attributes), "--seed", str(args.seed)]
    )
    if code != 0:
        return code

    sweep_out = work / "sweep"
    code = cli(
        ["sweep-dropout", "--config", str(data / "run.cfg"),
         "--ratios", args.ratios, "--sweep-seeds", str(args.sweep_seeds),
         "--out", str(sweep_out),
         "--set", f"train.epochs={args.epochs}",
         "--set", "backend.freeze=false"]
    )
    if code != 0:
        return code

    print(f"table written to {sweep_out / 'sweep.txt'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
