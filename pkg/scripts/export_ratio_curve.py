"""Dump model vs analytic density ratio on a 1-D grid as plot-ready CSV.

Columns: x, model_ratio, analytic_ratio.  The analytic column needs the
mixture spec, taken from the manifest written by `qdre generate` (or any
spec JSON); pass --spec to skip it.

    python3 scripts/export_ratio_curve.py bench_run/mlp/model.json \
        --spec bench_run/spec.json --out ratio_curve.csv
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from qdre.cli import _load_model_file
from qdre.mixtures import analytic_ratio, load_spec


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("model", help="model file from `qdre train`")
    ap.add_argument("--spec", required=True, help="mixture spec JSON")
    ap.add_argument("--out", default="ratio_curve.csv")
    ap.add_argument("--lo", type=float, default=-6.0)
    ap.add_argument("--hi", type=float, default=6.0)
    ap.add_argument("--points", type=int, default=601)
    args = ap.parse_args()

    entry = _load_model_file(args.model)
    if entry["input_dim"] != 1:
        print(f"model is {entry['input_dim']}-dimensional; the grid export is 1-D only", file=sys.stderr)
        raise SystemExit(3)
    spec = load_spec(args.spec)

    x = np.linspace(args.lo, args.hi, args.points)
    X = x.reshape(-1, 1)
    fitted = entry["ratio"](X)
    exact = analytic_ratio(spec, X)

    lines = ["x,model_ratio,analytic_ratio"]
    lines += [f"{xi:.17g},{fi:.17g},{ei:.17g}" for xi, fi, ei in zip(x, fitted, exact)]
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {args.points} rows to {args.out} ({entry['kind']})", file=sys.stderr)


if __name__ == "__main__":
    main()
