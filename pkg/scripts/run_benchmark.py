"""End-to-end benchmark: generate -> train -> evaluate -> compare.

Drives the full pipeline through the command line entry point so every
artifact is byte-identical to what the installed `qdre` tool writes.  The
default sizes finish in a couple of minutes on one core; --full switches to
the reference setup (1e5 samples per class, full-width networks, 1000 metric
repeats) and takes much longer.

    python3 scripts/run_benchmark.py --out bench_run
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from qdre.cli import main as qdre_main
from qdre.mixtures import benchmark_spec, save_spec


def run(argv: list) -> None:
    argv = [str(a) for a in argv]
    t0 = time.perf_counter()
    rc = qdre_main(argv)
    print(f"  [{argv[0]}] rc={rc} in {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    if rc != 0:
        sys.exit(rc)


def parse_args() -> argparse.Namespace:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="bench_run", help="working directory for all artifacts")
    ap.add_argument("--n", type=int, default=40_000, help="total samples, split evenly over classes")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument(
        "--models",
        default="mlp,bce-mlp,rosmm-c",
        help="comma list drawn from mlp,bce-mlp,rosmm-c,rosmm-r",
    )
    ap.add_argument("--hidden", default="64,64", help="hidden widths; empty string keeps per-model defaults")
    ap.add_argument("--max-epochs", type=int, default=60)
    ap.add_argument("--n-projections", type=int, default=50)
    ap.add_argument("--n-repeats", type=int, default=100)
    ap.add_argument("--full", action="store_true", help="reference-scale run (slow)")
    return ap.parse_args()


def main() -> None:
    args = parse_args()
    if args.full:
        args.n = 200_000
        args.hidden = ""
        args.max_epochs = 500
        args.n_repeats = 1000

    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)
    spec_path = root / "spec.json"
    save_spec(benchmark_spec(), spec_path)

    data_dir = root / "data"
    run(["generate", "--spec", spec_path, "--n", args.n, "--seed", args.seed, "--out", data_dir])

    model_files = []
    for kind in args.models.split(","):
        kind = kind.strip()
        model_dir = root / kind
        cmd = [
            "train", "--data", data_dir, "--model", kind, "--out", model_dir,
            "--seed", args.seed, "--max-epochs", args.max_epochs,
        ]
        if args.hidden:
            cmd += ["--hidden", args.hidden]
        run(cmd)
        model_files.append(model_dir / "model.json")

    eval_dir = root / "eval"
    run(
        ["evaluate", "--data", data_dir, "--out", eval_dir, "--oracle", "--seed", args.seed,
         "--n-projections", args.n_projections, "--n-repeats", args.n_repeats]
        + [part for m in model_files for part in ("--model", m)]
    )

    # reweighted holdout for the first model, as input for downstream use
    run([
        "reweight", "--input", data_dir / "test.csv", "--model", model_files[0],
        "--out", root / "test_reweighted.csv",
    ])

    run(["compare", eval_dir / "scores.json", "--out", root / "table.csv"])
    print(f"artifacts under {root}/", file=sys.stderr)


if __name__ == "__main__":
    main()
