"""Command line interface: reproducible generate / train / evaluate runs.

Every command takes its options from (in increasing precedence) built-in
defaults, an optional JSON or TOML config file, and command line flags.
All randomness flows from one ``--seed`` through documented role-derived
sub-seeds, and no output embeds timestamps, so rerunning a command with
identical inputs produces byte-identical files.  Exit codes: 0 success,
2 config error, 3 data error, 4 numerical failure (divergence,
non-finite ratios).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import (
    config_hash,
    default_hidden_dims,
    default_train_config,
    train_config_to_dict,
)
from .data import Dataset, balance_classes, load as load_dataset, save as save_dataset
from .errors import ConfigError, DataError, NumericsError
from .losses import RatioTrickTransform
from .metrics import SwConfig, reweight_closure
from .mixtures import SignedMixtureSpec, analytic_ratio, load_spec, sample_mixture
from .nn import forward, model_from_dict, model_to_dict, params_checksum, init_mlp, train
from .rosmm import (
    RosmmModel,
    fit_rosmm,
    initial_theta,
    normalize_variant,
    rosmm_from_dict,
    rosmm_ratio,
    rosmm_to_dict,
    train_subratios,
)
from .data import split as split_dataset

MODEL_CHOICES = ("mlp", "bce-mlp", "rosmm-c", "rosmm-r")
SPLIT_NAMES = ("train", "val", "test")


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    try:
        with path.open("r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected a JSON object at top level")
    return obj


def _load_config_file(path) -> dict:
    path = Path(path)
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ImportError:
            raise ConfigError(
                f"{path}: TOML configs need Python 3.11+ (tomllib); use JSON instead"
            ) from None
        try:
            with path.open("rb") as fh:
                obj = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
        return obj
    return _read_json(path)


def _merge_options(defaults: dict, file_cfg: dict, flags: dict) -> dict:
    """defaults < config file < explicit flags."""
    unknown = set(file_cfg) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    merged = dict(defaults)
    merged.update(file_cfg)
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged


def _dataset_path(data_dir: Path, name: str) -> Path:
    for ext in (".csv", ".jsonl"):
        candidate = data_dir / f"{name}{ext}"
        if candidate.exists():
            return candidate
    raise DataError(f"no {name}.csv or {name}.jsonl under {data_dir}")


def _load_manifest(data_dir: Path) -> dict | None:
    manifest = data_dir / "manifest.json"
    return _read_json(manifest) if manifest.exists() else None


def _parse_int_list(text: str, what: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError:
        raise ConfigError(f"{what} must be comma-separated integers, got {text!r}") from None
    if not values:
        raise ConfigError(f"{what} must not be empty")
    return values


def _rosmm_checksum(model: RosmmModel) -> str:
    params = [np.array([model.theta_c])]
    params += model.r_pp.parameters() + model.r_pm.parameters()
    return params_checksum(params)


def _load_model_file(path) -> dict:
    """Model file -> {name, ratio(X), input_dim, kind, checksum}."""
    path = Path(path)
    obj = _read_json(path)
    fmt = obj.get("format")
    if fmt == "qdre-mlp":
        model, loss = model_from_dict(obj)

        def ratio(X, model=model, loss=loss):
            s, _ = forward(model, X)
            return loss.ratio(s)

        return {
            "name": path.stem,
            "ratio": ratio,
            "input_dim": model.input_dim,
            "kind": f"mlp/{loss.kind}",
            "checksum": params_checksum(model.parameters()),
        }
    if fmt == "qdre-rosmm":
        model = rosmm_from_dict(obj)

        def ratio(X, model=model):
            return rosmm_ratio(model, X)

        return {
            "name": path.stem,
            "ratio": ratio,
            "input_dim": model.r_pp.input_dim,
            "kind": f"rosmm/{model.variant}",
            "checksum": _rosmm_checksum(model),
        }
    raise DataError(f"{path}: unknown model format {fmt!r}")


# ---------------------------------------------------------------- generate


def cmd_generate(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    opts = _merge_options(
        {"spec": None, "n": None, "seed": 0, "out": None, "format": "csv"},
        file_cfg,
        {"spec": args.spec, "n": args.n, "seed": args.seed, "out": args.out, "format": args.format},
    )
    if opts["spec"] is None or opts["n"] is None or opts["out"] is None:
        raise ConfigError("generate requires --spec, --n and --out")
    n = int(opts["n"])
    if n <= 0:
        raise ConfigError(f"--n must be positive, got {n}")
    if n % 2 != 0:
        raise ConfigError(f"--n must be even (equal per-class counts), got {n}")
    if opts["format"] not in ("csv", "jsonl"):
        raise ConfigError(f"unknown format {opts['format']!r}, expected csv or jsonl")
    seed = int(opts["seed"])

    spec = load_spec(opts["spec"])
    data = sample_mixture(spec, n // 2, seed)
    parts = split_dataset(data, seed=seed)

    out_dir = Path(opts["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = "." + opts["format"]
    files = {}
    sizes = {}
    for name, part in zip(SPLIT_NAMES, parts):
        filename = name + ext
        save_dataset(part, out_dir / filename)
        files[name] = filename
        sizes[name] = len(part)

    cfg = {
        "command": "generate",
        "n": n,
        "seed": seed,
        "format": opts["format"],
        "fractions": [0.65, 0.15, 0.20],
        "spec": spec.to_dict(),
    }
    manifest = {
        "command": "generate",
        "config": cfg,
        "config_hash": config_hash(cfg),
        "files": files,
        "sizes": sizes,
        "spec": spec.to_dict(),
    }
    _write_json(out_dir / "manifest.json", manifest)
    print(
        f"generated {len(data)} samples (d={data.d}) -> {out_dir}: "
        + ", ".join(f"{k}={sizes[k]}" for k in SPLIT_NAMES)
    )
    return 0


# ---------------------------------------------------------------- train


def cmd_train(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    defaults = {
        "seed": 0,
        "learning_rate": None,
        "batch_size": None,
        "patience": None,
        "max_epochs": 500,
        "epoch_cap": 100_000,
        "hidden_dims": None,
        "transform": None,
    }
    flags = {
        "seed": args.seed,
        "learning_rate": args.lr,
        "batch_size": args.batch_size,
        "patience": args.patience,
        "max_epochs": args.max_epochs,
        "hidden_dims": _parse_int_list(args.hidden, "--hidden") if args.hidden else None,
    }
    opts = _merge_options(defaults, file_cfg, flags)
    seed = int(opts["seed"])
    kind = args.model

    transform = RatioTrickTransform()
    if opts["transform"] is not None:
        t = opts["transform"]
        if not isinstance(t, dict):
            raise ConfigError("transform must be an object with a/b/orientation")
        try:
            transform = RatioTrickTransform(
                a=float(t.get("a", 0.0)),
                b=float(t.get("b", 1.0)),
                orientation=int(t.get("orientation", 1)),
            )
        except ValueError as exc:
            raise ConfigError(f"invalid transform: {exc}") from exc

    overrides = {}
    for key in ("learning_rate", "batch_size", "patience"):
        if opts[key] is not None:
            overrides[key] = opts[key]
    cfg = default_train_config(
        kind,
        seed=seed,
        max_epochs=int(opts["max_epochs"]),
        transform=transform,
        epoch_cap=int(opts["epoch_cap"]),
        **overrides,
    )
    hidden = (
        tuple(int(h) for h in opts["hidden_dims"])
        if opts["hidden_dims"] is not None
        else default_hidden_dims(kind)
    )

    data_dir = Path(args.data)
    train_ds = balance_classes(load_dataset(_dataset_path(data_dir, "train")))
    val_ds = balance_classes(load_dataset(_dataset_path(data_dir, "val")))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sub_reports = None

    if kind in ("mlp", "bce-mlp"):
        model = init_mlp(train_ds.d, hidden, seed)
        report = train(model, train_ds, val_ds, cfg)
        model_obj = model_to_dict(model, cfg.loss)
    else:
        variant = normalize_variant(kind)
        if args.subratios:
            pre = rosmm_from_dict(_read_json(args.subratios))
            r_pp, r_pm = pre.r_pp, pre.r_pm
        else:
            r_pp, r_pm, reports = train_subratios(
                train_ds, val_ds, seed=seed, hidden_dims=hidden,
                max_epochs=int(opts["max_epochs"]),
            )
            sub_reports = {name: rep.to_dict() for name, rep in reports.items()}
        rosmm = RosmmModel(r_pp, r_pm, theta_c=initial_theta(train_ds), variant=variant)
        report = fit_rosmm(rosmm, train_ds, val_ds, cfg, variant)
        model_obj = rosmm_to_dict(rosmm)

    run_cfg = {
        "command": "train",
        "model_kind": kind,
        "data_dir": str(data_dir),
        "hidden_dims": list(hidden),
        "train": train_config_to_dict(cfg),
    }
    report_obj = {
        "command": "train",
        "config": run_cfg,
        "config_hash": config_hash(run_cfg),
        "model_file": "model.json",
        "model_kind": kind,
        "report": report.to_dict(),
        "subratio_reports": sub_reports,
    }
    _write_json(out_dir / "model.json", model_obj)
    _write_json(out_dir / "report.json", report_obj)

    if report.diverged:
        print(
            f"qdre: training diverged after epoch {report.epochs_run} "
            f"(non-finite risk); partial outputs in {out_dir}",
            file=sys.stderr,
        )
        return 4
    print(
        f"trained {kind}: epochs={report.epochs_run} "
        f"best_val={report.best_val_loss:.6g} "
        f"clamps={report.clamp_count} checksum={report.final_params_checksum[:12]}"
    )
    return 0


# ---------------------------------------------------------------- evaluate


def _evaluation_entries(args, reference: Dataset, manifest: dict | None) -> list[dict]:
    entries = [
        {
            "name": "reference",
            "ratio": lambda X: np.ones(X.shape[0]),
            "input_dim": None,
            "kind": "baseline",
            "checksum": None,
        }
    ]
    if args.oracle:
        if manifest is None or "spec" not in manifest:
            raise ConfigError(
                "--oracle needs a manifest.json with the generating mixture "
                "spec in the data directory"
            )
        spec = SignedMixtureSpec.from_dict(manifest["spec"])

        def oracle(X, spec=spec):
            return analytic_ratio(spec, X)

        entries.append(
            {"name": "oracle", "ratio": oracle, "input_dim": spec.d, "kind": "oracle", "checksum": None}
        )
    used = {e["name"] for e in entries}
    for path in args.model or []:
        entry = _load_model_file(path)
        base = entry["name"]
        if base == "model" and Path(path).parent.name:
            base = Path(path).parent.name
        name, k = base, 2
        while name in used:
            name = f"{base}-{k}"
            k += 1
        entry["name"] = name
        entry["file"] = str(path)
        used.add(name)
        entries.append(entry)
    for entry in entries:
        if entry["input_dim"] is not None and entry["input_dim"] != reference.d:
            raise DataError(
                f"model {entry['name']} expects d={entry['input_dim']}, "
                f"data has d={reference.d}"
            )
    return entries


def _histogram_rows(name: str, closure) -> list[str]:
    rows = []
    for fc in closure.features:
        for series, hist in (
            ("target", fc.target),
            ("reference", fc.reference),
            ("reweighted", fc.reweighted),
        ):
            for b in range(hist.n_bins):
                rows.append(
                    ",".join(
                        [
                            name,
                            str(fc.feature),
                            series,
                            str(b),
                            repr(float(hist.edges[b])),
                            repr(float(hist.edges[b + 1])),
                            repr(float(hist.sum_w[b])),
                            repr(float(hist.sum_w2[b])),
                        ]
                    )
                )
    return rows


def cmd_evaluate(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    opts = _merge_options(
        {"seed": 0, "n_projections": 50, "n_repeats": 1000, "n_bins": 50, "features": None},
        file_cfg,
        {
            "seed": args.seed,
            "n_projections": args.n_projections,
            "n_repeats": args.n_repeats,
            "n_bins": args.n_bins,
            "features": args.features,
        },
    )
    sw_cfg = SwConfig(
        n_projections=int(opts["n_projections"]),
        n_repeats=int(opts["n_repeats"]),
        seed=int(opts["seed"]),
    )
    features = None
    if opts["features"] is not None:
        features = _parse_int_list(str(opts["features"]), "--features")

    data_dir = Path(args.data)
    test_ds = load_dataset(_dataset_path(data_dir, "test"))
    manifest = _load_manifest(data_dir)
    reference = test_ds.class_subset(0)
    target = test_ds.class_subset(1)
    if len(reference) == 0 or len(target) == 0:
        raise DataError("test split must contain both classes")

    entries = _evaluation_entries(args, reference, manifest)
    rows = []
    hist_lines = ["model,feature,series,bin,lo,hi,sum_w,sum_w2"]
    for entry in entries:
        closure = reweight_closure(
            reference,
            entry["ratio"],
            target,
            features=features,
            n_bins=int(opts["n_bins"]),
            sw_cfg=sw_cfg,
        )
        rows.append(
            {
                "model": entry["name"],
                "kind": entry["kind"],
                "checksum": entry["checksum"],
                "extended_sw1": {"mean": closure.sw[0], "std": closure.sw[1]},
                "features": [
                    {
                        "feature": fc.feature,
                        "chi2": fc.chi2,
                        "tsallis_d2": fc.tsallis,
                        "tsallis_excluded_bins": fc.tsallis_excluded_bins,
                    }
                    for fc in closure.features
                ],
            }
        )
        hist_lines.extend(_histogram_rows(entry["name"], closure))

    run_cfg = {
        "command": "evaluate",
        "data_dir": str(data_dir),
        "models": [str(p) for p in (args.model or [])],
        "oracle": bool(args.oracle),
        "seed": sw_cfg.seed,
        "n_projections": sw_cfg.n_projections,
        "n_repeats": sw_cfg.n_repeats,
        "n_bins": int(opts["n_bins"]),
        "features": list(features) if features is not None else None,
    }
    scores = {
        "command": "evaluate",
        "config": run_cfg,
        "config_hash": config_hash(run_cfg),
        "rows": rows,
    }
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "scores.json", scores)

    flat_lines = ["model,feature,metric,value,std"]
    for row in rows:
        flat_lines.append(
            f"{row['model']},all,extended_sw1,"
            f"{repr(row['extended_sw1']['mean'])},{repr(row['extended_sw1']['std'])}"
        )
        for fc in row["features"]:
            flat_lines.append(f"{row['model']},{fc['feature']},chi2,{repr(fc['chi2'])},")
            flat_lines.append(
                f"{row['model']},{fc['feature']},tsallis_d2,{repr(fc['tsallis_d2'])},"
            )
    (out_dir / "scores.csv").write_text("\n".join(flat_lines) + "\n", encoding="utf-8")
    (out_dir / "histograms.csv").write_text("\n".join(hist_lines) + "\n", encoding="utf-8")

    for row in rows:
        sw = row["extended_sw1"]
        mean_chi2 = float(np.mean([fc["chi2"] for fc in row["features"]]))
        print(
            f"{row['model']:>12}  sw1 = {sw['mean']:.6g} +- {sw['std']:.6g}   "
            f"mean chi2 = {mean_chi2:.6g}"
        )
    return 0


# ---------------------------------------------------------------- reweight


def cmd_reweight(args) -> int:
    in_path = Path(args.input)
    if not in_path.exists():
        raise DataError(f"dataset file not found: {in_path}")
    ds = load_dataset(in_path)
    entry = _load_model_file(args.model)
    if entry["input_dim"] is not None and entry["input_dim"] != ds.d:
        raise DataError(
            f"model expects d={entry['input_dim']}, dataset has d={ds.d}"
        )
    ratios = np.asarray(entry["ratio"](ds.X), dtype=float).ravel()
    bad = ~np.isfinite(ratios)
    if np.any(bad):
        idx = np.nonzero(bad)[0]
        shown = ", ".join(str(i) for i in idx[:10])
        raise NumericsError(
            f"non-finite ratio at {idx.size} row(s), first indices: {shown}"
        )
    out_ds = Dataset(ds.X, ds.w * ratios, ds.y)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(out_ds, out_path)

    run_cfg = {
        "command": "reweight",
        "input": str(args.input),
        "model": str(args.model),
        "out": str(args.out),
    }
    _write_json(
        out_path.with_name(out_path.name + ".manifest.json"),
        {
            "command": "reweight",
            "config": run_cfg,
            "config_hash": config_hash(run_cfg),
            "model_checksum": entry["checksum"],
            "rows_in": len(ds),
            "rows_out": len(out_ds),
            "rows_dropped_zero_weight": out_ds.n_dropped,
        },
    )
    print(f"reweighted {len(ds)} rows -> {out_path} ({out_ds.n_dropped} dropped as zero-weight)")
    return 0


# ---------------------------------------------------------------- compare


def cmd_compare(args) -> int:
    table = []
    for path in args.scores:
        obj = _read_json(path)
        if "rows" not in obj:
            raise DataError(f"{path}: not a scores file (missing 'rows')")
        label = Path(path).parent.name or Path(path).stem
        for row in obj["rows"]:
            chi2s = [fc["chi2"] for fc in row.get("features", [])]
            tsallis = [fc["tsallis_d2"] for fc in row.get("features", [])]
            table.append(
                {
                    "source": label if len(args.scores) > 1 else "",
                    "model": row["model"],
                    "sw_mean": row["extended_sw1"]["mean"],
                    "sw_std": row["extended_sw1"]["std"],
                    "mean_chi2": float(np.mean(chi2s)) if chi2s else float("nan"),
                    "mean_tsallis_d2": float(np.mean(tsallis)) if tsallis else float("nan"),
                }
            )

    name_width = max(len(r["model"]) + len(r["source"]) + 1 for r in table)
    header = f"{'model':<{name_width}}  {'extended SW1':>24}  {'mean chi2':>12}  {'mean D_S2':>12}"
    print(header)
    print("-" * len(header))
    for r in table:
        label = f"{r['source']}/{r['model']}" if r["source"] else r["model"]
        sw = f"{r['sw_mean']:.6g} +- {r['sw_std']:.6g}"
        print(
            f"{label:<{name_width}}  {sw:>24}  {r['mean_chi2']:>12.6g}  {r['mean_tsallis_d2']:>12.6g}"
        )

    if args.out:
        lines = ["source,model,sw_mean,sw_std,mean_chi2,mean_tsallis_d2"]
        for r in table:
            lines.append(
                f"{r['source']},{r['model']},{repr(r['sw_mean'])},{repr(r['sw_std'])},"
                f"{repr(r['mean_chi2'])},{repr(r['mean_tsallis_d2'])}"
            )
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qdre",
        description="Density ratio estimation for signed (quasiprobabilistic) data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a signed Gaussian mixture benchmark")
    p.add_argument("--spec", help="mixture spec JSON file")
    p.add_argument("--n", type=int, help="total sample count (split evenly over classes)")
    p.add_argument("--seed", type=int, help="global seed (default 0)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=("csv", "jsonl"), help="dataset format (default csv)")
    p.add_argument("--config", help="JSON/TOML config file; flags override it")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a density ratio model")
    p.add_argument("--data", required=True, help="directory with train/val files")
    p.add_argument("--model", required=True, choices=MODEL_CHOICES)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="JSON/TOML config file; flags override it")
    p.add_argument("--seed", type=int, help="global seed (default 0)")
    p.add_argument("--lr", type=float, help="learning rate override")
    p.add_argument("--batch-size", type=int, help="batch size override")
    p.add_argument("--patience", type=int, help="early-stopping patience override")
    p.add_argument("--max-epochs", type=int, help="epoch limit (default 500)")
    p.add_argument("--hidden", help="hidden layer widths, e.g. 64,64")
    p.add_argument("--subratios", help="reuse sub-ratio networks from a rosmm model file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score models on the test split")
    p.add_argument("--data", required=True, help="directory with the test file")
    p.add_argument("--model", action="append", help="model file (repeatable)")
    p.add_argument("--oracle", action="store_true", help="include the analytic-ratio row")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="JSON/TOML config file; flags override it")
    p.add_argument("--seed", type=int, help="seed for projections (default 0)")
    p.add_argument("--n-projections", type=int, help="projections per repeat (default 50)")
    p.add_argument("--n-repeats", type=int, help="repeats for mean/std (default 1000)")
    p.add_argument("--n-bins", type=int, help="histogram bins (default 50)")
    p.add_argument("--features", help="feature indices, e.g. 0,2 (default all)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("reweight", help="multiply dataset weights by a model's ratio")
    p.add_argument("--input", required=True, help="dataset file (csv or jsonl)")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--out", required=True, help="output dataset file")
    p.set_defaults(func=cmd_reweight)

    p = sub.add_parser("compare", help="tabulate one or more scores.json files")
    p.add_argument("scores", nargs="+", help="scores.json files from evaluate")
    p.add_argument("--out", help="write the merged table as CSV")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"qdre: config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"qdre: data error: {exc}", file=sys.stderr)
        return 3
    except NumericsError as exc:
        print(f"qdre: numerical failure: {exc}", file=sys.stderr)
        return 4


def cli_entry() -> None:
    sys.exit(main())
