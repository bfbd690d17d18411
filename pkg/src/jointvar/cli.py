"""Command-line interface: simulate, fit, benchmark, report.

Option precedence is flags > config file (JSON) > defaults; the effective
configuration is echoed into each run summary. Exit codes: 0 success, 2
validation/usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import (
    METRIC_FIELDS,
    ROW_FIELDS,
    WORKERS_ENV,
    BenchmarkConfig,
    default_workers,
    run_benchmark,
    summarize,
)
from .bundle import (
    DatasetBundle,
    read_bundle,
    write_bundle,
    write_matrix_csv,
)
from .methods import CV_SCHEMES, JOINT_METHODS, METHODS, FitOptions, fit_method
from .simulator import (
    CONDITIONS,
    HeterogeneitySpec,
    generate_common_unique,
    generate_dataset,
)
from .solver import SolverConfig

FIT_DEFAULTS = {
    "method": "multivar-adaptive-lasso",
    "cv": "bcv",
    "folds": 10,
    "grid_n1": 10,
    "grid_n2": 10,
    "ratio": 0.01,
    "alpha": 1.0,
    "signif_level": 0.05,
    "window": None,
    "p": 1,
    "standardize": False,
    "figures": False,
}

SIM_DEFAULTS = {
    "condition": None,
    "pi_p": None,
    "pi_i": None,
    "common": None,
    "unique": None,
    "d": 10,
    "k": 15,
    "t": 100,
    "lb": 0.1,
    "ub": 0.9,
    "seed": 0,
    "stability_target": 0.95,
}

BENCH_DEFAULTS = {
    "conditions": "no",
    "t": "100",
    "methods": "multivar-adaptive-lasso",
    "reps": 20,
    "seed": 0,
    "d": 10,
    "k": 15,
}


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: config file must hold a JSON object")
    return cfg


def _effective(args: argparse.Namespace, config: dict, defaults: dict) -> dict:
    """flags > config file > defaults."""
    out = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in config:
            out[key] = config[key]
        else:
            out[key] = default
    return out


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(eval_fraction(x)) for x in str(text).split(",") if x.strip())
    except ValueError as exc:
        raise ValueError(f"cannot parse proportion list {text!r}: {exc}") from None


def eval_fraction(text: str) -> float:
    """Accept '0.2' or '1/5' in proportion lists."""
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _write_rows_csv(path, rows: list[dict], fields: tuple[str, ...]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for r in rows:
            writer.writerow(
                [repr(r[f]) if isinstance(r[f], float) else r[f] for f in fields]
            )


def _read_rows_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        needed = set(ROW_FIELDS)
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            missing = sorted(needed - set(reader.fieldnames or []))
            raise ValueError(f"{path}: metrics CSV is missing columns {missing}")
        for raw in reader:
            row = {
                "condition": raw["condition"],
                "t": int(raw["t"]),
                "method": raw["method"],
                "replication": int(raw["replication"]),
            }
            for metric in METRIC_FIELDS:
                row[metric] = float(raw[metric])
            rows.append(row)
    return rows


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    eff = _effective(args, config, SIM_DEFAULTS)
    out_dir = Path(args.out or config.get("out") or "dataset")

    uses_props = eff["common"] is not None or eff["unique"] is not None
    uses_pis = eff["pi_p"] is not None or eff["pi_i"] is not None
    if sum([eff["condition"] is not None, uses_props, uses_pis]) != 1:
        raise ValueError(
            "specify exactly one of --condition, --pi-p/--pi-i, or --common/--unique"
        )

    if uses_props:
        com = float(eff["common"] or 0.0)
        ind = float(eff["unique"] or 0.0)
        dataset = generate_common_unique(
            k=int(eff["k"]), d=int(eff["d"]), t_len=int(eff["t"]),
            prop_fill_com=com, prop_fill_ind=ind,
            lb=float(eff["lb"]), ub=float(eff["ub"]), seed=int(eff["seed"]),
            stability_target=float(eff["stability_target"]),
        )
        generator = {"common": com, "unique": ind}
    else:
        if eff["condition"] is not None:
            spec = HeterogeneitySpec.from_condition(
                str(eff["condition"]), d=int(eff["d"]), k=int(eff["k"]),
                value_lb=float(eff["lb"]), value_ub=float(eff["ub"]),
                stability_target=float(eff["stability_target"]),
            )
            generator = {"condition": eff["condition"]}
        else:
            if eff["pi_p"] is None or eff["pi_i"] is None:
                raise ValueError("--pi-p and --pi-i must be given together")
            spec = HeterogeneitySpec(
                pi_p=_float_list(eff["pi_p"]), pi_i=_float_list(eff["pi_i"]),
                d=int(eff["d"]), k=int(eff["k"]),
                value_lb=float(eff["lb"]), value_ub=float(eff["ub"]),
                stability_target=float(eff["stability_target"]),
            )
            generator = {"pi_p": list(spec.pi_p), "pi_i": list(spec.pi_i)}
        dataset = generate_dataset(spec, int(eff["t"]), seed=int(eff["seed"]))

    generator.update({k: eff[k] for k in ("d", "k", "t", "lb", "ub", "seed")})
    write_bundle(
        out_dir, dataset.series, truth=dataset, extra_manifest={"generator": generator}
    )
    print(f"wrote bundle with {dataset.series.k} subjects to {out_dir}")
    return 0


def _fit_options(eff: dict) -> FitOptions:
    return FitOptions(
        folds=int(eff["folds"]),
        cv=str(eff["cv"]),
        grid_n1=int(eff["grid_n1"]),
        grid_n2=int(eff["grid_n2"]),
        ratio=float(eff["ratio"]),
        alpha=float(eff["alpha"]),
        signif_level=float(eff["signif_level"]),
        window=int(eff["window"]) if eff["window"] is not None else None,
        solver=SolverConfig(),
    )


def cmd_fit(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    eff = _effective(args, config, FIT_DEFAULTS)
    out_dir = Path(args.out or config.get("out") or "fit")
    out_dir.mkdir(parents=True, exist_ok=True)

    bundle: DatasetBundle = read_bundle(args.bundle)
    series = bundle.series
    scale_record = None
    if eff["standardize"]:
        from .var_core import MultiSubjectSeries, SubjectSeries

        scaled = []
        scale_record = {}
        for subj in series:
            sd = subj.data.std(axis=1, ddof=0)
            sd = np.where(sd > 0, sd, 1.0)
            scale_record[subj.subject_id] = [float(v) for v in sd]
            scaled.append(
                SubjectSeries(subj.data / sd[:, None], subject_id=subj.subject_id)
            )
        series = MultiSubjectSeries(tuple(scaled))

    t0 = time.perf_counter()
    result = fit_method(series, p=int(eff["p"]), method=str(eff["method"]),
                        opts=_fit_options(eff))
    elapsed = time.perf_counter() - t0

    ids = [s.subject_id for s in series]
    for k, sid in enumerate(ids):
        write_matrix_csv(out_dir / f"{sid}_total.csv", result.totals[k], bundle.variables)
    if result.common is not None:
        write_matrix_csv(out_dir / "common.csv", result.common, bundle.variables)
        for k, sid in enumerate(ids):
            write_matrix_csv(
                out_dir / f"{sid}_unique.csv", result.unique[k], bundle.variables
            )
    if result.cv_table is not None:
        result.cv_table.to_csv(out_dir / "cv_table.csv")
    if result.subject_cv is not None:
        for entry in result.subject_cv:
            rows = [
                {"lambda_index": i, "msfe": float(v)}
                for i, v in enumerate(entry["msfe"])
            ]
            _write_rows_csv(
                out_dir / f"cv_table_{entry['subject']}.csv",
                rows,
                ("lambda_index", "msfe"),
            )

    summary = {
        "method": result.method,
        "config": {k: eff[k] for k in sorted(eff)},
        "selection": _jsonable(result.selection),
        "subjects": ids,
        "centering": {sid: [float(v) for v in result.means[k]] for k, sid in enumerate(ids)}
        if result.means is not None
        else "none",
        "standardize": scale_record or False,
        "seconds": elapsed,
    }
    with open(out_dir / "run_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if eff["figures"]:
        from .plots import heatmap

        if result.common is not None:
            heatmap(result.common, "common effects", out_dir / "common.pdf",
                    bundle.variables)
        for k, sid in enumerate(ids):
            heatmap(result.totals[k], f"total effects ({sid})",
                    out_dir / f"{sid}_total.pdf", bundle.variables)

    n_files = len(ids) + (1 if result.common is not None else 0)
    print(f"wrote {n_files} transition matrices to {out_dir}")
    return 0


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def cmd_benchmark(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    eff = _effective(args, config, {**BENCH_DEFAULTS, **FIT_DEFAULTS})
    out_dir = Path(args.out or config.get("out") or "benchmark")
    out_dir.mkdir(parents=True, exist_ok=True)

    conditions = tuple(x.strip() for x in str(eff["conditions"]).split(",") if x.strip())
    t_values = tuple(int(x) for x in str(eff["t"]).split(",") if x.strip())
    methods = tuple(x.strip() for x in str(eff["methods"]).split(",") if x.strip())
    workers = args.workers if args.workers is not None else (
        config.get("workers") or default_workers()
    )

    bench = BenchmarkConfig(
        conditions=conditions,
        t_values=t_values,
        methods=methods,
        replications=int(eff["reps"]),
        seed=int(eff["seed"]),
        d=int(eff["d"]),
        k=int(eff["k"]),
        options=_fit_options(eff),
        workers=int(workers),
    )
    rows, failures = run_benchmark(bench)
    _write_rows_csv(out_dir / "metrics.csv", rows, ROW_FIELDS)
    summary = summarize(rows, failures)
    sfields = ("condition", "t", "method", "n", "n_failed") + tuple(
        f"mean_{m}" for m in METRIC_FIELDS
    )
    _write_rows_csv(out_dir / "summary.csv", summary, sfields)
    if failures:
        _write_rows_csv(
            out_dir / "failures.csv",
            failures,
            ("condition", "t", "method", "replication", "reason"),
        )
    with open(out_dir / "run_summary.json", "w") as fh:
        json.dump(
            {
                "config": {k: _jsonable(eff[k]) for k in sorted(eff)},
                "workers": int(workers),
                "rows": len(rows),
                "failures": len(failures),
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    print(
        f"benchmark finished: {len(rows)} rows, {len(failures)} failures, "
        f"results in {out_dir}"
    )
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    out_dir = Path(args.out or "report")
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    for path in args.metrics:
        rows.extend(_read_rows_csv(path))
    if not rows:
        raise ValueError("no metric rows found in the given files")

    cells: dict[tuple, list[dict]] = {}
    for r in rows:
        cells.setdefault((r["condition"], r["t"], r["method"]), []).append(r)
    summary = []
    for key in sorted(cells):
        members = cells[key]
        row = {"condition": key[0], "t": key[1], "method": key[2], "n": len(members)}
        for metric in METRIC_FIELDS:
            vals = np.array([m[metric] for m in members], dtype=float)
            row[f"mean_{metric}"] = float(vals.mean())
            row[f"q25_{metric}"] = float(np.quantile(vals, 0.25))
            row[f"median_{metric}"] = float(np.quantile(vals, 0.5))
            row[f"q75_{metric}"] = float(np.quantile(vals, 0.75))
        summary.append(row)
    fields = ["condition", "t", "method", "n"]
    for metric in METRIC_FIELDS:
        fields += [f"mean_{metric}", f"q25_{metric}", f"median_{metric}", f"q75_{metric}"]
    _write_rows_csv(out_dir / "summary.csv", summary, tuple(fields))

    if args.figures:
        from .plots import summary_panels

        for metric in METRIC_FIELDS:
            summary_panels(summary, metric, out_dir / f"{metric}.pdf")
    print(f"report written to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jointvar",
        description="Joint estimation of sparse VAR models across subjects.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a multi-subject dataset bundle")
    sim.add_argument("--condition", choices=sorted(CONDITIONS))
    sim.add_argument("--pi-p", dest="pi_p", help="comma list of path proportions")
    sim.add_argument("--pi-i", dest="pi_i", help="comma list of subject proportions")
    sim.add_argument("--common", type=float, help="shared-path proportion")
    sim.add_argument("--unique", type=float, help="per-subject unique-path proportion")
    sim.add_argument("--d", type=int)
    sim.add_argument("--k", type=int)
    sim.add_argument("--t", type=int)
    sim.add_argument("--lb", type=float)
    sim.add_argument("--ub", type=float)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out")
    sim.add_argument("--config")
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="fit a model to a dataset bundle")
    fit.add_argument("bundle", help="bundle directory")
    fit.add_argument("--method", choices=METHODS)
    fit.add_argument("--cv", choices=CV_SCHEMES)
    fit.add_argument("--folds", type=int)
    fit.add_argument("--grid-n1", dest="grid_n1", type=int)
    fit.add_argument("--grid-n2", dest="grid_n2", type=int)
    fit.add_argument("--ratio", type=float)
    fit.add_argument("--alpha", type=float, help="adaptive weight exponent")
    fit.add_argument("--signif-level", dest="signif_level", type=float)
    fit.add_argument("--window", type=int, help="rolling-window length (rwcv)")
    fit.add_argument("--p", type=int, help="lag order")
    fit.add_argument("--standardize", action="store_const", const=True, default=None)
    fit.add_argument("--figures", action="store_const", const=True, default=None)
    fit.add_argument("--out")
    fit.add_argument("--config")
    fit.set_defaults(func=cmd_fit)

    bench = sub.add_parser("benchmark", help="Monte Carlo simulate-fit-score runs")
    bench.add_argument("--conditions", help="comma list from {no,low,high}")
    bench.add_argument("--t", help="comma list of series lengths")
    bench.add_argument("--methods", help="comma list of methods")
    bench.add_argument("--reps", type=int)
    bench.add_argument("--seed", type=int)
    bench.add_argument("--d", type=int)
    bench.add_argument("--k", type=int)
    bench.add_argument("--cv", choices=CV_SCHEMES)
    bench.add_argument("--folds", type=int)
    bench.add_argument("--grid-n1", dest="grid_n1", type=int)
    bench.add_argument("--grid-n2", dest="grid_n2", type=int)
    bench.add_argument("--ratio", type=float)
    bench.add_argument("--alpha", type=float)
    bench.add_argument("--signif-level", dest="signif_level", type=float)
    bench.add_argument("--window", type=int)
    bench.add_argument(
        "--workers", type=int, help=f"parallel workers (default ${WORKERS_ENV} or 1)"
    )
    bench.add_argument("--out")
    bench.add_argument("--config")
    bench.set_defaults(func=cmd_benchmark)

    rep = sub.add_parser("report", help="aggregate benchmark metrics CSVs")
    rep.add_argument("metrics", nargs="+", help="metrics CSV files")
    rep.add_argument("--figures", action="store_true")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
