"""Command-line interface.

Settings resolve as defaults < ``--config`` JSON file < command-line flags.
The effective settings and seed are written into every output file.
Exit codes: 0 success, 1 runtime failure, 2 input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .adjust import (
    TrainConfig,
    TrainingError,
    default_rho_grid,
    grid_search_rho,
    joint_train,
    naive_mpw_train,
)
from .bench import (
    DEFAULT_SLICE,
    BenchError,
    DgpConfig,
    ExperimentGrid,
    RegressionTraining,
    curve_csv,
    read_records,
    run_forecast_experiment,
    run_regression_grid,
    summarize,
)
from .classical import RankDeficientError, cochrane_orcutt, ols_fit, prais_winsten
from .models import ModelError, ModelSpec
from .series import SeriesError, SeriesFrame, SplitSpec, load_csv, save_csv, split_chronological
from .stats import (
    DEFAULT_CRITICAL_VALUES,
    CriticalValueTable,
    StatsError,
    UndefinedStatisticError,
    diagnose_residuals,
    empirical_critical_values,
    simulate_ar1,
)

logger = logging.getLogger("autocorrnet")

OUT_ENV = "AUTOCORRNET_OUT"
EXIT_OK, EXIT_RUNTIME, EXIT_INPUT = 0, 1, 2

TRAIN_DEFAULTS = {
    "seed": 0,
    "mode": "both",
    "freeze_rho": None,
    "rho_dim": "auto",
    "window": 60,
    "epochs": 750,
    "patience": 25,
    "batch": 64,
    "lr_model": 3e-3,
    "lr_rho": 1e-2,
    "model": "window_forecaster",
    "hidden": 64,
    "layers": None,
    "split": [0.6, 0.2, 0.2],
    "no_header": False,
    "timing": False,
}


class InputError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="root seed (default 0)")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./autocorrnet_out)")
    p.add_argument("--config", help="JSON file of settings; flags given on the command line take precedence")
    p.add_argument("--timing", action="store_true", default=None,
                   help="include wall-clock times in outputs (makes them non-reproducible)")


def _add_training(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--mode", choices=["none", "input", "output", "both"],
                   help="which sides of the window/target are quasi-differenced (default both)")
    g.add_argument("--freeze-rho", type=float, help="hold rho fixed at this value in [-1, 1] instead of learning it")
    g.add_argument("--rho-dim", choices=["auto", "scalar", "vector"],
                   help="rho shape: one shared value, one per series, or auto (per series when N >= 300)")
    g.add_argument("--window", type=int, help="input window length W (default 60)")
    g.add_argument("--epochs", type=int, help="maximum epochs (default 750)")
    g.add_argument("--patience", type=int, help="early-stopping patience in epochs (default 25)")
    g.add_argument("--batch", type=int, help="mini-batch size (default 64)")
    g.add_argument("--lr-model", type=float, help="Adam learning rate for model weights (default 3e-3)")
    g.add_argument("--lr-rho", type=float, help="Adam learning rate for rho (default 1e-2)")
    g.add_argument("--model", choices=["linear", "mlp_regressor", "window_forecaster"],
                   help="model kind over the flattened window (default window_forecaster)")
    g.add_argument("--hidden", type=int, help="hidden width (default 64)")
    g.add_argument("--layers", type=int, help="number of layers (default depends on --model)")
    g.add_argument("--split", type=_floats, help="train,valid,test fractions (default 0.6,0.2,0.2)")
    g.add_argument("--no-header", action="store_true", default=None, help="the CSV has no header row")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="autocorrnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("fit", help="train a window forecaster on a CSV and write a fit report")
    p.add_argument("csv", help="input CSV, one time step per row")
    p.add_argument("--method", choices=["joint", "mpw"], help="joint rho learning (default) or the alternating baseline")
    p.add_argument("--max-outer-iters", type=int, help="outer iterations for --method mpw (default 10)")
    _add_common(p)
    _add_training(p)

    p = sub.add_parser("diagnose", help="residual autocorrelation and Durbin-Watson with an adjustment verdict")
    p.add_argument("csv", help="residual CSV, one column per series")
    p.add_argument("--criticals", help="critical value JSON from `criticals` (default: built-in table)")
    p.add_argument("--no-header", action="store_true", default=None, help="the CSV has no header row")
    _add_common(p)

    p = sub.add_parser("gridsearch-rho", help="train with rho frozen at each grid value; report validation RRMSE")
    p.add_argument("csv", help="input CSV")
    p.add_argument("--grid", type=_floats, help="comma-separated rho values in [-1, 1] (default: 15-point grid)")
    _add_common(p)
    _add_training(p)

    p = sub.add_parser("simulate", help="write stationary AR(1) series to CSV")
    p.add_argument("--rho", type=float, help="autocorrelation coefficient, |rho| < 1 (default 0.5)")
    p.add_argument("--sigma", type=float, help="innovation standard deviation (default 1)")
    p.add_argument("--T", type=int, help="length (default 1000)")
    p.add_argument("--N", type=int, help="number of independent series (default 1)")
    p.add_argument("--output", help="file name inside --out (default simulated.csv)")
    _add_common(p)

    p = sub.add_parser("bench-regression", help="synthetic regression benchmark comparing wo / mpw / w")
    p.add_argument("--T", type=_ints, help="comma-separated sample sizes (default 400)")
    p.add_argument("--N", type=_ints, help="comma-separated input dimensions (default 6)")
    p.add_argument("--rho", type=_floats, help="comma-separated true rho values (default -0.75,-0.3,0,0.3,0.75,0.9)")
    p.add_argument("--sigma", type=_floats, help="comma-separated innovation std values (default 0.02)")
    p.add_argument("--seeds", type=int, help="seeds per cell (default 30)")
    p.add_argument("--methods", help="comma-separated subset of wo,mpw,w (default wo,w)")
    p.add_argument("--epochs", type=int, help="training epochs per run (default 750)")
    p.add_argument("--full-grid", action="store_true", default=None,
                   help="run the full 5x5x13x5 grid with 30 seeds per cell (very long)")
    p.add_argument("--workers", type=int, help="parallel worker processes (default 1)")
    _add_common(p)

    p = sub.add_parser("bench-forecast", help="seed-paired forecasting runs on a CSV")
    p.add_argument("csv", help="input CSV")
    p.add_argument("--methods", help="comma-separated subset of wo,mpw,w (default wo,w)")
    p.add_argument("--seeds", type=int, help="number of seeds (default 5)")
    p.add_argument("--workers", type=int, help="accepted for symmetry; forecasting runs are sequential")
    _add_common(p)
    _add_training(p)

    p = sub.add_parser("criticals", help="empirical critical values of remaining autocorrelation")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--from", dest="from_", metavar="RUNS", help="run records (JSON lines); uses the wo runs")
    src.add_argument("--values", help="CSV whose first column holds remaining-autocorrelation values")
    p.add_argument("--tails", type=_floats, help="tail probabilities (default 0.10,0.05,0.01)")
    _add_common(p)

    p = sub.add_parser("classical-fit", help="OLS, Cochrane-Orcutt or Prais-Winsten on a CSV")
    p.add_argument("csv", help="input CSV; one column is the response, the rest are regressors")
    p.add_argument("--y", help="response column name (default: last column)")
    p.add_argument("--method", choices=["ols", "co", "co-single", "pw"], help="estimator (default co)")
    p.add_argument("--intercept", action="store_true", default=None, help="add an intercept column")
    p.add_argument("--tol", type=float, help="convergence tolerance on rho (default 1e-6)")
    p.add_argument("--max-iters", type=int, help="iteration cap (default 50)")
    p.add_argument("--no-header", action="store_true", default=None, help="the CSV has no header row")
    _add_common(p)
    return parser


def _settings(args, defaults: dict) -> dict:
    """Merge defaults, config file and explicit flags."""
    eff = dict(defaults)
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise InputError("config file must hold a JSON object")
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        eff.update(loaded)
    for key in defaults:
        attr = "from_" if key == "from" else key
        v = getattr(args, attr, None)
        if v is not None:
            eff[key] = v
    return eff


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "autocorrnet_out")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise InputError(f"output directory {out} is not writable")
    return out


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _header(command: str, eff: dict) -> dict:
    return {"command": command, "version": __version__, "settings": eff, "seed": eff.get("seed")}


def _train_config(eff: dict) -> TrainConfig:
    return TrainConfig(epochs=eff["epochs"], early_stop_patience=min(eff["patience"], eff["epochs"]),
                       batch_size=eff["batch"], W=eff["window"], lr_model=eff["lr_model"], lr_rho=eff["lr_rho"],
                       seed=eff["seed"], mode=eff["mode"], rho_dim=eff["rho_dim"], freeze_rho=eff["freeze_rho"])


def _model_spec(eff: dict, N: int) -> ModelSpec:
    layers = eff["layers"]
    if eff["model"] == "linear":
        layers = 1
    return ModelSpec(eff["model"], eff["window"] * N, N, hidden_dim=eff["hidden"], n_layers=layers)


def _load_frame(path: str, eff: dict) -> SeriesFrame:
    try:
        return load_csv(path, has_header=not eff.get("no_header"))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _splits(frame: SeriesFrame, eff: dict):
    fr = eff["split"]
    if len(fr) != 3:
        raise InputError("--split needs three fractions")
    return split_chronological(frame, SplitSpec(*fr), window=eff["window"])


def _comment(eff_header: dict) -> str:
    return json.dumps(eff_header, sort_keys=True, separators=(",", ":"))


def _write_curve(path: Path, curve, header: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + _comment(header) + "\n")
        fh.write("epoch,loss\n")
        for i, v in enumerate(curve, start=1):
            fh.write(f"{i},{v!r}\n")


def cmd_fit(args) -> int:
    eff = _settings(args, {**TRAIN_DEFAULTS, "method": "joint", "max_outer_iters": 10})
    frame = _load_frame(args.csv, eff)
    train, valid, test = _splits(frame, eff)
    cfg = _train_config(eff)
    spec = _model_spec(eff, frame.N)
    if eff["method"] == "mpw":
        report = naive_mpw_train(train, valid, spec, cfg, eff["max_outer_iters"], test=test)
    else:
        report = joint_train(train, valid, test, spec, cfg)
    out = _out_dir(args)
    header = _header("fit", eff)
    report.extra["run"] = header
    report.extra["series_names"] = list(frame.names)
    report.save(out / "fit_report.json", include_timing=bool(eff.get("timing")))
    _write_json(out / "checkpoint.json", {**report.checkpoint, "run": header})
    _write_curve(out / "train_loss.csv", report.train_loss, header)
    _write_curve(out / "valid_loss.csv", report.valid_loss, header)
    save_csv(SeriesFrame.from_array(report.residuals, list(frame.names)), out / "residuals.csv",
             comment=_comment(header))
    rac = report.mean_remaining_autocorrelation
    print(f"method={report.method} mode={report.mode} rho={_fmt_list(report.rho)}")
    print(f"test RRMSE {report.test_rrmse:.6f}  remaining autocorrelation "
          f"{'undefined' if rac is None else f'{rac:.4f}'}  best epoch {report.best_epoch}/{report.epochs_run}")
    print(f"wrote {out / 'fit_report.json'}")
    return EXIT_OK


def _fmt_list(values, limit: int = 6) -> str:
    shown = ", ".join(f"{v:.4f}" for v in values[:limit])
    return f"[{shown}{', ...' if len(values) > limit else ''}]"


def verdict_text(value: float, table: CriticalValueTable) -> str:
    hits = [tail for tail, flagged in table.verdict(value).items() if flagged]
    if not hits:
        return "no adjustment indicated"
    tail = min(hits)
    return f"adjust recommended at {round((1 - tail) * 100):d}%"


def cmd_diagnose(args) -> int:
    eff = _settings(args, {"seed": None, "criticals": None, "no_header": False})
    frame = _load_frame(args.csv, eff)
    table = DEFAULT_CRITICAL_VALUES
    if eff["criticals"]:
        try:
            with open(eff["criticals"], encoding="utf-8") as fh:
                d = json.load(fh)
            table = CriticalValueTable.from_dict(d.get("critical_values", d))
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise InputError(f"cannot read critical values from {eff['criticals']}: {exc}") from exc
    if frame.T < 2:
        raise InputError("need at least two residuals")
    diag = diagnose_residuals(frame.values)
    for name, r, dw in zip(frame.names, diag.per_series, diag.durbin_watson):
        r_s = "undefined" if r is None else f"{r:.6f}"
        dw_s = "undefined" if dw is None else f"{dw:.6f}"
        print(f"{name}: residual autocorrelation {r_s}  Durbin-Watson {dw_s}")
    result = {**_header("diagnose", eff), **diag.to_dict(), "critical_values": table.to_dict()}
    if diag.mean is None:
        print("averaged residual autocorrelation: undefined (every series has zero residual energy)")
        result["verdict"] = "undefined statistic"
    else:
        verdict = verdict_text(diag.mean, table)
        print(f"averaged residual autocorrelation {diag.mean:.6f}")
        print(f"verdict: {verdict}")
        result["verdict"] = verdict
    if args.out or os.environ.get(OUT_ENV):
        out = _out_dir(args)
        _write_json(out / "diagnose.json", result)
    return EXIT_OK


def cmd_gridsearch(args) -> int:
    eff = _settings(args, {**TRAIN_DEFAULTS, "grid": None})
    frame = _load_frame(args.csv, eff)
    train, valid, _ = _splits(frame, eff)
    grid = eff["grid"] if eff["grid"] is not None else default_rho_grid()
    eff["grid"] = grid
    best, table = grid_search_rho(train, valid, _model_spec(eff, frame.N), _train_config(eff), grid)
    out = _out_dir(args)
    header = _header("gridsearch-rho", eff)
    _write_json(out / "gridsearch.json", {**header, "best_rho": best, "table": table})
    with open(out / "gridsearch.csv", "w", encoding="utf-8") as fh:
        fh.write("# " + _comment(header) + "\n")
        fh.write("rho,valid_rrmse\n")
        for row in table:
            fh.write(f"{row['rho']!r},{row['valid_rrmse']!r}\n")
    for row in table:
        print(f"rho {row['rho']:+.2f}  valid RRMSE {row['valid_rrmse']:.6f}")
    print(f"best rho {best:+.2f} over {len(grid)} grid points")
    return EXIT_OK


def cmd_simulate(args) -> int:
    eff = _settings(args, {"seed": 0, "rho": 0.5, "sigma": 1.0, "T": 1000, "N": 1, "output": "simulated.csv"})
    if eff["N"] < 1:
        raise InputError("--N must be positive")
    rng = np.random.default_rng(eff["seed"])
    cols = [simulate_ar1(eff["rho"], eff["sigma"], eff["T"], rng) for _ in range(eff["N"])]
    frame = SeriesFrame.from_array(np.column_stack(cols), [f"e{i}" for i in range(eff["N"])])
    out = _out_dir(args)
    path = out / eff["output"]
    save_csv(frame, path, comment=_comment(_header("simulate", eff)))
    print(f"wrote {frame.T} x {frame.N} AR(1) sample to {path}")
    return EXIT_OK


def cmd_bench_regression(args) -> int:
    eff = _settings(args, {"seed": 0, "T": list(DEFAULT_SLICE.T_set), "N": list(DEFAULT_SLICE.N_set),
                           "rho": list(DEFAULT_SLICE.rho_set), "sigma": list(DEFAULT_SLICE.sigma_set),
                           "seeds": DEFAULT_SLICE.seeds_per_cell, "methods": "wo,w", "epochs": 750,
                           "full_grid": False, "workers": 1, "timing": False})
    if eff["full_grid"]:
        grid = ExperimentGrid()
        eff.update(T=list(grid.T_set), N=list(grid.N_set), rho=list(grid.rho_set),
                   sigma=list(grid.sigma_set), seeds=grid.seeds_per_cell)
    grid = ExperimentGrid(tuple(eff["T"]), tuple(eff["N"]), tuple(eff["rho"]), tuple(eff["sigma"]), eff["seeds"])
    training = RegressionTraining(epochs=eff["epochs"])
    methods = [m.strip() for m in eff["methods"].split(",") if m.strip()]
    records = run_regression_grid(grid, methods, training, eff["seed"], eff["workers"])
    summary = summarize(records)
    out = _out_dir(args)
    header = _header("bench-regression", eff)
    _write_records_with_header(out / "runs.jsonl", records, header, eff["timing"])
    _write_json(out / "summary.json", {**header, **summary})
    with open(out / "abs_rho_err.csv", "w", encoding="utf-8") as fh:
        fh.write("# " + _comment(header) + "\n" + curve_csv(summary))
    _print_summary(summary)
    return EXIT_OK


def _write_records_with_header(path: Path, records, header: dict, timing: bool) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"header": header}, sort_keys=True, separators=(",", ":")) + "\n")
        for r in records:
            fh.write(r.to_json(include_timing=timing) + "\n")


def _print_summary(summary: dict) -> None:
    for cell in summary["cells"]:
        c = cell["cell"]
        desc = " ".join(f"{k}={c[k]}" for k in ("T", "N", "rho", "sigma", "W") if k in c)
        parts = []
        for m, st in cell["methods"].items():
            val = st["mean_rrmse"] if st["mean_rrmse"] is not None else st["mean_test_mse"]
            parts.append(f"{m}={val:.6g}" if val is not None else f"{m}=n/a")
        line = f"{desc}: " + " ".join(parts)
        if "paired_t_test" in cell and "p_value" in cell["paired_t_test"]:
            line += f"  improvement {cell['avg_relative_improvement']:.2f}%  p={cell['paired_t_test']['p_value']:.3g}"
        print(line)


def cmd_bench_forecast(args) -> int:
    eff = _settings(args, {**TRAIN_DEFAULTS, "methods": "wo,w", "seeds": 5, "workers": 1, "timing": False})
    frame = _load_frame(args.csv, eff)
    methods = [m.strip() for m in eff["methods"].split(",") if m.strip()]
    records = run_forecast_experiment(frame, _model_spec(eff, frame.N), _train_config(eff), methods,
                                      [eff["seed"] + i for i in range(eff["seeds"])], SplitSpec(*eff["split"]))
    summary = summarize(records)
    out = _out_dir(args)
    header = _header("bench-forecast", eff)
    _write_records_with_header(out / "runs.jsonl", records, header, eff["timing"])
    _write_json(out / "summary.json", {**header, **summary})
    _print_summary(summary)
    return EXIT_OK


def _first_column(path: str) -> list[float]:
    try:
        frame = load_csv(path)
    except SeriesError:
        frame = load_csv(path, has_header=False)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return frame.values[:, 0].tolist()


def cmd_criticals(args) -> int:
    eff = _settings(args, {"seed": None, "from": None, "values": None, "tails": [0.10, 0.05, 0.01]})
    if eff["from"]:
        try:
            records = read_records(eff["from"])
        except OSError as exc:
            raise InputError(f"cannot read {eff['from']}: {exc}") from exc
        values = [r.remaining_autocorrelation for r in records
                  if r.method == "wo" and not r.diverged and r.remaining_autocorrelation is not None]
    elif eff["values"]:
        values = _first_column(eff["values"])
    else:
        table = DEFAULT_CRITICAL_VALUES
        print(table.to_json())
        return EXIT_OK
    table = empirical_critical_values(values, tuple(eff["tails"]))
    out = _out_dir(args)
    _write_json(out / "criticals.json", {**_header("criticals", eff), "critical_values": table.to_dict()})
    for tail, thr in sorted(table.thresholds.items(), reverse=True):
        print(f"tail {tail:g}: {thr!r}")
    return EXIT_OK


def cmd_classical(args) -> int:
    eff = _settings(args, {"seed": None, "y": None, "method": "co", "intercept": False, "tol": 1e-6,
                           "max_iters": 50, "no_header": False})
    frame = _load_frame(args.csv, eff)
    if frame.N < 2:
        raise InputError("need a response column and at least one regressor")
    yname = eff["y"] or frame.names[-1]
    if yname not in frame.names:
        raise InputError(f"no column named {yname!r}")
    j = frame.names.index(yname)
    y = frame.values[:, j]
    xcols = [i for i in range(frame.N) if i != j]
    X = frame.values[:, xcols]
    names = (["const"] if eff["intercept"] else []) + [frame.names[i] for i in xcols]
    m = eff["method"]
    if m == "ols":
        fit = ols_fit(X, y, eff["intercept"])
    elif m == "pw":
        fit = prais_winsten(X, y, eff["tol"], eff["max_iters"], eff["intercept"])
    else:
        fit = cochrane_orcutt(X, y, iterate=(m == "co"), tol=eff["tol"], max_iters=eff["max_iters"],
                              intercept=eff["intercept"])
    fit = replace(fit, names=tuple(names))
    print(fit)
    if not fit.converged:
        print("warning: rho iteration did not converge", file=sys.stderr)
    out = _out_dir(args)
    _write_json(out / "classical_fit.json", {**_header("classical-fit", eff), "fit": fit.to_dict()})
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "diagnose": cmd_diagnose,
    "gridsearch-rho": cmd_gridsearch,
    "simulate": cmd_simulate,
    "bench-regression": cmd_bench_regression,
    "bench-forecast": cmd_bench_forecast,
    "criticals": cmd_criticals,
    "classical-fit": cmd_classical,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InputError, SeriesError, ModelError, BenchError, RankDeficientError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except UndefinedStatisticError as exc:
        print(f"undefined statistic: {exc}", file=sys.stderr)
        return EXIT_OK
    except (TrainingError, StatsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME if isinstance(exc, (TrainingError, StatsError)) else EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
