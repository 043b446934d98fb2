"""Command-line entry point.

``haulcast run`` executes the whole pipeline; the other subcommands run one
stage on files so stages can be chained by hand. Exit codes: 0 success,
1 usage or config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evaluation, pipeline
from .config import PipelineConfig, load_config
from .errors import AlignmentError, ConfigError, DataError, HaulcastError, ModelFileError
from .features import load_feature_csv, save_feature_csv, split_point
from .fleetmc import generate_scenarios, write_scenario_csv
from .gbrt import load_ensemble, save_ensemble, tree_shap_matrix, write_shap_csvs
from .gbrt.trees import FORMAT_TAG as GBRT_TAG
from .ingest import save_shift_csv
from .lstm import load_lstm, save_lstm, write_history_csv
from .lstm.training import FORMAT_TAG as LSTM_TAG
from .simdata import simulate_shifts


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so usage errors map to exit 1."""

    def error(self, message):
        raise ConfigError(f"usage: {message}")


def _config(args) -> PipelineConfig:
    config = load_config(args.config)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "ablation", False):
        changes["include_true_next_trucks"] = True
    if getattr(args, "no_figures", False):
        changes["figures"] = False
    if getattr(args, "command", None) == "run" and args.output:
        changes["output_dir"] = args.output
    return config.with_overrides(**changes) if changes else config


def _parent(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _load_model(path):
    """Return ("gbrt", ensemble) or ("lstm", model file) by the file's format tag."""
    path = Path(path)
    if not path.is_file():
        raise ModelFileError(f"model file not found: {path}")
    try:
        tag = json.loads(path.read_text(encoding="utf-8")).get("format")
    except (OSError, ValueError, AttributeError):
        raise ModelFileError(f"{path}: unreadable model file") from None
    if tag == GBRT_TAG:
        return "gbrt", load_ensemble(path)
    if tag == LSTM_TAG:
        return "lstm", load_lstm(path)
    raise ModelFileError(f"{path}: unknown model format {tag!r}")


# ---------------------------------------------------------------------------
# commands


def cmd_run(args) -> int:
    result = pipeline.run_pipeline(_config(args))
    for label, report in result.main.metrics.items():
        print(f"{label:12s} MedAE {report.medae_pct:6.2f}%  R2 {report.r2:6.3f}  >50%: {report.count_over_50pct}")
    if result.ablation is not None:
        for label, report in result.ablation.metrics.items():
            print(f"ablation {label:12s} MedAE {report.medae_pct:6.2f}%  >50%: {report.count_over_50pct}")
    print(f"artifacts in {result.output_dir}")
    return 0


def cmd_simulate(args) -> int:
    config = _config(args)
    sim = config.simdata
    if args.n_shifts is not None:
        sim = replace(sim, n_shifts=args.n_shifts)
    records = simulate_shifts(sim)
    save_shift_csv(records, _parent(args.output))
    print(f"wrote {len(records)} shifts to {args.output}")
    return 0


def cmd_ingest(args) -> int:
    config = _config(args)
    max_gap = config.ingest.max_gap if args.max_gap is None else args.max_gap
    records, flags = pipeline.ingest_records(args.shifts, args.rain, max_gap)
    save_shift_csv(records, _parent(args.output))
    if args.flags:
        pipeline.write_gap_flags(flags, _parent(args.flags))
    print(f"wrote {len(records)} shifts to {args.output}; {len(flags)} unrepaired gap(s)")
    return 0


def cmd_features(args) -> int:
    config = _config(args)
    records, _ = pipeline.ingest_records(args.shifts)
    frac = config.features.train_fraction
    dataset, fleet = pipeline.prepare_features(records, frac, args.ablation)
    save_feature_csv(dataset, _parent(args.output))
    if args.scenarios:
        rng = np.random.default_rng(config.fleet_seed)
        write_scenario_csv(generate_scenarios(fleet, records, config.fleetmc.n_draws, rng), _parent(args.scenarios))
    print(f"wrote {len(dataset)} feature rows to {args.output}")
    return 0


def cmd_train_gbrt(args) -> int:
    config = _config(args)
    dataset = load_feature_csv(args.features)
    ensemble = pipeline.fit_gbrt_stage(dataset, config)
    save_ensemble(ensemble, _parent(args.output))
    print(f"trained {len(ensemble.trees)} trees on {ensemble.meta['n_train']} rows -> {args.output}")
    return 0


def cmd_train_lstm(args) -> int:
    config = _config(args)
    dataset = load_feature_csv(args.features)
    fit = pipeline.fit_lstm_stage(dataset, config)
    save_lstm(fit.params, _parent(args.output), fit.scaler, config.lstm, fit.meta)
    if args.history:
        write_history_csv(fit.history, _parent(args.history))
    print(f"best epoch {fit.history.best_epoch} (val MSE {fit.history.best_val_mse:.6g}) -> {args.output}")
    return 0


def _select(dataset, meta: dict, which: str):
    if which == "all":
        return dataset
    return pipeline.held_out_rows(dataset, float(meta.get("train_fraction", 0.8)))


def cmd_predict(args) -> int:
    kind, model = _load_model(args.model)
    dataset = load_feature_csv(args.features)
    if kind == "gbrt":
        rows = _select(dataset, model.meta, args.rows)
        preds, origin = pipeline.gbrt_predict(model, rows), rows.origin
    else:
        if model.scaler is None:
            raise ModelFileError(f"{args.model}: LSTM model file carries no scaler")
        lookback = int(model.meta.get("lookback", 10))
        ends, preds = pipeline.lstm_predict(model.params, model.scaler, dataset, lookback, model.meta.get("crews"))
        origin = dataset.origin[ends]
        if args.rows == "test":
            cut = split_point(len(dataset), float(model.meta.get("train_fraction", 0.8)))
            keep = ends >= cut
            preds, origin = preds[keep], origin[keep]
    pipeline.write_predictions_csv(origin, preds, args.label or kind, _parent(args.output))
    print(f"wrote {len(preds)} predictions to {args.output}")
    return 0


def cmd_explain(args) -> int:
    kind, model = _load_model(args.model)
    if kind != "gbrt":
        raise ModelFileError(f"{args.model}: Shapley attribution needs a GBRT model, got {kind}")
    rows = _select(load_feature_csv(args.features), model.meta, args.rows)
    X = rows.matrix(model.meta.get("crews", rows.crews))
    phi, base = tree_shap_matrix(model, X)
    pipeline.check_local_accuracy(phi, base, model.predict(X))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_shap_csvs(phi, X, model.feature_names, out)
    print(f"wrote Shapley values for {len(X)} rows to {out}")
    return 0


def _read_predictions(path) -> tuple[str, np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"prediction file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"origin_shift_index", "model", "prediction"}:
        raise DataError(f"{path}: expected columns origin_shift_index,model,prediction")
    try:
        origin = np.array([int(r["origin_shift_index"]) for r in rows])
        values = np.array([float(r["prediction"]) for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return rows[0]["model"], origin, values


def cmd_evaluate(args) -> int:
    config = _config(args)
    dataset = load_feature_csv(args.features)
    by_origin = {int(o): i for i, o in enumerate(dataset.origin)}
    predictions, origin = {}, None
    for path in args.predictions:
        label, o, values = _read_predictions(path)
        if origin is None:
            origin = o
        elif len(o) != len(origin) or np.any(o != origin):
            raise AlignmentError(f"{path}: {len(o)} predictions do not align with {len(origin)} from the first file")
        missing = [int(x) for x in o if int(x) not in by_origin]
        if missing:
            raise AlignmentError(f"{path}: origins {missing[:5]} have no actual value")
        if label in predictions:
            raise DataError(f"duplicate model label {label!r}")
        predictions[label] = values
    rows = np.array([by_origin[int(x)] for x in origin])
    actuals = dataset.target[rows]
    if args.baseline:
        predictions["persistence"] = np.asarray(dataset.columns["payload"], dtype=float)[rows]
    out = Path(args.output)
    evaluation.emit_analysis(predictions, actuals, origin, out, config.eval.threshold_pct)
    if not args.no_figures:
        from .plots import render_report

        render_report(out)
    for report in evaluation.read_metrics_csv(out / "metrics.csv"):
        print(f"{report.model_label:12s} MedAE {report.medae_pct:6.2f}%  R2 {report.r2:6.3f}  >50%: {report.count_over_50pct}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="haulcast", description="Next-shift payload forecasting for haul fleets.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text, output_help):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--seed", type=int, help="global seed (overrides the config)")
        p.add_argument("--output", required=name != "run", help=output_help)
        p.set_defaults(func=func)
        return p

    p = add("run", cmd_run, "run the full pipeline", "output directory (overrides the config)")
    p.add_argument("--ablation", action="store_true", help="also run with the true next-shift truck count")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    p = add("simulate", cmd_simulate, "simulate shift records", "shift CSV to write")
    p.add_argument("--n-shifts", type=int)

    p = add("ingest", cmd_ingest, "load shifts and aggregate hourly rain", "shift CSV to write")
    p.add_argument("--shifts", required=True, help="shift CSV")
    p.add_argument("--rain", help="hourly rain CSV")
    p.add_argument("--max-gap", type=int, help="longest run of missing hours to interpolate")
    p.add_argument("--flags", help="CSV for unrepaired gaps")

    p = add("features", cmd_features, "fit the fleet model and build feature rows", "feature CSV to write")
    p.add_argument("--shifts", required=True, help="shift CSV")
    p.add_argument("--ablation", action="store_true", help="add the true next-shift truck count")
    p.add_argument("--scenarios", help="fleet scenario CSV to write")

    p = add("train-gbrt", cmd_train_gbrt, "train the boosted-tree model", "model file to write")
    p.add_argument("--features", required=True)

    p = add("train-lstm", cmd_train_lstm, "train the recurrent model", "model file to write")
    p.add_argument("--features", required=True)
    p.add_argument("--history", help="per-epoch loss CSV to write")

    p = add("predict", cmd_predict, "predict with a saved model", "prediction CSV to write")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--rows", choices=("test", "all"), default="test")
    p.add_argument("--label", help="model label written to the file")

    p = add("explain", cmd_explain, "Shapley values from a saved GBRT model", "directory for SHAP CSVs")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--rows", choices=("test", "all"), default="test")

    p = add("evaluate", cmd_evaluate, "metrics and analysis tables", "analysis directory")
    p.add_argument("--features", required=True, help="feature CSV providing actual values")
    p.add_argument("--predictions", required=True, nargs="+", help="prediction CSVs")
    p.add_argument("--baseline", action="store_true", help="add the persistence forecast")
    p.add_argument("--no-figures", action="store_true")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except HaulcastError as exc:
        print(f"haulcast: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"haulcast: error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
