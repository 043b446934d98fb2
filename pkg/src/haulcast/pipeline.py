"""End-to-end orchestration and the stage functions the CLI reuses.

Output layout under ``output_dir``::

    config.ini                resolved configuration
    data/                     shifts.csv, features.csv, fleet_scenarios.csv (+ gap_flags.csv)
    models/                   gbrt.json, lstm.json, lstm_history.csv
    explain/                  shap_values.csv, shap_summary.csv
    analysis/                 emit_analysis tables (+ PNG figures)
    ablation/                 same layout for the true-next-trucks run
    manifest.json             files with digests, config hash, seed, status
"""

from __future__ import annotations

import contextlib
import csv
import datetime as dt
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import evaluation
from .config import PipelineConfig, render_config
from .errors import DataError, HaulcastError, NumericError
from .features import (
    Dataset,
    ScalerParams,
    apply_feature_scaler,
    build_features,
    chronological_split,
    fit_feature_scaler,
    make_sequences,
    save_feature_csv,
    scale_target,
    split_point,
)
from .fleetmc import FleetRegressor, fit_fleet_regressor, generate_scenarios, predict_fleet, write_scenario_csv
from .gbrt import TreeEnsemble, save_ensemble, train_gbrt, tree_shap_matrix, write_shap_csvs
from .ingest import (
    ShiftCalendar,
    ShiftRecord,
    aggregate_rain_to_shifts,
    fill_gaps,
    load_rain_csv,
    load_shift_csv,
    save_shift_csv,
)
from .lstm import LstmParams, TrainingHistory, predict_lstm, save_lstm, train_lstm, write_history_csv
from .simdata import simulate_shifts

MANIFEST = "manifest.json"
LOCAL_ACCURACY_TOL = 1e-9


@contextlib.contextmanager
def stage(name: str):
    """Prefix any haulcast error raised inside the block with the stage name."""
    try:
        yield
    except HaulcastError as exc:
        err = type(exc)(f"stage {name}: {exc}")
        err.stage = name
        raise err from exc
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        err = NumericError(f"stage {name}: {exc}")
        err.stage = name
        raise err from exc


# ---------------------------------------------------------------------------
# data stages


def ingest_records(shift_csv, rain_csv=None, max_gap: int = 3,
                   calendar: ShiftCalendar = ShiftCalendar()):
    """Load shift records; when a rain file is given, replace precipitation with aggregated totals.

    Returns:
        (records, gap flags left unrepaired)
    """
    records = load_shift_csv(shift_csv)
    if not rain_csv:
        return records, []
    repaired, flags = fill_gaps(load_rain_csv(rain_csv), max_gap)
    totals = aggregate_rain_to_shifts(repaired, calendar, [(r.date, r.shift_kind) for r in records])
    return [replace(r, precipitation=float(p)) for r, p in zip(records, totals)], flags


def load_source(config: PipelineConfig):
    if config.source == "simulate":
        return simulate_shifts(config.simdata), []
    ing = config.ingest
    calendar = ShiftCalendar(
        dt.time.fromisoformat(ing.day_shift_start), dt.time.fromisoformat(ing.night_shift_start)
    )
    return ingest_records(ing.shift_csv, ing.rain_csv or None, ing.max_gap, calendar)


def write_gap_flags(flags, path: Path) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("start", "end", "n_hours", "reason"))
        for f in flags:
            writer.writerow((f.start.isoformat(), f.end.isoformat(), f.n_hours, f.reason))
    return path


def fit_fleet(records: Sequence[ShiftRecord], train_fraction: float) -> FleetRegressor:
    """Fleet regression fitted on the leading training share of records only."""
    return fit_fleet_regressor(records[: split_point(len(records), train_fraction)])


def prepare_features(records: Sequence[ShiftRecord], train_fraction: float,
                     include_true_next_trucks: bool = False) -> tuple[Dataset, FleetRegressor]:
    model = fit_fleet(records, train_fraction)
    dataset = build_features(records, predict_fleet(model, records), include_true_next_trucks)
    return dataset, model


# ---------------------------------------------------------------------------
# model stages


def fit_gbrt_stage(dataset: Dataset, config: PipelineConfig) -> TreeEnsemble:
    train, _ = chronological_split(dataset, config.features.train_fraction)
    ensemble = train_gbrt(train.matrix(), train.target, config.gbrt, train.feature_names)
    ensemble.meta = {
        "train_fraction": config.features.train_fraction,
        "n_train": len(train),
        "crews": list(dataset.crews),
        "raw_features": list(dataset.raw_names),
    }
    return ensemble


def held_out_rows(dataset: Dataset, train_fraction: float) -> Dataset:
    return chronological_split(dataset, train_fraction)[1]


def gbrt_predict(ensemble: TreeEnsemble, dataset: Dataset) -> np.ndarray:
    crews = ensemble.meta.get("crews", dataset.crews)
    return ensemble.predict(dataset.matrix(crews))


@dataclass
class LstmFit:
    params: LstmParams
    history: TrainingHistory
    scaler: ScalerParams
    meta: dict


def lstm_windows(dataset: Dataset, scaler: ScalerParams, lookback: int, crews=None):
    """Scaled windows over the whole dataset with each window's end row position."""
    X = apply_feature_scaler(scaler, dataset.matrix(crews))
    y = scale_target(scaler, dataset.target)
    return make_sequences(X, y, lookback, dataset.origin)


def fit_lstm_stage(dataset: Dataset, config: PipelineConfig) -> LstmFit:
    lookback = config.features.lookback
    train, _ = chronological_split(dataset, config.features.train_fraction)
    if len(train) < lookback + 1:
        raise DataError(f"training span of {len(train)} rows is too short for look-back {lookback}")
    scaler = fit_feature_scaler(train)
    windows, targets, ends = lstm_windows(dataset, scaler, lookback)
    fit_rows = ends < len(train)
    params, history = train_lstm(windows[fit_rows], targets[fit_rows], config.lstm)
    meta = {
        "train_fraction": config.features.train_fraction,
        "lookback": lookback,
        "n_train_windows": int(fit_rows.sum()),
        "crews": list(dataset.crews),
        "raw_features": list(dataset.raw_names),
        "best_epoch": history.best_epoch,
    }
    return LstmFit(params, history, scaler, meta)


def lstm_predict(params: LstmParams, scaler: ScalerParams, dataset: Dataset, lookback: int,
                 crews=None) -> tuple[np.ndarray, np.ndarray]:
    """Predictions in tons for every row that closes a full window.

    Returns:
        (row positions, predictions)
    """
    windows, _, ends = lstm_windows(dataset, scaler, lookback, crews)
    return ends, predict_lstm(params, windows, scaler)


def lstm_test_predictions(fit: LstmFit, dataset: Dataset, config: PipelineConfig) -> np.ndarray:
    """Test-row predictions; early windows may reach back into training rows."""
    cut = split_point(len(dataset), config.features.train_fraction)
    ends, pred = lstm_predict(fit.params, fit.scaler, dataset, config.features.lookback)
    keep = ends >= cut
    if keep.sum() != len(dataset) - cut:
        raise DataError("some test rows have no complete look-back window")
    return pred[keep]


def write_predictions_csv(origin, predictions, label: str, path: Path) -> Path:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("origin_shift_index", "model", "prediction"))
        for o, p in zip(origin, predictions):
            writer.writerow((int(o), label, repr(float(p))))
    return Path(path)


def check_local_accuracy(phi: np.ndarray, base: float, predictions: np.ndarray) -> float:
    gap = float(np.max(np.abs(phi.sum(axis=1) + base - predictions))) if len(phi) else 0.0
    if gap > LOCAL_ACCURACY_TOL:
        raise NumericError(f"Shapley values miss the prediction by {gap}")
    return gap


# ---------------------------------------------------------------------------
# full run


@dataclass
class ModelRun:
    """Everything one modelling pass produced, kept for callers and tests."""

    dataset: Dataset
    test: Dataset
    ensemble: TreeEnsemble
    lstm: LstmFit
    predictions: dict[str, np.ndarray]
    metrics: dict[str, evaluation.MetricsReport]
    phi: np.ndarray | None = None
    expected_value: float | None = None


@dataclass
class PipelineResult:
    output_dir: Path
    manifest: dict
    main: ModelRun
    ablation: ModelRun | None = None
    records: list[ShiftRecord] = field(default_factory=list)


def _model_pass(records, config: PipelineConfig, out: Path, include_true: bool, explain: bool) -> ModelRun:
    frac = config.features.train_fraction
    with stage("features"):
        dataset, _ = prepare_features(records, frac, include_true)
        test = held_out_rows(dataset, frac)
        (out / "data").mkdir(parents=True, exist_ok=True)
        save_feature_csv(dataset, out / "data" / "features.csv")
    models = out / "models"
    models.mkdir(parents=True, exist_ok=True)
    with stage("gbrt"):
        ensemble = fit_gbrt_stage(dataset, config)
        save_ensemble(ensemble, models / "gbrt.json")
        pred_gbrt = gbrt_predict(ensemble, test)
    with stage("lstm"):
        fit = fit_lstm_stage(dataset, config)
        save_lstm(fit.params, models / "lstm.json", fit.scaler, config.lstm, fit.meta)
        write_history_csv(fit.history, models / "lstm_history.csv")
        pred_lstm = lstm_test_predictions(fit, dataset, config)
    phi = base = None
    if explain:
        with stage("explain"):
            X_test = test.matrix(ensemble.meta["crews"])
            phi, base = tree_shap_matrix(ensemble, X_test)
            check_local_accuracy(phi, base, pred_gbrt)
            (out / "explain").mkdir(exist_ok=True)
            write_shap_csvs(phi, X_test, ensemble.feature_names, out / "explain")
    predictions = {
        "gbrt": pred_gbrt,
        "lstm": pred_lstm,
        "persistence": np.asarray(test.columns["payload"], dtype=float),
    }
    with stage("evaluate"):
        evaluation.emit_analysis(predictions, test.target, test.origin, out / "analysis",
                                 config.eval.threshold_pct)
        metrics = {
            label: evaluation.metrics_report(label, p, test.target, config.eval.threshold_pct)
            for label, p in predictions.items()
        }
    return ModelRun(dataset, test, ensemble, fit, predictions, metrics, phi, base)


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, config: PipelineConfig, status: str, error: str | None = None,
                   failed_stage: str | None = None) -> dict:
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != MANIFEST)
    manifest = {
        "status": status,
        "seed": config.seed,
        "config_hash": config.config_hash(),
        "include_true_next_trucks": config.include_true_next_trucks,
        "files": [{"name": p.relative_to(out).as_posix(), "sha256": _digest(p)} for p in files],
    }
    if error is not None:
        manifest["failed_stage"] = failed_stage
        manifest["error"] = error
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Run every stage and write all artifacts under ``config.output_dir``.

    On failure the manifest is still written, with status ``incomplete``,
    the failing stage and the message, and the error is re-raised.
    """
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for sub in ("data", "models", "analysis", "explain"):
            (out / sub).mkdir(exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from None
    (out / "config.ini").write_text(render_config(config, include_output_dir=False), encoding="utf-8")
    try:
        with stage("data"):
            records, flags = load_source(config)
            save_shift_csv(records, out / "data" / "shifts.csv")
            if flags:
                write_gap_flags(flags, out / "data" / "gap_flags.csv")
        with stage("fleetmc"):
            fleet = fit_fleet(records, config.features.train_fraction)
            rng = np.random.default_rng(config.fleet_seed)
            write_scenario_csv(generate_scenarios(fleet, records, config.fleetmc.n_draws, rng),
                               out / "data" / "fleet_scenarios.csv")
        main = _model_pass(records, config, out, include_true=False, explain=True)
        ablation = None
        if config.include_true_next_trucks:
            ablation = _model_pass(records, config, out / "ablation", include_true=True, explain=False)
        if config.figures:
            with stage("figures"):
                from .plots import render_report

                for sub in ("analysis", "explain", "ablation/analysis"):
                    if (out / sub).is_dir():
                        render_report(out / sub)
    except HaulcastError as exc:
        write_manifest(out, config, "incomplete", str(exc), getattr(exc, "stage", None))
        raise
    manifest = write_manifest(out, config, "complete")
    return PipelineResult(out, manifest, main, ablation, records)
