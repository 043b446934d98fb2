"""Next-shift fleet regression and residual-bootstrap Monte Carlo scenarios."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, NumericError
from .ingest import ShiftRecord

TARGETS = ("trucks", "shovels")
INPUTS = ("current", "lag1", "mean4", "intercept")
MIN_ROWS = 10
RIDGE_EPS = 1e-8
COND_LIMIT = 1e12


def ols_fit(X, y, free_columns=()) -> np.ndarray:
    """Least squares through the normal equations.

    Falls back to ``(X'X + eps D) b = X'y`` when X'X is singular or badly
    conditioned (e.g. a constant series, where every column is a multiple of
    the intercept). D is the identity with zeros at ``free_columns``, so an
    intercept listed there is left unpenalised and absorbs the level.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    gram = X.T @ X
    rhs = X.T @ y
    if np.linalg.matrix_rank(gram) < gram.shape[0] or np.linalg.cond(gram) > COND_LIMIT:
        penalty = np.ones(gram.shape[0])
        penalty[list(free_columns)] = 0.0
        # same minimiser as the penalised normal equations, better conditioned
        A = np.vstack([X, np.sqrt(RIDGE_EPS) * np.diag(penalty)])
        b = np.concatenate([y, np.zeros(gram.shape[0])])
        return np.linalg.lstsq(A, b, rcond=None)[0]
    return np.linalg.solve(gram, rhs)


def _counts(records: Sequence[ShiftRecord]) -> np.ndarray:
    return np.array([[r.working_trucks, r.working_shovels] for r in records], dtype=float)


def fleet_states(counts) -> np.ndarray:
    """Regressor inputs for every shift: (n, 2 targets, 4 inputs); NaN where t < 3."""
    counts = np.asarray(counts, dtype=float)
    n = len(counts)
    states = np.full((n, 2, len(INPUTS)), np.nan)
    for t in range(3, n):
        states[t, :, 0] = counts[t]
        states[t, :, 1] = counts[t - 1]
        states[t, :, 2] = counts[t - 3 : t + 1].mean(axis=0)
        states[t, :, 3] = 1.0
    return states


@dataclass(frozen=True)
class FleetRegressor:
    """Per-target linear coefficients over (current, lag-1, mean-4, intercept).

    ``residuals`` has one row per training shift and one column per target;
    rows stay paired so a bootstrap draw preserves the truck/shovel correlation.
    """

    coefficients: np.ndarray  # (2, 4)
    residuals: np.ndarray  # (m, 2)

    def predict_state(self, state) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        if state.shape[-2:] != (2, len(INPUTS)):
            raise DataError(f"fleet state must have trailing shape (2, {len(INPUTS)}), got {state.shape}")
        return np.einsum("...ti,ti->...t", state, self.coefficients)


def fit_fleet_regressor(history: Sequence[ShiftRecord]) -> FleetRegressor:
    counts = _counts(history)
    states = fleet_states(counts)
    rows = np.arange(3, len(counts) - 1)
    if len(rows) < MIN_ROWS:
        raise DataError(f"fleet regression needs at least {MIN_ROWS} usable rows, got {max(len(rows), 0)}")
    coef = np.empty((2, len(INPUTS)))
    resid = np.empty((len(rows), 2))
    for k in range(2):
        X = states[rows, k, :]
        y = counts[rows + 1, k]
        coef[k] = ols_fit(X, y, free_columns=(INPUTS.index("intercept"),))
        resid[:, k] = y - X @ coef[k]
    if not np.all(np.isfinite(coef)):
        raise NumericError("fleet regression produced non-finite coefficients")
    return FleetRegressor(coef, resid)


def predict_fleet(model: FleetRegressor, records: Sequence[ShiftRecord]) -> np.ndarray:
    """Point forecasts aligned with ``records``: row t predicts shift t+1 (NaN for t < 3)."""
    return model.predict_state(fleet_states(_counts(records)))


def simulate_next_fleet(
    model: FleetRegressor | None,
    state,
    n_draws: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Point prediction plus ``n_draws`` integer scenarios for the next shift.

    Each scenario adds one residual row drawn uniformly with replacement to
    the point prediction, then clips at zero and rounds.
    """
    if model is None or len(model.residuals) == 0:
        raise DataError("fleet regressor is not fitted")
    if n_draws < 1:
        raise DataError(f"n_draws must be >= 1, got {n_draws}")
    point = model.predict_state(state)
    picks = rng.integers(0, len(model.residuals), size=n_draws)
    scenarios = np.rint(np.clip(point + model.residuals[picks], 0.0, None)).astype(np.int64)
    return point, scenarios


def generate_scenarios(
    model: FleetRegressor,
    records: Sequence[ShiftRecord],
    n_draws: int,
    rng: np.random.Generator,
) -> list[tuple[int, int, int, int]]:
    """Scenario table rows ``(shift_index, draw, trucks, shovels)`` for every forecastable shift."""
    states = fleet_states(_counts(records))
    rows = []
    for t in range(3, len(records)):
        _, scen = simulate_next_fleet(model, states[t], n_draws, rng)
        target_index = records[t].shift_index + 1
        rows.extend((target_index, d, int(a), int(b)) for d, (a, b) in enumerate(scen))
    return rows


def write_scenario_csv(rows, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("shift_index", "draw", "trucks", "shovels"))
        writer.writerows(rows)
    return path
