"""Evaluation metrics and all file formats.

Metrics: per-subgroup normalised root mean squared error with the doubly
averaged subgroup mean in the denominator, subgroup gaps, total squared loss,
residual noise-covariance estimates, and the discounted annuity premium.

Formats: the trajectory CSV (``subgroup,trajectory,t,value``), recidivism
score extraction from a COMPAS-style CSV with a configurable column map, and
JSON round-trips for the solve and evaluation reports with stable key order.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .datagen import TrajectorySet, as_trajectory_set
from .fairlds import FairSolveReport, SolverSummary
from .sdp import STATUS_OPTIMAL

__all__ = [
    "DegenerateDataError",
    "TrajectoryCSVError",
    "EvalReport",
    "CompasFilter",
    "DEFAULT_COMPAS_COLUMNS",
    "subgroup_mean",
    "nrmse",
    "total_squared_loss",
    "evaluate",
    "estimate_noise_covariances",
    "annuity_premium",
    "save_trajectories_csv",
    "load_trajectories_csv",
    "save_rows_csv",
    "load_rows_csv",
    "compas_extract",
    "fair_report_to_dict",
    "fair_report_from_dict",
    "eval_report_to_dict",
    "eval_report_from_dict",
    "save_json",
    "load_json",
]


class DegenerateDataError(ValueError):
    """Metric undefined on this data (for example constant observations)."""


class TrajectoryCSVError(ValueError):
    """Malformed trajectory CSV; message carries the 1-based line number."""


# -- metrics ------------------------------------------------------------


def subgroup_mean(data: TrajectorySet, subgroup: str) -> float:
    """Doubly averaged observation level: trajectories weigh equally within
    the subgroup and periods equally within each trajectory."""
    data = as_trajectory_set(data)
    trajectories = data.trajectories(subgroup)
    total = 0.0
    for i in trajectories:
        series = data.series(subgroup, i)
        total += sum(series.values()) / len(series)
    return total / len(trajectories)


def nrmse(data: TrajectorySet, forecasts: Mapping[int, float], subgroup: str) -> float:
    """sqrt of (squared forecast error) / (squared deviation from the
    subgroup mean), summed over the subgroup's observations."""
    data = as_trajectory_set(data)
    mean = subgroup_mean(data, subgroup)
    num = 0.0
    den = 0.0
    for i in data.trajectories(subgroup):
        for t, value in data.series(subgroup, i).items():
            if t not in forecasts:
                raise ValueError(f"missing forecast for period {t} of subgroup {subgroup!r}")
            num += (value - float(forecasts[t])) ** 2
            den += (value - mean) ** 2
    if den == 0.0:
        raise DegenerateDataError(
            f"subgroup {subgroup!r} has constant observations; error normalisation is undefined"
        )
    return math.sqrt(num / den)


def total_squared_loss(data: TrajectorySet, forecasts: Mapping[int, float]) -> float:
    data = as_trajectory_set(data)
    total = 0.0
    for (s, i, t), value in data.items():
        if t not in forecasts:
            raise ValueError(f"missing forecast for period {t}")
        total += (value - float(forecasts[t])) ** 2
    return total


@dataclass(frozen=True)
class EvalReport:
    nrmse: dict[str, float]
    means: dict[str, float]
    gap: float
    total_loss: float
    V_hat: float | None
    W_hat: tuple[tuple[float, ...], ...] | None


def evaluate(data: TrajectorySet, report: FairSolveReport) -> EvalReport:
    """Score a solve report against (possibly richer) reference data.

    Noise covariance estimates are included when the report is optimal and
    has enough periods; otherwise those fields stay None.
    """
    data = as_trajectory_set(data)
    scores = {s: nrmse(data, report.forecasts, s) for s in data.subgroups}
    means = {s: subgroup_mean(data, s) for s in data.subgroups}
    values = list(scores.values())
    v_hat: float | None = None
    w_hat: tuple[tuple[float, ...], ...] | None = None
    try:
        v_est, w_est = estimate_noise_covariances(report, data)
        v_hat = v_est
        w_hat = tuple(tuple(float(x) for x in row) for row in np.atleast_2d(w_est))
    except ValueError:
        pass
    return EvalReport(
        nrmse=scores,
        means=means,
        gap=max(values) - min(values),
        total_loss=total_squared_loss(data, report.forecasts),
        V_hat=v_hat,
        W_hat=w_hat,
    )


def estimate_noise_covariances(report: FairSolveReport, data=None) -> tuple[float, np.ndarray]:
    """Sample covariance (denominator count-1) of the report's residuals.

    Observation residuals are f_t - F'm_t per period; state residuals are
    m_t - G m_prev along the chain of estimated states starting at m_0.
    """
    if report.solver.status != STATUS_OPTIMAL:
        raise ValueError(f"covariance estimation needs an optimal solve, got {report.solver.status!r}")
    periods = report.periods
    if len(periods) < 2:
        raise ValueError(f"covariance estimation needs at least 2 periods, got {len(periods)}")
    g_est = np.asarray(report.G_estimate)
    f_est = np.asarray(report.F_estimate)
    v_res = []
    for t in periods:
        state = np.asarray(report.state_estimates[t])
        v_res.append(report.forecasts[t] - float(f_est @ state))
    w_res = []
    prev = np.asarray(report.state_estimates[0])
    for t in periods:
        state = np.asarray(report.state_estimates[t])
        w_res.append(state - g_est @ prev)
        prev = state
    v_hat = float(np.var(np.asarray(v_res), ddof=1))
    stacked = np.asarray(w_res)
    w_hat = np.atleast_2d(np.cov(stacked, rowvar=False, ddof=1))
    return v_hat, w_hat


def annuity_premium(survivors: Sequence[float], initial: float, rate: float) -> float:
    """Present value of ten unit annuity payments weighted by survivorship,
    per currency unit: sum over t = 1..10 of survivors[t-1] (1+rate)^-t,
    divided by the initial count."""
    survivors = [float(p) for p in survivors]
    if len(survivors) != 10:
        raise ValueError(f"expected 10 survivor counts, got {len(survivors)}")
    if any(p < 0 for p in survivors):
        raise ValueError("survivor counts must be non-negative")
    initial = float(initial)
    if initial <= 0:
        raise ValueError(f"initial count must be positive, got {initial}")
    rate = float(rate)
    if rate < 0:
        raise ValueError(f"interest rate must be non-negative, got {rate}")
    return sum(p * (1.0 + rate) ** (-t) for t, p in enumerate(survivors, start=1)) / initial


# -- trajectory CSV ------------------------------------------------------

CSV_HEADER = ["subgroup", "trajectory", "t", "value"]


def save_trajectories_csv(data: TrajectorySet, path) -> None:
    data = as_trajectory_set(data)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for (s, i, t), value in data.items():
            writer.writerow([s, i, t, "%.17g" % value])


def load_trajectories_csv(path) -> TrajectorySet:
    observations: dict[tuple[str, str, int], float] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise TrajectoryCSVError("line 1: file is empty, expected header") from None
        if header != CSV_HEADER:
            raise TrajectoryCSVError(f"line 1: expected header {','.join(CSV_HEADER)!r}, got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise TrajectoryCSVError(f"line {lineno}: expected 4 fields, got {len(row)}")
            s, i, t_text, v_text = row
            try:
                t = int(t_text)
            except ValueError:
                raise TrajectoryCSVError(f"line {lineno}: period must be an integer, got {t_text!r}") from None
            if t < 1:
                raise TrajectoryCSVError(f"line {lineno}: period must be positive, got {t}")
            try:
                value = float(v_text)
            except ValueError:
                raise TrajectoryCSVError(f"line {lineno}: value must be a number, got {v_text!r}") from None
            if not math.isfinite(value):
                raise TrajectoryCSVError(f"line {lineno}: value must be finite, got {v_text!r}")
            if not s or not i:
                raise TrajectoryCSVError(f"line {lineno}: empty subgroup or trajectory identifier")
            key = (s, i, t)
            if key in observations:
                raise TrajectoryCSVError(f"line {lineno}: duplicate observation for {key}")
            observations[key] = value
    return TrajectorySet(observations)


def save_rows_csv(rows: Sequence[Mapping[str, object]], path) -> None:
    """Write a homogeneous list of records as CSV; floats use a round-trip
    safe format.  Used for sweep and benchmark tables."""
    if not rows:
        raise ValueError("cannot write an empty table")
    fields = list(rows[0])
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            if list(row) != fields:
                raise ValueError(f"row fields {list(row)} differ from header {fields}")
            writer.writerow(["%.17g" % v if isinstance(v, float) else v for v in row.values()])


def load_rows_csv(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise TrajectoryCSVError("line 1: file is empty, expected header")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if None in row or any(v is None for v in row.values()):
                raise TrajectoryCSVError(f"line {lineno}: field count differs from header")
            rows.append(dict(row))
        return rows


# -- COMPAS extraction ----------------------------------------------------


@dataclass(frozen=True)
class CompasFilter:
    """Row filter and binning for recidivism-score trajectory extraction."""

    races: frozenset[str] = frozenset({"African-American", "Caucasian"})
    sex: str = "Male"
    age_range: tuple[int, int] = (25, 45)
    max_priors: int = 2
    charge_degree: str = "M"
    recharge_degrees: frozenset[str] = frozenset({"M1", "M2"})
    period_days: int = 20

    def __post_init__(self) -> None:
        lo, hi = self.age_range
        if lo > hi:
            raise ValueError(f"age range lower bound exceeds upper bound: {self.age_range}")
        if not isinstance(self.period_days, int) or self.period_days < 1:
            raise ValueError(f"period_days must be a positive integer, got {self.period_days!r}")
        if self.max_priors < 0:
            raise ValueError(f"max_priors must be non-negative, got {self.max_priors!r}")


DEFAULT_COMPAS_COLUMNS = {
    "race": "race",
    "sex": "sex",
    "age": "age",
    "priors": "priors_count",
    "charge_degree": "c_charge_degree",
    "recid": "two_year_recid",
    "recharge_degree": "r_charge_degree",
    "days": "r_days_from_arrest",
    "score": "decile_score",
}


def _normalize_degree(text: str) -> str:
    return text.strip().strip("()").strip()


def compas_extract(csv_path, flt: CompasFilter | None = None, column_map: Mapping[str, str] | None = None) -> TrajectorySet:
    """Extract per-(race, recharge-degree) score trajectories.

    Retained rows (recidivism label 1, filtered race/sex/age/priors/charge
    degrees) are partitioned into race x recharge-degree sub-samples; days to
    rearrest are binned into ``period_days``-day windows and each window with
    any row becomes one observation holding the mean decile score.  Subgroup
    is the race, trajectory id the recharge degree.
    """
    flt = flt or CompasFilter()
    columns = dict(DEFAULT_COMPAS_COLUMNS)
    if column_map:
        unknown = sorted(set(column_map) - set(columns))
        if unknown:
            raise ValueError(f"unknown column-map fields: {unknown}; expected {sorted(columns)}")
        columns.update(column_map)

    bins: dict[tuple[str, str, int], list[float]] = {}
    with open(csv_path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        fields = reader.fieldnames or []
        missing = sorted(c for c in columns.values() if c not in fields)
        if missing:
            raise ValueError(f"CSV is missing mapped columns: {missing}")
        for lineno, row in enumerate(reader, start=2):
            race = (row[columns["race"]] or "").strip()
            if race not in flt.races:
                continue
            if (row[columns["sex"]] or "").strip() != flt.sex:
                continue
            try:
                age = int(float(row[columns["age"]]))
                priors = int(float(row[columns["priors"]]))
                recid = int(float(row[columns["recid"]]))
            except (TypeError, ValueError):
                continue
            if not flt.age_range[0] <= age <= flt.age_range[1]:
                continue
            if priors >= flt.max_priors:
                continue
            if recid != 1:
                continue
            if (row[columns["charge_degree"]] or "").strip() != flt.charge_degree:
                continue
            recharge = _normalize_degree(row[columns["recharge_degree"]] or "")
            if recharge not in flt.recharge_degrees:
                continue
            try:
                days = float(row[columns["days"]])
            except (TypeError, ValueError):
                continue
            if not math.isfinite(days) or days < 1:
                continue
            period = math.ceil(days / flt.period_days)
            try:
                score = float(row[columns["score"]])
            except (TypeError, ValueError):
                raise ValueError(
                    f"line {lineno}: non-numeric decile score {row[columns['score']]!r}"
                ) from None
            bins.setdefault((race, recharge, period), []).append(score)

    observations = {key: sum(scores) / len(scores) for key, scores in bins.items()}
    if not observations:
        warnings.warn("no rows passed the recidivism filter; returning an empty trajectory set")
    return TrajectorySet(observations)


# -- JSON reports ----------------------------------------------------------


def fair_report_to_dict(report: FairSolveReport) -> dict:
    return {
        "mode": report.mode,
        "hidden_dim": report.hidden_dim,
        "forecasts": {str(t): v for t, v in sorted(report.forecasts.items())},
        "state_estimates": {str(t): list(v) for t, v in sorted(report.state_estimates.items())},
        "G_estimate": [list(row) for row in report.G_estimate],
        "F_estimate": list(report.F_estimate),
        "z_value": report.z_value,
        "objective_value": report.objective_value,
        "solver": {
            "status": report.solver.status,
            "objective_value": report.solver.objective_value,
            "primal_residual": report.solver.primal_residual,
            "dual_residual": report.solver.dual_residual,
            "gap": report.solver.gap,
            "iterations": report.solver.iterations,
            "wall_time": report.solver.wall_time,
        },
        "flat": report.flat,
    }


def fair_report_from_dict(payload: Mapping) -> FairSolveReport:
    solver = payload["solver"]
    return FairSolveReport(
        mode=payload["mode"],
        hidden_dim=int(payload["hidden_dim"]),
        forecasts={int(t): float(v) for t, v in payload["forecasts"].items()},
        state_estimates={int(t): tuple(float(x) for x in v) for t, v in payload["state_estimates"].items()},
        G_estimate=tuple(tuple(float(x) for x in row) for row in payload["G_estimate"]),
        F_estimate=tuple(float(x) for x in payload["F_estimate"]),
        z_value=None if payload["z_value"] is None else float(payload["z_value"]),
        objective_value=float(payload["objective_value"]),
        solver=SolverSummary(
            status=solver["status"],
            objective_value=float(solver["objective_value"]),
            primal_residual=float(solver["primal_residual"]),
            dual_residual=float(solver["dual_residual"]),
            gap=float(solver["gap"]),
            iterations=int(solver["iterations"]),
            wall_time=float(solver["wall_time"]),
        ),
        flat=payload["flat"],
    )


def eval_report_to_dict(report: EvalReport) -> dict:
    return {
        "nrmse": dict(sorted(report.nrmse.items())),
        "means": dict(sorted(report.means.items())),
        "gap": report.gap,
        "total_loss": report.total_loss,
        "V_hat": report.V_hat,
        "W_hat": None if report.W_hat is None else [list(row) for row in report.W_hat],
    }


def eval_report_from_dict(payload: Mapping) -> EvalReport:
    return EvalReport(
        nrmse={str(s): float(v) for s, v in payload["nrmse"].items()},
        means={str(s): float(v) for s, v in payload["means"].items()},
        gap=float(payload["gap"]),
        total_loss=float(payload["total_loss"]),
        V_hat=None if payload["V_hat"] is None else float(payload["V_hat"]),
        W_hat=None
        if payload["W_hat"] is None
        else tuple(tuple(float(x) for x in row) for row in payload["W_hat"]),
    )


def save_json(payload: Mapping, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, sort_keys=True, indent=2)
        handle.write("\n")


def load_json(path) -> dict:
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)
