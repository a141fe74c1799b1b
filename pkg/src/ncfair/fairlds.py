"""Subgroup-blind linear dynamical system learning under fairness objectives.

One operator model is fit to trajectories from several subgroups without
seeing subgroup labels at forecast time.  Decision variables are the system
matrices G and F, hidden states m_t, process noises w_t, observation noises
v_t, forecasts f_t, and (for the fair modes) a bound z on subgroup losses.
Three modes are offered:

* ``subgroup_fair``: minimize z + lambda * sum_t v_t^2 subject to z bounding
  each subgroup's average per-trajectory loss, trajectories weighted equally
  within a subgroup and periods equally within a trajectory;
* ``instant_fair``: z bounds every single observation's loss instead;
* ``unfair``: no z, minimize the plain sum of losses plus the noise penalty.

The polynomial problem is compiled into a moment relaxation, solved as a
semidefinite program, and point estimates are read off the first-order
moments.  A ball constraint bounds all operators, scaled from the data when
no radius is given.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .datagen import TrajectorySet, as_trajectory_set
from .ncpoly import Polynomial, VariableSet, make_variables
from .relaxation import (
    NCPOPProblem,
    assemble_sdp,
    extract_first_order,
    flatness_check,
    moments_from_solution,
)
from .sdp import STATUS_OPTIMAL, SDPSolution, SolverConfig, solve

__all__ = [
    "MODES",
    "DEFAULT_MULTIPLIERS",
    "FairnessModelSpec",
    "OperatorLayout",
    "SolverSummary",
    "FairSolveReport",
    "build_model",
    "solve_fair",
    "forecast_next",
    "FairLDS",
]

MODES = ("subgroup_fair", "instant_fair", "unfair")
LOSS_ENCODINGS = ("squared", "absolute")

# noise penalty multipliers that performed best when scanning the integers
# 1..10 on the benchmark generator
DEFAULT_MULTIPLIERS = {"subgroup_fair": 5.0, "instant_fair": 1.0, "unfair": 1.0}

DEFAULT_BALL_SCALE = 10.0


@dataclass(frozen=True)
class FairnessModelSpec:
    """Configuration of one learning problem.

    ``multiplier`` is the non-negative weight on the observation-noise
    penalty sum_t v_t^2 (None picks the mode default); ``ball_radius`` set to
    None means 10 * (1 + max |Y|) at build time.
    """

    mode: str = "subgroup_fair"
    multiplier: float | None = None
    hidden_dim: int = 1
    loss_encoding: str = "squared"
    relaxation_order: int = 1
    ball_radius: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.multiplier is not None:
            value = float(self.multiplier)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"multiplier must be non-negative, got {self.multiplier!r}")
            object.__setattr__(self, "multiplier", value)
        if not isinstance(self.hidden_dim, int) or self.hidden_dim < 1:
            raise ValueError(f"hidden_dim must be a positive integer, got {self.hidden_dim!r}")
        if self.loss_encoding not in LOSS_ENCODINGS:
            raise ValueError(f"loss_encoding must be one of {LOSS_ENCODINGS}, got {self.loss_encoding!r}")
        if not isinstance(self.relaxation_order, int) or self.relaxation_order < 1:
            raise ValueError(f"relaxation_order must be a positive integer, got {self.relaxation_order!r}")
        if self.ball_radius is not None:
            radius = float(self.ball_radius)
            if not math.isfinite(radius) or radius <= 0:
                raise ValueError(f"ball_radius must be positive, got {self.ball_radius!r}")
            object.__setattr__(self, "ball_radius", radius)
        if self.loss_encoding == "absolute" and self.mode == "unfair":
            raise ValueError(
                "absolute loss encoding needs the bound variable z; "
                "the unfair mode has none, use squared"
            )

    def resolved_multiplier(self) -> float:
        if self.multiplier is None:
            return DEFAULT_MULTIPLIERS[self.mode]
        return self.multiplier


class OperatorLayout:
    """Positions of every operator variable of one model instance.

    Order: G entries row-major, F entries, states m_t for t in {0} and every
    observed period, process noises w_t, observation noises v_t, forecasts
    f_t, and finally z unless the mode is unfair.  For n hidden dimensions
    and p observed periods that is n^2 + n + (p+1)n + pn + 2p (+1 with z)
    variables.
    """

    def __init__(self, hidden_dim: int, periods: tuple[int, ...], with_bound: bool):
        if not isinstance(hidden_dim, int) or hidden_dim < 1:
            raise ValueError(f"hidden_dim must be a positive integer, got {hidden_dim!r}")
        periods = tuple(int(t) for t in periods)
        if not periods:
            raise ValueError("layout needs at least one observed period")
        if any(t < 1 for t in periods) or list(periods) != sorted(set(periods)):
            raise ValueError(f"periods must be strictly increasing positive integers, got {periods!r}")
        self.hidden_dim = hidden_dim
        self.periods = periods
        self.with_bound = bool(with_bound)
        n = hidden_dim
        names: list[str] = []
        names += [self.g_name(i, j) for i in range(n) for j in range(n)]
        names += [self.f_coef_name(i) for i in range(n)]
        names += [self.state_name(t, i) for t in (0, *periods) for i in range(n)]
        names += [self.state_noise_name(t, i) for t in periods for i in range(n)]
        names += [self.obs_noise_name(t) for t in periods]
        names += [self.forecast_name(t) for t in periods]
        if self.with_bound:
            names.append(self.bound_name())
        self.varset: VariableSet = make_variables(names)

    @staticmethod
    def g_name(i: int, j: int) -> str:
        return f"G_{i}_{j}"

    @staticmethod
    def f_coef_name(i: int) -> str:
        return f"F_{i}"

    @staticmethod
    def state_name(t: int, i: int) -> str:
        return f"m_{t}_{i}"

    @staticmethod
    def state_noise_name(t: int, i: int) -> str:
        return f"w_{t}_{i}"

    @staticmethod
    def obs_noise_name(t: int) -> str:
        return f"v_{t}"

    @staticmethod
    def forecast_name(t: int) -> str:
        return f"f_{t}"

    @staticmethod
    def bound_name() -> str:
        return "z"

    @property
    def count(self) -> int:
        return self.varset.count


def _layout_for(data: TrajectorySet, spec: FairnessModelSpec) -> OperatorLayout:
    return OperatorLayout(
        hidden_dim=spec.hidden_dim,
        periods=data.observed_periods,
        with_bound=spec.mode != "unfair",
    )


def build_model(data, spec: FairnessModelSpec) -> NCPOPProblem:
    """Compile trajectories plus a fairness mode into a polynomial problem.

    Equalities chain the hidden state through consecutive observed periods
    (m at the first observed period follows from the free m_0) and tie each
    forecast to the state; inequalities depend on the mode as described in
    the module docstring.
    """
    data = as_trajectory_set(data)
    if not data:
        raise ValueError("cannot build a model from an empty trajectory set")
    layout = _layout_for(data, spec)
    vs = layout.varset
    n = layout.hidden_dim
    var = lambda name: Polynomial.variable(vs, name)

    g = [[var(layout.g_name(i, j)) for j in range(n)] for i in range(n)]
    f_coef = [var(layout.f_coef_name(i)) for i in range(n)]
    state = {t: [var(layout.state_name(t, i)) for i in range(n)] for t in (0, *layout.periods)}
    w_noise = {t: [var(layout.state_noise_name(t, i)) for i in range(n)] for t in layout.periods}
    v_noise = {t: var(layout.obs_noise_name(t)) for t in layout.periods}
    forecast = {t: var(layout.forecast_name(t)) for t in layout.periods}

    equalities: list[Polynomial] = []
    prev = 0
    for t in layout.periods:
        for i in range(n):
            step = state[t][i] - w_noise[t][i]
            for j in range(n):
                step = step - g[i][j] * state[prev][j]
            equalities.append(step)
        emit = forecast[t] - v_noise[t]
        for i in range(n):
            emit = emit - f_coef[i] * state[t][i]
        equalities.append(emit)
        prev = t

    def residual(s: str, i: str, t: int) -> Polynomial:
        return data.get(s, i, t) - forecast[t]

    lam = spec.resolved_multiplier()
    penalty = Polynomial.zero(vs)
    for t in layout.periods:
        penalty = penalty + v_noise[t] * v_noise[t]
    penalty = penalty * lam

    inequalities: list[Polynomial] = []
    if spec.mode == "unfair":
        objective = penalty
        for s in data.subgroups:
            for i in data.trajectories(s):
                for t, _ in sorted(data.series(s, i).items()):
                    r = residual(s, i, t)
                    objective = objective + r * r
    else:
        bound = var(layout.bound_name())
        objective = bound + penalty
        if spec.mode == "instant_fair":
            for s in data.subgroups:
                for i in data.trajectories(s):
                    for t in sorted(data.series(s, i)):
                        r = residual(s, i, t)
                        if spec.loss_encoding == "squared":
                            inequalities.append(bound - r * r)
                        else:
                            inequalities.append(bound - r)
                            inequalities.append(bound + r)
        else:  # subgroup_fair
            for s in data.subgroups:
                trajectories = data.trajectories(s)
                subgroup_term = Polynomial.zero(vs)
                for i in trajectories:
                    series = data.series(s, i)
                    weight = 1.0 / (len(trajectories) * len(series))
                    for t in sorted(series):
                        r = residual(s, i, t)
                        term = r * r if spec.loss_encoding == "squared" else r
                        subgroup_term = subgroup_term + term * weight
                if spec.loss_encoding == "squared":
                    inequalities.append(bound - subgroup_term)
                else:
                    inequalities.append(bound - subgroup_term)
                    inequalities.append(bound + subgroup_term)

    radius = spec.ball_radius
    if radius is None:
        radius = DEFAULT_BALL_SCALE * (1.0 + data.max_abs())

    return NCPOPProblem(
        varset=vs,
        objective=objective,
        inequalities=tuple(inequalities),
        equalities=tuple(equalities),
        ball_radius=radius,
    )


@dataclass(frozen=True)
class SolverSummary:
    status: str
    objective_value: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    wall_time: float

    @classmethod
    def from_solution(cls, solution: SDPSolution) -> "SolverSummary":
        return cls(**solution.summary())


@dataclass(frozen=True)
class FairSolveReport:
    """Point estimates read from the first-order moments of one solve."""

    mode: str
    hidden_dim: int
    forecasts: dict[int, float]
    state_estimates: dict[int, tuple[float, ...]]
    G_estimate: tuple[tuple[float, ...], ...]
    F_estimate: tuple[float, ...]
    z_value: float | None
    objective_value: float
    solver: SolverSummary
    flat: bool | None

    @property
    def periods(self) -> tuple[int, ...]:
        return tuple(sorted(self.forecasts))


def solve_fair(data, spec: FairnessModelSpec, solver_cfg: SolverConfig | None = None) -> FairSolveReport:
    """Build, relax at the configured order, solve, and read out estimates.

    A non-optimal solver status lands in the report rather than raising, so
    sweeps can record failures alongside successes.
    """
    data = as_trajectory_set(data)
    problem = build_model(data, spec)
    layout = _layout_for(data, spec)
    order = spec.relaxation_order
    sdp_problem = assemble_sdp(problem, order)
    solution = solve(sdp_problem, solver_cfg or SolverConfig())

    moments = moments_from_solution(layout.varset, order, solution.values)
    point = extract_first_order(moments, layout.varset)
    at = layout.varset.index
    n = layout.hidden_dim

    g_est = tuple(
        tuple(float(point[at(layout.g_name(i, j))]) for j in range(n)) for i in range(n)
    )
    f_est = tuple(float(point[at(layout.f_coef_name(i))]) for i in range(n))
    states = {
        t: tuple(float(point[at(layout.state_name(t, i))]) for i in range(n))
        for t in (0, *layout.periods)
    }
    forecasts = {t: float(point[at(layout.forecast_name(t))]) for t in layout.periods}
    z_value = float(point[at(layout.bound_name())]) if layout.with_bound else None
    flat = flatness_check(moments, layout.varset, order) if order >= 2 else None

    return FairSolveReport(
        mode=spec.mode,
        hidden_dim=n,
        forecasts=forecasts,
        state_estimates=states,
        G_estimate=g_est,
        F_estimate=f_est,
        z_value=z_value,
        objective_value=solution.objective_value,
        solver=SolverSummary.from_solution(solution),
        flat=flat,
    )


def forecast_next(report: FairSolveReport, steps: int) -> list[float]:
    """Roll the estimated dynamics forward from the last estimated state."""
    if not isinstance(steps, int) or steps < 1:
        raise ValueError(f"steps must be a positive integer, got {steps!r}")
    if report.solver.status != STATUS_OPTIMAL:
        raise ValueError(f"forecasting needs an optimal solve, report status is {report.solver.status!r}")
    g_est = np.asarray(report.G_estimate)
    f_est = np.asarray(report.F_estimate)
    state = np.asarray(report.state_estimates[report.periods[-1]])
    out: list[float] = []
    for _ in range(steps):
        state = g_est @ state
        out.append(float(f_est @ state))
    return out


class FairLDS(BaseEstimator):
    """Estimator interface over the fairness-aware system learner.

    fit(X) accepts a :class:`TrajectorySet` or any mapping from
    (subgroup, trajectory, period) to a scalar observation; predict(steps)
    rolls the learned dynamics past the last observed period.  Constructor
    parameters mirror :class:`FairnessModelSpec` plus solver controls.
    """

    def __init__(
        self,
        mode: str = "subgroup_fair",
        multiplier: float | None = None,
        hidden_dim: int = 1,
        loss_encoding: str = "squared",
        relaxation_order: int = 1,
        ball_radius: float | None = None,
        tolerance: float = 1e-6,
        max_iterations: int = 50000,
        scaling: bool = True,
    ):
        self.mode = mode
        self.multiplier = multiplier
        self.hidden_dim = hidden_dim
        self.loss_encoding = loss_encoding
        self.relaxation_order = relaxation_order
        self.ball_radius = ball_radius
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self.scaling = scaling

    def _spec(self) -> FairnessModelSpec:
        return FairnessModelSpec(
            mode=self.mode,
            multiplier=self.multiplier,
            hidden_dim=self.hidden_dim,
            loss_encoding=self.loss_encoding,
            relaxation_order=self.relaxation_order,
            ball_radius=self.ball_radius,
        )

    def fit(self, X, y=None):
        data = as_trajectory_set(X)
        config = SolverConfig(
            tolerance=self.tolerance,
            max_iterations=self.max_iterations,
            scaling=self.scaling,
        )
        report = solve_fair(data, self._spec(), config)
        self.report_ = report
        self.G_ = np.asarray(report.G_estimate)
        self.F_ = np.asarray(report.F_estimate)
        self.forecasts_ = dict(report.forecasts)
        self.z_ = report.z_value
        self.objective_ = report.objective_value
        self.status_ = report.solver.status
        return self

    def predict(self, steps: int = 1) -> np.ndarray:
        check_is_fitted(self, "report_")
        return np.asarray(forecast_next(self.report_, steps))
