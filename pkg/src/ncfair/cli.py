"""Command-line pipeline: generate biased data, solve, sweep, bench, extract.

Exit codes: 0 on success, 2 on usage or input errors, 3 when the solver
finishes with a non-optimal status (artifacts are still written).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from statistics import mean

import click
import numpy as np

from .datagen import BiasConfig, TrajectorySet, apply_bias, generate_benchmark_dataset
from .evalio import (
    TrajectoryCSVError,
    compas_extract,
    fair_report_to_dict,
    load_trajectories_csv,
    nrmse,
    save_json,
    save_rows_csv,
    save_trajectories_csv,
)
from .fairlds import LOSS_ENCODINGS, MODES, FairnessModelSpec, build_model, solve_fair
from .relaxation import assemble_sdp, moment_count
from .sdp import STATUS_OPTIMAL, SolverConfig, solve

__all__ = ["main", "RunConfig", "sweep_ground_set", "run_sweep", "run_bench"]

_BIAS_STREAM = 101  # keeps biasing draws independent of generation draws


def _child_seed(seed: int, *stream: int) -> int:
    return int(np.random.SeedSequence([seed, *stream]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class RunConfig:
    """Solver-facing slice of a command invocation."""

    seed: int = 0
    mode: str = "subgroup_fair"
    multiplier: float | None = None
    hidden_dim: int = 1
    loss_encoding: str = "squared"
    order: int = 1
    ball_radius: float | None = None
    tolerance: float = 1e-6
    max_iterations: int = 50000

    def model_spec(self) -> FairnessModelSpec:
        return FairnessModelSpec(
            mode=self.mode,
            multiplier=self.multiplier,
            hidden_dim=self.hidden_dim,
            loss_encoding=self.loss_encoding,
            relaxation_order=self.order,
            ball_radius=self.ball_radius,
        )

    def solver_config(self) -> SolverConfig:
        return SolverConfig(tolerance=self.tolerance, max_iterations=self.max_iterations)


def _usage(exc: Exception) -> click.UsageError:
    return click.UsageError(str(exc))


def _seed_option(fn):
    return click.option(
        "--seed",
        type=click.IntRange(0),
        default=0,
        show_default=True,
        envvar="NCFAIR_SEED",
        help="Random seed; the NCFAIR_SEED environment variable is the fallback.",
    )(fn)


def _solver_options(fn):
    fn = click.option("--tolerance", type=float, default=1e-6, show_default=True)(fn)
    fn = click.option("--max-iterations", type=click.IntRange(1), default=50000, show_default=True)(fn)
    return fn


def _parse_beta_grid(text: str) -> list[float]:
    text = (text or "").strip()
    if not text:
        raise click.UsageError("beta grid is empty")
    values: list[float]
    try:
        if ":" in text:
            lo_s, hi_s, step_s = text.split(":")
            lo, hi, step = float(lo_s), float(hi_s), float(step_s)
            if step <= 0 or hi < lo:
                raise ValueError
            count = int(round((hi - lo) / step)) + 1
            values = [round(lo + i * step, 10) for i in range(count) if lo + i * step <= hi + 1e-9]
        else:
            values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise click.UsageError(f"cannot parse beta grid {text!r}; use 'lo:hi:step' or a comma list") from None
    if not values:
        raise click.UsageError("beta grid is empty")
    for beta in values:
        if not 0.0 <= beta <= 1.0:
            raise click.UsageError(f"retention probability {beta} outside [0, 1]")
    return values


def _parse_modes(text: str) -> list[str]:
    modes = [tok.strip() for tok in (text or "").split(",") if tok.strip()]
    if not modes:
        raise click.UsageError("mode list is empty")
    for mode in modes:
        if mode not in MODES:
            raise click.UsageError(f"unknown mode {mode!r}; choose from {', '.join(MODES)}")
    return modes


def _parse_column_map(text: str | None) -> dict[str, str]:
    if not text:
        return {}
    out: dict[str, str] = {}
    for pair in text.split(","):
        pair = pair.strip()
        if not pair:
            continue
        if "=" not in pair:
            raise click.UsageError(f"column-map entries must be field=column, got {pair!r}")
        field, column = pair.split("=", 1)
        out[field.strip()] = column.strip()
    return out


# -- reusable pipeline pieces (also driven by the test suite) -------------


def sweep_ground_set(seed: int, horizon: int = 20) -> TrajectorySet:
    """Benchmark ground set with the advantaged subgroup trimmed to two
    trajectories, so both subgroups enter the sweep at equal size."""
    full = generate_benchmark_dataset(seed=seed, horizon=horizon)
    drop = full.trajectories("advantaged")[-1]
    return full.subset(lambda s, i, t: not (s == "advantaged" and i == drop))


def run_sweep(
    ground: TrajectorySet,
    betas: list[float],
    repeats: int,
    modes: list[str],
    seed: int,
    config: RunConfig | None = None,
) -> list[dict]:
    """Bias-and-solve grid.  Each (beta, repeat) cell thins the disadvantaged
    subgroup once and runs every requested mode on the same biased set;
    accuracy is scored against the full ground set."""
    config = config or RunConfig(seed=seed)
    rows: list[dict] = []
    for b_idx, beta in enumerate(betas):
        for rep in range(repeats):
            bias = BiasConfig(
                beta={"disadvantaged": beta},
                seed=_child_seed(seed, _BIAS_STREAM, b_idx, rep),
            )
            biased = apply_bias(ground, bias)
            for mode in modes:
                spec = FairnessModelSpec(
                    mode=mode,
                    multiplier=config.multiplier,
                    hidden_dim=config.hidden_dim,
                    loss_encoding=config.loss_encoding,
                    relaxation_order=config.order,
                    ball_radius=config.ball_radius,
                )
                report = solve_fair(biased, spec, config.solver_config())
                advantaged = nrmse(ground, report.forecasts, "advantaged")
                disadvantaged = nrmse(ground, report.forecasts, "disadvantaged")
                rows.append(
                    {
                        "mode": mode,
                        "beta_d": beta,
                        "repeat": rep,
                        "nrmse_a": advantaged,
                        "nrmse_d": disadvantaged,
                        "gap": abs(disadvantaged - advantaged),
                    }
                )
    rows.sort(key=lambda r: (r["mode"], r["beta_d"], r["repeat"]))
    return rows


def run_bench(
    horizons: list[int],
    modes: list[str],
    seed: int,
    config: RunConfig | None = None,
    repeats: int = 3,
) -> list[dict]:
    """Relaxation-size and wall-time table over horizons; each cell re-solves
    the same SDP ``repeats`` times and reports the mean time."""
    config = config or RunConfig(seed=seed)
    rows: list[dict] = []
    for mode in sorted(modes):
        for horizon in sorted(horizons):
            data = generate_benchmark_dataset(seed=seed, horizon=horizon)
            spec = FairnessModelSpec(mode=mode, relaxation_order=config.order)
            problem = build_model(data, spec)
            sdp_problem = assemble_sdp(problem, config.order)
            times = [
                solve(sdp_problem, config.solver_config()).wall_time for _ in range(repeats)
            ]
            rows.append(
                {
                    "mode": mode,
                    "T": horizon,
                    "moment_count": moment_count(problem.varset.count, config.order),
                    "sdp_dim": sdp_problem.blocks[0].dim,
                    "wall_time": mean(times),
                }
            )
    return rows


# -- commands --------------------------------------------------------------


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def main() -> None:
    """Fairness-aware learning of subgroup-blind linear dynamical systems."""


@main.command("gen")
@_seed_option
@click.option("--out", type=click.Path(dir_okay=False, writable=True), required=True)
@click.option("--beta-a", type=click.FloatRange(0.0, 1.0), default=1.0, show_default=True, help="Advantaged retention probability.")
@click.option("--beta-d", type=click.FloatRange(0.0, 1.0), default=1.0, show_default=True, help="Disadvantaged retention probability.")
@click.option("--horizon", type=click.IntRange(1), default=20, show_default=True)
@click.option("--paper-defaults", is_flag=True, help="Pin the published benchmark setup (horizon 20, 3 + 2 trajectories).")
def cmd_gen(seed: int, out: str, beta_a: float, beta_d: float, horizon: int, paper_defaults: bool) -> None:
    """Generate the two-subgroup benchmark set, thin it, write the CSV."""
    if paper_defaults:
        horizon = 20
    full = generate_benchmark_dataset(seed=seed, horizon=horizon)
    bias = BiasConfig(
        beta={"advantaged": beta_a, "disadvantaged": beta_d},
        seed=_child_seed(seed, _BIAS_STREAM),
    )
    biased = apply_bias(full, bias)
    save_trajectories_csv(biased, out)
    click.echo(f"wrote {len(biased)} of {len(full)} observations to {out}")


@main.command("solve")
@_seed_option
@_solver_options
@click.option("--data", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--mode", type=click.Choice(MODES), default="subgroup_fair", show_default=True)
@click.option("--lambda", "multiplier", type=float, default=None, help="Noise penalty multiplier; defaults depend on mode.")
@click.option("--order", type=click.IntRange(1), default=1, show_default=True, help="Relaxation order.")
@click.option("--hidden-dim", type=click.IntRange(1), default=1, show_default=True)
@click.option("--loss-encoding", type=click.Choice(LOSS_ENCODINGS), default="squared", show_default=True)
@click.option("--ball-radius", type=float, default=None)
@click.option("--out", type=click.Path(dir_okay=False, writable=True), required=True)
def cmd_solve(seed, tolerance, max_iterations, data, mode, multiplier, order, hidden_dim, loss_encoding, ball_radius, out):
    """Fit one model to a trajectory CSV and write the JSON report."""
    try:
        trajectories = load_trajectories_csv(data)
        config = RunConfig(
            seed=seed,
            mode=mode,
            multiplier=multiplier,
            hidden_dim=hidden_dim,
            loss_encoding=loss_encoding,
            order=order,
            ball_radius=ball_radius,
            tolerance=tolerance,
            max_iterations=max_iterations,
        )
        spec = config.model_spec()
    except (TrajectoryCSVError, ValueError) as exc:
        raise _usage(exc) from exc
    report = solve_fair(trajectories, spec, config.solver_config())
    save_json(fair_report_to_dict(report), out)
    click.echo(
        f"status {report.solver.status}; objective {report.objective_value:.6g}; report at {out}"
    )
    if report.solver.status != STATUS_OPTIMAL:
        sys.exit(3)


@main.command("sweep")
@_seed_option
@_solver_options
@click.option("--beta-grid", default="0.5:0.9:0.05", show_default=True, help="Comma list or lo:hi:step grid of disadvantaged retention probabilities.")
@click.option("--repeats", type=click.IntRange(1), default=5, show_default=True)
@click.option("--modes", default=",".join(MODES), show_default=True)
@click.option("--horizon", type=click.IntRange(1), default=20, show_default=True)
@click.option("--order", type=click.IntRange(1), default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, writable=True), required=True)
def cmd_sweep(seed, tolerance, max_iterations, beta_grid, repeats, modes, horizon, order, out):
    """Accuracy-vs-bias grid; one CSV row per (mode, beta, repeat) cell."""
    betas = _parse_beta_grid(beta_grid)
    mode_list = _parse_modes(modes)
    config = RunConfig(seed=seed, order=order, tolerance=tolerance, max_iterations=max_iterations)
    ground = sweep_ground_set(seed, horizon)
    rows = run_sweep(ground, betas, repeats, mode_list, seed, config)
    save_rows_csv(rows, out)
    click.echo(f"wrote {len(rows)} sweep rows to {out}")


@main.command("bench")
@_seed_option
@_solver_options
@click.option("--horizons", default="2,3,4,5,6,7,8,9,10", show_default=True)
@click.option("--modes", default="subgroup_fair", show_default=True)
@click.option("--order", type=click.IntRange(1), default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, writable=True), required=True)
def cmd_bench(seed, tolerance, max_iterations, horizons, modes, order, out):
    """Relaxation sizes and solve times as the horizon grows."""
    try:
        horizon_list = [int(tok) for tok in horizons.split(",") if tok.strip()]
    except ValueError:
        raise click.UsageError(f"cannot parse horizons {horizons!r}") from None
    if not horizon_list:
        raise click.UsageError("horizon list is empty")
    for horizon in horizon_list:
        if horizon < 2:
            raise click.UsageError(f"horizons must be at least 2, got {horizon}")
    mode_list = _parse_modes(modes)
    config = RunConfig(seed=seed, order=order, tolerance=tolerance, max_iterations=max_iterations)
    rows = run_bench(horizon_list, mode_list, seed, config)
    save_rows_csv(rows, out)
    click.echo(f"wrote {len(rows)} bench rows to {out}")


@main.command("compas")
@_seed_option
@_solver_options
@click.option("--csv", "csv_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--column-map", default=None, help="field=column overrides, comma separated.")
@click.option("--mode", type=click.Choice(MODES), default="subgroup_fair", show_default=True)
@click.option("--lambda", "multiplier", type=float, default=None)
@click.option("--order", type=click.IntRange(1), default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, writable=True), required=True, help="Output prefix; writes <out>.trajectories.csv and <out>.report.json.")
def cmd_compas(seed, tolerance, max_iterations, csv_path, column_map, mode, multiplier, order, out):
    """Extract recidivism-score trajectories and fit one model to them."""
    columns = _parse_column_map(column_map)
    try:
        data = compas_extract(csv_path, column_map=columns)
    except ValueError as exc:
        raise _usage(exc) from exc
    if not data:
        raise click.UsageError("no rows passed the filter; nothing to solve")
    save_trajectories_csv(data, f"{out}.trajectories.csv")
    config = RunConfig(
        seed=seed, mode=mode, multiplier=multiplier, order=order,
        tolerance=tolerance, max_iterations=max_iterations,
    )
    report = solve_fair(data, config.model_spec(), config.solver_config())
    save_json(fair_report_to_dict(report), f"{out}.report.json")
    click.echo(
        f"{len(data)} observations across {sum(len(data.trajectories(s)) for s in data.subgroups)} trajectories; "
        f"status {report.solver.status}; artifacts at {out}.*"
    )
    if report.solver.status != STATUS_OPTIMAL:
        sys.exit(3)


if __name__ == "__main__":
    main()
