import math
import pathlib

import numpy as np
import pytest

from ncfair.datagen import TrajectorySet
from ncfair.evalio import (
    CompasFilter,
    DegenerateDataError,
    EvalReport,
    TrajectoryCSVError,
    annuity_premium,
    compas_extract,
    estimate_noise_covariances,
    eval_report_from_dict,
    eval_report_to_dict,
    evaluate,
    fair_report_from_dict,
    fair_report_to_dict,
    load_json,
    load_rows_csv,
    load_trajectories_csv,
    nrmse,
    save_json,
    save_rows_csv,
    save_trajectories_csv,
    subgroup_mean,
    total_squared_loss,
)
from ncfair.fairlds import FairnessModelSpec, FairSolveReport, SolverSummary, solve_fair
from ncfair.sdp import SolverConfig

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


def make_report(forecasts, states, g=((0.0,),), f=(0.0,), status="optimal"):
    periods = sorted(forecasts)
    return FairSolveReport(
        mode="unfair",
        hidden_dim=len(f),
        forecasts=dict(forecasts),
        state_estimates=dict(states),
        G_estimate=g,
        F_estimate=f,
        z_value=None,
        objective_value=0.0,
        solver=SolverSummary(status, 0.0, 0.0, 0.0, 0.0, 1, 0.0),
        flat=None,
    )


def test_subgroup_mean_averages_trajectories_equally():
    data = TrajectorySet(
        {("a", "1", 1): 0.0, ("a", "1", 2): 10.0, ("a", "2", 1): 1.0}
    )
    # (mean of trajectory 1 + mean of trajectory 2) / 2, not the pooled mean
    assert subgroup_mean(data, "a") == pytest.approx(3.0)


def test_nrmse_unit_when_forecast_sits_at_the_mean():
    data = TrajectorySet({("a", "1", 1): 1.0, ("a", "1", 2): 3.0})
    assert nrmse(data, {1: 2.0, 2: 2.0}, "a") == pytest.approx(1.0)
    assert nrmse(data, {1: 1.0, 2: 3.0}, "a") == 0.0


def test_nrmse_degenerate_and_missing_forecast():
    flat = TrajectorySet({("a", "1", 1): 2.0, ("a", "1", 2): 2.0})
    with pytest.raises(DegenerateDataError):
        nrmse(flat, {1: 2.0, 2: 2.0}, "a")
    data = TrajectorySet({("a", "1", 1): 1.0, ("a", "1", 2): 3.0})
    with pytest.raises(ValueError, match="missing forecast"):
        nrmse(data, {1: 2.0}, "a")


def test_nrmse_is_affine_and_scale_invariant():
    rng = np.random.default_rng(13)
    for _ in range(20):
        values = {("a", "1", t): float(rng.normal()) for t in range(1, 6)}
        forecasts = {t: float(rng.normal()) for t in range(1, 6)}
        data = TrajectorySet(values)
        base = nrmse(data, forecasts, "a")
        shift = float(rng.normal())
        scale = float(rng.uniform(0.5, 3.0))
        shifted = TrajectorySet({k: v + shift for k, v in values.items()})
        assert nrmse(shifted, {t: f + shift for t, f in forecasts.items()}, "a") == pytest.approx(base)
        scaled = TrajectorySet({k: v * scale for k, v in values.items()})
        assert nrmse(scaled, {t: f * scale for t, f in forecasts.items()}, "a") == pytest.approx(base)


def test_total_squared_loss():
    data = TrajectorySet({("a", "1", 1): 1.0, ("b", "1", 1): 3.0})
    assert total_squared_loss(data, {1: 2.0}) == pytest.approx(2.0)
    with pytest.raises(ValueError, match="missing"):
        total_squared_loss(data, {})


def test_noise_covariances_from_alternating_residuals():
    # residuals +1, -1, +1, -1 around zero-mean: sample variance 4/3
    states = {0: (0.0,), 1: (1.0,), 2: (0.0,), 3: (1.0,), 4: (0.0,)}
    forecasts = {1: 2.0, 2: -1.0, 3: 2.0, 4: -1.0}
    report = make_report(forecasts, states, g=((1.0,),), f=(1.0,))
    v_hat, w_hat = estimate_noise_covariances(report)
    assert v_hat == pytest.approx(4.0 / 3.0)
    assert w_hat.shape == (1, 1)
    assert w_hat[0, 0] == pytest.approx(4.0 / 3.0)


def test_noise_covariances_preconditions():
    single = make_report({1: 0.0}, {0: (0.0,), 1: (0.0,)})
    with pytest.raises(ValueError, match="2 periods"):
        estimate_noise_covariances(single)
    failed = make_report(
        {1: 0.0, 2: 0.0}, {0: (0.0,), 1: (0.0,), 2: (0.0,)}, status="iteration_limit"
    )
    with pytest.raises(ValueError, match="optimal"):
        estimate_noise_covariances(failed)


def test_noise_covariances_from_a_real_solve():
    values = {("only", "1", t): 0.9**t for t in range(1, 6)}
    report = solve_fair(
        TrajectorySet(values),
        FairnessModelSpec(mode="unfair", multiplier=1.0),
        SolverConfig(tolerance=1e-8),
    )
    v_hat, w_hat = estimate_noise_covariances(report)
    assert math.isfinite(v_hat) and v_hat >= 0.0
    assert w_hat.shape == (1, 1)
    assert np.all(np.isfinite(w_hat))
    # matches a direct recomputation from the reported point estimates
    f_est = report.F_estimate[0]
    res = [report.forecasts[t] - f_est * report.state_estimates[t][0] for t in report.periods]
    assert v_hat == pytest.approx(float(np.var(res, ddof=1)))


def test_evaluate_combines_scores_and_covariances():
    data = TrajectorySet(
        {("a", "1", 1): 1.0, ("a", "1", 2): 3.0, ("b", "1", 1): 0.0, ("b", "1", 2): 4.0}
    )
    report = make_report(
        {1: 1.0, 2: 3.0}, {0: (0.0,), 1: (0.0,), 2: (0.0,)}
    )
    result = evaluate(data, report)
    assert result.nrmse["a"] == pytest.approx(0.0)
    assert result.nrmse["b"] == pytest.approx(0.5)
    assert result.gap == pytest.approx(0.5)
    assert result.means == {"a": 2.0, "b": 2.0}
    assert result.total_loss == pytest.approx(2.0)
    # zero dynamics make the state residuals exactly zero
    assert result.V_hat == pytest.approx(2.0)
    assert result.W_hat == ((0.0,),)


def test_evaluate_leaves_covariances_unset_when_not_estimable():
    data = TrajectorySet({("a", "1", 1): 1.0, ("a", "1", 2): 3.0})
    report = make_report(
        {1: 1.0, 2: 3.0},
        {0: (0.0,), 1: (0.0,), 2: (0.0,)},
        status="inaccurate",
    )
    result = evaluate(data, report)
    assert result.V_hat is None and result.W_hat is None


def test_annuity_premium_flat_survival():
    assert annuity_premium([100.0] * 10, 100.0, 0.0) == pytest.approx(10.0)
    assert annuity_premium([1.0] * 10, 1.0, 1.0) == pytest.approx(1.0 - 2.0**-10)
    assert annuity_premium([0.0] * 10, 5.0, 0.05) == 0.0


def test_annuity_premium_validation():
    with pytest.raises(ValueError):
        annuity_premium([1.0] * 9, 1.0, 0.0)
    with pytest.raises(ValueError):
        annuity_premium([1.0] * 10, 0.0, 0.0)
    with pytest.raises(ValueError):
        annuity_premium([-1.0] + [1.0] * 9, 1.0, 0.0)
    with pytest.raises(ValueError):
        annuity_premium([1.0] * 10, 1.0, -0.5)


def test_trajectory_csv_round_trip(tmp_path):
    rng = np.random.default_rng(59)
    for trial in range(10):
        obs = {}
        for s in ("x", "y"):
            for i in range(int(rng.integers(1, 3))):
                for t in sorted(rng.choice(np.arange(1, 9), size=3, replace=False).tolist()):
                    obs[(s, str(i), int(t))] = float(rng.normal())
        data = TrajectorySet(obs)
        path = tmp_path / f"t{trial}.csv"
        save_trajectories_csv(data, path)
        assert load_trajectories_csv(path) == data


def test_trajectory_csv_is_sorted_and_round_trip_exact(tmp_path):
    data = TrajectorySet({("b", "1", 2): 0.1, ("a", "9", 1): math.pi, ("a", "1", 3): -1.0})
    path = tmp_path / "sorted.csv"
    save_trajectories_csv(data, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "subgroup,trajectory,t,value"
    assert [line.split(",")[0] for line in lines[1:]] == ["a", "a", "b"]
    again = load_trajectories_csv(path)
    assert again.get("a", "9", 1) == math.pi  # 17 significant digits survive
    assert again == data


def test_empty_trajectory_csv_round_trip(tmp_path):
    path = tmp_path / "empty.csv"
    save_trajectories_csv(TrajectorySet({}), path)
    assert path.read_text() == "subgroup,trajectory,t,value\n"
    assert len(load_trajectories_csv(path)) == 0


@pytest.mark.parametrize(
    "body, fragment",
    [
        ("", "line 1"),
        ("sub,traj,t,value\n", "line 1"),
        ("subgroup,trajectory,t,value\na,1,2\n", "line 2: expected 4"),
        ("subgroup,trajectory,t,value\na,1,two,3.0\n", "line 2: period"),
        ("subgroup,trajectory,t,value\na,1,0,3.0\n", "line 2: period"),
        ("subgroup,trajectory,t,value\na,1,1,much\n", "line 2: value"),
        ("subgroup,trajectory,t,value\na,1,1,inf\n", "line 2: value"),
        ("subgroup,trajectory,t,value\n,1,1,3.0\n", "line 2: empty"),
        ("subgroup,trajectory,t,value\na,1,1,3.0\na,1,1,4.0\n", "line 3: duplicate"),
    ],
)
def test_trajectory_csv_parse_errors(tmp_path, body, fragment):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(TrajectoryCSVError, match=fragment):
        load_trajectories_csv(path)


def test_rows_csv_round_trip(tmp_path):
    rows = [
        {"mode": "unfair", "T": 3, "value": 0.25},
        {"mode": "subgroup_fair", "T": 4, "value": 1.0 / 3.0},
    ]
    path = tmp_path / "rows.csv"
    save_rows_csv(rows, path)
    loaded = load_rows_csv(path)
    assert loaded[0]["mode"] == "unfair"
    assert int(loaded[1]["T"]) == 4
    assert float(loaded[1]["value"]) == 1.0 / 3.0


def test_rows_csv_rejects_empty_and_ragged(tmp_path):
    with pytest.raises(ValueError, match="empty"):
        save_rows_csv([], tmp_path / "no.csv")
    with pytest.raises(ValueError, match="differ"):
        save_rows_csv([{"a": 1}, {"b": 2}], tmp_path / "ragged.csv")
    bad = tmp_path / "extra.csv"
    bad.write_text("a,b\n1,2,3\n")
    with pytest.raises(TrajectoryCSVError, match="line 2"):
        load_rows_csv(bad)


def test_compas_extraction_bins_and_filters():
    data = compas_extract(FIXTURES / "compas_synthetic.csv")
    expected = TrajectorySet(
        {
            ("African-American", "M1", 1): 5.0,  # days 5 and 15 share the first window
            ("African-American", "M1", 3): 8.0,
            ("African-American", "M2", 1): 7.0,
            ("Caucasian", "M1", 1): 9.0,  # parenthesised degree is normalised
            ("Caucasian", "M1", 2): 3.0,
            ("Caucasian", "M2", 2): 5.0,
        }
    )
    assert data == expected
    assert data.subgroups == ["African-American", "Caucasian"]
    assert data.trajectories("African-American") == ["M1", "M2"]


def test_compas_filter_overrides(tmp_path):
    flt = CompasFilter(max_priors=6, period_days=10)
    data = compas_extract(FIXTURES / "compas_synthetic.csv", flt)
    # looser priors cut re-admits the priors-5 row into the first window
    assert data.get("African-American", "M1", 1) == pytest.approx(4.0)
    assert ("African-American", "M1", 2) in data  # day 15 under 10-day windows
    with pytest.raises(ValueError):
        CompasFilter(age_range=(50, 20))
    with pytest.raises(ValueError):
        CompasFilter(period_days=0)


def test_compas_column_map(tmp_path):
    path = tmp_path / "renamed.csv"
    path.write_text(
        "ethnicity,sex,age,priors_count,c_charge_degree,two_year_recid,"
        "r_charge_degree,r_days_from_arrest,decile_score\n"
        "Caucasian,Male,30,0,M,1,M1,5,6\n"
    )
    data = compas_extract(path, column_map={"race": "ethnicity"})
    assert data.get("Caucasian", "M1", 1) == 6.0
    with pytest.raises(ValueError, match="unknown column-map"):
        compas_extract(path, column_map={"ethnic": "ethnicity"})


def test_compas_missing_column_and_bad_score(tmp_path):
    missing = tmp_path / "missing.csv"
    missing.write_text("race,sex\nCaucasian,Male\n")
    with pytest.raises(ValueError, match="missing mapped columns"):
        compas_extract(missing)
    bad = tmp_path / "badscore.csv"
    bad.write_text(
        "race,sex,age,priors_count,c_charge_degree,two_year_recid,"
        "r_charge_degree,r_days_from_arrest,decile_score\n"
        "Caucasian,Male,30,0,M,1,M1,5,high\n"
    )
    with pytest.raises(ValueError, match="line 2"):
        compas_extract(bad)


def test_compas_empty_extraction_warns(tmp_path):
    path = tmp_path / "none.csv"
    path.write_text(
        "race,sex,age,priors_count,c_charge_degree,two_year_recid,"
        "r_charge_degree,r_days_from_arrest,decile_score\n"
        "Caucasian,Female,30,0,M,1,M1,5,6\n"
    )
    with pytest.warns(UserWarning, match="no rows"):
        data = compas_extract(path)
    assert len(data) == 0


def test_fair_report_json_round_trip(tmp_path):
    report = make_report(
        {1: 0.5, 2: -1.5},
        {0: (0.0,), 1: (0.25,), 2: (0.5,)},
        g=((0.9,),),
        f=(1.1,),
    )
    payload = fair_report_to_dict(report)
    assert fair_report_from_dict(payload) == report
    path = tmp_path / "report.json"
    save_json(payload, path)
    assert fair_report_from_dict(load_json(path)) == report
    # deterministic bytes: sorted keys, fixed indentation
    first = path.read_bytes()
    save_json(payload, path)
    assert path.read_bytes() == first
    assert first.endswith(b"\n")


def test_eval_report_json_round_trip():
    report = EvalReport(
        nrmse={"a": 0.5, "b": 1.0},
        means={"a": 2.0, "b": 3.0},
        gap=0.5,
        total_loss=4.0,
        V_hat=None,
        W_hat=((1.0, 0.0), (0.0, 1.0)),
    )
    assert eval_report_from_dict(eval_report_to_dict(report)) == report
    none_cov = EvalReport({"a": 1.0}, {"a": 0.0}, 0.0, 1.0, None, None)
    assert eval_report_from_dict(eval_report_to_dict(none_cov)) == none_cov
