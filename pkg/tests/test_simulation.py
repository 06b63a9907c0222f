import numpy as np
import pytest

from rmtportfolio import InputError
from rmtportfolio.moments import sample_cov
from rmtportfolio.portfolio import Moments
from rmtportfolio.simulation import (
    METHODS,
    STATS,
    ExperimentSpec,
    Scenario,
    ScenarioSpec,
    calibrate,
    calibrate_sample,
    generate_scenario,
    relative_error,
    run_experiment,
    simulate_returns,
    trial_rng,
)


def identity_scenario(M):
    return Scenario(Moments(np.zeros(M), np.eye(M)), np.eye(M), np.zeros(M))


def test_uncorrelated_scenario_is_diagonal():
    sc = generate_scenario(ScenarioSpec(M=8, correlation_strength=0.0))
    np.testing.assert_array_equal(sc.truth.sigma, np.diag(np.diag(sc.truth.sigma)))


def test_degenerate_band():
    sc = generate_scenario(ScenarioSpec(M=5, vol_band=(0.2, 0.2), periods_per_year=252))
    np.testing.assert_allclose(np.diag(sc.truth.sigma), (0.2 / np.sqrt(252)) ** 2, rtol=1e-14)


def test_vol_band_respected():
    sc = generate_scenario(ScenarioSpec(M=50, vol_band=(0.2, 0.3)))
    vols = np.sqrt(252 * np.diag(sc.truth.sigma))
    assert np.all(vols >= 0.2 - 1e-8) and np.all(vols <= 0.3 + 1e-8)
    assert np.linalg.eigvalsh(sc.truth.sigma)[0] > 0.0
    np.testing.assert_array_equal(sc.truth.mu, np.zeros(50))
    np.testing.assert_array_equal(sc.sigma0, np.eye(50))


def test_scenario_options():
    sc = generate_scenario(ScenarioSpec(M=6, mu_scale=0.1, sigma0_kind="diagonal"))
    assert np.linalg.norm(sc.truth.mu) == pytest.approx(0.1, rel=1e-14)
    np.testing.assert_array_equal(sc.sigma0, np.diag(np.diag(sc.truth.sigma)))
    np.testing.assert_allclose(np.diag(sc.R), 1.0, rtol=1e-12)


def test_scenario_digest_is_seeded():
    a = generate_scenario(ScenarioSpec(M=10, seed=3))
    b = generate_scenario(ScenarioSpec(M=10, seed=3))
    c = generate_scenario(ScenarioSpec(M=10, seed=4))
    assert a.digest() == b.digest() != c.digest()


@pytest.mark.parametrize(
    "kwargs",
    [
        {"vol_band": (0.3, 0.2)},
        {"vol_band": (0.0, 0.2)},
        {"correlation_strength": 1.0},
        {"sigma0_kind": "full"},
        {"M": 0},
        {"periods_per_year": 0},
    ],
)
def test_scenario_spec_validation(kwargs):
    with pytest.raises(InputError):
        ScenarioSpec(**kwargs)


def test_zero_covariance_returns_mean():
    truth = Moments(np.array([0.1, -0.2]), np.zeros((2, 2)))
    Y = simulate_returns(truth, 5, 0)
    np.testing.assert_array_equal(Y, np.tile(truth.mu[:, None], 5))


def test_simulated_covariance_lln():
    sigma = np.array([[2.0, 0.6], [0.6, 1.0]])
    Y = simulate_returns(Moments(np.zeros(2), sigma), 10**6, 12)
    np.testing.assert_allclose(sample_cov(Y), sigma, rtol=0.01, atol=0.01 * 0.6)


def test_simulate_returns_deterministic():
    truth = generate_scenario(ScenarioSpec(M=4)).truth
    a = simulate_returns(truth, 30, 9)
    b = simulate_returns(truth, 30, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)


def test_trial_streams_are_distinct():
    x = trial_rng(0, 20, 0).standard_normal(4)
    assert not np.array_equal(x, trial_rng(0, 20, 1).standard_normal(4))
    assert not np.array_equal(x, trial_rng(0, 40, 0).standard_normal(4))
    np.testing.assert_array_equal(x, trial_rng(0, 20, 0).standard_normal(4))


def test_relative_error_metric():
    assert relative_error(2.0, 1.5) == pytest.approx(25.0)
    assert relative_error(2.0, 2.5) == pytest.approx(25.0)


def test_isotropic_large_sample_sanity():
    M, N = 10, 4000
    spec = ExperimentSpec(N_grid=(N,), trials=1, rho=0.05, t=1.0)
    report = run_experiment(spec, identity_scenario(M))
    rec = report.records[0]
    assert rec.sigma_p**2 == pytest.approx((1 + M / N) / M, rel=0.02)
    for m in METHODS:
        assert rec.rel_error[m] < 3.0


def test_aggregate_shape_single_trial():
    spec = ExperimentSpec(scenario=ScenarioSpec(M=10), N_grid=(30,), trials=1)
    rows = run_experiment(spec).aggregate()
    assert len(rows) == len(METHODS) * len(STATS) == 12
    assert [(r["method"], r["stat"]) for r in rows[:4]] == [("ADE", s) for s in STATS]
    assert all(r["relative_error_pct"] >= 0.0 for r in rows)


def test_flagged_trial_accounting():
    spec = ExperimentSpec(scenario=ScenarioSpec(M=50, periods_per_year=1), N_grid=(20, 100), trials=6, rho=1e-15)
    report = run_experiment(spec)
    assert report.n_flagged(20) > 0
    for N in spec.N_grid:
        assert len(report.used(N)) + report.n_flagged(N) == spec.trials
    rows = [r for r in report.aggregate() if r["N"] == 20]
    assert all(r["trials_used"] + r["trials_flagged"] == 6 for r in rows)


def test_determinism_and_thread_independence():
    base = dict(scenario=ScenarioSpec(M=12), N_grid=(16, 24), trials=8, seed=5)
    a = run_experiment(ExperimentSpec(**base, threads=1))
    b = run_experiment(ExperimentSpec(**base, threads=3))
    assert a.records == b.records
    assert a.aggregate() == b.aggregate()


def test_trial_records_do_not_depend_on_trial_count():
    base = dict(scenario=ScenarioSpec(M=12), N_grid=(20,), seed=2)
    short = run_experiment(ExperimentSpec(**base, trials=3))
    longer = run_experiment(ExperimentSpec(**base, trials=7))
    assert short.records == longer.records[:3]


@pytest.mark.parametrize(
    "kwargs",
    [
        {"trials": 0},
        {"N_grid": (1,)},
        {"N_grid": ()},
        {"calibrate": "rho"},
        {"calibrate": "sideways"},
        {"rho": 1.0},
        {"t": 2.5},
        {"threads": -1},
    ],
)
def test_experiment_spec_validation(kwargs):
    with pytest.raises(InputError):
        ExperimentSpec(**kwargs)


def test_single_point_grid_is_selected():
    sc = generate_scenario(ScenarioSpec(M=10))
    Y = simulate_returns(sc.truth, 30, 1)
    res = calibrate_sample(sc, Y, [(0.2, 0.75)])
    assert res.chosen == res.oracle == (0.2, 0.75)


def test_correct_prior_favours_heavy_shrinkage():
    """With Sigma0 = Sigma the largest shrinkage should win almost always."""
    sc = ScenarioSpec(M=50, periods_per_year=1, correlation_strength=0.0, sigma0_kind="diagonal")
    spec = ExperimentSpec(scenario=sc, N_grid=(50,), trials=100, calibrate="rho",
                          rho_grid=(0.05, 0.1, 0.2, 0.5), seed=1)
    report = calibrate(spec)
    chosen = np.array([r.chosen[0] for r in report.results])
    assert np.mean(chosen == 0.5) >= 0.9
    assert all(r.oracle[0] == 0.5 for r in report.results)


def test_calibration_regret():
    sc = ScenarioSpec(M=50, periods_per_year=1)
    spec = ExperimentSpec(scenario=sc, N_grid=(100,), trials=40, calibrate="both",
                          rho_grid=(0.02, 0.05, 0.1, 0.2, 0.5), t_grid=(0.5, 1.0, 1.5), seed=3)
    report = calibrate(spec)
    summary = report.summary(100)
    assert summary["trials_used"] == 40
    assert summary["regret_median"] <= 0.10
    surface = report.surfaces(100)
    assert len(surface) == 15
    assert all(row["realized_variance"] > 0 for row in surface)


def test_calibrate_records_chosen_parameters():
    spec = ExperimentSpec(scenario=ScenarioSpec(M=10, periods_per_year=1), N_grid=(30,), trials=4,
                          calibrate="t", t_grid=(0.5, 1.0), seed=0)
    report = run_experiment(spec)
    assert {r.rho for r in report.records} == {0.05}
    assert {r.t for r in report.records} <= {0.5, 1.0}


def test_calibrate_requires_grid():
    with pytest.raises(InputError):
        calibrate(ExperimentSpec(scenario=ScenarioSpec(M=5), N_grid=(10,), trials=1))
