import numpy as np
import pytest
from scipy.stats import kstest

from belavkin.errors import InvalidInputError
from belavkin.stats import (
    COUNTING_FUNCTIONALS,
    DIFFUSIVE_FUNCTIONALS,
    bonferroni_threshold,
    counting_quadratic_variation,
    censored_ks,
    counting_ito_check,
    ensemble_mean,
    master_agreement,
    martingale_tests,
    quadratic_variation_check,
    rows_to_csv,
    scaled_ito_check,
    zscore,
)


def test_identical_paths_zero_stderr():
    x = np.tile(np.array([[0.3, 0.1 + 0.2j]]), (50, 1))
    mean, se = ensemble_mean(x)
    assert np.array_equal(mean, x[0])
    assert np.all(se == 0)


def test_stderr_value(rng):
    x = rng.normal(size=400)
    _, se = ensemble_mean(x)
    assert se == pytest.approx(x.std(ddof=1) / 20)
    with pytest.raises(InvalidInputError):
        ensemble_mean(x[:1])


def test_complex_stderr_split(rng):
    x = rng.normal(size=1000) + 3j * rng.normal(size=1000)
    _, se = ensemble_mean(x)
    assert se.imag == pytest.approx(3 * se.real, rel=0.15)


def test_zscore_handles_exact_zeros():
    assert zscore(0.0, 0.0) == 0
    assert zscore(1e-3, 1e-3) == pytest.approx(1.0)
    zr, zi = zscore(np.array([0j, 1 + 2j]), np.array([0j, 1 + 1j]))
    assert zr.tolist() == [0.0, 1.0] and zi.tolist() == [0.0, 2.0]


def test_master_agreement_constant_paths():
    ref = np.array([np.diag([0.0, 1.0]), np.diag([0.2, 0.8])], dtype=complex)
    states = np.tile(ref, (10, 1, 1, 1))
    agg = master_agreement(states, ref)
    assert agg["max_abs_z"] == 0 and agg["max_stderr"] == 0
    agg = master_agreement(states, ref + 1e-3)
    assert agg["max_abs_z"] == np.inf


def test_bonferroni():
    assert bonferroni_threshold(1) == pytest.approx(3.0)
    assert bonferroni_threshold(20) > bonferroni_threshold(2) > 3.0


def test_martingale_deterministic_zero():
    times = np.array([0.0, 0.5, 1.0, 2.0])
    zeros = np.zeros((100, 4))
    res = martingale_tests(times, zeros, zeros, functionals=DIFFUSIVE_FUNCTIONALS)
    assert res["max_abs_z"] == 0 and res["within_3"]
    assert res["n_tests"] == 3 + 2 * 3


def test_martingale_on_brownian_motion(rng):
    times = np.array([0.0, 0.5, 1.0, 2.0])
    inc = rng.normal(size=(10_000, 3)) * np.sqrt(np.diff(times))
    w = np.concatenate([np.zeros((10_000, 1)), np.cumsum(inc, axis=1)], axis=1)
    assert martingale_tests(times, w, w, functionals=DIFFUSIVE_FUNCTIONALS)["within_3"]
    drifted = w + 0.1 * times
    assert not martingale_tests(times, drifted, drifted, functionals=DIFFUSIVE_FUNCTIONALS)["within_3"]


def test_martingale_compensated_poisson(rng):
    times = np.array([0.0, 0.5, 1.0, 2.0])
    n = np.concatenate([np.zeros((10_000, 1)), np.cumsum(rng.poisson(2.0 * np.diff(times), size=(10_000, 3)), axis=1)], axis=1)
    m = n - 2.0 * times
    assert martingale_tests(times, m, n, functionals=COUNTING_FUNCTIONALS)["within_3"]


def test_martingale_unknown_time():
    with pytest.raises(InvalidInputError):
        martingale_tests(np.array([0.0, 1.0]), np.zeros((5, 2)), np.zeros((5, 2)), pairs=((0.5, 1.0),))


def test_censored_ks_matches_scipy_without_censoring(rng):
    x = rng.exponential(size=3000)
    cdf = lambda t: 1 - np.exp(-t)  # noqa: E731
    assert censored_ks(x, cdf) == pytest.approx(kstest(x, cdf).statistic, abs=1e-12)


def test_censored_ks(rng):
    x = rng.exponential(size=10_000)
    x[x > 2.0] = np.nan
    assert censored_ks(x, lambda t: 1 - np.exp(-t), 2.0) < 0.02
    assert censored_ks(x, lambda t: 1 - np.exp(-2 * t), 2.0) > 0.2


def test_quadratic_variation(rng):
    grid = np.linspace(0, 2, 2001)
    w = np.concatenate([[0], np.cumsum(np.sqrt(1e-3) * rng.normal(size=2000))])
    assert quadratic_variation_check(grid, w)["ok"]
    assert not quadratic_variation_check(grid, 2 * w)["ok"]


def test_ito_checks():
    assert counting_ito_check([0, 0, 1, 1, 2])
    assert not counting_ito_check([0, 2])
    grid = np.linspace(0, 1, 11)
    counts = np.array([0, 0, 1, 1, 1, 2, 2, 3, 3, 3, 3])
    res = scaled_ito_check(grid, counts, 0.5)
    assert res["binary_steps"] and res["reduced_residual"] < 1e-15 and res["full_residual"] < 1e-15


def test_rows_to_csv_round_trip_digits():
    text = rows_to_csv(["a", "b"], [[0.1, "x"], [1 / 3, "y"]])
    lines = text.splitlines()
    assert lines[0] == "a,b"
    assert float(lines[2].split(",")[0]) == 1 / 3
    assert rows_to_csv(["a"], [[0.1]]) == rows_to_csv(["a"], [[0.1]])


def test_predictable_stderr_for_rare_jumps(rng):
    # 40 of 1e4 paths have N_s = 1 and none of them jumps again on (s, t]:
    # the sample variance of (M_t - M_s) N_s is nearly zero, <M> is not
    n, rate = 10_000, 0.01
    times = np.array([0.0, 0.5, 1.0])
    n_s = np.zeros(n)
    n_s[rng.choice(n, 40, replace=False)] = 1.0
    counts = np.stack([np.zeros(n), n_s, n_s], axis=1)
    comp = np.stack([np.zeros(n), n_s, n_s + rate * 0.5 * n_s * rng.uniform(0.5, 1.5, n)], axis=1)
    mart = counts - comp
    qv = counting_quadratic_variation(times, counts, mart)
    assert np.allclose(qv, comp)
    res = martingale_tests(times, mart, counts, pairs=((0.5, 1.0),), quadratic_variation=qv)
    row = [r for r in res["rows"] if r.functional == "N_s"][0]
    assert abs(row.z_empirical) > 3
    assert abs(row.z) < 3


def test_scaled_quadratic_variation():
    eps = 0.5
    times = np.array([0.0, 1.0])
    counts = np.array([[0, 3]])
    comp = np.array([[0.0, 2.5]])
    obs = eps * counts - times / eps
    mart = eps * (counts - comp)
    assert np.allclose(counting_quadratic_variation(times, obs, mart, eps), eps**2 * comp)
