import numpy as np
import pytest

from belavkin.algebra import dag
from belavkin.ensemble import homodyne_ensemble, scaled_counting_ensemble
from belavkin.errors import BudgetError, InvalidInputError, StepSizeError
from belavkin.homodyne import (
    diffusive_limit_report,
    gain_convergence,
    homodyne_gain,
    integrate_homodyne_sse,
    integrate_scaled_counting_sse,
    report_to_csv,
    scaled_gain,
)
from belavkin.lindblad import HomodyneSpec, master_path, resonance_fluorescence
from belavkin.stats import master_agreement, quadratic_variation_check, scaled_ito_check

from conftest import random_state


@pytest.fixture
def dark():
    return resonance_fluorescence(rabi=1.0, kappa_s=0.0)


def test_gain_vanishes_without_side_channel(dark, rng):
    rho = random_state(rng)
    assert np.abs(scaled_gain(dark, HomodyneSpec(0.1), rho)).max() < 1e-12
    assert np.abs(homodyne_gain(dark, HomodyneSpec(0.0), rho)).max() == 0


def test_scaled_path_is_master_flow_without_side_channel(dark, ground, rng):
    tr = integrate_scaled_counting_sse(dark, HomodyneSpec(0.3), ground, 2.0, rng=rng)
    ref = master_path(dark, ground, tr.grid)
    assert np.abs(tr.states - ref).max() < 1e-8


def test_scaled_ito_law(rf, ground, rng):
    eps = 0.3
    tr = integrate_scaled_counting_sse(rf, HomodyneSpec(eps, phi0=0.2), ground, 2.0, rng=rng)
    chk = scaled_ito_check(tr.grid, tr.counts, eps)
    assert chk["binary_steps"]
    assert chk["reduced_residual"] < 1e-12
    assert chk["full_residual"] < 1e-12
    dw = np.diff(tr.observation)
    assert np.allclose(dw, eps * np.diff(tr.counts) - np.diff(tr.grid) / eps, atol=1e-12)


def test_step_size_guard(rf, ground, rng):
    with pytest.raises(StepSizeError):
        integrate_scaled_counting_sse(rf, HomodyneSpec(0.1), ground, 1.0, dt=0.01, rng=rng)
    with pytest.raises(InvalidInputError):
        integrate_scaled_counting_sse(rf, HomodyneSpec(0.0), ground, 1.0, rng=rng)


def test_homodyne_deterministic_without_side_channel(dark, ground, rng):
    tr = integrate_homodyne_sse(dark, HomodyneSpec(0.0), ground, 2.0, rng=rng)
    ref = master_path(dark, ground, tr.grid)
    assert np.abs(tr.states - ref).max() < 1e-8


def test_stochastic_coefficient_traceless(rf, rng):
    for phi in np.linspace(0, 2 * np.pi, 7):
        for _ in range(10):
            rho = random_state(rng)
            assert abs(np.trace(homodyne_gain(rf, HomodyneSpec(0.0, phi), rho))) < 1e-14


@pytest.mark.parametrize("method", ["bayes", "kraus", "euler"])
def test_homodyne_path_properties(rf, ground, rng, method):
    spec = HomodyneSpec(0.0, phi0=0.3, omega_lo=0.5)
    tr = integrate_homodyne_sse(rf, spec, ground, 3.0, rng=rng, method=method)
    # plain Euler steps are not positivity preserving; only trace and symmetry are kept
    floor = 1e-8 if method != "euler" else np.inf
    for rho in tr.states:
        assert abs(np.trace(rho) - 1) < 1e-10
        assert np.abs(rho - dag(rho)).max() < 1e-12
        assert np.linalg.eigvalsh(rho).min() > -floor
    assert quadratic_variation_check(tr.grid, tr.observation)["ok"]


def test_replay_determinism(rf, ground, rng):
    dw = np.sqrt(1e-3) * rng.normal(size=2000)
    a = integrate_homodyne_sse(rf, HomodyneSpec(0.0), ground, 2.0, increments=dw)
    b = integrate_homodyne_sse(rf, HomodyneSpec(0.0), ground, 2.0, increments=dw.copy())
    assert np.array_equal(a.states, b.states)
    assert np.allclose(np.diff(a.observation), dw)


def test_replay_rejects_nonfinite(rf, ground):
    dw = np.zeros(1000)
    dw[10] = np.nan
    with pytest.raises(InvalidInputError):
        integrate_homodyne_sse(rf, HomodyneSpec(0.0), ground, 1.0, increments=dw)


def test_gain_converges_linearly(rf, rng):
    spec = HomodyneSpec(0.0, phi0=0.7)
    for _ in range(5):
        errs, ratios = gain_convergence(rf, spec, random_state(rng))
        assert errs[-1] < 1e-2
        assert np.all(np.abs(ratios - 10) < 0.5)


@pytest.mark.slow
def test_scaled_ensemble_matches_master(rf, ground):
    res = scaled_counting_ensemble(rf, HomodyneSpec(0.3), ground, (0.5, 1.0, 2.0), 4000, seed=31)
    ref = master_path(rf, ground, res.times)
    assert master_agreement(res.states, ref)["max_abs_z"] <= 3.0


def test_homodyne_ensemble_matches_master(rf, ground):
    res = homodyne_ensemble(rf, HomodyneSpec(0.0, 0.4), ground, (0.5, 1.0, 2.0), 4000, seed=32)
    ref = master_path(rf, ground, res.times)
    assert master_agreement(res.states, ref)["max_abs_z"] <= 3.0


def test_limit_report_without_side_channel(dark, ground):
    rep = diffusive_limit_report(dark, HomodyneSpec(0.0), ground, [0.5, 0.3], n_traj=64, checkpoints=(0.5, 1.0))
    # no measurement back-action: state metrics agree exactly, observation moments to noise
    state_rows = [r for r in rep["rows"] if r[2].startswith("rho")]
    assert max(abs(r[3]) for r in state_rows) < 1e-8
    assert np.all(rep["d"] <= 3 * rep["d_stderr"] + 1e-12)
    assert report_to_csv(rep).startswith("epsilon,checkpoint,metric,value,stderr\n")


def test_limit_report_validation(rf, ground):
    with pytest.raises(InvalidInputError):
        diffusive_limit_report(rf, HomodyneSpec(0.0), ground, [0.1, 0.2], n_traj=8)
    with pytest.raises(BudgetError):
        diffusive_limit_report(rf, HomodyneSpec(0.0), ground, [0.01], n_traj=10_000)
