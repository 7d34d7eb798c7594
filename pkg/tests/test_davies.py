import numpy as np
import pytest
import scipy.linalg

from belavkin.algebra import dag, projector, steady_state
from belavkin.davies import (
    OutcomeSet,
    davies_weight,
    integrate_counting_sse,
    sample_counting_trajectory,
    sector_masses,
    sector_masses_exact,
)
from belavkin.ensemble import counting_ensemble
from belavkin.errors import ImpossibleOutcomeError, InvalidInputError
from belavkin.lindblad import (
    EXCITED,
    GROUND,
    Unraveling,
    build_liouvillian,
    resonance_fluorescence,
    spontaneous_decay,
    split_unraveling,
)
from belavkin.stats import censored_ks


@pytest.fixture
def decay_split():
    return split_unraveling(spontaneous_decay(kappa_s=1.0))


@pytest.fixture
def rf_split(rf):
    return split_unraveling(rf)


def test_outcome_set_validation():
    OutcomeSet(1.0, (0.0, 0.5))
    for bad in [(0.5, 0.5), (0.6, 0.2), (-0.1,), (1.0,), (np.nan,)]:
        with pytest.raises(InvalidInputError):
            OutcomeSet(1.0, bad)
    with pytest.raises(InvalidInputError):
        OutcomeSet(0.0)


def test_empty_outcome_is_smooth_flow(rf_split, ground):
    w, dens = davies_weight(rf_split, OutcomeSet(0.8), ground)
    ref = (scipy.linalg.expm(0.8 * rf_split.smooth.matrix) @ ground.reshape(-1, order="F")).reshape(2, 2, order="F")
    assert np.abs(w - ref).max() < 1e-14
    assert abs(dens - np.trace(ref).real) < 1e-14


@pytest.mark.parametrize("t1", [0.1, 0.5, 0.9])
def test_one_jump_density(decay_split, excited, t1):
    w, dens = davies_weight(decay_split, OutcomeSet(1.0, (t1,)), excited)
    assert abs(dens - np.exp(-t1)) < 1e-12
    assert np.abs(w / dens - projector(GROUND)).max() < 1e-12
    _, two = davies_weight(decay_split, OutcomeSet(1.0, (t1, t1 + 0.05)), excited)
    assert two == 0.0


def test_guichardet_mass(rf_split, ground, rng):
    from conftest import random_state

    for rho in (ground, random_state(rng)):
        quad = sector_masses(rf_split, rho, 1.0, n_max=6, order=16)
        assert abs(quad.sum() - 1) < 1e-6
        exact = sector_masses_exact(rf_split, rho, 1.0, n_max=6)
        assert np.abs(quad - exact).max() < 1e-10


def test_sector_one_matches_direct_quadrature(rf_split, ground):
    # independent route: scalar Gauss-Legendre over t1 of Tr W({t1})
    xs, ws = np.polynomial.legendre.leggauss(40)
    xs, ws = 0.5 * (xs + 1), 0.5 * ws
    direct = sum(w * davies_weight(rf_split, OutcomeSet(1.0, (x,)), ground)[1] for x, w in zip(xs, ws))
    assert abs(direct - sector_masses(rf_split, ground, 1.0)[1]) < 1e-10


def test_measure_consistency(rf_split, ground):
    s, t = 0.6, 1.0
    at_s = sector_masses_exact(rf_split, ground, s, n_max=0)[0]
    # no jump in [0, s) at horizon t: all sectors of the outcomes with jumps only in [s, t)
    at_t = sector_masses(rf_split, ground, t, n_max=6, order=10, start=s).sum()
    assert abs(at_s - at_t) < 1e-8


def test_ground_never_jumps_without_laser(decay_split, ground, rng):
    tr = sample_counting_trajectory(decay_split, ground, 3.0, rng)
    assert len(tr.jumps) == 0
    assert np.abs(tr.states - ground).max() < 1e-14
    assert np.all(tr.counts == 0)


def test_sampled_path_properties(rf, excited, rng):
    tr = sample_counting_trajectory(Unraveling(rf), excited, 5.0, rng, observable=np.diag([1.0, 0.0]))
    assert np.all(np.diff(tr.counts) >= 0) and set(np.diff(tr.counts)) <= {0, 1}
    for rho in tr.states:
        assert abs(np.trace(rho) - 1) < 1e-8
        assert np.linalg.eigvalsh(rho).min() > -1e-8
    # the stored path equals the normalized Davies product of its own record
    sp = split_unraveling(rf)
    w, _ = davies_weight(sp, tr.jumps, excited)
    assert np.abs(tr.states[-1] - w / np.trace(w)).max() < 1e-6
    assert np.allclose(tr.martingale, tr.counts - tr.compensator)


def test_purity_when_every_channel_is_counted(rng):
    # forward channel switched off, so nothing escapes unobserved
    m = spontaneous_decay(omega0=1.3, kappa_s=1.0)
    psi = np.array([0.6, 0.8j])
    rho0 = np.outer(psi, psi.conj())
    for _ in range(5):
        tr = sample_counting_trajectory(split_unraveling(m), rho0, 3.0, rng)
        for rho in tr.states:
            assert np.linalg.eigvalsh(rho)[0] < 1e-8


def test_waiting_time_law(excited):
    res = counting_ensemble(spontaneous_decay(kappa_s=1.0), excited, (10.0,), 10_000, seed=21)
    assert censored_ks(res.first_jump, lambda t: 1 - np.exp(-t), 10.0) <= 0.02


def test_long_run_count_rate(rf, ground):
    rho_ss = steady_state(build_liouvillian(rf))
    rate = abs(rf.kappa_s) ** 2 * rho_ss[EXCITED, EXCITED].real
    t0, t1 = 5.0, 25.0
    res = counting_ensemble(rf, ground, (t0, t1), 2000, seed=22)
    n = res.observation[:, 2] - res.observation[:, 1]
    mean, se = n.mean() / (t1 - t0), n.std(ddof=1) / np.sqrt(n.size) / (t1 - t0)
    assert abs(mean - rate) <= 3 * se


def test_replay_without_jumps(rf_split, ground):
    tr = integrate_counting_sse(rf_split, ground, 1.0, 1e-3, OutcomeSet(1.0))
    w, _ = davies_weight(rf_split, OutcomeSet(1.0), ground)
    assert np.abs(tr.states[-1] - w / np.trace(w)).max() < 1e-6


def test_replay_one_jump_lands_in_ground(decay_split, excited):
    tr = integrate_counting_sse(decay_split, excited, 1.0, 1e-3, OutcomeSet(1.0, (0.5,)))
    after = tr.grid > 0.5
    assert np.abs(tr.states[after] - projector(GROUND)).max() < 1e-12
    assert tr.counts[-1] == 1


def test_replay_impossible(decay_split, ground):
    with pytest.raises(ImpossibleOutcomeError):
        integrate_counting_sse(decay_split, ground, 1.0, 1e-3, OutcomeSet(1.0, (0.3,)))


def test_grid_mode_increments(rf_split, ground, rng):
    tr = integrate_counting_sse(rf_split, ground, 4.0, 1e-2, rng)
    dn = np.diff(tr.counts)
    assert np.array_equal(dn * dn, dn)
    assert np.all(np.isin(dn, (0, 1)))
