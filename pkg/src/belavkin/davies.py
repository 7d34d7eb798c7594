"""Photon counting: outcome records, Davies weights and counting trajectories.

An outcome on ``[0, t)`` is a finite increasing list of jump times. Its
unnormalized state is the alternating product

    W_t(w)(rho) = exp((t - t_k) L) J ... J exp(t_1 L)(rho)

with ``L`` the smooth part and ``J`` the jump part of the split generator.
Filtered states are recorded left-continuously: the state stored at a jump
time is the state just before the jump, and ``N_t`` counts jumps in ``[0, t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .algebra import check_density, dag, unvec, vec
from .engine import counting_block, make_grid
from .errors import ImpossibleOutcomeError, InvalidInputError, InvalidStateError
from .lindblad import Unraveling, UnravelingSplit

__all__ = [
    "OutcomeSet",
    "CountingTrajectory",
    "davies_weight",
    "sector_masses",
    "sector_masses_exact",
    "sample_counting_trajectory",
    "integrate_counting_sse",
]


@dataclass(frozen=True)
class OutcomeSet:
    """Jump times ``0 <= t_1 < ... < t_k < horizon``."""

    horizon: float
    times: tuple = ()

    def __post_init__(self):
        times = tuple(float(x) for x in self.times)
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise InvalidInputError(f"horizon must be positive, got {self.horizon}")
        if any(not np.isfinite(x) for x in times):
            raise InvalidInputError("jump times must be finite")
        if times and (times[0] < 0 or times[-1] >= self.horizon):
            raise InvalidInputError(f"jump times must lie in [0, {self.horizon})")
        if any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise InvalidInputError("jump times must be strictly increasing")
        object.__setattr__(self, "times", times)

    def __len__(self):
        return len(self.times)


@dataclass
class CountingTrajectory:
    """Filtered path of a counting measurement on a time grid.

    Attributes
    ----------
    grid : ndarray
        Increasing times from 0 to the horizon, jump times included.
    states : ndarray
        Filtered density matrices, shape ``(len(grid), n, n)``.
    jumps : OutcomeSet
    counts : ndarray
        ``N_t`` at each grid time (jumps strictly before ``t``).
    compensator : ndarray
        ``int_0^t Tr J(rho_s) ds``.
    martingale : ndarray
        ``N_t - compensator``.
    observable_martingale : ndarray or None
        ``Tr(rho_t X) - Tr(rho_0 X) - int_0^t Tr(rho_s L'(X)) ds`` when an
        observable ``X`` was supplied (``L'`` is the Heisenberg generator).
    """

    grid: np.ndarray
    states: np.ndarray
    jumps: OutcomeSet
    counts: np.ndarray
    compensator: np.ndarray
    martingale: np.ndarray
    observable_martingale: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def _split_at(provider, t):
    if isinstance(provider, UnravelingSplit):
        return provider
    if isinstance(provider, Unraveling):
        return provider.at(t)
    raise InvalidInputError("expected an UnravelingSplit or an Unraveling")


def _is_static(provider):
    return isinstance(provider, UnravelingSplit) or not provider.time_dependent


def _smooth_flow(provider, t0, t1, x, dt=1e-3):
    """Apply the smooth propagator from ``t0`` to ``t1`` to a vectorized state."""
    if t1 <= t0:
        return x
    if _is_static(provider):
        return scipy.linalg.expm((t1 - t0) * _split_at(provider, 0.0).smooth.matrix) @ x
    n = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
    edges = np.linspace(t0, t1, n + 1)
    for a, b in zip(edges[:-1], edges[1:]):
        x = scipy.linalg.expm((b - a) * _split_at(provider, 0.5 * (a + b)).smooth.matrix) @ x
    return x


def davies_weight(provider, omega: OutcomeSet, rho0, dt=1e-3):
    """Unnormalized state ``W_t(w)(rho0)`` and its density ``Tr W_t(w)(rho0)``.

    For a time-dependent unraveling the smooth segments use midpoint-rule
    products of exponentials with steps of at most ``dt``.
    """
    rho0 = check_density(rho0)
    n = rho0.shape[0]
    x = vec(rho0)
    t = 0.0
    for tj in omega.times:
        x = _smooth_flow(provider, t, tj, x, dt)
        a = _split_at(provider, tj).jump_op
        m = unvec(x, n)
        x = vec(a @ m @ dag(a))
        t = tj
    x = _smooth_flow(provider, t, omega.horizon, x, dt)
    w = unvec(x, n)
    return w, max(float(np.real(np.trace(w))), 0.0)


def sector_masses(split: UnravelingSplit, rho0, horizon, n_max=6, order=16, start=0.0):
    """Davies mass of each photon-number sector by nested Gauss-Legendre quadrature.

    Returns ``m[k] = int Tr W(w)(rho0) dmu`` over outcomes with exactly ``k``
    jumps, all inside ``[start, horizon)``, for ``k = 0..n_max``. The state is
    first propagated by the smooth flow over ``[0, start)``. Each level of the
    ordered simplex is mapped to ``[0, s]`` (conical product) and integrated
    with ``order`` nodes, in the eigenbasis of the smooth generator.
    """
    if not isinstance(split, UnravelingSplit):
        raise InvalidInputError("sector quadrature needs a time-independent split")
    if not 0 <= start < horizon:
        raise InvalidInputError("need 0 <= start < horizon")
    rho0 = check_density(rho0)
    n = rho0.shape[0]
    s_mat = split.smooth.matrix
    lam, p = np.linalg.eig(s_mat)
    if np.linalg.cond(p) > 1e8:
        raise InvalidInputError("smooth generator is too close to defective for eigenbasis quadrature")
    p_inv = np.linalg.inv(p)
    j_til = p_inv @ split.jump.matrix @ p
    x0 = p_inv @ (scipy.linalg.expm(start * s_mat) @ vec(rho0))
    # trace functional in the eigenbasis
    tr_vec = vec(np.eye(n)) @ p
    span = horizon - start
    nodes, weights = np.polynomial.legendre.leggauss(order)
    xs = 0.5 * (nodes + 1.0)
    ws = 0.5 * weights

    masses = [float(np.real(tr_vec @ (np.exp(span * lam) * x0)))]
    for k in range(1, n_max + 1):
        # evaluation times per level: level k at [span], level j-1 at outer(T_j, xs)
        times = [None] * (k + 1)
        times[k] = np.array([span])
        for lvl in range(k, 1, -1):
            times[lvl - 1] = np.multiply.outer(times[lvl], xs).ravel()
        vals = None
        for lvl in range(1, k + 1):
            tl = times[lvl]
            acc = np.zeros((tl.size, lam.size), dtype=complex)
            for j, (xj, wj) in enumerate(zip(xs, ws)):
                inner_t = tl * xj
                if lvl == 1:
                    inner = np.exp(np.multiply.outer(inner_t, lam)) * x0
                else:
                    inner = vals.reshape(tl.size, order, lam.size)[:, j, :]
                acc += (wj * tl)[:, None] * np.exp(np.multiply.outer(tl - inner_t, lam)) * (inner @ j_til.T)
            vals = acc
        masses.append(float(np.real(vals[0] @ tr_vec)))
    return np.array(masses)


def sector_masses_exact(split: UnravelingSplit, rho0, horizon, n_max=6):
    """Sector masses from one exponential of a block-bidiagonal generator.

    ``exp(t A)`` with ``L`` on the diagonal and ``J`` on the subdiagonal has
    the ``k``-jump Dyson term in block ``(k, 0)``.
    """
    rho0 = check_density(rho0)
    n = rho0.shape[0]
    d = n * n
    big = np.zeros(((n_max + 1) * d, (n_max + 1) * d), dtype=complex)
    for k in range(n_max + 1):
        big[k * d:(k + 1) * d, k * d:(k + 1) * d] = split.smooth.matrix
        if k:
            big[k * d:(k + 1) * d, (k - 1) * d:k * d] = split.jump.matrix
    col = scipy.linalg.expm(horizon * big)[:, :d] @ vec(rho0)
    tr = vec(np.eye(n))
    return np.array([float(np.real(tr @ col[k * d:(k + 1) * d])) for k in range(n_max + 1)])


def _observable_rate(provider, t, observable, n):
    gen = _split_at(provider, t).generator.dual()
    return unvec(gen.matrix @ vec(observable), n)


def _build_trajectory(grid, out, events, observable, rho0, meta):
    """Merge grid records with the pre-jump records at the jump times."""
    ev_t = np.array([e[0] for e in events])
    # grid-mode events are dated at step starts, which already lie on the grid
    new = [e for e in events if not np.any(np.isclose(grid, e[0], rtol=0, atol=1e-13))]
    times = np.concatenate([grid, [e[0] for e in new]])
    states = np.concatenate([out["states"][0], np.array([e[1] for e in new]).reshape(-1, *rho0.shape)])
    counts = np.concatenate([out["counts"][0], [e[4] for e in new]]).astype(np.int64)
    comp = np.concatenate([out["compensator"][0], [e[2] for e in new]])
    integ = np.concatenate([out["integral"][0], [e[3] for e in new]])
    order = np.argsort(times, kind="stable")
    times, states, counts, comp, integ = times[order], states[order], counts[order], comp[order], integ[order]
    mx = None
    if observable is not None:
        x0 = np.real(np.trace(rho0 @ observable))
        mx = np.real(np.einsum("kij,ji->k", states, observable)) - x0 - integ
    return CountingTrajectory(
        grid=times,
        states=states,
        jumps=OutcomeSet(float(grid[-1]), tuple(ev_t)),
        counts=counts,
        compensator=comp,
        martingale=counts - comp,
        observable_martingale=mx,
        meta=meta,
    )


def sample_counting_trajectory(provider, rho0, horizon, rng, dt=1e-3, observable=None) -> CountingTrajectory:
    """Exact-in-time counting trajectory by norm tracking.

    Jump times are located inside each step by root finding on the survival
    function (absolute tolerance 1e-12 in time) and inserted into the output
    grid.

    Parameters
    ----------
    provider : UnravelingSplit or Unraveling
    rng : numpy.random.Generator
        Consumed for one uniform per jump plus one initial draw.
    observable : ndarray, optional
        Hermitian ``X`` for the filter martingale ``M^X``.
    """
    rho0 = check_density(rho0)
    grid = make_grid(horizon, dt)
    out = counting_block(
        provider, rho0, grid, np.arange(len(grid)), [rng], refine=True, observable=observable, keep_events=True
    )
    return _build_trajectory(grid, out, out["events"][0], observable, rho0, {"mode": "exact", "dt": dt})


def integrate_counting_sse(provider, rho0, horizon, dt, drive, observable=None) -> CountingTrajectory:
    """Counting stochastic Schroedinger equation on a grid of step ``dt``.

    Parameters
    ----------
    drive : numpy.random.Generator or OutcomeSet
        A generator samples the record (at most one jump per step, dated at
        the start of the step); an ``OutcomeSet`` is replayed, with its jump
        times inserted into the grid.

    Between jumps the normalized smooth flow ``exp(s L)rho / Tr`` is applied
    exactly on each step; at a jump ``rho -> J(rho) / Tr J(rho)``.

    Raises
    ------
    ImpossibleOutcomeError
        If a replayed jump meets ``Tr J(rho) = 0``.
    """
    rho0 = check_density(rho0)
    if not (np.isfinite(dt) and dt > 0):
        raise InvalidInputError("dt must be positive")
    if not isinstance(drive, OutcomeSet):
        grid = make_grid(horizon, dt)
        out = counting_block(
            provider, rho0, grid, np.arange(len(grid)), [drive], refine=False, observable=observable,
            keep_events=True,
        )
        return _build_trajectory(grid, out, out["events"][0], observable, rho0, {"mode": "grid", "dt": dt})

    if abs(drive.horizon - horizon) > 1e-12:
        raise InvalidInputError("replayed record horizon differs from the requested horizon")
    n = rho0.shape[0]
    grid = make_grid(horizon, dt, drive.times)
    jump_at = {int(i) for i in np.searchsorted(grid, np.array(drive.times) - 1e-12)}
    states = np.empty((len(grid), n, n), dtype=complex)
    counts = np.zeros(len(grid), dtype=np.int64)
    comp = np.zeros(len(grid))
    integ = np.zeros(len(grid))
    rho = rho0.copy()
    states[0] = rho
    cnt, c_acc, i_acc = 0, 0.0, 0.0
    for k in range(len(grid) - 1):
        t0, t1 = grid[k], grid[k + 1]
        if k in jump_at:
            a = _split_at(provider, t0).jump_op
            post = a @ rho @ dag(a)
            tr = float(np.real(np.trace(post)))
            if not tr > 1e-300:
                raise ImpossibleOutcomeError(
                    f"replayed jump at t={t0:.12g} has Tr J(rho) = {tr:.3e}; the record has probability zero"
                )
            rho = post / tr
            cnt += 1
        x = _smooth_flow(provider, t0, t1, vec(rho))
        m = unvec(x, n)
        tr = float(np.real(np.trace(m)))
        if not tr > 0:
            raise InvalidStateError(f"smooth flow lost the state at t={t1:.6g}")
        c_acc -= math.log(tr)
        new = m / tr
        new = 0.5 * (new + dag(new))
        if observable is not None:
            y = _observable_rate(provider, 0.5 * (t0 + t1), observable, n)
            i_acc += 0.5 * (t1 - t0) * float(np.real(np.trace(rho @ y) + np.trace(new @ y)))
        rho = new
        states[k + 1] = rho
        counts[k + 1] = cnt
        comp[k + 1] = c_acc
        integ[k + 1] = i_acc
    mx = None
    if observable is not None:
        mx = np.real(np.einsum("kij,ji->k", states, observable)) - np.real(np.trace(rho0 @ observable)) - integ
    return CountingTrajectory(
        grid=grid,
        states=states,
        jumps=drive,
        counts=counts,
        compensator=comp,
        martingale=counts - comp,
        observable_martingale=mx,
        meta={"mode": "replay", "dt": dt},
    )
