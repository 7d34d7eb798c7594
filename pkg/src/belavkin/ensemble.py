"""Ensemble runners recording filtered states at checkpoint times."""

from __future__ import annotations

import numpy as np

from .algebra import check_density
from .engine import BLOCK_SIZE, EnsembleResult, make_grid, record_indices, run_blocks
from .errors import InvalidInputError
from .homodyne import check_scaled_step
from .lindblad import HomodyneSpec, LindbladModel, SideCounting, Unraveling
from .rng import RNG_ALGORITHM

__all__ = ["counting_ensemble", "scaled_counting_ensemble", "homodyne_ensemble"]


def _times(checkpoints):
    cps = sorted({float(c) for c in checkpoints})
    if not cps or cps[0] <= 0:
        raise InvalidInputError("checkpoints must be positive")
    return np.array([0.0] + cps)


def _observable_mart(out, rho0, observable):
    if observable is None:
        return None
    x0 = np.real(np.trace(rho0 @ observable))
    return np.real(np.einsum("bkij,ji->bk", out["states"], observable)) - x0 - out["integral"]


def _meta(kind, seed, n_traj, dt, workers, **extra):
    return {"scheme": kind, "seed": seed, "n_traj": n_traj, "dt": dt, "rng": RNG_ALGORITHM,
            "block_size": BLOCK_SIZE, "workers": workers, **extra}


def counting_ensemble(
    model: LindbladModel, rho0, checkpoints, n_traj, seed, dt=1e-3, workers=1, observable=None, refine=True,
    channel=None,
) -> EnsembleResult:
    """Direct side-channel counting; states recorded at ``0`` and each checkpoint.

    With ``refine`` (default) jump times are exact; otherwise at most one jump
    per step is allowed.
    """
    rho0 = check_density(rho0)
    times = _times(checkpoints)
    grid = make_grid(times[-1], dt, times)
    provider = Unraveling(model, channel or SideCounting())
    out = run_blocks(
        "counting", n_traj, seed, workers=workers, provider=provider, rho0=rho0, grid=grid,
        record_idx=record_indices(grid, times), refine=refine, observable=observable,
    )
    return EnsembleResult(
        times=times,
        states=out["states"],
        observation=out["counts"],
        martingale=out["counts"] - out["compensator"],
        first_jump=out["first_jump"],
        n_jumps=out["counts"][:, -1],
        observable_martingale=_observable_mart(out, rho0, observable),
        meta=_meta("counting", seed, n_traj, dt, workers),
    )


def scaled_counting_ensemble(
    model: LindbladModel, spec: HomodyneSpec, rho0, checkpoints, n_traj, seed, dt=None, workers=1, observable=None
) -> EnsembleResult:
    """Oscillator-mixed counting; ``observation`` is ``W^eps = eps N - t/eps``."""
    eps = spec.epsilon
    if not eps > 0:
        raise InvalidInputError("scaled counting needs epsilon > 0")
    from .homodyne import DT_RULE

    dt = DT_RULE * eps**2 if dt is None else dt
    check_scaled_step(eps, dt)
    res = counting_ensemble(model, rho0, checkpoints, n_traj, seed, dt=dt, workers=workers,
                            observable=observable, channel=spec, refine=True)
    counts = res.observation
    res.observation = eps * counts - res.times / eps
    res.martingale = eps * res.martingale
    res.meta.update(scheme="scaled-counting", epsilon=eps, phi0=spec.phi0, omega_lo=spec.omega_lo)
    return res


def homodyne_ensemble(
    model: LindbladModel, spec: HomodyneSpec, rho0, checkpoints, n_traj, seed, dt=1e-3, workers=1,
    observable=None, method="bayes",
) -> EnsembleResult:
    """Diffusive filter; ``observation`` is ``W_t`` and ``martingale`` is ``M^hd_t``."""
    rho0 = check_density(rho0)
    times = _times(checkpoints)
    grid = make_grid(times[-1], dt, times)
    out = run_blocks(
        "diffusive", n_traj, seed, workers=workers, model=model, spec=spec, rho0=rho0, grid=grid,
        record_idx=record_indices(grid, times), method=method, observable=observable,
    )
    return EnsembleResult(
        times=times,
        states=out["states"],
        observation=out["observation"],
        martingale=out["martingale"],
        observable_martingale=_observable_mart(out, rho0, observable),
        meta=_meta("homodyne", seed, n_traj, dt, workers, method=method, phi0=spec.phi0, omega_lo=spec.omega_lo),
    )
