"""Monte Carlo statistics for trajectory ensembles.

Standard errors of complex quantities are computed separately for the real
and imaginary parts and returned as ``se_re + 1j * se_im``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import InvalidInputError

__all__ = [
    "ensemble_mean",
    "zscore",
    "master_agreement",
    "MartingaleRow",
    "martingale_tests",
    "counting_quadratic_variation",
    "bonferroni_threshold",
    "COUNTING_FUNCTIONALS",
    "DIFFUSIVE_FUNCTIONALS",
    "censored_ks",
    "quadratic_variation_check",
    "counting_ito_check",
    "scaled_ito_check",
    "rows_to_csv",
]

Z_LIMIT = 3.0


def ensemble_mean(samples, axis=0):
    """Mean and standard error along ``axis``.

    Returns
    -------
    mean, stderr
        ``stderr`` is complex for complex input (real part: stderr of the
        real parts, imaginary part: stderr of the imaginary parts).
    """
    x = np.asarray(samples)
    n = x.shape[axis]
    if n < 2:
        raise InvalidInputError("need at least two samples for a standard error")
    # shift by the first sample: identical samples then give exactly zero spread
    ref = np.take(x, [0], axis=axis)
    d = x - ref
    mean = np.squeeze(ref, axis=axis) + d.mean(axis=axis)
    if np.iscomplexobj(x):
        se = np.sqrt(d.real.var(axis=axis, ddof=1) / n) + 1j * np.sqrt(d.imag.var(axis=axis, ddof=1) / n)
    else:
        se = np.sqrt(d.var(axis=axis, ddof=1) / n)
    return mean, se


def zscore(diff, se, floor=1e-15):
    """Componentwise z-scores; real and imaginary parts handled separately for complex input."""
    diff = np.asarray(diff)
    se = np.asarray(se)
    if np.iscomplexobj(diff) or np.iscomplexobj(se):
        zr = diff.real / np.maximum(se.real, floor)
        zi = diff.imag / np.maximum(np.asarray(se).imag, floor)
        # exact zeros with zero spread (e.g. constant entries) are not evidence
        zr = np.where((diff.real == 0) & (se.real == 0), 0.0, zr)
        zi = np.where((diff.imag == 0) & (se.imag == 0), 0.0, zi)
        return zr, zi
    z = diff / np.maximum(se, floor)
    return np.where((diff == 0) & (se == 0), 0.0, z)


def master_agreement(states, reference, zero_tol=1e-12):
    """Compare ensemble-mean states with a reference path.

    Parameters
    ----------
    states : ndarray, shape (n_traj, n_times, d, d)
    reference : ndarray, shape (n_times, d, d)

    Returns
    -------
    dict with ``max_abs_z``, ``max_stderr``, ``max_abs_diff`` and the arrays.
    Entries whose spread and deviation are both below ``zero_tol`` count as
    ``z = 0``.
    """
    mean, se = ensemble_mean(states)
    diff = mean - reference

    def part(d, e):
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(e > zero_tol, d / e, np.where(np.abs(d) < zero_tol, 0.0, np.inf))
        return z

    zr, zi = part(diff.real, se.real), part(diff.imag, se.imag)
    z = np.maximum(np.abs(zr), np.abs(zi))
    return {
        "mean": mean,
        "stderr": se,
        "z": z,
        "max_abs_z": float(z.max()),
        "max_stderr": float(max(se.real.max(), se.imag.max())),
        "max_abs_diff": float(np.abs(diff).max()),
    }


@dataclass(frozen=True)
class MartingaleRow:
    s: float
    t: float
    functional: str
    mean: float
    stderr: float
    z: float
    z_empirical: float = math.nan


COUNTING_FUNCTIONALS = {
    "one": lambda obs: np.ones_like(obs, dtype=float),
    "N_s": lambda obs: np.asarray(obs, dtype=float),
    "no_jump": lambda obs: (np.asarray(obs) == 0).astype(float),
}

DIFFUSIVE_FUNCTIONALS = {
    "one": lambda obs: np.ones_like(obs, dtype=float),
    "W_s": lambda obs: np.asarray(obs, dtype=float),
    "W_s_positive": lambda obs: (np.asarray(obs) > 0).astype(float),
}


def bonferroni_threshold(n_tests, z=Z_LIMIT):
    """Two-sided z threshold keeping the family-wise level of a single ``|z| <= z`` test."""
    alpha = math.erfc(z / math.sqrt(2))
    return float(-ndtri(alpha / (2 * n_tests)))


def martingale_tests(
    times, martingale, observation, pairs=((0.5, 1.0), (1.0, 2.0)), functionals=None, quadratic_variation=None
):
    """Martingale property checks ``E[(M_t - M_s) g(F_s)] = 0`` and ``E[M_t] = 0``.

    Parameters
    ----------
    times : array_like
        Record times matching the second axis of ``martingale``.
    martingale, observation : ndarray, shape (n_traj, n_times)
    functionals : dict name -> callable on the observation at ``s``.
    quadratic_variation : ndarray, optional
        Predictable quadratic variation ``<M>`` on the same grid (the
        compensator for a compensated counting process). When given, the
        standard error of each product comes from
        ``Var((M_t - M_s) g) = E[g^2 (<M>_t - <M>_s)]``, which stays reliable
        when the jumps behind a product are rare; the sample-variance z is
        kept in ``z_empirical``.

    Returns
    -------
    dict with ``rows`` (MartingaleRow), ``max_abs_z``, ``n_tests``,
    ``threshold`` (Bonferroni-adjusted) and the pass flags ``within_3`` and
    ``bonferroni_pass``.
    """
    times = np.asarray(times, dtype=float)
    functionals = functionals or COUNTING_FUNCTIONALS
    n = martingale.shape[0]

    def col(t):
        hit = np.flatnonzero(np.abs(times - t) < 1e-9)
        if not hit.size:
            raise InvalidInputError(f"time {t} not among the record times")
        return int(hit[0])

    def row(s, t, name, prod, weight, dqv):
        m, se = ensemble_mean(prod)
        z_emp = float(zscore(m, se))
        if quadratic_variation is not None:
            se = math.sqrt(max(float(np.mean(weight**2 * dqv)), 0.0) / n)
            return MartingaleRow(s, t, name, float(m), se, float(zscore(m, se)), z_emp)
        return MartingaleRow(s, t, name, float(m), float(se), z_emp, z_emp)

    qv = None if quadratic_variation is None else np.asarray(quadratic_variation, dtype=float)
    rows = []
    for j, t in enumerate(times):
        if t == 0:
            continue
        dqv = None if qv is None else qv[:, j] - qv[:, 0]
        rows.append(row(0.0, float(t), "mean", martingale[:, j], 1.0, dqv))
    for s, t in pairs:
        js, jt = col(s), col(t)
        inc = martingale[:, jt] - martingale[:, js]
        dqv = None if qv is None else qv[:, jt] - qv[:, js]
        for name, g in functionals.items():
            w = g(observation[:, js])
            rows.append(row(float(s), float(t), name, inc * w, w, dqv))
    zmax = max(abs(r.z) for r in rows)
    thr = bonferroni_threshold(len(rows))
    return {
        "rows": rows,
        "max_abs_z": zmax,
        "max_abs_z_empirical": max(abs(r.z_empirical) for r in rows),
        "n_tests": len(rows),
        "threshold": thr,
        "within_3": zmax <= Z_LIMIT,
        "bonferroni_pass": zmax <= thr,
    }


def counting_quadratic_variation(times, observation, martingale, epsilon=None):
    """Predictable quadratic variation of a compensated counting martingale.

    For ``M = N - A`` it is the compensator ``A = N - M``. For the scaled
    form (``observation = eps N - t/eps``, ``martingale = eps (N - A)``) it
    is ``eps^2 A``.
    """
    obs = np.asarray(observation, dtype=float)
    mart = np.asarray(martingale, dtype=float)
    if epsilon is None:
        return obs - mart
    counts = np.rint((obs + np.asarray(times, dtype=float) / epsilon) / epsilon)
    return epsilon**2 * counts - epsilon * mart


def censored_ks(samples, cdf, horizon=np.inf):
    """Kolmogorov-Smirnov distance on ``[0, horizon]`` with right censoring.

    ``samples`` holds event times; ``nan`` (or values beyond ``horizon``)
    mark samples with no event by the horizon. The empirical CDF counts only
    observed events over all samples and is compared with ``cdf`` up to the
    horizon.
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n == 0:
        raise InvalidInputError("no samples")
    obs = np.sort(x[np.isfinite(x) & (x <= horizon)])
    if obs.size == 0:
        return float(cdf(np.array([horizon]))[0]) if np.isfinite(horizon) else 1.0
    f = np.asarray(cdf(obs), dtype=float)
    upper = np.arange(1, obs.size + 1) / n - f
    lower = f - np.arange(obs.size) / n
    d = max(upper.max(), lower.max())
    if np.isfinite(horizon):
        d = max(d, abs(float(cdf(np.array([horizon]))[0]) - obs.size / n))
    return float(d)


def quadratic_variation_check(grid, observation, sigmas=4.0):
    """``sum (dW)^2`` against ``T`` with the band ``sigmas * sqrt(2 T dt)``.

    ``dt`` is the mean step; works on one path or a stack of paths (last axis).
    """
    grid = np.asarray(grid, dtype=float)
    dw = np.diff(np.asarray(observation, dtype=float), axis=-1)
    qv = (dw**2).sum(axis=-1)
    horizon = grid[-1] - grid[0]
    dt = horizon / (len(grid) - 1)
    band = sigmas * math.sqrt(2 * horizon * dt)
    return {"qv": qv, "horizon": horizon, "band": band, "ok": np.abs(qv - horizon) <= band}


def counting_ito_check(counts):
    """Per-step increments of a counting path: all in {0, 1} and ``dN^2 == dN``."""
    dn = np.diff(np.asarray(counts), axis=-1)
    return bool(np.all((dn == 0) | (dn == 1)) and np.array_equal(dn * dn, dn))


def scaled_ito_check(grid, counts, epsilon):
    """Discrete form of ``(dW^eps)^2 = eps dW^eps + dt`` along a scaled counting path.

    With ``dW = eps dN - dt/eps`` and ``dN`` in {0, 1}, the product rule holds
    in the reduced form ``eps^2 dN = eps dW + dt`` and, without dropping
    ``dt^2`` and ``dt dN`` (both of higher order), as
    ``dW^2 - eps dW - dt = dt^2/eps^2 - 2 dt dN``.

    Returns
    -------
    dict with the maximum residuals of both identities and the step check.
    """
    grid = np.asarray(grid, dtype=float)
    n = np.asarray(counts)
    dt = np.diff(grid)
    dn = np.diff(n)
    dw = epsilon * dn - dt / epsilon
    reduced = epsilon**2 * dn - (epsilon * dw + dt)
    full = dw**2 - epsilon * dw - dt - (dt**2 / epsilon**2 - 2 * dt * dn)
    return {
        "binary_steps": counting_ito_check(n),
        "reduced_residual": float(np.abs(reduced).max()),
        "full_residual": float(np.abs(full).max()),
        "max_dt2_term": float((dt**2 / epsilon**2).max()),
    }


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
    return buf.getvalue()
