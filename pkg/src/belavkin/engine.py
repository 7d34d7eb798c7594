"""Vectorized trajectory engines and the deterministic worker pool.

Trajectories are processed in fixed blocks of ``BLOCK_SIZE`` consecutive
indices. A block is the unit of work handed to a worker, so the arithmetic
done for trajectory ``i`` depends only on ``(seed, i, n_traj)`` and never on
the number of workers. Results are concatenated in block order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np
import scipy.linalg
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

from .algebra import dag, dissipator, vec, unvec
from .errors import BelavkinError, InvalidInputError, RefinementError
from .lindblad import (
    HomodyneSpec,
    LindbladModel,
    Unraveling,
    UnravelingSplit,
    build_liouvillian,
    effective_operators,
)
from .rng import block_streams, check_seed

__all__ = [
    "BLOCK_SIZE",
    "EnsembleResult",
    "make_grid",
    "record_indices",
    "counting_block",
    "diffusive_block",
    "measured_kraus",
    "sample_tilted",
    "run_blocks",
]

BLOCK_SIZE = 1024
_CHUNK = 512


def make_grid(horizon: float, dt: float, checkpoints=()) -> np.ndarray:
    """Uniform-ish time grid on ``[0, horizon]`` that hits every checkpoint exactly.

    Each segment between consecutive marks is divided into equal steps no
    longer than ``dt``.
    """
    if not (np.isfinite(horizon) and horizon > 0):
        raise InvalidInputError("horizon must be positive")
    if not (np.isfinite(dt) and dt > 0):
        raise InvalidInputError("dt must be positive")
    marks = sorted({0.0, float(horizon), *(float(c) for c in checkpoints if 0 < c < horizon)})
    pieces = [np.zeros(1)]
    for a, b in zip(marks[:-1], marks[1:]):
        n = max(1, int(math.ceil((b - a) / dt - 1e-9)))
        pieces.append(np.linspace(a, b, n + 1)[1:])
    return np.concatenate(pieces)


def record_indices(grid, times) -> np.ndarray:
    grid = np.asarray(grid)
    idx = np.searchsorted(grid, np.asarray(times, dtype=float) - 1e-12)
    idx = np.clip(idx, 0, len(grid) - 1)
    bad = np.abs(grid[idx] - np.asarray(times)) > 1e-9
    if np.any(bad):
        raise InvalidInputError(f"times {np.asarray(times)[bad]} are not on the grid")
    return idx


@dataclass
class EnsembleResult:
    """Per-trajectory values at the record times.

    ``observation`` is ``N_t`` for counting, ``W_t^eps`` for scaled counting
    and ``W_t`` for homodyne detection; ``martingale`` is the matching
    innovation process. ``observable_martingale`` is the filter martingale
    ``M^X_t`` when an observable was supplied.
    """

    times: np.ndarray
    states: np.ndarray
    observation: np.ndarray
    martingale: np.ndarray
    first_jump: np.ndarray | None = None
    n_jumps: np.ndarray | None = None
    observable_martingale: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_traj(self) -> int:
        return self.states.shape[0]


def _trace(x):
    return np.real(np.trace(x, axis1=-2, axis2=-1))


def _apply(mat, rho):
    return unvec(vec(rho) @ mat.T, rho.shape[-1])


class _Splits:
    """Split and propagator lookup, cached when the unraveling is static."""

    def __init__(self, provider):
        if isinstance(provider, UnravelingSplit):
            self._static = provider
        elif isinstance(provider, Unraveling):
            self._static = None if provider.time_dependent else provider.at(0.0)
        else:
            raise InvalidInputError("expected an UnravelingSplit or an Unraveling")
        self.provider = provider
        self.dim = provider.dim
        self._props = {}
        self.eig = None
        if self._static is not None:
            lam, vecs = np.linalg.eig(self._static.smooth.matrix)
            if np.linalg.cond(vecs) < 1e8:
                trv = vec(np.eye(self.dim)) @ vecs
                self.eig = (lam, vecs, np.linalg.inv(vecs), trv)

    def split(self, t):
        return self._static if self._static is not None else self.provider.at(t)

    def propagator(self, t, h):
        split = self.split(t)
        if self._static is None:
            return split, scipy.linalg.expm(h * split.smooth.matrix)
        key = round(h, 15)
        if key not in self._props:
            self._props[key] = scipy.linalg.expm(h * split.smooth.matrix)
        return split, self._props[key]


def _refine_step(eig, a, idx, rho, surv, thresh, counts, comp, integ, first, events, gens, y, t0, t1, offset):
    """Exact jump handling inside one step for the trajectories in ``idx`` (modified in place)."""
    lam, p, _, _ = eig
    n = rho.shape[-1]

    def fval(r):
        return np.real(np.einsum("bij,ji->b", r, y)) if y is not None else np.zeros(len(r))

    r = rho[idx].copy()
    s = surv[idx].copy()
    tloc = np.full(idx.size, t0)
    while idx.size:
        rem = t1 - tloc
        tau, coords = _refine_batch(eig, r, s, thresh[idx], rem)
        sig = unvec((coords * np.exp(np.multiply.outer(tau, lam))) @ p.T, n)
        trt = _trace(sig)
        pre = sig / trt[:, None, None]
        comp[idx] -= np.log(trt)
        integ[idx] += 0.5 * tau * (fval(r) + fval(pre))
        tloc = tloc + tau
        post = a @ pre @ dag(a)
        trj = _trace(post)
        if np.any(~(trj > 1e-300)):
            i = int(idx[np.flatnonzero(~(trj > 1e-300))[0]])
            raise RefinementError(f"trajectory {offset + i}: jump fired where the jump rate vanishes")
        post = post / trj[:, None, None]
        for j, i in enumerate(idx):
            if events is not None:
                events[i].append((float(tloc[j]), pre[j], comp[i], integ[i], int(counts[i])))
            if np.isnan(first[i]):
                first[i] = tloc[j]
            thresh[i] = gens[i].random()
        counts[idx] += 1
        rem = np.maximum(t1 - tloc, 0.0)
        coords = vec(post) @ eig[2].T
        sig = unvec((coords * np.exp(np.multiply.outer(rem, lam))) @ p.T, n)
        trr = _trace(sig)
        again = trr < thresh[idx]
        done = ~again
        fin = idx[done]
        nxt = sig[done] / trr[done, None, None]
        comp[fin] -= np.log(trr[done])
        integ[fin] += 0.5 * rem[done] * (fval(post[done]) + fval(nxt))
        rho[fin] = 0.5 * (nxt + dag(nxt))
        surv[fin] = trr[done]
        idx, r, tloc = idx[again], post[again], tloc[again]
        s = np.ones(idx.size)


def _heisenberg_rate(splits, t, observable):
    if observable is None:
        return None
    gen = splits.split(t).generator.dual()
    return unvec(gen.matrix @ vec(observable), splits.dim)


def _refine_jump(smooth, rho, surv, u, span, where):
    """Time ``tau`` in ``[0, span]`` at which ``surv * Tr exp(tau S) rho`` crosses ``u``."""

    def excess(tau):
        return surv * _trace(unvec(scipy.linalg.expm(tau * smooth) @ vec(rho), rho.shape[-1])) - u

    lo = excess(0.0)
    if lo <= 0:
        return 0.0
    try:
        return brentq(excess, 0.0, span, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=200)
    except (ValueError, RuntimeError) as exc:
        raise RefinementError(
            f"{where}: jump-time refinement failed on [0, {span:.3e}] "
            f"(survival {surv:.6e}, threshold {u:.6e}, excess(0) {lo:.3e}): {exc}"
        ) from exc


def _refine_batch(eig, rho, surv, u, span):
    """Vectorized jump-time search for a static split via its eigenbasis.

    Solves ``surv * Tr exp(tau S) rho = u`` for ``tau`` in ``[0, span]``
    with safeguarded Newton steps. Returns ``tau`` and the eigen-coordinates
    of ``rho``.
    """
    lam, _, p_inv, trv = eig
    y = vec(rho) @ p_inv.T
    alpha = y * trv
    lo = np.zeros_like(surv)
    hi = np.array(span, dtype=float)

    def excess(tau):
        e = alpha * np.exp(np.multiply.outer(tau, lam))
        return surv * np.real(e.sum(axis=1)) - u, surv * np.real((e * lam).sum(axis=1))

    g0 = surv - u
    g1, _ = excess(hi)
    tau = np.where(g0 - g1 > 0, hi * g0 / np.where(g0 - g1 > 0, g0 - g1, 1.0), 0.5 * hi)
    tau = np.clip(tau, lo, hi)
    for _ in range(100):
        g, dg = excess(tau)
        lo = np.where(g > 0, tau, lo)
        hi = np.where(g < 0, tau, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            nxt = tau - g / dg
        bad = ~np.isfinite(nxt) | (nxt < lo) | (nxt > hi)
        nxt = np.where(bad, 0.5 * (lo + hi), nxt)
        # residual at rounding level: with a small jump rate the step test alone can stall
        conv = (np.abs(g) <= 8 * np.finfo(float).eps * surv) | (np.abs(nxt - tau) < 1e-14) | (hi - lo < 1e-13)
        tau = np.where(g == 0, tau, nxt)
        if np.all(conv):
            return tau, y
    raise RefinementError(f"jump-time refinement did not converge on [0, {float(np.max(span)):.3e}]")


def _jump(a, pre, where):
    post = a @ pre @ dag(a)
    tr = float(np.real(np.trace(post)))
    if not tr > 1e-300:
        raise RefinementError(f"{where}: jump fired where the jump rate vanishes (Tr J(rho) = {tr:.3e})")
    return post / tr


def counting_block(
    provider,
    rho0,
    grid,
    record_idx,
    gens,
    refine=False,
    observable=None,
    keep_events=False,
    offset=0,
):
    """Norm-tracking counting trajectories for one block.

    Between jumps the unnormalized state follows ``exp(s L_smooth)``; a jump
    fires when the survival since the last jump drops below a fresh uniform
    draw. With ``refine`` the jump time is located by root finding inside the
    step; otherwise the jump is applied at the end of the step (at most one
    jump per step) and dated at the start of the step.

    ``events`` (with ``keep_events``) lists, per trajectory, tuples
    ``(time, pre-jump state, compensator, observable integral, count before)``.
    """
    splits = _Splits(provider)
    n = splits.dim
    b = len(gens)
    grid = np.asarray(grid, dtype=float)
    record_idx = np.asarray(record_idx)
    rec_pos = {int(k): j for j, k in enumerate(record_idx)}
    rho = np.broadcast_to(np.asarray(rho0, dtype=complex), (b, n, n)).copy()
    surv = np.ones(b)
    thresh = np.array([g.random() for g in gens])
    counts = np.zeros(b, dtype=np.int64)
    comp = np.zeros(b)
    integ = np.zeros(b)
    first = np.full(b, np.nan)
    events = [[] for _ in range(b)] if keep_events else None

    k_rec = len(record_idx)
    out_states = np.empty((b, k_rec, n, n), dtype=complex)
    out_counts = np.empty((b, k_rec), dtype=np.int64)
    out_comp = np.empty((b, k_rec))
    out_integ = np.empty((b, k_rec))

    def store(k):
        j = rec_pos.get(k)
        if j is not None:
            out_states[:, j] = rho
            out_counts[:, j] = counts
            out_comp[:, j] = comp
            out_integ[:, j] = integ

    store(0)
    for k in range(len(grid) - 1):
        t0, t1 = grid[k], grid[k + 1]
        h = t1 - t0
        split, prop = splits.propagator(t0 + 0.5 * h, h)
        y = _heisenberg_rate(splits, t0 + 0.5 * h, observable)
        new = _apply(prop, rho)
        tr = _trace(new)
        snew = surv * tr
        cross = snew < thresh
        ok = ~cross
        f0 = np.real(np.einsum("bij,ji->b", rho, y)) if y is not None else None
        rho[ok] = new[ok] / tr[ok, None, None]
        surv[ok] = snew[ok]
        comp[ok] -= np.log(tr[ok])
        if y is not None:
            f1 = np.real(np.einsum("bij,ji->b", rho[ok], y))
            integ[ok] += 0.5 * h * (f0[ok] + f1)

        def frho(r):
            return float(np.real(np.trace(r @ y))) if y is not None else 0.0

        if refine and splits.eig is not None and np.any(cross):
            _refine_step(splits.eig, split.jump_op, np.flatnonzero(cross), rho, surv, thresh, counts, comp, integ,
                         first, events, gens, y, t0, t1, offset)
            cross = np.zeros_like(cross)
        for i in np.flatnonzero(cross):
            where = f"trajectory {offset + i} at t={t0:.6g}"
            a = split.jump_op
            if not refine:
                # the jump is attributed to [t0, t1) and applied after the smooth flow
                pre = new[i] / tr[i]
                comp[i] -= math.log(tr[i])
                integ[i] += 0.5 * h * (f0[i] if f0 is not None else 0.0) + 0.5 * h * frho(pre)
                if keep_events:
                    events[i].append((t0, pre, comp[i], integ[i], counts[i]))
                if np.isnan(first[i]):
                    first[i] = t0
                rho[i] = _jump(a, pre, where)
                counts[i] += 1
                thresh[i] = gens[i].random()
                surv[i] = 1.0
                continue
            r, s, t, rem = rho[i].copy(), surv[i], t0, h
            smooth = split.smooth.matrix
            while True:
                tau = _refine_jump(smooth, r, s, thresh[i], rem, where)
                sig = unvec(scipy.linalg.expm(tau * smooth) @ vec(r), n)
                trt = float(_trace(sig))
                pre = sig / trt
                comp[i] -= math.log(trt)
                integ[i] += 0.5 * tau * (frho(r) + frho(pre))
                t += tau
                rem = t1 - t
                if keep_events:
                    events[i].append((t, pre, comp[i], integ[i], counts[i]))
                if np.isnan(first[i]):
                    first[i] = t
                r = _jump(a, pre, where)
                counts[i] += 1
                thresh[i] = gens[i].random()
                s = 1.0
                if rem <= 0:
                    break
                sig = unvec(scipy.linalg.expm(rem * smooth) @ vec(r), n)
                trr = float(_trace(sig))
                if s * trr < thresh[i]:
                    continue
                comp[i] -= math.log(trr)
                integ[i] += 0.5 * rem * (frho(r) + frho(sig / trr))
                r, s = sig / trr, trr
                break
            rho[i], surv[i] = r, s
        store(k + 1)

    out = {
        "states": out_states,
        "counts": out_counts,
        "compensator": out_comp,
        "integral": out_integ,
        "first_jump": first,
    }
    if keep_events:
        out["events"] = events
    return out


def _diffusive_ops(model: LindbladModel, spec: HomodyneSpec, t):
    _, ops = effective_operators(model, t)
    vs = ops[model.channels.index(model.side)]
    return np.conj(spec.w(t)) * vs


def _choi(mat, n):
    """Choi matrix ``C[a + n c, b + n d] = sum_k K[a, c] conj(K[b, d])`` of a superoperator."""
    s4 = mat.reshape(n, n, n, n, order="F")  # s4[a, b, c, d] = mat[a + n b, c + n d]
    return s4.transpose(0, 2, 1, 3).reshape(n * n, n * n, order="F")


def measured_kraus(channel, c, h, n, tol=1e-12):
    """Split a one-step channel into a measured Kraus pair plus unobserved terms.

    Writes ``channel(rho) = K rho K* + B rho B* + sum_k R_k rho R_k*`` with
    ``B = sqrt(lam h) c`` and ``lam`` as close to 1 as complete positivity of
    the remainder allows. ``K`` is the dominant Kraus operator of the
    remainder, phased so that ``Tr K > 0``.

    Returns
    -------
    K, B, R, lam
    """
    choi = _choi(channel, n)
    choi = 0.5 * (choi + dag(choi))
    v = vec(c) * math.sqrt(h)
    scale = max(1.0, float(np.abs(choi).max()))

    def remainder(lam):
        return choi - lam * np.outer(v, np.conj(v))

    lam = 1.0
    if np.linalg.eigvalsh(remainder(1.0)).min() < -tol * scale:
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if np.linalg.eigvalsh(remainder(mid)).min() < -tol * scale:
                hi = mid
            else:
                lo = mid
        lam = lo
    w, vecs = np.linalg.eigh(remainder(lam))
    keep = w > tol * scale
    order = np.argsort(w[keep])[::-1]
    kraus = [math.sqrt(x) * unvec(vecs[:, keep][:, i], n) for x, i in zip(w[keep][order], order)]
    k0 = kraus[0]
    phase = np.trace(k0)
    if abs(phase) > 0:
        k0 = k0 * (abs(phase) / phase)
    rest = np.array(kraus[1:]) if len(kraus) > 1 else np.zeros((0, n, n), dtype=complex)
    return k0, math.sqrt(lam * h) * c, rest, lam


def sample_tilted(u, m, q, max_iter=60):
    """Inverse-CDF draw from ``phi(x) (1 - q + 2 m x + q x^2)``.

    The CDF is ``Phi(x) - (2 m + q x) phi(x)``; safeguarded Newton with a
    bisection fallback, vectorized over trajectories.
    """
    x = ndtri(u) + 2 * m
    lo = np.full_like(x, -40.0)
    hi = np.full_like(x, 40.0)
    for _ in range(max_iter):
        pdf0 = np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
        f = ndtr(x) - (2 * m + q * x) * pdf0 - u
        lo = np.where(f < 0, x, lo)
        hi = np.where(f > 0, x, hi)
        dens = pdf0 * (1 - q + 2 * m * x + q * x * x)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f / dens
        nxt = x - step
        bad = ~np.isfinite(nxt) | (nxt < lo) | (nxt > hi)
        nxt = np.where(bad, 0.5 * (lo + hi), nxt)
        conv = (f == 0) | (np.abs(nxt - x) < 1e-11)
        x = np.where(f == 0, x, nxt)
        if np.all(conv):
            break
    return x


def diffusive_block(
    model: LindbladModel,
    spec: HomodyneSpec,
    rho0,
    grid,
    record_idx,
    gens=None,
    increments=None,
    method="bayes",
    observable=None,
    offset=0,
):
    """Diffusive (homodyne) filter for one block.

    The measured operator is ``c = conj(w_t) V_s`` and the observation
    increment has conditional mean ``~ Tr(c rho + rho c*) dt`` and variance
    ``~ dt``.

    ``method="bayes"`` (default) splits the exact one-step channel
    ``exp(dt L)`` as ``K.K* + B.B* + sum R.R*`` with ``B = sqrt(dt) c``
    (see ``measured_kraus``) and treats ``x = dy/sqrt(dt)`` as the outcome of
    the instrument ``x -> (K + x B).(K + x B)* + sum R.R*`` against a standard
    normal reference. ``x`` is drawn from its exact outcome law, so the state
    stays positive and the conditional mean of the update is exactly
    ``exp(dt L) rho``. ``method="kraus"`` applies ``exp(dt (L - D[c]))`` then
    ``M = I + c dy - c*c dt/2`` with Gaussian ``dy``. ``method="euler"`` is
    the plain Euler-Maruyama step. All methods renormalize and symmetrize.
    """
    if method not in ("bayes", "kraus", "euler"):
        raise InvalidInputError(f"unknown method {method!r}")
    n = model.dim
    grid = np.asarray(grid, dtype=float)
    steps = len(grid) - 1
    if increments is not None:
        incs = np.atleast_2d(np.asarray(increments, dtype=float))
        if incs.shape[1] != steps:
            raise InvalidInputError(f"need {steps} increments per trajectory, got {incs.shape[1]}")
        if not np.all(np.isfinite(incs)):
            raise InvalidInputError("replay increment stream has non-finite entries")
        b = incs.shape[0]
    else:
        b = len(gens)
    record_idx = np.asarray(record_idx)
    rec_pos = {int(k): j for j, k in enumerate(record_idx)}
    rho = np.broadcast_to(np.asarray(rho0, dtype=complex), (b, n, n)).copy()
    w_obs = np.zeros(b)
    mart = np.zeros(b)
    integ = np.zeros(b)
    eye = np.eye(n, dtype=complex)
    static = not (model.time_dependent or spec.time_dependent)
    cache = {}

    k_rec = len(record_idx)
    out_states = np.empty((b, k_rec, n, n), dtype=complex)
    out_w = np.empty((b, k_rec))
    out_m = np.empty((b, k_rec))
    out_integ = np.empty((b, k_rec))

    def store(k):
        j = rec_pos.get(k)
        if j is not None:
            out_states[:, j] = rho
            out_w[:, j] = w_obs
            out_m[:, j] = mart
            out_integ[:, j] = integ

    def step_data(t0, h):
        key = round(h, 15)
        if static and key in cache:
            return cache[key]
        tm = t0 + 0.5 * h
        gen = build_liouvillian(model, tm)
        c = _diffusive_ops(model, spec, t0)
        if method == "bayes":
            mat = measured_kraus(scipy.linalg.expm(h * gen.matrix), c, h, n)
        elif method == "kraus":
            mat = scipy.linalg.expm(h * (gen.matrix - dissipator(c).matrix))
        else:
            mat = gen.matrix
        y = None
        if observable is not None:
            y = unvec(gen.dual().matrix @ vec(observable), n)
        data = (c, mat, y)
        if static:
            cache[key] = data
        return data

    store(0)
    draws = None
    for k in range(steps):
        if increments is None and k % _CHUNK == 0:
            chunk = min(_CHUNK, steps - k)
            if method == "bayes":
                draws = np.stack([g.random(chunk) for g in gens], axis=1)
            else:
                draws = np.stack([g.standard_normal(chunk) for g in gens], axis=1)
        t0, t1 = grid[k], grid[k + 1]
        h = t1 - t0
        sh = math.sqrt(h)
        c, mat, y = step_data(t0, h)
        cd = dag(c)
        mean = _trace(c @ rho + rho @ cd)
        if y is not None:
            integ += h * np.real(np.einsum("bij,ji->b", rho, y))
        if method == "bayes":
            kop, bop, rest, _ = mat
            kr = kop @ rho
            br = bop @ rho
            m = np.real(np.einsum("bij,ji->b", br, dag(kop)))
            q = np.real(np.einsum("bij,ji->b", br, dag(bop)))
            if increments is None:
                x = sample_tilted(draws[k % _CHUNK], m, q)
                dy = sh * x
            else:
                dy = incs[:, k]
                x = dy / sh
            xs = x[:, None, None]
            new = (kr + xs * br) @ dag(kop + xs * bop)
            for r in rest:
                new = new + r @ rho @ dag(r)
        else:
            if increments is None:
                dy = mean * h + sh * draws[k % _CHUNK]
            else:
                dy = incs[:, k]
            if method == "kraus":
                sigma = _apply(mat, rho)
                mop = eye + c * dy[:, None, None] - 0.5 * h * (cd @ c)
                new = mop @ sigma @ dag(mop)
            else:
                gain = c @ rho + rho @ cd - mean[:, None, None] * rho
                new = rho + h * _apply(mat, rho) + gain * (dy - mean * h)[:, None, None]
        new = 0.5 * (new + dag(new))
        tr = _trace(new)
        if np.any(~(tr > 0)) or not np.all(np.isfinite(new)):
            bad = int(np.flatnonzero(~(tr > 0) | ~np.all(np.isfinite(new), axis=(1, 2)))[0])
            raise InvalidInputError(f"trajectory {offset + bad} at t={t0:.6g}: state lost normalizability")
        rho = new / tr[:, None, None]
        w_obs = w_obs + dy
        mart = mart + (dy - mean * h)
        store(k + 1)

    return {"states": out_states, "observation": out_w, "martingale": out_m, "integral": out_integ}


def _counting_task(start, stop, seed, provider, rho0, grid, record_idx, refine, observable):
    gens = block_streams(seed, start, stop)
    try:
        return counting_block(provider, rho0, grid, record_idx, gens, refine=refine, observable=observable, offset=start)
    except BelavkinError:
        raise
    except Exception as exc:  # pragma: no cover - surfaced with the block range
        raise BelavkinError(f"trajectories {start}..{stop - 1}: {exc}") from exc


def _diffusive_task(start, stop, seed, model, spec, rho0, grid, record_idx, method, observable):
    gens = block_streams(seed, start, stop)
    return diffusive_block(
        model, spec, rho0, grid, record_idx, gens=gens, method=method, observable=observable, offset=start
    )


TASKS = {"counting": _counting_task, "diffusive": _diffusive_task}


def run_blocks(kind, n_traj, seed, workers=1, block_size=BLOCK_SIZE, **kwargs):
    """Run ``n_traj`` trajectories in fixed blocks and merge per-key results in index order."""
    if n_traj < 1:
        raise InvalidInputError("n_traj must be >= 1")
    seed = check_seed(seed)
    task = TASKS[kind]
    blocks = [(a, min(a + block_size, n_traj)) for a in range(0, n_traj, block_size)]
    if workers <= 1 or len(blocks) == 1:
        parts = [task(a, b, seed, **kwargs) for a, b in blocks]
    else:
        with ProcessPoolExecutor(max_workers=workers, mp_context=get_context("fork")) as pool:
            futures = [pool.submit(task, a, b, seed, **kwargs) for a, b in blocks]
            parts = [f.result() for f in futures]
    return {key: np.concatenate([p[key] for p in parts], axis=0) for key in parts[0]}
