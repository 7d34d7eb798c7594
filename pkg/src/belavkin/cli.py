"""Command line front end: ``belavkin {master,trajectories,derive,limit,check}``."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .errors import BelavkinError
from .io import (
    LIMIT_SCHEMA,
    MASTER_SCHEMA,
    SUMMARY_SCHEMA,
    load_config,
    read_records,
    RunConfig,
    write_csv,
    write_records,
)
from .rng import RNG_ALGORITHM

__all__ = ["main", "build_parser", "cmd_master", "cmd_trajectories", "cmd_derive", "cmd_limit", "cmd_check"]


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", encoding="utf-8", newline="")


def _close(fh):
    if fh is not sys.stdout:
        fh.close()


def _entry_names(dim):
    return [f"rho_{i}{j}" for i in range(dim) for j in range(dim)]


def cmd_master(cfg: RunConfig, out=None):
    """Master-equation states at ``0`` and every record time."""
    from .lindblad import master_path

    times = np.array([0.0] + cfg.record_times())
    path = master_path(cfg.model(), cfg.rho0(), times, dt=cfg.dt or 1e-3)
    header = ["t"]
    for name in _entry_names(path.shape[-1]):
        header += [f"{name}_re", f"{name}_im"]
    rows = []
    for t, rho in zip(times, path):
        row = [float(t)]
        for v in rho.ravel():
            row += [float(v.real), float(v.imag)]
        rows.append(row)
    fh = _open_out(out or cfg.out)
    try:
        write_csv(fh, MASTER_SCHEMA, header, rows)
    finally:
        _close(fh)
    return path


def _run(cfg: RunConfig):
    from .ensemble import counting_ensemble, homodyne_ensemble, scaled_counting_ensemble

    model, rho0, cps = cfg.model(), cfg.rho0(), cfg.record_times()
    common = dict(n_traj=cfg.n_traj, seed=cfg.seed, dt=cfg.step(), workers=cfg.workers)
    if cfg.scheme == "count":
        return counting_ensemble(model, rho0, cps, **common)
    if cfg.scheme == "scaled-count":
        return scaled_counting_ensemble(model, cfg.spec(), rho0, cps, **common)
    return homodyne_ensemble(model, cfg.spec(), rho0, cps, method=cfg.method, **common)


def _header(cfg: RunConfig):
    # worker count and paths are left out so the file depends on the run only
    conf = cfg.to_dict()
    for key in ("workers", "out", "summary"):
        conf.pop(key)
    conf.pop("schema")
    return {"config": conf, "rng": RNG_ALGORITHM, "dt": cfg.step()}


def summary_rows(cfg: RunConfig, times, states):
    """Ensemble mean, standard error and oracle value per time and entry."""
    from .lindblad import master_path
    from .stats import master_agreement

    ref = master_path(cfg.model(), cfg.rho0(), times, dt=1e-3)
    agg = master_agreement(states, ref)
    rows = []
    names = _entry_names(states.shape[-1])
    for j, t in enumerate(times):
        for k, name in enumerate(names):
            a, b = divmod(k, states.shape[-1])
            m, se, r = agg["mean"][j, a, b], agg["stderr"][j, a, b], ref[j, a, b]
            rows.append([float(t), name, float(m.real), float(m.imag), float(se.real), float(se.imag),
                         float(r.real), float(r.imag), float(agg["z"][j, a, b])])
    return rows, agg


SUMMARY_HEADER = ["t", "entry", "mean_re", "mean_im", "stderr_re", "stderr_im", "oracle_re", "oracle_im", "abs_z"]


def cmd_trajectories(cfg: RunConfig, out=None, summary=None, check=False):
    res = _run(cfg)
    path = out or cfg.out
    if path is None:
        raise BelavkinError("trajectories needs --out")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        write_records(fh, _header(cfg), res.times, res.states, res.observation, res.martingale)
    summary = summary or cfg.summary or path + ".summary.csv"
    if cfg.n_traj >= 2:
        rows, _ = summary_rows(cfg, res.times, res.states)
        with open(summary, "w", encoding="utf-8", newline="") as fh:
            write_csv(fh, SUMMARY_SCHEMA, SUMMARY_HEADER, rows)
    if check:
        return cmd_check(path)
    return 0


def cmd_check(path, out=None):
    """Statistical checks on a record file; returns the exit status."""
    from .stats import (
        COUNTING_FUNCTIONALS,
        DIFFUSIVE_FUNCTIONALS,
        bonferroni_threshold,
        counting_quadratic_variation,
        martingale_tests,
    )

    header, times, states, obs, mart = read_records(path)
    conf = dict(header["config"])
    cfg = RunConfig(**conf)
    _, agg = summary_rows(cfg, times, states)
    n_master = int(np.count_nonzero(agg["stderr"] != 0)) or 1
    thr = bonferroni_threshold(2 * n_master)
    ok_master = agg["max_abs_z"] <= 3.0 and agg["max_stderr"] <= 0.01
    pairs = list(zip(times[1:-1], times[2:]))
    funcs = COUNTING_FUNCTIONALS if cfg.scheme == "count" else DIFFUSIVE_FUNCTIONALS
    qv = None
    if cfg.scheme == "count":
        qv = counting_quadratic_variation(times, obs, mart)
    elif cfg.scheme == "scaled-count":
        qv = counting_quadratic_variation(times, obs, mart, cfg.epsilon)
    mt = martingale_tests(times, mart, obs, pairs=pairs, functionals=funcs, quadratic_variation=qv)
    fh = _open_out(out)
    try:
        fh.write(f"file: {path}\n")
        fh.write(f"scheme: {cfg.scheme} n_traj: {states.shape[0]}\n")
        fh.write(
            f"master agreement: max|z| = {agg['max_abs_z']:.3f}, max stderr = {agg['max_stderr']:.3g} "
            f"(bonferroni threshold {thr:.3f}) -> {'PASS' if ok_master else 'FAIL'}\n"
        )
        fh.write(
            f"martingale: max|z| = {mt['max_abs_z']:.3f} over {mt['n_tests']} tests "
            f"(bonferroni threshold {mt['threshold']:.3f}) -> {'PASS' if mt['within_3'] else 'FAIL'}\n"
        )
    finally:
        _close(fh)
    return 0 if ok_master and mt["within_3"] else 1


def cmd_derive(scheme="count", X="X", state_form=False, out=None):
    from .ito_symbolic import assemble_belavkin_equation, render_equation

    text = render_equation(assemble_belavkin_equation(scheme, X), state_form=state_form)
    fh = _open_out(out)
    try:
        fh.write(text)
    finally:
        _close(fh)
    return text


def cmd_limit(cfg: RunConfig, eps_schedule, out=None, estimator="predictable"):
    from .homodyne import diffusive_limit_report

    rep = diffusive_limit_report(
        cfg.model(), cfg.spec(), cfg.rho0(), eps_schedule, n_traj=cfg.n_traj, seed=cfg.seed,
        checkpoints=cfg.record_times(), workers=cfg.workers, estimator=estimator,
    )
    fh = _open_out(out or cfg.out)
    try:
        write_csv(fh, LIMIT_SCHEMA, ["epsilon", "checkpoint", "metric", "value", "stderr"], rep["rows"])
    finally:
        _close(fh)
    for e, d, s in zip(rep["epsilons"], rep["d"], rep["d_stderr"]):
        print(f"eps={e:g} d={d:.6g} stderr={s:.3g}", file=sys.stderr)
    return rep


def build_parser():
    p = argparse.ArgumentParser(prog="belavkin", description="Quantum trajectory simulation and filter derivations.")
    sub = p.add_subparsers(dest="command", required=True)

    def run_flags(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--scheme", choices=["count", "scaled-count", "homodyne"])
        sp.add_argument("--eps", type=float, help="inverse oscillator amplitude (scaled counting)")
        sp.add_argument("--traj", type=int, help="number of trajectories")
        sp.add_argument("--dt", type=float)
        sp.add_argument("--horizon", type=float)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out", help="output path ('-' for stdout)")

    sp = sub.add_parser("master", help="master-equation states at the record times")
    run_flags(sp)
    sp = sub.add_parser("trajectories", help="sample trajectories and write JSON-Lines records")
    run_flags(sp)
    sp.add_argument("--summary", help="summary CSV path (default: OUT.summary.csv)")
    sp.add_argument("--check", action="store_true", help="run the statistical checks afterwards")
    sp = sub.add_parser("derive", help="print the symbolic filter equation")
    sp.add_argument("scheme", nargs="?", choices=["count", "homodyne"])
    sp.add_argument("--scheme", dest="scheme_flag", choices=["count", "homodyne"])
    sp.add_argument("--x", default="X", help="observable symbol, 1 for the identity")
    sp.add_argument("--state-form", action="store_true", help="rho_t reading instead of E")
    sp.add_argument("--out")
    sp = sub.add_parser("limit", help="scaled counting against the diffusive filter")
    run_flags(sp)
    sp.add_argument("--schedule", default="0.5,0.25,0.125", help="comma separated decreasing eps values")
    sp.add_argument("--estimator", choices=["raw", "predictable"], default="predictable")
    sp = sub.add_parser("check", help="statistical checks on a record file")
    sp.add_argument("path")
    sp.add_argument("--out")
    return p


def _config(args):
    overrides = {
        "seed": args.seed,
        "scheme": args.scheme,
        "epsilon": args.eps,
        "n_traj": args.traj,
        "dt": args.dt,
        "horizon": args.horizon,
        "workers": args.workers,
    }
    return load_config(args.config, overrides)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "master":
            cmd_master(_config(args), out=args.out)
            return 0
        if args.command == "trajectories":
            return cmd_trajectories(_config(args), out=args.out, summary=args.summary, check=args.check)
        if args.command == "derive":
            cmd_derive(args.scheme_flag or args.scheme or "count", args.x, args.state_form, args.out)
            return 0
        if args.command == "limit":
            schedule = [float(x) for x in args.schedule.split(",") if x.strip()]
            cmd_limit(_config(args), schedule, out=args.out, estimator=args.estimator)
            return 0
        if args.command == "check":
            return cmd_check(args.path, args.out)
    except (BelavkinError, ValueError, OSError) as exc:
        print(f"belavkin: error: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
