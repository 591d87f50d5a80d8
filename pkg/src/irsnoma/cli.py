"""Command-line entry point: ``irsnoma {solve,sweep,complexity}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .complexity import ComplexityParams, complexity_table
from .harness import (MODES, SWEEP_VARS, SweepSpec, emit_results, run_mode,
                      run_monte_carlo, summarize, trial_seed)
from .pdd import PHASE_MODES, PddConfig, solve
from .system import SystemConfig, db2lin, error_variance_of, sample_channels
from .trellis import TrellisConfig


def _floats(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


def _pair(text):
    vals = _floats(text)
    if len(vals) == 1:
        vals = vals * 2
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected one or two comma-separated distances, got {text!r}")
    return tuple(vals)


def _add_system_args(p):
    d = SystemConfig()
    g = p.add_argument_group("system")
    g.add_argument("--N", type=int, default=d.N)
    g.add_argument("--M", type=int, default=d.M)
    g.add_argument("--P", type=float, default=d.P)
    g.add_argument("--sigma-n", type=float, default=d.sigma_n_sq, help="noise variance (linear)")
    g.add_argument("--sigma-au-db", type=float, default=float(10 * np.log10(d.sigma_au_sq)))
    g.add_argument("--sigma-iu-db", type=float, default=float(10 * np.log10(d.sigma_iu_sq)))
    g.add_argument("--d-au", type=_pair, default=d.d_au, help="km, one value or a pair")
    g.add_argument("--d-iu", type=_pair, default=d.d_iu, help="km, one value or a pair")
    g.add_argument("--d-ai", type=float, default=d.d_ai, help="km")
    g.add_argument("--link-gain-db", type=float, default=d.link_gain_db)
    g.add_argument("--seed", type=int, default=0, help="master seed")
    s = PddConfig()
    g = p.add_argument_group("solver")
    g.add_argument("--phase", choices=PHASE_MODES, default="continuous")
    g.add_argument("--gamma0", type=float, default=s.gamma0)
    g.add_argument("--zeta", type=float, default=s.zeta)
    g.add_argument("--eta", type=float, default=s.eta)
    g.add_argument("--epsilon", type=float, default=s.epsilon)
    g.add_argument("--max-iters", type=int, default=s.max_outer_iters)
    g.add_argument("--trellis-T", type=int, default=TrellisConfig().T)
    g.add_argument("--m-irs", type=int, default=TrellisConfig().m_irs)
    g.add_argument("--cold-discrete", action="store_true",
                   help="start discrete phase modes from scratch instead of a continuous solution")


def build_parser():
    parser = argparse.ArgumentParser(prog="irsnoma", description="Robust IRS-aided NOMA design and baselines")
    parser.add_argument("--config", help="file of key=value lines mirroring the long flags")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one channel realization and print the report")
    _add_system_args(p)
    p.add_argument("--mode", choices=MODES, default="noma-robust")
    p.add_argument("--trial", type=int, default=0)

    p = sub.add_parser("sweep", help="Monte-Carlo sweep written as CSV or JSON")
    _add_system_args(p)
    p.add_argument("--mode", default="noma-robust", help="comma list of " + ",".join(MODES))
    p.add_argument("--sweep-var", choices=SWEEP_VARS, default="M")
    p.add_argument("--sweep-values", type=_floats, default=[20.0])
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="record wall-clock times (output no longer reproducible)")
    p.add_argument("--out", default="-")
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("complexity", help="per-iteration cost table")
    p.add_argument("--N", type=int, default=2)
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--M", type=int, default=20)
    p.add_argument("--trellis-T", type=int, default=3)
    p.add_argument("--m-irs", type=int, default=4)
    p.add_argument("--mu-c", type=float, default=0.1)
    return parser


def read_config(path) -> list:
    """Turn ``key=value`` lines into ``--key value`` arguments."""
    args = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{n}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            args += ["--" + key.replace("_", "-"), value]
    return args


def _split_config(argv):
    """Pull ``--config FILE`` out of argv and splice the file's flags in first."""
    argv = list(argv)
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            path, rest = argv[i + 1], argv[:i] + argv[i + 2:]
        elif a.startswith("--config="):
            path, rest = a.split("=", 1)[1], argv[:i] + argv[i + 1:]
        else:
            continue
        cmd = next((j for j, x in enumerate(rest) if x in ("solve", "sweep", "complexity")), None)
        if cmd is None:
            return rest
        # file values come right after the subcommand, so later flags override them
        return rest[:cmd + 1] + read_config(path) + rest[cmd + 1:]
    return argv


def _configs(ns):
    cfg = SystemConfig(N=ns.N, M=ns.M, P=ns.P, sigma_n_sq=ns.sigma_n,
                       sigma_au_sq=float(db2lin(ns.sigma_au_db)), sigma_iu_sq=float(db2lin(ns.sigma_iu_db)),
                       d_au=ns.d_au, d_iu=ns.d_iu, d_ai=ns.d_ai, link_gain_db=ns.link_gain_db,
                       master_seed=ns.seed)
    pdd = PddConfig(gamma0=ns.gamma0, zeta=ns.zeta, eta=ns.eta, epsilon=ns.epsilon,
                    max_outer_iters=ns.max_iters, discrete_warm_start=not ns.cold_discrete)
    trellis = TrellisConfig(m_irs=ns.m_irs, T=ns.trellis_T)
    return cfg, pdd, trellis


def _cmd_solve(ns, out):
    cfg, pdd, trellis = _configs(ns)
    channels = sample_channels(cfg, trial_seed(cfg.master_seed, ns.trial))
    report = {"mode": ns.mode, "phase": ns.phase, "channel_hash": channels.digest(),
              "sigma_h_sq": error_variance_of(cfg, channels)}
    if ns.mode.startswith("noma"):
        robust = ns.mode == "noma-robust"
        ch = channels.perfect() if ns.mode == "noma-perfect" else channels
        rep = solve(ch, cfg, pdd, phase=ns.phase, trellis=trellis, robust=robust,
                    sigma_h_true=0.0 if ns.mode == "noma-perfect" else None)
        report.update(R1=rep.R1, R2=rep.R2, Rsum=rep.Rsum, iterations=rep.iterations,
                      converged=rep.converged, feasible=rep.feasible, residual=rep.residual,
                      gamma=rep.gamma, alpha=rep.a.tolist(), flags=rep.flags)
    else:
        R1, R2, Rs, it, conv, _, _ = run_mode(ns.mode, channels, cfg, pdd, ns.phase, trellis)
        report.update(R1=R1, R2=R2, Rsum=Rs, iterations=it, converged=conv)
    json.dump(report, out, indent=1)
    out.write("\n")


def _cmd_sweep(ns, out):
    cfg, pdd, trellis = _configs(ns)
    modes = tuple(m.strip() for m in ns.mode.split(",") if m.strip())
    values = [int(v) if ns.sweep_var in ("M", "T_memory") else v for v in ns.sweep_values]
    spec = SweepSpec(ns.sweep_var, tuple(values), modes, ns.phase, ns.trials, ns.seed)
    rows = run_monte_carlo(spec, cfg, pdd, trellis, workers=ns.workers, timing=ns.timing)
    if ns.out == "-":
        import csv
        from .harness import CSV_COLUMNS, _csv_value
        w = csv.writer(out, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_csv_value(getattr(r, k)) for k in CSV_COLUMNS])
    else:
        emit_results(rows, ns.out, ns.format)
        for s in summarize(rows):
            print(f"{spec.swept_var}={s['swept_value']:g} {s['mode']:15s} "
                  f"Rsum {s['mean']:.4f} +/- {s['ci95']:.4f} (n={s['n']})", file=out)


def _cmd_complexity(ns, out):
    p = ComplexityParams(N=ns.N, K=ns.K, M=ns.M, T_memory=ns.trellis_T, M_IRS=ns.m_irs, mu_c=ns.mu_c)
    table = complexity_table(p)
    for name, cost in table["costs"].items():
        print(f"{name:22s} {cost:.6g}", file=out)
    for name, ratio in table["ratios"].items():
        print(f"{name:22s} {ratio:.6g}", file=out)


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    try:
        argv = _split_config(argv)
    except (OSError, ValueError) as exc:
        print(f"irsnoma: error: {exc}", file=sys.stderr)
        return 2
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING)
    try:
        {"solve": _cmd_solve, "sweep": _cmd_sweep, "complexity": _cmd_complexity}[ns.command](ns, out)
    except ValueError as exc:
        print(f"irsnoma: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"irsnoma: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
