"""
Monte-Carlo driver: paired trials over a swept parameter, result rows,
CSV/JSON emission and summary statistics.

Every trial index owns one seed derived from ``(master_seed, trial)``, so
all modes and all swept values of a trial see the same small-scale fading
and error draws. Sweeping ``M`` yields nested IRS realizations because
IRS quantities are drawn element by element.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .oma import fdma_solve, tdma_solve
from .pdd import PHASE_MODES, PddConfig, solve
from .system import SystemConfig, db2lin, error_variance_of, sample_channels
from .trellis import TrellisConfig

log = logging.getLogger(__name__)

MODES = ("noma-robust", "noma-nonrobust", "noma-perfect", "fdma", "tdma")
SWEEP_VARS = ("M", "P", "sigma_sq", "T_memory")
CSV_COLUMNS = ("trial", "mode", "phase_mode", "swept_var", "swept_value",
               "R1", "R2", "Rsum", "iters", "converged", "residual", "wall_ms")


@dataclass(frozen=True)
class SweepSpec:
    swept_var: str = "M"
    values: tuple = (20,)
    modes: tuple = ("noma-robust",)
    phase_mode: str = "continuous"
    trials: int = 200
    master_seed: int = 0

    def __post_init__(self):
        if self.swept_var not in SWEEP_VARS:
            raise ValueError(f"unknown swept variable {self.swept_var!r}, expected one of {SWEEP_VARS}")
        if not self.values:
            raise ValueError("the value list must not be empty")
        if not self.modes:
            raise ValueError("the mode list must not be empty")
        bad = [m for m in self.modes if m not in MODES]
        if bad:
            raise ValueError(f"unknown modes {bad}, expected a subset of {MODES}")
        if self.phase_mode not in PHASE_MODES:
            raise ValueError(f"unknown phase mode {self.phase_mode!r}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "modes", tuple(self.modes))


@dataclass
class TrialResult:
    trial: int
    mode: str
    phase_mode: str
    swept_var: str
    swept_value: float
    R1: float
    R2: float
    Rsum: float
    iters: int
    converged: bool
    residual: float
    wall_ms: float
    channel_hash: str = field(default="", compare=False)

    def __post_init__(self):
        if abs(self.Rsum - (self.R1 + self.R2)) > 1e-9:
            raise ValueError("Rsum must equal R1 + R2")


def trial_seed(master_seed: int, trial: int) -> int:
    """Counter-based seed for one trial, independent of sweep values and modes."""
    return int(np.random.SeedSequence([master_seed, trial]).generate_state(1, dtype=np.uint64)[0])


def apply_sweep_value(cfg: SystemConfig, trellis: TrellisConfig, var: str, value):
    """Return ``(cfg, trellis)`` with the swept parameter set to ``value``."""
    if var == "M":
        return cfg.with_(M=int(value)), trellis
    if var == "P":
        return cfg.with_(P=float(value)), trellis
    if var == "sigma_sq":
        s = float(db2lin(value))
        return cfg.with_(sigma_au_sq=s, sigma_iu_sq=s), trellis
    if var == "T_memory":
        return cfg, TrellisConfig(m_irs=trellis.m_irs, T=int(value), state_budget=trellis.state_budget)
    raise ValueError(f"unknown swept variable {var!r}")


def run_mode(mode, channels, cfg, pdd, phase, trellis):
    """Solve one realization in one mode; returns the fields of a result row."""
    t0 = time.perf_counter()
    if mode in ("noma-robust", "noma-nonrobust"):
        rep = solve(channels, cfg, pdd, phase=phase, trellis=trellis, robust=mode == "noma-robust")
        out = (rep.R1, rep.R2, rep.Rsum, rep.iterations, rep.converged, rep.residual)
    elif mode == "noma-perfect":
        rep = solve(channels.perfect(), cfg, pdd, phase=phase, trellis=trellis,
                    robust=False, sigma_h_true=0.0)
        out = (rep.R1, rep.R2, rep.Rsum, rep.iterations, rep.converged, rep.residual)
    elif mode in ("fdma", "tdma"):
        sol = (fdma_solve if mode == "fdma" else tdma_solve)(channels, cfg,
                                                             error_variance_of(cfg, channels))
        out = (sol.R1, sol.R2, sol.Rsum, sol.iterations, sol.converged, 0.0)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return out + (1000 * (time.perf_counter() - t0),)


def _work_item(args):
    spec, cfg, pdd, trellis, vi, trial, timing = args
    value = spec.values[vi]
    cfg_v, trellis_v = apply_sweep_value(cfg, trellis, spec.swept_var, value)
    channels = sample_channels(cfg_v, trial_seed(spec.master_seed, trial))
    digest = channels.digest()
    rows = []
    for mode in spec.modes:
        R1, R2, Rs, it, conv, res, ms = run_mode(mode, channels, cfg_v, pdd, spec.phase_mode, trellis_v)
        rows.append(TrialResult(trial, mode, spec.phase_mode, spec.swept_var, value, R1, R2, Rs,
                                int(it), bool(conv), float(res), ms if timing else 0.0, digest))
    return vi, trial, rows


def run_monte_carlo(spec: SweepSpec, cfg: SystemConfig = SystemConfig(), pdd: PddConfig = PddConfig(),
                    trellis: TrellisConfig = TrellisConfig(), workers: int = 1,
                    timing: bool = False) -> list:
    """Run every (value, trial) pair and return rows ordered by value, mode, trial.

    ``timing=False`` zeroes the wall-clock column so that reruns produce
    identical output. Solver non-convergence is reported in the rows.
    """
    items = [(spec, cfg, pdd, trellis, vi, t, timing)
             for vi in range(len(spec.values)) for t in range(spec.trials)]
    if workers <= 1:
        results = [_work_item(it) for it in items]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_work_item, items, chunksize=max(1, len(items) // (8 * workers))))
    mode_rank = {m: i for i, m in enumerate(spec.modes)}
    keyed = []
    for vi, t, rs in results:
        if rs:
            log.debug("value %s trial %d channels %s", spec.values[vi], t, rs[0].channel_hash)
        keyed.extend(((vi, mode_rank[r.mode], r.trial), r) for r in rs)
    keyed.sort(key=lambda kr: kr[0])
    rows = [r for _, r in keyed]
    return rows


def _csv_value(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def emit_results(rows, path, format: str = "csv") -> None:
    """Write rows as CSV (fixed columns, one header row) or as a JSON array."""
    if format not in ("csv", "json"):
        raise ValueError(f"unknown format {format!r}")
    records = [{k: getattr(r, k) for k in CSV_COLUMNS} for r in rows]
    try:
        with open(path, "w", newline="") as fh:
            if format == "csv":
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(CSV_COLUMNS)
                for rec in records:
                    writer.writerow([_csv_value(rec[k]) for k in CSV_COLUMNS])
            else:
                json.dump(records, fh, indent=1)
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_results(path) -> list:
    """Parse a CSV written by :func:`emit_results` back into rows."""
    out = []
    types = {f.name: f.type for f in fields(TrialResult)}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            kw = {}
            for k, v in rec.items():
                t = types[k]
                if t in ("int",):
                    kw[k] = int(v)
                elif t in ("float",):
                    kw[k] = float(v)
                elif t in ("bool",):
                    kw[k] = v == "true"
                else:
                    kw[k] = v
            try:
                kw["swept_value"] = float(kw["swept_value"])
            except ValueError:
                pass
            out.append(TrialResult(**kw))
    return out


def mean_ci(x):
    """Sample mean and the half-width of a normal-approximation 95% interval."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    if x.size == 1:
        return float(x[0]), float("inf")
    return float(x.mean()), float(1.96 * x.std(ddof=1) / np.sqrt(x.size))


def summarize(rows) -> list:
    """Mean and 95% CI of Rsum per (swept value, mode), in first-seen order."""
    groups = {}
    for r in rows:
        groups.setdefault((float(r.swept_value), r.mode), []).append(r.Rsum)
    out = []
    for (value, mode), xs in groups.items():
        m, ci = mean_ci(xs)
        out.append({"swept_value": value, "mode": mode, "n": len(xs), "mean": m, "ci95": ci})
    return out


def paired_difference(rows, mode_a, mode_b, value=None):
    """Mean and 95% CI of ``Rsum(mode_a) - Rsum(mode_b)`` over shared trials."""
    a, b = {}, {}
    for r in rows:
        if value is not None and float(r.swept_value) != float(value):
            continue
        key = (float(r.swept_value), r.trial)
        if r.mode == mode_a:
            a[key] = r.Rsum
        elif r.mode == mode_b:
            b[key] = r.Rsum
    keys = sorted(set(a) & set(b))
    return mean_ci([a[k] - b[k] for k in keys])


def as_dict(row: TrialResult) -> dict:
    return asdict(row)
