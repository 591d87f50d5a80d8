"""Per-iteration flop-count models for the PDD solver and the interior-point baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass

PHASES = ("continuous", "discrete_trellis", "discrete_quantize", "discrete_exhaustive")


@dataclass(frozen=True)
class ComplexityParams:
    N: int = 2
    K: int = 2
    M: int = 20
    T_memory: int = 3
    M_IRS: int = 4
    mu_c: float = 0.1

    def __post_init__(self):
        for name in ("N", "K", "M", "T_memory", "M_IRS"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.mu_c < 1:
            raise ValueError(f"mu_c must lie in (0, 1), got {self.mu_c}")


def pdd_step_cost(p: ComplexityParams, phase: str = "continuous") -> float:
    """Flops of one PDD iteration for the given phase-selection method."""
    N, M = float(p.N), float(p.M)
    if phase == "continuous":
        return 6 * M**2 + (2 * N**2 + 8 * N) * M + 2 * N**3 + 21 * N**2 + 157 * N
    base = 2 * M**2 + 4 * N * M + 2 * N**3 + 20 * N**2 + 150 * N
    if phase == "discrete_trellis":
        return base + (M - p.T_memory) * float(p.M_IRS) ** (p.T_memory + 1)
    if phase == "discrete_quantize":
        return base + M
    if phase == "discrete_exhaustive":
        return base + float(p.M_IRS) ** p.M
    raise ValueError(f"unknown phase {phase!r}, expected one of {PHASES}")


def baseline_step_cost(p: ComplexityParams) -> float:
    """Flops of one iteration of the alternating interior-point baseline (natural log)."""
    K, N = p.K, p.N
    return (max(N, 3 * K * (K - 1) ** 4) * math.sqrt(N) * math.log(1.0 / p.mu_c)
            + (3 * K**2 + p.M) ** 3.5)


def complexity_table(p: ComplexityParams) -> dict:
    """Costs of every method plus the ratios quoted for the default scenario."""
    costs = {ph: pdd_step_cost(p, ph) for ph in PHASES}
    costs["baseline"] = baseline_step_cost(p)
    ratios = {
        "trellis/quantize": costs["discrete_trellis"] / costs["discrete_quantize"],
        "trellis/exhaustive": costs["discrete_trellis"] / costs["discrete_exhaustive"],
        "baseline/continuous": costs["baseline"] / costs["continuous"],
    }
    return {"params": p, "costs": costs, "ratios": ratios}
