"""
Robust IRS-aided FDMA and TDMA baselines.

Both schemes give each user half of the resource, so their rate is

    R = 1/2 sum_k log2(1 + |h_k w_k|^2 / (sigma_h^2 ||w_k||^2 / 2 + sigma_n^2 / 2)).

With maximum-ratio beamformers only the channel gains ``||h_k||^2`` and
the power split ``(P1, P2)`` matter. FDMA shares one phase vector between
the users; TDMA reconfigures the IRS per time slot.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .system import (ChannelRealization, SystemConfig, effective_channels,
                     error_variance_of)

log = logging.getLogger(__name__)


@dataclass
class OmaSolution:
    W: np.ndarray                 # (N, 2), column k serves user k
    powers: tuple[float, float]
    v: list                       # one phase vector (FDMA) or one per user (TDMA)
    R1: float
    R2: float
    Rsum: float
    iterations: int
    converged: bool = True
    trajectory: list = field(default_factory=list)
    wall_ms: float = 0.0


def mrt_beamformer(h, P_k):
    """``sqrt(P_k) h^H / ||h||``; zero when the power or the channel is zero."""
    h = np.asarray(h, dtype=complex)
    norm = np.linalg.norm(h)
    if P_k <= 0:
        return np.zeros_like(h)
    if norm == 0:
        warnings.warn("zero channel with positive power, returning a zero beamformer", RuntimeWarning)
        return np.zeros_like(h)
    return np.sqrt(P_k) * h.conj() / norm


def oma_rates(h_eff, W, sigma_h_sq, sigma_n_sq):
    """Per-user and total OMA rates for beamformer columns ``W``."""
    h_eff = np.asarray(h_eff)
    rates = []
    for k in range(2):
        w = W[:, k]
        sig = abs(h_eff[k] @ w) ** 2
        den = 0.5 * sigma_h_sq * float(np.vdot(w, w).real) + 0.5 * sigma_n_sq
        rates.append(0.5 * np.log2(1.0 + sig / den) if sig > 0 else 0.0)
    return float(rates[0]), float(rates[1]), float(rates[0] + rates[1])


def rate_of_split(P1, g1, g2, sigma_h_sq, sigma_n_sq, P):
    """Twice the OMA sum rate as a function of the first user's power."""
    P2 = P - P1
    out = 0.0
    for p, g in ((P1, g1), (P2, g2)):
        out += np.log2(1.0 + p * g / (0.5 * p * sigma_h_sq + 0.5 * sigma_n_sq))
    return out


def phase_ascent(A, c, v, sweeps=1):
    """Cyclic coordinate maximisation of ``v A v^H + 2 Re{c v^H}`` on the unit circle."""
    v = np.array(v, dtype=complex, copy=True)
    s = v @ A                                    # s[i] = sum_j v_j a_ji
    for _ in range(sweeps):
        for i in range(v.size):
            z = s[i] - v[i] * A[i, i] + c[i]
            mag = abs(z)
            if mag == 0:
                continue
            new = z / mag
            s += (new - v[i]) * A[i, :]
            v[i] = new
    return v


def _gain_quadratic(channels: ChannelRealization, users):
    Hc = channels.H_c_est
    A = sum(Hc[k] @ Hc[k].conj().T for k in users)
    c = sum(channels.h_au_est[k] @ Hc[k].conj().T for k in users)
    return A, c


def fdma_phase_update(channels: ChannelRealization, v, sweeps=1):
    """Raise ``||h_1||^2 + ||h_2||^2`` with one shared phase vector."""
    A, c = _gain_quadratic(channels, (0, 1))
    return phase_ascent(A, c, v, sweeps)


def tdma_phase_update(channels: ChannelRealization, k, v_k, sweeps=1):
    """Raise ``||h_k||^2`` with a phase vector dedicated to user ``k``."""
    A, c = _gain_quadratic(channels, (k,))
    return phase_ascent(A, c, v_k, sweeps)


def power_allocation_closed_form(g1, g2, sigma_h_sq, sigma_n_sq, P):
    """Rate-optimal ``(P1, P2)`` with ``P1 + P2 = P``.

    The stationarity condition of the concave split objective is the
    quadratic ``a P1^2 + b P1 + c = 0`` with
    ``a = sigma_h^4 (g2 - g1) / 4`` and ``b > 0``; the relevant root is
    written as ``-2c / (b + sqrt(b^2 - 4ac))``, which stays finite as
    ``a -> 0``.
    """
    s, n = sigma_h_sq, sigma_n_sq
    if g1 <= 0 and g2 <= 0:
        warnings.warn("both users have zero gain, splitting power evenly", RuntimeWarning)
        return P / 2, P / 2
    if g1 <= 0:
        return 0.0, float(P)
    if g2 <= 0:
        return float(P), 0.0
    a = 0.25 * s * s * (g2 - g1)
    b = (0.5 * g2 * s * n + n * g1 * g2 + 0.5 * P * s * s * g1
         + P * s * g1 * g2 + 0.5 * g1 * s * n)
    c = (0.25 * n * n * g2 - 0.25 * n * n * g1 - 0.5 * P * P * s * g1 * g2
         - 0.5 * P * n * s * g1 - 0.25 * P * P * s * s * g1 - 0.5 * P * n * g1 * g2)
    disc = b * b - 4 * a * c
    if disc < 0:
        log.warning("negative discriminant %.3g in power allocation, clamped to zero", disc)
        disc = 0.0
    P1 = -2 * c / (b + np.sqrt(disc))
    P1 = float(min(max(P1, 0.0), P))
    return P1, float(P - P1)


def _finish(channels, vs, powers, sigma_h_sq, sigma_n_sq):
    N = channels.N
    W = np.zeros((N, 2), dtype=complex)
    for k in range(2):
        h = effective_channels(channels, vs[k])[k]
        W[:, k] = mrt_beamformer(h, powers[k]) if powers[k] > 0 else 0
    R = [0.0, 0.0]
    for k in range(2):
        h = effective_channels(channels, vs[k])
        Wk = np.zeros_like(W)
        Wk[:, k] = W[:, k]
        R[k] = oma_rates(h, Wk, sigma_h_sq, sigma_n_sq)[k]
    return W, R


def _gains(channels, vs):
    return [float(np.sum(np.abs(effective_channels(channels, vs[k])[k]) ** 2)) for k in range(2)]


def fdma_solve(channels: ChannelRealization, cfg: SystemConfig, sigma_h_sq=None,
               max_iters=200, tol=1e-4, sweeps=1) -> OmaSolution:
    """Alternate phase ascent and the closed-form power split.

    A phase step that would lower the sum rate is discarded and ends the
    loop, so the recorded trajectory never decreases.
    """
    if sigma_h_sq is None:
        sigma_h_sq = error_variance_of(cfg, channels)
    n, P = cfg.sigma_n_sq, cfg.P
    v = np.ones(channels.M, dtype=complex)

    def rate(v, p):
        g1, g2 = _gains(channels, [v, v])
        return 0.5 * rate_of_split(p[0], g1, g2, sigma_h_sq, n, P)

    powers = power_allocation_closed_form(*_gains(channels, [v, v]), sigma_h_sq, n, P)
    trajectory = [rate(v, powers)]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        v_new = fdma_phase_update(channels, v, sweeps) if channels.M else v
        p_new = power_allocation_closed_form(*_gains(channels, [v_new, v_new]), sigma_h_sq, n, P)
        r_new = rate(v_new, p_new)
        if r_new < trajectory[-1]:
            converged = True
            break
        v, powers = v_new, p_new
        trajectory.append(r_new)
        if trajectory[-1] - trajectory[-2] < tol:
            converged = True
            break
    W, R = _finish(channels, [v, v], powers, sigma_h_sq, n)
    return OmaSolution(W, powers, [v], R[0], R[1], R[0] + R[1], it, converged, trajectory)


def tdma_solve(channels: ChannelRealization, cfg: SystemConfig, sigma_h_sq=None,
               max_iters=200, tol=1e-4, sweeps=1, v_init=None) -> OmaSolution:
    """Per-slot phase ascent to convergence, then the closed-form power split.

    Each slot starts from ``v_init``, by default the shared FDMA phase
    vector. The ascent is monotone, so every user ends with at least the
    gain it gets from the shared vector.
    """
    if sigma_h_sq is None:
        sigma_h_sq = error_variance_of(cfg, channels)
    n, P = cfg.sigma_n_sq, cfg.P
    if v_init is None:
        v_init = fdma_solve(channels, cfg, sigma_h_sq, max_iters, tol, sweeps).v[0]
    vs = [np.array(v_init, dtype=complex, copy=True) for _ in range(2)]
    iters = 0
    converged = True
    for k in range(2):
        gain = _gains(channels, vs)[k]
        for it in range(1, max_iters + 1):
            if not channels.M:
                break
            vs[k] = tdma_phase_update(channels, k, vs[k], sweeps)
            new = _gains(channels, vs)[k]
            done = new - gain <= tol * max(1.0, gain)
            gain = new
            if done:
                break
        else:
            converged = False
        iters = max(iters, it if channels.M else 0)
    powers = power_allocation_closed_form(*_gains(channels, vs), sigma_h_sq, n, P)
    W, R = _finish(channels, vs, powers, sigma_h_sq, n)
    return OmaSolution(W, powers, vs, R[0], R[1], R[0] + R[1], iters, converged, [R[0] + R[1]])
