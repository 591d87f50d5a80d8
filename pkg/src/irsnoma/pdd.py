"""
Penalty dual decomposition with closed-form block updates for the robust
two-user NOMA beamforming problem.

The solver keeps the primal blocks ``W, a, v, T``, their auxiliary copies
``Wbar, Tbar, abar`` and one multiplier per equality coupling:

    T = W^H H^H   (Lambda_h),   Tbar = T   (Lambda_t),
    Wbar = W      (Lambda_w),   abar = a   (lambda_a).

One outer iteration refreshes the weighted-MSE auxiliaries ``q, d`` and
then minimises, block by block and in closed form,

    L = sum_i (d_i f_i(q_i) - ln d_i) + Q_gamma

where ``Q_gamma`` is the augmented-Lagrangian penalty. The ``-ln d_i``
term is constant for every block except ``(q, d)``, so each step is a
descent step on ``L``. Multipliers are updated when all constraint
residuals are below ``eta``; otherwise the penalty ``gamma`` is shrunk.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .system import (ChannelRealization, SystemConfig, effective_channels,
                     error_variance_of, noma_rates)
from .trellis import (TrellisConfig, exhaustive_search, quantize_phases,
                      trellis_benchmark, trellis_search)

log = logging.getLogger(__name__)

PHASE_MODES = ("continuous", "trellis", "quantize", "exhaustive")


class ProjectionError(ValueError):
    """Raised when a projection target is undefined."""


@dataclass(frozen=True)
class PddConfig:
    gamma0: float = 2.0661
    zeta: float = 0.7
    eta: float = 0.1
    epsilon: float = 1e-3
    max_outer_iters: int = 1500
    inner_phase_sweeps: int = 1
    dual_init: float = 0.1
    gamma_floor: float = 1e-8
    # discrete modes first solve with continuous phases, then restart the penalty
    discrete_warm_start: bool = True

    def __post_init__(self):
        if not 0 < self.zeta < 1:
            raise ValueError(f"zeta must lie in (0, 1), got {self.zeta}")
        if min(self.eta, self.epsilon, self.gamma0) <= 0:
            raise ValueError("eta, epsilon and gamma0 must be positive")
        if self.max_outer_iters < 1 or self.inner_phase_sweeps < 1:
            raise ValueError("iteration counts must be positive")


@dataclass
class PddState:
    W: np.ndarray          # (N, 2)
    a: np.ndarray          # (2,)
    v: np.ndarray          # (M,)
    T: np.ndarray          # (2, 2), T[i, j] = w_i^H h_j^H
    Tbar: np.ndarray
    Wbar: np.ndarray
    abar: np.ndarray
    Lambda_w: np.ndarray
    Lambda_h: np.ndarray
    Lambda_t: np.ndarray
    lambda_a: np.ndarray
    gamma: float
    q: np.ndarray = field(default_factory=lambda: np.zeros(2, dtype=complex))
    d: np.ndarray = field(default_factory=lambda: np.ones(2))

    def copy(self) -> "PddState":
        return replace(self, **{k: np.array(getattr(self, k), copy=True)
                                for k in ("W", "a", "v", "T", "Tbar", "Wbar", "abar", "Lambda_w",
                                          "Lambda_h", "Lambda_t", "lambda_a", "q", "d")})


@dataclass
class SolveReport:
    R1: float
    R2: float
    Rsum: float
    iterations: int
    residual: float
    gamma: float
    converged: bool
    feasible: bool
    ordered: bool
    trajectory: list = field(default_factory=list)
    W: np.ndarray | None = None
    a: np.ndarray | None = None
    v: np.ndarray | None = None
    flags: dict = field(default_factory=dict)
    wall_ms: float = 0.0
    state: PddState | None = field(default=None, repr=False)


# --------------------------------------------------------------------------
# initialisation and auxiliaries

def init_state(channels: ChannelRealization, cfg: SystemConfig, pdd: PddConfig = PddConfig()) -> PddState:
    N, M = channels.N, channels.M
    W = np.full((N, 2), 0.9j * np.sqrt(cfg.P / (2 * cfg.K * N)))
    a = np.array([0.5, 0.5])
    a = a / np.linalg.norm(a)
    v = np.ones(M, dtype=complex)
    H = effective_channels(channels, v)
    T = W.conj().T @ H.conj().T
    lam = pdd.dual_init
    # the constrained copy must start feasible, like a
    Tbar = project_Tbar(T, np.zeros((2, 2)), 1.0)
    return PddState(
        W=W, a=a, v=v, T=T, Tbar=Tbar, Wbar=W.copy(), abar=a.copy(),
        Lambda_w=np.full((N, 2), lam, dtype=complex),
        Lambda_h=np.full((2, 2), lam, dtype=complex),
        Lambda_t=np.full((2, 2), lam, dtype=complex),
        lambda_a=np.full(2, lam),
        gamma=pdd.gamma0,
    )


def _power(W):
    return float(np.sum(np.abs(W) ** 2))


def update_aux(state: PddState, sigma_h_sq, sigma_n_sq):
    """Optimal ``(q, d)`` for the current ``T, a, W``."""
    t11, t12, t22 = state.T[0, 0], state.T[0, 1], state.T[1, 1]
    a1, a2 = state.a
    floor = sigma_h_sq * _power(state.W) + sigma_n_sq
    den1 = floor
    den2 = a1 * a1 * abs(t12) ** 2 + floor
    q = np.array([a1 * t11 / (a1 * a1 * abs(t11) ** 2 + den1),
                  a2 * t22 / (a2 * a2 * abs(t22) ** 2 + den2)])
    d = np.array([1.0 + a1 * a1 * abs(t11) ** 2 / den1,
                  1.0 + a2 * a2 * abs(t22) ** 2 / den2])
    return q, d


def mse_terms(state: PddState, sigma_h_sq, sigma_n_sq):
    """``(f_1, f_2)`` evaluated at the stored ``q``."""
    q1, q2 = state.q
    t11, t12, t22 = state.T[0, 0], state.T[0, 1], state.T[1, 1]
    a1, a2 = state.a
    pw = _power(state.W)
    f1 = abs(1 - np.conj(q1) * a1 * t11) ** 2 + (sigma_h_sq * pw + sigma_n_sq) * abs(q1) ** 2
    f2 = (abs(1 - np.conj(q2) * a2 * t22) ** 2 + a1 * a1 * abs(q2 * t12) ** 2
          + (sigma_h_sq * pw + sigma_n_sq) * abs(q2) ** 2)
    return float(f1), float(f2)


def penalty(state: PddState, channels: ChannelRealization) -> float:
    """The augmented-Lagrangian penalty ``Q_gamma``."""
    g = state.gamma
    H = effective_channels(channels, state.v)
    WH = state.W.conj().T @ H.conj().T
    total = (np.sum(np.abs(state.W - state.Wbar + g * state.Lambda_w) ** 2)
             + np.sum(np.abs(state.T - WH + g * state.Lambda_h) ** 2)
             + np.sum(np.abs(state.T - state.Tbar + g * state.Lambda_t) ** 2)
             + np.sum((state.a - state.abar + g * state.lambda_a) ** 2))
    return float(total / (2 * g))


def surrogate_objective(state: PddState, channels, sigma_h_sq, sigma_n_sq) -> float:
    """``sum_i (d_i f_i - ln d_i) + Q_gamma``, the quantity every block step decreases."""
    f = mse_terms(state, sigma_h_sq, sigma_n_sq)
    val = sum(di * fi - np.log(di) for di, fi in zip(state.d, f))
    return float(val + penalty(state, channels))


def rate_lower_bound(state: PddState, sigma_h_sq, sigma_n_sq) -> float:
    """``sum_i (ln d_i - d_i f_i) + 2`` in nats; tight at the optimal ``(q, d)``."""
    f = mse_terms(state, sigma_h_sq, sigma_n_sq)
    return float(sum(np.log(di) - di * fi for di, fi in zip(state.d, f)) + 2.0)


def design_rate_nats(state: PddState, sigma_h_sq, sigma_n_sq) -> float:
    """Sum rate in nats written through ``T`` instead of the channels."""
    a1, a2 = state.a
    floor = sigma_h_sq * _power(state.W) + sigma_n_sq
    t11, t12, t22 = state.T[0, 0], state.T[0, 1], state.T[1, 1]
    return float(np.log1p(a1 * a1 * abs(t11) ** 2 / floor)
                 + np.log1p(a2 * a2 * abs(t22) ** 2 / (a1 * a1 * abs(t12) ** 2 + floor)))


# --------------------------------------------------------------------------
# primal block updates

def update_W(state: PddState, channels: ChannelRealization, sigma_h_sq) -> np.ndarray:
    g = state.gamma
    q, d = state.q, state.d
    H = effective_channels(channels, state.v)
    N = H.shape[1]
    shift = 2 * g * sigma_h_sq * float(np.sum(np.abs(q) ** 2 * d))
    lhs = (1.0 + shift) * np.eye(N) + H.conj().T @ H
    rhs = state.Wbar - g * state.Lambda_w + H.conj().T @ (state.T + g * state.Lambda_h).conj().T
    return np.linalg.solve(lhs, rhs)


def update_a(state: PddState) -> np.ndarray:
    g = state.gamma
    (q1, q2), (d1, d2) = state.q, state.d
    t11, t12, t22 = state.T[0, 0], state.T[0, 1], state.T[1, 1]
    ab, la = state.abar, state.lambda_a
    a1 = ((2 * g * d1 * np.real(q1 * np.conj(t11)) + ab[0] - g * la[0])
          / (1 + 2 * g * d1 * abs(q1) ** 2 * abs(t11) ** 2 + 2 * g * d2 * abs(np.conj(q2) * t12) ** 2))
    a2 = ((2 * g * d2 * np.real(np.conj(q2) * t22) + ab[1] - g * la[1])
          / (1 + 2 * g * d2 * abs(q2) ** 2 * abs(t22) ** 2))
    return np.array([a1, a2], dtype=float)


def update_T(state: PddState, channels: ChannelRealization) -> np.ndarray:
    g = state.gamma
    (q1, q2), (d1, d2) = state.q, state.d
    a1, a2 = state.a
    H = effective_channels(channels, state.v)
    base = state.W.conj().T @ H.conj().T + state.Tbar - g * (state.Lambda_h + state.Lambda_t)
    T = np.empty((2, 2), dtype=complex)
    T[0, 0] = (2 * g * d1 * q1 * a1 + base[0, 0]) / (2 * g * d1 * abs(q1) ** 2 * a1 * a1 + 2)
    T[0, 1] = base[0, 1] / (2 * g * d2 * a1 * a1 * abs(q2) ** 2 + 2)
    T[1, 0] = base[1, 0] / 2
    T[1, 1] = (2 * g * d2 * q2 * a2 + base[1, 1]) / (2 * g * d2 * abs(q2) ** 2 * a2 * a2 + 2)
    return T


# --------------------------------------------------------------------------
# projections onto the constraint sets of the auxiliary copies

def tbar_candidates(Y) -> list:
    """Points considered when ``|y11| < |y22|``.

    The two equal-diagonal matrices are the textbook candidates; the third
    keeps each diagonal phase and sets both moduli to their mean, which is
    the exact Euclidean projection for complex entries.
    """
    y11, y22 = Y[0, 0], Y[1, 1]
    minus = Y.copy()
    minus[0, 0] = minus[1, 1] = (y11 - y22) / 2
    plus = Y.copy()
    plus[0, 0] = plus[1, 1] = (y11 + y22) / 2
    r = (abs(y11) + abs(y22)) / 2
    u22 = y22 / abs(y22)
    u11 = y11 / abs(y11) if y11 != 0 else u22
    exact = Y.copy()
    exact[0, 0], exact[1, 1] = r * u11, r * u22
    return [minus, plus, exact]


def project_Tbar(T, Lambda_t, gamma) -> np.ndarray:
    """Nearest point to ``T + gamma Lambda_t`` with ``|t11| >= |t22|``."""
    Y = np.asarray(T) + gamma * np.asarray(Lambda_t)
    if abs(Y[0, 0]) ** 2 >= abs(Y[1, 1]) ** 2:
        return Y
    cands = tbar_candidates(Y)
    dists = [np.linalg.norm(X - Y) for X in cands]
    return cands[int(np.argmin(dists))]


def project_Wbar(W, Lambda_w, gamma, P) -> np.ndarray:
    Y = np.asarray(W) + gamma * np.asarray(Lambda_w)
    norm = np.linalg.norm(Y)
    if norm <= np.sqrt(P):
        return Y
    return np.sqrt(P) * Y / norm


def project_abar(a, lambda_a, gamma) -> np.ndarray:
    """Nearest unit-norm pair to ``a + gamma lambda_a``."""
    u = np.asarray(a, dtype=float) + gamma * np.asarray(lambda_a, dtype=float)
    norm = np.hypot(u[0], u[1])
    if norm == 0:
        raise ProjectionError("cannot project the origin onto the unit circle")
    return u / norm


# --------------------------------------------------------------------------
# IRS phase block

def build_phase_quadratic(state: PddState, channels: ChannelRealization):
    """``(A, c)`` such that the penalty depends on ``v`` through
    ``v A v^H - 2 Re{c v^H}`` (plus a constant)."""
    g = state.gamma
    Hc = channels.H_c_est                        # (2, M, N)
    U = np.einsum("jmn,ni->ijm", Hc, state.W)    # U[i, j] = Hc_j w_i
    direct = channels.h_au_est @ state.W         # direct[j, i] = h_au_j w_i
    b = np.conj(state.T + g * state.Lambda_h) - direct.T   # b[i, j]
    U2 = U.reshape(-1, U.shape[-1])
    A = (U2.T @ U2.conj()) / (2 * g)
    c = np.einsum("ij,ijm->m", b, U.conj()) / (2 * g)
    return A, c


def phase_objective(v, A, c) -> float:
    v = np.asarray(v)
    return float(np.real(v @ A @ v.conj()) - 2 * np.real(c @ v.conj()))


def update_v_continuous(A, c, v, sweeps=1) -> np.ndarray:
    """Cyclic exact minimisation over one unit-modulus phase at a time."""
    v = np.array(v, dtype=complex, copy=True)
    s = v @ A                                    # s[k] = sum_i v_i a_ik
    for _ in range(sweeps):
        for k in range(v.size):
            z = c[k] - (s[k] - v[k] * A[k, k])
            mag = abs(z)
            if mag == 0:
                continue
            new = z / mag
            s += (new - v[k]) * A[k, :]
            v[k] = new
    return v


# --------------------------------------------------------------------------
# residuals and the multiplier / penalty step

def residuals(state: PddState, channels: ChannelRealization):
    H = effective_channels(channels, state.v)
    WH = state.W.conj().T @ H.conj().T
    return (float(np.linalg.norm(state.T - WH)),
            float(np.linalg.norm(state.W - state.Wbar)),
            float(np.linalg.norm(state.T - state.Tbar)),
            float(np.linalg.norm(state.a - state.abar)))


def dual_or_penalty_step(state: PddState, res, pdd: PddConfig, channels: ChannelRealization) -> PddState:
    """Multiplier ascent when every residual is at most ``eta``, else shrink ``gamma``."""
    if max(res) <= pdd.eta:
        g = state.gamma
        H = effective_channels(channels, state.v)
        WH = state.W.conj().T @ H.conj().T
        state.lambda_a = state.lambda_a + (state.a - state.abar) / g
        state.Lambda_w = state.Lambda_w + (state.W - state.Wbar) / g
        state.Lambda_t = state.Lambda_t + (state.T - state.Tbar) / g
        state.Lambda_h = state.Lambda_h + (state.T - WH) / g
    else:
        state.gamma = max(pdd.zeta * state.gamma, pdd.gamma_floor)
    return state


# --------------------------------------------------------------------------
# driver

def _phase_step(state, channels, phase, trellis, sweeps, flags):
    A, c = build_phase_quadratic(state, channels)
    if phase in ("continuous", "quantize"):
        return update_v_continuous(A, c, state.v, sweeps)
    # a continuous warm start is first rounded onto the alphabet
    incumbent = quantize_phases(state.v, trellis.m_irs)
    if phase == "trellis":
        cand = trellis_search(A, c, trellis, v_init=incumbent)
    else:
        cand = exhaustive_search(A, c, trellis.m_irs)
    if trellis_benchmark(cand, A, c) > trellis_benchmark(incumbent, A, c):
        flags["phase_rejected"] = flags.get("phase_rejected", 0) + 1
        return incumbent
    return cand


def solve(channels: ChannelRealization, cfg: SystemConfig, pdd: PddConfig = PddConfig(),
          phase: str = "continuous", trellis: TrellisConfig = TrellisConfig(),
          robust: bool = True, sigma_h_true: float | None = None,
          callback=None, warm_start: PddState | None = None) -> SolveReport:
    """Run the PDD outer loop on one channel realization.

    ``robust=False`` designs with zero error variance. Reported rates are
    always computed with ``sigma_h_true`` (by default the error variance of
    the configuration), so a non-robust design is scored under the real
    error. ``callback(stage, state)`` is invoked after every block update
    and is meant for diagnostics and tests.

    In the trellis and exhaustive modes a discrete phase vector started
    from scratch locks the other blocks in place, so by default the loop
    first runs with continuous phases and then continues from that state
    with the discrete phase step and ``gamma`` reset to ``gamma0``.
    ``warm_start`` supplies a starting state directly.
    """
    if phase not in PHASE_MODES:
        raise ValueError(f"unknown phase mode {phase!r}, expected one of {PHASE_MODES}")
    if (phase in ("trellis", "exhaustive") and warm_start is None and pdd.discrete_warm_start
            and channels.M):
        first = solve(channels, cfg, pdd, "continuous", trellis, robust, sigma_h_true, callback)
        start = first.state.copy()
        start.gamma = pdd.gamma0
        rep = solve(channels, cfg, pdd, phase, trellis, robust, sigma_h_true, callback, warm_start=start)
        rep.iterations += first.iterations
        rep.trajectory = first.trajectory + rep.trajectory
        rep.wall_ms += first.wall_ms
        for k, n in first.flags.items():
            rep.flags[k] = rep.flags.get(k, 0) + n
        return rep
    t0 = time.perf_counter()
    if sigma_h_true is None:
        sigma_h_true = error_variance_of(cfg, channels)
    sigma_h = sigma_h_true if robust else 0.0
    sigma_n = cfg.sigma_n_sq
    M = channels.M

    if warm_start is not None:
        state = warm_start.copy()
    else:
        state = init_state(channels, cfg, pdd)
    flags = {"negative_alpha": 0, "abar_fallback": 0}

    def cb(stage):
        if callback is not None:
            callback(stage, state)

    def score(v):
        H = effective_channels(channels, v)
        return noma_rates(H, state.Wbar, state.abar, sigma_h, sigma_n)[2]

    trajectory = [score(state.v)]
    converged = False
    res = residuals(state, channels)
    it = 0
    for it in range(1, pdd.max_outer_iters + 1):
        state.q, state.d = update_aux(state, sigma_h, sigma_n)
        cb("aux")
        state.W = update_W(state, channels, sigma_h)
        cb("W")
        state.a = update_a(state)
        cb("a")
        state.T = update_T(state, channels)
        cb("T")
        state.Tbar = project_Tbar(state.T, state.Lambda_t, state.gamma)
        cb("Tbar")
        state.Wbar = project_Wbar(state.W, state.Lambda_w, state.gamma, cfg.P)
        u1 = state.a[0] + state.gamma * state.lambda_a[0]
        if u1 < 0:
            flags["negative_alpha"] += 1
        try:
            state.abar = project_abar(state.a, state.lambda_a, state.gamma)
        except ProjectionError:
            flags["abar_fallback"] += 1
        cb("Wbar_abar")
        if M:
            state.v = _phase_step(state, channels, phase, trellis, pdd.inner_phase_sweeps, flags)
        cb("v")
        res = residuals(state, channels)
        state = dual_or_penalty_step(state, res, pdd, channels)
        cb("dual")
        trajectory.append(score(state.v))
        if abs(trajectory[-1] - trajectory[-2]) < pdd.epsilon and max(res) <= pdd.eta:
            converged = True
            break

    v_out = state.v
    if phase == "quantize" and M:
        v_out = quantize_phases(state.v, trellis.m_irs)
    H = effective_channels(channels, v_out)
    r1, r2, rs = noma_rates(H, state.Wbar, state.abar, sigma_h_true, sigma_n)
    S = np.abs(H @ state.Wbar) ** 2
    ordered = bool(S[0, 0] >= S[1, 1] - 1e-9 * max(1.0, S[0, 0]))
    feasible = bool(max(res) <= pdd.eta and _power(state.Wbar) <= cfg.P * (1 + 1e-9)
                    and abs(np.sum(state.abar ** 2) - 1) <= 1e-9
                    and abs(state.Tbar[0, 0]) ** 2 >= abs(state.Tbar[1, 1]) ** 2 - 1e-9)
    if not converged:
        log.debug("PDD stopped after %d iterations without convergence (residual %.3g)", it, max(res))
    return SolveReport(
        R1=r1, R2=r2, Rsum=rs, iterations=it, residual=max(res), gamma=state.gamma,
        converged=converged, feasible=feasible, ordered=ordered, trajectory=trajectory,
        W=state.Wbar.copy(), a=state.abar.copy(), v=v_out.copy(), flags=flags,
        wall_ms=1000 * (time.perf_counter() - t0), state=state,
    )
