"""
Channel model and achievable rates for the two-user IRS-aided NOMA downlink.

Conventions used throughout the package:

* channel vectors are rows (``h @ w`` is a scalar), user ``k`` occupies
  row ``k`` of a ``(2, N)`` array;
* the IRS phase configuration ``v`` is a 1-D complex array of length ``M``;
* the cascaded channel of user ``k`` is ``diag(h_IU[k]) @ G_AI`` with shape
  ``(M, N)`` and the effective channel is ``h_AU[k] + v @ H_c[k]``;
* all powers are linear, all rates are in bits.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

K_USERS = 2


def db2lin(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class SystemConfig:
    """Scenario description shared by every solver and the simulation harness.

    Distances are in km. ``link_gain_db`` is added to the path loss of every
    link (AP-user, IRS-user and AP-IRS); it lumps antenna gains and the
    normalisation of the receiver noise floor to ``sigma_n_sq``.
    """

    N: int = 2
    M: int = 20
    P: float = 1.0
    sigma_n_sq: float = 1.0
    sigma_au_sq: float = 0.1
    sigma_iu_sq: float = 0.1
    d_au: tuple[float, float] = (0.04, 0.04)
    d_iu: tuple[float, float] = (0.02, 0.02)
    d_ai: float = 0.02
    sigma_shad_db: float = 8.0
    link_gain_db: float = 70.0
    master_seed: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if self.M < 0:
            raise ValueError(f"M must be non-negative, got {self.M}")
        if not self.P > 0:
            raise ValueError(f"P must be positive, got {self.P}")
        for name in ("sigma_n_sq", "sigma_au_sq", "sigma_iu_sq", "sigma_shad_db"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        object.__setattr__(self, "d_au", tuple(float(d) for d in self.d_au))
        object.__setattr__(self, "d_iu", tuple(float(d) for d in self.d_iu))
        if len(self.d_au) != K_USERS or len(self.d_iu) != K_USERS:
            raise ValueError("d_au and d_iu need one distance per user")
        if min(self.d_au + self.d_iu + (self.d_ai,)) <= 0:
            raise ValueError("all distances must be positive")

    @property
    def K(self) -> int:
        return K_USERS

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


def pathloss_linear(d_km, z_db=0.0):
    """Large-scale gain ``10^((-127.8 - 27 log10(d) + z) / 10)``."""
    d_km = np.asarray(d_km, dtype=float)
    if np.any(d_km <= 0):
        raise ValueError(f"distance must be positive, got {d_km}")
    out = 10.0 ** ((-127.8 - 27.0 * np.log10(d_km) + z_db) / 10.0)
    return float(out) if out.ndim == 0 else out


def _freeze(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """True and estimated channels of one Monte-Carlo trial.

    Only ``h_au``/``h_iu`` carry estimation error; ``G`` is shared by the
    true and the estimated cascade. The arrays are read-only.
    """

    h_au: np.ndarray        # (2, N) true direct channels
    h_iu: np.ndarray        # (2, M) true IRS-user channels
    G: np.ndarray           # (M, N) AP-IRS channel
    h_au_est: np.ndarray    # (2, N)
    h_iu_est: np.ndarray    # (2, M)
    beta_au: np.ndarray = field(default_factory=lambda: np.ones(2))
    beta_iu: np.ndarray = field(default_factory=lambda: np.ones(2))
    beta_ai: float = 1.0

    def __post_init__(self):
        for name in ("h_au", "h_iu", "G", "h_au_est", "h_iu_est"):
            object.__setattr__(self, name, _freeze(np.asarray(getattr(self, name), dtype=complex)))
        for name in ("beta_au", "beta_iu"):
            object.__setattr__(self, name, _freeze(np.asarray(getattr(self, name), dtype=float)))
        object.__setattr__(self, "beta_ai", float(self.beta_ai))
        M, N = self.G.shape
        if self.h_au.shape != (2, N) or self.h_au_est.shape != (2, N):
            raise ValueError(f"direct channels must have shape (2, {N})")
        if self.h_iu.shape != (2, M) or self.h_iu_est.shape != (2, M):
            raise ValueError(f"IRS-user channels must have shape (2, {M})")

    @property
    def N(self) -> int:
        return self.G.shape[1]

    @property
    def M(self) -> int:
        return self.G.shape[0]

    @property
    def H_c_est(self) -> np.ndarray:
        """Estimated cascaded channels, shape (2, M, N)."""
        return cascaded_channel(self.h_iu_est, self.G)

    @property
    def H_c_true(self) -> np.ndarray:
        return cascaded_channel(self.h_iu, self.G)

    def perfect(self) -> "ChannelRealization":
        """The same realization seen with error-free estimates."""
        return replace(self, h_au_est=self.h_au, h_iu_est=self.h_iu)

    def swap_users(self) -> "ChannelRealization":
        idx = [1, 0]
        return replace(
            self,
            h_au=self.h_au[idx], h_iu=self.h_iu[idx],
            h_au_est=self.h_au_est[idx], h_iu_est=self.h_iu_est[idx],
            beta_au=self.beta_au[idx], beta_iu=self.beta_iu[idx],
        )

    def digest(self) -> str:
        """Short content hash, used to check that paired trials share channels."""
        h = hashlib.sha256()
        for a in (self.h_au, self.h_iu, self.G, self.h_au_est, self.h_iu_est):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]


def cascaded_channel(h_iu, G):
    """``diag(h_iu) @ G``; a leading user axis on ``h_iu`` is broadcast."""
    h_iu = np.asarray(h_iu)
    G = np.asarray(G)
    if h_iu.shape[-1] != G.shape[0]:
        raise ValueError(f"h_iu has {h_iu.shape[-1]} entries but G has {G.shape[0]} rows")
    return h_iu[..., :, None] * G


def effective_channel(h_au, v, H_c):
    """``h_au + v @ H_c``. Works for one user or for stacked users."""
    h_au = np.asarray(h_au)
    H_c = np.asarray(H_c)
    v = np.asarray(v)
    if H_c.shape[-2] != v.shape[0] or H_c.shape[-1] != h_au.shape[-1]:
        raise ValueError(f"dimension mismatch: v {v.shape}, H_c {H_c.shape}, h_au {h_au.shape}")
    return h_au + np.einsum("m,...mn->...n", v, H_c)


def effective_channels(channels: ChannelRealization, v) -> np.ndarray:
    """Estimated effective channels of both users, shape (2, N)."""
    return effective_channel(channels.h_au_est, v, channels.H_c_est)


def effective_error_variance(sigma_au_sq, sigma_iu_sq, M, beta_ai):
    """Variance of the effective channel error, valid for large M."""
    return sigma_au_sq + M * sigma_iu_sq * beta_ai


def error_variance_of(cfg: SystemConfig, channels: ChannelRealization) -> float:
    return effective_error_variance(cfg.sigma_au_sq, cfg.sigma_iu_sq, channels.M, channels.beta_ai)


def draw_channels(rng, N, M, beta_au, beta_iu, beta_ai, sigma_au_sq, sigma_iu_sq):
    """Draw small-scale fading and estimation errors around given gains.

    IRS quantities are drawn element by element after everything else, so a
    realization with ``M`` elements is a prefix of one with more elements
    drawn from the same generator state.
    """
    beta_au = np.asarray(beta_au, dtype=float)
    beta_iu = np.asarray(beta_iu, dtype=float)

    def cn(shape):
        x = rng.standard_normal(shape + (2,))
        return (x[..., 0] + 1j * x[..., 1]) / np.sqrt(2.0)

    direct = cn((4, N))
    irs = cn((M, N + 4))

    h_au = np.sqrt(beta_au)[:, None] * direct[:2]
    h_au_est = h_au - np.sqrt(sigma_au_sq) * direct[2:]
    G = np.sqrt(beta_ai) * irs[:, :N]
    h_iu = np.sqrt(beta_iu)[:, None] * irs[:, N:N + 2].T
    h_iu_est = h_iu - np.sqrt(sigma_iu_sq) * irs[:, N + 2:].T
    return ChannelRealization(h_au, h_iu, G, h_au_est, h_iu_est, beta_au, beta_iu, beta_ai)


def sample_channels(cfg: SystemConfig, trial_seed: int) -> ChannelRealization:
    """One channel realization, deterministic in ``(cfg, trial_seed)``.

    Users are relabelled so that user 1 has the stronger estimated channel
    under the all-ones phase configuration.
    """
    rng = np.random.default_rng(trial_seed)
    z = cfg.sigma_shad_db * rng.standard_normal(5)
    gain = cfg.link_gain_db
    beta_au = pathloss_linear(np.array(cfg.d_au), z[:2] + gain)
    beta_iu = pathloss_linear(np.array(cfg.d_iu), z[2:4] + gain)
    beta_ai = pathloss_linear(cfg.d_ai, z[4] + gain)
    ch = draw_channels(rng, cfg.N, cfg.M, beta_au, beta_iu, beta_ai,
                       cfg.sigma_au_sq, cfg.sigma_iu_sq)
    strength = np.linalg.norm(effective_channels(ch, np.ones(cfg.M, dtype=complex)), axis=1)
    if strength[1] > strength[0]:
        ch = ch.swap_users()
    return ch


def noma_rates(h_eff, W, a, sigma_h_sq, sigma_n_sq):
    """Achievable rates ``(R1, R2, Rsum)`` in bits under imperfect CSI.

    ``h_eff`` holds the two estimated effective channels as rows, ``W`` the
    beamformers as columns and ``a`` the power-split coefficients.
    User 1 decodes interference-free after SIC; user 2 treats the signal
    of user 1 as interference.
    """
    h_eff = np.asarray(h_eff)
    W = np.asarray(W)
    a1, a2 = float(a[0]), float(a[1])
    if abs(a1 * a1 + a2 * a2 - 1.0) > 1e-9:
        raise ValueError(f"power split must have unit norm, got {a1}^2 + {a2}^2 = {a1 * a1 + a2 * a2}")
    if sigma_h_sq < 0 or sigma_n_sq < 0:
        raise ValueError("variances must be non-negative")
    S = np.abs(h_eff @ W) ** 2          # S[j, i] = |h_j w_i|^2
    floor = sigma_h_sq * float(np.sum(np.abs(W) ** 2)) + sigma_n_sq
    sig1 = a1 * a1 * S[0, 0]
    sig2 = a2 * a2 * S[1, 1]
    den2 = a1 * a1 * S[1, 0] + floor
    r1 = np.log2(1.0 + sig1 / floor) if sig1 > 0 else 0.0
    r2 = np.log2(1.0 + sig2 / den2) if sig2 > 0 else 0.0
    return float(r1), float(r2), float(r1 + r2)
