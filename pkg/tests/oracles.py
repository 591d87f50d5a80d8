"""Independent reference computations shared by the unit and acceptance tests."""

import numpy as np

from irsnoma.pdd import init_state, mse_terms, penalty, update_aux
from irsnoma.system import SystemConfig, effective_channels, sample_channels


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def block_objective(state, channels, sigma_h_sq, sigma_n_sq):
    """sum_i d_i f_i + Q_gamma with the stored (q, d)."""
    f = mse_terms(state, sigma_h_sq, sigma_n_sq)
    return float(state.d[0] * f[0] + state.d[1] * f[1] + penalty(state, channels))


def with_block(state, name, value):
    s = state.copy()
    setattr(s, name, np.array(value, copy=True))
    return s


def numeric_gradient(fun, x, h=1e-6):
    """Central-difference gradient of a real function of a real or complex array."""
    x = np.array(x, copy=True)
    grad = np.zeros(x.shape, dtype=complex if np.iscomplexobj(x) else float)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    steps = (1.0, 1j) if np.iscomplexobj(x) else (1.0,)
    for k in range(flat.size):
        for step in steps:
            old = flat[k]
            flat[k] = old + h * step
            up = fun(x)
            flat[k] = old - h * step
            down = fun(x)
            flat[k] = old
            g[k] += step * (up - down) / (2 * h)
    return grad


def random_state(rng, channels, cfg, gamma=None, sigma_h_sq=0.2, sigma_n_sq=1.0):
    """A PDD state with every block randomised and (q, d) refreshed."""
    st = init_state(channels, cfg)
    N = channels.N
    st.W = crandn(rng, N, 2)
    st.Wbar = crandn(rng, N, 2)
    ang = rng.uniform(0, np.pi / 2)
    st.a = np.array([np.cos(ang), np.sin(ang)]) + 0.1 * rng.standard_normal(2)
    st.abar = np.array([np.cos(ang + 0.1), np.sin(ang + 0.1)])
    st.v = np.exp(2j * np.pi * rng.random(channels.M))
    st.T = crandn(rng, 2, 2)
    st.Tbar = crandn(rng, 2, 2)
    st.Lambda_w = 0.3 * crandn(rng, N, 2)
    st.Lambda_h = 0.3 * crandn(rng, 2, 2)
    st.Lambda_t = 0.3 * crandn(rng, 2, 2)
    st.lambda_a = 0.3 * rng.standard_normal(2)
    st.gamma = float(rng.uniform(0.05, 2.0)) if gamma is None else gamma
    st.q, st.d = update_aux(st, sigma_h_sq, sigma_n_sq)
    return st


def sample_instance(seed, M=10, N=2):
    cfg = SystemConfig(M=M, N=N)
    return cfg, sample_channels(cfg, seed)


def fdma_split_objective(P1, g1, g2, s, n, P):
    P2 = P - P1
    return (np.log2(1 + P1 * g1 / (0.5 * P1 * s + 0.5 * n))
            + np.log2(1 + P2 * g2 / (0.5 * P2 * s + 0.5 * n)))


def gain_of(channels, v, users):
    H = effective_channels(channels, v)
    return float(sum(np.sum(np.abs(H[k]) ** 2) for k in users))
