"""
Discrete IRS phase selection for the quadratic phase subproblem

    minimise  v A v^H - 2 Re{c v^H}   over  v_m in {exp(j 2 pi q / L) : q = 1..L}

which, for unit-modulus ``v`` and Hermitian ``A``, equals
``2 * benchmark(v) + trace(A)`` with the sequential benchmark below.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

DEFAULT_STATE_BUDGET = 1 << 16
DEFAULT_EXHAUSTIVE_BUDGET = 1 << 20


@dataclass(frozen=True)
class TrellisConfig:
    """Alphabet size ``m_irs`` and trellis memory ``T``."""

    m_irs: int = 4
    T: int = 3
    state_budget: int = DEFAULT_STATE_BUDGET

    def __post_init__(self):
        if self.m_irs < 1:
            raise ValueError(f"m_irs must be >= 1, got {self.m_irs}")
        if self.T < 1:
            raise ValueError(f"trellis memory must be >= 1, got {self.T}")
        if self.m_irs ** self.T > self.state_budget:
            raise ValueError(f"{self.m_irs}^{self.T} states exceed the budget of {self.state_budget}")


def alphabet(m_irs: int) -> np.ndarray:
    """Phase alphabet ordered by q = 1..m_irs (the last symbol is 1)."""
    q = np.arange(1, m_irs + 1)
    return np.exp(2j * np.pi * q / m_irs)


def trellis_benchmark(v, A, c) -> float:
    """Sum over j of Re{ conj(v_j) (sum_{i<j} a_ij v_i - c_j) }."""
    v = np.asarray(v)
    A = np.asarray(A)
    c = np.asarray(c)
    if A.shape != (v.size, v.size) or c.shape != v.shape:
        raise ValueError(f"dimension mismatch: v {v.shape}, A {A.shape}, c {c.shape}")
    s = v @ np.triu(A, 1)
    return float(np.real(np.sum(np.conj(v) * (s - c))))


def _batch_benchmark(V, A, c):
    S = V @ np.triu(A, 1)
    return np.real(np.sum(np.conj(V) * (S - c), axis=1))


def trellis_search(A, c, config: TrellisConfig = TrellisConfig(), v_init=None) -> np.ndarray:
    """Per-survivor trellis search over discrete phases.

    States are the last ``T`` phase indices. Branch metrics use the full
    history of the originating survivor, because each benchmark term
    couples a phase to every earlier phase. Among branches entering one
    state the smallest cumulative benchmark survives; exact ties go to the
    path closer to ``v_init`` (squared distance) and then to the
    lexicographically smaller index sequence.
    """
    A = np.asarray(A, dtype=complex)
    c = np.asarray(c, dtype=complex)
    M = c.size
    L, T = config.m_irs, config.T
    if T > M:
        raise ValueError(f"trellis memory T={T} exceeds the number of elements M={M}")
    if A.shape != (M, M):
        raise ValueError(f"A must be {M}x{M}, got {A.shape}")
    symbols = alphabet(L)
    if v_init is None:
        init_dist = np.zeros((M, L))
    else:
        init_dist = np.abs(symbols[None, :] - np.asarray(v_init)[:, None]) ** 2

    # initial states in lexicographic order, most significant = oldest phase
    idx = np.array(list(itertools.product(range(L), repeat=T)), dtype=np.int64)
    S = idx.shape[0]
    hist = np.empty((S, M), dtype=np.int64)
    hist[:, :T] = idx
    phases = np.empty((S, M), dtype=complex)
    phases[:, :T] = symbols[idx]
    metric = _batch_benchmark(phases[:, :T], A[:T, :T], c[:T])
    dist = init_dist[np.arange(T), idx].sum(axis=1)

    # survivor s = r * L^(T-1) + p feeds state p * L + l for every r
    tail = L ** (T - 1)
    new_state = np.arange(S)
    prev = (np.arange(L)[None, :] * tail) + (new_state // L)[:, None]   # (S, L) over r
    sym = new_state % L

    for j in range(T, M):
        s_j = phases[:, :j] @ A[:j, j]
        branch = np.real(np.conj(symbols)[None, :] * (s_j - c[j])[:, None])   # (S, L)
        cand_metric = metric[prev] + branch[prev, sym[:, None]]
        cand_dist = dist[prev] + init_dist[j, sym][:, None]
        rank = np.empty(S, dtype=np.int64)
        rank[np.lexsort(hist[:, j - 1::-1].T)] = np.arange(S)
        order = np.lexsort((rank[prev], cand_dist, cand_metric), axis=-1)
        winner = prev[new_state, order[:, 0]]
        hist = hist[winner]
        phases = phases[winner]
        hist[:, j] = sym
        phases[:, j] = symbols[sym]
        metric = cand_metric[new_state, order[:, 0]]
        dist = cand_dist[new_state, order[:, 0]]

    rank = np.empty(S, dtype=np.int64)
    rank[np.lexsort(hist[:, ::-1].T)] = np.arange(S)
    best = np.lexsort((rank, dist, metric))[0]
    return symbols[hist[best]]


def quantize_phases(v, m_irs: int) -> np.ndarray:
    """Map each phase to the nearest alphabet symbol; ties go to smaller q."""
    v = np.asarray(v, dtype=complex)
    symbols = alphabet(m_irs)
    diff = np.angle(v)[:, None] - np.angle(symbols)[None, :]
    d = np.abs(np.angle(np.exp(1j * diff)))
    pick = np.argmax(d <= d.min(axis=1, keepdims=True) + 1e-12, axis=1)
    return symbols[pick]


def exhaustive_search(A, c, m_irs: int, budget: int = DEFAULT_EXHAUSTIVE_BUDGET,
                      chunk: int = 1 << 15) -> np.ndarray:
    """Global minimiser of the benchmark by enumeration (small M only).

    Candidates are enumerated in lexicographic index order and the first
    minimiser is kept.
    """
    A = np.asarray(A, dtype=complex)
    c = np.asarray(c, dtype=complex)
    M = c.size
    total = m_irs ** M
    if total > budget:
        raise ValueError(f"exhaustive search needs {m_irs}^{M} = {total} evaluations, budget is {budget}")
    symbols = alphabet(m_irs)
    powers = m_irs ** np.arange(M - 1, -1, -1, dtype=np.int64)
    best_val, best_code = np.inf, 0
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = (codes[:, None] // powers[None, :]) % m_irs
        vals = _batch_benchmark(symbols[digits], A, c)
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val, best_code = vals[k], int(codes[k])
    digits = (best_code // powers) % m_irs
    return symbols[digits]
