import numpy as np
import pytest

from irsnoma.pdd import (PddConfig, ProjectionError, build_phase_quadratic, design_rate_nats,
                         dual_or_penalty_step, init_state, penalty, phase_objective, project_abar,
                         project_Tbar, project_Wbar, rate_lower_bound, residuals, solve,
                         surrogate_objective, tbar_candidates, update_a, update_aux, update_T,
                         update_v_continuous, update_W)
from irsnoma.system import (ChannelRealization, SystemConfig, effective_channels, error_variance_of,
                            noma_rates, sample_channels)

from oracles import (block_objective, crandn, numeric_gradient, random_state, sample_instance,
                     with_block)


def zero_channels(N=2, M=4):
    z2n, z2m, zmn = np.zeros((2, N)), np.zeros((2, M)), np.zeros((M, N))
    return ChannelRealization(z2n, z2m, zmn, z2n, z2m)


def test_config_validation():
    with pytest.raises(ValueError):
        PddConfig(zeta=1.0)
    with pytest.raises(ValueError):
        PddConfig(eta=0)
    with pytest.raises(ValueError):
        PddConfig(max_outer_iters=0)


def test_init_state_values():
    cfg, ch = sample_instance(0, M=6)
    st = init_state(ch, cfg)
    np.testing.assert_allclose(st.W, np.full((2, 2), 0.9j * np.sqrt(1 / 8)))
    assert st.W[0, 0] == pytest.approx(0.3182j, abs=1e-4)
    np.testing.assert_allclose(st.v, np.ones(6))
    np.testing.assert_allclose(st.a, [np.sqrt(0.5), np.sqrt(0.5)])
    H = effective_channels(ch, st.v)
    np.testing.assert_allclose(st.T, st.W.conj().T @ H.conj().T)
    assert st.gamma == 2.0661
    assert np.all(st.Lambda_h == 0.1) and np.all(st.lambda_a == 0.1)
    np.testing.assert_array_equal(st.Tbar, project_Tbar(st.T, np.zeros((2, 2)), 1.0))
    r = residuals(st, ch)
    assert r[0] == 0 and r[1] == 0 and r[3] == 0


def test_update_aux_examples():
    cfg, ch = sample_instance(1)
    st = init_state(ch, cfg)
    st.T = np.array([[1.0, 0], [0, 0]], dtype=complex)
    st.a = np.array([1.0, 0.0])
    st.W = np.array([[1.0, 0], [0, 0]], dtype=complex)
    q, d = update_aux(st, 0.0, 1.0)
    assert q[0] == pytest.approx(0.5)
    assert d[0] == pytest.approx(2.0)
    st.T[0, 0] = 0
    q, d = update_aux(st, 0.0, 1.0)
    assert q[0] == 0 and d[0] == 1


def test_update_aux_against_recomputation():
    rng = np.random.default_rng(3)
    cfg, ch = sample_instance(2)
    for _ in range(20):
        st = random_state(rng, ch, cfg)
        sh = rng.uniform(0, 1)
        q, d = update_aux(st, sh, 1.0)
        pw = np.sum(np.abs(st.W) ** 2)
        a1, a2 = st.a
        assert d[0] == pytest.approx(1 + a1 ** 2 * abs(st.T[0, 0]) ** 2 / (sh * pw + 1))
        assert d[1] == pytest.approx(1 + a2 ** 2 * abs(st.T[1, 1]) ** 2
                                     / (a1 ** 2 * abs(st.T[0, 1]) ** 2 + sh * pw + 1))
        assert min(d) >= 1
        # q is the minimiser of the MSE terms
        st.q, st.d = q, d
        f = lambda x: block_objective(with_block(st, "q", x), ch, sh, 1.0)
        assert np.linalg.norm(numeric_gradient(f, q)) < 1e-6


def test_rate_bound_identity_in_nats():
    rng = np.random.default_rng(4)
    cfg, ch = sample_instance(3)
    for _ in range(50):
        st = random_state(rng, ch, cfg)
        sh = rng.uniform(0, 1)
        st.q, st.d = update_aux(st, sh, 1.0)
        assert rate_lower_bound(st, sh, 1.0) == pytest.approx(design_rate_nats(st, sh, 1.0), abs=1e-9)
        # any other (q, d) gives a smaller bound
        st.q = st.q * 1.1
        assert rate_lower_bound(st, sh, 1.0) <= design_rate_nats(st, sh, 1.0) + 1e-12


def test_design_rate_matches_noma_rates_when_consistent():
    cfg, ch = sample_instance(4)
    st = init_state(ch, cfg)
    H = effective_channels(ch, st.v)
    bits = noma_rates(H, st.W, st.a, 0.3, 1.0)[2]
    assert design_rate_nats(st, 0.3, 1.0) / np.log(2) == pytest.approx(bits)


def test_update_W_degenerate_closed_form():
    ch = zero_channels()
    cfg = SystemConfig(M=4)
    st = init_state(ch, cfg)
    st.q = np.zeros(2)
    st.d = np.zeros(2)
    st.Wbar = np.arange(4).reshape(2, 2) + 1j
    np.testing.assert_allclose(update_W(st, ch, 0.5), st.Wbar - st.gamma * st.Lambda_w)


def test_update_a_limits():
    rng = np.random.default_rng(5)
    cfg, ch = sample_instance(5)
    st = random_state(rng, ch, cfg, gamma=1e-12)
    np.testing.assert_allclose(update_a(st), st.abar, atol=1e-9)
    st = random_state(rng, ch, cfg)
    st.d = np.array([st.d[0], 0.0])
    assert update_a(st)[1] == pytest.approx(st.abar[1] - st.gamma * st.lambda_a[1])


def test_update_T_examples():
    rng = np.random.default_rng(6)
    cfg, ch = sample_instance(6)
    st = random_state(rng, ch, cfg, gamma=0.0 + 1e-300)
    H = effective_channels(ch, st.v)
    WH = st.W.conj().T @ H.conj().T
    T = update_T(st, ch)
    assert T[0, 0] == pytest.approx((WH[0, 0] + st.Tbar[0, 0]) / 2)
    st = random_state(rng, ch, cfg)
    H = effective_channels(ch, st.v)
    WH = st.W.conj().T @ H.conj().T
    T = update_T(st, ch)
    assert T[1, 0] == pytest.approx(0.5 * (WH[1, 0] + st.Tbar[1, 0] - st.gamma * (st.Lambda_h[1, 0] + st.Lambda_t[1, 0])))


@pytest.mark.parametrize("name", ["W", "a", "T"])
def test_block_updates_are_stationary_and_descend(name):
    rng = np.random.default_rng(7)
    for seed in range(10):
        cfg, ch = sample_instance(seed)
        sh = error_variance_of(cfg, ch)
        st = random_state(rng, ch, cfg, sigma_h_sq=sh)
        update = {"W": lambda s: update_W(s, ch, sh), "a": update_a, "T": lambda s: update_T(s, ch)}[name]
        fun = lambda x: block_objective(with_block(st, name, x), ch, sh, 1.0)
        before = fun(getattr(st, name))
        g0 = numeric_gradient(fun, getattr(st, name))
        new = update(st)
        g1 = numeric_gradient(fun, new)
        assert np.linalg.norm(g1) < 1e-5 * (1 + np.linalg.norm(g0))
        assert fun(new) <= before + 1e-10 * max(1, abs(before))


def test_project_Tbar_examples():
    Y = np.array([[2, 0.3], [0.1, 1]], dtype=complex)
    np.testing.assert_allclose(project_Tbar(Y, np.zeros((2, 2)), 1.0), Y)
    Y = np.array([[1, 0.3], [0.1, 2]], dtype=complex)
    out = project_Tbar(Y, np.zeros((2, 2)), 1.0)
    assert out[0, 0] == pytest.approx(1.5) and out[1, 1] == pytest.approx(1.5)
    assert out[0, 1] == 0.3 and out[1, 0] == 0.1
    d = [np.linalg.norm(X - Y) ** 2 for X in tbar_candidates(Y)[:2]]
    assert d == [pytest.approx(8.5), pytest.approx(0.5)]


def test_project_Tbar_opposite_diagonals():
    # y11 = -y22: the equal-diagonal candidates are 0 and y11, neither is the projection
    Y = np.array([[1.0, 0], [0, -1.5]], dtype=complex)
    out = project_Tbar(Y, np.zeros((2, 2)), 1.0)
    assert abs(out[0, 0]) == pytest.approx(abs(out[1, 1]))
    for X in tbar_candidates(Y):
        assert np.linalg.norm(out - Y) <= np.linalg.norm(X - Y) + 1e-12


def test_project_Tbar_is_nearest_feasible_point():
    rng = np.random.default_rng(8)
    for _ in range(100):
        Y = crandn(rng, 2, 2) * 2
        out = project_Tbar(Y, np.zeros((2, 2)), 1.0)
        assert abs(out[0, 0]) >= abs(out[1, 1]) - 1e-12
        d = np.linalg.norm(out - Y)
        for _ in range(200):
            X = Y + crandn(rng, 2, 2) * rng.uniform(0, 1.5)
            if abs(X[0, 0]) >= abs(X[1, 1]):
                assert np.linalg.norm(X - Y) >= d - 1e-12


def test_project_Wbar_examples():
    P = 4.0
    Y = np.full((2, 2), 0.5)                # norm 1 = sqrt(P) / 2
    np.testing.assert_allclose(project_Wbar(Y, np.zeros((2, 2)), 1.0, P), Y)
    Y = np.full((2, 2), 2.0)                # norm 4 = 2 sqrt(P)
    np.testing.assert_allclose(project_Wbar(Y, np.zeros((2, 2)), 1.0, P), Y / 2)
    np.testing.assert_allclose(project_Wbar(np.zeros((2, 2)), np.zeros((2, 2)), 1.0, P), 0)


def test_project_abar_examples():
    np.testing.assert_allclose(project_abar([3, 4], [0, 0], 1.0), [0.6, 0.8])
    np.testing.assert_allclose(project_abar([0.6, 0.8], [0, 0], 1.0), [0.6, 0.8])
    np.testing.assert_allclose(project_abar([1, 0], [0, 0], 1.0), [1, 0])
    with pytest.raises(ProjectionError):
        project_abar([0.1, -0.2], [-0.1, 0.2], 1.0)


def test_projections_beat_random_feasible_points():
    rng = np.random.default_rng(9)
    for _ in range(50):
        Y = crandn(rng, 2, 2) * 2
        out = project_Wbar(Y, np.zeros((2, 2)), 1.0, 1.0)
        S = crandn(rng, 1000, 2, 2)
        S *= (rng.random(1000) ** 0.25 / np.linalg.norm(S, axis=(1, 2)))[:, None, None]
        assert np.linalg.norm(out - Y) <= np.min(np.linalg.norm(S - Y, axis=(1, 2))) + 1e-12
        u = rng.standard_normal(2)
        out = project_abar(u, np.zeros(2), 1.0)
        ang = rng.uniform(0, 2 * np.pi, 1000)
        C = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        assert np.linalg.norm(out - u) <= np.min(np.linalg.norm(C - u, axis=1)) + 1e-12


def test_phase_quadratic_examples():
    cfg, ch = sample_instance(10)
    st = init_state(ch, cfg)
    st.W = np.zeros_like(st.W)
    A, c = build_phase_quadratic(st, ch)
    assert np.all(A == 0) and np.all(c == 0)
    st = random_state(np.random.default_rng(1), ch, cfg)
    A, c = build_phase_quadratic(st, ch)
    np.testing.assert_allclose(A, A.conj().T, atol=1e-12)
    assert np.min(np.linalg.eigvalsh(A)) >= -1e-10


def test_phase_quadratic_reproduces_penalty():
    rng = np.random.default_rng(11)
    cfg, ch = sample_instance(11, M=7)
    st = random_state(rng, ch, cfg)
    A, c = build_phase_quadratic(st, ch)
    offsets = []
    for _ in range(10):
        v = np.exp(2j * np.pi * rng.random(7))
        offsets.append(penalty(with_block(st, "v", v), ch) - phase_objective(v, A, c))
    np.testing.assert_allclose(offsets, offsets[0], rtol=1e-10, atol=1e-9)


def test_update_v_examples():
    # single coordinate: normalisation of c - 0
    v = update_v_continuous(np.zeros((1, 1)), np.array([3 + 4j]), np.array([1.0 + 0j]))
    assert v[0] == pytest.approx((3 + 4j) / 5)
    v = update_v_continuous(np.zeros((4, 4)), np.ones(4, dtype=complex), np.exp(1j * np.arange(4)))
    np.testing.assert_allclose(v, np.ones(4))
    # zero numerator keeps the old phase
    v0 = np.array([1j, 1.0])
    np.testing.assert_allclose(update_v_continuous(np.zeros((2, 2)), np.zeros(2), v0), v0)


def test_update_v_coordinate_descent():
    rng = np.random.default_rng(12)
    for _ in range(20):
        M = 6
        X = crandn(rng, M, M)
        A = X @ X.conj().T
        c = crandn(rng, M)
        v = np.exp(2j * np.pi * rng.random(M))
        val = phase_objective(v, A, c)
        new = update_v_continuous(A, c, v, 3)
        assert phase_objective(new, A, c) <= val + 1e-10
        np.testing.assert_allclose(np.abs(new), 1)
        # first coordinate is optimal given the rest
        one = update_v_continuous(A, c, v, 1)
        grid = np.exp(2j * np.pi * np.arange(720) / 720)
        best = min(phase_objective(np.r_[z, v[1:]], A, c) for z in grid)
        assert phase_objective(np.r_[one[0], v[1:]], A, c) <= best + 1e-9


def test_residual_examples():
    cfg, ch = sample_instance(13)
    st = init_state(ch, cfg)
    st.Wbar = st.Wbar + 0.25
    r = residuals(st, ch)
    assert r[1] == pytest.approx(0.25 * 2)
    assert r[0] == 0 and r[2] == 0 and r[3] == 0


def test_dual_or_penalty_step_examples():
    cfg, ch = sample_instance(14)
    st = init_state(ch, cfg)
    st.gamma = 1.0
    st.a = st.abar + np.array([0.2, 0.0])
    st = dual_or_penalty_step(st, (0, 0, 0, 0.2), PddConfig(eta=0.5), ch)
    assert st.lambda_a[0] == pytest.approx(0.3)
    assert st.gamma == 1.0
    st2 = init_state(ch, cfg)
    lam = st2.lambda_a.copy()
    st2 = dual_or_penalty_step(st2, (0.5, 0, 0, 0), PddConfig(), ch)
    assert st2.gamma == pytest.approx(1.44627)
    np.testing.assert_array_equal(st2.lambda_a, lam)


def test_solve_zero_channels():
    rep = solve(zero_channels(), SystemConfig(M=4), PddConfig(dual_init=0.0))
    assert rep.Rsum == 0
    assert rep.converged and rep.iterations <= 2
    # nonzero multipliers keep W off Wbar until gamma has shrunk below eta / |Lambda_w|
    rep = solve(zero_channels(), SystemConfig(M=4))
    assert rep.Rsum == 0 and rep.converged
    assert rep.gamma * 0.1 * 2 <= 0.1


def test_solve_perfect_equals_robust_without_error():
    cfg = SystemConfig(M=8, sigma_au_sq=0.0, sigma_iu_sq=0.0)
    ch = sample_channels(cfg, 3)
    a = solve(ch, cfg, robust=True)
    b = solve(ch.perfect(), cfg, robust=False, sigma_h_true=0.0)
    assert a.Rsum == b.Rsum
    np.testing.assert_array_equal(a.W, b.W)


def test_solve_report_is_feasible_and_improves_on_start():
    for seed in range(5):
        cfg, ch = sample_instance(seed, M=10)
        rep = solve(ch, cfg)
        assert rep.Rsum == pytest.approx(rep.R1 + rep.R2)
        assert np.sum(np.abs(rep.W) ** 2) <= cfg.P + 1e-9
        assert np.sum(rep.a ** 2) == pytest.approx(1)
        np.testing.assert_allclose(np.abs(rep.v), 1)
        if rep.converged:
            assert rep.residual <= 0.1 and rep.feasible
        assert rep.Rsum >= rep.trajectory[0] - 1e-9
        gammas = []
        solve(ch, cfg, PddConfig(max_outer_iters=50), callback=lambda s, st: gammas.append(st.gamma))
        assert all(b <= a for a, b in zip(gammas, gammas[1:]))


def test_nonrobust_scored_with_true_error():
    cfg, ch = sample_instance(21, M=10)
    rep = solve(ch, cfg, robust=False)
    H = effective_channels(ch, rep.v)
    assert rep.Rsum == pytest.approx(noma_rates(H, rep.W, rep.a, error_variance_of(cfg, ch), 1.0)[2])


@pytest.mark.parametrize("phase", ["trellis", "quantize", "exhaustive"])
def test_discrete_modes_return_alphabet_phases(phase):
    cfg = SystemConfig(M=6)
    ch = sample_channels(cfg, 2)
    rep = solve(ch, cfg, PddConfig(max_outer_iters=60), phase=phase)
    q = np.angle(rep.v) / (2 * np.pi / 4)
    np.testing.assert_allclose(q, np.round(q), atol=1e-9)
    assert rep.Rsum >= 0


def test_discrete_modes_continue_from_the_continuous_solution():
    cfg = SystemConfig(M=8)
    ch = sample_channels(cfg, 4)
    cont = solve(ch, cfg)
    rep = solve(ch, cfg, phase="trellis")
    assert rep.trajectory[:len(cont.trajectory)] == cont.trajectory
    assert rep.iterations > cont.iterations
    cold = solve(ch, cfg, PddConfig(discrete_warm_start=False), phase="trellis")
    assert cold.trajectory[0] == cont.trajectory[0]
    for r in (rep, cold):
        q = np.angle(r.v) / (np.pi / 2)
        np.testing.assert_allclose(q, np.round(q), atol=1e-9)


def test_unknown_phase_mode():
    cfg, ch = sample_instance(0)
    with pytest.raises(ValueError):
        solve(ch, cfg, phase="bogus")


def test_block_steps_decrease_surrogate():
    cfg, ch = sample_instance(30, M=10)
    sh = error_variance_of(cfg, ch)
    last = [None]
    worst = [0.0]

    def cb(stage, st):
        val = surrogate_objective(st, ch, sh, 1.0)
        if stage != "dual" and last[0] is not None:
            worst[0] = max(worst[0], (val - last[0]) / max(1.0, abs(last[0])))
        last[0] = val

    solve(ch, cfg, PddConfig(max_outer_iters=100, epsilon=1e-12), callback=cb)
    assert worst[0] <= 1e-8


def test_initial_copies_are_feasible():
    for seed in range(100):
        cfg, ch = sample_instance(seed)
        st = init_state(ch, cfg)
        assert abs(st.Tbar[0, 0]) >= abs(st.Tbar[1, 1]) - 1e-12
        if abs(st.T[0, 0]) >= abs(st.T[1, 1]):
            np.testing.assert_array_equal(st.Tbar, st.T)
