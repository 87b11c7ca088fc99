import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from mmreg.errors import DisconnectedGraph, InvalidArgument, Unidentifiable
from mmreg.graph import all_pairs, build_design_matrix
from mmreg.infer import (InferenceConfig, anchor_latents, infer_latents, least_squares_latents,
                         solve_lad)


def lp_lad(A, b, weights=None):
    """LAD by linear programming: min sum w t  s.t.  -t <= b - A x <= t."""
    K, M = A.shape
    w = np.ones(K) if weights is None else weights
    c = np.concatenate([np.zeros(M), w])
    I = np.eye(K)
    A_ub = np.block([[-A, -I], [A, -I]])
    b_ub = np.concatenate([-b, b])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * M + [(0, None)] * K, method="highs")
    assert res.status == 0
    return res.x[:M], res.fun


def zero_sum_latents(n, seed, scale=1.0):
    T = np.random.default_rng(seed).normal(scale=scale, size=(n, 6))
    return T - T.mean(axis=0)


def exact_obs(T, pairs=None):
    n = len(T)
    obs = build_design_matrix(n, pairs or all_pairs(n))
    return obs.with_observations(obs.W @ T)


def test_lad_intercept_is_median():
    res = solve_lad(np.ones((3, 1)), [1.0, 2.0, 9.0])
    assert res.x[0] == pytest.approx(2.0, abs=1e-8)
    assert res.converged


def test_lad_zero_residual_optimum():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(8, 3))
    x = np.array([1.0, -2.0, 0.5])
    res = solve_lad(A, A @ x)
    np.testing.assert_allclose(res.x, x, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_lad_matches_lp_with_outlier(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(5, 2))
    y = A @ rng.normal(size=2) + rng.normal(scale=0.1, size=5)
    y[rng.integers(5)] += 25.0
    x_lp, f_lp = lp_lad(A, y)
    res = solve_lad(A, y)
    assert res.objective == pytest.approx(f_lp, abs=1e-8)
    np.testing.assert_allclose(res.x, x_lp, atol=1e-6)


def test_lad_with_penalty_matches_lp():
    rng = np.random.default_rng(11)
    A = rng.normal(size=(7, 3))
    y = rng.normal(size=7)
    P = np.ones((1, 3))
    res = solve_lad(A, y, P, 2.5)
    x_lp, f_lp = lp_lad(np.vstack([A, P]), np.append(y, 0.0), np.append(np.ones(7), 2.5))
    assert res.objective == pytest.approx(f_lp, abs=1e-8)
    np.testing.assert_allclose(res.x, x_lp, atol=1e-6)


def test_lad_rank_deficient():
    with pytest.raises(Unidentifiable):
        solve_lad(np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]), [1.0, 2.0, 3.0])


def test_lad_nonconvergence_flag():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(9, 3))
    y = rng.normal(size=9)
    res = solve_lad(A, y, cfg=InferenceConfig(max_iters=1))
    assert not res.converged
    assert res.iterations == 1
    assert np.isfinite(res.objective)


def test_lad_is_deterministic():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(12, 4))
    y = rng.standard_cauchy(size=12)
    a, b = solve_lad(A, y), solve_lad(A, y)
    assert a.x.tobytes() == b.x.tobytes()


@pytest.mark.parametrize("seed", range(5))
def test_irls_smoothed_objective_is_monotone(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(15, 4))
    y = A @ rng.normal(size=4) + rng.laplace(size=15)
    h = np.array(solve_lad(A, y).history)
    assert np.all(np.diff(h) <= 1e-10)


def test_config_validation():
    with pytest.raises(InvalidArgument):
        InferenceConfig(b_ratio=0)
    with pytest.raises(InvalidArgument):
        InferenceConfig(irls_epsilon=-1)
    with pytest.raises(InvalidArgument):
        InferenceConfig(tol=0)


@pytest.mark.parametrize("hard", [False, True])
def test_two_modalities_split_symmetrically(hard):
    R = np.array([0.1, -0.2, 0.3, 4.0, -5.0, 6.0])
    obs = build_design_matrix(2, [(0, 1)], R[None])
    sol = infer_latents(obs, InferenceConfig(hard_center=hard))
    np.testing.assert_allclose(sol.latents[0], -R / 2, atol=1e-9)
    np.testing.assert_allclose(sol.latents[1], R / 2, atol=1e-9)


@pytest.mark.parametrize("hard", [False, True])
@pytest.mark.parametrize("n", range(2, 9))
def test_noiseless_recovery(n, hard):
    T = zero_sum_latents(n, n)
    sol = infer_latents(exact_obs(T), InferenceConfig(hard_center=hard))
    assert np.max(np.abs(sol.latents - T)) <= 1e-6
    assert np.all(np.abs(sol.latents.sum(axis=0)) <= 1e-6)
    assert sol.converged


def test_hard_center_sums_to_zero_exactly():
    rng = np.random.default_rng(4)
    obs = exact_obs(zero_sum_latents(5, 0))
    obs = obs.with_observations(obs.logR + rng.laplace(scale=0.1, size=obs.logR.shape))
    sol = infer_latents(obs, InferenceConfig(hard_center=True))
    assert np.all(np.abs(sol.latents.sum(axis=0)) <= 1e-9)


def test_residual_definition():
    rng = np.random.default_rng(5)
    obs = exact_obs(zero_sum_latents(4, 1))
    obs = obs.with_observations(obs.logR + rng.laplace(scale=0.05, size=obs.logR.shape))
    sol = infer_latents(obs)
    for k in range(obs.k):
        for j in range(6):
            assert sol.residuals[k, j] == pytest.approx(obs.logR[k, j] - obs.W[k] @ sol.latents[:, j], abs=1e-12)


def test_gauge_shift_is_invisible():
    T = zero_sum_latents(5, 2)
    shifted = T + np.array([0.3, -0.1, 0.2, 7.0, -3.0, 1.0])
    a = infer_latents(exact_obs(T))
    b = infer_latents(exact_obs(shifted))
    np.testing.assert_allclose(a.latents, b.latents, atol=1e-9)
    np.testing.assert_allclose(b.latents, T, atol=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.permutations(range(6)), st.integers(0, 1000))
def test_parameters_are_separable(perm, seed):
    rng = np.random.default_rng(seed)
    obs = exact_obs(zero_sum_latents(4, seed))
    obs = obs.with_observations(obs.logR + rng.laplace(scale=0.1, size=obs.logR.shape))
    perm = list(perm)
    a = infer_latents(obs)
    b = infer_latents(obs.with_observations(obs.logR[:, perm]))
    np.testing.assert_allclose(b.latents, a.latents[:, perm], atol=1e-12)


def test_disconnected_is_rejected():
    obs = build_design_matrix(4, [(0, 1), (2, 3)], np.zeros((2, 6)))
    with pytest.raises(DisconnectedGraph):
        infer_latents(obs)


def test_subset_of_edges():
    T = zero_sum_latents(5, 3)
    sol = infer_latents(exact_obs(T, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)]))
    np.testing.assert_allclose(sol.latents, T, atol=1e-6)


def corrupted_triangle(delta, edge=0, param=2, seed=0):
    T = zero_sum_latents(3, seed)
    obs = exact_obs(T)
    R = obs.logR.copy()
    R[edge, param] += delta
    return T, obs.with_observations(R)


def reduced_objective(obs, param, a, b):
    e = np.array([a, b, -a - b])
    return np.abs(obs.logR[:, param] - obs.W @ e).sum()


def test_triangle_optimum_contains_truth_but_is_not_unique():
    # one corrupted triangle edge cannot be told apart from the other two:
    # every split of delta along the cycle has the same L1 cost
    delta, param = 1.0, 2
    T, obs = corrupted_triangle(delta, param=param)
    grid = np.linspace(-1, 1, 81)
    best = min(reduced_objective(obs, param, a + T[0, param], b + T[1, param]) for a in grid for b in grid)
    truth = reduced_objective(obs, param, T[0, param], T[1, param])
    assert truth == pytest.approx(best, abs=1e-12)
    assert truth == pytest.approx(delta)
    # a different latent configuration reaches the same optimum
    alt = reduced_objective(obs, param, T[0, param] - 0.2, T[1, param] + 0.4)
    assert alt == pytest.approx(delta)

    sol = infer_latents(obs)
    _, f_lp = lp_lad(np.vstack([obs.W, np.ones((1, 3))]), np.append(obs.logR[:, param], 0.0))
    data_term = np.abs(sol.residuals[:, param]).sum() + abs(sol.latents[:, param].sum())
    assert data_term == pytest.approx(f_lp, abs=1e-8)


def test_triangle_aliasing():
    # corrupting edge (0,1) by +d gives the same observations as corrupting
    # edge (0,2) by -d under a different zero-sum ground truth
    d = 0.6
    T, obs = corrupted_triangle(d, edge=0, param=0)
    shift = np.zeros((3, 6))
    shift[:, 0] = [-2 * d / 3, d / 3, d / 3]
    T2 = T + shift
    obs2 = exact_obs(T2)
    R2 = obs2.logR.copy()
    R2[1, 0] -= d
    np.testing.assert_allclose(R2, obs.logR, atol=1e-12)
    assert np.max(np.abs(T2 - T)) == pytest.approx(2 * d / 3)


def test_four_modalities_reject_single_outlier():
    T = zero_sum_latents(4, 6)
    obs = exact_obs(T)
    for edge in range(obs.k):
        R = obs.logR.copy()
        R[edge, 4] += 3.0
        sol = infer_latents(obs.with_observations(R))
        assert np.max(np.abs(sol.latents - T)) <= 1e-6
        big = np.abs(sol.residuals) > 1e-6
        assert big.sum() == 1 and big[edge, 4]
        assert sol.residuals[edge, 4] == pytest.approx(3.0, abs=1e-6)


@pytest.mark.parametrize("delta", [0.1, 1.0])
def test_l2_error_grows_with_outlier(delta):
    T = zero_sum_latents(4, 7)
    obs = exact_obs(T)
    R = obs.logR.copy()
    R[2, 1] += delta
    obs = obs.with_observations(R)
    l1 = np.max(np.abs(infer_latents(obs).latents - T))
    l2_sol = least_squares_latents(obs)
    l2 = np.max(np.abs(l2_sol.latents - T))
    # closed-form normal equations on the reduced (zero-sum) design
    A = obs.W[:, :-1] - obs.W[:, -1:]
    x = np.linalg.solve(A.T @ A, A.T @ obs.logR)
    np.testing.assert_allclose(l2_sol.latents, np.vstack([x, -x.sum(axis=0)]), atol=1e-12)
    assert l1 <= 1e-6
    assert l2 == pytest.approx(delta / 4, rel=1e-9)


def test_anchor_estimator_uses_only_anchor_edges():
    T = zero_sum_latents(4, 8)
    obs = exact_obs(T)
    R = obs.logR.copy()
    R[5, 0] += 1.0  # edge (2, 3) does not touch modality 0
    sol = anchor_latents(obs.with_observations(R), anchor=0)
    np.testing.assert_allclose(sol.latents, T, atol=1e-12)
    R[0, 0] += 1.0  # edge (0, 1) does
    sol = anchor_latents(obs.with_observations(R), anchor=0)
    assert np.max(np.abs(sol.latents - T)) == pytest.approx(0.75)
