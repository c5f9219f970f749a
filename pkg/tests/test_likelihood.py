import numpy as np
import pytest

from mixedsel import (FactorizationFailure, GroupBlock, LMEProblem, Params, SingularDesign, assemble_omega,
                      beta_gls, evaluate, fisher_gamma, grad, hessian_beta, hessian_cross, hessian_gamma,
                      lipschitz_bound, nll)
from conftest import central_diff, random_params, random_problem, scalar_problem


def direct_nll(problem, params):
    """Oracle: explicit Ω, solve and slogdet, no Cholesky."""
    total = 0.0
    for g in problem:
        omega = g.z_random @ np.diag(params.gamma) @ g.z_random.T + np.diag(g.obs_var)
        r = g.y - g.x_fixed @ params.beta
        total += 0.5 * r @ np.linalg.solve(omega, r) + 0.5 * np.linalg.slogdet(omega)[1]
    return total


# ----------------------------------------------------------- assemble_omega

def test_omega_scalar_cases():
    g = GroupBlock([[1.0]], [[1.0]], [0.0], [1.0])
    assert assemble_omega(g, [0.0]).chol == pytest.approx(np.array([[1.0]]))
    assert assemble_omega(g, [1.0]).chol == pytest.approx(np.array([[np.sqrt(2.0)]]))


def test_omega_two_by_two():
    g = GroupBlock(np.ones((2, 1)), np.ones((2, 1)), [0.0, 0.0], [1.0, 1.0])
    f = assemble_omega(g, [1.0])
    np.testing.assert_allclose(f.omega, [[2.0, 1.0], [1.0, 2.0]], rtol=1e-12)
    assert np.all(np.diag(f.chol) > 0)
    np.testing.assert_allclose(f.logdet(), np.log(3.0), rtol=1e-12)


def test_omega_rejects_negative_gamma():
    g = GroupBlock([[1.0]], [[1.0]], [0.0], [1.0])
    with pytest.raises(ValueError):
        assemble_omega(g, [-1.0])


def test_group_validation():
    with pytest.raises(ValueError):
        GroupBlock([[1.0]], [[1.0]], [0.0], [0.0])
    with pytest.raises(ValueError):
        GroupBlock(np.zeros((2, 1)), np.zeros((1, 1)), [0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        GroupBlock(np.zeros((0, 1)), np.zeros((0, 1)), [], [])


def test_negative_gamma_in_solver_path_raises():
    with pytest.raises(ValueError):
        Params([0.0], [-1.0])
    prob = scalar_problem()
    from mixedsel.likelihood import evaluate_arrays
    with pytest.raises(FactorizationFailure):
        evaluate_arrays(prob, np.zeros(1), np.array([-5.0]), 0)


# ---------------------------------------------------------------------- nll

def test_nll_scalar_examples():
    assert nll(scalar_problem(0.0), Params([0.0], [0.0])) == pytest.approx(0.0, abs=1e-15)
    assert nll(scalar_problem(2.0), Params([0.0], [1.0])) == pytest.approx(0.5 * 4 / 2 + 0.5 * np.log(2), rel=1e-12)
    assert nll(scalar_problem(2.0), Params([2.0], [0.0])) == pytest.approx(0.0, abs=1e-15)


def test_nll_matches_direct_form(rng):
    for _ in range(20):
        prob = random_problem(rng)
        params = random_params(rng, prob)
        assert nll(prob, params) == pytest.approx(direct_nll(prob, params), rel=1e-10)


def test_nll_permutation_invariance(rng):
    prob = random_problem(rng, m=4)
    params = random_params(rng, prob)
    base = nll(prob, params)
    shuffled = []
    for g in reversed(prob.groups):
        perm = rng.permutation(g.n)
        shuffled.append(GroupBlock(g.x_fixed[perm], g.z_random[perm], g.y[perm], g.obs_var[perm]))
    assert nll(LMEProblem(tuple(shuffled)), params) == pytest.approx(base, rel=1e-12)


# ---------------------------------------------------------------- gradient

def test_grad_scalar_examples():
    g = grad(scalar_problem(0.0), Params([0.0], [0.0]))
    assert g[1] == pytest.approx(0.5)
    prob = scalar_problem(1.0)
    g = grad(prob, Params([0.0], [0.0]))
    assert g[0] == pytest.approx(-1.0)
    fd = central_diff(lambda x: nll(prob, Params(x[:1], x[1:])), [0.0, 0.3])
    np.testing.assert_allclose(grad(prob, Params([0.0], [0.3])), fd, rtol=1e-7)


def test_grad_random_problem(rng):
    prob = random_problem(rng, m=3, p=2, q=2)
    params = random_params(rng, prob)
    fd = central_diff(lambda x: nll(prob, Params(x[:2], x[2:])), params.to_vector())
    g = grad(prob, params)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-5


# ---------------------------------------------------------------- hessians

def test_hessian_scalar_examples():
    prob = scalar_problem(0.0)
    at = Params([0.0], [0.0])
    assert hessian_gamma(prob, at)[0, 0] == pytest.approx(-0.5)
    assert hessian_beta(prob, at)[0, 0] == pytest.approx(1.0)
    assert fisher_gamma(prob, at)[0, 0] == pytest.approx(0.5)


def test_hessian_blocks_against_fd(rng):
    prob = random_problem(rng, m=3, p=3, q=2)
    params = random_params(rng, prob)
    p = prob.p
    fd = central_diff(lambda x: grad(prob, Params(x[:p], x[p:])), params.to_vector(), h=1e-5)
    hb, hc, hg = hessian_beta(prob, params), hessian_cross(prob, params), hessian_gamma(prob, params)
    np.testing.assert_allclose(hb, fd[:p, :p], rtol=1e-4, atol=1e-6)
    np.testing.assert_allclose(hc, fd[p:, :p].T, rtol=1e-4, atol=1e-6)
    np.testing.assert_allclose(hg, fd[p:, p:], rtol=1e-4, atol=1e-6)
    assert np.array_equal(hg, hg.T)
    assert np.array_equal(hb, hb.T)


def test_cross_block_vanishes_at_zero_residual():
    # one observation fitted exactly: ξ = 0 so every γ-column of the cross block is 0
    prob = scalar_problem(2.0)
    params = Params([2.0], [0.7])
    assert hessian_cross(prob, params)[0, 0] == pytest.approx(0.0, abs=1e-14)
    fd = central_diff(lambda b: grad(prob, Params(b, [0.7]))[1], [2.0], h=1e-6)
    assert fd[0] == pytest.approx(0.0, abs=1e-8)


def test_fisher_psd_and_data_free(rng):
    for _ in range(20):
        prob = random_problem(rng)
        params = random_params(rng, prob)
        f = fisher_gamma(prob, params)
        assert np.linalg.eigvalsh(f).min() >= -1e-10
        shifted = Params(params.beta + 3.0, params.gamma)
        np.testing.assert_array_equal(f, fisher_gamma(prob, shifted))


def test_fisher_is_expected_hessian_monte_carlo():
    # scalar case: Ω = γ + 1 with γ = 0.5, ξ ~ N(0, Ω); E[H_γγ] = F_γγ
    rng = np.random.default_rng(7)
    gamma = 0.5
    omega = gamma + 1.0
    draws = rng.normal(scale=np.sqrt(omega), size=10_000)
    values = np.array([hessian_gamma(scalar_problem(float(d)), Params([0.0], [gamma]))[0, 0] for d in draws])
    target = fisher_gamma(scalar_problem(0.0), Params([0.0], [gamma]))[0, 0]
    se = values.std(ddof=1) / np.sqrt(values.size)
    assert abs(values.mean() - target) < 4 * se


# ---------------------------------------------------------------- beta_gls

def test_beta_gls_examples():
    assert beta_gls(scalar_problem(3.0), [0.0]) == pytest.approx([3.0])
    two = LMEProblem((GroupBlock([[1.0]], [[1.0]], [0.0], [1.0]), GroupBlock([[1.0]], [[1.0]], [4.0], [1.0])))
    assert beta_gls(two, [0.0]) == pytest.approx([2.0])
    assert beta_gls(two, [1.0]) == pytest.approx([2.0])


def test_beta_gls_stationarity(rng):
    for _ in range(10):
        prob = random_problem(rng)
        gamma = rng.uniform(0.1, 2.0, size=prob.q)
        b = beta_gls(prob, gamma)
        g = grad(prob, Params(b, gamma))[:prob.p]
        scale = np.linalg.norm(grad(prob, Params(np.zeros(prob.p), gamma))[:prob.p])
        assert np.linalg.norm(g) <= 1e-8 * max(scale, 1.0)


def test_beta_gls_collinear():
    x = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    prob = LMEProblem((GroupBlock(x, np.ones((3, 1)), [1.0, 2.0, 3.0], np.ones(3)),))
    with pytest.raises(SingularDesign):
        beta_gls(prob, [1.0])


# -------------------------------------------------------------- lipschitz

def test_lipschitz_examples():
    one = LMEProblem((GroupBlock([[1.0]], [[1.0]], [0.0], [1.0]),))
    assert lipschitz_bound(one, 1.0) == pytest.approx(1.0)
    # obs_var × 4 divides the X-term by 4; a tiny residual bound isolates that term
    four = LMEProblem((GroupBlock([[1.0]], [[1.0]], [0.0], [4.0]),))
    assert lipschitz_bound(four, 1e-9) == pytest.approx(lipschitz_bound(one, 1e-9) / 4, rel=1e-6)
    two = LMEProblem(one.groups * 2)
    assert lipschitz_bound(two, 1.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        lipschitz_bound(one, 0.0)


def test_evaluate_checks_dims(rng):
    prob = random_problem(rng, p=2, q=2)
    with pytest.raises(ValueError):
        evaluate(prob, Params(np.zeros(3), np.ones(2)))
