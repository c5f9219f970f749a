import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixedsel import (CAD, L1, SCAD, ALasso, BlockRegularizer, InvalidPenaltyParams, L0Ball, NoPenalty,
                      adaptive_weights, penalty_value, prox_block, prox_l0_topk, prox_scalar, prox_scalar_boxed)
from oracles import check_prox_case, random_case

finite = st.floats(-5, 5, allow_nan=False)
steps = st.floats(1e-3, 2.0)


# ---------------------------------------------------------- known values

def test_prox_scalar_examples():
    assert prox_scalar(L1(1.0), 2.0, 0.5) == pytest.approx(1.5)
    assert prox_scalar(L1(1.0), 0.3, 0.5) == 0.0
    assert prox_scalar(SCAD(1.0, 3.7), 2.5, 1.0) == pytest.approx((2.7 * 2.5 - 3.7) / 1.7)
    assert prox_scalar(CAD(1.0, 2.0), 5.0, 1.0) == pytest.approx(5.0)


def test_prox_boxed_examples():
    assert prox_scalar_boxed(L1(1.0), 2.0, 0.5, 1.0) == pytest.approx(1.0)
    for pen in (L1(1.0), ALasso(1.0, 2.0), SCAD(1.0), CAD(1.0, 2.0), NoPenalty()):
        assert prox_scalar_boxed(pen, -3.0, 0.7, 2.0) == 0.0
    assert prox_scalar_boxed(SCAD(1.0), 0.5, 1.0, 10.0) == 0.0


def test_l0_topk_examples():
    np.testing.assert_array_equal(prox_l0_topk([3.0, -1.0, 2.0], 2), [3.0, 0.0, 2.0])
    np.testing.assert_array_equal(prox_l0_topk([-1.0, -2.0], 2, nonneg=True), [0.0, 0.0])
    np.testing.assert_array_equal(prox_l0_topk([5.0, 4.0], 1, nonneg=True, upper=3.0), [3.0, 0.0])


def test_l0_topk_matches_support_enumeration():
    # brute force over all supports of size ≤ k for the projection onto {‖x‖₀ ≤ k, 0 ≤ x ≤ u}
    from itertools import combinations
    rng = np.random.default_rng(3)
    for _ in range(200):
        n, k = int(rng.integers(1, 6)), None
        k = int(rng.integers(0, n + 1))
        v = rng.normal(scale=3, size=n)
        upper = float(rng.uniform(0.5, 4))
        best = np.inf
        for size in range(k + 1):
            for sup in combinations(range(n), size):
                x = np.zeros(n)
                x[list(sup)] = np.clip(v[list(sup)], 0, upper)
                best = min(best, float(np.sum((x - v) ** 2)))
        got = prox_l0_topk(v, k, nonneg=True, upper=upper)
        assert np.count_nonzero(got) <= k
        assert float(np.sum((got - v) ** 2)) == pytest.approx(best, abs=1e-12)


def test_l0_tie_breaks_to_lowest_index():
    np.testing.assert_array_equal(prox_l0_topk([1.0, -1.0, 1.0], 1), [1.0, 0.0, 0.0])


def test_prox_block_examples():
    reg = BlockRegularizer(NoPenalty(), NoPenalty(), 2.0)
    np.testing.assert_array_equal(prox_block(reg, [-1.0, 3.0, -1.0, 3.0], 1.0, 2), [-1.0, 3.0, 0.0, 2.0])
    reg = BlockRegularizer(L1(1.0), L1(1.0))
    point = np.array([2.0, -0.5, 1.5, -2.0])
    expected = np.r_[np.sign(point[:2]) * np.maximum(np.abs(point[:2]) - 0.5, 0), np.maximum(point[2:] - 0.5, 0)]
    np.testing.assert_allclose(prox_block(reg, point, 0.5, 2), expected)
    reg = BlockRegularizer(L0Ball(1), L0Ball(1))
    out = prox_block(reg, [1.0, 2.0, 3.0, 0.5], 1.0, 2)
    assert np.count_nonzero(out[:2]) == 1 and np.count_nonzero(out[2:]) == 1


def test_prox_block_per_coordinate_steps():
    reg = BlockRegularizer(L1(1.0), L1(1.0))
    out = prox_block(reg, [2.0, 2.0], [1.0, 0.25], 1)
    np.testing.assert_allclose(out, [1.0, 1.75])


def test_penalty_value_examples():
    assert penalty_value(L1(1.0), [-2.0]) == pytest.approx(2.0)
    assert penalty_value(SCAD(1.0, 3.7), [100.0]) == pytest.approx(2.35)
    assert penalty_value(L0Ball(1), [1.0, 1.0]) == np.inf
    assert penalty_value(L0Ball(2), [1.0, 1.0]) == 0.0


def test_parameter_validation():
    for bad in (lambda: L1(-1.0), lambda: SCAD(0.0), lambda: SCAD(1.0, 1.0), lambda: CAD(1.0, 0.0),
                lambda: ALasso(1.0, -1.0), lambda: L0Ball(-1), lambda: BlockRegularizer(L1(1), L1(1), 0.0)):
        with pytest.raises(InvalidPenaltyParams):
            bad()
    with pytest.raises(InvalidPenaltyParams):
        L1(1.0).prox(1.0, 0.0)
    with pytest.raises(InvalidPenaltyParams):
        BlockRegularizer(L0Ball(3), L0Ball(1)).check_dims(2, 2)


def test_adaptive_weights():
    np.testing.assert_allclose(adaptive_weights([2.0, -0.5]), [1 / (2 + 1e-8), 1 / (0.5 + 1e-8)])


# -------------------------------------------------------------- grid oracle

@pytest.mark.parametrize("kind", ["l1", "alasso", "scad", "cad"])
@pytest.mark.parametrize("boxed", [False, True])
def test_prox_matches_grid_oracle(kind, boxed):
    rng = np.random.default_rng(zlib.crc32(f"{kind}-{boxed}".encode()))
    for _ in range(200):
        params, z, alpha, upper = random_case(rng, kind)
        arg_err, obj_err = check_prox_case(kind, params, z, alpha, upper, boxed)
        assert arg_err < 1e-3 and obj_err < 1e-6, (params, z, alpha, upper)


# --------------------------------------------------------------- properties

@settings(max_examples=200, deadline=None)
@given(finite, finite, steps, st.floats(0, 2))
def test_l1_nonexpansive(z1, z2, alpha, lam):
    for pen in (L1(lam), ALasso(lam, 1.7)):
        assert abs(pen.prox(z1, alpha) - pen.prox(z2, alpha)) <= abs(z1 - z2) + 1e-12


@settings(max_examples=200, deadline=None)
@given(finite, finite, steps, st.floats(0.1, 2), st.floats(1.1, 5), st.floats(0.1, 3))
def test_prox_monotone(z1, z2, alpha, lam, rho_scad, rho_cad):
    lo, hi = min(z1, z2), max(z1, z2)
    for pen in (L1(lam), SCAD(lam, rho_scad), CAD(lam, rho_cad)):
        assert pen.prox(lo, alpha) <= pen.prox(hi, alpha) + 1e-12
        assert pen.prox_boxed(lo, alpha, 3.0) <= pen.prox_boxed(hi, alpha, 3.0) + 1e-12


@settings(max_examples=100, deadline=None)
@given(finite, steps, st.floats(0.5, 6))
def test_zero_strength_is_identity(z, alpha, upper):
    for pen in (L1(0.0), ALasso(1.0, 0.0), CAD(0.0, 1.0)):
        assert pen.prox(z, alpha) == pytest.approx(z)
        assert pen.prox_boxed(z, alpha, upper) == pytest.approx(min(max(z, 0.0), upper))


@settings(max_examples=200, deadline=None)
@given(finite, st.floats(0.1, 2), st.floats(2.01, 5))
def test_scad_alpha_one_is_classic(z, sigma, rho):
    # classic three-branch SCAD thresholding rule at unit step
    a = abs(z)
    if a <= 2 * sigma:
        expected = np.sign(z) * max(a - sigma, 0.0)
    elif a <= rho * sigma:
        expected = ((rho - 1) * z - np.sign(z) * rho * sigma) / (rho - 2)
    else:
        expected = z
    assert SCAD(sigma, rho).prox(z, 1.0) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(finite, min_size=2, max_size=6), steps, st.floats(0.5, 6))
def test_gamma_block_lands_in_box(values, alpha, upper):
    for pen in (L1(0.5), SCAD(0.5), CAD(0.5, 1.0), NoPenalty()):
        reg = BlockRegularizer(NoPenalty(), pen, upper)
        out = prox_block(reg, np.r_[0.0, values], alpha, 1)[1:]
        assert np.all(out >= 0) and np.all(out <= upper)
