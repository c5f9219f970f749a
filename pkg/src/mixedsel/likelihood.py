"""Marginal negative log-likelihood of a linear mixed-effects model.

For Γ = Diag(γ) and Ω_i = Z_i Γ Z_iᵀ + Λ_i the objective is::

    L(β, γ) = Σ_i ½ ξ_iᵀ Ω_i⁻¹ ξ_i + ½ ln det Ω_i,    ξ_i = y_i − X_i β

All evaluations go through per-group Cholesky factors Ω_i = L_i L_iᵀ;
derivative constants were fixed against central finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from mixedsel import _kernels
from mixedsel.errors import FactorizationFailure, SingularDesign
from mixedsel.problem import GroupBlock, LMEProblem, Params


@dataclass(frozen=True)
class OmegaFactor:
    """Lower Cholesky factor of one group's marginal covariance."""

    chol: np.ndarray

    @property
    def omega(self) -> np.ndarray:
        return self.chol @ self.chol.T

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Applies Ω⁻¹ to ``rhs`` with two triangular solves."""
        half = scipy.linalg.solve_triangular(self.chol, rhs, lower=True, check_finite=False)
        return scipy.linalg.solve_triangular(self.chol.T, half, lower=False, check_finite=False)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))


def assemble_omega(group: GroupBlock, gamma) -> OmegaFactor:
    """Cholesky factor of Z Diag(γ) Zᵀ + Diag(obs_var) for a single group."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("gamma must be nonnegative")
    z = group.z_random
    omega = (z * gamma) @ z.T
    omega[np.diag_indices_from(omega)] += group.obs_var
    try:
        chol = scipy.linalg.cholesky(omega, lower=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise FactorizationFailure(f"Ω is not positive definite: {exc}") from exc
    return OmegaFactor(chol)


@dataclass(frozen=True)
class LikelihoodEval:
    """Value and (optionally) derivatives of L at one point.

    Fields that were not requested stay ``None``.
    """

    value: float
    grad_beta: np.ndarray = None
    grad_gamma: np.ndarray = None
    hess_beta: np.ndarray = None
    hess_cross: np.ndarray = None
    hess_gamma: np.ndarray = None
    fisher_gamma: np.ndarray = None

    @property
    def grad(self) -> np.ndarray:
        return np.concatenate([self.grad_beta, self.grad_gamma])


def evaluate_arrays(problem: LMEProblem, beta: np.ndarray, gamma: np.ndarray, order: int = 0) -> LikelihoodEval:
    """Evaluates L and derivatives up to ``order`` (0, 1 or 2) at raw arrays.

    This is the hot path used by the solvers; it performs no validation
    beyond the positive-definiteness of every Ω_i.
    """
    s = problem.stacked
    ok, value, gb, gg, hbb, hbg, hgg, fisher = _kernels.evaluate(
        s["x"], s["z"], s["y"], s["obs_var"], s["offsets"],
        np.ascontiguousarray(beta, dtype=float), np.ascontiguousarray(gamma, dtype=float), order)
    if not ok:
        raise FactorizationFailure("marginal covariance is not positive definite "
                                   "(negative or non-finite gamma, or invalid obs_var)")
    if order == 0:
        return LikelihoodEval(value)
    if order == 1:
        return LikelihoodEval(value, gb, gg)
    return LikelihoodEval(value, gb, gg, hbb, hbg, hgg, fisher)


def evaluate(problem: LMEProblem, params: Params, order: int = 0) -> LikelihoodEval:
    params.check_dims(problem)
    return evaluate_arrays(problem, params.beta, params.gamma, order)


def nll(problem: LMEProblem, params: Params) -> float:
    return evaluate(problem, params, 0).value


def grad(problem: LMEProblem, params: Params) -> np.ndarray:
    """Gradient of L, stacked as [∇_β L, ∇_γ L]."""
    return evaluate(problem, params, 1).grad


def hessian_beta(problem: LMEProblem, params: Params) -> np.ndarray:
    """Σ X_iᵀ Ω_i⁻¹ X_i."""
    return evaluate(problem, params, 2).hess_beta


def hessian_cross(problem: LMEProblem, params: Params) -> np.ndarray:
    """∂²L/∂β∂γ, a p×q matrix: Σ (X_iᵀΩ_i⁻¹Z_i) Diag(Z_iᵀΩ_i⁻¹ξ_i)."""
    return evaluate(problem, params, 2).hess_cross


def hessian_gamma(problem: LMEProblem, params: Params) -> np.ndarray:
    """½ Σ [2 (b_i b_iᵀ) ∘ A_i − A_i ∘ A_i] with A_i = Z_iᵀΩ_i⁻¹Z_i, b_i = Z_iᵀΩ_i⁻¹ξ_i."""
    return evaluate(problem, params, 2).hess_gamma


def fisher_gamma(problem: LMEProblem, params: Params) -> np.ndarray:
    """Expected γ-Hessian ½ Σ A_i ∘ A_i; PSD and independent of y and β."""
    return evaluate(problem, params, 2).fisher_gamma


def beta_gls(problem: LMEProblem, gamma) -> np.ndarray:
    """Generalized least squares β minimizing L(·, γ) for fixed γ."""
    gamma = np.asarray(gamma, dtype=float)
    at_zero = evaluate_arrays(problem, np.zeros(problem.p), gamma, 2)
    normal = at_zero.hess_beta
    try:
        factor = scipy.linalg.cho_factor(normal, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularDesign("fixed-effect normal matrix is not positive definite; "
                             "check for collinear fixed covariates") from exc
    diag = np.diag(factor[0])
    if diag.min() <= np.sqrt(np.finfo(float).eps) * diag.max():
        raise SingularDesign("fixed-effect normal matrix is numerically rank deficient; "
                             "check for collinear fixed covariates")
    return scipy.linalg.cho_solve(factor, -at_zero.grad_beta)


def lipschitz_bound(problem: LMEProblem, residual_bound: float) -> float:
    """Upper bound on the gradient Lipschitz constant of L.

    ``residual_bound`` bounds ‖y_i − X_i β‖ over the region of interest.
    Each group contributes the largest of ‖X‖²/λ, r‖X‖‖Z‖²/λ² and
    r‖Z‖⁴/λ³, where λ is the smallest observation variance of the group.
    """
    if residual_bound <= 0:
        raise ValueError("residual_bound must be positive")
    total = 0.0
    for g in problem:
        nx = np.linalg.norm(g.x_fixed, 2) if g.x_fixed.size else 0.0
        nz = np.linalg.norm(g.z_random, 2) if g.z_random.size else 0.0
        lam = float(np.min(g.obs_var))
        total += max(nx ** 2 / lam,
                     residual_bound * nx * nz ** 2 / lam ** 2,
                     residual_bound * nz ** 4 / lam ** 3)
    return total
