"""Interior-point Newton machinery for the relaxed problem.

For an anchor w = (β̂, γ̂) the relaxed objective is::

    L(β, γ) + η/2 ‖β − β̂‖² + (λ̄ + η)/2 ‖γ − γ̂‖² − μ Σ ln γ_j

and its barrier KKT conditions, with dual v = μ/γ, read::

    G(v, β, γ) = [ v∘γ − μ ;
                   ∇_β L + η (β − β̂) ;
                   ∇_γ L + (λ̄ + η)(γ − γ̂) − v ] = 0

Newton steps use the Fisher matrix in place of ∇²_γγ L, and fall back to
the expected (zero) cross block when needed, which keeps the (β, γ) block
positive definite without knowing λ̄.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from mixedsel.errors import NewtonSingular
from mixedsel.likelihood import LikelihoodEval, beta_gls, evaluate_arrays
from mixedsel.problem import LMEProblem, Params
from mixedsel.solvers.config import (STATUS_CONVERGED, STATUS_MAX_ITER, STATUS_STALLED, IPResult,
                                     SolverConfig, SolveTrace)


def kkt_residual(ev: LikelihoodEval, v, beta, gamma, anchor_beta, anchor_gamma, mu, eta, lam_bar) -> np.ndarray:
    """Stacked G_{μ,η}(v, β, γ) in the order [v-block, β-block, γ-block]."""
    return np.concatenate([
        v * gamma - mu,
        ev.grad_beta + eta * (beta - anchor_beta),
        ev.grad_gamma + (lam_bar + eta) * (gamma - anchor_gamma) - v,
    ])


def _is_pd(mat: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(mat)
        return True
    except np.linalg.LinAlgError:
        return False


def kkt_matrix(ev: LikelihoodEval, v, gamma, eta, lam_bar) -> np.ndarray:
    """∇G with observed curvature where it is safe, Fisher curvature otherwise.

    Eliminating dv leaves a (β, γ) system whose γγ block gains Diag(v/γ).
    The exact Hessian is used when that reduced block is positive definite.
    Otherwise the γγ block becomes the Fisher information, and if the block
    is still indefinite the cross block is replaced by its expectation,
    which is zero, so the step becomes a Fisher-scoring step and the block
    stays positive definite.
    """
    p = ev.grad_beta.shape[0]
    q = gamma.shape[0]
    h_bb = ev.hess_beta + eta * np.eye(p)
    shift = (eta + lam_bar) * np.eye(q)
    barrier = np.diag(v / gamma)
    cross = ev.hess_cross
    h_gg = ev.hess_gamma + shift
    if not _is_pd(np.block([[h_bb, cross], [cross.T, h_gg + barrier]])):
        h_gg = ev.fisher_gamma + shift
        if not _is_pd(np.block([[h_bb, cross], [cross.T, h_gg]])):
            cross = np.zeros_like(cross)
    jac = np.zeros((2 * q + p, 2 * q + p))
    vb, bb, gb = slice(0, q), slice(q, q + p), slice(q + p, 2 * q + p)
    jac[vb, vb] = np.diag(gamma)
    jac[vb, gb] = np.diag(v)
    jac[bb, bb] = h_bb
    jac[bb, gb] = cross
    jac[gb, vb] = -np.eye(q)
    jac[gb, bb] = cross.T
    jac[gb, gb] = h_gg
    return jac


def newton_direction(jac: np.ndarray, residual: np.ndarray) -> np.ndarray:
    """Solves ∇G d = −G; retries once with a 1e-8·I shift before giving up."""
    for shift in (0.0, 1e-8):
        mat = jac if shift == 0.0 else jac + shift * np.eye(jac.shape[0])
        try:
            direction = np.linalg.solve(mat, -residual)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(direction)):
            return direction
    raise NewtonSingular("interior-point Newton matrix is singular even after a 1e-8 shift")


def max_step(v, gamma, dv, dgamma) -> float:
    """Largest step in (0, 1] keeping γ + α dγ ≥ 0 and v + α dv ≥ 0."""
    alpha = 1.0
    for x, d in ((gamma, dgamma), (v, dv)):
        neg = d < 0
        if np.any(neg):
            alpha = min(alpha, float(np.min(-x[neg] / d[neg])))
    return alpha


def mean_gap(v, gamma) -> float:
    """Duality gap per coordinate, vᵀγ/q (0 when q = 0)."""
    return float(v @ gamma) / gamma.shape[0] if gamma.shape[0] else 0.0


def smallest(a) -> float:
    return float(np.min(a)) if a.size else np.inf


def is_central(v, gamma, factor) -> bool:
    """Centrality test ‖γ∘v − (vᵀγ/q) 1‖ ≤ factor · vᵀγ/q."""
    gap = mean_gap(v, gamma)
    return float(np.linalg.norm(gamma * v - gap)) <= factor * gap


def floor_mu(mu, ipc, tol) -> float:
    """Keeps μ at or above mu_decay · tol (see :func:`next_mu`)."""
    return max(float(mu), ipc.mu_decay * tol)


def next_mu(v, gamma, mu, ipc, tol) -> float:
    """Barrier update: μ ← mu_decay · vᵀγ/q near the central path, else unchanged.

    μ is never pushed below mu_decay · tol, which already satisfies the
    μ ≤ tol exit test; smaller values only degrade the conditioning of the
    complementarity rows.
    """
    if is_central(v, gamma, ipc.centrality_factor):
        return floor_mu(ipc.mu_decay * mean_gap(v, gamma), ipc, tol)
    return mu


def split(vec: np.ndarray, p: int, q: int):
    return vec[:q], vec[q:q + p], vec[q + p:]


def default_start(problem: LMEProblem) -> Params:
    """β = GLS estimate at γ = 1, γ = 1."""
    gamma = np.ones(problem.q)
    return Params(beta_gls(problem, gamma), gamma)


STEP_RESIDUAL = "residual"
STEP_BARRIER = "barrier"
STEP_FORCED = "forced"
ARMIJO = 1e-4


@dataclass
class NewtonStep:
    """Outcome of :func:`damped_newton_step`.

    ``kind`` tells which acceptance rule the step passed: the residual
    decrease rule, the barrier-objective fallback, or neither (a forced
    boundary-capped step). ``alpha_max`` is the boundary-capped length.
    """

    kind: str
    alpha: float
    alpha_max: float
    v: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    ev: LikelihoodEval

    @property
    def accepted(self) -> bool:
        return self.kind == STEP_RESIDUAL


def barrier_objective(ev: LikelihoodEval, beta, gamma, anchor_beta, anchor_gamma, mu, eta, lam_bar) -> float:
    """L + η/2 ‖β − β̂‖² + (λ̄ + η)/2 ‖γ − γ̂‖² − μ Σ ln γ."""
    return (ev.value + 0.5 * eta * float(np.sum((beta - anchor_beta) ** 2))
            + 0.5 * (eta + lam_bar) * float(np.sum((gamma - anchor_gamma) ** 2)) - mu * float(np.sum(np.log(gamma))))


def damped_newton_step(problem: LMEProblem, ev: LikelihoodEval, v, beta, gamma, res, anchor_beta, anchor_gamma,
                       mu, cfg: SolverConfig) -> NewtonStep:
    """Newton step on G_{μ,η} obeying the positivity and sufficient-descent rules.

    The step starts at ``fraction_to_boundary`` times the largest step
    keeping γ, v > 0 and is halved until ‖G_μ‖ drops by ``descent_factor``.
    Because ∇G carries approximate curvature blocks, the Newton direction
    need not reduce ‖G_μ‖; it does however descend the barrier objective
    (its (β, γ) part solves a positive definite system with right-hand side
    −∇φ_μ). So when the halving budget runs out, the step is halved again
    until φ_μ passes an Armijo test. If that fails too, the boundary-capped
    step is returned as a forced step.
    """
    ipc = cfg.ip
    eta, lam_bar = cfg.eta, cfg.lam_bar
    p, q = beta.shape[0], gamma.shape[0]
    norm = float(np.linalg.norm(res))
    d = newton_direction(kkt_matrix(ev, v, gamma, eta, lam_bar), res)
    dv, db, dg = split(d, p, q)
    alpha0 = ipc.fraction_to_boundary * max_step(v, gamma, dv, dg)

    def trial(alpha):
        nv, nb, ng = v + alpha * dv, beta + alpha * db, gamma + alpha * dg
        return nv, nb, ng, evaluate_arrays(problem, nb, ng, 2)

    alpha = alpha0
    for _ in range(ipc.max_halvings + 1):
        nv, nb, ng, nev = trial(alpha)
        nres = kkt_residual(nev, nv, nb, ng, anchor_beta, anchor_gamma, mu, eta, lam_bar)
        if np.linalg.norm(nres) <= ipc.descent_factor * norm:
            return NewtonStep(STEP_RESIDUAL, alpha, alpha0, nv, nb, ng, nev)
        alpha *= 0.5

    phi = barrier_objective(ev, beta, gamma, anchor_beta, anchor_gamma, mu, eta, lam_bar)
    slope = float(res[q:q + p] @ db + (res[q + p:] + v - mu / gamma) @ dg)
    if slope < 0:
        alpha = alpha0
        for _ in range(ipc.max_halvings + 1):
            nv, nb, ng, nev = trial(alpha)
            if barrier_objective(nev, nb, ng, anchor_beta, anchor_gamma, mu, eta, lam_bar) <= phi + ARMIJO * alpha * slope:
                return NewtonStep(STEP_BARRIER, alpha, alpha0, nv, nb, ng, nev)
            alpha *= 0.5
    nv, nb, ng, nev = trial(alpha0)
    return NewtonStep(STEP_FORCED, alpha0, alpha0, nv, nb, ng, nev)


def ip_inner_solve(problem: LMEProblem, anchor: Params, cfg: SolverConfig = SolverConfig(),
                   init: Optional[Params] = None, v0: Optional[np.ndarray] = None) -> IPResult:
    """Computes x⁺ = S_η(w), the minimizer of L + δ_C + κ_η(· − w).

    Newton steps are capped by the fraction-to-boundary rule and then
    halved until ‖G_μ‖ drops by ``cfg.ip.descent_factor``. If no step in
    the halving budget achieves that, a step passing an Armijo test on the
    barrier objective is accepted with μ unchanged (see
    :func:`damped_newton_step`). Failing both, the boundary-capped step is
    taken anyway and μ is reset to the new duality gap vᵀγ/q (floored as in
    :func:`next_mu`);
    ``cfg.ip.max_failures`` consecutive failures end the solve as stalled.
    After each accepted step μ follows :func:`next_mu`. The solve converges
    when ‖G_μ‖ ≤ tol and μ ≤ tol.

    Parameters
    ----------
    anchor : Params
        The point w = (β̂, γ̂); γ̂ may sit on the boundary.
    init : Params, optional
        Warm start. Entries of γ must be strictly positive; defaults to the
        anchor with γ̂ floored at 0.1.
    v0 : array, optional
        Starting dual, defaults to ones.
    """
    anchor.check_dims(problem)
    p, q = problem.p, problem.q
    eta, lam_bar, tol, ipc = cfg.eta, cfg.lam_bar, cfg.tol, cfg.ip
    a_beta, a_gamma = anchor.beta, anchor.gamma
    if init is None:
        beta, gamma = a_beta.copy(), np.maximum(a_gamma, 0.1)
    else:
        init.check_dims(problem)
        beta, gamma = np.array(init.beta), np.array(init.gamma)
        if np.any(gamma <= 0):
            raise ValueError("interior-point start needs strictly positive gamma")
    v = np.ones(q) if v0 is None else np.array(v0, dtype=float)
    if np.any(v <= 0):
        raise ValueError("interior-point start needs a strictly positive dual")
    mu = floor_mu(ipc.mu_decay * mean_gap(v, gamma), ipc, tol)

    trace = SolveTrace()
    ev = evaluate_arrays(problem, beta, gamma, 2)
    res = kkt_residual(ev, v, beta, gamma, a_beta, a_gamma, mu, eta, lam_bar)
    norm = float(np.linalg.norm(res))
    status = STATUS_MAX_ITER
    failures = 0
    it = 0
    while it < ipc.max_iter:
        if norm <= tol and mu <= tol:
            status = STATUS_CONVERGED
            break
        it += 1
        step = damped_newton_step(problem, ev, v, beta, gamma, res, a_beta, a_gamma, mu, cfg)
        if step.kind == STEP_RESIDUAL:
            failures = 0
            mu_next = next_mu(step.v, step.gamma, mu, ipc, tol)
        elif step.kind == STEP_BARRIER:
            failures = 0
            mu_next = mu
        else:
            failures += 1
            mu_next = floor_mu(mean_gap(step.v, step.gamma), ipc, tol)
        alpha, v, beta, gamma, ev, mu = step.alpha, step.v, step.beta, step.gamma, step.ev, mu_next
        res = kkt_residual(ev, v, beta, gamma, a_beta, a_gamma, mu, eta, lam_bar)
        norm = float(np.linalg.norm(res))
        trace.record(ev.value, norm, mu, alpha, smallest(gamma), smallest(v))
        if failures >= ipc.max_failures:
            status = STATUS_STALLED
            break
    else:
        if norm <= tol and mu <= tol:
            status = STATUS_CONVERGED
    return IPResult(Params(beta, gamma), v, mu, norm, it, status == STATUS_CONVERGED, status, trace)
