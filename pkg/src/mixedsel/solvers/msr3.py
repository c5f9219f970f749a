"""MSR3 solvers: relaxed value-function descent for sparse LMEs.

MSR3 couples the model variables x = (β, γ) to sparse auxiliaries
w = (β̃, γ̃) through κ_η and alternates x ← S_η(w), w ← prox(x).
:func:`msr3_fit` solves every x-update to interior-point convergence;
:func:`msr3_fast_fit` takes one Newton step per iteration and refreshes w
only near the central path.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from mixedsel.likelihood import evaluate_arrays
from mixedsel.problem import LMEProblem, Params
from mixedsel.regularizers import BlockRegularizer, prox_block
from mixedsel.solvers.config import (STATUS_CONVERGED, STATUS_MAX_ITER, STATUS_STALLED, FitResult,
                                     SolverConfig, SolveTrace)
from mixedsel.solvers.interior import (STEP_FORCED, STEP_RESIDUAL, damped_newton_step, default_start, floor_mu,
                                       ip_inner_solve, is_central, kkt_residual, mean_gap, next_mu, smallest)

MSR3_MAX_OUTER = 1000
MSR3_FAST_MAX_ITER = 5000


def _sparse_result(problem, w, x, it, status, trace, residual, solver) -> FitResult:
    beta, gamma = w[:problem.p], w[problem.p:]
    return FitResult(
        params=Params(beta, gamma),
        objective=evaluate_arrays(problem, beta, gamma, 0).value,
        iterations=it, converged=status == STATUS_CONVERGED, status=status, trace=trace,
        final_residual=residual, dense_params=x, solver=solver)


def msr3_fit(problem: LMEProblem, reg: BlockRegularizer, cfg: SolverConfig = SolverConfig(),
             init_w: Optional[Params] = None) -> FitResult:
    """Prox-gradient descent on the value function with exact inner solves.

    Each outer iteration computes x⁺ = S_η(w) with :func:`ip_inner_solve`
    (warm-started from the previous x⁺) and sets
    w⁺ = prox_block(reg, x⁺, [1/η]·p + [1/(η+λ̄)]·q). The loop stops when
    ‖w⁺ − w‖ ≤ tol (1 + ‖w‖). Trace residuals are the inner ‖G‖ values.
    """
    p, q = problem.p, problem.q
    reg.check_dims(p, q)
    if init_w is None:
        init_w = default_start(problem)
    init_w.check_dims(problem)
    w = np.clip(init_w.to_vector(), np.r_[np.full(p, -np.inf), np.zeros(q)],
                np.r_[np.full(p, np.inf), np.full(q, reg.gamma_upper)])
    steps = np.r_[np.full(p, 1.0 / cfg.eta), np.full(q, 1.0 / (cfg.eta + cfg.lam_bar))]
    max_outer = cfg.iterations(MSR3_MAX_OUTER)

    trace = SolveTrace()
    x_warm, v_warm = None, None
    inner = None
    status = STATUS_MAX_ITER
    it = 0
    while it < max_outer:
        it += 1
        inner = ip_inner_solve(problem, Params.from_vector(w, p), cfg, init=x_warm, v0=v_warm)
        x_warm, v_warm = inner.params, inner.v
        w_new = prox_block(reg, inner.params.to_vector(), steps, p)
        change = float(np.linalg.norm(w_new - w))
        trace.record(inner.trace.objective[-1] if len(inner.trace) else np.nan, inner.residual, inner.mu,
                     change, smallest(inner.params.gamma), smallest(inner.v))
        done = change <= cfg.tol * (1.0 + np.linalg.norm(w))
        w = w_new
        if not inner.converged:
            status = STATUS_STALLED
            break
        if done:
            status = STATUS_CONVERGED
            break
    return _sparse_result(problem, w, inner.params, it, status, trace, inner.residual, "msr3")


def msr3_fast_fit(problem: LMEProblem, reg: BlockRegularizer, cfg: SolverConfig = SolverConfig(),
                  init: Optional[Params] = None) -> FitResult:
    """Interleaves interior-point Newton steps with prox updates of the anchor.

    Every iteration takes one Newton step on G_{μ,η} anchored at the sparse
    iterate w̃. The step starts at α = 0.99 · min(1, max step keeping
    γ, v > 0) and is halved until ‖G_μ‖ drops by ``ip.descent_factor``,
    as in :func:`ip_inner_solve`; if no halving succeeds the capped step is
    taken and μ reset to the duality gap (never below
    ``ip.mu_decay · tol``), unless the barrier objective
    fallback of :func:`damped_newton_step` accepts a shorter step. When a
    residual-decrease step lands near the central path,
    ‖γ⁺∘v⁺ − (vᵀγ/q) 1‖ ≤ 0.5 vᵀγ/q, the anchor becomes
    w̃ = prox_{αR}(x⁺) with the capped α, and μ = vᵀγ/(10q). The run
    converges when ‖G_{μ,η}‖ ≤ tol and μ ≤ tol, and stalls when neither x
    nor w̃ moved by at least ``cfg.ip.stall_tol``.

    Returns the sparse iterate w̃ as ``params`` and x⁺ as ``dense_params``.
    """
    p, q = problem.p, problem.q
    reg.check_dims(p, q)
    if init is None:
        init = default_start(problem)
    init.check_dims(problem)
    if np.any(init.gamma <= 0):
        raise ValueError("msr3_fast_fit needs a strictly positive initial gamma")
    eta, lam_bar, tol, ipc = cfg.eta, cfg.lam_bar, cfg.tol, cfg.ip
    max_iter = cfg.iterations(MSR3_FAST_MAX_ITER)

    beta, gamma = np.array(init.beta), np.array(init.gamma)
    t_beta, t_gamma = beta.copy(), gamma.copy()
    v = np.ones(q)
    mu = floor_mu(ipc.mu_decay * mean_gap(v, gamma), ipc, tol)
    ev = evaluate_arrays(problem, beta, gamma, 2)
    res = kkt_residual(ev, v, beta, gamma, t_beta, t_gamma, mu, eta, lam_bar)
    norm = float(np.linalg.norm(res))

    trace = SolveTrace()
    status = STATUS_MAX_ITER
    it = 0
    while True:
        if norm <= tol and mu <= tol:
            status = STATUS_CONVERGED
            break
        if it >= max_iter:
            break
        it += 1
        step = damped_newton_step(problem, ev, v, beta, gamma, res, t_beta, t_gamma, mu, cfg)
        alpha, n_beta, n_gamma, n_v = step.alpha, step.beta, step.gamma, step.v
        nt_beta, nt_gamma = t_beta, t_gamma
        if step.kind == STEP_FORCED:
            mu = floor_mu(mean_gap(n_v, n_gamma), ipc, tol)
        elif step.kind == STEP_RESIDUAL and is_central(n_v, n_gamma, ipc.centrality_factor):
            w = prox_block(reg, np.r_[n_beta, n_gamma], step.alpha_max, p)
            nt_beta, nt_gamma = w[:p], w[p:]
            mu = next_mu(n_v, n_gamma, mu, ipc, tol)
        stall = ipc.stall_tol
        progress = (np.linalg.norm(n_beta - beta) >= stall or np.linalg.norm(n_gamma - gamma) >= stall
                    or np.linalg.norm(nt_beta - t_beta) >= stall or np.linalg.norm(nt_gamma - t_gamma) >= stall)
        beta, gamma, v, t_beta, t_gamma = n_beta, n_gamma, n_v, nt_beta, nt_gamma
        ev = step.ev
        res = kkt_residual(ev, v, beta, gamma, t_beta, t_gamma, mu, eta, lam_bar)
        norm = float(np.linalg.norm(res))
        trace.record(ev.value, norm, mu, alpha, smallest(gamma), smallest(v))
        if not progress and not (norm <= tol and mu <= tol):
            status = STATUS_STALLED
            break
    return _sparse_result(problem, np.r_[t_beta, t_gamma], Params(beta, gamma), it, status, trace, norm,
                          "msr3-fast")
