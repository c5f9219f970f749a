"""Proximal gradient descent on the regularized marginal likelihood."""
from __future__ import annotations

from typing import Optional

import numpy as np

from mixedsel.likelihood import evaluate_arrays, lipschitz_bound
from mixedsel.problem import LMEProblem, Params
from mixedsel.regularizers import BlockRegularizer, prox_block
from mixedsel.solvers.config import STATUS_CONVERGED, STATUS_MAX_ITER, STATUS_STALLED, FitResult, SolverConfig, SolveTrace
from mixedsel.solvers.interior import default_start

PGD_MAX_ITER = 100_000


def _initial_step(problem: LMEProblem, beta) -> float:
    s = problem.stacked
    resid = s["y"] - s["x"] @ beta
    off = s["offsets"]
    bound = max(float(np.linalg.norm(resid[a:b])) for a, b in zip(off[:-1], off[1:]))
    lip = lipschitz_bound(problem, max(bound, 1e-8))
    return 1.0 / lip if np.isfinite(lip) and lip > 0 else 1.0


def _sufficient_decrease(problem, reg, x, value, g, alpha, p):
    # the gradient at the trial point is computed with its value; it is
    # reused as the next iterate's gradient when the step is accepted
    x_new = prox_block(reg, x - alpha * g, alpha, p)
    delta = x_new - x
    ev = evaluate_arrays(problem, x_new[:p], x_new[p:], 1)
    bound = value + g @ delta + (delta @ delta) / (2 * alpha)
    return ev.value <= bound + 1e-12 * abs(value), x_new, ev


def pgd_fit(problem: LMEProblem, reg: BlockRegularizer, cfg: SolverConfig = SolverConfig(),
            init: Optional[Params] = None) -> FitResult:
    """Minimizes L(x) + R(x) over x = (β, γ), γ ∈ [0, γ̄].

    Iterates x⁺ = prox_{αR+δ_C}(x − α∇L(x)). The step α starts at the
    inverse Lipschitz bound (residual bound taken at the initial point),
    grows by ``line_search.grow`` before every iteration and is shrunk
    until L(x⁺) ≤ L(x) + ∇L(x)ᵀΔ + ‖Δ‖²/(2α). Stops when
    ‖Δ‖ ≤ tol (1 + ‖x‖); a failed line search ends the run as stalled.
    """
    p, q = problem.p, problem.q
    reg.check_dims(p, q)
    if init is None:
        init = default_start(problem)
    init.check_dims(problem)
    ls = cfg.line_search
    max_iter = cfg.iterations(PGD_MAX_ITER)

    x = np.r_[init.beta, np.clip(init.gamma, 0.0, reg.gamma_upper)]
    ev = evaluate_arrays(problem, x[:p], x[p:], 1)
    g = np.r_[ev.grad_beta, ev.grad_gamma]
    # The Lipschitz seed is very conservative, so the step is first expanded
    # while the descent test still holds; otherwise the step-norm stopping
    # rule would fire on the artificially short early steps.
    alpha = _initial_step(problem, x[:p])
    for _ in range(ls.max_backtracks):
        trial = alpha / ls.shrink
        if not _sufficient_decrease(problem, reg, x, ev.value, g, trial, p)[0]:
            break
        alpha = trial
    alpha /= ls.grow
    trace = SolveTrace()
    status = STATUS_MAX_ITER
    it = 0
    while it < max_iter:
        it += 1
        g = np.r_[ev.grad_beta, ev.grad_gamma]
        alpha *= ls.grow
        accepted = False
        for _ in range(ls.max_backtracks + 1):
            accepted, x_new, ev_new = _sufficient_decrease(problem, reg, x, ev.value, g, alpha, p)
            if accepted:
                break
            alpha *= ls.shrink
        if not accepted:
            status = STATUS_STALLED
            it -= 1
            break
        step = float(np.linalg.norm(x_new - x))
        x, ev = x_new, ev_new
        trace.record(ev.value + reg.value(x[:p], x[p:]), step, step=alpha)
        if step <= cfg.tol * (1.0 + np.linalg.norm(x)):
            status = STATUS_CONVERGED
            break
    params = Params(x[:p], x[p:])
    return FitResult(params=params, objective=ev.value, iterations=it, converged=status == STATUS_CONVERGED,
                     status=status, trace=trace, final_residual=trace.residual[-1] if len(trace) else np.nan,
                     solver="pgd")
