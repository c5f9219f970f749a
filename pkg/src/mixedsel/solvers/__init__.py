"""Fitting algorithms: PGD, MSR3 and MSR3-Fast."""
from mixedsel.solvers.config import (FitResult, IPConfig, IPResult, LineSearchConfig, SolverConfig, SolveTrace,
                                     STATUS_CONVERGED, STATUS_MAX_ITER, STATUS_STALLED)
from mixedsel.solvers.interior import default_start, ip_inner_solve, kkt_matrix, kkt_residual
from mixedsel.solvers.msr3 import msr3_fast_fit, msr3_fit
from mixedsel.solvers.pgd import pgd_fit

SOLVERS = {
    "pgd": pgd_fit,
    "msr3": msr3_fit,
    "msr3-fast": msr3_fast_fit,
}


def get_solver(name: str):
    try:
        return SOLVERS[name]
    except KeyError:
        raise ValueError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}") from None


__all__ = [
    "FitResult", "IPConfig", "IPResult", "LineSearchConfig", "SolverConfig", "SolveTrace",
    "STATUS_CONVERGED", "STATUS_MAX_ITER", "STATUS_STALLED", "SOLVERS", "default_start", "get_solver",
    "ip_inner_solve", "kkt_matrix", "kkt_residual", "msr3_fast_fit", "msr3_fit", "pgd_fit",
]
