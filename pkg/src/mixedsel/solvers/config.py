"""Solver configuration and result containers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from mixedsel.problem import Params

STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max_iter"
STATUS_STALLED = "stalled"


@dataclass(frozen=True)
class LineSearchConfig:
    shrink: float = 0.5
    grow: float = 1.1
    max_backtracks: int = 50

    def __post_init__(self):
        if not 0 < self.shrink < 1:
            raise ValueError("line_search.shrink must lie in (0, 1)")
        if not self.grow >= 1:
            raise ValueError("line_search.grow must be at least 1")
        if self.max_backtracks < 1:
            raise ValueError("line_search.max_backtracks must be positive")


@dataclass(frozen=True)
class IPConfig:
    """Interior-point constants.

    ``max_iter`` bounds the Newton iterations of one inner solve,
    ``max_halvings`` the step halvings spent on the sufficient-descent test
    and ``max_failures`` the consecutive failed iterations before the inner
    solve reports a stall. ``stall_tol`` is the movement threshold of the
    MSR3-Fast progress test; it sits well below ``tol`` because Newton steps
    are smaller than the KKT residual by roughly the curvature of L.
    """

    mu_decay: float = 0.1
    descent_factor: float = 0.99
    fraction_to_boundary: float = 0.99
    centrality_factor: float = 0.5
    max_iter: int = 1000
    max_halvings: int = 30
    max_failures: int = 5
    stall_tol: float = 1e-12

    def __post_init__(self):
        for name in ("mu_decay", "descent_factor", "fraction_to_boundary"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"ip.{name} must lie in (0, 1)")
        if not self.centrality_factor > 0:
            raise ValueError("ip.centrality_factor must be positive")
        if not self.stall_tol >= 0:
            raise ValueError("ip.stall_tol must be nonnegative")
        if min(self.max_iter, self.max_halvings, self.max_failures) < 1:
            raise ValueError("ip iteration budgets must be positive")


@dataclass(frozen=True)
class SolverConfig:
    """Shared settings for all solvers.

    ``max_iter=None`` selects the per-solver default (PGD 100000,
    MSR3-Fast 5000, MSR3 outer loop 1000).
    """

    tol: float = 1e-6
    max_iter: Optional[int] = None
    eta: float = 1.0
    lam_bar: float = 0.0
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)
    ip: IPConfig = field(default_factory=IPConfig)

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.lam_bar >= 0:
            raise ValueError("lam_bar must be nonnegative")

    def iterations(self, default: int) -> int:
        return default if self.max_iter is None else self.max_iter


@dataclass
class SolveTrace:
    """Per-iteration history.

    ``residual`` is ‖G‖ for interior-point solvers and the step norm for PGD.
    ``min_gamma`` and ``min_v`` track interiority and stay NaN for PGD.
    """

    objective: List[float] = field(default_factory=list)
    residual: List[float] = field(default_factory=list)
    mu: List[float] = field(default_factory=list)
    step: List[float] = field(default_factory=list)
    min_gamma: List[float] = field(default_factory=list)
    min_v: List[float] = field(default_factory=list)

    def record(self, objective, residual, mu=np.nan, step=np.nan, min_gamma=np.nan, min_v=np.nan):
        self.objective.append(float(objective))
        self.residual.append(float(residual))
        self.mu.append(float(mu))
        self.step.append(float(step))
        self.min_gamma.append(float(min_gamma))
        self.min_v.append(float(min_v))

    def __len__(self) -> int:
        return len(self.objective)

    def as_arrays(self) -> dict:
        return {k: np.asarray(getattr(self, k)) for k in
                ("objective", "residual", "mu", "step", "min_gamma", "min_v")}


@dataclass
class FitResult:
    """Solver output.

    For MSR3 variants ``params`` is the sparse prox iterate and
    ``dense_params`` the relaxed iterate; PGD leaves ``dense_params`` None.
    ``objective`` is the nll at ``params``.
    """

    params: Params
    objective: float
    iterations: int
    converged: bool
    status: str
    trace: SolveTrace
    final_residual: float
    dense_params: Optional[Params] = None
    solver: str = ""


@dataclass
class IPResult:
    """Exit state of one interior-point inner solve."""

    params: Params
    v: np.ndarray
    mu: float
    residual: float
    iterations: int
    converged: bool
    status: str
    trace: SolveTrace
