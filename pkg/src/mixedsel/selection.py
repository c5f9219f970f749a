"""Model selection: information criteria, regularization paths and support metrics.

λ is tuned by golden-section search over log λ, η by a grid and the L0
budget k by a sweep. Every fitted model is scored by an information
criterion whose degrees of freedom are the nonzero counts of β and γ.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from mixedsel.errors import DegenerateSample, MixedSelError
from mixedsel.problem import LMEProblem, Params
from mixedsel.regularizers import (CAD, L1, SCAD, ALasso, BlockRegularizer, L0Ball, NoPenalty, Penalty,
                                   adaptive_weights)
from mixedsel.solvers.config import FitResult, SolverConfig

ZERO_TOL = 1e-4
GOLDEN_ITERS = 20
WARM_GAMMA_FLOOR = 0.1
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

# λ brackets per solver. MSR3 thresholds act on coefficients, PGD thresholds
# on gradient-scaled steps, so PGD needs a wider range to reach the empty model.
DEFAULT_LAM_RANGE = {
    "pgd": (1e-2, 1e4),
    "msr3": (1e-3, 1e2),
    "msr3-fast": (1e-3, 1e2),
}

Solver = Callable[..., FitResult]
RegFamily = Callable[[float], BlockRegularizer]


# ---------------------------------------------------------------- criteria

@dataclass(frozen=True)
class InfoCriterion:
    """BIC, or marginal AIC with the finite-sample factor α_n.

    ``alpha_mode='literal'`` uses α_n = n(n − df − 1) and ``'corrected'``
    uses α_n = n / (n − df − 1). ``df_mode='sparse'`` counts nonzero
    coefficients, ``'ambient'`` charges p + q for every model.
    """

    kind: str = "bic"
    alpha_mode: str = "corrected"
    df_mode: str = "sparse"

    def __post_init__(self):
        if self.kind not in ("bic", "aic"):
            raise ValueError(f"unknown information criterion {self.kind!r}")
        if self.alpha_mode not in ("literal", "corrected"):
            raise ValueError(f"unknown AIC alpha mode {self.alpha_mode!r}")
        if self.df_mode not in ("sparse", "ambient"):
            raise ValueError(f"unknown df mode {self.df_mode!r}")

    @classmethod
    def parse(cls, name: str) -> "InfoCriterion":
        """Accepts ``bic``, ``aic`` (corrected), ``aic-corrected`` and ``aic-literal``."""
        table = {"bic": cls("bic"), "aic": cls("aic"), "aic-corrected": cls("aic"),
                 "aic-literal": cls("aic", alpha_mode="literal")}
        try:
            return table[name.lower()]
        except KeyError:
            raise ValueError(f"unknown information criterion {name!r}; choose from {sorted(table)}") from None

    @property
    def name(self) -> str:
        return "bic" if self.kind == "bic" else f"aic-{self.alpha_mode}"


BIC = InfoCriterion("bic")
AIC = InfoCriterion("aic")


def info_criterion(ic: InfoCriterion, nll_value: float, n: int, df_fixed: int, df_random: int) -> float:
    """2·nll + complexity penalty.

    BIC charges ln(n) per degree of freedom, AIC charges 2α_n. The AIC
    factor uses df = df_fixed + df_random in place of p + q.
    """
    if not n > 0:
        raise ValueError("sample size n must be positive")
    df = int(df_fixed) + int(df_random)
    if ic.kind == "bic":
        return 2.0 * nll_value + math.log(n) * df
    if ic.alpha_mode == "literal":
        alpha_n = n * (n - df - 1)
    else:
        if n <= df + 1:
            raise DegenerateSample(f"corrected AIC needs n > df + 1, got n={n}, df={df}")
        alpha_n = n / (n - df - 1)
    return 2.0 * nll_value + 2.0 * alpha_n * df


# ----------------------------------------------------------------- support

@dataclass(frozen=True)
class Support:
    """Nonzero masks of the fixed (β) and random (γ) blocks."""

    fixed: np.ndarray
    random: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "fixed", np.asarray(self.fixed, dtype=bool).ravel())
        object.__setattr__(self, "random", np.asarray(self.random, dtype=bool).ravel())

    @property
    def nnz_fixed(self) -> int:
        return int(self.fixed.sum())

    @property
    def nnz_random(self) -> int:
        return int(self.random.sum())

    @property
    def all(self) -> np.ndarray:
        return np.r_[self.fixed, self.random]

    @classmethod
    def from_params(cls, params: Params, zero_tol: float = ZERO_TOL,
                    exact: Tuple[bool, bool] = (False, False)) -> "Support":
        """|x| > zero_tol per entry, or x ≠ 0 for blocks flagged ``exact``."""
        def mask(x, use_exact):
            return x != 0 if use_exact else np.abs(x) > zero_tol
        return cls(mask(params.beta, exact[0]), mask(params.gamma, exact[1]))

    @classmethod
    def for_fit(cls, params: Params, reg: BlockRegularizer, zero_tol: float = ZERO_TOL) -> "Support":
        """Exact zeros for penalized blocks (prox outputs), ``zero_tol`` otherwise."""
        exact = (not isinstance(reg.beta_penalty, NoPenalty), not isinstance(reg.gamma_penalty, NoPenalty))
        return cls.from_params(params, zero_tol, exact)


@dataclass(frozen=True)
class SupportMetrics:
    accuracy: float
    fe_accuracy: float
    re_accuracy: float
    f1: float
    fe_f1: float
    re_f1: float
    precision: float
    recall: float

    def as_dict(self) -> Dict[str, float]:
        return dataclasses.asdict(self)


def _scores(truth: np.ndarray, est: np.ndarray):
    if truth.size == 0:
        return np.nan, np.nan, np.nan, np.nan
    tp = int(np.sum(truth & est))
    n_true, n_est = int(truth.sum()), int(est.sum())
    accuracy = float(np.mean(truth == est))
    precision = tp / n_est if n_est else float(n_true == 0)
    recall = tp / n_true if n_true else float(n_est == 0)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return accuracy, precision, recall, f1


def support_metrics(true_support: Union[Support, Sequence], est_support: Union[Support, Sequence]) -> SupportMetrics:
    """Selection accuracy and F1 of an estimated support.

    Accuracy is the fraction of coefficients classified correctly as zero
    or nonzero; F1 is the harmonic mean of precision and recall of the
    nonzero class, and equals 1 when both supports are empty. The ``fe_``
    and ``re_`` variants restrict to β and γ. Plain arrays are scored as a
    single block, leaving the block-wise metrics NaN.
    """
    if not isinstance(true_support, Support) or not isinstance(est_support, Support):
        truth = np.asarray(true_support, dtype=bool).ravel()
        est = np.asarray(est_support, dtype=bool).ravel()
        if truth.shape != est.shape:
            raise ValueError("supports must have equal lengths")
        acc, prec, rec, f1 = _scores(truth, est)
        return SupportMetrics(acc, np.nan, np.nan, f1, np.nan, np.nan, prec, rec)
    if (true_support.fixed.shape != est_support.fixed.shape
            or true_support.random.shape != est_support.random.shape):
        raise ValueError("supports must have equal block lengths")
    acc, prec, rec, f1 = _scores(true_support.all, est_support.all)
    fe_acc, _, _, fe_f1 = _scores(true_support.fixed, est_support.fixed)
    re_acc, _, _, re_f1 = _scores(true_support.random, est_support.random)
    return SupportMetrics(acc, fe_acc, re_acc, f1, fe_f1, re_f1, prec, rec)


# ------------------------------------------------------------------- paths

@dataclass
class PathEntry:
    """One fitted model on a path. Failed fits keep ``ic_value = inf`` and the error text."""

    hyper: Dict[str, float]
    result: Optional[FitResult]
    ic_value: float
    support: Optional[Support]
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None and np.isfinite(self.ic_value)


@dataclass
class SelectionReport:
    entries: List[PathEntry]
    best: int
    ic: InfoCriterion
    metrics: Optional[SupportMetrics] = None
    kind: str = "lambda"
    regularizer_for: Optional[Callable[[Dict[str, float]], BlockRegularizer]] = None

    @property
    def best_entry(self) -> Optional[PathEntry]:
        return self.entries[self.best] if self.best >= 0 else None

    def score(self, truth: Params, zero_tol: float = ZERO_TOL) -> "SelectionReport":
        """Fills ``metrics`` by comparing the best support with the nonzeros of ``truth``."""
        entry = self.best_entry
        if entry is not None:
            self.metrics = support_metrics(Support.from_params(truth, 0.0, (True, True)), entry.support)
        return self


def _argbest(entries: List[PathEntry]) -> int:
    best, value = -1, np.inf
    for i, e in enumerate(entries):
        if e.ok and e.ic_value < value:
            best, value = i, e.ic_value
    return best


def warm_start_from(result: FitResult) -> Params:
    """Next start along a path.

    MSR3-Fast needs a strictly interior start, so it restarts from its
    dense iterate with γ floored at 0.1; other solvers restart from the
    returned parameters.
    """
    if result.solver == "msr3-fast" and result.dense_params is not None:
        d = result.dense_params
        return Params(d.beta, np.maximum(d.gamma, WARM_GAMMA_FLOOR))
    return result.params


class _PathRunner:
    def __init__(self, problem, solver, ic, cfg, zero_tol, warm_start):
        self.problem, self.solver, self.ic = problem, solver, ic
        self.cfg, self.zero_tol, self.warm_start = cfg, zero_tol, warm_start
        self.init: Optional[Params] = None
        self.entries: List[PathEntry] = []

    def run(self, reg: BlockRegularizer, hyper: Dict[str, float], eta: float) -> float:
        cfg = dataclasses.replace(self.cfg, eta=eta)
        try:
            result = self.solver(self.problem, reg, cfg, self.init if self.warm_start else None)
            support = Support.for_fit(result.params, reg, self.zero_tol)
            if self.ic.df_mode == "sparse":
                df = (support.nnz_fixed, support.nnz_random)
            else:
                df = (self.problem.p, self.problem.q)
            value = info_criterion(self.ic, result.objective, self.problem.n, *df)
            if not np.isfinite(value):
                raise MixedSelError("information criterion is not finite")
        except (MixedSelError, ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
            self.entries.append(PathEntry(hyper, None, np.inf, None, f"{type(exc).__name__}: {exc}"))
            return np.inf
        self.entries.append(PathEntry(hyper, result, float(value), support))
        if self.warm_start:
            self.init = warm_start_from(result)
        return float(value)

    def report(self, kind: str, regularizer_for=None) -> SelectionReport:
        return SelectionReport(self.entries, _argbest(self.entries), self.ic, kind=kind,
                               regularizer_for=regularizer_for)


def _check_common(lam_range, eta_grid):
    if lam_range is not None:
        lo, hi = lam_range
        if not (0 < lo <= hi and np.isfinite(hi)):
            raise ValueError("lam_range must satisfy 0 < lam_lo <= lam_hi < inf")
    etas = list(eta_grid)
    if not etas:
        raise ValueError("eta_grid must be nonempty")
    if any(not e > 0 for e in etas):
        raise ValueError("eta values must be positive")
    return etas


def lambda_path(problem: LMEProblem, solver: Solver, reg_family: RegFamily, ic: InfoCriterion = BIC,
                lam_range: Tuple[float, float] = (1e-3, 1e2), eta_grid: Sequence[float] = (1.0,),
                cfg: SolverConfig = SolverConfig(), iterations: int = GOLDEN_ITERS,
                zero_tol: float = ZERO_TOL, warm_start: bool = True) -> SelectionReport:
    """Golden-section search over log λ for every η in ``eta_grid``.

    Both ends of the bracket are fitted first, then the two interior golden
    points, then ``iterations`` shrinks of the bracket by 1/φ, so each η
    costs ``iterations + 4`` fits. Fits are warm-started from the previous
    fit at the same η, so the searches for different η are independent. Failed fits are kept in the report with their error and never
    selected.

    Parameters
    ----------
    solver : callable
        ``solver(problem, reg, cfg, init) -> FitResult``.
    reg_family : callable
        Maps λ to a :class:`BlockRegularizer`.
    """
    etas = _check_common(lam_range, eta_grid)
    if iterations < 0:
        raise ValueError("iterations must be nonnegative")
    runner = _PathRunner(problem, solver, ic, cfg, zero_tol, warm_start)
    lo, hi = math.log(lam_range[0]), math.log(lam_range[1])
    for eta in etas:
        runner.init = None

        def f(t):
            lam = math.exp(t)
            return runner.run(reg_family(lam), {"lam": lam, "eta": eta}, eta)

        f(hi)
        if hi == lo:
            continue
        f(lo)
        a, b = lo, hi
        c, d = b - INV_PHI * (b - a), a + INV_PHI * (b - a)
        fc, fd = f(c), f(d)
        for _ in range(iterations):
            if fc <= fd:
                b, d, fd = d, c, fc
                c = b - INV_PHI * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + INV_PHI * (b - a)
                fd = f(d)
    return runner.report("lambda", lambda h: reg_family(h["lam"]))


def lambda_grid_path(problem: LMEProblem, solver: Solver, reg_family: RegFamily, ic: InfoCriterion = BIC,
                     lams: Sequence[float] = (), eta_grid: Sequence[float] = (1.0,),
                     cfg: SolverConfig = SolverConfig(), zero_tol: float = ZERO_TOL,
                     warm_start: bool = True) -> SelectionReport:
    """Fits every λ in ``lams`` (largest first) for every η; used for plotting paths."""
    etas = _check_common(None, eta_grid)
    lams = sorted((float(x) for x in lams), reverse=True)
    if not lams or lams[-1] <= 0:
        raise ValueError("lams must be a nonempty list of positive values")
    runner = _PathRunner(problem, solver, ic, cfg, zero_tol, warm_start)
    for eta in etas:
        runner.init = None
        for lam in lams:
            runner.run(reg_family(lam), {"lam": lam, "eta": eta}, eta)
    return runner.report("lambda", lambda h: reg_family(h["lam"]))


def l0_path(problem: LMEProblem, solver: Solver, ic: InfoCriterion = BIC, k_max: Optional[int] = None,
            cfg: SolverConfig = SolverConfig(), eta_grid: Sequence[float] = (1.0,),
            zero_tol: float = ZERO_TOL, warm_start: bool = True,
            gamma_upper: float = np.inf) -> SelectionReport:
    """Sweeps k = 0..k_max with budget k on both blocks (capped at p and q)."""
    etas = _check_common(None, eta_grid)
    p, q = problem.p, problem.q
    if k_max is None:
        k_max = max(p, q)
    if not 0 <= k_max <= max(p, q):
        raise ValueError(f"k_max must lie in [0, {max(p, q)}], got {k_max}")
    runner = _PathRunner(problem, solver, ic, cfg, zero_tol, warm_start)

    def budget(h):
        k = int(h["k"])
        return BlockRegularizer(L0Ball(min(k, p)), L0Ball(min(k, q)), gamma_upper)

    for eta in etas:
        runner.init = None
        for k in range(k_max + 1):
            runner.run(budget({"k": k}), {"k": k, "eta": eta}, eta)
    return runner.report("l0", budget)


# ---------------------------------------------------------------- families

REGULARIZERS = ("none", "l1", "alasso", "scad", "cad", "l0")


def penalty_family(name: str, rho: Optional[float] = None,
                   weights: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                   gamma_upper: float = np.inf) -> RegFamily:
    """λ ↦ BlockRegularizer applying the named penalty to both blocks.

    ``rho`` is the SCAD shape (default 3.7) or the CAD clip level
    (default 1.0). A-LASSO needs ``weights = (w_beta, w_gamma)``; see
    :func:`alasso_weights`. L0 is handled by :func:`l0_path`.
    """
    name = name.lower()

    def pair(make: Callable[[float, int], Penalty]) -> Callable[[float], BlockRegularizer]:
        return lambda lam: BlockRegularizer(make(lam, 0), make(lam, 1), gamma_upper)

    if name == "none":
        return lambda lam: BlockRegularizer(NoPenalty(), NoPenalty(), gamma_upper)
    if name == "l1":
        return pair(lambda lam, _: L1(lam))
    if name == "alasso":
        if weights is None:
            raise ValueError("alasso needs weights for both blocks")
        return pair(lambda lam, b: ALasso(lam, weights[b]))
    if name == "scad":
        return pair(lambda lam, _: SCAD(lam, 3.7 if rho is None else rho))
    if name == "cad":
        return pair(lambda lam, _: CAD(lam, 1.0 if rho is None else rho))
    if name == "l0":
        raise ValueError("l0 has no λ family; use l0_path or an L0Ball budget")
    raise ValueError(f"unknown regularizer {name!r}; choose from {list(REGULARIZERS)}")


def alasso_weights(problem: LMEProblem, solver: Solver, cfg: SolverConfig = SolverConfig(),
                   gamma_upper: float = np.inf) -> Tuple[np.ndarray, np.ndarray]:
    """A-LASSO weights 1/|x̂| from an unpenalized fit with ``solver``."""
    fit = solver(problem, BlockRegularizer(NoPenalty(), NoPenalty(), gamma_upper), cfg, None)
    return adaptive_weights(fit.params.beta), adaptive_weights(fit.params.gamma)


def merge_reports(reports: Sequence[SelectionReport]) -> SelectionReport:
    """Concatenates reports of the same kind (e.g. one per η) and re-selects the best entry."""
    if not reports:
        raise ValueError("nothing to merge")
    entries = [e for r in reports for e in r.entries]
    first = reports[0]
    return SelectionReport(entries, _argbest(entries), first.ic, kind=first.kind,
                           regularizer_for=first.regularizer_for)


def select_model(problem: LMEProblem, solver_name: str, reg_name: str, ic: InfoCriterion = BIC,
                 lam_range: Optional[Tuple[float, float]] = None, eta_grid: Sequence[float] = (1.0,),
                 k_max: Optional[int] = None, cfg: SolverConfig = SolverConfig(), rho: Optional[float] = None,
                 gamma_upper: float = np.inf, zero_tol: float = ZERO_TOL,
                 warm_start: bool = True) -> SelectionReport:
    """Runs the selection workflow for a named solver and regularizer.

    ``l0`` sweeps the budget with :func:`l0_path`; every other penalty is
    tuned by :func:`lambda_path` over ``lam_range`` (default: the
    solver's entry in ``DEFAULT_LAM_RANGE``). A-LASSO weights come from an
    unpenalized fit with the same solver.
    """
    from mixedsel.solvers import get_solver

    solver = get_solver(solver_name)
    if reg_name == "l0":
        return l0_path(problem, solver, ic, k_max, cfg, eta_grid, zero_tol, warm_start, gamma_upper)
    if k_max is not None:
        raise ValueError("k_max only applies to the l0 regularizer")
    weights = alasso_weights(problem, solver, cfg, gamma_upper) if reg_name == "alasso" else None
    family = penalty_family(reg_name, rho, weights, gamma_upper)
    if lam_range is None:
        lam_range = DEFAULT_LAM_RANGE[solver_name]
    return lambda_path(problem, solver, family, ic, lam_range, eta_grid, cfg, GOLDEN_ITERS, zero_tol, warm_start)


def refit_best(problem: LMEProblem, report: SelectionReport, solver_name: str,
               cfg: SolverConfig = SolverConfig()) -> Optional[FitResult]:
    """Cold-start fit at the selected hyperparameters.

    Path fits are warm-started, so their iteration counts say little about
    the cost of one solve; this refit gives that count.
    """
    from mixedsel.solvers import get_solver

    entry = report.best_entry
    if entry is None or report.regularizer_for is None:
        return None
    eta_cfg = dataclasses.replace(cfg, eta=entry.hyper.get("eta", cfg.eta))
    return get_solver(solver_name)(problem, report.regularizer_for(entry.hyper), eta_cfg, None)
