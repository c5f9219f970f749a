"""Sparsity-promoting penalties and their proximal operators.

Every scalar penalty ``r`` exposes

* ``value(x)``: r(x), elementwise;
* ``prox(z, alpha)``: argmin_y r(y) + (y − z)² / (2α), elementwise;
* ``prox_boxed(z, alpha, upper)``: the same minimization restricted to
  [0, upper].

All operations broadcast over numpy arrays, and ``alpha`` may be an array
(one step per coordinate).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from mixedsel.errors import InvalidPenaltyParams


def _check_alpha(alpha):
    if type(alpha) is float:
        if not alpha > 0:
            raise InvalidPenaltyParams("prox step alpha must be positive")
        return alpha
    alpha = np.asarray(alpha, dtype=float)
    if np.any(~(alpha > 0)):
        raise InvalidPenaltyParams("prox step alpha must be positive")
    return alpha


def _soft_threshold(z, threshold):
    return np.sign(z) * np.maximum(np.abs(z) - threshold, 0.0)


class ScalarPenalty:
    """Separable penalty r(x) = Σ_j r(x_j)."""

    def value(self, x):
        raise NotImplementedError

    def prox(self, z, alpha):
        raise NotImplementedError

    def boxed_candidates(self, z, alpha):
        """Minimizers of each smooth branch of r(y) + (y − z)²/(2α) on y ≥ 0.

        Each candidate is the branch's stationary point clipped to the
        branch interval; the boxed prox picks the best of these after
        clipping them to [0, upper].
        """
        raise NotImplementedError

    def prox_boxed(self, z, alpha, upper=np.inf):
        """Prox of αr + δ_[0, upper].

        On [0, upper] the objective is piecewise smooth with each piece
        convex, so its minimizer is either a box end or a branch minimizer
        clipped to the box. All candidates are compared by objective value;
        ties go to the earliest candidate (0 first).
        """
        alpha = _check_alpha(alpha)
        _check_upper(upper)
        z = np.asarray(z, dtype=float)
        shape = np.broadcast(z, alpha, upper).shape
        cands = [np.zeros(shape)]
        if np.any(np.isfinite(upper)):
            cands.append(np.broadcast_to(np.where(np.isfinite(upper), upper, 0.0), shape))
        cands += [np.broadcast_to(np.clip(c, 0.0, upper), shape) for c in self.boxed_candidates(z, alpha)]
        ys = np.stack(cands)
        obj = self.value(ys) + (ys - z) ** 2 / (2 * alpha)
        best = np.argmin(obj, axis=0)
        return np.take_along_axis(ys, best[None], axis=0)[0]

    def total(self, x) -> float:
        return float(np.sum(self.value(x)))


def _check_upper(upper):
    if np.any(~(np.asarray(upper, dtype=float) > 0)):
        raise InvalidPenaltyParams("upper bound must be positive")


@dataclass(frozen=True)
class NoPenalty(ScalarPenalty):
    def value(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def prox(self, z, alpha):
        _check_alpha(alpha)
        return np.array(z, dtype=float)

    def prox_boxed(self, z, alpha, upper=np.inf):
        _check_alpha(alpha)
        _check_upper(upper)
        return np.clip(np.asarray(z, dtype=float), 0.0, upper)


@dataclass(frozen=True)
class L1(ScalarPenalty):
    """lam·|x|; the prox threshold is α·lam."""

    lam: float

    def __post_init__(self):
        if not self.lam >= 0:
            raise InvalidPenaltyParams(f"L1 lam must be nonnegative, got {self.lam}")

    def _weight(self):
        return self.lam

    def value(self, x):
        return self._weight() * np.abs(np.asarray(x, dtype=float))

    def prox(self, z, alpha):
        alpha = _check_alpha(alpha)
        return _soft_threshold(np.asarray(z, dtype=float), alpha * self._weight())

    def prox_boxed(self, z, alpha, upper=np.inf):
        # threshold moves to upper + α·w̄ for the shifted soft-threshold
        alpha = _check_alpha(alpha)
        _check_upper(upper)
        z = np.asarray(z, dtype=float)
        shift = alpha * self._weight()
        out = np.where(z >= upper + shift, upper, np.maximum(z - shift, 0.0))
        return np.where(z < 0, 0.0, out)


@dataclass(frozen=True, eq=False)
class ALasso(L1):
    """Adaptive lasso lam·w̄·|x| with per-coordinate weights w̄ ≥ 0."""

    weights: Union[float, np.ndarray] = 1.0

    def __post_init__(self):
        super().__post_init__()
        w = np.asarray(self.weights, dtype=float)
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise InvalidPenaltyParams("A-LASSO weights must be finite and nonnegative")

    def _weight(self):
        return self.lam * np.asarray(self.weights, dtype=float)


def adaptive_weights(estimate, eps: float = 1e-8) -> np.ndarray:
    """A-LASSO weights 1 / (|x̂| + eps) from an unpenalized estimate."""
    return 1.0 / (np.abs(np.asarray(estimate, dtype=float)) + eps)


@dataclass(frozen=True)
class SCAD(ScalarPenalty):
    """Smoothly clipped absolute deviation with level σ and shape ρ > 1."""

    sigma: float
    rho: float = 3.7

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidPenaltyParams(f"SCAD sigma must be positive, got {self.sigma}")
        if not self.rho > 1:
            raise InvalidPenaltyParams(f"SCAD rho must exceed 1, got {self.rho}")

    def value(self, x):
        a = np.abs(np.asarray(x, dtype=float))
        s, r = self.sigma, self.rho
        middle = (-a ** 2 + 2 * r * s * a - s ** 2) / (2 * (r - 1))
        flat = s ** 2 * (r + 1) / 2
        return np.where(a <= s, s * a, np.where(a < r * s, middle, flat))

    def prox(self, z, alpha):
        alpha = _check_alpha(alpha)
        z = np.asarray(z, dtype=float)
        a = np.abs(z)
        s, r = self.sigma, self.rho
        soft = _soft_threshold(z, s * alpha)
        # Convex case (ρ > 1 + α): three continuous branches.
        with np.errstate(divide="ignore", invalid="ignore"):
            middle = ((r - 1) * z - np.sign(z) * r * s * alpha) / (r - 1 - alpha)
        convex = np.where(a <= s * (1 + alpha), soft, np.where(a <= r * s, middle, z))
        # Nonconvex case: the middle branch is a local maximum; the global
        # minimizer jumps from the soft-threshold branch to the identity where
        # σ|z| − σ²α/2 equals the flat value σ²(ρ+1)/2.
        jump = s * (r + 1 + alpha) / 2
        nonconvex = np.where(a <= jump, soft, z)
        return np.where(r > 1 + alpha, convex, nonconvex)

    def boxed_candidates(self, z, alpha):
        s, r = self.sigma, self.rho
        soft = np.clip(z - s * alpha, 0.0, s)
        with np.errstate(divide="ignore", invalid="ignore"):
            middle = ((r - 1) * z - r * s * alpha) / (r - 1 - alpha)
        # a concave middle branch is minimized at an end, covered by the other branches
        middle = np.where(r - 1 - alpha > 0, np.clip(np.nan_to_num(middle), s, r * s), s)
        return [soft, middle, np.maximum(z, r * s)]


@dataclass(frozen=True)
class CAD(ScalarPenalty):
    """Clipped absolute deviation r(x) = lam·min(|x|, ρ)."""

    lam: float
    rho: float = 1.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise InvalidPenaltyParams(f"CAD lam must be nonnegative, got {self.lam}")
        if not self.rho > 0:
            raise InvalidPenaltyParams(f"CAD rho must be positive, got {self.rho}")

    def value(self, x):
        return self.lam * np.minimum(np.abs(np.asarray(x, dtype=float)), self.rho)

    def prox(self, z, alpha):
        alpha = _check_alpha(alpha)
        z = np.asarray(z, dtype=float)
        a = np.abs(z)
        # Candidate inside the sloped part |y| ≤ ρ and candidate on the flat part |y| ≥ ρ.
        inner = np.minimum(np.maximum(a - alpha * self.lam, 0.0), self.rho)
        outer = np.maximum(a, self.rho)
        f_inner = self.lam * inner + (inner - a) ** 2 / (2 * alpha)
        f_outer = self.lam * self.rho + (outer - a) ** 2 / (2 * alpha)
        return np.sign(z) * np.where(f_outer < f_inner, outer, inner)

    def boxed_candidates(self, z, alpha):
        return [np.clip(z - alpha * self.lam, 0.0, self.rho), np.maximum(z, self.rho)]


@dataclass(frozen=True)
class L0Ball:
    """Indicator of {x : ‖x‖₀ ≤ k}. Not separable."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise InvalidPenaltyParams(f"L0 budget must be a nonnegative integer, got {self.k}")

    def value(self, x) -> float:
        return 0.0 if np.count_nonzero(x) <= self.k else np.inf

    def total(self, x) -> float:
        return self.value(x)


Penalty = Union[ScalarPenalty, L0Ball]


def prox_scalar(pen: ScalarPenalty, z, alpha):
    return pen.prox(z, alpha)


def prox_scalar_boxed(pen: ScalarPenalty, z, alpha, upper=np.inf):
    return pen.prox_boxed(z, alpha, upper)


def prox_l0_topk(v, k: int, nonneg: bool = False, upper: float = np.inf) -> np.ndarray:
    """Keeps the ``k`` largest entries of ``v`` and zeroes the rest.

    Without ``nonneg`` entries are ranked by magnitude. With ``nonneg`` the
    vector is clamped to [0, upper] and entries are ranked by the decrease in
    squared distance from keeping them, v² − (clamp(v) − v)², which separates
    entries that clamp to the same bound. Ties go to the lowest index.
    """
    v = np.asarray(v, dtype=float)
    if not 0 <= k <= v.shape[0]:
        raise InvalidPenaltyParams(f"budget k={k} outside [0, {v.shape[0]}]")
    if nonneg:
        clamped = np.clip(v, 0.0, upper)
        score = v ** 2 - (clamped - v) ** 2
        v = clamped
    else:
        score = np.abs(v)
    keep = np.argsort(-score, kind="stable")[:k]
    out = np.zeros_like(v)
    out[keep] = v[keep]
    return out


def penalty_value(pen: Penalty, x) -> float:
    """Total penalty Σ r(x_j); ``inf`` for an exceeded L0 budget."""
    return pen.total(x)


@dataclass(frozen=True)
class BlockRegularizer:
    """Separate penalties for the fixed (β) and random (γ) blocks.

    The γ block is additionally constrained to [0, gamma_upper].
    """

    beta_penalty: Penalty = NoPenalty()
    gamma_penalty: Penalty = NoPenalty()
    gamma_upper: float = np.inf

    def __post_init__(self):
        if not self.gamma_upper > 0:
            raise InvalidPenaltyParams("gamma_upper must be positive")

    def check_dims(self, p: int, q: int) -> None:
        for pen, size, name in ((self.beta_penalty, p, "beta"), (self.gamma_penalty, q, "gamma")):
            if isinstance(pen, L0Ball) and pen.k > size:
                raise InvalidPenaltyParams(f"{name} L0 budget {pen.k} exceeds block size {size}")

    def value(self, beta, gamma) -> float:
        return penalty_value(self.beta_penalty, beta) + penalty_value(self.gamma_penalty, gamma)

    def prox_beta(self, beta, step):
        if isinstance(self.beta_penalty, L0Ball):
            return prox_l0_topk(beta, self.beta_penalty.k)
        return self.beta_penalty.prox(beta, step)

    def prox_gamma(self, gamma, step):
        if isinstance(self.gamma_penalty, L0Ball):
            return prox_l0_topk(gamma, self.gamma_penalty.k, nonneg=True, upper=self.gamma_upper)
        return self.gamma_penalty.prox_boxed(gamma, step, self.gamma_upper)


def prox_block(reg: BlockRegularizer, point, step, p: int):
    """Applies the block prox to a stacked vector [β, γ].

    ``step`` is a scalar or a vector of length p + q holding per-coordinate
    step sizes.
    """
    point = np.asarray(point, dtype=float)
    step = _check_alpha(float(step) if np.ndim(step) == 0 else step)
    if np.ndim(step) == 0:
        return np.concatenate([reg.prox_beta(point[:p], step), reg.prox_gamma(point[p:], step)])
    step = np.broadcast_to(step, point.shape)
    return np.concatenate([reg.prox_beta(point[:p], step[:p]), reg.prox_gamma(point[p:], step[p:])])
