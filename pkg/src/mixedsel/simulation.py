"""Synthetic grouped datasets with known sparse truth.

Streams come from numpy's PCG64 bit generator. Normal deviates are made by
the inverse normal CDF applied to uniforms shifted into the open interval
(0, 1), so a stream depends only on the seed and the draw order: for each
group X, then (if Z ≠ X) Z, then u, then ε.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy.special import ndtri

from mixedsel.errors import InvalidSpec
from mixedsel.problem import GroupBlock, LMEProblem, Params

GBD_GROUP_SIZES = (10, 15, 4, 8, 3, 5, 18, 9, 6)


def _gbd_truth() -> np.ndarray:
    return np.r_[np.arange(1, 11) / 2.0, np.zeros(10)]


@dataclass(frozen=True)
class SyntheticSpec:
    """Generative settings; the defaults follow the 20-covariate benchmark design."""

    p: int = 20
    q: int = 20
    true_beta: np.ndarray = field(default_factory=_gbd_truth)
    true_gamma: np.ndarray = field(default_factory=_gbd_truth)
    group_sizes: Tuple[int, ...] = GBD_GROUP_SIZES
    obs_std: float = 0.3
    z_equals_x: bool = True
    seed: int = 0

    def __post_init__(self):
        beta = np.asarray(self.true_beta, dtype=float)
        gamma = np.asarray(self.true_gamma, dtype=float)
        object.__setattr__(self, "true_beta", beta)
        object.__setattr__(self, "true_gamma", gamma)
        object.__setattr__(self, "group_sizes", tuple(int(s) for s in self.group_sizes))
        if beta.shape != (self.p,) or gamma.shape != (self.q,):
            raise InvalidSpec(f"truth lengths ({beta.size}, {gamma.size}) do not match (p={self.p}, q={self.q})")
        if not np.all(np.isfinite(beta)) or not np.all(np.isfinite(gamma)) or np.any(gamma < 0):
            raise InvalidSpec("true_beta must be finite and true_gamma finite and nonnegative")
        if len(self.group_sizes) == 0 or min(self.group_sizes) < 1:
            raise InvalidSpec("group_sizes must be a nonempty list of positive sizes")
        if not self.obs_std > 0:
            raise InvalidSpec("obs_std must be positive")
        if self.z_equals_x and self.p != self.q:
            raise InvalidSpec("z_equals_x requires p == q")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidSpec("seed must be a 64-bit unsigned integer")

    @classmethod
    def gbd_synthetic(cls, seed: int = 0) -> "SyntheticSpec":
        return cls(seed=seed)


PRESETS = {"gbd-synthetic": SyntheticSpec.gbd_synthetic}


def standard_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """N(0, 1) deviates by inverse-CDF transform of (0, 1) uniforms."""
    u = rng.random(shape) + 2.0 ** -54
    return ndtri(u)


def generate(spec: SyntheticSpec) -> Tuple[LMEProblem, Params]:
    """Draws one problem from ``spec``; returns it with the exact truth used."""
    rng = np.random.Generator(np.random.PCG64(int(spec.seed)))
    sd_u = np.sqrt(spec.true_gamma)
    blocks = []
    for n_i in spec.group_sizes:
        x = standard_normal(rng, (n_i, spec.p))
        z = x if spec.z_equals_x else standard_normal(rng, (n_i, spec.q))
        u = sd_u * standard_normal(rng, spec.q)
        eps = spec.obs_std * standard_normal(rng, n_i)
        y = x @ spec.true_beta + z @ u + eps
        blocks.append(GroupBlock(x, z, y, np.full(n_i, spec.obs_std ** 2)))
    problem = LMEProblem(tuple(blocks))
    return problem, Params(spec.true_beta, spec.true_gamma)
