"""Grouped data containers for linear mixed-effects models.

The model for group ``i`` is::

    y_i = X_i β + Z_i u_i + ε_i,   u_i ~ N(0, Diag(γ)),   ε_i ~ N(0, Diag(obs_var_i))

with known per-observation variances ``obs_var_i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GroupBlock:
    """One group of observations: designs, outcomes and observation variances."""

    x_fixed: np.ndarray
    z_random: np.ndarray
    y: np.ndarray
    obs_var: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_fixed", _frozen(self.x_fixed, 2, "x_fixed"))
        object.__setattr__(self, "z_random", _frozen(self.z_random, 2, "z_random"))
        object.__setattr__(self, "y", _frozen(self.y, 1, "y"))
        object.__setattr__(self, "obs_var", _frozen(self.obs_var, 1, "obs_var"))
        n = self.y.shape[0]
        if n == 0:
            raise ValueError("empty group: every group needs at least one observation")
        if not (self.x_fixed.shape[0] == self.z_random.shape[0] == self.obs_var.shape[0] == n):
            raise ValueError(
                f"row counts disagree: x_fixed {self.x_fixed.shape[0]}, z_random {self.z_random.shape[0]}, "
                f"y {n}, obs_var {self.obs_var.shape[0]}")
        if not np.all(self.obs_var > 0):
            raise ValueError("obs_var entries must be strictly positive")

    @property
    def n(self) -> int:
        return self.y.shape[0]


@dataclass(frozen=True)
class LMEProblem:
    """An immutable grouped dataset.

    Besides the list of groups the problem keeps row-stacked copies of all
    arrays together with group offsets, which is the layout the likelihood
    kernels consume.
    """

    groups: tuple
    fixed_names: tuple = ()
    random_names: tuple = ()
    group_labels: tuple = ()
    _stacked: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        groups = tuple(self.groups)
        if len(groups) == 0:
            raise ValueError("an LMEProblem needs at least one group")
        p = groups[0].x_fixed.shape[1]
        q = groups[0].z_random.shape[1]
        for i, g in enumerate(groups):
            if g.x_fixed.shape[1] != p or g.z_random.shape[1] != q:
                raise ValueError(f"group {i} has shape (p={g.x_fixed.shape[1]}, q={g.z_random.shape[1]}), "
                                 f"expected (p={p}, q={q})")
        object.__setattr__(self, "groups", groups)
        fixed_names = tuple(self.fixed_names) or tuple(f"x{j}" for j in range(p))
        random_names = tuple(self.random_names) or tuple(f"z{j}" for j in range(q))
        if len(fixed_names) != p or len(random_names) != q:
            raise ValueError("covariate names do not match design widths")
        object.__setattr__(self, "fixed_names", fixed_names)
        object.__setattr__(self, "random_names", random_names)
        labels = tuple(self.group_labels) or tuple(range(len(groups)))
        if len(labels) != len(groups):
            raise ValueError("one label per group is required")
        object.__setattr__(self, "group_labels", labels)

        offsets = np.zeros(len(groups) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([g.n for g in groups])
        stacked = {
            "x": np.ascontiguousarray(np.vstack([g.x_fixed for g in groups])),
            "z": np.ascontiguousarray(np.vstack([g.z_random for g in groups])),
            "y": np.concatenate([g.y for g in groups]),
            "obs_var": np.concatenate([g.obs_var for g in groups]),
            "offsets": offsets,
        }
        for arr in stacked.values():
            arr.setflags(write=False)
        object.__setattr__(self, "_stacked", stacked)

    @classmethod
    def from_arrays(cls, x, z, y, obs_var, groups, fixed_names=(), random_names=()) -> "LMEProblem":
        """Builds a problem from long-format arrays and a group-label vector.

        Labels are mapped to groups in order of first appearance; rows of a
        group need not be contiguous.
        """
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        y = np.asarray(y, dtype=float)
        obs_var = np.asarray(obs_var, dtype=float)
        labels = list(groups)
        order = []
        seen = {}
        for row, label in enumerate(labels):
            if label not in seen:
                seen[label] = len(order)
                order.append([])
            order[seen[label]].append(row)
        blocks = [GroupBlock(x[idx], z[idx], y[idx], obs_var[idx]) for idx in map(np.array, order)]
        return cls(tuple(blocks), tuple(fixed_names), tuple(random_names), tuple(seen.keys()))

    def restrict(self, fixed, random) -> "LMEProblem":
        """Sub-problem keeping only the fixed and random covariates selected by boolean masks."""
        fixed = np.asarray(fixed, dtype=bool)
        random = np.asarray(random, dtype=bool)
        if fixed.shape != (self.p,) or random.shape != (self.q,):
            raise ValueError("masks must have lengths p and q")
        blocks = tuple(GroupBlock(g.x_fixed[:, fixed], g.z_random[:, random], g.y, g.obs_var) for g in self.groups)
        names_f = tuple(n for n, keep in zip(self.fixed_names, fixed) if keep)
        names_r = tuple(n for n, keep in zip(self.random_names, random) if keep)
        return LMEProblem(blocks, names_f, names_r, self.group_labels)

    @property
    def p(self) -> int:
        return self.groups[0].x_fixed.shape[1]

    @property
    def q(self) -> int:
        return self.groups[0].z_random.shape[1]

    @property
    def m(self) -> int:
        return len(self.groups)

    @property
    def n(self) -> int:
        return int(self._stacked["offsets"][-1])

    @property
    def stacked(self) -> dict:
        return self._stacked

    def __iter__(self) -> Iterator[GroupBlock]:
        return iter(self.groups)

    def __len__(self) -> int:
        return len(self.groups)


@dataclass(frozen=True)
class Params:
    """Optimization point x = (β, γ) with γ ≥ 0."""

    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        beta = _frozen(self.beta, 1, "beta")
        gamma = _frozen(self.gamma, 1, "gamma")
        if np.any(gamma < 0) or not np.all(np.isfinite(gamma)):
            raise ValueError("gamma must be finite and nonnegative")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def from_vector(cls, x: Sequence[float], p: int) -> "Params":
        x = np.asarray(x, dtype=float)
        return cls(x[:p], x[p:])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.beta, self.gamma])

    def check_dims(self, problem: LMEProblem) -> None:
        if self.beta.shape[0] != problem.p or self.gamma.shape[0] != problem.q:
            raise ValueError(f"params have (p={self.beta.shape[0]}, q={self.gamma.shape[0]}), "
                             f"problem has (p={problem.p}, q={problem.q})")

