"""Gauss-Hermite integration rules against the standard normal density."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_hermite

from dynmlogit.errors import SupportInvalid


@dataclass(frozen=True)
class IntegrationRule:
    """Points u_q (Q x d) and weights ω_q summing to one.

    Random effects are formed as η_q = L u_q, so a rule built for N(0, I_d)
    integrates against N(0, L L') after the Cholesky change of variables.
    """

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.nodes.ndim != 2 or self.nodes.shape[0] != self.weights.shape[0]:
            raise SupportInvalid("nodes must be (Q, d) with one weight per node")
        if np.any(self.weights < 0) or not np.isclose(self.weights.sum(), 1.0, atol=1e-12):
            raise SupportInvalid("weights must be non-negative and sum to 1")

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def log_weights(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.weights)


@lru_cache(maxsize=64)
def _hermite_1d(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_hermite(n)
    return x * np.sqrt(2.0), w / np.sqrt(np.pi)


def gauss_hermite(n: int, dim: int) -> IntegrationRule:
    """Tensor-product rule with n nodes per dimension (n**dim points)."""
    if dim == 0:
        return IntegrationRule(np.zeros((1, 0)), np.ones(1))
    x, w = _hermite_1d(n)
    nodes = np.array(list(itertools.product(x, repeat=dim)), dtype=float)
    weights = np.array([np.prod(c) for c in itertools.product(w, repeat=dim)], dtype=float)
    weights = weights / weights.sum()
    return IntegrationRule(nodes, weights)


def discrete_rule(support, weights) -> IntegrationRule:
    """A user-supplied discrete mixture used in place of the normal law."""
    support = np.atleast_2d(np.asarray(support, dtype=float))
    weights = np.asarray(weights, dtype=float)
    if support.shape[0] != weights.shape[0] and support.shape[1] == weights.shape[0]:
        support = support.T
    if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0, atol=1e-12):
        raise SupportInvalid(f"support weights must be non-negative and sum to 1 (got {weights.sum()!r})")
    return IntegrationRule(support, weights)
