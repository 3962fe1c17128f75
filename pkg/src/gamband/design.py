"""G-optimal designs over a finite active set via Frank-Wolfe on log det.

For a design ``pi`` over the active actions, ``V(pi) = sum pi(x) x x^T`` and
``g(pi) = max_x ||x||^2_{V(pi)^+}``.  Kiefer-Wolfowitz gives
``min_pi g(pi) = rank``; the solver stops as soon as ``g <= 2 * rank``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import DesignGram, weighted_sq_norms
from .model import ActionSet

RANK_RTOL = 1e-10


class DesignFailure(RuntimeError):
    pass


@dataclass
class Design:
    weights: dict
    support_size: int
    g_value: float
    gram: DesignGram
    rank: int
    iterations: int = 0
    objective_trace: list = field(default_factory=list, repr=False)

    @property
    def support(self) -> list:
        return sorted(self.weights)


def span_rank(X) -> int:
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return 0
    s = np.linalg.svd(X, compute_uv=False)
    return int(np.count_nonzero(s > RANK_RTOL * s[0])) if s[0] > 0 else 0


def spanning_subset(X) -> list:
    """Greedy pivoted Gram-Schmidt: positions of rows spanning the row space.

    Each pick maximizes the residual norm orthogonal to the span of the
    previous picks, which keeps the initial design well conditioned.
    """
    R = np.array(X, dtype=float)
    scale = float(np.max(np.linalg.norm(R, axis=1))) if len(R) else 0.0
    picked = []
    while True:
        norms = np.linalg.norm(R, axis=1)
        j = int(np.argmax(norms))
        if norms[j] <= 1e-9 * max(scale, 1e-300) or len(picked) == R.shape[1]:
            break
        picked.append(j)
        q = R[j] / norms[j]
        R = R - np.outer(R @ q, q)
    return sorted(picked)


def _g_values(X, pi):
    gram = DesignGram.from_points(X, pi)
    return gram, weighted_sq_norms(gram.pseudo_inverse, X)


def solve_design(
    active: Sequence[int],
    actions: ActionSet,
    max_iters: int = 10_000,
    init: str = "spanning",
) -> Design:
    """Frank-Wolfe design over ``active`` with g(pi) <= 2 * rank.

    ``init="spanning"`` starts from the uniform design on a greedy spanning
    subset, so the support grows by at most one action per iteration;
    ``init="uniform"`` starts from the uniform design on the whole set.
    Small weights are pruned afterwards and the bound re-certified.
    """
    active = list(active)
    if not active:
        raise ValueError("active set is empty")
    X = np.asarray(actions.actions)[active]
    n = len(active)
    r = span_rank(X)
    if r == 0:
        raise DesignFailure("active actions are all zero; no design exists")
    target = 2.0 * r

    pi = np.zeros(n)
    if init == "uniform":
        pi[:] = 1.0 / n
    elif init == "spanning":
        pi[spanning_subset(X)] = 1.0 / r
    else:
        raise ValueError(f"unknown init {init!r}")

    objective = []
    it = 0
    while True:
        gram, g = _g_values(X, pi)
        objective.append(gram.logpdet())
        j = int(np.argmax(g))
        gmax = float(g[j])
        if gmax <= target:
            break
        if it >= max_iters:
            raise DesignFailure(f"no certified design after {max_iters} iterations (g={gmax:.6g}, target {target:g})")
        step = (gmax / r - 1.0) / (gmax - 1.0)
        pi *= 1.0 - step
        pi[j] += step
        it += 1

    pi, gram, gmax = _prune(X, pi, target, n)
    support = np.flatnonzero(pi > 0)
    weights = {int(active[i]): float(pi[i]) for i in support}
    return Design(weights, len(weights), gmax, gram, r, it, objective)


def _prune(X, pi, target, n):
    thr = 1e-6 / n
    for _ in range(20):
        p = np.where(pi >= thr, pi, 0.0)
        p /= p.sum()
        gram, g = _g_values(X, p)
        # pruning must not shrink the span, or the norm of a dropped action is undefined
        if gram.rank == span_rank(X) and float(np.max(g)) <= target:
            return p, gram, float(np.max(g))
        thr /= 2.0
    p = pi / pi.sum()
    gram, g = _g_values(X, p)
    return p, gram, float(np.max(g))


def rounding(design: Design, m: int) -> dict:
    """Pull counts ``u(x) = ceil(m * pi(x))`` for every support action."""
    if m < 1:
        raise ValueError("m must be >= 1")
    alloc = {}
    for a in design.support:
        r = m * design.weights[a]
        # absorb float noise such as 18 * (1/3) = 6.000000000000001
        alloc[a] = max(1, math.ceil(r - 1e-9))
    return alloc


def allocation_gram(alloc: dict, actions: ActionSet) -> DesignGram:
    idx = sorted(alloc)
    X = np.asarray(actions.actions)[idx]
    return DesignGram.from_points(X, [alloc[a] for a in idx])
