"""Dense linear algebra shared by the agents.

``Covariance`` keeps ``lambda*I + sum x x^T`` and its inverse under rank-one
updates (Sherman-Morrison, refreshed every ``REFRESH_EVERY`` updates).
``DesignGram`` is the unregularized Gram matrix of a batch with a
span-restricted pseudo-inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

REFRESH_EVERY = 64
PINV_RTOL = 1e-10
SPAN_TOL = 1e-8


class NotInSpan(ValueError):
    pass


class AuditViolation(AssertionError):
    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message if step is None else f"{message} (step {step})")


class Covariance:
    """Regularized covariance with an incrementally maintained inverse."""

    def __init__(self, dim: int, lam: float, refresh_every: int = REFRESH_EVERY):
        if lam <= 0:
            raise ValueError("ridge weight must be positive")
        self.dim = int(dim)
        self.lam = float(lam)
        self.refresh_every = refresh_every
        self.matrix = lam * np.eye(dim)
        self.inverse = np.eye(dim) / lam
        self.count = 0
        self.max_drift = 0.0
        self.logdet0 = dim * math.log(lam)

    def update(self, x) -> "Covariance":
        x = np.asarray(x, dtype=float)
        self.count += 1
        if not np.any(x):
            return self
        self.matrix += np.outer(x, x)
        Ax = self.inverse @ x
        self.inverse -= np.outer(Ax, Ax) / (1.0 + x @ Ax)
        if self.count % self.refresh_every == 0:
            direct = np.linalg.inv(self.matrix)
            self.max_drift = max(self.max_drift, float(np.linalg.norm(direct - self.inverse)))
            self.inverse = direct
        return self

    def logdet(self) -> float:
        sign, ld = np.linalg.slogdet(self.matrix)
        return float(ld)

    def copy(self) -> "Covariance":
        c = Covariance.__new__(Covariance)
        c.__dict__.update(self.__dict__)
        c.matrix = self.matrix.copy()
        c.inverse = self.inverse.copy()
        return c


def cov_update(cov: Covariance, x) -> Covariance:
    return cov.update(x)


def ridge_solve(cov: Covariance, xy_accum) -> np.ndarray:
    """Ridge estimate ``Sigma^{-1} sum y_i x_i``."""
    return cov.inverse @ np.asarray(xy_accum, dtype=float)


@dataclass
class DesignGram:
    dim: int
    matrix: np.ndarray
    pseudo_inverse: np.ndarray
    rank: int
    basis: np.ndarray = field(repr=False)  # orthonormal basis of the column span

    @classmethod
    def from_matrix(cls, G) -> "DesignGram":
        G = np.asarray(G, dtype=float)
        G = 0.5 * (G + G.T)
        evals, evecs = np.linalg.eigh(G)
        top = float(np.max(evals)) if evals.size else 0.0
        keep = evals > PINV_RTOL * top if top > 0 else np.zeros_like(evals, dtype=bool)
        V = evecs[:, keep]
        pinv = (V / evals[keep]) @ V.T
        return cls(G.shape[0], G, pinv, int(np.count_nonzero(keep)), V)

    @classmethod
    def from_points(cls, X, weights=None) -> "DesignGram":
        X = np.asarray(X, dtype=float)
        w = np.ones(len(X)) if weights is None else np.asarray(weights, dtype=float)
        return cls.from_matrix((X * w[:, None]).T @ X)

    def norm(self, x) -> float:
        return weighted_norm(self.pseudo_inverse, x, span=self.basis)

    def logpdet(self) -> float:
        """Log pseudo-determinant (product of eigenvalues on the span)."""
        evals = self.basis.T @ self.matrix @ self.basis
        sign, ld = np.linalg.slogdet(evals) if self.rank else (1.0, 0.0)
        return float(ld)


def weighted_norm(M, x, span: Optional[np.ndarray] = None) -> float:
    """``sqrt(x^T M x)``; with ``span`` given, ``x`` must lie in its columns' span."""
    x = np.asarray(x, dtype=float)
    if span is not None:
        resid = x - span @ (span.T @ x)
        scale = max(1.0, float(np.linalg.norm(x)))
        if np.linalg.norm(resid) > SPAN_TOL * scale:
            raise NotInSpan(f"vector has out-of-span component {np.linalg.norm(resid):.3g}")
    q = float(x @ M @ x)
    if q < 0:
        if q < -1e-12:
            raise ValueError(f"quadratic form is negative ({q:.3g}); matrix not PSD")
        q = 0.0
    return math.sqrt(q)


def weighted_sq_norms(M, X) -> np.ndarray:
    """Row-wise ``x^T M x`` for a stack of vectors, clamped at 0."""
    q = np.einsum("ij,jk,ik->i", X, M, X)
    return np.maximum(q, 0.0)


@dataclass
class PotentialReport:
    T: int
    clamped_sum: float
    clamped_bound: float
    unclamped_sum: float
    unclamped_checked: bool
    final_sum: Optional[float] = None


def potential_bound(T: int, d: int, lam: float, C_b: float) -> float:
    return 2.0 * d * math.log(1.0 + T * C_b**2 / (d * lam))


def potential_audit(u, d: int, lam: float, C_b: float, final_cov=None, history=None) -> PotentialReport:
    """Check the elliptical-potential bounds on a recorded sequence of ``u_t``.

    ``u[t]`` is ``||x_t||`` in the inverse covariance *before* the update at
    step ``t``.  The clamped sum ``sum min(1, u_t^2)`` is always audited; the
    unclamped one only when ``lam >= C_b^2``.  Given the final covariance and
    the played vectors, ``sum_i x_i^T Sigma_T^{-1} x_i <= d`` is audited too.
    """
    u2 = np.asarray(u, dtype=float) ** 2
    T = len(u2)
    clamped = np.cumsum(np.minimum(1.0, u2))
    bounds = 2.0 * d * np.log1p(np.arange(1, T + 1) * C_b**2 / (d * lam))
    bad = np.flatnonzero(clamped > bounds + 1e-9)
    if bad.size:
        raise AuditViolation("clamped elliptical potential exceeds bound", int(bad[0]))
    unclamped = np.cumsum(u2)
    checked = lam >= C_b**2
    if checked:
        bad = np.flatnonzero(unclamped > bounds + 1e-9)
        if bad.size:
            raise AuditViolation("unclamped elliptical potential exceeds bound", int(bad[0]))
    final_sum = None
    if final_cov is not None and history is not None:
        H = np.asarray(history, dtype=float)
        final_sum = float(np.sum(weighted_sq_norms(final_cov.inverse, H))) if len(H) else 0.0
        if final_sum > d + 1e-9:
            raise AuditViolation(f"sum x_i^T Sigma_T^-1 x_i = {final_sum:.6g} exceeds d")
    return PotentialReport(
        T,
        float(clamped[-1]) if T else 0.0,
        float(bounds[-1]) if T else 0.0,
        float(unclamped[-1]) if T else 0.0,
        checked,
        final_sum,
    )
