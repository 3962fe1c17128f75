"""LinUCB and its shift-augmented variant LinUCBw.

The confidence radius follows the theoretical schedule exactly,

    beta_t = 8 sigma^2 (1 + d log(1 + t C_b^2 C_w^2 / (d sigma^2))
                        + 2 log(pi^2 t^2 / (3 delta))),

and the ridge weight is ``lambda = sigma^2 / C_w^2``.  The weak variant
works on features ``[x; 1]`` so that a free intercept absorbs the shift
between the proxy maximum and the true maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .harness.env import Environment
from .harness.trace import RegretTrace
from .linalg import Covariance

VARIANTS = ("standard", "weak")


@dataclass(frozen=True)
class LinUcbConfig:
    sigma: float
    C_b: float
    C_w: float
    delta: float = 0.05
    horizon: int = 1
    variant: str = "standard"
    range_bound: float = 1.0
    beta_scale: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.sigma <= 0 or self.C_w <= 0:
            raise ValueError("sigma and C_w must be positive (lambda = sigma^2 / C_w^2)")

    @property
    def lam(self) -> float:
        return self.sigma**2 / self.C_w**2

    @classmethod
    def for_instance(cls, instance, **kw) -> "LinUcbConfig":
        kw.setdefault("range_bound", instance.range_bound)
        return cls(
            sigma=instance.sigma, C_b=instance.actions.norm_bound, C_w=instance.param_bound, **kw
        )


def beta_schedule(t: int, cfg: LinUcbConfig, d: int) -> float:
    if t < 1:
        raise ValueError("beta_t is defined for t >= 1")
    s2 = cfg.sigma**2
    union = 2.0 * math.log(math.pi**2 * t**2 / (3.0 * cfg.delta))
    if cfg.variant == "standard":
        info = d * math.log1p(t * cfg.C_b**2 * cfg.C_w**2 / (d * s2))
    else:
        info = (d + 1) * math.log1p(t * cfg.C_b**2 * (cfg.C_w**2 + cfg.range_bound**2) / (d * s2))
    return cfg.beta_scale * 8.0 * s2 * (1.0 + info + union)


class LinUCB:
    """Optimistic agent over a fixed finite action set.

    ``t`` counts observations so far; ``beta_t`` is ``None`` while ``t == 0``
    because the initial confidence set is the whole parameter space.
    """

    def __init__(self, cfg: LinUcbConfig, d: int):
        self.cfg = cfg
        self.d = d
        self.dim = d + 1 if cfg.variant == "weak" else d
        self.cov = Covariance(self.dim, cfg.lam)
        self.xy_accum = np.zeros(self.dim)
        self.w_hat = np.zeros(self.dim)
        self.t = 0
        self.beta_t: Optional[float] = None
        self.last_action: Optional[int] = None

    def features(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.cfg.variant == "weak":
            return np.hstack([X, np.ones((X.shape[0], 1))])
        return X

    def ucb(self, Z) -> np.ndarray:
        """Closed-form ``max_{w in Ball_t} w.z`` for feature rows ``Z``."""
        Z = np.atleast_2d(Z)
        width = np.sqrt(np.maximum(np.sum((Z @ self.cov.inverse) * Z, axis=1), 0.0))
        return Z @ self.w_hat + math.sqrt(self.beta_t) * width

    def select_action(self, Z) -> int:
        """Index of the optimistic action among feature rows ``Z`` (lowest index on ties)."""
        if self.t == 0:
            idx = 0
        else:
            idx = int(np.argmax(self.ucb(Z)))
        self.last_action = idx
        return idx

    def observe(self, z, y: float) -> "LinUCB":
        z = np.asarray(z, dtype=float)
        self.cov.update(z)
        self.xy_accum += y * z
        self.w_hat = self.cov.inverse @ self.xy_accum
        self.t += 1
        self.beta_t = beta_schedule(self.t, self.cfg, self.d)
        return self

    def ball_contains(self, w) -> bool:
        if self.t == 0:
            return True
        diff = np.asarray(w, dtype=float) - self.w_hat
        return bool(diff @ self.cov.matrix @ diff <= self.beta_t)


def true_parameter(instance, variant: str) -> np.ndarray:
    """The parameter the confidence set is meant to trap: ``w_star`` or ``[w_star; c_star]``."""
    if variant == "weak":
        c_star = instance.f_star - float(np.max(instance.proxy))
        return np.append(instance.w_star, c_star)
    return np.asarray(instance.w_star, dtype=float)


def run_linucb(env: Environment, cfg: LinUcbConfig, diagnostics: bool = True) -> RegretTrace:
    """Play LinUCB until the environment's horizon and return the regret trace.

    With ``diagnostics`` the trace carries per-step ``u`` (width of the played
    features before the update), ``beta`` (radius used for the selection,
    nan at the first step), ``in_ball`` (whether the true parameter was inside
    the confidence set at selection time) and the played feature rows.
    """
    inst = env.instance
    agent = LinUCB(cfg, inst.dim)
    Z = agent.features(inst.X)
    w_true = true_parameter(inst, cfg.variant)
    T = env.remaining
    u = np.empty(T)
    beta = np.full(T, np.nan)
    in_ball = np.ones(T, dtype=bool)
    for s in range(T):
        a = agent.select_action(Z)
        z = Z[a]
        if diagnostics:
            u[s] = math.sqrt(max(float(z @ agent.cov.inverse @ z), 0.0))
            if agent.t > 0:
                beta[s] = agent.beta_t
                in_ball[s] = agent.ball_contains(w_true)
        y = env.pull(a)
        agent.observe(z, y)
    diag = {}
    if diagnostics:
        diag = {
            "u": u,
            "beta": beta,
            "in_ball": in_ball,
            "features": Z[np.asarray(env.actions[-T:], dtype=np.int64)],
            "agent": agent,
        }
    return RegretTrace.from_env(env, diagnostics=diag)
