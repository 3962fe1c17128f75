"""Noisy reward environment with counter-keyed noise streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..model import RewardInstance

NOISE_KINDS = ("gaussian", "bounded_uniform", "none")
CHUNK = 4096


@dataclass
class NoiseModel:
    """Sub-Gaussian noise whose draw at step ``t`` depends only on ``(seed, run_index, t)``.

    Draws are generated in fixed blocks of ``CHUNK`` steps, each block from its
    own Philox stream keyed by ``(seed, run_index, block)``, so the value at a
    step never depends on how many draws were consumed before it.
    """

    kind: str = "gaussian"
    sigma: float = 1.0
    seed: int = 0
    run_index: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    def _block(self, b):
        blk = self._cache.get(b)
        if blk is None:
            ss = np.random.SeedSequence([int(self.seed), int(self.run_index), int(b)])
            rng = np.random.Generator(np.random.Philox(ss))
            if self.kind == "gaussian":
                blk = self.sigma * rng.standard_normal(CHUNK)
            else:
                a = self.sigma * math.sqrt(3.0)
                blk = rng.uniform(-a, a, CHUNK)
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[b] = blk
        return blk

    def draw(self, t: int) -> float:
        """Noise at 1-based step ``t``."""
        if self.kind == "none" or self.sigma == 0.0:
            return 0.0
        b, i = divmod(t - 1, CHUNK)
        return float(self._block(b)[i])


def step(instance: RewardInstance, noise: NoiseModel, action: int, t: int) -> float:
    """Observed reward ``f0(x) + eta_t`` for ``action`` at step ``t``."""
    return float(instance.f0[action]) + noise.draw(t)


def deviation(instance: RewardInstance, action: int) -> float:
    """Misspecification part of the mean reward, ``f0(x) - w_star . x``."""
    return float(instance.f0[action] - instance.X[action] @ instance.w_star)


class HorizonExhausted(Exception):
    """The environment has served all ``horizon`` steps."""


class Environment:
    """Serves noisy rewards for at most ``horizon`` pulls and records them."""

    def __init__(self, instance: RewardInstance, noise: NoiseModel, horizon: int):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.instance = instance
        self.noise = noise
        self.horizon = int(horizon)
        self.t = 0
        self.phase = 0
        self.actions: list[int] = []
        self.rewards: list[float] = []
        self.phases: list[int] = []

    @property
    def remaining(self) -> int:
        return self.horizon - self.t

    def pull(self, action: int) -> float:
        if self.t >= self.horizon:
            raise HorizonExhausted(self.horizon)
        self.t += 1
        y = step(self.instance, self.noise, action, self.t)
        self.actions.append(int(action))
        self.rewards.append(y)
        self.phases.append(self.phase)
        return y
