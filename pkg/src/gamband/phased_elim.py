"""Phased elimination with G-optimal exploration and doubling batch sizes.

Each phase solves a design over the surviving actions, plays every support
action ``ceil(m * pi(x))`` times, fits a phase-local least-squares estimate
and drops every action whose estimated gap to the empirical best exceeds

    16 * sqrt(d / m * log(1 / alpha))          (variant "gam")
    16 * sqrt(d / m * log(1 / alpha)) + 12 * sqrt(2 d) * eps   (variant "unified")

The budget ``m`` doubles from phase to phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .design import allocation_gram, rounding, solve_design
from .harness.env import Environment, HorizonExhausted
from .harness.trace import RegretTrace
from .linalg import weighted_sq_norms
from .model import GapProfile

VARIANTS = ("gam", "unified")


def initial_m(d: int) -> int:
    """First-phase budget ``ceil(4 d log log d) + 16``, log-log term clamped at 0."""
    if d < 1:
        raise ValueError("d must be >= 1")
    if d <= 2:  # log log d undefined (d = 1) or negative (d = 2)
        return 16
    return max(0, math.ceil(4 * d * math.log(math.log(d)))) + 16


@dataclass(frozen=True)
class PhaseConfig:
    horizon: int
    d: int
    alpha: Optional[float] = None
    variant: str = "gam"
    eps: Optional[float] = None
    k: Optional[int] = None
    max_design_iters: int = 10_000

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.variant == "unified" and self.eps is None:
            raise ValueError("unified variant needs the certified eps")
        if self.alpha is None and self.k is None:
            raise ValueError("give alpha or the number of actions k (alpha = 1/(kT))")
        if not (0.0 < self.confidence < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.confidence}")

    @property
    def confidence(self) -> float:
        return self.alpha if self.alpha is not None else 1.0 / (self.k * self.horizon)

    def threshold(self, m: int) -> float:
        base = 16.0 * math.sqrt(self.d / m * math.log(1.0 / self.confidence))
        if self.variant == "unified":
            base += 12.0 * math.sqrt(2.0 * self.d) * self.eps
        return base


@dataclass
class PhaseState:
    active: list
    m: int
    phase_index: int = 1
    steps_used: int = 0
    w_hat: Optional[np.ndarray] = None
    batch_log: list = field(default_factory=list)


def run_phase(state: PhaseState, cfg: PhaseConfig, env: Environment) -> PhaseState:
    """Play one batch and shrink the active set.

    Raises ``HorizonExhausted`` after logging the batch when the horizon runs
    out mid-phase; the partial batch does no elimination.
    """
    if not state.active:
        raise ValueError("active set is empty")
    if env.remaining <= 0:
        raise HorizonExhausted(env.horizon)
    actions = env.instance.actions
    design = solve_design(state.active, actions, cfg.max_design_iters)
    alloc = rounding(design, state.m)
    rec = {
        "phase": state.phase_index,
        "m": state.m,
        "support": [int(a) for a in sorted(alloc)],
        "pulls": [int(alloc[a]) for a in sorted(alloc)],
        "active_size": len(state.active),
        "g_value": design.g_value,
        "rank": design.rank,
    }
    env.phase = state.phase_index
    X = actions.actions
    xy = np.zeros(actions.dim)
    played = 0
    for a in sorted(alloc):
        for _ in range(alloc[a]):
            if env.remaining <= 0:
                rec.update(truncated=True, played=played, eliminated=0)
                state.batch_log.append(rec)
                state.steps_used += played
                raise HorizonExhausted(env.horizon)
            y = env.pull(a)
            xy += y * X[a]
            played += 1
    state.steps_used += played

    G = allocation_gram(alloc, actions)
    w_hat = G.pseudo_inverse @ xy
    act = np.asarray(state.active)
    Xa = X[act]
    est = Xa @ w_hat
    gaps = np.max(est) - est
    thr = cfg.threshold(state.m)
    keep = gaps <= thr
    rec.update(
        truncated=False,
        played=played,
        threshold=thr,
        eliminated=int(np.count_nonzero(~keep)),
        max_sq_norm=float(np.max(weighted_sq_norms(G.pseudo_inverse, Xa))),
    )
    state.batch_log.append(rec)
    state.w_hat = w_hat
    state.active = [int(a) for a in act[keep]]
    state.m *= 2
    state.phase_index += 1
    return state


def run(cfg: PhaseConfig, env: Environment) -> RegretTrace:
    """Run phases until the horizon; the trace carries the per-phase batch log.

    Noise reproducibility comes from the environment's noise model, which is
    keyed by seed and step.
    """
    state = PhaseState(active=list(range(env.instance.k)), m=initial_m(cfg.d))
    history = [list(state.active)]
    try:
        while True:
            run_phase(state, cfg, env)
            history.append(list(state.active))
    except HorizonExhausted:
        pass
    return RegretTrace.from_env(
        env,
        batch_log=state.batch_log,
        diagnostics={"active_history": history, "m1": initial_m(cfg.d), "state": state},
    )


def max_batches(T: int, m1: int) -> int:
    return max(0, math.ceil(math.log2(T / m1))) + 1


def predicted_last_batch(cfg: PhaseConfig, gap: float, max_phase: int = 200) -> int:
    """Smallest phase ``i`` whose gam threshold is at most ``gap``."""
    m = initial_m(cfg.d)
    for i in range(1, max_phase + 1):
        if 16.0 * math.sqrt(cfg.d / m * math.log(1.0 / cfg.confidence)) <= gap:
            return i
        m *= 2
    return max_phase


@dataclass
class GapReport:
    last_positive_batch: int
    predicted: int
    respected: bool

    def to_dict(self):
        return {
            "last_positive_batch": self.last_positive_batch,
            "predicted": self.predicted,
            "respected": self.respected,
        }


def gap_diagnostic(trace: RegretTrace, profile: GapProfile, cfg: PhaseConfig) -> GapReport:
    if profile.min_positive_gap is None:
        raise ValueError("instance has no positive gap")
    pos = np.flatnonzero(trace.inst_regret > 1e-12)
    last = int(trace.phase[pos[-1]]) if pos.size else 0
    pred = predicted_last_batch(cfg, profile.min_positive_gap)
    return GapReport(last, pred, last <= pred)
