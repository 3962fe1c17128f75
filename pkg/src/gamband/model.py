"""Problem instances and misspecification certificates.

An instance is a finite action set, the tabulated true mean rewards ``f0``
over it and a linear proxy parameter ``w_star``.  The ``certify_*``
functions compute the *smallest* misspecification parameter under which
the proxy explains ``f0``; the ``make_*`` constructors build instances with
a prescribed parameter.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import _jsonfmt

CERT_TOL = 1e-9
INSTANCE_FORMAT_VERSION = 1


class InstanceError(ValueError):
    """An instance or action set violates its invariants."""


class NotGam(ValueError):
    """The proxy is not a gap-adjusted approximation of ``f0``."""

    def __init__(self, action_index, violation, message=None):
        self.action_index = int(action_index)
        self.violation = float(violation)
        super().__init__(
            message
            or f"GAM condition fails at action {self.action_index} (violation {self.violation:.6g})"
        )


class NotWeakGam(NotGam):
    pass


class DegenerateProxyWarning(UserWarning):
    """``w_star . x`` is constant over the action set."""


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ActionSet:
    actions: np.ndarray
    norm_bound: float

    def __post_init__(self):
        X = _readonly(self.actions)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise InstanceError(f"actions must be a non-empty k x d array, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise InstanceError("actions contain non-finite values")
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms > self.norm_bound + 1e-12):
            i = int(np.argmax(norms))
            raise InstanceError(f"action {i} has norm {norms[i]:.6g} > C_b={self.norm_bound:.6g}")
        if X.shape[0] > 1:
            sq = np.sum(X * X, axis=1)
            d2 = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
            np.fill_diagonal(d2, np.inf)
            if np.min(d2) <= 1e-24:
                # confirm with exact differences before rejecting
                i, j = np.unravel_index(np.argmin(d2), d2.shape)
                if np.linalg.norm(X[i] - X[j]) <= 1e-12:
                    raise InstanceError(f"actions {min(i, j)} and {max(i, j)} are duplicates")
        object.__setattr__(self, "actions", X)
        object.__setattr__(self, "norm_bound", float(self.norm_bound))

    @property
    def dim(self) -> int:
        return self.actions.shape[1]

    @property
    def k(self) -> int:
        return self.actions.shape[0]

    def __len__(self):
        return self.k

    def __getitem__(self, i):
        return self.actions[i]

    @classmethod
    def from_array(cls, actions, norm_bound=None) -> "ActionSet":
        X = np.asarray(actions, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if norm_bound is None:
            norm_bound = float(np.max(np.linalg.norm(X, axis=1)))
        return cls(X, norm_bound)


@dataclass(frozen=True)
class RewardInstance:
    actions: ActionSet
    f0: np.ndarray
    w_star: np.ndarray
    param_bound: float
    sigma: float
    range_bound: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        f0 = _readonly(self.f0)
        w = _readonly(self.w_star)
        if f0.shape != (self.actions.k,):
            raise InstanceError(f"f0 has shape {f0.shape}, expected ({self.actions.k},)")
        if w.shape != (self.actions.dim,):
            raise InstanceError(f"w_star has shape {w.shape}, expected ({self.actions.dim},)")
        if not (np.all(np.isfinite(f0)) and np.all(np.isfinite(w))):
            raise InstanceError("f0 / w_star contain non-finite values")
        if self.sigma < 0:
            raise InstanceError("sigma must be nonnegative")
        if np.linalg.norm(w) > self.param_bound + 1e-12:
            raise InstanceError(f"||w_star|| = {np.linalg.norm(w):.6g} exceeds C_w = {self.param_bound:.6g}")
        spread = float(np.max(f0) - np.min(f0))
        if spread > self.range_bound + 1e-12:
            raise InstanceError(f"reward range {spread:.6g} exceeds range_bound {self.range_bound:.6g}")
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "w_star", w)
        for name in ("param_bound", "sigma", "range_bound"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def dim(self) -> int:
        return self.actions.dim

    @property
    def k(self) -> int:
        return self.actions.k

    @property
    def X(self) -> np.ndarray:
        return self.actions.actions

    @property
    def f_star(self) -> float:
        return float(np.max(self.f0))

    @property
    def proxy(self) -> np.ndarray:
        """Linear proxy values ``w_star . x`` for every action."""
        return self.X @ self.w_star

    @property
    def deviation(self) -> np.ndarray:
        """``f0(x) - w_star . x`` per action."""
        return self.f0 - self.proxy

    def optimal_indices(self, tol=CERT_TOL) -> np.ndarray:
        return np.flatnonzero(self.f0 >= self.f_star - tol)

    def replace(self, **changes) -> "RewardInstance":
        kw = dict(
            actions=self.actions,
            f0=self.f0,
            w_star=self.w_star,
            param_bound=self.param_bound,
            sigma=self.sigma,
            range_bound=self.range_bound,
            meta=dict(self.meta),
        )
        kw.update(changes)
        return RewardInstance(**kw)


@dataclass(frozen=True)
class MisspecCertificate:
    kind: str
    rho: Optional[float] = None
    eps: Optional[float] = None
    c_star: Optional[float] = None
    tolerance: float = CERT_TOL

    KINDS = ("realizable", "uniform", "gam", "weak_gam", "unified")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown certificate kind {self.kind!r}")
        if self.kind == "gam" and (self.rho is None or self.eps is not None):
            raise ValueError("gam certificate needs rho and no eps")
        if self.kind == "unified" and (self.rho is None or self.eps is None):
            raise ValueError("unified certificate needs rho and eps")
        if self.kind == "weak_gam" and (self.rho is None or self.c_star is None):
            raise ValueError("weak_gam certificate needs rho and c_star")
        if self.kind == "uniform" and self.eps is None:
            raise ValueError("uniform certificate needs eps")
        if self.rho is not None and not (0.0 <= self.rho < 1.0):
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for name in ("rho", "eps", "c_star"):
            v = getattr(self, name)
            if v is not None:
                out[name] = float(v)
        out["tolerance"] = float(self.tolerance)
        return out

    @classmethod
    def from_dict(cls, d) -> "MisspecCertificate":
        return cls(
            kind=d["kind"],
            rho=d.get("rho"),
            eps=d.get("eps"),
            c_star=d.get("c_star"),
            tolerance=d.get("tolerance", CERT_TOL),
        )

    def __str__(self):
        parts = [self.kind]
        for name in ("rho", "eps", "c_star"):
            v = getattr(self, name)
            if v is not None:
                parts.append(f"{name}={v:.6g}")
        return " ".join(parts)


@dataclass(frozen=True)
class GapProfile:
    gaps: np.ndarray
    min_positive_gap: Optional[float]


# ---------------------------------------------------------------------------
# certification


def _gam_ratio(dev, gaps, tol, exc):
    """Max |dev|/gap over suboptimal actions; exact agreement at maximizers."""
    at_max = gaps <= tol
    bad = at_max & (np.abs(dev) > tol)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[np.argmax(np.abs(dev[bad]))])
        raise exc(i, abs(dev[i]), f"proxy disagrees with f0 at maximizer {i} by {abs(dev[i]):.6g}")
    sub = ~at_max
    if not np.any(sub):
        return 0.0
    ratios = np.abs(dev[sub]) / gaps[sub]
    j = int(np.argmax(ratios))
    rho = float(ratios[j])
    if rho >= 1.0:
        i = int(np.flatnonzero(sub)[j])
        raise exc(i, rho, f"ratio {rho:.6g} >= 1 at action {i}")
    return rho


def certify_gam(instance: RewardInstance, tol: float = CERT_TOL) -> MisspecCertificate:
    """Smallest rho for which ``w_star`` is a rho-GAM approximation of ``f0``."""
    gaps = instance.f_star - instance.f0
    dev = instance.proxy - instance.f0
    rho = _gam_ratio(dev, gaps, tol, NotGam)
    return MisspecCertificate("gam", rho=rho, tolerance=tol)


def certify_uniform(instance: RewardInstance) -> MisspecCertificate:
    eps = float(np.max(np.abs(instance.proxy - instance.f0)))
    return MisspecCertificate("uniform", eps=eps)


def certify_weak_gam(instance: RewardInstance, tol: float = CERT_TOL) -> MisspecCertificate:
    """GAM up to the additive shift ``c_star = f* - max_x w_star . x``."""
    proxy = instance.proxy
    fw_star = float(np.max(proxy))
    c_star = instance.f_star - fw_star
    gaps = instance.f_star - instance.f0
    dev = proxy - fw_star + instance.f_star - instance.f0
    rho = _gam_ratio(dev, gaps, tol, NotWeakGam)
    return MisspecCertificate("weak_gam", rho=rho, c_star=c_star, tolerance=tol)


def certify_unified(instance: RewardInstance, rho: float) -> MisspecCertificate:
    """Minimal eps with ``|w.x - f0(x)| <= rho * gap(x) + eps`` everywhere."""
    if not (0.0 <= rho < 1.0):
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    gaps = instance.f_star - instance.f0
    excess = np.abs(instance.proxy - instance.f0) - rho * gaps
    eps = max(0.0, float(np.max(excess)))
    return MisspecCertificate("unified", rho=float(rho), eps=eps)


def gap_profile(instance: RewardInstance) -> GapProfile:
    gaps = instance.f_star - instance.f0
    gaps.setflags(write=False)
    pos = gaps[gaps > 1e-12]
    return GapProfile(gaps, float(np.min(pos)) if pos.size else None)


# ---------------------------------------------------------------------------
# construction


def random_actions(d: int, k: int, seed: int, norm_bound: float = 1.0) -> ActionSet:
    """``k`` points drawn uniformly on the sphere of radius ``norm_bound`` in R^d."""
    if d < 1 or k < 1:
        raise ValueError("d and k must be positive")
    rng = np.random.default_rng(seed)
    if d == 1:
        X = rng.uniform(-norm_bound, norm_bound, size=(k, 1))
    else:
        X = rng.standard_normal((k, d))
        X *= norm_bound / np.linalg.norm(X, axis=1, keepdims=True)
    return ActionSet(X, norm_bound)


def random_direction(d: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 1])
    w = rng.standard_normal(d)
    return w / np.linalg.norm(w)


def _deviation_coefficients(L, rho, rng, saturate):
    lo, hi = -rho / (1.0 - rho), rho / (1.0 + rho)
    c = rng.uniform(lo, hi, size=L.shape)
    if saturate and rho > 0 and np.any(L > 0):
        c[int(np.argmax(L))] = lo
    return c


def _gam_rewards(X, w, c):
    proxy = X @ w
    L = np.max(proxy) - proxy
    L[L < 0] = 0.0
    return proxy + c * L


def _rescale_to_range(X, w, c, range_bound):
    """Shrink ``w`` until the rewards built from it fit in ``range_bound``.

    Rewards are recomputed from the scaled parameter rather than scaled
    themselves, so a zero deviation stays exactly zero.
    """
    f0 = _gam_rewards(X, w, c)
    spread = float(np.max(f0) - np.min(f0))
    if spread <= range_bound:
        return f0, w
    s = range_bound / spread
    while True:
        # rounding can leave the rescaled spread a hair above the bound
        f0 = _gam_rewards(X, w * s, c)
        if float(np.max(f0) - np.min(f0)) <= range_bound:
            return f0, w * s
        s = np.nextafter(s, 0.0)


def make_gam_instance(
    actions: ActionSet,
    w_star,
    target_rho: float,
    seed: int,
    *,
    sigma: float = 0.1,
    range_bound: float = 1.0,
    param_bound: Optional[float] = None,
    saturate: bool = False,
) -> RewardInstance:
    """Build ``f0 = w.x + c(x) * w.(x_* - x)`` with ``c`` drawn from the rho band.

    ``c(x)`` is uniform on ``[-rho/(1-rho), rho/(1+rho)]``, the widest band
    for which the deviation never exceeds ``rho`` times the true gap.  With
    ``saturate=True`` the action with the largest proxy gap is pinned to the
    lower endpoint so the certified rho equals the target.
    """
    if not (0.0 <= target_rho < 1.0):
        raise ValueError(f"target_rho must lie in [0, 1), got {target_rho}")
    w = np.asarray(w_star, dtype=float)
    proxy = actions.actions @ w
    L = np.max(proxy) - proxy
    L[L < 0] = 0.0
    if np.all(L <= 1e-12 * max(1.0, np.max(np.abs(proxy)))):
        warnings.warn("w_star . x is constant over the actions; instance is realizable", DegenerateProxyWarning)
        L[:] = 0.0
    rng = np.random.default_rng([seed, 2])
    c = _deviation_coefficients(L, target_rho, rng, saturate)
    f0, w = _rescale_to_range(actions.actions, w, c, range_bound)
    cb = float(np.linalg.norm(w)) if param_bound is None else param_bound
    return RewardInstance(
        actions, f0, w, cb, sigma, range_bound, meta={"seed": int(seed), "target_rho": float(target_rho)}
    )


def make_weak_gam_instance(
    actions: ActionSet,
    w_star,
    target_rho: float,
    c_star: float,
    seed: int,
    *,
    sigma: float = 0.1,
    range_bound: float = 1.0,
    param_bound: Optional[float] = None,
) -> RewardInstance:
    """Weak-GAM instance: a saturated GAM instance whose rewards are shifted by ``c_star``."""
    base = make_gam_instance(
        actions, w_star, target_rho, seed, sigma=sigma, range_bound=range_bound,
        param_bound=param_bound, saturate=True,
    )
    inst = base.replace(f0=base.f0 + c_star)
    inst.meta["c_star"] = float(c_star)
    return inst


def make_unified_instance(
    actions: ActionSet,
    w_star,
    rho: float,
    eps: float,
    seed: int,
    *,
    sigma: float = 0.1,
    range_bound: float = 1.0,
    param_bound: Optional[float] = None,
) -> RewardInstance:
    """(rho, eps)-GAM instance: a rho-GAM instance plus a bounded perturbation.

    Suboptimal actions get an extra offset ``e(x)`` with
    ``|e| <= eps / (1 + rho)``, clipped so no action overtakes the maximizer;
    the maximizers themselves are left unperturbed.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    base = make_gam_instance(
        actions, w_star, rho, seed, sigma=sigma, range_bound=range_bound, param_bound=param_bound
    )
    gaps = base.f_star - base.f0
    rng = np.random.default_rng([seed, 3])
    e = rng.uniform(-1.0, 1.0, size=gaps.shape) * eps / (1.0 + rho)
    e = np.minimum(e, 0.5 * gaps)
    e[gaps <= CERT_TOL] = 0.0
    f0 = base.f0 + e
    spread = float(np.max(f0) - np.min(f0))
    if spread > range_bound:
        # pull the lowest rewards back in; only shrinks deviations that pointed down
        f0 = np.maximum(f0, np.max(f0) - range_bound)
    inst = base.replace(f0=f0)
    inst.meta["target_eps"] = float(eps)
    return inst


def make_gap_instance(d: int, k: int, gap: float, seed: int, *, sigma: float = 0.1) -> RewardInstance:
    """Realizable unit-sphere instance whose smallest positive gap is exactly ``gap``.

    ``w_star = e_1``; action 0 is ``e_1`` itself, action 1 has first coordinate
    ``1 - gap`` and the remaining ``k - 2`` first coordinates are uniform on
    ``[0, 1 - gap]``, so every gap lies in ``[gap, 1]``.
    """
    if d < 2 or k < 2:
        raise ValueError("need d >= 2 and k >= 2")
    if not 0.0 < gap <= 1.0:
        raise ValueError("gap must lie in (0, 1]")
    rng = np.random.default_rng([seed, 4])
    first = np.concatenate([[1.0, 1.0 - gap], rng.uniform(0.0, 1.0 - gap, k - 2)])
    rest = rng.standard_normal((k, d - 1))
    rest *= np.sqrt(1.0 - first**2)[:, None] / np.linalg.norm(rest, axis=1, keepdims=True)
    X = np.hstack([first[:, None], rest])
    w = np.zeros(d)
    w[0] = 1.0
    return RewardInstance(ActionSet(X, 1.0), X @ w, w, 1.0, sigma, 1.0, meta={"seed": int(seed), "gap": float(gap)})


# ---------------------------------------------------------------------------
# assumptions


@dataclass(frozen=True)
class AssumptionReport:
    which: str
    rho: float
    bound: float
    holds: bool

    def to_dict(self):
        return {"which": self.which, "rho": self.rho, "bound": self.bound, "holds": self.holds}


def assumption_bound(which: str, d: int, horizon: int = 1, C_b=1.0, C_w=1.0, sigma=1.0) -> float:
    if which == "A3":
        return 1.0 / (8.0 * d * math.sqrt(math.log(1.0 + horizon * C_b**2 * C_w**2 / (d * sigma**2))))
    if which == "A4":
        return 1.0 / (16.0 * math.sqrt(d))
    raise ValueError(f"unknown assumption {which!r}")


def check_assumptions(
    instance: RewardInstance, horizon: int, which: str, rho: Optional[float] = None
) -> AssumptionReport:
    """Advisory check of the low-misspecification conditions on rho.

    ``A3`` is the strict LinUCB condition (rho below a horizon-dependent
    level), ``A4`` the constant condition used by phased elimination.
    """
    if rho is None:
        rho = certify_gam(instance).rho
    bound = assumption_bound(
        which, instance.dim, horizon, instance.actions.norm_bound, instance.param_bound, instance.sigma
    )
    holds = rho < bound if which == "A3" else rho <= bound
    return AssumptionReport(which, float(rho), float(bound), bool(holds))


# ---------------------------------------------------------------------------
# file format


def instance_to_dict(instance: RewardInstance, certificate: Optional[MisspecCertificate] = None) -> dict:
    doc = {
        "format_version": INSTANCE_FORMAT_VERSION,
        "dim": instance.dim,
        "actions": [list(map(float, row)) for row in instance.X],
        "f0": list(map(float, instance.f0)),
        "w_star": list(map(float, instance.w_star)),
        "sigma": instance.sigma,
        "C_b": instance.actions.norm_bound,
        "C_w": instance.param_bound,
        "range_bound": instance.range_bound,
    }
    meta = {}
    if "seed" in instance.meta:
        meta["seed"] = int(instance.meta["seed"])
    if certificate is not None:
        meta["certificate"] = certificate.to_dict()
    elif "certificate" in instance.meta:
        meta["certificate"] = dict(instance.meta["certificate"])
    if meta:
        doc["meta"] = meta
    return doc


def instance_from_dict(doc: dict) -> RewardInstance:
    try:
        X = np.asarray(doc["actions"], dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[1] != int(doc["dim"]):
            raise InstanceError(f"dim={doc['dim']} but actions have {X.shape[1]} columns")
        actions = ActionSet(X, float(doc["C_b"]))
        meta = dict(doc.get("meta", {}))
        return RewardInstance(
            actions,
            np.asarray(doc["f0"], dtype=float),
            np.asarray(doc["w_star"], dtype=float),
            float(doc["C_w"]),
            float(doc["sigma"]),
            float(doc.get("range_bound", 1.0)),
            meta=meta,
        )
    except KeyError as exc:
        raise InstanceError(f"instance document missing field {exc.args[0]!r}") from None


def save_instance(path, instance: RewardInstance, certificate: Optional[MisspecCertificate] = None):
    Path(path).write_text(_jsonfmt.dumps(instance_to_dict(instance, certificate)))


def load_instance(path) -> RewardInstance:
    return instance_from_dict(json.loads(Path(path).read_text()))


def stored_certificate(instance: RewardInstance) -> Optional[MisspecCertificate]:
    cert = instance.meta.get("certificate")
    return MisspecCertificate.from_dict(cert) if cert else None
