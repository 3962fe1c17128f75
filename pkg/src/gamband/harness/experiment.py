"""Single runs and multi-seed sweeps, with traces and a summary on disk."""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .. import _jsonfmt
from ..linucb import LinUcbConfig, run_linucb
from ..model import (
    NotGam,
    RewardInstance,
    certify_gam,
    certify_unified,
    check_assumptions,
    load_instance,
    make_gam_instance,
    make_unified_instance,
    random_actions,
    random_direction,
    stored_certificate,
)
from ..phased_elim import PhaseConfig, run as run_pe
from .env import Environment, NoiseModel
from .trace import RegretTrace

SUMMARY_FORMAT_VERSION = 1
ALGORITHMS = ("linucb", "linucbw", "pe", "pe-unified")


class ConfigError(ValueError):
    pass


class CertificateMismatch(ValueError):
    """The requested algorithm needs a certificate field the instance lacks."""


def generate_instance(d, k, rho, seed, sigma=0.1, eps=0.0, range_bound=1.0) -> RewardInstance:
    """Random sphere actions with a GAM (or, with ``eps > 0``, unified) reward table."""
    actions = random_actions(int(d), int(k), int(seed))
    w = random_direction(int(d), int(seed))
    if eps and eps > 0:
        inst = make_unified_instance(actions, w, rho, eps, seed, sigma=sigma, range_bound=range_bound)
        cert = certify_unified(inst, rho)
    else:
        inst = make_gam_instance(actions, w, rho, seed, sigma=sigma, range_bound=range_bound)
        cert = certify_gam(inst)
    inst.meta["certificate"] = cert.to_dict()
    return inst


def resolve_eps(instance: RewardInstance, eps: Optional[float]) -> float:
    if eps is not None:
        return float(eps)
    cert = stored_certificate(instance)
    if cert is None or cert.eps is None or cert.kind != "unified":
        raise CertificateMismatch(
            "pe-unified needs certificate field 'eps' (a unified certificate) or an explicit eps"
        )
    return float(cert.eps)


def _certificate_echo(instance):
    try:
        return certify_gam(instance).to_dict()
    except NotGam as exc:
        cert = stored_certificate(instance)
        return cert.to_dict() if cert else {"kind": "none", "error": str(exc)}


def run_single(
    instance: RewardInstance,
    algorithm: str,
    horizon: int,
    seed: int,
    *,
    master_seed: int = 0,
    delta: float = 0.05,
    alpha: Optional[float] = None,
    eps: Optional[float] = None,
    noise: str = "gaussian",
    diagnostics: bool = False,
) -> RegretTrace:
    """One ``(algorithm, seed)`` run; noise is keyed by ``(master_seed, seed, step)``."""
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    env = Environment(instance, NoiseModel(noise, instance.sigma, master_seed, seed), horizon)
    meta = {
        "algorithm": algorithm,
        "horizon": int(horizon),
        "seed": int(seed),
        "master_seed": int(master_seed),
        "noise": noise,
        "certificate": _certificate_echo(instance),
    }
    rho = meta["certificate"].get("rho", 0.0) or 0.0
    if algorithm in ("linucb", "linucbw"):
        cfg = LinUcbConfig.for_instance(
            instance, delta=delta, horizon=horizon, variant="weak" if algorithm == "linucbw" else "standard"
        )
        meta["delta"] = delta
        meta["assumption"] = check_assumptions(instance, horizon, "A3", rho).to_dict()
        trace = run_linucb(env, cfg)
        in_ball = trace.diagnostics["in_ball"]
        meta["covered"] = bool(np.all(in_ball))
        if not diagnostics:
            trace.diagnostics = {"in_ball": in_ball}
    else:
        variant = "unified" if algorithm == "pe-unified" else "gam"
        e = resolve_eps(instance, eps) if variant == "unified" else None
        cfg = PhaseConfig(horizon, instance.dim, alpha=alpha, variant=variant, eps=e, k=instance.k)
        meta["alpha"] = cfg.confidence
        if e is not None:
            meta["eps"] = e
        meta["assumption"] = check_assumptions(instance, horizon, "A4", rho).to_dict()
        trace = run_pe(cfg, env)
        if not diagnostics:
            trace.diagnostics = {}
    trace.metadata = meta
    return trace


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class ExperimentConfig:
    instance: RewardInstance
    algorithms: list
    checkpoints: list
    seeds: list
    master_seed: int = 0
    delta: float = 0.05
    alpha: Optional[float] = None
    eps: Optional[float] = None
    noise: str = "gaussian"
    raw: Optional[dict] = None

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "ExperimentConfig":
        try:
            source = doc["instance"]
            algos = list(doc["algorithms"])
        except KeyError as exc:
            raise ConfigError(f"config missing field {exc.args[0]!r}") from None
        if isinstance(source, str):
            path = Path(source)
            if not path.is_absolute():
                path = Path(base_dir) / path
            instance = load_instance(path)
        elif isinstance(source, dict) and "generate" in source:
            g = dict(source["generate"])
            missing = [key for key in ("d", "k", "rho", "seed") if key not in g]
            if missing:
                raise ConfigError(f"instance.generate missing fields {missing}")
            instance = generate_instance(**g)
        else:
            raise ConfigError("instance must be a file path or {'generate': {...}}")
        for a in algos:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a!r}")
        if "checkpoints" in doc:
            cps = sorted(int(t) for t in doc["checkpoints"])
        elif "horizon" in doc:
            cps = [int(doc["horizon"])]
        else:
            raise ConfigError("config needs 'horizon' or 'checkpoints'")
        if not cps or cps[0] < 1:
            raise ConfigError("horizons must be positive")
        if "seeds" in doc:
            seeds = [int(s) for s in doc["seeds"]]
        elif "n_seeds" in doc:
            seeds = list(range(int(doc["n_seeds"])))
        else:
            raise ConfigError("config needs 'seeds' or 'n_seeds'")
        cfg = cls(
            instance,
            algos,
            cps,
            seeds,
            master_seed=int(doc.get("master_seed", 0)),
            delta=float(doc.get("delta", 0.05)),
            alpha=doc.get("alpha"),
            eps=doc.get("eps"),
            noise=doc.get("noise", "gaussian"),
            raw=doc,
        )
        if "pe-unified" in algos:
            resolve_eps(instance, cfg.eps)
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        text = path.read_text()
        if path.suffix in (".yaml", ".yml"):
            import yaml

            doc = yaml.safe_load(text)
        else:
            doc = json.loads(text)
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a mapping")
        return cls.from_dict(doc, base_dir=path.parent)


def horizon_dependent(algorithm: str, alpha) -> bool:
    # alpha = 1/(kT) ties phased elimination to the horizon; LinUCB's radius does not depend on T
    return algorithm in ("pe", "pe-unified") and alpha is None


def _tasks(cfg: ExperimentConfig):
    for algo in cfg.algorithms:
        horizons = cfg.checkpoints if horizon_dependent(algo, cfg.alpha) else [cfg.checkpoints[-1]]
        for seed in cfg.seeds:
            for T in horizons:
                yield algo, seed, T


def _execute(args):
    cfg, algo, seed, T = args
    t0 = time.perf_counter()
    try:
        trace = run_single(
            cfg.instance, algo, T, seed, master_seed=cfg.master_seed, delta=cfg.delta,
            alpha=cfg.alpha, eps=cfg.eps, noise=cfg.noise,
        )
        return algo, seed, T, trace, None, time.perf_counter() - t0
    except Exception as exc:  # recorded per run, sweep continues
        return algo, seed, T, None, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return None, None
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(np.mean(v)), se


def trace_name(algo, seed, T):
    return f"{algo}_seed{seed}_T{T}.csv"


def run_experiment(cfg: ExperimentConfig, out_dir, jobs: int = 1, plot: bool = True) -> dict:
    """Run every ``(algorithm, seed)`` pair, write traces, a summary and a regret figure."""
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    tasks = [(cfg, a, s, T) for a, s, T in _tasks(cfg)]
    t0 = time.perf_counter()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_execute, tasks))
    else:
        results = [_execute(t) for t in tasks]

    runs, by_algo = [], {a: [] for a in cfg.algorithms}
    for algo, seed, T, trace, err, wall in results:
        row = {"algorithm": algo, "seed": seed, "horizon": T, "wall_clock_s": wall}
        if err is None:
            name = trace_name(algo, seed, T)
            trace.save(out / "traces" / name)
            row.update(trace=f"traces/{name}", R_T=trace.total_regret, switches=trace.switch_count,
                       batches=trace.batch_count)
            by_algo[algo].append((seed, T, trace))
        else:
            row["error"] = err
        runs.append(row)

    summary = {
        "format_version": SUMMARY_FORMAT_VERSION,
        "instance": {"dim": cfg.instance.dim, "k": cfg.instance.k, "certificate": _certificate_echo(cfg.instance)},
        "checkpoints": cfg.checkpoints,
        "seeds": cfg.seeds,
        "algorithms": [summarize(algo, by_algo[algo], cfg.checkpoints, runs) for algo in cfg.algorithms],
        "runs": runs,
        "wall_clock_s": time.perf_counter() - t0,
    }
    (out / "summary.json").write_text(_jsonfmt.dumps(summary))
    if plot:
        from ..plotting import plot_regret

        final = [tr for algo in cfg.algorithms for s, T, tr in by_algo[algo] if T == cfg.checkpoints[-1]]
        if final:
            plot_regret(final, out / "regret.svg")
    return summary


def summarize(algo, results, checkpoints, runs=()) -> dict:
    """Aggregate one algorithm's runs: mean and standard error across seeds."""
    errors = [r for r in runs if r["algorithm"] == algo and "error" in r]
    by_T = {}
    for seed, T, trace in results:
        by_T.setdefault(T, {})[seed] = trace
    Tmax = checkpoints[-1]
    rows = []
    for T in checkpoints:
        if T in by_T:
            vals = [tr.total_regret for tr in by_T[T].values()]
        elif Tmax in by_T and all(len(tr) >= T for tr in by_T[Tmax].values()):
            vals = [tr.regret_at(T) for tr in by_T[Tmax].values()]
        else:
            continue
        m, se = _mean_se(vals)
        rows.append({"T": T, "mean_R": m, "se_R": se, "mean_R_over_sqrtT": m / math.sqrt(T), "n": len(vals)})
    final = list(by_T.get(Tmax, {}).values())
    entry = {"algorithm": algo, "n_runs": len(final), "n_failed": len(errors), "checkpoints": rows}
    if final:
        entry["switches"] = dict(zip(("mean", "se"), _mean_se([tr.switch_count for tr in final])))
        entry["batches"] = dict(zip(("mean", "se"), _mean_se([tr.batch_count for tr in final])))
        if algo.startswith("linucb"):
            entry["coverage"] = float(np.mean([bool(tr.metadata.get("covered", False)) for tr in final]))
        else:
            entry["max_support"] = max(
                (len(b["support"]) for tr in final for b in tr.batch_log), default=0
            )
    if errors:
        entry["errors"] = [{"seed": r["seed"], "horizon": r["horizon"], "error": r["error"]} for r in errors]
    return entry
