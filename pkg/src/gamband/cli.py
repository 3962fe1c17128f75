"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 domain error, 4 audit failure.
Every flag can also be set through an environment variable named
``GAMBAND_<FLAG>`` (upper case, dashes as underscores), e.g. ``GAMBAND_SEED``.
"""

from __future__ import annotations

import argparse
import os
import sys

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_AUDIT = 0, 2, 3, 4
ENV_PREFIX = "GAMBAND_"


class AuditFailure(Exception):
    pass


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _nonneg_float(s):
    v = float(s)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {s}")
    return v


def _positive_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {s}")
    return v


def _rho(s):
    v = float(s)
    if not 0.0 <= v < 1.0:
        raise argparse.ArgumentTypeError(f"rho must lie in [0, 1), got {s}")
    return v


def _prob(s):
    v = float(s)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"expected a probability in (0, 1), got {s}")
    return v


def _flag(p, name, **kw):
    """Add ``--name`` with a default taken from ``GAMBAND_<NAME>`` when set."""
    dest = kw.get("dest", name.lstrip("-").replace("-", "_"))
    env = os.environ.get(ENV_PREFIX + dest.upper())
    if env is not None:
        kw["default"] = env.split() if kw.get("nargs") in ("+", "*") else env
        kw["required"] = False
    p.add_argument(name, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gamband", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-env", help="generate a certified random instance")
    _flag(g, "--d", type=_positive_int, required=True)
    _flag(g, "--k", type=_positive_int, required=True)
    _flag(g, "--rho", type=_rho, required=True)
    _flag(g, "--seed", type=int, default=0)
    _flag(g, "--sigma", type=_positive_float, default=0.1)
    _flag(g, "--eps", type=_nonneg_float, default=0.0, help="extra (rho, eps) perturbation")
    _flag(g, "--range-bound", type=_positive_float, default=1.0)
    _flag(g, "--out", required=True)

    v = sub.add_parser("verify", help="certify an instance file")
    _flag(v, "--env", required=True)
    _flag(v, "--tol", type=_positive_float, default=1e-9)

    d = sub.add_parser("design", help="solve a G-optimal design over an instance's actions")
    _flag(d, "--env", required=True)
    _flag(d, "--active", default=None, help="comma-separated action indices (default: all)")
    _flag(d, "--max-iters", type=_positive_int, default=10_000)

    r = sub.add_parser("run", help="run one algorithm on one instance")
    _flag(r, "--algo", choices=("linucb", "linucbw", "pe", "pe-unified"), required=True)
    _flag(r, "--env", required=True)
    _flag(r, "--T", type=_positive_int, required=True, dest="T")
    _flag(r, "--seed", type=int, default=0)
    _flag(r, "--master-seed", type=int, default=0)
    _flag(r, "--delta", type=_prob, default=0.05)
    _flag(r, "--alpha", type=_prob, default=None, help="default 1/(kT)")
    _flag(r, "--eps", type=_nonneg_float, default=None, help="override the certified eps (pe-unified)")
    _flag(r, "--noise", choices=("gaussian", "bounded_uniform", "none"), default="gaussian")
    _flag(r, "--out", required=True)

    s = sub.add_parser("sweep", help="run an experiment config")
    _flag(s, "--config", required=True)
    _flag(s, "--out-dir", required=True)
    _flag(s, "--jobs", type=_positive_int, default=1)

    pl = sub.add_parser("plot", help="render cumulative regret curves from trace files")
    _flag(pl, "--traces", nargs="+", required=True)
    _flag(pl, "--out", required=True)
    return parser


def cmd_gen_env(args):
    from .harness.experiment import generate_instance
    from .model import save_instance

    inst = generate_instance(args.d, args.k, args.rho, args.seed, sigma=args.sigma, eps=args.eps,
                             range_bound=args.range_bound)
    save_instance(args.out, inst)
    print(f"wrote {args.out}: {_cert_line(inst.meta['certificate'])}")


def _cert_line(cert: dict) -> str:
    parts = [cert["kind"]]
    for key in ("rho", "eps", "c_star"):
        if key in cert:
            parts.append(f"{key}={cert[key]:.6g}")
    return " ".join(parts)


def cmd_verify(args):
    from .model import (NotGam, certify_gam, certify_uniform, certify_unified, certify_weak_gam,
                        load_instance, stored_certificate)

    inst = load_instance(args.env)
    claimed = stored_certificate(inst)
    gam = None
    try:
        gam = certify_gam(inst, args.tol)
        print(f"gam rho={gam.rho:.6g}")
    except NotGam as exc:
        print(f"not gam: {exc}")
    print(f"uniform eps={certify_uniform(inst).eps:.6g}")
    try:
        weak = certify_weak_gam(inst, args.tol)
        print(f"weak_gam rho={weak.rho:.6g} c_star={weak.c_star:.6g}")
    except NotGam as exc:
        print(f"not weak_gam: {exc}")
    if claimed is not None:
        if claimed.kind == "gam":
            if gam is None or gam.rho > claimed.rho + args.tol:
                raise AuditFailure(f"stored certificate claims gam rho={claimed.rho:.6g}, which does not hold")
        elif claimed.kind == "unified":
            eps = certify_unified(inst, claimed.rho).eps
            print(f"unified rho={claimed.rho:.6g} eps={eps:.6g}")
            if eps > claimed.eps + args.tol:
                raise AuditFailure(f"stored certificate claims eps={claimed.eps:.6g}, certified {eps:.6g}")
    elif gam is None:
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_design(args):
    from .design import solve_design
    from .model import load_instance

    inst = load_instance(args.env)
    if args.active:
        try:
            active = [int(a) for a in args.active.split(",")]
        except ValueError:
            raise UsageError(f"--active must be comma-separated integers, got {args.active!r}")
        if any(a < 0 or a >= inst.k for a in active):
            raise UsageError(f"--active indices must lie in [0, {inst.k})")
    else:
        active = list(range(inst.k))
    des = solve_design(active, inst.actions, args.max_iters)
    for a in des.support:
        print(f"{a}\t{des.weights[a]:.12g}")
    print(f"support={des.support_size}")
    print(f"g_value={des.g_value:.12g}")


def cmd_run(args):
    from .harness.experiment import run_single
    from .model import load_instance

    inst = load_instance(args.env)
    tr = run_single(inst, args.algo, args.T, args.seed, master_seed=args.master_seed, delta=args.delta,
                    alpha=args.alpha, eps=args.eps, noise=args.noise)
    tr.save(args.out)
    print(f"{args.algo} T={args.T} seed={args.seed}: R_T={tr.total_regret:.6g} "
          f"switches={tr.switch_count} batches={tr.batch_count}")


def cmd_sweep(args):
    from .harness.experiment import ExperimentConfig, run_experiment

    cfg = ExperimentConfig.load(args.config)
    summary = run_experiment(cfg, args.out_dir, jobs=args.jobs)
    for entry in summary["algorithms"]:
        last = entry["checkpoints"][-1] if entry["checkpoints"] else None
        tail = f"R_T={last['mean_R']:.6g}+/-{last['se_R']:.3g} at T={last['T']}" if last else "no runs"
        print(f"{entry['algorithm']}: {entry['n_runs']} runs, {tail}")
    if any(e["n_failed"] for e in summary["algorithms"]):
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_plot(args):
    from .plotting import load_traces, plot_regret

    traces = load_traces(args.traces)
    if not traces:
        raise UsageError("no trace files found")
    plot_regret(traces, args.out)
    print(f"wrote {args.out}")


class UsageError(Exception):
    pass


COMMANDS = {
    "gen-env": cmd_gen_env,
    "verify": cmd_verify,
    "design": cmd_design,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    from .design import DesignFailure
    from .harness.experiment import ConfigError
    from .harness.trace import TraceFormatError
    from .linalg import AuditViolation
    from .model import InstanceError, NotGam

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        code = COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AuditFailure, AuditViolation) as exc:
        print(f"audit failure: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    except (InstanceError, NotGam, DesignFailure, TraceFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
