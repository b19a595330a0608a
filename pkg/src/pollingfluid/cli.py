"""Command-line interface.

Subcommands: validate, analyze, simulate, fluid, sample-xi, verify,
busy-moments.  Reports are JSON, bulk series are CSV (floats with 17
significant digits).  Every artifact embeds the tool version, the resolved
config hash and the fully-resolved parameter set; --deterministic suppresses
the timestamp so repeated runs are byte-identical.

Exit codes: 0 success, 1 validation reject, 2 I/O or malformed config,
3 numerical failure, 4 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .branching import (analyze, analysis_report, perron, sample_xi,
                        session_mean_matrix, visit_means)
from .config import ModelConfig, config_hash, load_config, validate_config
from .convergence import (busy_period_moments, extract_xi_empirical, ks_two_sample,
                          switching_ratio_estimates, trajectory_distances)
from .errors import (ConfigError, ConsistencyError, DegenerateConfigError, DomainError,
                     PollingError, ResourceLimitError, SpectralFailure, SupercriticalityError)
from .fluid import fluid_constants, parse_grid, write_fluid_csv
from .simulator import run_trace, write_trace_csv, write_trajectory_csv

EXIT_OK = 0
EXIT_REJECT = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3
EXIT_USAGE = 4

_NUMERICAL_ERRORS = (SpectralFailure, SupercriticalityError, DegenerateConfigError,
                     ResourceLimitError, ConsistencyError, DomainError)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _meta(cfg: ModelConfig | None, params: dict, deterministic: bool) -> dict:
    meta = {"tool": "pollingfluid", "version": __version__, "params": params}
    if cfg is not None:
        meta["config_hash"] = config_hash(cfg)
    if not deterministic:
        meta["generated_at"] = datetime.now(timezone.utc).isoformat()
    return meta


def _meta_lines(meta: dict) -> list[str]:
    lines = [f"tool=pollingfluid version={meta['version']}"]
    if "config_hash" in meta:
        lines.append(f"config_hash={meta['config_hash']}")
    lines.append("params=" + json.dumps(meta["params"], sort_keys=True))
    if "generated_at" in meta:
        lines.append(f"generated_at={meta['generated_at']}")
    return lines


def _write_json(doc: dict, out_path: str | None) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _open_out(out_path: str | None):
    if out_path:
        return open(out_path, "w", encoding="utf-8")
    return sys.stdout


def _load(args) -> ModelConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = ModelConfig(queues=cfg.queues, base_seed=args.seed)
    return cfg


def _require_accept(cfg: ModelConfig) -> None:
    report = validate_config(cfg)
    if not report.accepted:
        raise _Reject(report)


class _Reject(Exception):
    def __init__(self, report):
        self.report = report


def _cmd_validate(args) -> int:
    cfg = _load(args)
    report = validate_config(cfg)
    doc = {"meta": _meta(cfg, {"command": "validate"}, args.deterministic)}
    doc.update(report.to_dict())
    _write_json(doc, args.out)
    return EXIT_OK if report.accepted else EXIT_REJECT


def _cmd_analyze(args) -> int:
    cfg = _load(args)
    _require_accept(cfg)
    reps = args.reps if args.reps is not None else 2000
    params = {"command": "analyze", "reps": reps, "gen_cap": args.gen_cap,
              "pop_cap": args.pop_cap, "threads": args.threads,
              "seed": int(cfg.base_seed)}
    data = analyze(cfg, extinction_reps=reps, gen_cap=args.gen_cap,
                   pop_cap=args.pop_cap, threads=args.threads)
    fc = fluid_constants(data.visit_means, data.spectral, cfg)
    doc = {"meta": _meta(cfg, params, args.deterministic)}
    doc.update(analysis_report(data))
    doc["fluid"] = fc.to_dict()
    _write_json(doc, args.out)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = _load(args)
    _require_accept(cfg)
    sessions = args.sessions if args.sessions is not None else 100
    params = {"command": "simulate", "sessions": sessions, "seed": int(cfg.base_seed),
              "grid": args.grid}
    meta = _meta(cfg, params, args.deterministic)
    grid = parse_grid(args.grid) if args.grid else None
    if grid is not None and not args.out:
        raise _UsageError("--grid trajectory output requires --out")
    trace = run_trace(cfg, "trace", n_sessions=sessions, grid=grid)
    fh = _open_out(args.out)
    try:
        write_trace_csv(trace, fh, _meta_lines(meta))
    finally:
        if args.out:
            fh.close()
    if grid is not None:
        traj_path = args.out + ".traj.csv"
        with open(traj_path, "w", encoding="utf-8") as fh:
            write_trajectory_csv(trace.grid, trace.grid_q, fh, _meta_lines(meta))
    return EXIT_OK


def _cmd_fluid(args) -> int:
    cfg = _load(args)
    _require_accept(cfg)
    if not args.grid:
        raise _UsageError("fluid requires --grid t0:T:points[:log]")
    grid = parse_grid(args.grid)
    vm = visit_means(cfg)
    fc = fluid_constants(vm, perron(session_mean_matrix(vm).M), cfg)
    params = {"command": "fluid", "grid": args.grid, "seed": int(cfg.base_seed)}
    meta = _meta(cfg, params, args.deterministic)
    fh = _open_out(args.out)
    try:
        write_fluid_csv(fc, grid, fh, _meta_lines(meta))
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def _cmd_sample_xi(args) -> int:
    cfg = _load(args)
    _require_accept(cfg)
    reps = args.reps if args.reps is not None else 2000
    depth = args.depth if args.depth is not None else 12
    params = {"command": "sample-xi", "reps": reps, "depth": depth,
              "threads": args.threads, "seed": int(cfg.base_seed)}
    vm = visit_means(cfg)
    sp = perron(session_mean_matrix(vm).M)
    fc = fluid_constants(vm, sp, cfg)
    xs = sample_xi(cfg, sp, fc.alpha, reps, depth, threads=args.threads)
    meta = _meta(cfg, params, args.deterministic)
    fh = _open_out(args.out)
    try:
        for line in _meta_lines(meta):
            fh.write(f"# {line}\n")
        fh.write("xi\n")
        for x in xs:
            fh.write(f"{x:.17g}\n")
    finally:
        if args.out:
            fh.close()
    summary = {"meta": meta, "count": int(xs.size), "mean": float(xs.mean()),
               "std": float(xs.std(ddof=1)), "min": float(xs.min()),
               "max": float(xs.max()), "rho": sp.rho}
    if args.out:
        _write_json(summary, None)
    return EXIT_OK


def _cmd_verify(args) -> int:
    cfg = _load(args)
    _require_accept(cfg)
    scales = [int(s) for s in args.scales.split(",")] if args.scales else [6, 8, 10]
    reps = args.reps if args.reps is not None else 200
    depth = args.depth if args.depth is not None else 12
    grid_spec = args.grid or "0.1:2.0:64:log"
    params = {"command": "verify", "scales": scales, "reps": reps, "depth": depth,
              "grid": grid_spec, "xi_samples": args.xi_samples,
              "trajectory_reps": args.trajectory_reps, "busy_reps": args.busy_reps,
              "threads": args.threads, "seed": int(cfg.base_seed)}
    grid = parse_grid(grid_spec)
    vm = visit_means(cfg)
    sp = perron(session_mean_matrix(vm).M)
    fc = fluid_constants(vm, sp, cfg)
    dropped = 0

    ratios, d = switching_ratio_estimates(cfg, fc, scales, reps, threads=args.threads)
    dropped += d
    total = reps

    xi_formula = sample_xi(cfg, sp, fc.alpha, args.xi_samples, depth, threads=args.threads)
    extraction = extract_xi_empirical(cfg, fc, sp, args.xi_samples, n=max(scales),
                                      threads=args.threads)
    dropped += extraction.dropped
    total += args.xi_samples
    ks, crit = ks_two_sample(xi_formula, extraction.xi)

    trajectory = []
    for n in scales:
        dists, d = trajectory_distances(cfg, fc, sp, n, grid, args.trajectory_reps,
                                        threads=args.threads)
        dropped += d
        total += args.trajectory_reps
        trajectory.append({"n": n, "sup_distance": float(np.median(dists)) if dists.size else None,
                           "samples": int(dists.size)})

    busy = []
    for i in range(cfg.n_queues):
        for kgate in (0, 1, 2, 5, math.inf):
            rep = busy_period_moments(cfg, i, kgate, args.busy_reps, threads=args.threads)
            busy.append(rep.to_dict())
    total += 2 * 5 * args.busy_reps

    meta = _meta(cfg, params, args.deterministic)
    xi_path = (args.out + ".xi.csv") if args.out else None
    if xi_path:
        with open(xi_path, "w", encoding="utf-8") as fh:
            for line in _meta_lines(meta):
                fh.write(f"# {line}\n")
            fh.write("xi\n")
            for x in extraction.xi:
                fh.write(f"{x:.17g}\n")
    doc = {
        "meta": meta,
        "ratios": [r.to_dict() for r in ratios],
        "xi": {"samples_path": xi_path, "ks": ks, "critical": crit,
               "n_formula": int(xi_formula.size), "n_empirical": int(extraction.xi.size)},
        "trajectory": trajectory,
        "busy": busy,
        "dropped": {"count": dropped, "total": total},
    }
    _write_json(doc, args.out)
    return EXIT_OK


def _cmd_busy_moments(args) -> int:
    cfg = _load(args)
    _require_accept(cfg)
    reps = args.reps if args.reps is not None else 100_000
    params = {"command": "busy-moments", "reps": reps, "threads": args.threads,
              "seed": int(cfg.base_seed)}
    reports = []
    for i in range(cfg.n_queues):
        for kgate in (0, 1, 2, 5, math.inf):
            rep = busy_period_moments(cfg, i, kgate, reps, threads=args.threads)
            reports.append(rep.to_dict())
    doc = {"meta": _meta(cfg, params, args.deterministic), "busy": reports}
    _write_json(doc, args.out)
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(prog="pollingfluid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="path to the JSON model config")
        p.add_argument("--out", default=None, help="output path (default: stdout)")
        p.add_argument("--seed", type=int, default=None, help="override base_seed")
        p.add_argument("--threads", type=int, default=1, help="worker cap for MC batches")
        p.add_argument("--deterministic", action="store_true",
                       help="suppress timestamps for byte-identical artifacts")

    p = sub.add_parser("validate", help="check the standing assumptions")
    common(p)
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("analyze", help="branching report and fluid constants")
    common(p)
    p.add_argument("--reps", type=int, default=None, help="extinction replications (default 2000)")
    p.add_argument("--gen-cap", type=int, default=200, help="extinction generation cap")
    p.add_argument("--pop-cap", type=int, default=10_000,
                   help="extinction survival population threshold")
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("simulate", help="event trace CSV (plus trajectory CSV with --grid)")
    common(p)
    p.add_argument("--sessions", type=int, default=None, help="sessions to simulate (default 100)")
    p.add_argument("--grid", default=None,
                   help="t0:T:points[:log] trajectory grid; sets the time horizon (overrides --sessions)")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("fluid", help="fluid trajectory CSV over a grid")
    common(p)
    p.add_argument("--grid", default=None, help="t0:T:points[:log] evaluation grid")
    p.set_defaults(fn=_cmd_fluid)

    p = sub.add_parser("sample-xi", help="draw the scaling factor xi by the formula sampler")
    common(p)
    p.add_argument("--reps", type=int, default=None, help="samples (default 2000)")
    p.add_argument("--depth", type=int, default=None, help="zeta truncation depth (default 12)")
    p.set_defaults(fn=_cmd_sample_xi)

    p = sub.add_parser("verify", help="full convergence report")
    common(p)
    p.add_argument("--reps", type=int, default=None, help="ratio replications (default 200)")
    p.add_argument("--depth", type=int, default=None, help="zeta truncation depth (default 12)")
    p.add_argument("--scales", default=None, help="comma list of scale exponents (default 6,8,10)")
    p.add_argument("--grid", default=None, help="trajectory grid (default 0.1:2.0:64:log)")
    p.add_argument("--xi-samples", type=int, default=2000, help="xi samples per side")
    p.add_argument("--trajectory-reps", type=int, default=50)
    p.add_argument("--busy-reps", type=int, default=20_000)
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("busy-moments", help="busy-period moment report")
    common(p)
    p.add_argument("--reps", type=int, default=None, help="replications (default 100000)")
    p.set_defaults(fn=_cmd_busy_moments)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _Reject as rej:
        doc = {"meta": _meta(None, {"command": args.command}, args.deterministic)}
        doc.update(rej.report.to_dict())
        _write_json(doc, args.out)
        print(f"configuration rejected: {', '.join(rej.report.reasons)}", file=sys.stderr)
        return EXIT_REJECT
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PollingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
