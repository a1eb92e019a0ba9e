"""Command-line front end: ``levyscale <command> ...``.

Exit codes: 0 success, 1 verification failure, 2/3 for ``solve-definetti``
verdicts (condition violated / inconclusive), 64 usage or input errors,
65 numerical failures (the failing stage is printed).
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import platform
import sys
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import acceptance
from .certify import ShapeReport
from .definetti import HJB_REL_TOL, solve
from .errors import LevyScaleError
from .gallery import GALLERY, gallery_model, load_model_file
from .scale_fn import FLOAT_FMT, compute_scale, write_csv
from .shape_analysis import (
    density_log_convexity,
    find_a_star,
    shape_suite,
    smoothness_class,
    tail_log_convexity,
)
from .simulation import THREADS_ENV, StrategySpec, simulate_value, thread_count

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 64
EXIT_NUMERIC = 65
PER_PATH_CAP = 10_000
COMMANDS = ("compute-scale", "analyze-shape", "solve-definetti", "simulate", "verify")
TOLERANCE_KEYS = ("hjb_rel", "shape", "tie_rel")


class UsageError(Exception):
    """Bad arguments or unreadable input; maps to exit code 64."""


@dataclass
class RunConfig:
    command: str
    model_path: str | None = None
    q: float | None = None
    output_dir: Path = Path(".")
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    extra: dict = field(default_factory=dict)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _tolerance(text: str):
    key, sep, val = text.partition("=")
    if not sep or key not in TOLERANCE_KEYS:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE with KEY in {TOLERANCE_KEYS}")
    try:
        v = float(val)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {val!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("tolerances must be positive")
    return key, v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="levyscale", description="Scale functions, shape certificates and dividend barriers "
                                              "for spectrally negative Lévy processes.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, need_q=True):
        sp.add_argument("--model", required=True,
                        help="model file (YAML/JSON) or gallery:<name>")
        if need_q:
            sp.add_argument("--q", type=float, required=True, help="discount / killing rate")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        sp.add_argument("--tol", type=_tolerance, action="append", default=[], metavar="KEY=VALUE",
                        help=f"tolerance override, KEY in {', '.join(TOLERANCE_KEYS)}")

    sp = sub.add_parser("compute-scale", help="tabulate W^(q), W', W'' and u_q to CSV")
    common(sp)
    sp.add_argument("--x-max", type=float, default=None)
    sp.add_argument("--points", type=int, default=2048)

    sp = sub.add_parser("analyze-shape", help="a*, smoothness class and shape certificates")
    common(sp)

    sp = sub.add_parser("solve-definetti", help="optimal barrier, value function and HJB residuals")
    common(sp)

    sp = sub.add_parser("simulate", help="Monte Carlo value of a payout strategy")
    common(sp)
    sp.add_argument("--strategy", required=True, help="barrier:a=V | threshold:b=V,rate=R | none")
    sp.add_argument("--x0", type=float, required=True)
    sp.add_argument("--paths", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--horizon", type=float, default=None)
    sp.add_argument("--mode", choices=("exact", "euler"), default="exact")
    sp.add_argument("--dt", type=float, default=1e-4, help="time step for --mode euler")
    sp.add_argument("--per-path", action="store_true",
                    help=f"also write per-path values (first {PER_PATH_CAP} paths)")

    sp = sub.add_parser("verify", help="run the bundled acceptance suite")
    sp.add_argument("--out", type=Path, default=Path("verify-out"))
    sp.add_argument("--seed", type=int, default=20240601)
    sp.add_argument("--reference", type=Path, default=None,
                    help="compare artifacts with an earlier run instead of replaying the suite")
    sp.add_argument("--no-replay", action="store_true", help="skip the determinism criterion")
    sp.add_argument("--only", type=int, action="append", default=None, metavar="N",
                    help="run only criterion N (repeatable)")
    return p


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _load(spec: str):
    if spec.startswith("gallery:"):
        name = spec.split(":", 1)[1]
        if name not in GALLERY and name != "atomic_claims":
            raise UsageError(f"unknown gallery model {name!r}; choose from {sorted(GALLERY)}")
        cfg = dict(GALLERY[name], name=name) if name in GALLERY else None
        return gallery_model(name), cfg or {"family": "atomic_claims", "name": name}, None
    path = Path(spec)
    if not path.is_file():
        raise UsageError(f"model file {path} not found")
    try:
        model, cfg = load_model_file(path)
    except LevyScaleError as exc:
        raise UsageError(str(exc)) from None
    return model, cfg, hashlib.sha256(path.read_bytes()).hexdigest()


def _tolerances(cfg: dict | None, overrides) -> dict:
    tol = {"hjb_rel": HJB_REL_TOL, "shape": 1e-7, "tie_rel": 1e-9}
    for k, v in (cfg or {}).get("tolerances", {}).items():
        if k not in tol:
            raise UsageError(f"unknown tolerance {k!r}; known: {sorted(tol)}")
        tol[k] = float(v)
    tol.update(dict(overrides))
    return tol


def _versions() -> dict:
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"levyscale": own, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def _fmt(v) -> str:
    return FLOAT_FMT.format(v)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=acceptance._default) + "\n"


def _manifest(cfg: RunConfig, argv, model_cfg, model_hash, artifacts, wall, extra=None) -> dict:
    out = {
        "command": cfg.command,
        "argv": list(argv),
        "model": model_cfg,
        "model_sha256": model_hash,
        "q": cfg.q,
        "seed": cfg.seed,
        "tolerances": cfg.tolerances,
        "threads": thread_count(None),
        "threads_env": THREADS_ENV,
        "versions": _versions(),
        "artifacts": {n: hashlib.sha256((cfg.output_dir / n).read_bytes()).hexdigest() for n in artifacts},
        "wall_time_s": wall,
    }
    out.update(extra or {})
    return out


def _report_table(reports: dict) -> str:
    lines = [f"{'check':<28} {'property':<15} {'interval':<24} {'pass':<5} {'worst':>11} {'at':>10}"]
    for name, r in reports.items():
        iv = f"[{r.interval[0]:.4g}, {r.interval[1]:.4g}]"
        lines.append(f"{name:<28} {r.property:<15} {iv:<24} {str(r.passed):<5} "
                     f"{r.worst_violation:>11.3e} {r.location:>10.4g}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# commands; each returns (exit code, {artifact name: text}, manifest extras)
# --------------------------------------------------------------------------


def _cmd_compute_scale(cfg: RunConfig, model, args):
    scale = compute_scale(model, cfg.q, x_max=args.x_max, n=args.points)
    buf = io.StringIO()
    write_csv(scale, buf)
    print(f"q={cfg.q}  Phi(q)={scale.phi_q:.12g}  x in [{scale.xs[0]:.3g}, {scale.x_max:.6g}]  "
          f"points={scale.xs.size}  inversion error estimate={scale.method.get('error_estimate', 'n/a')}")
    return EXIT_OK, {"scale.csv": buf.getvalue()}, {"method": scale.method}


def _cmd_analyze_shape(cfg: RunConfig, model, args):
    q = cfg.q
    scale = compute_scale(model, q)
    a = find_a_star(scale, model=model, tie_rel=cfg.tolerances["tie_rel"])
    suite = shape_suite(scale, a, tol=cfg.tolerances["shape"]) if q > 0 else {}
    reports: dict[str, ShapeReport] = {"density_log_convex": density_log_convexity(model),
                                       "tail_log_convex": tail_log_convexity(model), **suite}
    sm = smoothness_class(model)
    block = {"q": q, "a_star": a.to_dict(), "smoothness": sm.to_dict(),
             "reports": {k: r.to_dict() for k, r in reports.items()}}
    table = _report_table(reports)
    print(f"a* = {a.value:.10g}  (W' minimum {a.w1_min:.10g})")
    print(f"smoothness class: {sm.cls}  ({sm.reason})")
    print(table)
    return EXIT_OK, {"shape_report.json": _dump(block), "shape_report.txt": table + "\n"}, {}


def _cmd_solve(cfg: RunConfig, model, args):
    if not cfg.q > 0:
        raise UsageError("solve-definetti needs --q > 0")
    sol = solve(model, cfg.q, rel_tol=cfg.tolerances["hjb_rel"])
    q = cfg.q
    value_rows = list(zip(sol.xs, sol.value))
    res_rows = [("interior", x, r, cfg.tolerances["hjb_rel"] * q * sol.value_at(x))
                for x, r in zip(sol.hjb_x_interior, sol.hjb_interior)]
    res_rows += [("exterior", x, r, cfg.tolerances["hjb_rel"] * q * sol.value_at(x))
                 for x, r in zip(sol.hjb_x_exterior, sol.hjb_exterior)]
    summary = sol.summary()
    print(f"a* = {sol.a_star.value:.10g}")
    print(f"verdict: {sol.verdict}")
    print(f"HJB interior max |res|/(q v) = {summary['hjb_interior_max_rel']}")
    print(f"HJB exterior max res/(q v)   = {summary['hjb_exterior_max_rel']}")
    for f in sol.flags:
        print(f"note: {f}")
    vbuf, rbuf = io.StringIO(), io.StringIO()
    _write_rows_buf(vbuf, ["x", "v"], value_rows)
    _write_rows_buf(rbuf, ["region", "x", "residual", "tolerance"], res_rows)
    return sol.exit_code, {"value.csv": vbuf.getvalue(), "residuals.csv": rbuf.getvalue(),
                           "verdict.json": _dump(summary)}, {"verdict": sol.verdict}


def _write_rows_buf(buf, header, rows) -> None:
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(c if isinstance(c, str) else _fmt(c) for c in r) + "\n")


def _cmd_simulate(cfg: RunConfig, model, args):
    try:
        strat = StrategySpec.parse(args.strategy)
    except LevyScaleError as exc:
        raise UsageError(str(exc)) from None
    if not cfg.q > 0:
        raise UsageError("simulate needs --q > 0")
    if args.paths < 2:
        raise UsageError("--paths must be at least 2")
    est = simulate_value(model, strat, cfg.q, args.x0, n_paths=args.paths, seed=args.seed,
                         horizon=args.horizon, mode=args.mode, dt=args.dt, keep_paths=args.per_path)
    block = est.to_dict() | {"x0": args.x0, "q": cfg.q, "mode": args.mode}
    print(f"strategy {est.strategy}: value {est.mean:.8g} ± {est.std_error:.3g} (1 s.e.), "
          f"{est.n_paths} paths, seed {est.seed}, ruin fraction {est.ruin_fraction:.4g}, "
          f"truncation bias ≤ {est.truncation_bias_bound:.2e}" + ("  [approximate]" if est.approximate else ""))
    files = {"estimate.json": _dump(block)}
    if args.per_path:
        buf = io.StringIO()
        k = min(PER_PATH_CAP, est.n_paths)
        _write_rows_buf(buf, ["path", "discounted_dividends", "ruin_time"],
                        ((str(i), v, t) for i, v, t in zip(range(k), est.values[:k], est.ruin_times[:k])))
        files["paths.csv"] = buf.getvalue()
    return EXIT_OK, files, {}


def _cmd_verify(args) -> int:
    out = Path(args.out)
    t0 = time.perf_counter()
    only = set(args.only) if args.only else None
    results = acceptance.run_suite(out, seed=args.seed, reference=args.reference,
                                   replay=not args.no_replay, only=only)
    wall = time.perf_counter() - t0
    print()
    print(acceptance.format_table(results))
    manifest = {
        "command": "verify", "seed": args.seed, "versions": _versions(),
        "threads": thread_count(None), "threads_env": THREADS_ENV,
        "criteria": {r.number: {"passed": r.passed, "runtime_s": r.runtime, "budget_s": r.budget}
                     for r in results},
        "artifacts": acceptance.artifact_digests(out),
        "wall_time_s": wall,
    }
    (out / acceptance.MANIFEST).write_text(_dump(manifest))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY_FAILED


HANDLERS = {"compute-scale": _cmd_compute_scale, "analyze-shape": _cmd_analyze_shape,
            "solve-definetti": _cmd_solve, "simulate": _cmd_simulate}


def run(config: RunConfig, args, argv=()) -> int:
    """Execute one model command; artifacts are written only after success."""
    t0 = time.perf_counter()
    model, model_cfg, model_hash = _load(config.model_path)
    config.tolerances = _tolerances(model_cfg, config.tolerances.items())
    code, files, extra = HANDLERS[config.command](config, model, args)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (config.output_dir / name).write_text(text)
    wall = time.perf_counter() - t0
    man = _manifest(config, argv, model_cfg, model_hash, list(files), wall, extra)
    (config.output_dir / acceptance.MANIFEST).write_text(_dump(man))
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return _cmd_verify(args)
        cfg = RunConfig(command=args.command, model_path=args.model, q=args.q, output_dir=args.out,
                        tolerances=dict(args.tol), seed=getattr(args, "seed", 0))
        return run(cfg, args, argv)
    except UsageError as exc:
        print(f"levyscale: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LevyScaleError as exc:
        if exc.stage == "parse":
            print(f"levyscale: error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        print(f"levyscale: numerical failure [stage={exc.stage or 'unknown'}]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
