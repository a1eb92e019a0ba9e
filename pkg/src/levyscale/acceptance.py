"""Bundled acceptance suite run by ``levyscale verify``.

Each criterion returns a :class:`CriterionResult` and writes its
deterministic artifacts (CSV and JSON) into the output directory.
Timings live only in the run manifest so that two runs with the same seed
produce byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import json
import math
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .definetti import HJB_REL_TOL, barrier_value, solve
from .gallery import GALLERY, gallery_model
from .scale_fn import FLOAT_FMT, compute_scale, evaluate, laplace_residual, recover_exponent, write_csv
from .shape_analysis import (
    excursion_sup_jump,
    find_a_star,
    ladder_agreement,
    shape_suite,
    upsilon_log_convexity,
)
from .simulation import StrategySpec, compare_strategies, simulate_value

__all__ = ["CriterionResult", "CRITERIA", "run_suite", "compare_artifacts", "format_table"]

QS = (0.0, 0.1, 1.0)
MANIFEST = "manifest.json"


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    metric: float
    tolerance: float
    detail: dict = field(default_factory=dict)
    runtime: float = 0.0
    budget: float | None = None

    def to_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed,
                "metric": self.metric, "tolerance": self.tolerance, "detail": self.detail}

    def line(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        budget = f"/{self.budget:.0f}s" if self.budget else ""
        return (f"[{state}] {self.number:>2} {self.name:<28} metric={self.metric:.3e} "
                f"tol={self.tolerance:.1e} time={self.runtime:.1f}s{budget}")


def _csv_rows(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else FLOAT_FMT.format(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


class _Context:
    """Memoised scale functions and solutions shared across criteria."""

    def __init__(self, out: Path, seed: int, threads: int | None):
        self.out = out
        self.seed = seed
        self.threads = threads
        self.models = {k: gallery_model(k) for k in GALLERY}
        self._scales: dict = {}
        self._solutions: dict = {}

    def scale(self, name, q):
        key = (name, q)
        if key not in self._scales:
            self._scales[key] = compute_scale(self.models[name], q)
        return self._scales[key]

    def solution(self, name, q=0.1):
        key = (name, q)
        if key not in self._solutions:
            self._solutions[key] = solve(self.models[name], q, scale=self.scale(name, q))
        return self._solutions[key]


# --------------------------------------------------------------------------
# criteria
# --------------------------------------------------------------------------


def c1_laplace(ctx: _Context) -> CriterionResult:
    tol = 1e-5
    rows, worst = [], 0.0
    for name, m in ctx.models.items():
        for q in QS:
            s = ctx.scale(name, q)
            for k in (1.0, 2.0, 5.0):
                r = laplace_residual(s, m, q, s.phi_q + k)
                rows.append([name, FLOAT_FMT.format(q), r.theta, r.residual, r.tail_bound])
                worst = max(worst, r.residual)
    _csv_rows(ctx.out / "laplace_residuals.csv", ["model", "q", "theta", "residual", "tail_bound"], rows)
    return CriterionResult(1, "laplace_identity", worst <= tol, worst, tol, {"cases": len(rows)}, budget=30)


def bm_closed_form(q: float, x):
    """``W^(q)`` for standard Brownian motion: ``2 sinh(sqrt(2q) x) / sqrt(2q)``."""
    x = np.asarray(x, dtype=float)
    if q == 0:
        return 2.0 * x
    r = math.sqrt(2.0 * q)
    return 2.0 * np.sinh(r * x) / r


def cl_closed_form(c: float, lam: float, mu: float, q: float, x):
    """``W^(q)`` for exponential claims: sum of ``e^{r x} / psi'(r)`` over roots of ``psi = q``."""
    x = np.asarray(x, dtype=float)
    # c r^2 + (c mu - lam - q) r - q mu = 0
    b = c * mu - lam - q
    disc = math.sqrt(b * b + 4.0 * c * q * mu)
    roots = ((-b + disc) / (2 * c), (-b - disc) / (2 * c))
    dpsi = lambda r: c - lam * mu / (mu + r) ** 2
    return sum(np.exp(r * x) / dpsi(r) for r in roots)


def c2_closed_forms(ctx: _Context) -> CriterionResult:
    tol = 1e-6
    xs = np.linspace(0.01, 10.0, 512)
    p = GALLERY["cramer_lundberg_exp"]["params"]
    worst, detail, rows = 0.0, {}, []
    for q in (0.1, 1.0):
        cases = (("brownian", bm_closed_form(q, xs)),
                 ("cramer_lundberg_exp", cl_closed_form(p["c"], p["lambda"], p["mu"], q, xs)))
        for name, exact in cases:
            s = compute_scale(ctx.models[name], q, x_max=max(10.0, ctx.scale(name, q).x_max))
            w = evaluate(s, xs)[0]
            rel = np.abs(w - exact) / np.abs(exact)
            detail[f"{name}@q={q}"] = float(rel.max())
            worst = max(worst, float(rel.max()))
            rows.extend([name, FLOAT_FMT.format(q), x, a, b] for x, a, b in zip(xs, w, exact))
    _csv_rows(ctx.out / "closed_form_oracles.csv", ["model", "q", "x", "computed", "exact"], rows)
    return CriterionResult(2, "closed_form_oracles", worst <= tol, worst, tol, detail, budget=10)


def c3_shape(ctx: _Context) -> CriterionResult:
    tol = 1e-7
    q = 0.1
    detail, ok, worst = {}, True, -math.inf
    for name, m in ctx.models.items():
        s = ctx.scale(name, q)
        a = find_a_star(s, model=m)
        suite = shape_suite(s, a, tol=tol)
        detail[name] = {"a_star": a.value, **{k: r.to_dict() for k, r in suite.items()}}
        ok &= all(r.passed for r in suite.values())
        worst = max(worst, *(r.worst_violation for r in suite.values()))
        write_csv(s, ctx.out / f"scale_{name}_q0.1.csv")
    _json(ctx.out / "shape_suite.json", detail)
    return CriterionResult(3, "shape_suite", ok, worst, tol, {k: v["a_star"] for k, v in detail.items()},
                           budget=20)


def c4_ladder(ctx: _Context) -> CriterionResult:
    tol = 1e-6
    detail, worst, ok = {}, 0.0, True
    for name, m in ctx.models.items():
        for q in QS:
            ph = m.phi_inverse(q)
            agree = ladder_agreement(m, q, (0.5, 1.0, ph, 5.0))
            ucx = upsilon_log_convexity(m, q)
            detail[f"{name}@q={q}"] = {"max_rel_diff": agree.max_rel_diff,
                                       "upsilon_log_convex": ucx.to_dict()}
            worst = max(worst, agree.max_rel_diff)
            ok &= ucx.passed
    _json(ctx.out / "ladder_suite.json", detail)
    return CriterionResult(4, "ladder_dual_representation", ok and worst <= tol, worst, tol,
                           {"upsilon_log_convex_all": ok}, budget=20)


def c5_excursion_jump(ctx: _Context) -> CriterionResult:
    tol = 1e-8
    atomic = gallery_model("atomic_claims")
    s = compute_scale(atomic, 0.0, x_max=3.0)
    jump = excursion_sup_jump(atomic, s, 1.0)
    delta = atomic.bv_drift
    stated = jump["atom_mass"] * (2.0 - jump["w0_over_wz"]) / delta
    err_atom = abs(jump["probe"] - stated)
    cont = {}
    for name in ("cramer_lundberg_exp", "piecewise_exp"):
        m = ctx.models[name]
        s0 = ctx.scale(name, 0.0)
        cont[name] = max(abs(float(excursion_sup_jump(m, s0, z)["probe"])) for z in (0.5, 1.0, 2.0))
    err_cont = max(cont.values())
    detail = {"measured_jump": jump["probe"], "stated_formula": stated, "exact_one_minus": jump["exact"],
              "abs_error_vs_stated": err_atom, "continuous_max_jump": cont}
    _json(ctx.out / "excursion_jump.json", detail)
    return CriterionResult(5, "excursion_sup_jump", err_atom <= tol and err_cont <= tol,
                           max(err_atom, err_cont), tol, detail)


def c6_hjb(ctx: _Context) -> CriterionResult:
    q = 0.1
    detail, ok, worst = {}, True, -math.inf
    for name in ("cramer_lundberg_exp", "piecewise_power", "piecewise_exp"):
        sol = ctx.solution(name, q)
        vin = sol.value_at(sol.hjb_x_interior)
        vout = sol.value_at(sol.hjb_x_exterior)
        rin = np.abs(sol.hjb_interior) / (q * vin)
        rout = sol.hjb_exterior / (q * vout)
        m_in = float(rin.max()) if rin.size else 0.0
        m_out = float(rout.max()) if rout.size else -math.inf
        passed = m_in <= HJB_REL_TOL and m_out <= HJB_REL_TOL
        ok &= passed
        worst = max(worst, m_in, m_out)
        detail[name] = {"a_star": sol.a_star.value, "interior_max_rel": m_in, "exterior_max_rel": m_out,
                        "verdict": sol.verdict}
        xs = np.concatenate([sol.hjb_x_interior, sol.hjb_x_exterior])
        res = np.concatenate([sol.hjb_interior, sol.hjb_exterior])
        region = ["interior"] * rin.size + ["exterior"] * rout.size
        _csv_rows(ctx.out / f"hjb_{name}.csv", ["region", "x", "residual", "tolerance"],
                  ([r, x, v, HJB_REL_TOL * q * sol.value_at(x)] for r, x, v in zip(region, xs, res)))
        _csv_rows(ctx.out / f"value_{name}.csv", ["x", "v"], zip(sol.xs, sol.value))
    _json(ctx.out / "hjb_suite.json", detail)
    return CriterionResult(6, "hjb_residuals", ok, worst, HJB_REL_TOL, detail, budget=60)


def c7_monte_carlo(ctx: _Context) -> CriterionResult:
    q, n = 0.1, 200_000
    name = "cramer_lundberg_exp"
    sol = ctx.solution(name, q)
    a = sol.a_star.value
    m = ctx.models[name]
    detail, ok, worst = {}, True, 0.0
    for label, x0 in (("half", 0.5 * a), ("at", a), ("double", 2.0 * a)):
        est = simulate_value(m, StrategySpec.barrier(a), q, x0, n_paths=n, seed=ctx.seed, threads=ctx.threads)
        v = float(barrier_value(sol.scale, a, x0))
        z = abs(est.mean - v) / est.std_error
        rel_se = est.std_error / v
        ok &= z <= 3.0 and rel_se <= 0.01
        worst = max(worst, z)
        detail[label] = {"x0": x0, "analytic": v, **est.to_dict(), "z": z, "se_over_value": rel_se}
    _json(ctx.out / "monte_carlo.json", detail)
    return CriterionResult(7, "monte_carlo_cross_check", ok, worst, 3.0, detail, budget=120)


def dominance_strategies(a_star: float) -> list[StrategySpec]:
    """Reference barrier, 50 alternative barriers and 5 threshold rules."""
    out = [StrategySpec.barrier(a_star)]
    out += [StrategySpec.barrier(float(b)) for b in a_star * np.linspace(0.0, 3.0, 50)]
    out += [StrategySpec.threshold(b * a_star, r) for b, r in
            ((0.0, 0.5), (0.5, 0.8), (1.0, 0.5), (1.0, 2.0), (2.0, 0.9))]
    return out


def c8_dominance(ctx: _Context) -> CriterionResult:
    q, n = 0.1, 50_000
    name = "cramer_lundberg_exp"
    sol = ctx.solution(name, q)
    a = sol.a_star.value
    rows = compare_strategies(ctx.models[name], q, a, dominance_strategies(a), n_paths=n,
                              seed=ctx.seed, threads=ctx.threads)
    alts = rows[1:]
    z = max((r["diff_vs_reference"] / r["diff_std_error"]) if r["diff_std_error"] > 0 else
            (math.inf if r["diff_vs_reference"] > 0 else 0.0) for r in alts)
    beaten = [r["strategy"] for r in alts if r["beats_reference"]]
    _csv_rows(ctx.out / "dominance.csv", ["strategy", "mean", "std_error", "diff", "diff_std_error", "rank"],
              ([r["strategy"], r["mean"], r["std_error"], r["diff_vs_reference"], r["diff_std_error"],
                FLOAT_FMT.format(r["rank"])] for r in rows))
    return CriterionResult(8, "barrier_dominance", not beaten, z, 3.0,
                           {"x0": a, "alternatives": len(alts), "beaten_by": beaten}, budget=300)


def c9_recover(ctx: _Context) -> CriterionResult:
    tol = 1e-6
    thetas = (1.0, 2.0, 5.0)
    rec = recover_exponent(ctx.scale("brownian", 0.0), thetas)
    exact = np.array(thetas) ** 2 / 2
    rel = np.abs(rec.psi_hat - exact) / exact
    detail = {"psi_hat": rec.psi_hat.tolist(), "exact": exact.tolist(), "valid": rec.valid}
    _json(ctx.out / "recover_exponent.json", detail)
    return CriterionResult(9, "exponent_round_trip", float(rel.max()) <= tol, float(rel.max()), tol, detail)


CRITERIA = (c1_laplace, c2_closed_forms, c3_shape, c4_ladder, c5_excursion_jump, c6_hjb,
            c7_monte_carlo, c8_dominance, c9_recover)


# --------------------------------------------------------------------------
# determinism and driver
# --------------------------------------------------------------------------


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def artifact_digests(out: Path) -> dict:
    """SHA-256 of every artifact except the manifest (which carries timings)."""
    return {p.name: _digest(p) for p in sorted(out.iterdir()) if p.is_file() and p.name != MANIFEST}


def compare_artifacts(a: Path, b: Path) -> list[str]:
    """Names of artifacts that differ or exist in only one directory."""
    da, db = artifact_digests(Path(a)), artifact_digests(Path(b))
    return sorted(k for k in set(da) | set(db) if da.get(k) != db.get(k))


def _run_criteria(out: Path, seed: int, threads: int | None, only=None, log=None) -> list[CriterionResult]:
    ctx = _Context(out, seed, threads)
    results = []
    for fn in CRITERIA:
        num = int(fn.__name__[1:].split("_")[0])
        if only and num not in only:
            continue
        t0 = time.perf_counter()
        res = fn(ctx)
        res.runtime = time.perf_counter() - t0
        if res.budget is not None and res.runtime > res.budget:
            res.passed = False
            res.detail["over_budget"] = True
        results.append(res)
        if log:
            log(res.line())
    _json(out / "results.json", [r.to_dict() for r in results])
    return results


def run_suite(out, *, seed: int = 20240601, threads: int | None = None, reference=None,
              replay: bool = True, only=None, log=print) -> list[CriterionResult]:
    """Run the acceptance criteria and write artifacts into ``out``.

    The determinism criterion compares the artifacts against ``reference``
    when given, otherwise against an in-process replay of the whole suite
    into a scratch directory (skipped with ``replay=False``).
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    results = _run_criteria(out, seed, threads, only, log)
    if only and 10 not in only:
        return results
    t0 = time.perf_counter()
    if reference is not None:
        diff = compare_artifacts(out, reference)
        source = "reference"
    elif replay:
        tmp = Path(tempfile.mkdtemp(prefix="levyscale-replay-"))
        try:
            _run_criteria(tmp, seed, threads, only, None)
            diff = compare_artifacts(out, tmp)
        finally:
            shutil.rmtree(tmp, ignore_errors=True)
        source = "replay"
    else:
        return results
    res = CriterionResult(10, "determinism", not diff, float(len(diff)), 0.0,
                          {"compared_with": source, "differing": diff,
                           "artifacts": len(artifact_digests(out))})
    res.runtime = time.perf_counter() - t0
    results.append(res)
    if log:
        log(res.line())
    return results


def format_table(results) -> str:
    lines = [f"{'#':>2}  {'criterion':<28} {'result':<6} {'metric':>10} {'tol':>8} {'time':>8}"]
    for r in results:
        lines.append(f"{r.number:>2}  {r.name:<28} {'PASS' if r.passed else 'FAIL':<6} "
                     f"{r.metric:>10.3e} {r.tolerance:>8.1e} {r.runtime:>7.1f}s")
    n_ok = sum(r.passed for r in results)
    lines.append(f"{n_ok}/{len(results)} criteria passed")
    return "\n".join(lines)
