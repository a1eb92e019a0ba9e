"""Grid-level certification of shape properties of scale functions.

Covers the barrier level ``a*`` (largest global minimiser of ``W^(q)'``),
concavity/convexity certificates, the smoothness class implied by the
triplet, the conjugate tail ``W'(x) - W'(inf)``, the potential-density
criterion for subordinators and the sup-height tail of excursions away
from the running maximum for bounded-variation processes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

from .certify import (
    ShapeReport,
    convexity_report,
    log_convexity_check,
    log_convexity_report,
    monotonicity_report,
    second_differences,
)
from .errors import DomainError, LocalizationError, PreconditionError
from .levy_model import AtomicJumps, LevyModel, NoJumps, ladder, ladder_exponent, upsilon_q
from .scale_fn import ScaleGrid, compute_scale, evaluate

__all__ = [
    "AStar",
    "find_a_star",
    "convexity_report",
    "monotonicity_report",
    "ShapeReport",
    "density_log_convexity",
    "tail_log_convexity",
    "upsilon_log_convexity",
    "LadderAgreement",
    "ladder_agreement",
    "SmoothnessClass",
    "smoothness_class",
    "ConjugateTail",
    "conjugate_tail",
    "PotentialDensityResult",
    "potential_density_check",
    "excursion_sup_tail",
    "excursion_sup_jump",
    "shape_suite",
    "strict_convexity_report",
    "resolved_limit",
]

TIE_REL = 1e-9
STRICT_MARGIN = 1e-10


@dataclass(frozen=True)
class AStar:
    """Largest global minimiser of ``W^(q)'`` and the surrounding plateau."""

    value: float
    w1_min: float
    plateau: tuple[float, float]
    x_max: float
    extended: int = 0

    def to_dict(self) -> dict:
        return {"value": self.value, "w1_min": self.w1_min, "plateau": list(self.plateau),
                "x_max": self.x_max, "extensions": self.extended}


def _golden(f, a: float, b: float, tol: float = 1e-12, it: int = 200) -> float:
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(it):
        if b - a < tol * max(1.0, abs(a) + abs(b)):
            break
        # ties go right so the search settles on the largest minimiser
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _a_star_on_grid(xs, w1, w2, tie_rel):
    i = int(np.argmin(w1))
    m = float(w1[i])
    tie = tie_rel * abs(m)
    near = np.nonzero(w1 <= m + tie)[0]
    j = int(near[-1])
    left = float(xs[int(near[0])])
    if i == 0 and w1.size > 1 and w1[1] >= w1[0]:
        # minimum at the left end of the grid: W' increasing from 0
        return 0.0, m, (0.0, 0.0), 0
    lo = xs[max(j - 1, 0)]
    hi = xs[min(j + 1, xs.size - 1)]
    sp = CubicHermiteSpline(xs, w1, w2)
    x_ref = _golden(lambda t: float(sp(t)), float(lo), float(hi))
    m_ref = float(sp(x_ref))
    if m_ref > m:
        x_ref, m_ref = float(xs[j]), m
    # the plateau's right edge wins if it still ties with the refined minimum
    right = float(xs[j]) if w1[j] <= m_ref + tie_rel * abs(m_ref) else x_ref
    value = max(x_ref, right)
    return value, min(m_ref, m), (min(left, value), value), j


def find_a_star(scale: ScaleGrid, *, model: LevyModel | None = None, tie_rel: float = TIE_REL,
                margin: float = 0.10, max_extensions: int = 3) -> AStar:
    """Largest global minimiser of ``W^(q)'`` on the grid, refined by golden section.

    If ``W^(q)'(x_max)`` is not at least ``(1 + margin)`` times the minimum
    and ``model`` is given, the grid is recomputed on a doubled range up to
    ``max_extensions`` times.

    Raises
    ------
    LocalizationError
        When the minimum cannot be separated from the right end of the grid.
    """
    ext = 0
    while True:
        value, m, plateau, j = _a_star_on_grid(scale.xs, scale.w1, scale.w2, tie_rel)
        clear = scale.w1[-1] >= m + margin * abs(m) and j < scale.xs.size - 2
        if clear:
            return AStar(value, m, plateau, scale.x_max, ext)
        if model is None or ext >= max_extensions:
            raise LocalizationError(
                f"minimum of W'(x) not separated from x_max={scale.x_max:.4g}", stage="find_a_star",
                diagnostics={"argmin": value, "w1_min": m, "w1_end": float(scale.w1[-1])})
        ext += 1
        scale = compute_scale(model, scale.q, x_max=2.0 * scale.x_max, n=scale.xs.size)


# --------------------------------------------------------------------------
# hypotheses on the jump measure
# --------------------------------------------------------------------------

DENSITY_WINDOW = (1e-3, 30.0)


def _window(model: LevyModel, window):
    a, b = window
    dens = model.jumps.density
    # stop before the density underflows
    xs = np.geomspace(a, b, 2048)
    ok = dens(xs) > 1e-280
    return a, float(xs[ok][-1]) if ok.any() else b


def density_log_convexity(model: LevyModel, window=DENSITY_WINDOW, n: int = 512,
                          tol: float = 1e-7) -> ShapeReport:
    """Sampled log-convexity of the jump density; vacuous without jumps."""
    if isinstance(model.jumps, NoJumps):
        return ShapeReport("log_convex", tuple(window), True, -tol, float("nan"), tol, 0,
                           note="no jumps: holds vacuously")
    if isinstance(model.jumps, AtomicJumps):
        return ShapeReport("log_convex", tuple(window), False, math.inf, float(model.jumps.loc[0]),
                           tol, 0, note="atomic jump measure has no density")
    a, b = _window(model, window)
    return log_convexity_check(model.jumps.density, (a, b), n, tol=tol)


def tail_log_convexity(model: LevyModel, window=DENSITY_WINDOW, n: int = 512,
                       tol: float = 1e-7) -> ShapeReport:
    if isinstance(model.jumps, NoJumps):
        return ShapeReport("log_convex", tuple(window), True, -tol, float("nan"), tol, 0,
                           note="no jumps: holds vacuously")
    a, b = _window(model, window) if not isinstance(model.jumps, AtomicJumps) else window
    return log_convexity_check(model.jumps.tail, (a, b), n, tol=tol)


def upsilon_log_convexity(model: LevyModel, q: float, window=DENSITY_WINDOW, n: int = 512,
                          tol: float = 1e-7) -> ShapeReport:
    """Sampled log-convexity of the q-killed ladder-height jump density."""
    if isinstance(model.jumps, NoJumps):
        return ShapeReport("log_convex", tuple(window), True, -tol, float("nan"), tol, 0,
                           note="no jumps: holds vacuously")
    if isinstance(model.jumps, AtomicJumps):
        raise DomainError("the ladder jump density needs a jump density")
    a, b = _window(model, window)
    return log_convexity_check(lambda x: upsilon_q(model, q, x)[1], (a, b), n, tol=tol)


@dataclass(frozen=True)
class LadderAgreement:
    q: float
    thetas: tuple
    closed_form: tuple
    triplet: tuple
    max_rel_diff: float

    def to_dict(self) -> dict:
        return asdict(self)


def ladder_agreement(model: LevyModel, q: float, thetas) -> LadderAgreement:
    """Compare ``(q - psi(theta)) / (Phi(q) - theta)`` with killing + drift + jump integral."""
    lad = ladder(model, q)
    th = [float(t) for t in thetas]
    a = [float(ladder_exponent(model, q, t)) for t in th]
    b = [float(lad(t)) for t in th]
    rel = max(abs(x - y) / max(1.0, abs(y)) for x, y in zip(a, b))
    return LadderAgreement(float(q), tuple(th), tuple(a), tuple(b), rel)


@dataclass(frozen=True)
class SmoothnessClass:
    cls: str
    c1: bool | None
    atoms: tuple = ()
    reason: str = ""

    def to_dict(self) -> dict:
        return {"class": self.cls, "c1": self.c1, "atoms": list(self.atoms), "reason": self.reason}


def smoothness_class(model: LevyModel) -> SmoothnessClass:
    """Regularity of ``W^(q)`` on (0, inf) implied by the triplet.

    Gaussian part with log-convex jump density gives C2; bounded variation
    gives C1 exactly when the tail of the jump measure is continuous (only
    declared atoms count); unbounded variation without Gaussian part and
    with log-convex density gives C1.
    """
    if isinstance(model.jumps, AtomicJumps):
        atoms = tuple(float(v) for v in model.jumps.loc)
        if model.is_bounded_variation:
            return SmoothnessClass("C1_iff_tail_continuous", False, atoms,
                                   "bounded variation; jump tail has atoms")
        return SmoothnessClass("unknown", None, atoms, "atoms with unbounded variation")
    logcvx = density_log_convexity(model).passed
    if model.sigma > 0:
        if logcvx:
            return SmoothnessClass("C2", True, (), "Gaussian part and log-convex jump density")
        return SmoothnessClass("unknown", None, (), "Gaussian part but density not log-convex")
    if model.is_bounded_variation:
        return SmoothnessClass("C1_iff_tail_continuous", True, (), "bounded variation; continuous tail")
    if logcvx:
        return SmoothnessClass("C1", True, (), "unbounded variation, log-convex jump density")
    return SmoothnessClass("unknown", None, (), "no applicable criterion")


# --------------------------------------------------------------------------
# conjugate tail and the potential-density criterion
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConjugateTail:
    xs: np.ndarray
    values: np.ndarray
    reports: tuple
    bias_note: str


def conjugate_tail(scale: ScaleGrid, model: LevyModel | None = None, *,
                   certificate: ShapeReport | None = None, tol: float = 1e-7) -> ConjugateTail:
    """``W'(x) - W'(x_max)`` as a proxy for ``W'(x) - W'(inf)`` at ``q = 0``.

    Requires ``Phi(0) = 0`` and a passing log-convexity certificate for the
    jump tail (computed from ``model`` when not supplied).
    """
    if scale.q != 0 or scale.phi_q != 0:
        raise PreconditionError("conjugate tail needs q = 0 and Phi(0) = 0", stage="conjugate_tail")
    if certificate is None:
        if model is None:
            raise PreconditionError("need a model or a log-convexity certificate", stage="conjugate_tail")
        certificate = tail_log_convexity(model)
    if not certificate.passed:
        raise PreconditionError("jump tail is not certified log-convex", stage="conjugate_tail")
    vals = np.asarray(scale.w1) - scale.w1[-1]
    s = float(np.max(np.abs(scale.w1))) or 1.0
    reps = (monotonicity_report(scale.xs, vals, "non_increasing", tol=tol, scale=s),
            ShapeReport("non_negative", (float(scale.xs[0]), scale.x_max), bool(np.min(vals) >= -tol * s),
                        float(-np.min(vals) / s - tol), float(scale.xs[int(np.argmin(vals))]), tol,
                        int(scale.xs.size)))
    note = (f"W'(inf) replaced by W'(x_max={scale.x_max:.4g}); values carry a bias of "
            f"W'(x_max) - W'(inf) which is not estimated")
    return ConjugateTail(scale.xs, vals, reps, note)


@dataclass(frozen=True)
class PotentialDensityResult:
    hypotheses: tuple
    conclusion: ShapeReport
    xs: np.ndarray = field(repr=False)
    levy_density: np.ndarray = field(repr=False)
    drift: float = 0.0

    @property
    def passed(self) -> bool:
        return all(h.passed for h in self.hypotheses) and self.conclusion.passed


def potential_density_check(xs, w1, w2, *, tol: float = 1e-7) -> PotentialDensityResult:
    """Potential density ``W'`` of a subordinator ``H`` → Lévy density of ``H``.

    The hypotheses (``W'`` non-increasing, ``-W''`` non-increasing and
    log-convex) are tested first. The conjugate ``H*`` has tail
    ``W' - W'(inf)``; the potential density ``u*`` of ``H*`` then solves

        W'(0+) u*(x) + int_0^x W''(x-s) u*(s) ds = -d W''(x),  d = 1/W'(0+),

    and ``-u*'`` is the Lévy density of ``H``, which must be non-increasing.
    ``xs`` must be a uniform grid starting at 0.
    """
    xs = np.asarray(xs, dtype=float)
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    h = xs[1] - xs[0]
    if xs[0] != 0 or not np.allclose(np.diff(xs), h, rtol=1e-9, atol=0):
        raise DomainError("potential_density_check needs a uniform grid starting at 0")
    hyps = [monotonicity_report(xs, w1, "non_increasing", tol=tol),
            monotonicity_report(xs, -w2, "non_increasing", tol=tol)]
    mw2 = -w2
    if np.max(np.abs(mw2)) == 0:
        hyps.append(ShapeReport("log_convex", (0.0, float(xs[-1])), True, -tol, float("nan"), tol,
                                int(xs.size), note="-W'' identically zero"))
    elif np.min(mw2) <= 0:
        i = int(np.argmin(mw2))
        hyps.append(ShapeReport("log_convex", (0.0, float(xs[-1])), False, float(-mw2[i]), float(xs[i]),
                                tol, int(xs.size), note="-W'' not positive"))
    else:
        hyps.append(log_convexity_report(xs, mw2, tol=tol))
    w10 = float(w1[0])
    if not (math.isfinite(w10) and w10 > 0):
        raise DomainError("need a finite positive W'(0+)")
    d = 1.0 / w10
    n = xs.size
    u = np.empty(n)
    u[0] = -d * w2[0] / w10
    # trapezoidal product integration, marching forward
    for k in range(1, n):
        conv = 0.5 * w2[k] * u[0] + np.dot(w2[k - 1:0:-1], u[1:k])
        u[k] = (-d * w2[k] - h * conv) / (w10 + 0.5 * h * w2[0])
    dens = -np.gradient(u, xs)
    concl = monotonicity_report(xs, dens, "non_increasing", tol=max(tol, 1e-6),
                                scale=float(np.max(np.abs(dens))) or 1.0)
    return PotentialDensityResult(tuple(hyps), concl, xs, dens, d)


# --------------------------------------------------------------------------
# sup-height of excursions (bounded variation)
# --------------------------------------------------------------------------


def _w_ratio(scale: ScaleGrid, arg, z):
    wz = evaluate(scale, z)[0]
    return evaluate(scale, np.asarray(arg, dtype=float))[0] / wz


def excursion_sup_tail(model: LevyModel, scale: ScaleGrid, z: float, *, side: str = "right") -> float:
    """Excursion-measure tail of the height of an excursion below the maximum.

    ``side="right"`` gives the mass of ``{sup > z}``:
    ``(1/delta) Pi(z, inf) + (1/delta) int_(0,z] Pi(dx) (1 - W(z-x)/W(z))``;
    ``side="left"`` gives ``{sup >= z}``, which differs only when the jump
    measure has an atom at ``z``.
    """
    if not model.is_bounded_variation:
        raise DomainError("excursion sup-height tail is implemented for bounded variation only")
    if z <= 0:
        raise DomainError("z must be positive")
    if scale.q != 0:
        raise DomainError("needs the 0-scale function")
    delta = model.bv_drift
    J = model.jumps
    if isinstance(J, AtomicJumps):
        if side == "right":
            inside = J.loc <= z
            tail = float(np.sum(J.mass[~inside]))
        else:
            inside = J.loc < z
            tail = float(np.sum(J.mass[~inside]))
        part = float(np.sum(J.mass[inside] * (1.0 - _w_ratio(scale, z - J.loc[inside], z))))
        return (tail + part) / delta
    tail = float(J.tail(np.array([z]))[0])
    wz = evaluate(scale, z)[0]
    f = lambda x: float(J.density(np.array([x]))[0]) * (1.0 - evaluate(scale, z - x)[0] / wz)
    pts = sorted({0.0, z} | {k for k in J.knots if 0 < k < z})
    part = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        part += integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    return (tail + part) / delta


def excursion_sup_jump(model: LevyModel, scale: ScaleGrid, z: float, *, probe: float = 1e-10) -> dict:
    """Size of the atom of the sup-height law at ``z``.

    ``exact`` is the left limit minus the value at ``z`` from the formula;
    ``probe`` evaluates the tail just left and right of ``z`` and is the
    numerical continuity check used for densities.
    """
    eta = probe * max(1.0, z)
    left = excursion_sup_tail(model, scale, z, side="left")
    right = excursion_sup_tail(model, scale, z, side="right")
    a = excursion_sup_tail(model, scale, z - eta, side="right")
    b = excursion_sup_tail(model, scale, z + eta, side="right")
    out = {"z": z, "exact": left - right, "probe": a - b}
    if isinstance(model.jumps, AtomicJumps):
        hit = np.isclose(model.jumps.loc, z, rtol=0, atol=1e-14)
        m = float(np.sum(model.jumps.mass[hit]))
        ratio = scale.w0 / evaluate(scale, z)[0]
        delta = model.bv_drift
        out["atom_mass"] = m
        out["w0_over_wz"] = ratio
        out["formula_one_minus"] = m * ratio / delta
        out["formula_two_minus"] = m * (2.0 - ratio) / delta
    return out


# --------------------------------------------------------------------------
# bundled suite
# --------------------------------------------------------------------------


INVERSION_FLOOR = 1e-10


def resolved_limit(scale: ScaleGrid, rel: float = 1e-3, *, order: int = 0, tol: float = 1e-7) -> float:
    """Largest grid ``x`` where ``u_q`` stands above the amplified inversion floor.

    ``u_q = e^{Phi x} W_Phi'`` inherits the absolute error of ``W_Phi'``
    multiplied by ``e^{Phi x}``. For ``order=0`` the floor must stay below
    ``rel * |u_q|``; for ``order=2`` four times the floor (the noise in a
    second difference) must stay below ``tol * max|u_q|``.
    """
    floor = INVERSION_FLOOR * float(np.max(np.abs(scale.w_tilt1)))
    amp = floor * np.exp(scale.phi_q * scale.xs)
    if order == 0:
        ok = np.abs(scale.u_q) * rel >= amp
    else:
        ok = 4.0 * amp <= tol * float(np.max(np.abs(scale.u_q)))
    if ok.all():
        return scale.x_max
    return float(scale.xs[max(int(np.argmin(ok)) - 1, 0)])


def strict_convexity_report(xs, f, interval, *, margin: float = STRICT_MARGIN) -> ShapeReport:
    """Every second difference must exceed ``margin * |f|`` at its own node."""
    xs = np.asarray(xs, dtype=float)
    f = np.asarray(f, dtype=float)
    sel = (xs >= interval[0]) & (xs <= interval[1])
    xk, fk = xs[sel], f[sel]
    if xk.size < 8:
        raise DomainError(f"need at least 8 points in {interval}, got {xk.size}")
    d = second_differences(xk, fk)
    local = np.abs(fk[1:-1])
    raw = (margin * local - d) / np.where(local > 0, local, 1.0)
    k = int(np.argmax(raw))
    worst = float(raw[k])
    return ShapeReport("convex", (float(interval[0]), float(interval[1])), worst <= 0.0, worst,
                       float(xk[1:-1][k]), margin, int(xk.size), note=f"strict, local margin {margin:g}")


def shape_suite(scale: ScaleGrid, a_star: AStar, *, tol: float = 1e-7, gap: float = 0.05) -> dict:
    """Concavity of ``g_q``, convexity of ``W'`` beyond ``a*``, shape of ``u_q``.

    The ``u_q`` checks stop at :func:`resolved_limit`; the interval in each
    report states what was certified.
    """
    xs = scale.xs
    lo = a_star.value + gap
    top = resolved_limit(scale)
    top2 = resolved_limit(scale, order=2, tol=tol)
    out = {
        "g_q_concave": convexity_report(xs, scale.g_q, "concave", tol=tol),
        "w1_convex_beyond_a_star": convexity_report(xs, scale.w1, "convex", tol=tol,
                                                    interval=(lo, scale.x_max)),
        "w_convex_beyond_a_star": convexity_report(xs, scale.w, "convex", tol=tol,
                                                   interval=(lo, scale.x_max)),
        "w1_strictly_convex_beyond_a_star": strict_convexity_report(xs, scale.w1, (lo, scale.x_max)),
        "w_strictly_convex_beyond_a_star": strict_convexity_report(xs, scale.w, (lo, scale.x_max)),
        "u_q_non_increasing": monotonicity_report(xs, scale.u_q, "non_increasing", tol=tol,
                                                  interval=(xs[0], top)),
        "u_q_convex": convexity_report(xs, scale.u_q, "convex", tol=tol, interval=(xs[0], top2)),
    }
    return out
