"""q-scale functions: computation, interpolation, Laplace checks, inverse problem.

``W^(q)`` is obtained from its exponentially tilted version
``W_Phi(x) = e^{-Phi(q) x} W^(q)(x)``, the 0-scale function of the process
with exponent ``psi(theta + Phi(q)) - q``. That process drifts to +inf, so
``W_Phi`` is bounded and its transform ``1/(psi(s+Phi) - q)`` inverts
cleanly. The first derivative comes from a second inversion of
``s/(psi(s+Phi) - q) - W_Phi(0+)`` rather than from differencing.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import product
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicHermiteSpline

from .certify import ShapeReport, convexity_report, log_convexity_report, monotonicity_report
from .errors import DomainError, GridRangeError, InversionError, MarginError, PreconditionError
from .laplace import EulerScheme, euler_combine, euler_nodes, invert_talbot
from .levy_model import AtomicJumps, LevyModel
from .special import gauss_legendre

__all__ = [
    "ScaleGrid",
    "make_grid",
    "compute_scale",
    "evaluate",
    "laplace_residual",
    "LaplaceResidual",
    "recover_exponent",
    "RecoveredExponent",
    "fd_derivative",
    "write_csv",
    "read_csv",
]

X_MIN = 1e-4
X_SPLIT = 0.1


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScaleGrid:
    """Tabulated ``W^(q)`` with first and second derivatives.

    ``w_tilt`` and ``w_tilt1`` hold ``W_Phi`` and its derivative; ``w0`` is
    ``W^(q)(0+)``. Arrays are read-only so a grid can be shared freely.
    """

    q: float
    phi_q: float
    xs: np.ndarray
    w: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    u_q: np.ndarray
    w_tilt: np.ndarray
    w_tilt1: np.ndarray
    w0: float
    method: dict = field(default_factory=dict)
    kinks: tuple = ()

    def __post_init__(self):
        for name in ("xs", "w", "w1", "w2", "u_q", "w_tilt", "w_tilt1"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def x_max(self) -> float:
        return float(self.xs[-1])

    @property
    def g_q(self) -> np.ndarray:
        """``e^{-Phi(q) x} W^(q)(x)`` on the grid."""
        return self.w_tilt

    # interpolants are cheap to rebuild and keeping them off the dataclass
    # keeps the object trivially immutable
    def _spline_w(self):
        return CubicHermiteSpline(self.xs, self.w, self.w1)

    def _spline_w1(self):
        return CubicHermiteSpline(self.xs, self.w1, self.w2)

    def _spline_tilt(self):
        return CubicHermiteSpline(self.xs, self.w_tilt, self.w_tilt1)

    def near_zero(self, x):
        """``(W, W')`` on ``(0, xs[0]]`` from a power-law fit anchored at ``xs[0]``."""
        x = np.asarray(x, dtype=float)
        x0, wx0, d0 = self.xs[0], self.w[0], self.w1[0]
        rise = wx0 - self.w0
        if rise <= 0:
            return np.full_like(x, wx0), np.full_like(x, d0)
        p = x0 * d0 / rise
        if p > 0.98:
            # smooth start: second-order Taylor expansion about x0
            dx = x - x0
            return wx0 + d0 * dx + 0.5 * self.w2[0] * dx * dx, d0 + self.w2[0] * dx
        c = rise / x0 ** p
        with np.errstate(divide="ignore"):
            return self.w0 + c * x ** p, p * c * x ** (p - 1.0)

    def to_dict(self) -> dict:
        return {"q": self.q, "phi_q": self.phi_q, "x_max": self.x_max, "n": int(self.xs.size),
                "w0": self.w0, "method": dict(self.method), "kinks": list(self.kinks)}


# --------------------------------------------------------------------------
# finite differences
# --------------------------------------------------------------------------


def fd_derivative(x, f, width: int = 5) -> np.ndarray:
    """First derivative on a non-uniform grid with ``width``-point stencils.

    Central stencils in the interior, shifted one-sided stencils at the
    ends; weights come from the local Taylor (Vandermonde) system.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    n = x.size
    half = width // 2
    start = np.clip(np.arange(n) - half, 0, n - width)
    idx = start[:, None] + np.arange(width)[None, :]
    off = x[idx] - x[:, None]
    h = np.max(np.abs(off), axis=1, keepdims=True)
    z = off / h
    V = np.stack([z ** k for k in range(width)], axis=1)  # (n, k, j)
    rhs = np.zeros((n, width))
    rhs[:, 1] = 1.0
    wts = np.linalg.solve(V, rhs[..., None])[..., 0]
    return np.sum(wts * f[idx], axis=1) / h[:, 0]


def _detect_kinks(x, d2, factor: float = 10.0) -> tuple:
    jump = np.abs(np.diff(d2))
    if jump.size < 5:
        return ()
    ref = np.maximum(np.abs(d2[1:]), np.abs(d2[:-1])) + 1e-300
    nb = np.convolve(jump, np.ones(4) / 4.0, mode="same")
    # a jump is a kink when it dwarfs both its neighbours and the local scale
    loc = np.nonzero((jump > factor * nb) & (jump > 1e-3 * ref))[0]
    return tuple(float(0.5 * (x[i] + x[i + 1])) for i in loc)


# --------------------------------------------------------------------------
# computation
# --------------------------------------------------------------------------


def _matched_split(x_max: float, n: int, n_log: int, x_min: float, x_split: float) -> float:
    """Smallest split ``>= x_split`` at which the last log step matches the linear step."""
    def gap(xs_):
        ratio = (xs_ / x_min) ** (1.0 / (n_log - 1))
        return xs_ * (1.0 - 1.0 / ratio) - (x_max - xs_) / (n - n_log)

    if gap(x_split) >= 0 or gap(0.5 * x_max) <= 0:
        return x_split
    return float(optimize.brentq(gap, x_split, 0.5 * x_max, xtol=1e-12))


def make_grid(x_max: float, n: int = 2048, n_log: int = 512, x_min: float = X_MIN,
              x_split: float = X_SPLIT, extra: Sequence[float] = ()) -> np.ndarray:
    """Log-spaced points from ``x_min``, linear ones up to ``x_max``.

    The log part reaches at least ``x_split`` and continues until its step
    matches the linear step, so the spacing has no jump at the junction.
    """
    if x_max <= 2 * x_split:
        raise DomainError("x_max must exceed twice the log/linear split point")
    split = _matched_split(x_max, n, n_log, x_min, x_split)
    left = np.geomspace(x_min, split, n_log)
    right = np.linspace(split, x_max, n - n_log + 1)[1:]
    xs = np.concatenate([left, right])
    if len(extra):
        xs = np.union1d(xs, [e for e in extra if x_min < e < x_max])
    return xs


def _tilted_transforms(model: LevyModel, q: float, phi: float, shift: float, w_start: float):
    def F(s):
        return 1.0 / (model.psi(s + shift) - q)

    def G(s):
        return s / (model.psi(s + shift) - q) - w_start

    return F, G


def _invert_pair(model, q, shift, w_start, xs, scheme):
    """Invert ``1/(psi(s+shift)-q)`` and the transform of its derivative.

    The transforms are evaluated once on the nodes of ``scheme.refined()``;
    the base scheme reuses a subset of them, and the gap between the two
    sums is returned as an error estimate.
    """
    fine = scheme.refined()
    s = euler_nodes(xs, fine)
    val = model.psi(s + shift) - q
    F = 1.0 / val
    if model.is_bounded_variation:
        # s/val - 1/delta without the cancellation at large |s|
        delta = model.bv_drift
        G = (model.jumps.bernstein(s + shift) + (q - delta * shift)) / (delta * val)
    else:
        G = s / val - w_start
    f, fp = euler_combine(F, xs, fine), euler_combine(G, xs, fine)
    err = max(float(np.max(np.abs(f - euler_combine(F, xs, scheme)))),
              float(np.max(np.abs(fp - euler_combine(G, xs, scheme)))))
    return f, fp, err


def _start_value(model: LevyModel) -> float:
    return 1.0 / model.bv_drift if model.is_bounded_variation else 0.0


def _delay_route(model: LevyModel, q: float, xs: np.ndarray):
    """Scale function of drift minus atomic jumps by a delay ODE.

    With ``delta W' = (lambda + q) W(x) - sum_i m_i W(x - x_i)`` and
    ``W(0) = 1/delta`` the solution is piecewise smooth with kinks only at
    the atoms and their sums, which become integration breakpoints.
    """
    jumps: AtomicJumps = model.jumps
    delta = model.bv_drift
    lam = float(np.sum(jumps.mass))
    x_max = float(xs[-1])
    counts = [range(int(x_max // a) + 1) for a in jumps.loc]
    brk = set()
    for combo in product(*counts):
        v = float(np.dot(combo, jumps.loc))
        if 0 < v < x_max:
            brk.add(v)
        if len(brk) > 5000:
            break
    edges = [0.0] + sorted(brk) + [x_max]
    segs: list = []

    def past(y: float) -> float:
        if y < 0:
            return 0.0
        for a, b, sol in reversed(segs):
            if a - 1e-12 <= y <= b + 1e-12:
                return float(sol(y)[0])
        raise RuntimeError("delay lookup outside solved range")

    def make_rhs(seg_a):
        # atoms sit on segment edges, so each delayed term is on or off for the whole segment
        active = [(a, m) for a, m in zip(jumps.loc, jumps.mass) if seg_a >= a - 1e-12]

        def rhs(x, W):
            return [((lam + q) * W[0] - sum(m * past(max(x - a, 0.0)) for a, m in active)) / delta]
        return rhs

    y0 = 1.0 / delta
    for a, b in zip(edges[:-1], edges[1:]):
        sol = integrate.solve_ivp(make_rhs(a), (a, b), [y0], method="DOP853", rtol=1e-13,
                                  atol=1e-300, dense_output=True)
        if not sol.success:
            raise InversionError(f"delay integration failed: {sol.message}", stage="compute_scale")
        segs.append((a, b, sol.sol))
        y0 = float(sol.y[0, -1])

    def W(y):
        y = np.atleast_1d(y)
        return np.array([past(v) for v in y])

    w = W(xs)
    delayed = sum(m * np.where(xs - a >= 0, W(np.maximum(xs - a, 0.0)), 0.0)
                  for a, m in zip(jumps.loc, jumps.mass))
    w1 = ((lam + q) * w - delayed) / delta
    w1_at = lambda y: np.where(y > 0, ((lam + q) * W(np.maximum(y, 0)) - sum(
        m * np.where(y - a >= 0, W(np.maximum(y - a, 0)), 0.0) for a, m in zip(jumps.loc, jumps.mass))) / delta, 0.0)
    delayed1 = sum(m * np.where(xs - a > 0, w1_at(xs - a), 0.0) for a, m in zip(jumps.loc, jumps.mass))
    w2 = ((lam + q) * w1 - delayed1) / delta
    return w, w1, w2, tuple(sorted(brk))


def compute_scale(model: LevyModel, q: float, *, x_max: float | None = None, n: int = 2048,
                  n_log: int = 512, x_min: float = X_MIN, scheme: EulerScheme = EulerScheme(),
                  route: str = "auto", extra_points: Sequence[float] = ()) -> ScaleGrid:
    """Tabulate ``W^(q)``, its derivatives and ``u_q`` on a grid.

    Parameters
    ----------
    model : LevyModel
    q : float
        Killing rate, ``q >= 0``.
    x_max : float, optional
        Right end of the grid. Default ``10 * max(1, a*)`` with ``a*``
        estimated on a coarse pre-pass.
    n, n_log : int
        Total points and how many of them are log-spaced from ``x_min`` (the log
        part reaches at least 0.1 and ends where its step matches the linear one).
    route : {"auto", "tilt", "direct", "delay"}
        ``tilt`` inverts the tilted transform (default for densities),
        ``direct`` inverts ``1/(psi - q)`` on a contour right of ``Phi(q)+1``
        (a cross-check), ``delay`` solves the delay equation available for
        atomic jump measures.

    Raises
    ------
    InversionError
        If the tilted scale function comes out negative or decreasing.
    """
    if not q >= 0:
        raise DomainError("q must be non-negative")
    phi = model.phi_inverse(q)
    if route == "auto":
        route = "delay" if isinstance(model.jumps, AtomicJumps) else "tilt"
    if x_max is None:
        x_max = _default_x_max(model, q, route, scheme)
    extra = tuple(extra_points)
    if route == "delay":
        extra = extra + tuple(k for k in model.jumps.knots)
    xs = make_grid(x_max, n, n_log, x_min, extra=extra)
    w0 = _start_value(model)
    kinks: tuple = ()
    if route == "tilt":
        wt, wt1, err = _invert_pair(model, q, phi, w0, xs, scheme)
        meta = dict(scheme.refined().as_dict(), route="tilt", tilt=phi, error_estimate=err)
    elif route == "direct":
        kappa = phi + 1.0
        h, h1, err = _invert_pair(model, q, kappa, w0, xs, scheme)
        # h = e^{-kappa x} W, so W_Phi = e^{x} h and W_Phi' = e^{x}(h' + h)
        growth = np.exp((kappa - phi) * xs)
        wt, wt1 = growth * h, growth * (h1 + h)
        meta = dict(scheme.refined().as_dict(), route="direct", shift=kappa, error_estimate=err)
    elif route == "delay":
        if not isinstance(model.jumps, AtomicJumps):
            raise DomainError("delay route needs atomic jumps")
        w, w1, w2, kinks = _delay_route(model, q, xs)
        growth = np.exp(-phi * xs)
        wt, wt1 = growth * w, growth * (w1 - phi * w)
        meta = {"algorithm": "delay_ode", "route": "delay", "rtol": 1e-13}
    else:
        raise ValueError(f"unknown route {route!r}")
    _check_inversion(xs, wt, wt1)
    e = np.exp(phi * xs)
    u_q = e * wt1
    if route == "delay":
        w1_full = w1
        w2_full = w2
        w_full = w
    else:
        w_full = e * wt
        w1_full = phi * w_full + u_q
        wt2 = fd_derivative(xs, wt1)
        w2_full = phi * w1_full + e * (phi * wt1 + wt2)
        kinks = _detect_kinks(xs, w2_full) if model.sigma == 0 else ()
    meta.update(grid_n=int(xs.size), x_min=float(xs[0]), x_max=float(xs[-1]), n_log=n_log)
    return ScaleGrid(q=float(q), phi_q=float(phi), xs=xs, w=w_full, w1=w1_full, w2=w2_full,
                     u_q=u_q, w_tilt=wt, w_tilt1=wt1, w0=w0, method=meta, kinks=kinks)


def _check_inversion(xs, wt, wt1):
    scale = float(np.max(np.abs(wt))) or 1.0
    if np.any(~np.isfinite(wt)) or np.any(~np.isfinite(wt1)):
        raise InversionError("inversion produced non-finite values", stage="compute_scale")
    if np.min(wt) < -1e-8 * scale:
        i = int(np.argmin(wt))
        raise InversionError(f"negative scale function at x={xs[i]:.4g}", stage="compute_scale",
                             diagnostics={"x": float(xs[i]), "value": float(wt[i])})
    d = np.diff(wt)
    if np.min(d) < -1e-8 * scale:
        i = int(np.argmin(d))
        raise InversionError(f"non-monotone scale function near x={xs[i]:.4g}", stage="compute_scale",
                             diagnostics={"x": float(xs[i]), "drop": float(d[i])})


def _default_x_max(model, q, route, scheme) -> float:
    if q == 0:
        # the barrier problem needs q > 0; without it there is no a* to scale by
        return 10.0
    pre = compute_scale(model, q, x_max=40.0, n=640, n_log=64, scheme=scheme, route=route)
    i = int(np.argmin(pre.w1))
    # a minimum sitting at the right end of the pre-pass means a* is far out
    a_est = float(pre.xs[i]) if i < pre.xs.size - 1 else 40.0
    return 10.0 * max(1.0, a_est)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------


def evaluate(scale: ScaleGrid, x):
    """``(W, W')`` at ``x``; zero with a NaN derivative for ``x < 0``.

    Hermite cubic interpolation with the stored derivatives between grid
    nodes and a power-law fit on ``(0, xs[0])``.
    """
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xa > scale.x_max * (1 + 1e-12)):
        raise GridRangeError(f"x={float(np.max(xa)):.6g} beyond grid end {scale.x_max:.6g}")
    w = np.zeros_like(xa)
    w1 = np.full_like(xa, np.nan)
    inside = xa >= scale.xs[0]
    if np.any(inside):
        xi = np.minimum(xa[inside], scale.x_max)
        w[inside] = scale._spline_w()(xi)
        w1[inside] = scale._spline_w1()(xi)
    low = (xa >= 0) & ~inside
    if np.any(low):
        lw, lw1 = scale.near_zero(np.maximum(xa[low], 0.0))
        w[low], w1[low] = lw, lw1
        zero = xa[low] == 0
        if np.any(zero):
            w[np.nonzero(low)[0][zero]] = scale.w0
    if np.ndim(x) == 0:
        return float(w[0]), float(w1[0])
    return w, w1


def w_values(scale: ScaleGrid, x) -> np.ndarray:
    """``W^(q)`` at ``x`` with the zero extension to negative arguments."""
    return evaluate(scale, np.asarray(x, dtype=float))[0] if np.ndim(x) else evaluate(scale, x)[0]


def derivative_values(scale: ScaleGrid, x, order: int = 1) -> np.ndarray:
    """``W^(q)'`` or ``W^(q)''`` by interpolation (order 2 uses the spline slope)."""
    x = np.asarray(x, dtype=float)
    if order == 1:
        return evaluate(scale, x)[1]
    sp = scale._spline_w1()
    out = np.zeros_like(x)
    inside = x >= scale.xs[0]
    out[inside] = sp(np.minimum(x[inside], scale.x_max), 1)
    low = (x > 0) & ~inside
    if np.any(low):
        h = 1e-3 * scale.xs[0]
        a = scale.near_zero(x[low] + h)[1]
        b = scale.near_zero(np.maximum(x[low] - h, 1e-300))[1]
        out[low] = (a - b) / (2 * h)
    return out


class LaplaceResidual(NamedTuple):
    residual: float
    integral: float
    tail_estimate: float
    tail_bound: float
    theta: float


def _weighted_integral(xs, f, f1, kappa, head, tail_from_end=True):
    """``int_0^inf e^{-kappa x} f(x) dx`` from Hermite data plus end corrections."""
    sp = CubicHermiteSpline(xs, f, f1)
    xg, wg = gauss_legendre(8)
    lo = xs[:-1, None]
    hw = np.diff(xs)[:, None]
    nodes = (lo + hw * xg[None, :]).ravel()
    weights = (hw * wg[None, :]).ravel()
    body = float(np.sum(weights * np.exp(-kappa * nodes) * sp(nodes)))
    x0 = xs[0]
    # [0, x0] with x = x0 t^2 to absorb any root-type behaviour at the origin
    t = xg
    xx = x0 * t * t
    first = float(np.sum(wg * 2 * x0 * t * np.exp(-kappa * xx) * head(xx)))
    xm = xs[-1]
    lin = math.exp(-kappa * xm) * f1[-1] / kappa ** 2
    tail = math.exp(-kappa * xm) * f[-1] / kappa + lin
    return first + body, tail, abs(lin)


def laplace_residual(scale: ScaleGrid, model: LevyModel, q: float | None = None, theta: float = 1.0,
                     *, margin: float = 0.5) -> LaplaceResidual:
    """``|int_0^inf e^{-theta x} W^(q)(x) dx (psi(theta) - q) - 1|``.

    The integral over the grid uses per-cell Gauss-Legendre on the Hermite
    interpolant of the tilted function. Beyond ``x_max`` the tilted
    function is extrapolated linearly; the linear term is reported as the
    truncation bound.
    """
    q = scale.q if q is None else q
    kappa = theta - scale.phi_q
    if kappa < margin:
        raise MarginError(f"theta={theta:.6g} within {margin} of Phi(q)={scale.phi_q:.6g}")

    def head(x):
        w, _ = scale.near_zero(x)
        return np.exp(-scale.phi_q * x) * w

    body, tail, bound = _weighted_integral(scale.xs, scale.w_tilt, scale.w_tilt1, kappa, head)
    total = body + tail
    val = float(np.real(model.psi(np.array([theta]))[0])) - q
    return LaplaceResidual(abs(total * val - 1.0), total, tail, bound * abs(val), float(theta))


# --------------------------------------------------------------------------
# inverse direction
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RecoveredExponent:
    thetas: np.ndarray
    psi_hat: np.ndarray
    hypotheses: tuple
    probes: tuple
    valid: bool


def w2_floor(xs, error_estimate: float, phi: float = 0.0) -> np.ndarray:
    """Resolution of a finite-difference ``W''`` built from an inverted ``W'``.

    The absolute error of the tilted ``W'`` is amplified by ``e^{phi x}`` and
    divided by the local grid step.
    """
    h = np.diff(xs)
    step = np.minimum(np.r_[h[0], h], np.r_[h, h[-1]])
    return 8.0 * error_estimate * np.exp(phi * xs) / step


def _hypotheses(xs, w, w1, w2, tol=1e-7, floor=None) -> list[ShapeReport]:
    reps = [convexity_report(xs, w, "concave", tol=tol),
            monotonicity_report(xs, w, "non_decreasing", tol=tol),
            monotonicity_report(xs, w1, "non_increasing", tol=tol)]
    mw2 = -np.asarray(w2)
    # values of W'' below its resolution floor carry no shape information
    keep = np.abs(mw2) > (0.0 if floor is None else floor)
    lim = tol * max(1.0, float(np.max(np.abs(w1))))
    if keep.sum() < 3 or float(np.max(np.abs(mw2[keep]))) <= lim:
        # -W'' vanishes identically: both properties hold vacuously
        for prop in ("non_increasing", "log_convex"):
            reps.append(ShapeReport(prop, (float(xs[0]), float(xs[-1])), True, -tol,
                                    float("nan"), tol, int(xs.size), note="-W'' identically zero"))
    else:
        xk, mk = xs[keep], mw2[keep]
        reps.append(monotonicity_report(xk, mk, "non_increasing", tol=tol))
        reps.append(log_convexity_report(xk, np.maximum(mk, 1e-300), tol=1e-6))
    lim = float(xs[0] * w1[0])
    finite = math.isfinite(lim) and lim < 1e6 * max(1.0, float(np.max(np.abs(w))))
    reps.append(ShapeReport("non_increasing", (0.0, float(xs[0])), finite, -1.0 if finite else 1.0,
                            float(xs[0]), 0.0, 1, note=f"x W'(x) at first node = {lim:.6g}"))
    return reps


def recover_exponent(w_table, thetas: Sequence[float], *, w1=None, w2=None, xs=None,
                     check: bool = True) -> RecoveredExponent:
    """Recover ``psi-hat(theta) = 1 / int_0^inf e^{-theta x} W(x) dx``.

    Parameters
    ----------
    w_table : ScaleGrid or array
        Candidate scale function. With an array, ``xs`` and ``w1`` are
        required (``w2`` defaults to a finite-difference estimate).
    thetas : sequence of float

    Raises
    ------
    PreconditionError
        If a hypothesis (concave, non-decreasing, ``W'`` non-increasing,
        ``-W''`` non-increasing and log-convex, ``x W'(x)`` bounded near 0)
        fails on the grid.
    """
    if isinstance(w_table, ScaleGrid):
        xs, w, w1, w2, w0 = w_table.xs, w_table.w, w_table.w1, w_table.w2, w_table.w0
        near = w_table.near_zero
        err = w_table.method.get("error_estimate")
        floor = w2_floor(xs, float(err), w_table.phi_q) if err is not None else None
    else:
        if xs is None or w1 is None:
            raise DomainError("arrays need xs and w1")
        xs = np.asarray(xs, dtype=float)
        w = np.asarray(w_table, dtype=float)
        w1 = np.asarray(w1, dtype=float)
        w2 = fd_derivative(xs, w1) if w2 is None else np.asarray(w2, dtype=float)
        w0 = float(w[0] - xs[0] * w1[0])
        stub = ScaleGrid(0.0, 0.0, xs, w, w1, w2, w1 * 0, w, w1, max(w0, 0.0))
        near = stub.near_zero
        floor = None
    hyps = tuple(_hypotheses(xs, w, w1, w2, floor=floor))
    if check:
        bad = [h for h in hyps if not h.passed]
        if bad:
            desc = "; ".join(f"{h.property} on [{h.interval[0]:.3g}, {h.interval[1]:.3g}] "
                             f"(worst {h.worst_violation:+.2e} at {h.location:.4g})" for h in bad)
            raise PreconditionError("candidate violates a hypothesis: " + desc,
                                    stage="recover_exponent")
    th = np.asarray(thetas, dtype=float)
    out = np.empty_like(th)
    for i, t in enumerate(th):
        body, tail, _ = _weighted_integral(xs, w, w1, t, lambda x: near(x)[0])
        out[i] = 1.0 / (body + tail)
    # validity probes: psi-hat(0+) = 0, psi-hat convex, psi-hat/theta concave
    grid = np.linspace(max(0.05, 3.0 / xs[-1]), max(5.0, float(np.max(th)) if th.size else 5.0), 40)
    ps = np.array([1.0 / sum(_weighted_integral(xs, w, w1, t, lambda x: near(x)[0])[:2]) for t in grid])
    probes = [convexity_report(grid, ps, "convex", tol=1e-6),
              convexity_report(grid, ps / grid, "concave", tol=1e-6)]
    origin = float(np.polyval(np.polyfit(grid[:3], ps[:3], 2), 0.0))
    ok0 = abs(origin) <= 1e-3 * max(1.0, float(np.max(np.abs(ps))))
    probes.append(ShapeReport("non_decreasing", (0.0, float(grid[0])), ok0,
                              abs(origin) - 1e-3, 0.0, 1e-3, 2,
                              note=f"quadratic extrapolation of psi-hat to 0 gives {origin:.3e}"))
    valid = all(p.passed for p in probes) and all(h.passed for h in hyps)
    return RecoveredExponent(th, out, hyps, tuple(probes), valid)


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

FLOAT_FMT = "{:.16e}"


def write_csv(scale: ScaleGrid, path_or_buf) -> None:
    """Columns ``x, W, W1, W2, u_q``; comment header with ``q``, ``Phi(q)``, method."""
    meta = ";".join(f"{k}={v}" for k, v in sorted(scale.method.items()))
    lines = [f"# q={FLOAT_FMT.format(scale.q)}", f"# phi_q={FLOAT_FMT.format(scale.phi_q)}",
             f"# w0={FLOAT_FMT.format(scale.w0)}", f"# method={meta}", "x,W,W1,W2,u_q"]
    for row in zip(scale.xs, scale.w, scale.w1, scale.w2, scale.u_q):
        lines.append(",".join(FLOAT_FMT.format(v) for v in row))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", newline="") as fh:
            fh.write(text)


def read_csv(path) -> ScaleGrid:
    with open(path) as fh:
        text = fh.read()
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k] = v
        else:
            body.append(line)
    rows = list(csv.reader(io.StringIO("\n".join(body))))
    data = np.array(rows[1:], dtype=float)
    q, phi, w0 = float(meta["q"]), float(meta["phi_q"]), float(meta.get("w0", 0.0))
    xs, w, w1, w2, u = data.T
    e = np.exp(-phi * xs)
    return ScaleGrid(q, phi, xs, w, w1, w2, u, e * w, e * u, w0,
                     method={"source": "csv", "header": meta.get("method", "")})
