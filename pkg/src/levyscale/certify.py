"""Sampled shape certificates: convexity, monotonicity, log-convexity, CM probes.

These are numerical certificates on finite grids, not proofs. A report
``passes`` when every sampled violation is within tolerance; the sign
convention is that violations are positive, so ``worst_violation <= 0``
exactly when the report passes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError

__all__ = [
    "ShapeReport",
    "second_differences",
    "convexity_report",
    "monotonicity_report",
    "log_convexity_report",
    "log_convexity_check",
    "complete_monotonicity_probe",
    "sample_grid",
]

_MAX_LISTED = 20


@dataclass(frozen=True)
class ShapeReport:
    """Outcome of one shape test on one interval.

    Attributes
    ----------
    property : str
        One of ``concave``, ``convex``, ``log_convex``, ``non_increasing``,
        ``non_decreasing``, ``cm_probe``.
    interval : tuple of float
    passed : bool
    worst_violation : float
        Largest violation minus the tolerance (positive means failure).
    location : float
        Abscissa of the worst violation.
    """

    property: str
    interval: tuple[float, float]
    passed: bool
    worst_violation: float
    location: float
    tolerance: float
    n_points: int
    violations: tuple[tuple[float, float], ...] = field(default=(), repr=False)
    note: str = ""

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        return {
            "property": self.property,
            "interval": [float(self.interval[0]), float(self.interval[1])],
            "pass": bool(self.passed),
            "worst_violation": float(self.worst_violation),
            "location": float(self.location),
            "tolerance": float(self.tolerance),
            "n_points": int(self.n_points),
            "note": self.note,
        }

    def row(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        a, b = self.interval
        return (f"{self.property:<15} [{a:.4g}, {b:.4g}]  {status}  "
                f"worst={self.worst_violation:+.3e} at x={self.location:.6g}")


def sample_grid(a: float, b: float, n: int, kind: str = "auto") -> np.ndarray:
    """Geometric grid when ``a > 0`` (and ``kind`` allows it), else linear."""
    if kind == "geometric" or (kind == "auto" and a > 0):
        return np.geomspace(a, b, n)
    return np.linspace(a, b, n)


def _restrict(x, f, interval):
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    if interval is None:
        return x, f, (float(x[0]), float(x[-1]))
    a, b = interval
    m = (x >= a) & (x <= b)
    return x[m], f[m], (float(a), float(b))


def second_differences(x, f) -> np.ndarray:
    """Twice the gap between the chord and ``f`` at interior nodes.

    On a uniform grid this is ``f[i-1] + f[i+1] - 2 f[i]``; on a
    non-uniform grid the chord through the neighbours is used instead.
    Non-negative entries everywhere is the sampled form of convexity.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    w = (x[1:-1] - x[:-2]) / (x[2:] - x[:-2])
    chord = f[:-2] + (f[2:] - f[:-2]) * w
    return 2.0 * (chord - f[1:-1])


def _build(prop, interval, raw, locs, tol, n, note="") -> ShapeReport:
    if raw.size == 0:
        return ShapeReport(prop, interval, True, -tol, float("nan"), tol, n,
                           note=(note + " no interior points").strip())
    k = int(np.argmax(raw))
    worst = float(raw[k]) - tol
    bad = np.nonzero(raw > tol)[0]
    listed = tuple((float(locs[i]), float(raw[i])) for i in bad[:_MAX_LISTED])
    return ShapeReport(prop, interval, worst <= 0.0, worst, float(locs[k]), tol, n,
                       listed, note)


def convexity_report(x, f, kind: str = "convex", *, interval=None, tol: float = 1e-7,
                     strict: bool = False, tol_strict: float = 1e-10,
                     scale: float | None = None) -> ShapeReport:
    """Second-difference test of convexity or concavity on a sampled grid.

    Differences are divided by ``max |f|`` over the interval (or ``scale``)
    so the tolerance is relative. With ``strict=True`` each interior
    difference must also clear ``tol_strict`` in the convex direction.
    """
    if kind not in ("convex", "concave"):
        raise ValueError(f"unknown kind {kind!r}")
    xs, fs, iv = _restrict(x, f, interval)
    if xs.size < 8:
        raise DomainError(f"need at least 8 points in {iv}, got {xs.size}")
    s = scale if scale is not None else float(np.max(np.abs(fs))) or 1.0
    d = second_differences(xs, fs) / s
    raw = -d if kind == "convex" else d
    note = ""
    if strict:
        raw = np.maximum(raw, tol_strict - (d if kind == "convex" else -d) + tol)
        note = f"strict margin {tol_strict:g}"
    return _build(kind, iv, raw, xs[1:-1], tol, xs.size, note)


def monotonicity_report(x, f, kind: str = "non_increasing", *, interval=None,
                        tol: float = 1e-7, scale: float | None = None) -> ShapeReport:
    if kind not in ("non_increasing", "non_decreasing"):
        raise ValueError(f"unknown kind {kind!r}")
    xs, fs, iv = _restrict(x, f, interval)
    if xs.size < 2:
        raise DomainError(f"need at least 2 points in {iv}")
    s = scale if scale is not None else float(np.max(np.abs(fs))) or 1.0
    step = np.diff(fs) / s
    raw = step if kind == "non_increasing" else -step
    return _build(kind, iv, raw, xs[1:], tol, xs.size)


def log_convexity_report(x, f, *, interval=None, tol: float = 1e-7) -> ShapeReport:
    """Convexity of ``log f`` from samples; second differences are not rescaled."""
    xs, fs, iv = _restrict(x, f, interval)
    if np.any(~(fs > 0)):
        i = int(np.argmax(~(fs > 0)))
        raise DomainError(f"log-convexity needs f > 0; f({xs[i]:.6g}) = {fs[i]:.3g}")
    if xs.size < 3:
        raise DomainError("need at least 3 points")
    d = second_differences(xs, np.log(fs))
    return _build("log_convex", iv, -d, xs[1:-1], tol, xs.size)


def log_convexity_check(f: Callable, interval: Sequence[float], n: int = 512, *,
                        tol: float = 1e-7, grid: str = "auto") -> ShapeReport:
    """Sample ``f`` on a (geometric when possible) grid and test log-convexity."""
    a, b = float(interval[0]), float(interval[1])
    xs = sample_grid(a, b, n, grid)
    return log_convexity_report(xs, np.asarray(f(xs), dtype=float), tol=tol)


def complete_monotonicity_probe(f: Callable, interval: Sequence[float], order: int = 8,
                                *, n: int = 64, noise: float = 64.0) -> ShapeReport:
    """Heuristic sign-pattern probe ``(-1)^k Delta_h^k f >= 0`` for ``k <= order``.

    Forward differences on a uniform grid. The allowance for rounding at
    order ``k`` is ``noise * 2^k * eps * max|f|``. Reports the lowest order
    with a violation and the worst location at that order.
    """
    if not 2 <= order <= 8:
        raise ValueError("order must be between 2 and 8")
    a, b = float(interval[0]), float(interval[1])
    xs = np.linspace(a, b, n + order)
    h = xs[1] - xs[0]
    eps = np.finfo(float).eps
    if h ** order < 10 * eps:
        raise DomainError(f"step {h:.3g} underflows at order {order}")
    fs = np.asarray(f(xs), dtype=float)
    fmax = float(np.max(np.abs(fs))) or 1.0
    worst_all = -np.inf
    loc_all = float("nan")
    for k in range(order + 1):
        dk = np.diff(fs, k) * (-1) ** k
        raw = (-dk - noise * 2.0 ** k * eps * fmax) / fmax
        i = int(np.argmax(raw))
        # centre of the stencil is the natural location of a k-th difference
        loc = float(xs[i] + 0.5 * k * h)
        if raw[i] > 0:
            listed = tuple((float(xs[j] + 0.5 * k * h), float(raw[j]))
                           for j in np.nonzero(raw > 0)[0][:_MAX_LISTED])
            return ShapeReport("cm_probe", (a, b), False, float(raw[i]), loc, 0.0,
                               xs.size, listed, note=f"first violation at order {k}")
        if raw[i] > worst_all:
            worst_all, loc_all = float(raw[i]), loc
    return ShapeReport("cm_probe", (a, b), True, worst_all, loc_all, 0.0, xs.size,
                       note=f"sign pattern holds to order {order} (probe, not proof)")
