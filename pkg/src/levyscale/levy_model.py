"""Spectrally negative Lévy processes and their analytic functionals.

A model is a triplet ``(gamma, sigma, Pi)`` with Laplace exponent

    psi(theta) = gamma*theta + sigma^2 theta^2 / 2
                 - int_0^inf (1 - e^{-theta x} - theta x 1{x<1}) Pi(dx),

where ``Pi`` lives on the positive half-line and describes the sizes of
the downward jumps. The small-jump compensation cutoff is fixed at 1, so
``gamma`` is the linear coefficient in exactly that representation.

Jump measures implement closed forms for the Laplace integral at complex
arguments, which the scale-function inversion relies on.
"""

from __future__ import annotations

import math
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.special import gamma as _gamma

from .certify import ShapeReport, complete_monotonicity_probe, log_convexity_check
from .errors import DomainError, ModelError, NumericalIntegrationError, RootFindError
from .special import expint_nu, gauss_legendre, phi1, phi2

__all__ = [
    "JumpMeasure",
    "NoJumps",
    "PiecewiseExponentialDensity",
    "PiecewisePowerDensity",
    "AtomicJumps",
    "LevyModel",
    "LadderExponent",
    "psi",
    "phi_inverse",
    "pi_tail",
    "upsilon_tail",
    "ladder_exponent",
    "ladder",
    "upsilon_q",
    "drift_sign",
    "log_convexity_check",
    "complete_monotonicity_probe",
    "ShapeReport",
]

_QUAD = dict(epsabs=1e-14, epsrel=1e-11, limit=400)


def _g(r, L):
    """``int_0^L e^{-r u} du``; ``L`` may be infinite (then ``Re r > 0``)."""
    r = np.asarray(r)
    if np.isinf(L):
        return 1.0 / r
    return L * phi1(-r * L)


def _h(r, L):
    """``int_0^L u e^{-r u} du``."""
    r = np.asarray(r)
    if np.isinf(L):
        return 1.0 / (r * r)
    w = -r * L
    return L * L * (phi1(w) - phi2(w))


# --------------------------------------------------------------------------
# Jump measures
# --------------------------------------------------------------------------


class JumpMeasure(ABC):
    """Lévy measure on (0, inf) of the (negated) jumps."""

    kind: str = "density"
    finite_activity: bool = True
    #: points where the density (or tail) is not smooth
    knots: tuple[float, ...] = ()

    @abstractmethod
    def density(self, x) -> np.ndarray: ...

    @abstractmethod
    def tail(self, x) -> np.ndarray:
        """``Pi(x, inf)``."""

    @abstractmethod
    def first_moment(self, a: float, b: float) -> float:
        """``int_[a,b) y Pi(dy)`` (may be ``inf``)."""

    @abstractmethod
    def truncated_second_moment(self) -> float:
        """``int (1 ∧ y^2) Pi(dy)``."""

    @abstractmethod
    def laplace_integral(self, theta) -> np.ndarray:
        """``int (1 - e^{-theta y} - theta y 1{y<1}) Pi(dy)`` for ``Re theta >= 0``."""

    @abstractmethod
    def laplace_integral_deriv(self, theta) -> np.ndarray:
        """Derivative of :meth:`laplace_integral` in ``theta``."""

    def bernstein(self, theta) -> np.ndarray:
        """``int (1 - e^{-theta y}) Pi(dy)``; finite only when ``int_0^1 y Pi(dy) < inf``."""
        th = np.asarray(theta)
        return self.laplace_integral(th) + th * self.first_moment(0.0, 1.0)

    def total_mass(self) -> float:
        return float(self.tail(np.array([0.0]))[0]) if self.finite_activity else math.inf

    def exp_weighted_density(self, x, phi: float) -> np.ndarray:
        """``int_0^inf e^{-phi u} pi(x+u) du``."""
        raise DomainError(f"{type(self).__name__} has no density")

    def exp_weighted_tail(self, x, phi: float) -> np.ndarray:
        """``int_0^inf e^{-phi u} Pi(x+u, inf) du`` by adaptive quadrature."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        for i, xi in enumerate(x):
            pts = [k - xi for k in self.knots if k > xi]
            total = 0.0
            lo = 0.0
            for p in pts + [math.inf]:
                if p == math.inf:
                    val, err = integrate.quad(lambda u: math.exp(-phi * u) * float(self.tail(np.array([xi + u]))[0]),
                                              lo, math.inf, **_QUAD)
                else:
                    val, err = integrate.quad(lambda u: math.exp(-phi * u) * float(self.tail(np.array([xi + u]))[0]),
                                              lo, p, **_QUAD)
                    lo = p
                total += val
            out[i] = total
        return out

    def tail_inverse(self, t) -> np.ndarray:
        """Smallest ``y`` with ``Pi(y, inf) <= t``; used for sampling jump sizes."""
        raise DomainError(f"{type(self).__name__} does not support tail inversion")

    def describe(self) -> dict:
        return {"kind": self.kind}


class NoJumps(JumpMeasure):
    """The zero measure."""

    kind = "none"

    def density(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def tail(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def first_moment(self, a, b):
        return 0.0

    def truncated_second_moment(self):
        return 0.0

    def laplace_integral(self, theta):
        return np.zeros_like(np.asarray(theta) * 1.0)

    def laplace_integral_deriv(self, theta):
        return np.zeros_like(np.asarray(theta) * 1.0)

    def exp_weighted_density(self, x, phi):
        return np.zeros_like(np.asarray(x, dtype=float))

    def exp_weighted_tail(self, x, phi):
        return np.zeros_like(np.asarray(x, dtype=float))


class PiecewiseExponentialDensity(JumpMeasure):
    """Density that is ``A_k exp(-r_k (x - b_k))`` on ``[b_k, b_{k+1})``.

    Covers exponential claims, densities glued from exponential pieces and
    log-linear interpolation of tabulated densities. A knot at 1 is always
    present so that no piece straddles the compensation cutoff. The last
    piece extends to infinity and needs a positive rate.
    """

    kind = "density"
    finite_activity = True

    def __init__(self, breaks: Sequence[float], values: Sequence[float], rates: Sequence[float]):
        b = np.asarray(breaks, dtype=float)
        A = np.asarray(values, dtype=float)
        r = np.asarray(rates, dtype=float)
        if not (b.ndim == 1 and b.size == A.size == r.size and b.size >= 1):
            raise ModelError("breaks, values and rates must be 1-d of equal length")
        if b[0] != 0.0 or np.any(np.diff(b) <= 0):
            raise ModelError("breaks must start at 0 and increase strictly")
        if np.any(A < 0) or not np.all(np.isfinite(A)):
            raise ModelError("piece values must be finite and non-negative")
        if r[-1] <= 0:
            raise ModelError("the last piece needs a positive decay rate")
        if not np.any(np.isclose(b, 1.0, rtol=0, atol=1e-15)):
            k = int(np.searchsorted(b, 1.0)) - 1
            b = np.insert(b, k + 1, 1.0)
            A = np.insert(A, k + 1, A[k] * math.exp(-r[k] * (1.0 - b[k])))
            r = np.insert(r, k + 1, r[k])
        self.b = b
        self.A = A
        self.r = r
        self.B = np.append(b[1:], np.inf)
        self.L = self.B - self.b
        self.knots = tuple(float(v) for v in b[1:])
        # tail at each left knot, accumulated from the right
        masses = np.array([A[k] * float(np.real(_g(r[k], self.L[k]))) for k in range(b.size)])
        self._mass = masses
        self._tail_at_b = np.cumsum(masses[::-1])[::-1]
        self._below_one = self.B <= 1.0 + 1e-15

    # constructors -------------------------------------------------------
    @classmethod
    def exponential(cls, rate: float, mu: float) -> "PiecewiseExponentialDensity":
        """Compound-Poisson claims at ``rate`` with Exp(``mu``) sizes."""
        if rate < 0 or mu <= 0:
            raise ModelError("need rate >= 0 and mu > 0")
        return cls([0.0], [rate * mu], [mu])

    @classmethod
    def from_table(cls, x: Sequence[float], p: Sequence[float]) -> "PiecewiseExponentialDensity":
        """Log-linear interpolation of ``(x_i, p_i)``, extended by the end slopes."""
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        if x.size < 2 or x.size != p.size:
            raise ModelError("a density table needs at least two rows")
        if np.any(np.diff(x) <= 0) or x[0] < 0:
            raise ModelError("table abscissae must be non-negative and increasing")
        if np.any(p <= 0):
            raise ModelError("table densities must be positive for log-linear interpolation")
        rates = -np.diff(np.log(p)) / np.diff(x)
        breaks = list(x)
        vals = list(p)
        rr = list(rates) + [rates[-1]]
        if x[0] > 0:
            breaks = [0.0] + breaks
            vals = [p[0] * math.exp(rates[0] * x[0])] + vals
            rr = [rates[0]] + rr
        return cls(breaks, vals, rr)

    # evaluation -----------------------------------------------------------
    def _piece(self, x):
        return np.clip(np.searchsorted(self.b, x, side="right") - 1, 0, self.b.size - 1)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        k = self._piece(x)
        out = self.A[k] * np.exp(-self.r[k] * (x - self.b[k]))
        return np.where(x > 0, out, 0.0)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.maximum(x, 0.0)
        k = self._piece(xc)
        rest = np.append(self._tail_at_b[1:], 0.0)[k]
        ln = self.L[k]
        local = np.empty_like(xc)
        fin = np.isfinite(ln)
        rk = self.r[k]
        head = self.A[k] * np.exp(-rk * (xc - self.b[k]))
        local[fin] = head[fin] * (self.B[k][fin] - xc[fin]) * phi1(-rk[fin] * (self.B[k][fin] - xc[fin]))
        local[~fin] = head[~fin] / rk[~fin]
        return local + rest

    def first_moment(self, a, b):
        total = 0.0
        for k in range(self.b.size):
            s, e = max(a, self.b[k]), min(b, self.B[k])
            if e <= s:
                continue
            head = self.A[k] * math.exp(-self.r[k] * (s - self.b[k]))
            ln = e - s
            total += head * float(np.real(s * _g(self.r[k], ln) + _h(self.r[k], ln)))
        return total

    def truncated_second_moment(self):
        xg, wg = gauss_legendre(32)
        total = float(self.tail(np.array([1.0]))[0])
        for k in range(self.b.size):
            if not self._below_one[k]:
                continue
            y = self.b[k] + self.L[k] * xg
            total += float(np.sum(wg * self.L[k] * y * y * self.density(y)))
        return total

    def laplace_integral(self, theta):
        th = np.asarray(theta)
        out = np.zeros(th.shape, dtype=complex if np.iscomplexobj(th) else float)
        for k in range(self.b.size):
            A, r, b, L = self.A[k], self.r[k], self.b[k], self.L[k]
            term = self._mass[k] - A * np.exp(-th * b) * _g(r + th, L)
            if self._below_one[k]:
                term = term - th * A * (b * _g(r, L) + _h(r, L))
            out = out + term
        return out

    def bernstein(self, theta):
        th = np.asarray(theta)
        out = np.zeros(th.shape, dtype=complex if np.iscomplexobj(th) else float)
        for k in range(self.b.size):
            out = out + self._mass[k] - self.A[k] * np.exp(-th * self.b[k]) * _g(self.r[k] + th, self.L[k])
        return out

    def laplace_integral_deriv(self, theta):
        th = np.asarray(theta)
        out = np.zeros(th.shape, dtype=complex if np.iscomplexobj(th) else float)
        for k in range(self.b.size):
            A, r, b, L = self.A[k], self.r[k], self.b[k], self.L[k]
            rt = r + th
            term = A * np.exp(-th * b) * (b * _g(rt, L) + _h(rt, L))
            if self._below_one[k]:
                term = term - A * (b * _g(r, L) + _h(r, L))
            out = out + term
        return out

    def exp_weighted_density(self, x, phi):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for k in range(self.b.size):
            s = np.maximum(x, self.b[k])
            ln = self.B[k] - s
            live = ln > 0
            if not np.any(live):
                continue
            head = self.A[k] * np.exp(-self.r[k] * (s - self.b[k]) - phi * (s - x))
            if np.isinf(self.B[k]):
                piece = head / (self.r[k] + phi)
            else:
                lnc = np.where(live, ln, 0.0)
                piece = head * lnc * phi1(-(self.r[k] + phi) * lnc)
            out += np.where(live, piece, 0.0)
        return out

    def exp_weighted_tail(self, x, phi):
        # Pi-bar on a piece is T_{k+1} + A e^{-r(y-b)} g(r, B-y); integrate both
        # parts against e^{-phi (y-x)} in closed form or by short GL panels.
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        xg, wg = gauss_legendre(24)
        t_next = np.append(self._tail_at_b[1:], 0.0)
        for k in range(self.b.size):
            s = np.maximum(x, self.b[k])
            ln = self.B[k] - s
            live = ln > 0
            if not np.any(live):
                continue
            decay = np.exp(-phi * (s - x))
            r = self.r[k]
            head = self.A[k] * np.exp(-r * (s - self.b[k]))
            if np.isinf(self.B[k]):
                part1 = t_next[k] * (1.0 / phi if phi > 0 else 0.0)
                part2 = head / (r * (r + phi))
                val = decay * (part1 + part2)
            else:
                lnc = np.where(live, ln, 0.0)
                part1 = t_next[k] * lnc * phi1(-phi * lnc)
                # int_0^ln e^{-r w} w phi1(-phi w) dw on sub-panels
                npan = int(max(1, math.ceil(float(np.max(lnc)) * (abs(r) + phi) / 8.0)))
                acc = np.zeros_like(lnc)
                for j in range(npan):
                    lo = lnc * j / npan
                    wd = lnc / npan
                    w = lo[:, None] + wd[:, None] * xg[None, :]
                    f = np.exp(-r * w) * w * phi1(-phi * w)
                    acc += wd * (f @ wg)
                val = decay * (part1 + head * acc)
            out += np.where(live, val, 0.0)
        return out

    def tail_inverse(self, t):
        t = np.asarray(t, dtype=float)
        tb = self._tail_at_b
        # piece k satisfies tb[k+1] < t <= tb[k]
        k = np.clip(np.searchsorted(-tb, -t, side="left") - 1, 0, tb.size - 1)
        used = tb[k] - t
        A, r = self.A[k], self.r[k]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(r != 0, -np.log1p(-used * r / A) / np.where(r != 0, r, 1.0), used / A)
        return self.b[k] + s

    def describe(self):
        return {"kind": "piecewise_exponential", "breaks": self.b.tolist(),
                "values": self.A.tolist(), "rates": self.r.tolist()}


class PiecewisePowerDensity(JumpMeasure):
    """``c x^{-1-lam1}`` on (0,1) and ``c x^{-1-lam2}`` on [1, inf).

    Infinite activity; unbounded variation when ``lam1 > 1``. Neither
    exponent may be an integer (the closed forms use ``E_nu`` with
    non-integer order).
    """

    kind = "density"
    finite_activity = False
    knots = (1.0,)

    def __init__(self, lam1: float, lam2: float, scale: float = 1.0):
        if not (0 < lam1 < 2) or float(lam1).is_integer():
            raise ModelError("lam1 must lie in (0,2) and differ from 1")
        if lam2 <= 0 or float(lam2).is_integer():
            raise ModelError("lam2 must be positive and non-integer")
        if scale <= 0:
            raise ModelError("scale must be positive")
        self.lam1, self.lam2, self.c = float(lam1), float(lam2), float(scale)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            out = self.c * np.where(x < 1.0, x ** (-1.0 - self.lam1), x ** (-1.0 - self.lam2))
        return np.where(x > 0, out, 0.0)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        l1, l2, c = self.lam1, self.lam2, self.c
        with np.errstate(divide="ignore"):
            small = c * ((x ** -l1 - 1.0) / l1 + 1.0 / l2)
            large = c * x ** -l2 / l2
        return np.where(x < 1.0, small, large)

    def first_moment(self, a, b):
        total = 0.0
        for lo, hi, lam in ((a, min(b, 1.0), self.lam1), (max(a, 1.0), b, self.lam2)):
            if hi <= lo:
                continue
            p = 1.0 - lam
            if (lo == 0.0 and p <= 0) or (math.isinf(hi) and p >= 0):
                return math.inf
            top = 0.0 if math.isinf(hi) else hi ** p
            bot = 0.0 if lo == 0.0 else lo ** p
            total += self.c * (top - bot) / p
        return total

    def truncated_second_moment(self):
        return self.c / (2.0 - self.lam1) + self.c / self.lam2

    @staticmethod
    def _series(theta, lam, k0, deriv=False):
        acc = np.zeros_like(theta)
        # sum_{k>=k0} (-theta)^k / (k! (k - lam)), or its theta-derivative
        term = np.ones_like(theta)
        for k in range(1, k0 + 1):
            term = term * (-theta) / k
        for k in range(k0, k0 + 60):
            if deriv:
                acc = acc - k * term / (k - lam)
            else:
                acc = acc + term / (k - lam)
            term = term * (-theta) / (k + 1)
        return acc

    def _split_eval(self, theta, small_fn, large_fn):
        th = np.asarray(theta, dtype=complex)
        flat = th.ravel()
        out = np.empty_like(flat)
        small = np.abs(flat) < 1.5
        if small.any():
            out[small] = small_fn(flat[small])
        if (~small).any():
            out[~small] = large_fn(flat[~small])
        out = self.c * out.reshape(th.shape)
        return out if np.iscomplexobj(theta) else out.real

    def laplace_integral(self, theta):
        l1, l2 = self.lam1, self.lam2

        def small(t):
            tpos = np.where(t == 0, 1.0, t)
            ib = np.where(t == 0, 0.0, -_gamma(-l2) * tpos ** l2 + self._series(t, l2, 1))
            return -self._series(t, l1, 2) + ib

        def large(t):
            ia = -_gamma(-l1) * t ** l1 - 1.0 / l1 + expint_nu(1 + l1, t) + t / (l1 - 1.0)
            return ia + 1.0 / l2 - expint_nu(1 + l2, t)

        return self._split_eval(theta, small, large)

    def laplace_integral_deriv(self, theta):
        l1, l2 = self.lam1, self.lam2
        mean_tail = (1.0 / (l2 - 1.0)) if l2 > 1 else np.inf

        def small(t):
            tpos = np.where(t == 0, 1.0, t)
            # d/dtheta of -sum_{k>=2} (-theta)^k/(k!(k-l1))
            da = np.where(t == 0, 0.0, -self._series(t, l1, 2, deriv=True) / -tpos)
            db = np.where(t == 0, mean_tail, expint_nu(l2, tpos))
            return da + db

        def large(t):
            da = _gamma(1 - l1) * t ** (l1 - 1.0) - expint_nu(l1, t) + 1.0 / (l1 - 1.0)
            return da + expint_nu(l2, t)

        return self._split_eval(theta, small, large)

    def exp_weighted_density(self, x, phi):
        x = np.asarray(x, dtype=float)
        if phi == 0:
            return self.tail(x)
        l1, l2, c = self.lam1, self.lam2, self.c
        xs = np.where(x > 0, x, 1.0)
        big = xs ** -l2 * expint_nu(1 + l2, phi * xs, scaled=True).real
        e1a = expint_nu(1 + l1, np.array([phi]), scaled=True).real[0]
        e1b = expint_nu(1 + l2, np.array([phi]), scaled=True).real[0]
        damp = np.exp(-phi * (1.0 - np.minimum(xs, 1.0)))
        sm = xs ** -l1 * expint_nu(1 + l1, phi * xs, scaled=True).real - damp * (e1a - e1b)
        return c * np.where(xs < 1.0, sm, big)

    def exp_weighted_tail(self, x, phi):
        x = np.asarray(x, dtype=float)
        if phi > 0:
            # integration by parts: (Pi-bar(x) - upsilon(x)) / phi
            return (self.tail(x) - self.exp_weighted_density(x, phi)) / phi
        l1, l2, c = self.lam1, self.lam2, self.c
        if l2 <= 1:
            return np.full_like(x, np.inf)
        far = c * x ** (1 - l2) / (l2 * (l2 - 1))
        near = c * ((1 - x ** (1 - l1)) / ((1 - l1) * l1) - (1 - x) / l1 + (1 - x) / l2
                    + 1 / (l2 * (l2 - 1)))
        return np.where(x < 1, near, far)

    def tail_inverse(self, t):
        t = np.asarray(t, dtype=float)
        l1, l2, c = self.lam1, self.lam2, self.c
        knee = c / l2
        out = np.empty_like(t)
        lo = t <= knee
        out[lo] = (l2 * t[lo] / c) ** (-1.0 / l2)
        out[~lo] = (1.0 + l1 * (t[~lo] / c - 1.0 / l2)) ** (-1.0 / l1)
        return out

    def describe(self):
        return {"kind": "piecewise_power", "lam1": self.lam1, "lam2": self.lam2, "scale": self.c}


class AtomicJumps(JumpMeasure):
    """Finitely many atoms: ``Pi = sum m_i delta_{x_i}``."""

    kind = "finite_activity_atoms"
    finite_activity = True

    def __init__(self, locations: Sequence[float], masses: Sequence[float]):
        loc = np.asarray(locations, dtype=float)
        m = np.asarray(masses, dtype=float)
        if loc.size == 0 or loc.size != m.size:
            raise ModelError("atoms need matching non-empty locations and masses")
        if np.any(loc <= 0) or np.any(m <= 0):
            raise ModelError("atom locations and masses must be positive")
        order = np.argsort(loc)
        self.loc, self.mass = loc[order], m[order]
        self.knots = tuple(float(v) for v in self.loc)

    def density(self, x):
        raise DomainError("atomic jump measure has no density")

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(self.mass * (self.loc > x[..., None]), axis=-1)

    def first_moment(self, a, b):
        sel = (self.loc >= a) & (self.loc < b)
        return float(np.sum(self.loc[sel] * self.mass[sel]))

    def truncated_second_moment(self):
        return float(np.sum(self.mass * np.minimum(1.0, self.loc ** 2)))

    def laplace_integral(self, theta):
        th = np.asarray(theta)[..., None]
        comp = (self.loc < 1.0) * self.loc
        return np.sum(self.mass * (-np.expm1(-th * self.loc) - th * comp), axis=-1)

    def laplace_integral_deriv(self, theta):
        th = np.asarray(theta)[..., None]
        return np.sum(self.mass * self.loc * (np.exp(-th * self.loc) - (self.loc < 1.0)), axis=-1)

    def bernstein(self, theta):
        th = np.asarray(theta)[..., None]
        return np.sum(self.mass * -np.expm1(-th * self.loc), axis=-1)

    def tail_inverse(self, t):
        t = np.asarray(t, dtype=float)
        tb = np.cumsum(self.mass[::-1])[::-1]
        k = np.clip(np.searchsorted(-tb, -t, side="left") - 1, 0, tb.size - 1)
        return self.loc[k]

    def exp_weighted_tail(self, x, phi):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        gap = np.maximum(self.loc - x[:, None], 0.0)
        return np.sum(self.mass * gap * phi1(-phi * gap), axis=1)

    def describe(self):
        return {"kind": "atoms", "locations": self.loc.tolist(), "masses": self.mass.tolist()}


# --------------------------------------------------------------------------
# The process
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LevyModel:
    """Spectrally negative Lévy process with triplet ``(gamma, sigma, jumps)``.

    Parameters
    ----------
    gamma : float
        Linear coefficient of the exponent with compensation cutoff 1.
    sigma : float
        Gaussian coefficient, ``sigma >= 0``.
    jumps : JumpMeasure
    name : str
        Label used in reports and manifests.
    """

    gamma: float
    sigma: float
    jumps: JumpMeasure
    name: str = "model"
    params: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        if not (self.sigma >= 0) or not math.isfinite(self.sigma):
            raise ModelError("sigma must be finite and non-negative")
        if not math.isfinite(self.gamma):
            raise ModelError("gamma must be finite")
        m2 = self.jumps.truncated_second_moment()
        if not math.isfinite(m2):
            raise ModelError("jump measure violates int (1 ∧ x^2) Pi(dx) < inf")
        if self.is_bounded_variation:
            if not self.bv_drift > 0:
                raise ModelError(f"bounded-variation drift must be positive, got {self.bv_drift:.6g}")
        elif self.sigma == 0 and isinstance(self.jumps, NoJumps):
            raise ModelError("degenerate model")

    @classmethod
    def from_bv_drift(cls, delta: float, jumps: JumpMeasure, **kw) -> "LevyModel":
        """Bounded-variation model ``X_t = delta t - S_t``."""
        m1 = jumps.first_moment(0.0, 1.0)
        if not math.isfinite(m1):
            raise ModelError("jumps have infinite variation; no bounded-variation drift exists")
        return cls(gamma=float(delta) - m1, sigma=0.0, jumps=jumps, **kw)

    # structure --------------------------------------------------------------
    @property
    def is_bounded_variation(self) -> bool:
        return self.sigma == 0 and math.isfinite(self.jumps.first_moment(0.0, 1.0))

    @property
    def variation(self) -> str:
        return "bounded" if self.is_bounded_variation else "unbounded"

    @property
    def bv_drift(self) -> float:
        """``delta = gamma + int_0^1 x Pi(dx)``; NaN when of unbounded variation."""
        if not self.is_bounded_variation:
            return math.nan
        return self.gamma + self.jumps.first_moment(0.0, 1.0)

    # exponent -----------------------------------------------------------------
    def psi(self, theta):
        """Laplace exponent; accepts real or complex arrays with ``Re theta >= 0``."""
        th = np.asarray(theta)
        return self.gamma * th + 0.5 * self.sigma ** 2 * th * th - self.jumps.laplace_integral(th)

    def psi_prime(self, theta):
        th = np.asarray(theta)
        return self.gamma + self.sigma ** 2 * th - self.jumps.laplace_integral_deriv(th)

    def drift_sign(self) -> float:
        """``psi'(0+) = gamma - int_[1,inf) x Pi(dx)``; ``-inf`` for an infinite mean."""
        m = self.jumps.first_moment(1.0, math.inf)
        return -math.inf if math.isinf(m) else self.gamma - m

    def _memo(self, key, fn):
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        val = fn()
        with self._lock:
            self._cache[key] = val
        return val

    def phi0(self) -> float:
        """Largest root of ``psi`` on ``[0, inf)``."""
        return self._memo(("phi0",), self._phi0)

    def _psi_s(self, t: float) -> float:
        return float(np.real(self.psi(np.array([t]))[0]))

    def _dpsi_s(self, t: float) -> float:
        return float(np.real(self.psi_prime(np.array([t]))[0]))

    def _phi0(self) -> float:
        if self.drift_sign() >= 0:
            return 0.0
        lo = 1e-14
        hi = 1.0
        for _ in range(200):
            if self._dpsi_s(hi) > 0:
                break
            lo, hi = hi, 2 * hi
        else:
            raise RootFindError("psi' never becomes positive", stage="phi0")
        tmin = optimize.brentq(self._dpsi_s, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
        hi = max(2 * tmin, tmin + 1.0)
        for _ in range(200):
            if self._psi_s(hi) > 0:
                break
            hi *= 2
        else:
            raise RootFindError("psi never becomes positive", stage="phi0")
        return optimize.brentq(self._psi_s, tmin, hi, xtol=1e-15, rtol=1e-15, maxiter=500)

    def phi_inverse(self, q: float) -> float:
        """Largest root ``Phi(q)`` of ``psi(theta) = q``."""
        if not q >= 0:
            raise DomainError("q must be non-negative")
        return self._memo(("Phi", float(q)), lambda: self._phi_inverse(float(q)))

    def _phi_inverse(self, q: float) -> float:
        lo = self.phi0()
        if q == 0:
            return lo
        hi = max(1.0, 2 * lo)
        for _ in range(200):
            if self._psi_s(hi) > q:
                break
            lo, hi = hi, 2 * hi
        else:
            raise RootFindError(f"could not bracket Phi({q})", stage="phi_inverse")
        root = optimize.brentq(lambda t: self._psi_s(t) - q, lo, hi, xtol=1e-15,
                               rtol=1e-15, maxiter=500)
        # one Newton step tightens the last couple of bits
        d = self._dpsi_s(root)
        if d > 0:
            cand = root - (self._psi_s(root) - q) / d
            if abs(self._psi_s(cand) - q) < abs(self._psi_s(root) - q):
                root = cand
        return root

    def describe(self) -> dict:
        return {"name": self.name, "gamma": self.gamma, "sigma": self.sigma,
                "variation": self.variation, "jumps": self.jumps.describe(), "params": dict(self.params)}


# --------------------------------------------------------------------------
# Functional API
# --------------------------------------------------------------------------


def psi(model: LevyModel, theta):
    th = np.asarray(theta)
    if np.any(np.real(th) < 0):
        raise DomainError("psi is evaluated for Re(theta) >= 0 only")
    out = model.psi(th)
    return float(out) if np.ndim(out) == 0 else out


def phi_inverse(model: LevyModel, q: float) -> float:
    return model.phi_inverse(q)


def pi_tail(model: LevyModel, x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("Pi-bar is evaluated for x > 0")
    out = model.jumps.tail(x)
    return float(out) if np.ndim(out) == 0 else out


def drift_sign(model: LevyModel) -> float:
    return model.drift_sign()


def upsilon_q(model: LevyModel, q: float, x):
    """Tail and density of the Lévy measure of the q-killed descending ladder height.

    Returns ``(tail, density)`` with
    ``tail(x) = int_0^inf e^{-Phi(q) u} Pi-bar(x+u) du`` and
    ``density(x) = int_0^inf e^{-Phi(q) u} pi(x+u) du``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("x must be positive")
    if model.jumps.kind not in ("density", "none"):
        raise DomainError("upsilon_q needs a jump density")
    ph = model.phi_inverse(q)
    tail = model.jumps.exp_weighted_tail(np.atleast_1d(x), ph)
    dens = model.jumps.exp_weighted_density(np.atleast_1d(x), ph)
    if np.ndim(x) == 0:
        return float(tail[0]), float(dens[0])
    return tail, dens


def upsilon_tail(model: LevyModel, x):
    """``e^{Phi(0) x} int_x^inf e^{-Phi(0) z} Pi-bar(z) dz``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("x must be positive")
    out = model.jumps.exp_weighted_tail(np.atleast_1d(x), model.phi0())
    return float(out[0]) if np.ndim(x) == 0 else out


def ladder_exponent(model: LevyModel, q: float, theta, *, singular_gap: float = 1e-6):
    """``kappa-hat(q, theta) = (q - psi(theta)) / (Phi(q) - theta)``.

    Within ``singular_gap`` of ``Phi(q)`` the removable singularity is
    replaced by its limit ``psi'(Phi(q))``.
    """
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if np.any(th < 0) or q < 0:
        raise DomainError("need q >= 0 and theta >= 0")
    ph = model.phi_inverse(q)
    gap = ph - th
    near = np.abs(gap) < singular_gap
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (q - np.real(model.psi(th))) / np.where(near, 1.0, gap)
    if np.any(near):
        out = np.where(near, np.real(model.psi_prime(np.full_like(th, max(ph, 0.0)))), out)
    if np.any(out < -1e-9 * np.maximum(1.0, np.abs(out))):
        raise ModelError("ladder exponent came out negative", stage="ladder_exponent")
    return float(out[0]) if np.ndim(theta) == 0 else out


@dataclass(frozen=True)
class LadderExponent:
    """Killing, drift and Lévy measure of the q-killed descending ladder height."""

    q: float
    phi_q: float
    killing: float
    drift: float
    tail_q: Callable = field(repr=False)
    density_q: Callable = field(repr=False)
    finite_activity: bool = True
    knots: tuple = ()

    def jump_part(self, theta: float) -> float:
        """``int_0^inf (1 - e^{-theta x}) upsilon_q(x) dx`` by adaptive quadrature."""
        dens = self.density_q
        f = lambda x: -math.expm1(-theta * x) * float(dens(np.array([x]))[0])
        total = 0.0
        err = 0.0
        lo = 1.0
        if self.finite_activity:
            edges = [0.0] + [k for k in self.knots if k < 1.0] + [1.0]
            for a, b in zip(edges[:-1], edges[1:]):
                v, e = integrate.quad(f, a, b, **_QUAD)
                total, err = total + v, err + e
        else:
            # x = t^2 tames the x^{-1-lam} singularity at the origin
            g = lambda t: 2.0 * t * f(t * t) if t > 0 else 0.0
            v, e = integrate.quad(g, 0.0, 1.0, **_QUAD)
            total, err = total + v, err + e
        edges = [lo] + [k for k in self.knots if k > lo] + [math.inf]
        for a, b in zip(edges[:-1], edges[1:]):
            v, e = integrate.quad(f, a, b, **_QUAD)
            total, err = total + v, err + e
        if err > 1e-8 * max(1.0, abs(total)):
            raise NumericalIntegrationError("ladder jump integral did not converge",
                                            achieved=err, stage="ladder")
        return total

    def __call__(self, theta: float) -> float:
        return self.killing + self.drift * theta + self.jump_part(theta)


def ladder(model: LevyModel, q: float) -> LadderExponent:
    """Build the dual (killing, drift, measure) description of ``kappa-hat(q, .)``."""
    if model.jumps.kind == "finite_activity_atoms":
        raise DomainError("ladder measure density needs a jump density")
    ph = model.phi_inverse(q)
    if q > 0:
        kill = q / ph
    elif ph == 0:
        kill = max(model.drift_sign(), 0.0)
    else:
        kill = 0.0
    return LadderExponent(
        q=q, phi_q=ph, killing=kill, drift=0.5 * model.sigma ** 2,
        tail_q=lambda x: model.jumps.exp_weighted_tail(x, ph),
        density_q=lambda x: model.jumps.exp_weighted_density(x, ph),
        finite_activity=model.jumps.finite_activity,
        knots=tuple(model.jumps.knots),
    )
