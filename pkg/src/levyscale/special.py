"""Special functions and small quadrature helpers used by the closed forms.

Everything here accepts complex arrays because the Laplace inversion
evaluates the exponent on vertical lines in the complex plane.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import gamma as _gamma

__all__ = ["expint_nu", "phi1", "phi2", "gauss_legendre", "panel_nodes"]

_SERIES_RADIUS = 3.0
_SERIES_TERMS = 72
_CF_MAX_ITER = 4000


def expint_nu(nu: float, z, *, scaled: bool = False) -> np.ndarray:
    """Generalized exponential integral ``E_nu(z) = int_1^inf e^{-zt} t^{-nu} dt``.

    Parameters
    ----------
    nu : float
        Order. Must not be an integer (the power series has a pole there).
    z : array_like
        Complex or real arguments with ``Re z >= 0`` and ``z != 0``.
    scaled : bool
        If True return ``e^z E_nu(z)``, which stays finite for large ``z``.

    Notes
    -----
    Power series ``Gamma(1-nu) z^(nu-1) - sum (-z)^k / (k! (1-nu+k))`` for
    ``|z| < 3``; modified Lentz continued fraction elsewhere.
    """
    if float(nu).is_integer():
        raise ValueError("expint_nu does not support integer orders")
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    z = z.ravel()
    out = np.empty_like(z)
    small = np.abs(z) < _SERIES_RADIUS
    if small.any():
        zs = z[small]
        acc = np.zeros_like(zs)
        term = np.ones_like(zs)
        for k in range(_SERIES_TERMS):
            acc += term / (1.0 - nu + k)
            term = term * (-zs) / (k + 1)
        val = _gamma(1.0 - nu) * zs ** (nu - 1.0) - acc
        out[small] = val * np.exp(zs) if scaled else val
    large = ~small
    if large.any():
        x = z[large]
        b = x + nu
        c = np.full_like(x, 1e300)
        d = 1.0 / b
        h = d.copy()
        res = np.empty_like(x)
        live = np.arange(x.size)
        for i in range(1, _CF_MAX_ITER):
            an = -i * (nu - 1.0 + i)
            b = b + 2.0
            d = 1.0 / (an * d + b)
            c = b + an / c
            delta = c * d
            h = h * delta
            done = np.abs(delta - 1.0) < 4e-16
            if done.any():
                # retire converged entries so the loop only touches slow ones
                res[live[done]] = h[done]
                keep = ~done
                live, b, c, d, h = live[keep], b[keep], c[keep], d[keep], h[keep]
                if live.size == 0:
                    break
        res[live] = h
        out[large] = res if scaled else res * np.exp(-x)
    return out.reshape(shape)


def phi1(z):
    """``(e^z - 1)/z`` with the removable singularity at 0 filled in."""
    z = np.asarray(z, dtype=complex if np.iscomplexobj(z) else float)
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    direct = np.expm1(zs) / zs
    series = 1.0 + z / 2.0 + z * z / 6.0 + z ** 3 / 24.0 + z ** 4 / 120.0
    return np.where(small, series, direct)


def phi2(z):
    """``(e^z - 1 - z)/z^2``, finite at 0 (value 1/2)."""
    z = np.asarray(z, dtype=complex if np.iscomplexobj(z) else float)
    small = np.abs(z) < 0.2
    zs = np.where(small, 1.0, z)
    direct = (np.expm1(zs) - zs) / (zs * zs)
    series = np.zeros_like(z)
    term = np.full_like(z, 0.5)
    for k in range(2, 20):
        series = series + term
        term = term * z / (k + 1)
    return np.where(small, series, direct)


@lru_cache(maxsize=16)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_nodes(edges, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights for consecutive ``edges``."""
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(order)
    lo = edges[:-1, None]
    width = np.diff(edges)[:, None]
    return (lo + width * x[None, :]).ravel(), (width * w[None, :]).ravel()
