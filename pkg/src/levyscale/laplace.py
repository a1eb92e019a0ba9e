"""Numerical Laplace inversion: Euler-accelerated Fourier series and fixed Talbot."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Callable

import numpy as np

__all__ = ["EulerScheme", "euler_nodes", "euler_combine", "invert_euler", "invert_talbot"]


@dataclass(frozen=True)
class EulerScheme:
    """Parameters of the Fourier-series inversion with Euler summation.

    ``A`` sets the aliasing error (about ``e^{-A}``) against round-off
    amplification (about ``eps * e^{A/2}``); ``n`` terms are summed
    directly and ``m`` more are averaged with binomial weights.
    """

    A: float = 24.5
    n: int = 64
    m: int = 8

    @property
    def n_nodes(self) -> int:
        return self.n + self.m + 1

    def refined(self) -> "EulerScheme":
        """Same ``A`` with twice the terms; its nodes contain this scheme's nodes."""
        return EulerScheme(self.A, 2 * self.n, 2 * self.m)

    def as_dict(self) -> dict:
        return {"algorithm": "euler", "A": self.A, "n": self.n, "m": self.m}


def euler_nodes(t, scheme: EulerScheme = EulerScheme()) -> np.ndarray:
    """Abscissae ``s_{ik} = (A + 2 pi i k) / (2 t_i)``, shape ``(len(t), n+m+1)``."""
    t = np.asarray(t, dtype=float)[:, None]
    k = np.arange(scheme.n_nodes)[None, :]
    return (scheme.A + 2j * np.pi * k) / (2.0 * t)


def euler_combine(values: np.ndarray, t, scheme: EulerScheme = EulerScheme()) -> np.ndarray:
    """Turn transform values at :func:`euler_nodes` into ``f(t)``."""
    t = np.asarray(t, dtype=float)
    values = np.asarray(values)[:, :scheme.n_nodes]
    k = np.arange(scheme.n_nodes)
    terms = np.where(k % 2 == 0, 1.0, -1.0)[None, :] * np.real(values)
    terms[:, 0] *= 0.5
    partial = np.cumsum(terms, axis=1)
    w = np.array([comb(scheme.m, j) for j in range(scheme.m + 1)], dtype=float) / 2.0 ** scheme.m
    est = partial[:, scheme.n:scheme.n + scheme.m + 1] @ w
    return np.exp(scheme.A / 2.0) / t * est


def invert_euler(F: Callable, t, scheme: EulerScheme = EulerScheme()) -> np.ndarray:
    """Invert a vectorised transform ``F`` at positive times ``t``."""
    s = euler_nodes(t, scheme)
    return euler_combine(F(s), t, scheme)


def invert_talbot(F: Callable, t, M: int = 32) -> np.ndarray:
    """Fixed-Talbot inversion.

    The contour enters the left half-plane, so ``F`` must continue
    analytically there (true for rational or exponential-polynomial
    transforms, not for transforms with branch cuts).
    """
    t = np.asarray(t, dtype=float)[:, None]
    r = 2.0 * M / (5.0 * t)
    k = np.arange(1, M)[None, :]
    th = k * np.pi / M
    cot = 1.0 / np.tan(th)
    s = r * th * (cot + 1j)
    sig = th + (th * cot - 1.0) * cot
    first = 0.5 * np.real(F(r.astype(complex))) * np.exp(r * t)
    rest = np.real(np.exp(t * s) * F(s) * (1.0 + 1j * sig))
    return (r / M * (first + rest.sum(axis=1, keepdims=True)))[:, 0]
