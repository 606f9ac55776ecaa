"""Quadrature rules shared by the recovery-map and metric integrals."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate


class QuadratureError(ValueError):
    pass


def beta_density(t):
    """Density of the probability measure pi / (2 (cosh(pi t) + 1)) dt."""
    t = np.asarray(t, dtype=float)
    # 1 / (cosh x + 1) = 1 / (2 cosh^2(x/2)); written this way it never overflows
    return np.pi / 4 / np.cosh(np.pi * t / 2) ** 2


@lru_cache(maxsize=64)
def _gl(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(nodes)


def composite_gauss_legendre(a: float, b: float, panels: int, nodes: int):
    """Nodes and weights of a composite Gauss-Legendre rule on [a, b]."""
    if panels < 1 or nodes < 1:
        raise QuadratureError("panels and nodes must be positive")
    x, w = _gl(nodes)
    edges = np.linspace(a, b, panels + 1)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    return t, wt


@dataclass(frozen=True)
class BetaQuadrature:
    """Truncated composite Gauss-Legendre rule for the measure dbeta(t).

    Mass outside |t| <= t_max is about 2 exp(-pi t_max), i.e. < 1e-15 at the
    default cut.
    """

    t_max: float = 12.0
    panels: int = 32
    nodes: int = 8
    weight_tol: float = 1e-8

    def rule(self) -> tuple[np.ndarray, np.ndarray]:
        t, w = composite_gauss_legendre(-self.t_max, self.t_max, self.panels, self.nodes)
        w = w * beta_density(t)
        total = w.sum()
        if abs(total - 1.0) > self.weight_tol:
            raise QuadratureError(
                f"beta quadrature weights sum to {total:.12g}; refine panels/nodes")
        return t, w


@dataclass(frozen=True)
class HalfLineQuadrature:
    """Adaptive integration over (0, inf) through s = exp(x), x real.

    Densities such as s^-a or s^(a-1) turn into exponentially decaying,
    smooth integrands in x, so scipy's adaptive rule reaches near machine
    precision even for small a.  ``knee`` adds a breakpoint at s = knee,
    where integrands of the form nu(s) / (s + r) change slope.
    """

    epsrel: float = 1e-11
    epsabs: float = 0.0
    limit: int = 200
    x_cut: float = 700.0  # exp overflows beyond this; tails there are < exp(-35)

    def integrate(self, f, knee: float | None = None) -> float:
        cut = self.x_cut

        def g(x):
            if abs(x) > cut:
                return 0.0
            s = math.exp(x)
            return float(f(s)) * s

        pts = sorted({0.0} | ({math.log(knee)} if knee and knee > 0 else set()))
        segments = [(-np.inf, pts[0]), *zip(pts[:-1], pts[1:]), (pts[-1], np.inf)]
        total = 0.0
        for lo, hi in segments:
            if lo == hi:
                continue
            val, _ = integrate.quad(g, lo, hi, epsabs=self.epsabs, epsrel=self.epsrel,
                                    limit=self.limit)
            total += val
        return total


def adaptive_integral(f, a: float, b: float, tol: float = 1e-13) -> float:
    """Scalar integral of a smooth function on a finite interval."""
    if a == b:
        return 0.0
    val, _ = integrate.quad(f, a, b, epsabs=tol, epsrel=tol, limit=200)
    return float(val)


def trapezoid(y, x) -> float:
    return float(integrate.trapezoid(np.asarray(y, dtype=float), np.asarray(x, dtype=float)))
