"""Monotone metrics through their Morozova-Chentsov functions.

A metric is fixed by an operator monotone decreasing ``g`` with ``g(1) = 1``
and ``g(1/x) = x g(x)``.  On a state with spectral decomposition
``rho = sum_i lam_i |i><i|`` it reads

    gamma_rho(A, B) = sum_ij c(lam_i, lam_j) conj(A_ij) B_ij,   c(x, y) = g(x/y) / y.

Regular metrics also carry the density ``nu`` of the representation
``g(x) = int_0^inf nu(s) / (s + x) ds``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .operators import DensityOperator, as_density, dag, spectral_decompose
from .quadrature import HalfLineQuadrature

DIAG_TOL = 1e-8
SUPPORT_TOL = 1e-12


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MonotoneMetric:
    name: str
    c_offdiag: Callable[[np.ndarray, np.ndarray], np.ndarray]
    g0: float  # g(0+); c(x, 0) = g0 / x
    nu: Callable[[np.ndarray], np.ndarray] | None = None
    regular: bool = False
    param: float | None = None

    def c(self, x, y) -> np.ndarray:
        """Morozova-Chentsov function on arrays of nonnegative eigenvalues."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        out = np.empty(x.shape)
        hi = np.maximum(x, y)
        lo = np.minimum(x, y)
        zero = hi <= 0
        edge = (lo <= 0) & ~zero
        near = (np.abs(x - y) <= DIAG_TOL * hi) & ~zero & ~edge
        gen = ~(zero | edge | near)
        out[zero] = np.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            out[edge] = self.g0 / hi[edge] if np.isfinite(self.g0) else np.inf
        # c is symmetric and smooth, so 2/(x+y) is accurate to O((x-y)^2) here
        out[near] = 2.0 / (x[near] + y[near])
        if gen.any():
            # every built-in c is symmetric; a fixed argument order makes that exact
            out[gen] = self.c_offdiag(hi[gen], lo[gen])
        return out

    def g(self, x) -> np.ndarray:
        return self.c(x, np.ones_like(np.asarray(x, dtype=float)))

    @property
    def label(self) -> str:
        return self.name if self.param is None else f"{self.name}:{self.param:g}"

    def __repr__(self) -> str:
        return f"MonotoneMetric({self.label})"


# ---------------------------------------------------------------------------
# Built-ins


def _c_sld(x, y):
    return 2.0 / (x + y)


def _c_rld(x, y):
    return (1.0 / x + 1.0 / y) / 2.0


def _c_bkm(x, y):
    return np.log1p((x - y) / y) / (x - y)


def _nu_bkm(s):
    return 1.0 / (1.0 + s)


SLD = MonotoneMetric("sld", _c_sld, g0=2.0)
RLD = MonotoneMetric("rld", _c_rld, g0=math.inf)
BKM = MonotoneMetric("bkm", _c_bkm, g0=math.inf, nu=_nu_bkm, regular=True)


def _check_unit_interval(alpha: float, name: str) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise MetricError(f"{name} parameter must lie in (0, 1), got {alpha}")
    return alpha


def alpha_metric(alpha: float) -> MonotoneMetric:
    """g(x) = (x^-a + x^(a-1)) / 2."""
    a = _check_unit_interval(alpha, "alpha")

    def c(x, y):
        return (x ** (-a) * y ** (a - 1) + x ** (a - 1) * y ** (-a)) / 2

    k = math.sin(math.pi * a) / (2 * math.pi)

    def nu(s):
        s = np.asarray(s, dtype=float)
        return k * (s ** (-a) + s ** (a - 1))

    name = "symmetric_inverse" if a == 0.5 else "alpha"
    return MonotoneMetric(name, c, g0=math.inf, nu=nu, regular=True,
                          param=None if a == 0.5 else a)


SYMMETRIC_INVERSE = alpha_metric(0.5)


def wyd_metric(alpha: float) -> MonotoneMetric:
    """g(x) = (1 - x^a)(1 - x^(1-a)) / (a(1-a)(1-x)^2)."""
    a = _check_unit_interval(alpha, "wyd")
    norm = a * (1 - a)

    def c(x, y):
        # with l = log(x/y): (x^a - y^a)(x^(1-a) - y^(1-a)) = y expm1(a l) expm1((1-a) l)
        l = np.log(x) - np.log(y)
        return np.expm1(a * l) * np.expm1((1 - a) * l) / (norm * y * np.expm1(l) ** 2)

    k = math.sin(math.pi * a) / (math.pi * norm)

    def nu(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            small = (s ** a + s ** (1 - a)) / (1 + s) ** 2
            # same expression divided through by s^2, safe for huge s
            large = (s ** (a - 2) + s ** (-1 - a)) / (1 + 1 / s) ** 2
        return k * np.where(s <= 1, small, large)

    return MonotoneMetric("wyd", c, g0=1.0 / norm, nu=nu, regular=True, param=a)


_ALIASES = {
    "sld": lambda: SLD,
    "bures": lambda: SLD,
    "rld": lambda: RLD,
    "bkm": lambda: BKM,
    "sym-inv": lambda: SYMMETRIC_INVERSE,
    "symmetric_inverse": lambda: SYMMETRIC_INVERSE,
    "symmetric-inverse": lambda: SYMMETRIC_INVERSE,
}
_PARAMETRIC = {"alpha": alpha_metric, "wyd": wyd_metric}


def parse_metric(spec: str | MonotoneMetric) -> MonotoneMetric:
    """Metric from a name such as ``bkm``, ``alpha:0.25``, ``wyd:0.3``, ``sld``, ``rld``."""
    if isinstance(spec, MonotoneMetric):
        return spec
    text = str(spec).strip().lower()
    if text in _ALIASES:
        return _ALIASES[text]()
    name, sep, arg = text.partition(":")
    if sep and name in _PARAMETRIC:
        try:
            value = float(arg)
        except ValueError:
            raise MetricError(f"bad parameter in metric spec {spec!r}") from None
        return _PARAMETRIC[name](value)
    raise MetricError(f"unknown metric {spec!r}")


def builtin_metrics() -> list[MonotoneMetric]:
    return [SLD, RLD, BKM, alpha_metric(0.25), SYMMETRIC_INVERSE, alpha_metric(0.75),
            wyd_metric(0.3), wyd_metric(0.5)]


def regular_metrics() -> list[MonotoneMetric]:
    return [m for m in builtin_metrics() if m.regular]


# ---------------------------------------------------------------------------
# Evaluation


def _clean_spectrum(rho: DensityOperator) -> np.ndarray:
    lam = rho.eigenvalues.copy()
    lam[~rho.support_mask] = 0.0
    return lam


def kernel_matrix(m: MonotoneMetric, rho) -> np.ndarray:
    """C_ij = c(lam_i, lam_j) in the eigenbasis of rho."""
    rho = as_density(rho)
    lam = _clean_spectrum(rho)
    return m.c(lam[:, None], lam[None, :])


def metric_eval(m: MonotoneMetric, rho, A, B=None):
    """gamma_rho(A, B); with ``B`` omitted returns the real number gamma_rho(A, A).

    Entries of A outside the support of rho meet an infinite kernel value for
    RLD-type metrics; the result is then ``inf``.
    """
    m = parse_metric(m)
    rho = as_density(rho)
    E = rho.eig
    At = E.to_eigenbasis(A)
    Bt = At if B is None else E.to_eigenbasis(B)
    C = kernel_matrix(m, rho)
    weight = np.conj(At) * Bt
    scale = max(1.0, float(np.max(np.abs(weight), initial=0.0)))
    live = np.abs(weight) > SUPPORT_TOL * SUPPORT_TOL * scale
    if np.any(np.isinf(C[live])):
        return math.inf if B is None else complex(math.inf)
    total = np.sum(C[live] * weight[live])
    return float(total.real) if B is None else complex(total)


def j_apply(m: MonotoneMetric, rho, A) -> np.ndarray:
    """J_rho(A): entrywise multiplication by c in the eigenbasis."""
    m = parse_metric(m)
    rho = as_density(rho)
    rho.require_full_rank()
    E = rho.eig
    return E.from_eigenbasis(kernel_matrix(m, rho) * E.to_eigenbasis(A))


def j_inverse_apply(m: MonotoneMetric, rho, A) -> np.ndarray:
    m = parse_metric(m)
    rho = as_density(rho)
    rho.require_full_rank()
    E = rho.eig
    return E.from_eigenbasis(E.to_eigenbasis(A) / kernel_matrix(m, rho))


def metric_eval_integral(m: MonotoneMetric, rho, A,
                         quad: HalfLineQuadrature | None = None) -> float:
    """gamma_rho(A) from the integral representation against nu(s) ds.

    Uses <A rho^-1/2, (s + Delta_rho)^-1 (A rho^-1/2)>: in the eigenbasis the
    (i, j) entry contributes |A_ij|^2 / lam_j * int nu(s) / (s + lam_i/lam_j) ds.
    """
    m = parse_metric(m)
    if m.nu is None:
        raise MetricError(f"metric {m.label} has no integral representation density")
    quad = quad or HalfLineQuadrature()
    rho = as_density(rho)
    rho.require_full_rank()
    lam = rho.eigenvalues
    At = rho.eig.to_eigenbasis(A)
    w = np.abs(At) ** 2
    cache: dict[float, float] = {}
    total = 0.0
    for i, j in zip(*np.nonzero(w)):
        r = float(lam[i] / lam[j])
        if r not in cache:
            cache[r] = quad.integrate(lambda s, r=r: m.nu(s) / (s + r), knee=r)
        total += w[i, j] / lam[j] * cache[r]
    return float(total)


def _power(M: np.ndarray, p: float) -> np.ndarray:
    E = spectral_decompose(M)
    if E.eigenvalues[0] <= 0:
        raise MetricError("finite-difference step leaves the positive cone; reduce h")
    return (E.eigenvectors * E.eigenvalues ** p) @ dag(E.eigenvectors)


def wyd_hessian_reference(rho, A, B, alpha: float, h: float = 1e-4) -> float:
    """Mixed central difference of tr((rho + sA)^a (rho + tB)^(1-a)) at s = t = 0.

    The raw mixed derivative equals a(1-a) times the WYD metric; the returned
    value is divided by a(1-a) so that it reduces to the classical Fisher
    information for commuting inputs.
    """
    a = _check_unit_interval(alpha, "wyd")
    R = np.asarray(as_density(rho).matrix)
    A, B = np.asarray(A), np.asarray(B)

    def f(s, t):
        return np.trace(_power(R + s * A, a) @ _power(R + t * B, 1 - a)).real

    d2 = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h)
    return float(d2 / (a * (1 - a)))
