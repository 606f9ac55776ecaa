"""Divergences between states: chi-square for any monotone metric, relative entropy, D_max, D_2."""
from __future__ import annotations

import math

import numpy as np

from .metrics import SYMMETRIC_INVERSE, MonotoneMetric, metric_eval, parse_metric
from .operators import OperatorError, as_density, dag

SUPPORT_TOL = 1e-10


def outside_support(rho, sigma) -> float:
    """Largest eigenvalue of rho compressed to the kernel of sigma."""
    rho, sigma = as_density(rho), as_density(sigma)
    if rho.dim != sigma.dim:
        raise OperatorError("dimension mismatch")
    K = sigma.eig.eigenvectors[:, ~sigma.support_mask]
    if K.shape[1] == 0:
        return 0.0
    block = dag(K) @ rho.matrix @ K
    return float(np.linalg.eigvalsh((block + dag(block)) / 2)[-1])


def support_contained(rho, sigma, tol: float = SUPPORT_TOL) -> bool:
    return outside_support(rho, sigma) <= tol


def chi2(m: MonotoneMetric | str, rho, sigma) -> float:
    """gamma_sigma(rho - sigma); infinite unless supp(rho) is inside supp(sigma)."""
    m = parse_metric(m)
    rho, sigma = as_density(rho), as_density(sigma)
    if not support_contained(rho, sigma):
        return math.inf
    return metric_eval(m, sigma, rho.matrix - sigma.matrix)


def relative_entropy(rho, sigma) -> float:
    """D(rho||sigma) = tr rho (log rho - log sigma), natural log."""
    rho, sigma = as_density(rho), as_density(sigma)
    if not support_contained(rho, sigma):
        return math.inf
    lam = rho.eigenvalues[rho.support_mask]
    neg_entropy = float(np.sum(lam * np.log(lam)))
    cross = float(np.trace(rho.matrix @ sigma.log()).real)
    return neg_entropy - cross


def dmax(rho, sigma) -> float:
    """log min{C : rho <= C sigma}."""
    rho, sigma = as_density(rho), as_density(sigma)
    if not support_contained(rho, sigma):
        return math.inf
    s = sigma.power(-0.5)
    M = s @ rho.matrix @ s
    return float(math.log(np.linalg.eigvalsh((M + dag(M)) / 2)[-1]))


def sandwiched_d2(rho, sigma) -> float:
    """log tr(rho sigma^-1/2 rho sigma^-1/2) = log(1 + chi2_{1/2}(rho, sigma))."""
    return math.log1p(chi2(SYMMETRIC_INVERSE, rho, sigma))
