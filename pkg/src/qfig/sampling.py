"""Seeded random instances for sweeps (states, tangents, channels with full-rank outputs)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import QuantumChannel, attach_ancilla, random_channel
from .operators import random_density, random_hermitian, random_unitary

DEFAULT_MIX = 0.2


@dataclass(frozen=True)
class Instance:
    rho: np.ndarray
    sigma: np.ndarray
    A: np.ndarray
    phi: QuantumChannel


def full_rank_channel(dim_in: int, rng, dim_out: int | None = None,
                      max_extra_kraus: int = 2) -> QuantumChannel:
    """Random channel whose output on a full-rank input is full rank (dim_out <= dim_in * kraus)."""
    rng = np.random.default_rng(rng)
    if dim_out is None:
        dim_out = int(rng.integers(2, dim_in + 2))
    lo = max(-(-dim_in // dim_out), -(-dim_out // dim_in))
    k = int(rng.integers(lo, lo + max_extra_kraus + 1))
    return random_channel(dim_in, dim_out, k, rng)


def reversible_channel(dim_in: int, rng, ancilla_dim: int = 2) -> QuantumChannel:
    """X -> W (X kron tau) W* for a random full-rank tau and random unitary W."""
    rng = np.random.default_rng(rng)
    tau = random_density(ancilla_dim, rng, mix=0.5)
    W = random_unitary(dim_in * ancilla_dim, rng)
    return attach_ancilla(dim_in, tau, W)


def random_instance(rng, dims=(2, 3, 4), mix: float = DEFAULT_MIX) -> Instance:
    rng = np.random.default_rng(rng)
    d = int(rng.choice(list(dims)))
    return Instance(random_density(d, rng, mix=mix), random_density(d, rng, mix=mix),
                    random_hermitian(d, rng, traceless=True), full_rank_channel(d, rng))
