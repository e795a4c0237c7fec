"""Seeded random unitaries, states and observables."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .operators import DensityOperator, HermitianOperator, symmetrize


def _dims(dims) -> tuple[int, ...]:
    return (int(dims),) if np.isscalar(dims) else tuple(int(d) for d in dims)


def ginibre(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / math.sqrt(2)


def haar_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    """Haar-distributed unitary from the QR decomposition of a Ginibre matrix."""
    q, r = np.linalg.qr(ginibre(rng, d, d))
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


def random_pure_state(rng: np.random.Generator, dims) -> DensityOperator:
    dims = _dims(dims)
    d = math.prod(dims)
    return DensityOperator.from_vector(haar_unitary(rng, d)[:, 0], dims)


def random_density(rng: np.random.Generator, dims, rank: int | None = None) -> DensityOperator:
    """``A A† / Tr`` for a Ginibre ``A``; full rank unless ``rank`` is given."""
    dims = _dims(dims)
    d = math.prod(dims)
    a = ginibre(rng, d, d if rank is None else rank)
    m = a @ a.conj().T
    return DensityOperator(m / np.real(np.trace(m)), dims)


def random_diagonal_density(rng: np.random.Generator, d: int, floor: float = 0.0) -> DensityOperator:
    """Diagonal state with Dirichlet(1) weights mixed toward uniform by ``floor``."""
    p = rng.dirichlet(np.ones(d))
    p = (1 - floor) * p + floor / d
    return DensityOperator.diagonal(p)


def random_hermitian(rng: np.random.Generator, dims) -> HermitianOperator:
    dims = _dims(dims)
    d = math.prod(dims)
    a = ginibre(rng, d, d)
    return HermitianOperator(a + a.conj().T, dims)


def random_symmetric_density(rng: np.random.Generator, local_dim: int, n: int) -> DensityOperator:
    """A permutation-invariant state on ``n`` factors, built by symmetrizing a random state."""
    return symmetrize(random_density(rng, (local_dim,) * n))


def random_product_pure(rng: np.random.Generator, dims: Sequence[int]) -> DensityOperator:
    psi = np.ones(1, dtype=complex)
    for d in dims:
        psi = np.kron(psi, haar_unitary(rng, d)[:, 0])
    return DensityOperator.from_vector(psi, tuple(dims))


def perturb(rng: np.random.Generator, rho: DensityOperator, scale: float) -> DensityOperator:
    """``(1 - s) ρ + s ω`` for a fresh random state ``ω``; stays inside ``supp`` of full-rank ``τ``."""
    omega = random_density(rng, rho.dims)
    return DensityOperator((1 - scale) * rho.matrix + scale * omega.matrix, rho.dims)
