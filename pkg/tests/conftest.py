"""Shared helpers for building randomized quantum objects in tests."""

from __future__ import annotations

import numpy as np

from qworkstats import (
    DensityMatrix,
    HermitianOperator,
    QuenchSetup,
    UnitaryMatrix,
)


def random_hermitian(rng: np.random.Generator, dim: int, complex_entries: bool = True):
    a = rng.normal(size=(dim, dim))
    if complex_entries:
        a = a + 1j * rng.normal(size=(dim, dim))
    h = 0.5 * (a + a.conj().T)
    return HermitianOperator(entries=h)


def haar_unitary(rng: np.random.Generator, dim: int) -> UnitaryMatrix:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))[np.newaxis, :]
    return UnitaryMatrix(entries=q)


def random_density(rng: np.random.Generator, dim: int, rank: int | None = None) -> DensityMatrix:
    rank = rank or dim
    a = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = a @ a.conj().T
    rho = rho / np.trace(rho).real
    return DensityMatrix(entries=0.5 * (rho + rho.conj().T))


def random_setup(rng: np.random.Generator, dim: int, with_unitary: bool = True) -> QuenchSetup:
    u = haar_unitary(rng, dim) if with_unitary else None
    return QuenchSetup(
        hi=random_hermitian(rng, dim),
        hf=random_hermitian(rng, dim),
        rho=random_density(rng, dim, rank=rng.integers(1, dim + 1)),
        u=u,
    )
