"""Dense Hermitian linear algebra for finite-dimensional quantum systems.

Eigendecompositions, Gibbs and projector states, dephasing, and the von
Neumann entropy. Everything works in units with hbar = 1; energies are
carried in units of the reference frequency fixed by each model (the gap
for the two-level crossing, the hopping for the lattice chain).

All values are immutable after construction and safe to share across
threads; every operation is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateGroundStateError,
    DimensionMismatchError,
    EigensolverError,
    ValidationError,
)

HERMITICITY_RTOL = 1e-12
ORTHONORMALITY_TOL = 1e-10
RECONSTRUCTION_RTOL = 1e-10
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
# Eigenvalues below this are treated as exact zeros inside entropies, so the
# machine-epsilon negatives produced by diagonalization never reach log().
ENTROPY_EIGENVALUE_FLOOR = 1e-14
GROUND_DEGENERACY_RTOL = 1e-12


def _frozen_array(values, dtype=None) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_square(entries: np.ndarray, what: str) -> None:
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise ValidationError(f"{what} must be a square matrix, got shape {entries.shape}")
    if entries.shape[0] < 1:
        raise ValidationError(f"{what} must have dimension >= 1")


def _check_hermitian(entries: np.ndarray, what: str) -> None:
    deviation = np.abs(entries - entries.conj().T)
    scale = float(np.max(np.abs(entries))) if entries.size else 0.0
    worst = float(np.max(deviation))
    if worst > HERMITICITY_RTOL * max(scale, 1e-300):
        i, j = np.unravel_index(int(np.argmax(deviation)), deviation.shape)
        raise ValidationError(
            f"{what} is not Hermitian: entry ({i},{j}) = {entries[i, j]!r} "
            f"but conj(({j},{i})) = {np.conj(entries[j, i])!r}"
        )


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """A finite-dimensional Hamiltonian or observable."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries)
        _check_square(entries, "operator")
        _check_hermitian(entries, "operator")
        object.__setattr__(self, "entries", _frozen_array(entries))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Sorted eigenvalues with matching orthonormal eigenvectors.

    Column k of ``eigenvectors`` is the eigenvector of ``eigenvalues[k]``.
    The eigenvector phase is fixed so the entry of largest modulus is real
    and positive (ties broken by lowest index), which makes serialized
    output reproducible across runs.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        evals = np.asarray(self.eigenvalues, dtype=float)
        vecs = np.asarray(self.eigenvectors)
        if evals.ndim != 1 or vecs.shape != (evals.size, evals.size):
            raise ValidationError(
                f"decomposition shapes mismatch: {evals.shape} vs {vecs.shape}"
            )
        if np.any(np.diff(evals) < 0):
            raise ValidationError("eigenvalues must be non-decreasing")
        object.__setattr__(self, "eigenvalues", _frozen_array(evals))
        object.__setattr__(self, "eigenvectors", _frozen_array(vecs))

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def spectral_span(self) -> float:
        span = float(self.eigenvalues[-1] - self.eigenvalues[0])
        return span if span > 0 else 1.0

    def validate(self, source: HermitianOperator | None = None) -> None:
        """Check orthonormality and, when the source is given, reconstruction."""
        v = self.eigenvectors
        gram = v.conj().T @ v
        worst = float(np.max(np.abs(gram - np.eye(self.dim))))
        if worst > ORTHONORMALITY_TOL:
            raise ValidationError(f"eigenvectors not orthonormal: residual {worst:g}")
        if source is not None:
            rebuilt = (v * self.eigenvalues) @ v.conj().T
            residual = float(np.max(np.abs(rebuilt - source.entries)))
            if residual > RECONSTRUCTION_RTOL * self.spectral_span:
                raise ValidationError(f"reconstruction residual {residual:g} too large")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A quantum state: Hermitian, unit trace, positive semidefinite."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries)
        _check_square(entries, "density matrix")
        _check_hermitian(entries, "density matrix")
        trace = complex(np.trace(entries)).real
        if abs(trace - 1.0) > TRACE_TOL:
            raise ValidationError(f"density matrix trace {trace!r} differs from 1")
        object.__setattr__(self, "entries", _frozen_array(entries))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def validate(self) -> None:
        """Positivity check (the expensive invariant, so not run at construction)."""
        smallest = float(np.linalg.eigvalsh(self.entries)[0])
        if smallest < -PSD_TOL:
            raise ValidationError(f"density matrix has negative eigenvalue {smallest:g}")

    def purity(self) -> float:
        return float(np.real(np.einsum("ij,ji->", self.entries, self.entries)))


@dataclass(frozen=True, eq=False)
class UnitaryMatrix:
    """A unitary work protocol."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries)
        _check_square(entries, "unitary")
        gram = entries.conj().T @ entries
        worst = float(np.max(np.abs(gram - np.eye(entries.shape[0]))))
        if worst > ORTHONORMALITY_TOL:
            raise ValidationError(f"matrix is not unitary: |U^dag U - I| = {worst:g}")
        object.__setattr__(self, "entries", _frozen_array(entries))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def diagonalize(operator: HermitianOperator) -> SpectralDecomposition:
    """Full eigendecomposition with ascending eigenvalues.

    The deterministic phase convention (largest-modulus entry made real
    positive, ties to lowest index) leaves all transition probabilities
    unchanged while pinning serialized eigenvectors bit-for-bit.
    """
    try:
        evals, vecs = np.linalg.eigh(operator.entries)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"eigensolver failed to converge: {exc}") from exc
    lead_rows = np.argmax(np.abs(vecs), axis=0)
    lead = vecs[lead_rows, np.arange(vecs.shape[1])]
    phases = lead / np.abs(lead)
    vecs = vecs * np.conj(phases)[np.newaxis, :]
    return SpectralDecomposition(eigenvalues=evals, eigenvectors=vecs)


def thermal_state(decomposition: SpectralDecomposition, beta: float) -> DensityMatrix:
    """Gibbs state exp(-beta H)/Z in the given eigenbasis.

    Populations are computed after shifting energies by the ground energy,
    so any beta >= 0 is overflow-safe. ``beta = math.inf`` returns the
    ground-state projector, and raises if the ground level is degenerate.
    """
    if not (beta >= 0):
        raise ValidationError(f"inverse temperature must be >= 0, got {beta!r}")
    evals = decomposition.eigenvalues
    if math.isinf(beta):
        if decomposition.dim > 1:
            gap = float(evals[1] - evals[0])
            if gap <= GROUND_DEGENERACY_RTOL * decomposition.spectral_span:
                raise DegenerateGroundStateError(
                    "ground level is degenerate at beta = inf; select a level "
                    "explicitly with eigenstate_projector"
                )
        return eigenstate_projector(decomposition, 0)
    weights = np.exp(-beta * (evals - evals[0]))
    populations = weights / weights.sum()
    v = decomposition.eigenvectors
    rho = (v * populations) @ v.conj().T
    return DensityMatrix(entries=0.5 * (rho + rho.conj().T))


def eigenstate_projector(decomposition: SpectralDecomposition, level: int) -> DensityMatrix:
    """Rank-1 projector onto eigenlevel ``level``."""
    if not 0 <= level < decomposition.dim:
        raise ValidationError(
            f"level index {level} out of range for dimension {decomposition.dim}"
        )
    vec = decomposition.eigenvectors[:, level]
    return DensityMatrix(entries=np.outer(vec, vec.conj()))


def dephase(rho: DensityMatrix, basis: SpectralDecomposition) -> DensityMatrix:
    """Remove all off-diagonal elements of ``rho`` in the given eigenbasis."""
    if rho.dim != basis.dim:
        raise DimensionMismatchError(
            f"state dimension {rho.dim} does not match basis dimension {basis.dim}"
        )
    v = basis.eigenvectors
    populations = np.real(np.sum(v.conj() * (rho.entries @ v), axis=0))
    out = (v * populations) @ v.conj().T
    return DensityMatrix(entries=0.5 * (out + out.conj().T))


def basis_populations(rho: DensityMatrix, basis: SpectralDecomposition) -> np.ndarray:
    """Diagonal of ``rho`` in the given eigenbasis, clipped to be nonnegative."""
    if rho.dim != basis.dim:
        raise DimensionMismatchError(
            f"state dimension {rho.dim} does not match basis dimension {basis.dim}"
        )
    v = basis.eigenvectors
    populations = np.real(np.sum(v.conj() * (rho.entries @ v), axis=0))
    return np.clip(populations, 0.0, None)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """-tr(rho ln rho) in nats, with the 0 ln 0 = 0 convention."""
    try:
        evals = np.linalg.eigvalsh(rho.entries)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"eigensolver failed to converge: {exc}") from exc
    if float(evals[0]) < -PSD_TOL:
        raise ValidationError(
            f"invalid density matrix: negative eigenvalue {float(evals[0]):g}"
        )
    p = evals[evals > ENTROPY_EIGENVALUE_FLOOR]
    return float(-np.sum(p * np.log(p)))
