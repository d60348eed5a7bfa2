"""Model Hamiltonians: the two-level avoided crossing and the
Aubry-Andre-Harper (AAH) quasiperiodic chain.

Two-level model: H = delta * sigma_x + omega * sigma_z, energies in units
of hbar * delta (the minimal gap, at detuning omega = 0).

AAH chain: N = F_n sites on a ring, on-site potential
delta * cos(2 pi gamma i + eta) with gamma = F_{n-1}/F_n, hopping -j on the
cyclic nearest-neighbour bonds. Energies in units of hbar * j; ``delta`` is
the dimensionless ratio potential/hopping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .spectral import HermitianOperator

GOLDEN_RATIO_CONJUGATE = (math.sqrt(5.0) - 1.0) / 2.0

# Numerically fitted curvature of the chain's spectrum edge: the extreme
# eigenvalues sit at +-(2 j + coefficient * delta^2 * j) for delta up to
# about four hoppings.
BAND_EDGE_COEFFICIENT = 0.146939
BAND_EDGE_VALIDITY = 4.0


@dataclass(frozen=True)
class LzParams:
    """Two-level crossing parameters: gap ``delta`` > 0 and detuning ``omega``."""

    delta: float
    omega: float

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValidationError(f"gap must be positive and finite, got {self.delta!r}")
        if not math.isfinite(self.omega):
            raise ValidationError(f"detuning must be finite, got {self.omega!r}")


def lz_hamiltonian(params: LzParams) -> HermitianOperator:
    """2x2 matrix delta*sigma_x + omega*sigma_z; eigenvalues -+sqrt(omega^2+delta^2)."""
    return HermitianOperator(
        entries=np.array(
            [[params.omega, params.delta], [params.delta, -params.omega]], dtype=float
        )
    )


def fibonacci_pair(n: int) -> tuple[int, int]:
    """(F_{n-1}, F_n) for the sequence F_1 = F_2 = 1.

    Python integers are unbounded, so no overflow guard is needed; only
    n >= 3 is required so that F_{n-1}/F_n lies strictly inside (0, 1).
    """
    if n < 3:
        raise ValidationError(f"Fibonacci index must be >= 3, got {n}")
    prev, cur = 1, 1
    for _ in range(n - 2):
        prev, cur = cur, prev + cur
    return prev, cur


@dataclass(frozen=True)
class AahParams:
    """AAH chain parameters.

    ``fib_index`` fixes the ring size N = F_n and the rational modulation
    gamma = F_{n-1}/F_n, a best approximant of the inverse golden ratio.
    ``delta`` is the potential amplitude in units of the hopping ``j``;
    ``eta`` is the potential phase in [0, 2 pi).
    """

    fib_index: int
    delta: float
    j: float = 1.0
    eta: float = 1.2

    def __post_init__(self):
        prev, cur = fibonacci_pair(self.fib_index)
        if not (self.delta >= 0 and math.isfinite(self.delta)):
            raise ValidationError(f"potential ratio must be >= 0, got {self.delta!r}")
        if not (self.j > 0 and math.isfinite(self.j)):
            raise ValidationError(f"hopping must be positive, got {self.j!r}")
        if not (0.0 <= self.eta < 2.0 * math.pi):
            raise ValidationError(f"phase must lie in [0, 2 pi), got {self.eta!r}")
        object.__setattr__(self, "_fib_pair", (prev, cur))

    @property
    def size(self) -> int:
        return self._fib_pair[1]

    @property
    def gamma(self) -> float:
        prev, cur = self._fib_pair
        return prev / cur

    @property
    def amplitude(self) -> float:
        """Absolute potential amplitude delta * j."""
        return self.delta * self.j


def aah_hamiltonian(params: AahParams) -> HermitianOperator:
    """Real symmetric N x N ring Hamiltonian with quasiperiodic on-site terms.

    The site index in the cosine runs 1..N and the hopping wraps around
    (periodic boundary conditions), so row i holds the on-site energy plus
    the two cyclic bonds.
    """
    n = params.size
    sites = np.arange(1, n + 1, dtype=float)
    h = np.diag(params.amplitude * np.cos(2.0 * np.pi * params.gamma * sites + params.eta))
    idx = np.arange(n)
    h[idx, (idx + 1) % n] -= params.j
    h[(idx + 1) % n, idx] -= params.j
    return HermitianOperator(entries=h)


@dataclass(frozen=True)
class BandwidthModel:
    """Quadratic model for how far the spectrum edge moves past 2 j."""

    coefficient: float = BAND_EDGE_COEFFICIENT

    def __post_init__(self):
        if not (self.coefficient > 0):
            raise ValidationError(f"coefficient must be positive, got {self.coefficient!r}")


@dataclass(frozen=True)
class BandEdgePrediction:
    """Predicted |spectrum| bound, flagged when outside the model's fitted range."""

    value: float
    extrapolated: bool


def predicted_band_edge(
    params: AahParams, model: BandwidthModel | None = None
) -> BandEdgePrediction:
    """Predicted extreme of |E|: (2 + coefficient * delta^2) * j.

    Beyond delta = 4 j the quadratic form is an extrapolation and the
    result carries a flag instead of failing.
    """
    model = model or BandwidthModel()
    value = (2.0 + model.coefficient * params.delta**2) * params.j
    return BandEdgePrediction(value=value, extrapolated=params.delta > BAND_EDGE_VALIDITY)
