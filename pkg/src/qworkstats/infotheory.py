"""Entropies, relative entropy of coherence, and the bound chain.

The entropy of the collected work distribution H_W is bracketed by the
entropy H_u of the uncollected level-pair table,

    H_u - ln(gamma_max) <= H_W <= H_u,

where gamma_max is the largest number of pairs collected into one work
value. H_u itself splits exactly into a diagonal-ensemble part plus an
average coherence,

    H_u = S(rho_bar) + sum_n p_n C(|n_i><n_i|),

with C the relative entropy of coherence in the protocol-rotated final
basis, and is bounded above by 2 S(rho_bar) + C(rho_bar) (concavity) and,
for the work entropy, by S(rho_bar) + max_n C(|n_i><n_i|), whose coherence
term is temperature independent.

Every inequality here is mathematically unconditional, so a violation
beyond the numerical slack raises a hard error rather than being reported
as a physics result. All entropies are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundViolationError, DimensionMismatchError, ValidationError
from .spectral import (
    DensityMatrix,
    SpectralDecomposition,
    dephase,
    von_neumann_entropy,
)
from .tpm import QuenchSetup, UncollectedDistribution, WorkDistribution, max_degeneracy

NEGATIVE_PROB_TOL = 1e-12
NORMALIZATION_ERROR = 1e-6
BOUND_SLACK = 1e-10
GROUND_PROJECTOR_TOL = 1e-12


def _plogp(p: np.ndarray) -> float:
    live = p[p > 0.0]
    return float(-np.sum(live * np.log(live)))


def shannon_entropy(probabilities: np.ndarray) -> float:
    """-sum p ln p with 0 ln 0 = 0, after clipping tiny negatives.

    Inputs whose total deviates from 1 by more than 1e-6 are rejected;
    smaller deviations are renormalized away.
    """
    p = np.asarray(probabilities, dtype=float).ravel()
    if p.size == 0:
        raise ValidationError("empty probability vector")
    smallest = float(p.min())
    if smallest < -NEGATIVE_PROB_TOL:
        raise ValidationError(f"probability {smallest:g} below tolerated negative noise")
    p = np.clip(p, 0.0, None)
    total = float(p.sum())
    if abs(total - 1.0) > NORMALIZATION_ERROR:
        raise ValidationError(f"probabilities sum to {total!r}, not 1")
    return _plogp(p / total)


def entropy_of_work(work: WorkDistribution) -> float:
    """Shannon entropy of the collected work distribution."""
    return shannon_entropy(work.probs)


def uncollected_entropy(uncollected: UncollectedDistribution) -> float:
    """Shannon entropy of the flattened joint table p_n * p_{m|n}."""
    return shannon_entropy(uncollected.joint().ravel())


def relative_entropy_of_coherence(
    sigma: DensityMatrix, basis: SpectralDecomposition
) -> float:
    """S(dephased sigma) - S(sigma) in the given basis, always >= 0."""
    if sigma.dim != basis.dim:
        raise DimensionMismatchError(
            f"state dimension {sigma.dim} does not match basis dimension {basis.dim}"
        )
    return von_neumann_entropy(dephase(sigma, basis)) - von_neumann_entropy(sigma)


def per_level_coherences(pmn: np.ndarray) -> np.ndarray:
    """Column entropies of the transition matrix.

    Entry n equals the relative entropy of coherence of the initial
    eigenstate |n_i><n_i| in the protocol-rotated final basis, computed
    here directly from the transition probabilities.
    """
    p = np.asarray(pmn, dtype=float)
    worst = float(np.max(np.abs(p.sum(axis=0) - 1.0)))
    if worst > NORMALIZATION_ERROR:
        raise ValidationError(f"transition columns deviate from 1 by {worst:g}")
    p = np.clip(p, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p), 0.0)
    return -terms.sum(axis=0)


def effective_dimension(pmn: np.ndarray, level: int) -> tuple[float, float]:
    """Participation of one initial level over final levels.

    Returns (I, -ln I) with I = sum_m p_{m|level}^2; the second entry is
    the collision (Renyi-2) entropy of the column, a lower bound on any
    Shannon entropy built on it.
    """
    p = np.asarray(pmn, dtype=float)
    if not 0 <= level < p.shape[1]:
        raise ValidationError(f"level index {level} out of range for {p.shape[1]} columns")
    inverse_participation = float(np.sum(p[:, level] ** 2))
    return inverse_participation, -math.log(inverse_participation)


@dataclass(frozen=True, eq=False)
class BoundsReport:
    """All entropy quantities and bound ingredients for one quench.

    Scalar fields (in declaration order) form the stable CSV row contract;
    ``per_level_coherence`` is carried as a vector in the JSON record only.
    """

    h_w: float
    h_u: float
    ln_gamma_max: float
    s_diag: float
    avg_coherence: float
    rec_rho_bar: float
    c_max: float
    eff_dim: float
    neg_log_eff_dim: float
    initial_is_ground: bool
    per_level_coherence: np.ndarray

    CSV_FIELDS = (
        "h_w",
        "h_u",
        "ln_gamma_max",
        "s_diag",
        "avg_coherence",
        "rec_rho_bar",
        "c_max",
        "eff_dim",
        "neg_log_eff_dim",
        "initial_is_ground",
    )

    def csv_row(self) -> list:
        return [getattr(self, name) for name in self.CSV_FIELDS]

    def to_json_record(self) -> dict:
        record = {name: getattr(self, name) for name in self.CSV_FIELDS}
        record["initial_is_ground"] = bool(self.initial_is_ground)
        record["per_level_coherence"] = [float(c) for c in self.per_level_coherence]
        return record


def _require(name: str, lhs: float, rhs: float, slack: float = BOUND_SLACK) -> None:
    if lhs > rhs + slack:
        raise BoundViolationError(name, lhs, rhs, slack)


def check_bounds(report: BoundsReport) -> None:
    """Assert the full inequality chain on an assembled report."""
    _require("degeneracy_sandwich_upper", report.h_w, report.h_u)
    _require("degeneracy_sandwich_lower", report.h_u - report.ln_gamma_max, report.h_w)
    decomposition_gap = abs(report.h_u - (report.s_diag + report.avg_coherence))
    _require("entropy_decomposition", decomposition_gap, 0.0)
    _require("concavity_bound", report.h_u, 2.0 * report.s_diag + report.rec_rho_bar)
    _require("temperature_bound", report.h_w, report.s_diag + report.c_max)
    if report.initial_is_ground:
        _require("effective_dimension_bound", report.neg_log_eff_dim, report.h_u)


def bounds_report(
    setup: QuenchSetup,
    work: WorkDistribution,
    uncollected: UncollectedDistribution,
) -> BoundsReport:
    """Assemble every bound ingredient and verify the chain.

    All terms are evaluated from the populations and transition matrix of
    ``uncollected`` (the scalar route); the density-matrix route through
    dephasing is equivalent and cross-checked in the test suite.
    """
    if setup.dim != uncollected.dim:
        raise DimensionMismatchError(
            f"setup dimension {setup.dim} does not match table dimension {uncollected.dim}"
        )
    pn = uncollected.pn
    pmn = uncollected.pmn
    per_level = per_level_coherences(pmn)

    s_diag = shannon_entropy(pn)
    avg_coherence = float(pn @ per_level)
    c_max = float(per_level.max())
    rotated_populations = pmn @ pn
    rec_rho_bar = shannon_entropy(rotated_populations) - s_diag
    eff_dim, neg_log_eff_dim = effective_dimension(pmn, 0)

    report = BoundsReport(
        h_w=entropy_of_work(work),
        h_u=uncollected_entropy(uncollected),
        ln_gamma_max=math.log(max_degeneracy(work)),
        s_diag=s_diag,
        avg_coherence=avg_coherence,
        rec_rho_bar=rec_rho_bar,
        c_max=c_max,
        eff_dim=eff_dim,
        neg_log_eff_dim=neg_log_eff_dim,
        initial_is_ground=bool(pn[0] >= 1.0 - GROUND_PROJECTOR_TOL),
        per_level_coherence=per_level,
    )
    check_bounds(report)
    return report
