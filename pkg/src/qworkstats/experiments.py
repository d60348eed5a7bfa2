"""Parameter sweeps, finite-size scaling, and curve fits.

Drivers that walk the two-level crossing through its detuning and the AAH
chain through its localization transition, collecting moments, work
entropy, and the full bound report at every point. Sweep points and phase
samples are embarrassingly parallel; fan-out preserves axis order, so a
fixed (config, seed) pair always reproduces files byte for byte.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ValidationError
from .infotheory import BoundsReport, bounds_report, entropy_of_work, per_level_coherences
from .models import (
    AahParams,
    LzParams,
    aah_hamiltonian,
    fibonacci_pair,
    lz_hamiltonian,
)
from .spectral import (
    DensityMatrix,
    SpectralDecomposition,
    diagonalize,
    eigenstate_projector,
    thermal_state,
)
from .tpm import (
    QuenchSetup,
    WorkDistribution,
    check_first_moment,
    collect_work_distribution,
    max_degeneracy,
    mean_work_direct,
    uncollected_distribution,
    work_moments,
)

DELTA_TO_ZERO = "delta-to-zero"
ZERO_TO_DELTA = "zero-to-delta"
DIRECTIONS = (DELTA_TO_ZERO, ZERO_TO_DELTA)

MOMENT_ORDERS = 4
DEFAULT_SEED = 12345
DEFAULT_ETA_SAMPLES = 50
# Width of the centred difference used for the transition slope, in units
# of the hopping. This is a figure-resolution window: the step in the work
# entropy keeps sharpening with lattice size, so the pointwise derivative
# has no size-stable estimator and the slope is defined at this scale.
DEFAULT_DERIV_STEP = 0.15
GROUND_MEAN_TOL = 1e-10


def default_lz_grid(delta: float = 1.0, points: int = 501) -> np.ndarray:
    """Final-detuning grid spanning [-25, 25] gaps."""
    return np.linspace(-25.0 * delta, 25.0 * delta, points)


def default_aah_grid(j: float = 1.0, points: int = 80) -> np.ndarray:
    """Potential grid spanning (0, 4] hoppings."""
    return np.linspace(0.05 * j, 4.0 * j, points)


@dataclass(frozen=True)
class StateSpec:
    """Initial-state choice: ground projector, eigenstate k, or thermal."""

    kind: str
    level: int = 0
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in ("ground", "eigenstate", "thermal"):
            raise ValidationError(f"unknown state kind {self.kind!r}")
        if self.kind == "eigenstate" and self.level < 0:
            raise ValidationError(f"eigenstate level must be >= 0, got {self.level}")
        if self.kind == "thermal" and (self.beta is None or not self.beta >= 0):
            raise ValidationError("thermal state requires beta >= 0")

    @classmethod
    def ground(cls) -> "StateSpec":
        return cls(kind="ground")

    @classmethod
    def eigenstate(cls, level: int) -> "StateSpec":
        return cls(kind="eigenstate", level=level)

    @classmethod
    def thermal(cls, beta: float) -> "StateSpec":
        return cls(kind="thermal", beta=beta)

    def build(self, initial: SpectralDecomposition) -> DensityMatrix:
        if self.kind == "ground":
            return eigenstate_projector(initial, 0)
        if self.kind == "eigenstate":
            return eigenstate_projector(initial, self.level)
        return thermal_state(initial, self.beta)


@dataclass(frozen=True, eq=False)
class SweepRow:
    """One sweep point: moments, variance, work entropy, full report."""

    axis_value: float
    moments: np.ndarray
    variance: float
    h_w: float
    mean_direct: float
    report: BoundsReport
    gamma_max: int
    normalized_moments: np.ndarray | None = None
    flags: tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class SweepResult:
    axis: np.ndarray
    rows: tuple[SweepRow, ...]
    meta: dict

    def __post_init__(self):
        if len(self.rows) != np.asarray(self.axis).size:
            raise ValidationError("one row per axis point required")

    def column(self, name: str) -> np.ndarray:
        """Vector of one scalar across rows, e.g. 'h_w' or 's_diag'."""
        if hasattr(self.rows[0], name):
            return np.array([getattr(row, name) for row in self.rows], dtype=float)
        return np.array([getattr(row.report, name) for row in self.rows], dtype=float)


@dataclass(frozen=True, eq=False)
class ScalingResult:
    """Transition slopes per lattice size with their power-law fit."""

    sizes: np.ndarray
    slopes: np.ndarray
    fit_exponent: float
    fit_prefactor: float
    residuals: np.ndarray
    eta_samples: int
    seed: int
    deriv_step: float
    direction: str
    richardson_max_change: float | None = None


@dataclass(frozen=True, eq=False)
class FitResult:
    """Through-origin quadratic fit of the spectrum-edge excess."""

    coefficient: float
    residual_max: float
    delta_grid: np.ndarray
    band_edges: np.ndarray


@dataclass(frozen=True, eq=False)
class CoherenceMap:
    """Per-level coherences, levels down the rows and grid across columns."""

    delta_grid: np.ndarray
    coherences: np.ndarray


def _fan_out(fn, items, workers: int):
    """Apply fn over items, fanning out across threads; results in item order."""
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _check_direction(direction: str) -> None:
    if direction not in DIRECTIONS:
        raise ValidationError(f"direction must be one of {DIRECTIONS}, got {direction!r}")


@lru_cache(maxsize=8)
def _flat_chain_decomposition(fib_index: int, j: float) -> SpectralDecomposition:
    """Decomposition of the zero-potential chain; phase-independent, so cached."""
    return diagonalize(aah_hamiltonian(AahParams(fib_index=fib_index, delta=0.0, j=j)))


def _evaluate(
    setup: QuenchSetup,
    initial: SpectralDecomposition,
    final: SpectralDecomposition,
    axis_value: float,
    cluster_tol: float | None,
    normalized_reference: np.ndarray | None = None,
    flags: tuple[str, ...] = (),
) -> SweepRow:
    uncollected = uncollected_distribution(setup, initial, final)
    work = collect_work_distribution(uncollected, cluster_tol)
    check_first_moment(work, setup, initial)
    summary = work_moments(work, MOMENT_ORDERS)
    report = bounds_report(setup, work, uncollected)
    normalized = None
    if normalized_reference is not None:
        with np.errstate(divide="ignore", invalid="ignore"):
            normalized = np.where(
                normalized_reference != 0.0, summary.moments / normalized_reference, np.nan
            )
    return SweepRow(
        axis_value=float(axis_value),
        moments=summary.moments,
        variance=summary.variance,
        h_w=report.h_w,
        mean_direct=mean_work_direct(setup),
        report=report,
        gamma_max=max_degeneracy(work),
        normalized_moments=normalized,
        flags=flags,
    )


def lz_sweep(
    omega_i: float,
    omega_f_grid: np.ndarray,
    delta: float = 1.0,
    beta: float = 0.1,
    cluster_tol: float | None = None,
    workers: int = 1,
) -> SweepResult:
    """Sudden quench of a thermal two-level system across its crossing.

    The initial state is thermal at inverse temperature ``beta`` in the
    Hamiltonian at detuning ``omega_i``; each grid point quenches to the
    final detuning and records the full report. Moments are additionally
    emitted normalized by their value at final detuning equal to the gap.
    Rows whose final detuning equals +-omega_i are flagged, since the work
    values degenerate there.
    """
    grid = np.asarray(omega_f_grid, dtype=float)
    if grid.size == 0:
        raise ValidationError("empty detuning grid")
    initial = diagonalize(lz_hamiltonian(LzParams(delta=delta, omega=omega_i)))
    rho = thermal_state(initial, beta)

    def run_point(omega_f: float, reference: np.ndarray | None) -> SweepRow:
        final = diagonalize(lz_hamiltonian(LzParams(delta=delta, omega=omega_f)))
        setup = QuenchSetup(
            hi=lz_hamiltonian(LzParams(delta=delta, omega=omega_i)),
            hf=lz_hamiltonian(LzParams(delta=delta, omega=omega_f)),
            rho=rho,
        )
        flags = ()
        if math.isclose(abs(omega_f), abs(omega_i), rel_tol=0.0, abs_tol=1e-12 * delta):
            flags = ("degenerate-detuning",)
        return _evaluate(setup, initial, final, omega_f, cluster_tol, reference, flags)

    reference = work_moments(
        collect_work_distribution(
            uncollected_distribution(
                QuenchSetup(
                    hi=lz_hamiltonian(LzParams(delta=delta, omega=omega_i)),
                    hf=lz_hamiltonian(LzParams(delta=delta, omega=delta)),
                    rho=rho,
                ),
                initial,
                diagonalize(lz_hamiltonian(LzParams(delta=delta, omega=delta))),
            ),
            cluster_tol,
        ),
        MOMENT_ORDERS,
    ).moments
    rows = _fan_out(lambda wf: run_point(wf, reference), list(grid), workers)
    meta = {
        "experiment": "lz_sweep",
        "delta": float(delta),
        "omega_i": float(omega_i),
        "beta": float(beta),
        "normalization_detuning": float(delta),
        "cluster_tol": cluster_tol,
        "timestamp": time.time(),
    }
    return SweepResult(axis=grid, rows=tuple(rows), meta=meta)


def _aah_quench_setup(
    params: AahParams, direction: str, state: StateSpec
) -> tuple[QuenchSetup, SpectralDecomposition, SpectralDecomposition]:
    flat = _flat_chain_decomposition(params.fib_index, params.j)
    modulated_h = aah_hamiltonian(params)
    flat_h = aah_hamiltonian(AahParams(fib_index=params.fib_index, delta=0.0, j=params.j))
    if direction == DELTA_TO_ZERO:
        hi, hf = modulated_h, flat_h
        initial, final = diagonalize(modulated_h), flat
    else:
        hi, hf = flat_h, modulated_h
        initial, final = flat, diagonalize(modulated_h)
    rho = state.build(initial)
    return QuenchSetup(hi=hi, hf=hf, rho=rho), initial, final


def aah_work_histogram(
    params: AahParams,
    direction: str,
    state: StateSpec | None = None,
    cluster_tol: float | None = None,
) -> WorkDistribution:
    """Collected work distribution for switching the potential off or on."""
    _check_direction(direction)
    state = state or StateSpec.ground()
    setup, initial, final = _aah_quench_setup(params, direction, state)
    uncollected = uncollected_distribution(setup, initial, final)
    return collect_work_distribution(uncollected, cluster_tol)


def aah_transition_sweep(
    fib_index: int,
    delta_grid: np.ndarray,
    direction: str,
    state: StateSpec | None = None,
    j: float = 1.0,
    eta: float = 1.2,
    cluster_tol: float | None = None,
    workers: int = 1,
) -> SweepResult:
    """Walk the chain through its localization transition.

    For the switch-on direction from the ground state the mean work
    vanishes identically (the flat-chain ground state is uniform, and the
    quasiperiodic potential averages to zero over a full ring), which is
    asserted here to one part in 1e10 of the hopping.
    """
    _check_direction(direction)
    state = state or StateSpec.ground()
    grid = np.asarray(delta_grid, dtype=float)
    if grid.size == 0:
        raise ValidationError("empty potential grid")
    if np.any(grid <= 0) or np.any(grid > 4.0):
        raise ValidationError(
            "potential grid must lie in (0, 4] hoppings; the flat chain is the endpoint"
        )

    def run_point(delta: float) -> SweepRow:
        params = AahParams(fib_index=fib_index, delta=float(delta), j=j, eta=eta)
        setup, initial, final = _aah_quench_setup(params, direction, state)
        row = _evaluate(setup, initial, final, delta, cluster_tol)
        if direction == ZERO_TO_DELTA and state.kind == "ground":
            if abs(row.mean_direct) > GROUND_MEAN_TOL * j:
                raise ValidationError(
                    f"switch-on ground-state mean work {row.mean_direct!r} "
                    f"exceeds {GROUND_MEAN_TOL:g} hoppings"
                )
        return row

    rows = _fan_out(run_point, list(grid), workers)
    meta = {
        "experiment": "aah_transition_sweep",
        "fib_index": fib_index,
        "size": fibonacci_pair(fib_index)[1],
        "direction": direction,
        "state": (state.kind, state.level, state.beta),
        "j": float(j),
        "eta": float(eta),
        "cluster_tol": cluster_tol,
        "timestamp": time.time(),
    }
    return SweepResult(axis=grid, rows=tuple(rows), meta=meta)


def _entropy_at(
    fib_index: int, delta: float, eta: float, j: float, direction: str
) -> float:
    params = AahParams(fib_index=fib_index, delta=delta, j=j, eta=eta)
    setup, initial, final = _aah_quench_setup(params, direction, StateSpec.ground())
    uncollected = uncollected_distribution(setup, initial, final)
    work = collect_work_distribution(uncollected)
    return entropy_of_work(work)


def scaling_derivative(
    fib_indices,
    eta_samples: int = DEFAULT_ETA_SAMPLES,
    seed: int = DEFAULT_SEED,
    deriv_step: float = DEFAULT_DERIV_STEP,
    direction: str = ZERO_TO_DELTA,
    j: float = 1.0,
    workers: int = 1,
    richardson: bool = False,
) -> ScalingResult:
    """Phase-averaged transition slope of the work entropy versus size.

    For each lattice size the slope of H_W at the critical potential
    (two hoppings) is estimated by the centred difference over
    ``+-deriv_step`` and averaged over independent uniform phase draws
    from one seeded generator. A least-squares line through
    (ln N, ln slope) gives the power-law exponent. With ``richardson``
    the slopes are re-estimated at half the step and the largest relative
    change is reported, quantifying how strongly the estimate depends on
    the window width near the sharpening step.
    """
    indices = list(fib_indices)
    if len(indices) < 3:
        raise ValidationError("power-law fit requires at least 3 lattice sizes")
    if sorted(indices) != indices:
        raise ValidationError("lattice size indices must be ascending")
    if eta_samples < 1:
        raise ValidationError(f"eta_samples must be >= 1, got {eta_samples}")
    if not deriv_step > 0:
        raise ValidationError(f"deriv_step must be positive, got {deriv_step!r}")
    _check_direction(direction)

    rng = np.random.default_rng(seed)
    sizes = []
    slopes = []
    halved = []
    for fib_index in indices:
        sizes.append(fibonacci_pair(fib_index)[1])
        etas = rng.uniform(0.0, 2.0 * math.pi, size=eta_samples)

        def slope_for(eta: float, step: float = deriv_step) -> float:
            upper = _entropy_at(fib_index, 2.0 * j + step * j, eta, j, direction)
            lower = _entropy_at(fib_index, 2.0 * j - step * j, eta, j, direction)
            return (upper - lower) / (2.0 * step)

        per_eta = _fan_out(slope_for, list(etas), workers)
        slopes.append(float(np.mean(per_eta)))
        if richardson:
            per_eta_half = _fan_out(
                lambda eta: slope_for(eta, deriv_step / 2.0), list(etas), workers
            )
            halved.append(float(np.mean(per_eta_half)))

    sizes = np.array(sizes, dtype=int)
    slopes = np.array(slopes, dtype=float)
    if np.any(slopes <= 0):
        raise ValidationError("transition slopes must be positive for a power-law fit")
    log_n = np.log(sizes.astype(float))
    log_s = np.log(slopes)
    design = np.vstack([log_n, np.ones_like(log_n)]).T
    coeffs, *_ = np.linalg.lstsq(design, log_s, rcond=None)
    residuals = log_s - design @ coeffs
    richardson_change = None
    if richardson:
        halved = np.array(halved)
        richardson_change = float(np.max(np.abs(halved - slopes) / np.abs(slopes)))
    return ScalingResult(
        sizes=sizes,
        slopes=slopes,
        fit_exponent=float(coeffs[0]),
        fit_prefactor=float(math.exp(coeffs[1])),
        residuals=residuals,
        eta_samples=eta_samples,
        seed=seed,
        deriv_step=deriv_step,
        direction=direction,
        richardson_max_change=richardson_change,
    )


def eigenstate_coherence_map(
    fib_index: int,
    delta_grid: np.ndarray,
    j: float = 1.0,
    eta: float = 1.2,
    workers: int = 1,
) -> CoherenceMap:
    """Coherence of every flat-chain eigenstate in the modulated basis.

    The quench direction is switch-on: the initial basis is the flat
    chain, and each grid column dephases against the chain at that
    potential. Degenerate flat-chain levels keep a basis-choice-dependent
    coherence floor even for vanishing potential; only the (unique) ground
    level is guaranteed to lose all coherence in that limit.
    """
    grid = np.asarray(delta_grid, dtype=float)
    if grid.size == 0:
        raise ValidationError("empty potential grid")
    flat = _flat_chain_decomposition(fib_index, j)

    def column(delta: float) -> np.ndarray:
        params = AahParams(fib_index=fib_index, delta=float(delta), j=j, eta=eta)
        final = diagonalize(aah_hamiltonian(params))
        overlap = final.eigenvectors.conj().T @ flat.eigenvectors
        return per_level_coherences(np.abs(overlap) ** 2)

    columns = _fan_out(column, list(grid), workers)
    return CoherenceMap(delta_grid=grid, coherences=np.column_stack(columns))


def bandwidth_fit(
    fib_index: int,
    delta_grid: np.ndarray,
    eta_samples: int = 10,
    seed: int = DEFAULT_SEED,
    j: float = 1.0,
    workers: int = 1,
) -> FitResult:
    """Fit the quadratic growth of the spectrum edge beyond two hoppings.

    For each potential the edge is the largest |eigenvalue| over the phase
    samples, minus 2 j; the through-origin least squares of edge against
    potential^2 gives the curvature coefficient.
    """
    grid = np.asarray(delta_grid, dtype=float)
    if grid.size == 0:
        raise ValidationError("empty potential grid")
    if np.any(grid <= 0) or np.any(grid > 4.0):
        raise ValidationError("potential grid must lie in (0, 4] hoppings")
    if eta_samples < 1:
        raise ValidationError(f"eta_samples must be >= 1, got {eta_samples}")
    rng = np.random.default_rng(seed)
    etas = rng.uniform(0.0, 2.0 * math.pi, size=eta_samples)

    def edge_for(delta: float) -> float:
        largest = 0.0
        for eta in etas:
            params = AahParams(fib_index=fib_index, delta=float(delta), j=j, eta=float(eta))
            evals = np.linalg.eigvalsh(aah_hamiltonian(params).entries)
            largest = max(largest, float(np.max(np.abs(evals))))
        return largest - 2.0 * j

    edges = np.array(_fan_out(edge_for, list(grid), workers), dtype=float)
    regressor = grid**2 * j
    coefficient = float(np.sum(regressor * edges) / np.sum(regressor**2))
    residual_max = float(np.max(np.abs(edges - coefficient * regressor) / np.abs(edges)))
    return FitResult(
        coefficient=coefficient,
        residual_max=residual_max,
        delta_grid=grid,
        band_edges=edges,
    )
