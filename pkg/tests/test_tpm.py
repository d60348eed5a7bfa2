import math
from collections import defaultdict

import numpy as np
import pytest

from conftest import haar_unitary, random_density, random_setup
from qworkstats import (
    AahParams,
    DensityMatrix,
    HermitianOperator,
    LzParams,
    QuenchSetup,
    UncollectedDistribution,
    ValidationError,
    aah_hamiltonian,
    collect_work_distribution,
    default_cluster_tol,
    diagonalize,
    eigenstate_projector,
    initial_populations,
    lz_hamiltonian,
    max_degeneracy,
    mean_work_direct,
    recollect,
    thermal_state,
    transition_probabilities,
    uncollected_distribution,
    work_moments,
)
from qworkstats.tpm import check_first_moment, measured_mean_work


def lz_setup(omega_i, omega_f, beta=0.1, delta=1.0):
    hi = lz_hamiltonian(LzParams(delta=delta, omega=omega_i))
    hf = lz_hamiltonian(LzParams(delta=delta, omega=omega_f))
    rho = thermal_state(diagonalize(hi), beta)
    return QuenchSetup(hi=hi, hf=hf, rho=rho)


def test_transition_probabilities_identity_case():
    dec = diagonalize(lz_hamiltonian(LzParams(delta=1.0, omega=0.3)))
    pmn = transition_probabilities(dec, dec)
    assert np.allclose(pmn, np.eye(2), atol=1e-24)


def test_transition_probabilities_lz_overlap_formula():
    # independent oracle: mixing angle theta = atan2(delta, omega)
    delta = 1.0
    for omega_i, omega_f in [(-20.0, 0.0), (-20.0, 5.0), (-3.0, -1.0), (2.0, 7.0)]:
        di = diagonalize(lz_hamiltonian(LzParams(delta=delta, omega=omega_i)))
        df = diagonalize(lz_hamiltonian(LzParams(delta=delta, omega=omega_f)))
        pmn = transition_probabilities(di, df)
        theta_i = math.atan2(delta, omega_i)
        theta_f = math.atan2(delta, omega_f)
        expected = math.cos((theta_f - theta_i) / 2.0) ** 2
        assert pmn[0, 0] == pytest.approx(expected, abs=1e-12)
        assert pmn[1, 1] == pytest.approx(expected, abs=1e-12)


def test_transition_probabilities_doubly_stochastic():
    rng = np.random.default_rng(17)
    for _ in range(10):
        dim = int(rng.integers(2, 12))
        setup = random_setup(rng, dim)
        pmn = transition_probabilities(
            diagonalize(setup.hi), diagonalize(setup.hf), setup.u
        )
        assert np.allclose(pmn.sum(axis=0), 1.0, atol=1e-10)
        assert np.allclose(pmn.sum(axis=1), 1.0, atol=1e-10)


def test_initial_populations_eigenstate_indicator():
    dec = diagonalize(lz_hamiltonian(LzParams(delta=1.0, omega=2.0)))
    rho = eigenstate_projector(dec, 1)
    pn = initial_populations(rho, dec)
    assert pn == pytest.approx([0.0, 1.0], abs=1e-12)


def test_initial_populations_thermal_and_uniform():
    rng = np.random.default_rng(41)
    from conftest import random_hermitian

    dec = diagonalize(random_hermitian(rng, 5))
    beta = 0.7
    pn = initial_populations(thermal_state(dec, beta), dec)
    energies = dec.eigenvalues
    gibbs = np.exp(-beta * (energies - energies[0]))
    gibbs /= gibbs.sum()
    assert np.allclose(pn, gibbs, atol=1e-12)
    from qworkstats import DensityMatrix

    uniform = initial_populations(DensityMatrix(entries=np.eye(5) / 5), dec)
    assert np.allclose(uniform, 0.2, atol=1e-12)


def test_uncollected_two_level_has_four_pairs():
    u = uncollected_distribution(lz_setup(-20.0, 3.0))
    assert u.bohr.shape == (2, 2)
    assert u.joint().size == 4
    assert float(u.joint().sum()) == pytest.approx(1.0, abs=1e-12)


def test_uncollected_lz_four_distinct_bohr_values():
    u = uncollected_distribution(lz_setup(-20.0, 3.0))
    values = np.sort(u.bohr.ravel())
    assert np.all(np.diff(values) > 1e-6)


def test_uncollected_aah_ground_start_indicator():
    params = AahParams(fib_index=8, delta=1.7)
    flat = aah_hamiltonian(AahParams(fib_index=8, delta=0.0))
    di = diagonalize(flat)
    setup = QuenchSetup(
        hi=flat, hf=aah_hamiltonian(params), rho=eigenstate_projector(di, 0)
    )
    u = uncollected_distribution(setup)
    assert u.pn[0] == pytest.approx(1.0, abs=1e-12)
    assert float(np.max(u.pn[1:])) < 1e-12


def test_collect_identity_quench_single_point():
    u = uncollected_distribution(lz_setup(-20.0, -20.0))
    w = collect_work_distribution(u)
    assert w.num_points == 1
    assert w.support[0] == pytest.approx(0.0, abs=1e-14)
    assert w.probs[0] == pytest.approx(1.0, abs=1e-14)
    assert max_degeneracy(w) == 2  # both diagonal pairs collect at zero


def test_collect_mirrored_detuning_three_points():
    # final spectrum equals the initial one, so the four Bohr values
    # are {-2g, 0, 0, +2g}
    omega = -4.0
    u = uncollected_distribution(lz_setup(omega, -omega))
    w = collect_work_distribution(u)
    gap = 2.0 * math.sqrt(omega**2 + 1.0)
    assert w.num_points == 3
    assert np.allclose(w.support, [-gap, 0.0, gap], atol=1e-12)
    assert list(w.multiplicity) == [1, 2, 1]
    assert max_degeneracy(w) == 2


def test_collect_rejects_bad_tolerance():
    u = uncollected_distribution(lz_setup(-20.0, 3.0))
    with pytest.raises(ValidationError):
        collect_work_distribution(u, cluster_tol=0.0)
    with pytest.raises(ValidationError):
        collect_work_distribution(u, cluster_tol=-1.0)


def test_collect_normalization_and_conservation():
    # dropped sub-threshold mass is folded back proportionally, so the
    # collected total always matches the joint-table total
    rng = np.random.default_rng(53)
    for _ in range(20):
        setup = random_setup(rng, int(rng.integers(2, 13)))
        u = uncollected_distribution(setup)
        w = collect_work_distribution(u)
        assert abs(float(w.probs.sum()) - 1.0) < 1e-12
        assert abs(float(w.probs.sum()) - float(u.joint().sum())) < 1e-12


def test_collect_multiplicities_count_all_pairs():
    rng = np.random.default_rng(59)
    for _ in range(10):
        dim = int(rng.integers(2, 10))
        setup = random_setup(rng, dim)
        w = collect_work_distribution(uncollected_distribution(setup))
        assert int(w.multiplicity.sum()) + w.diagnostics.dropped_pairs == dim * dim


def test_collection_idempotent():
    rng = np.random.default_rng(61)
    for _ in range(5):
        setup = random_setup(rng, 7)
        u = uncollected_distribution(setup)
        tol = default_cluster_tol(u)
        w = collect_work_distribution(u, tol)
        again = recollect(w, tol)
        assert np.array_equal(again.support, w.support)
        assert np.array_equal(again.probs, w.probs)
        assert np.array_equal(again.multiplicity, w.multiplicity)


def test_collect_matches_exact_grouping_oracle():
    # integer spectra make Bohr frequencies exact floats, so brute-force
    # grouping by equality is an independent reference
    rng = np.random.default_rng(67)
    for _ in range(20):
        dim = int(rng.integers(2, 7))
        ei = np.sort(rng.integers(-4, 5, size=dim)).astype(float)
        ef = np.sort(rng.integers(-4, 5, size=dim)).astype(float)
        pmn = np.abs(haar_unitary(rng, dim).entries) ** 2
        pn = rng.dirichlet(np.ones(dim))
        bohr = ef[:, np.newaxis] - ei[np.newaxis, :]
        u = UncollectedDistribution(pn=pn, pmn=pmn, bohr=bohr)

        groups = defaultdict(lambda: [0.0, 0])
        for m in range(dim):
            for n in range(dim):
                groups[bohr[m, n]][0] += pn[n] * pmn[m, n]
                groups[bohr[m, n]][1] += 1
        expected = sorted(groups.items())

        w = collect_work_distribution(u, cluster_tol=0.5)
        kept = [(value, mass, count) for value, (mass, count) in expected if mass >= 1e-15]
        assert w.num_points == len(kept)
        for (value, mass, count), got_w, got_p, got_m in zip(
            kept, w.support, w.probs, w.multiplicity
        ):
            assert got_w == pytest.approx(value, abs=1e-12)
            assert got_p == pytest.approx(mass, abs=1e-13)
            assert got_m == count


def test_proximity_warning_for_marginal_gaps():
    pn = np.array([0.5, 0.5])
    pmn = np.array([[0.5, 0.5], [0.5, 0.5]])
    bohr = np.array([[0.0, 5e-9], [1.0, 2.0]])
    u = UncollectedDistribution(pn=pn, pmn=pmn, bohr=bohr)
    w = collect_work_distribution(u, cluster_tol=1e-9)
    assert any("resolution-marginal" in message for message in w.diagnostics.warnings)
    clean = collect_work_distribution(u, cluster_tol=1e-12)
    assert w.num_points <= clean.num_points


def test_work_moments_trivial_and_variance():
    u = uncollected_distribution(lz_setup(-20.0, -20.0))
    w = collect_work_distribution(u)
    summary = work_moments(w, 4)
    assert np.allclose(summary.moments, 0.0, atol=1e-12)
    assert summary.variance == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValidationError):
        work_moments(w, 0)


def test_first_moment_matches_trace_formula():
    # universal identity against the dephased-state trace formula; for
    # initial states commuting with the initial Hamiltonian the plain
    # trace formula agrees too
    rng = np.random.default_rng(71)
    for _ in range(20):
        setup = random_setup(rng, int(rng.integers(2, 13)))
        u = uncollected_distribution(setup)
        w = collect_work_distribution(u)
        check_first_moment(w, setup)
        summary = work_moments(w, 1)
        measured = measured_mean_work(setup)
        scale = max(abs(measured), float(np.sum(np.abs(w.support) * w.probs)))
        assert abs(summary[1] - measured) <= 1e-8 * scale


def test_first_moment_plain_trace_formula_for_commuting_states():
    rng = np.random.default_rng(73)
    for _ in range(10):
        dim = int(rng.integers(2, 13))
        setup = random_setup(rng, dim)
        di = diagonalize(setup.hi)
        setup = QuenchSetup(
            hi=setup.hi, hf=setup.hf, rho=thermal_state(di, 0.8), u=setup.u
        )
        w = collect_work_distribution(uncollected_distribution(setup, di))
        direct = mean_work_direct(setup)
        assert measured_mean_work(setup, di) == pytest.approx(direct, abs=1e-12)
        summary = work_moments(w, 1)
        scale = max(abs(direct), float(np.sum(np.abs(w.support) * w.probs)))
        assert abs(summary[1] - direct) <= 1e-8 * scale


def test_mean_work_direct_identity_is_zero():
    setup = lz_setup(-20.0, -20.0)
    assert mean_work_direct(setup) == pytest.approx(0.0, abs=1e-14)


def test_mean_work_zero_for_uniform_ground_state_switch_on():
    # the flat-chain ground state is uniform; the quasiperiodic potential
    # sums to zero around the ring, so the mean work vanishes
    for fib_index in [9, 12]:
        flat = aah_hamiltonian(AahParams(fib_index=fib_index, delta=0.0))
        di = diagonalize(flat)
        setup = QuenchSetup(
            hi=flat,
            hf=aah_hamiltonian(AahParams(fib_index=fib_index, delta=2.3)),
            rho=eigenstate_projector(di, 0),
        )
        assert abs(mean_work_direct(setup)) < 1e-12


def test_mean_work_positive_for_switch_off():
    # switching the potential off from its ground state always costs work:
    # the initial energy sits below the flat band minimum
    delta = 2.0
    params = AahParams(fib_index=10, delta=delta)
    modulated = aah_hamiltonian(params)
    di = diagonalize(modulated)
    flat = aah_hamiltonian(AahParams(fib_index=10, delta=0.0))
    setup = QuenchSetup(hi=modulated, hf=flat, rho=eigenstate_projector(di, 0))
    mean = mean_work_direct(setup)
    floor = -2.0 - float(di.eigenvalues[0])  # distance below the flat band edge
    assert mean > floor - 1e-12 > 0.0

    u = uncollected_distribution(setup, di)
    w = collect_work_distribution(u)
    assert work_moments(w, 1)[1] == pytest.approx(mean, rel=1e-10)


def test_aah_ground_state_quench_support_bounds():
    # switch-off support strictly positive, switch-on support reaches both
    # signs, both capped by the shifted band edges
    fib_index, delta = 10, 2.0
    modulated = aah_hamiltonian(AahParams(fib_index=fib_index, delta=delta))
    flat = aah_hamiltonian(AahParams(fib_index=fib_index, delta=0.0))
    dm, dflat = diagonalize(modulated), diagonalize(flat)

    off = QuenchSetup(hi=modulated, hf=flat, rho=eigenstate_projector(dm, 0))
    w_off = collect_work_distribution(uncollected_distribution(off, dm, dflat))
    assert float(w_off.support.min()) > 0.0

    on = QuenchSetup(hi=flat, hf=modulated, rho=eigenstate_projector(dflat, 0))
    w_on = collect_work_distribution(uncollected_distribution(on, dflat, dm))
    assert float(w_on.support.min()) < 0.0
    assert float(w_on.support.max()) <= 4.0 + (float(dm.eigenvalues[-1]) - 2.0) + 1e-12


def test_aah_degeneracy_of_collected_values():
    # switch-off inherits the flat spectrum's double degeneracy; switch-on
    # from the unique ground state stays non-degenerate
    fib_index, delta = 9, 2.5
    modulated = aah_hamiltonian(AahParams(fib_index=fib_index, delta=delta))
    flat = aah_hamiltonian(AahParams(fib_index=fib_index, delta=0.0))
    dm, dflat = diagonalize(modulated), diagonalize(flat)

    off = QuenchSetup(hi=modulated, hf=flat, rho=eigenstate_projector(dm, 0))
    w_off = collect_work_distribution(uncollected_distribution(off, dm, dflat))
    assert max_degeneracy(w_off) == 2

    on = QuenchSetup(hi=flat, hf=modulated, rho=eigenstate_projector(dflat, 0))
    w_on = collect_work_distribution(uncollected_distribution(on, dflat, dm))
    assert max_degeneracy(w_on) == 1


def test_work_distribution_serialization():
    u = uncollected_distribution(lz_setup(-4.0, 4.0))
    w = collect_work_distribution(u)
    text = w.to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == "W,P,multiplicity"
    assert len(lines) == 1 + w.num_points
    record = w.to_json_record()
    assert record["diagnostics"]["cluster_tol"] == w.diagnostics.cluster_tol
    assert len(record["support"]) == w.num_points
    parsed = [float(line.split(",")[0]) for line in lines[1:]]
    assert np.allclose(parsed, w.support, rtol=0, atol=0)


def test_single_level_system_pipeline():
    # dimension 1: zero spectral span exercises the tolerance fallback
    h = HermitianOperator(entries=np.array([[2.0]]))
    rho = DensityMatrix(entries=np.array([[1.0]]))
    setup = QuenchSetup(hi=h, hf=h, rho=rho)
    u = uncollected_distribution(setup)
    assert default_cluster_tol(u) > 0
    w = collect_work_distribution(u)
    assert w.num_points == 1
    assert w.support[0] == 0.0
    assert w.probs[0] == 1.0


def test_recollect_coarsening_merges_points():
    u = uncollected_distribution(lz_setup(-4.0, 4.0))
    w = collect_work_distribution(u)
    assert w.num_points == 3
    span = float(w.support[-1] - w.support[0])
    coarse = recollect(w, cluster_tol=2.0 * span)
    assert coarse.num_points == 1
    assert coarse.probs[0] == pytest.approx(1.0, abs=1e-12)
    assert int(coarse.multiplicity[0]) == int(w.multiplicity.sum())
    # the merged representative preserves the mean
    mean_before = float(np.sum(w.support * w.probs))
    assert coarse.support[0] == pytest.approx(mean_before, abs=1e-12)


def test_setup_dimension_mismatch():
    hi = lz_hamiltonian(LzParams(delta=1.0, omega=0.0))
    flat = aah_hamiltonian(AahParams(fib_index=5, delta=0.0))
    rho = thermal_state(diagonalize(hi), 1.0)
    with pytest.raises(ValidationError):
        QuenchSetup(hi=hi, hf=flat, rho=rho)


def test_random_mixed_state_pipeline():
    rng = np.random.default_rng(79)
    for _ in range(5):
        dim = 6
        setup = random_setup(rng, dim, with_unitary=True)
        rho = random_density(rng, dim, rank=3)
        setup = QuenchSetup(hi=setup.hi, hf=setup.hf, rho=rho, u=setup.u)
        w = collect_work_distribution(uncollected_distribution(setup))
        assert abs(float(w.probs.sum()) - 1.0) < 1e-12
        check_first_moment(w, setup)
