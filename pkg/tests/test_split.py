import itertools
import logging

import numpy as np
import pytest

from multideph.errors import DimensionMismatch, ModelError, NegativeTime
from multideph.exact import evolve, phi, phi_tensor
from multideph.model import QUBIT, RingCouplingParams, bipartite_gamma, make_model, qubit_model, ring_model
from multideph.sampling import random_density_matrix, random_model
from multideph.split import (
    EnvPopulations,
    ReducedDynamics,
    SplitSpec,
    coherence_factor,
    compose_state,
    environment_state,
    memory_necessary_condition,
    partial_diagonal_phi,
    partial_trace,
    split_phi,
    sub_model,
    system_state,
)


def _bipartite(gamma=1.0, beta=2.0, chi=0.3 + 0.5j, omega=0.0):
    return qubit_model(h=np.array([[0.0, omega], [omega, 0.0]]), gamma=bipartite_gamma(gamma, beta, chi))


def test_split_validation():
    with pytest.raises(ModelError):
        SplitSpec((0,), (0, 1)).validate(2)
    with pytest.raises(ModelError):
        SplitSpec((0,), (2,)).validate(3)
    with pytest.raises(ModelError):
        SplitSpec((), (0, 1)).validate(2)
    assert SplitSpec.from_one_based([2], [1, 3]) == SplitSpec((1,), (0, 2))


def test_env_populations_checks():
    with pytest.raises(ModelError):
        EnvPopulations(full=[0.5, 0.6])
    with pytest.raises(ModelError):
        EnvPopulations(full=[1.2, -0.2])
    with pytest.raises(ModelError):
        EnvPopulations()
    with pytest.raises(DimensionMismatch):
        EnvPopulations(full=[0.5, 0.5]).check((2, 2))


def test_env_from_state_warns(caplog):
    rho = np.array([[0.5, 0.1], [0.1, 0.5]])
    with caplog.at_level(logging.WARNING):
        env = EnvPopulations.from_state(rho)
    assert "ignored" in caplog.text
    assert np.array_equal(env.full, [0.5, 0.5])


def test_cross_part_vanishes_without_coupling(rng):
    g = np.zeros((3, 3), dtype=complex)
    g[1:, 1:] = bipartite_gamma(1.0, 1.0, 0.4j)
    m = qubit_model(gamma=g + 0.5 * np.eye(3))
    sp = SplitSpec((0,), (1, 2))
    assert split_phi(m, sp, (0,), (0, 1), (1,), (1, 0)).cross_part == 0


def test_cross_part_bipartite():
    chi = 0.3 + 0.5j
    m = _bipartite(chi=chi)
    parts = split_phi(m, SplitSpec.first(2), (0,), (0,), (1,), (1,))
    assert parts.cross_part == pytest.approx(4 * chi.real, abs=1e-14)


def test_recombination_exhaustive_and_sampled(rng):
    for n in (2, 3):
        m = random_model(rng, n, 2)
        m = make_model([QUBIT] * n, m.h, m.gamma)
        for k in range(1, n):
            sp = SplitSpec(tuple(range(k)), tuple(range(k, n)))
            for a in itertools.product(range(2), repeat=n):
                for b in itertools.product(range(2), repeat=n):
                    total = split_phi(m, sp, a[:k], a[k:], b[:k], b[k:]).total
                    assert abs(total - phi(m, a, b)) < 1e-13
    m = random_model(rng, 4, 3)
    sp = SplitSpec((1, 3), (0, 2))
    for _ in range(200):
        a = [int(rng.integers(d)) for d in m.dims]
        b = [int(rng.integers(d)) for d in m.dims]
        total = split_phi(m, sp, (a[1], a[3]), (a[0], a[2]), (b[1], b[3]), (b[0], b[2])).total
        assert abs(total - phi(m, a, b)) < 1e-13


def test_real_gamma_no_bath_dependence(rng):
    m = random_model(rng, 3, 3, hamiltonian=False, real_gamma=True)
    sp = SplitSpec((0,), (1, 2))
    sysm = sub_model(m, sp.system)
    for b in itertools.product(range(m.dims[1]), range(m.dims[2])):
        for st in range(m.dims[0]):
            for s in range(m.dims[0]):
                assert abs(partial_diagonal_phi(m, sp, (st,), (s,), b) - phi(sysm, (st,), (s,))) < 1e-14


@pytest.mark.parametrize("b", [0, 1])
def test_partial_diagonal_bipartite(b):
    gamma, chi, omega = 0.7, 0.2 + 0.45j, 0.3
    m = _bipartite(gamma=gamma, chi=chi, omega=omega)
    bval = QUBIT[b]
    expected = -2j * (chi.imag - omega) * bval + 2 * gamma
    assert partial_diagonal_phi(m, SplitSpec.first(2), (0,), (1,), (b,)) == pytest.approx(expected, abs=1e-14)


def test_unitary_and_dissipative_couplings_equivalent():
    c = 0.35
    unitary = qubit_model(h=np.array([[0.0, c], [c, 0.0]]), gamma=np.eye(2))
    # -(G_12 - G_21)/2 = i c  <=>  G_12 = -i c
    dissipative = qubit_model(gamma=bipartite_gamma(1.0, 1.0, -1j * c))
    sp = SplitSpec.first(2)
    a = ReducedDynamics(unitary, sp, EnvPopulations.uniform([2]))
    b = ReducedDynamics(dissipative, sp, EnvPopulations.uniform([2]))
    assert np.abs(a.component_rates(a.bath_values()) - b.component_rates(b.bath_values())).max() < 1e-15


def test_coherence_diagonal_is_one(rng):
    m = random_model(rng, 3, 3)
    sp = SplitSpec((0,), (1, 2))
    rd = ReducedDynamics(m, sp, EnvPopulations.uniform(sp.bath_dims(m)))
    for t in (0.0, 0.5, 3.0):
        assert np.all(np.diagonal(rd.factors(t)) == 1)


def test_coherence_bipartite_closed_form():
    gamma, chi_bar = 1.0, -0.8
    q = np.array([0.4, 0.6])
    m = _bipartite(gamma=gamma, beta=2.0, chi=0.1 + 1j * chi_bar)
    env = EnvPopulations(product=(q,))
    for t in np.linspace(0, 3, 13):
        f = coherence_factor(m, SplitSpec.first(2), env, (0,), (1,), t)
        ref = np.exp(-2 * t * gamma) * (q[0] * np.exp(2j * t * chi_bar) + q[1] * np.exp(-2j * t * chi_bar))
        assert abs(f - ref) < 1e-14


def test_ring_coherence_factorized_and_direct():
    n, gamma, chi = 6, 1.0, 0.4
    m = ring_model(RingCouplingParams(n, gamma, chi))
    sp = SplitSpec.first(n)
    prod = ReducedDynamics(m, sp, EnvPopulations.uniform([2] * (n - 1)))
    full = ReducedDynamics(m, sp, EnvPopulations(full=np.full(2 ** (n - 1), 2.0 ** (1 - n))))
    for t in np.linspace(0, 2, 9):
        ref = np.exp(-2 * gamma * t) * np.cos(2 * chi * t) ** (n // 2)
        assert abs(prod.factors(t)[0, 1] - ref) < 1e-13
        assert abs(prod.factors_direct(t)[0, 1] - ref) < 1e-13
        assert abs(full.factors(t)[0, 1] - ref) < 1e-13


def test_product_factorization_large_bath(rng):
    nb = 12
    g = 0.5 * np.eye(nb + 1, dtype=complex)
    g[0, 1:] = 0.05j * rng.uniform(-1, 1, nb)
    g[1:, 0] = g[0, 1:].conj()
    m = qubit_model(h=np.zeros((nb + 1, nb + 1)), gamma=g)
    q = [np.array([p, 1 - p]) for p in rng.uniform(0, 1, nb)]
    rd = ReducedDynamics(m, SplitSpec.first(nb + 1), EnvPopulations(product=tuple(q)))
    for t in (0.3, 1.7):
        assert np.abs(rd.factors(t) - rd.factors_direct(t)).max() < 1e-12


def test_coherence_modulus_bounded(rng):
    for _ in range(10):
        m = random_model(rng, 3, 3)
        sp = SplitSpec((0,), (1, 2))
        rd = ReducedDynamics(m, sp, EnvPopulations(full=rng.dirichlet(np.ones(m.dims[1] * m.dims[2]))))
        for t in np.linspace(0, 4, 9):
            assert np.abs(rd.factors(t)).max() <= 1 + 1e-12


def test_no_memory_means_single_exponential(rng):
    m = random_model(rng, 3, 3, hamiltonian=False, real_gamma=True)
    sp = SplitSpec((0,), (1, 2))
    assert not memory_necessary_condition(m, sp).present
    rd = ReducedDynamics(m, sp, EnvPopulations(full=rng.dirichlet(np.ones(m.dims[1] * m.dims[2]))))
    rates = phi_tensor(sub_model(m, sp.system))
    for t in np.linspace(0, 3, 10):
        assert np.abs(rd.factors(t) - np.exp(-t * rates)).max() < 1e-12


def test_system_state_t0_and_partial_trace(rng):
    for _ in range(10):
        m = random_model(rng, int(rng.integers(2, 5)), 3)
        if m.dimension > 81:
            continue
        sp = SplitSpec((0,), tuple(range(1, m.n)))
        rho_s = random_density_matrix(rng, m.dims[0])
        q = rng.dirichlet(np.ones(int(np.prod(sp.bath_dims(m)))))
        env = EnvPopulations(full=q)
        assert np.array_equal(system_state(m, sp, rho_s, env, 0.0), rho_s)
        full = evolve(m, compose_state(m, sp, rho_s, np.diag(q)), 1.3)
        assert np.abs(system_state(m, sp, rho_s, env, 1.3) - partial_trace(full, m.dims, sp.system)).max() < 1e-10


def test_qubit_system_state_structure():
    m = _bipartite(chi=0.2 - 0.6j)
    env = EnvPopulations(product=(np.array([0.3, 0.7]),))
    rho_s = np.array([[0.6, 0.1 + 0.2j], [0.1 - 0.2j, 0.4]])
    sp = SplitSpec.first(2)
    out = system_state(m, sp, rho_s, env, 0.9)
    f = coherence_factor(m, sp, env, (0,), (1,), 0.9)
    assert out[0, 0] == 0.6 and out[1, 1] == 0.4
    assert abs(out[0, 1] - rho_s[0, 1] * f) < 1e-15
    assert abs(out[1, 0] - np.conj(rho_s[0, 1] * f)) < 1e-15


def test_environment_frozen_for_diagonal_state(rng):
    m = random_model(rng, 3, 2)
    sp = SplitSpec((0,), (1, 2))
    rho_e = np.diag(rng.dirichlet(np.ones(4))).astype(complex)
    out = environment_state(m, sp, [0.3, 0.7], rho_e, 2.0)
    assert np.array_equal(out, rho_e)


def test_environment_state_partial_trace(rng):
    for _ in range(5):
        m = random_model(rng, 3, 2)
        sp = SplitSpec((1,), (0, 2))
        rho_s = random_density_matrix(rng, 2)
        rho_e = random_density_matrix(rng, 4)
        full = evolve(m, compose_state(m, sp, rho_s, rho_e), 0.8)
        out = environment_state(m, sp, rho_s, rho_e, 0.8)
        assert np.abs(out - partial_trace(full, m.dims, sp.bath)).max() < 1e-10


def test_memory_condition_cases():
    m = qubit_model(gamma=bipartite_gamma(1.0, 1.0, 0.5))
    assert memory_necessary_condition(m, SplitSpec.first(2)) == (False, [])
    m = _bipartite(chi=0.3j)
    assert memory_necessary_condition(m, SplitSpec.first(2)) == (True, [(0, 1)])
    ring = ring_model(RingCouplingParams(3, 1.0, 0.4))
    cond = memory_necessary_condition(ring, SplitSpec.first(3))
    assert cond.present and (0, 1) in cond.witnesses
    ring0 = ring_model(RingCouplingParams(3, 1.0, 0.0))
    assert not memory_necessary_condition(ring0, SplitSpec.first(3)).present


def test_negative_time_rejected(rng):
    m = random_model(rng, 2, 2)
    rd = ReducedDynamics(m, SplitSpec.first(2), EnvPopulations.uniform([m.dims[1]]))
    with pytest.raises(NegativeTime):
        rd.factors(-1.0)
    with pytest.raises(NegativeTime):
        rd.joint_kernel(0.5, -1.0)
