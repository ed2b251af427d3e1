import numpy as np
import pytest

from multideph.errors import ConditionalUndefined, ModelError
from multideph.model import RingCouplingParams, bipartite_gamma, qubit_model, ring_model
from multideph.operational import (
    MarkovMixture,
    MeasurementScheme,
    as_markov_mixture,
    bipartite_table_closed_form,
    closed_form_cpf_bipartite,
    closed_form_cpf_ring,
    cpf_correlation,
    joint_probability,
    markov_residual,
    markovian_table,
    mixture_table,
    projectors_from_basis,
    qubit_direction_projectors,
    qubit_xnx_scheme,
    random_selection_protocol,
)
from multideph.oracle import measurement_statistics_bruteforce
from multideph.sampling import random_density_matrix, random_model
from multideph.split import EnvPopulations, ReducedDynamics, SplitSpec, compose_state, system_state

MIXED = np.eye(2, dtype=complex) / 2


def _bipartite(chi_bar, gamma=1.0, omega=0.0, chi_r=0.0):
    chi = chi_r + 1j * (chi_bar + omega)
    beta = abs(chi) ** 2 / gamma + 0.1
    return qubit_model(h=np.array([[0.0, omega], [omega, 0.0]]), gamma=bipartite_gamma(gamma, beta, chi))


def _random_unitary(rng, d):
    q, _ = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q


def _random_scheme(rng, d):
    return MeasurementScheme(*(projectors_from_basis(_random_unitary(rng, d)) for _ in range(3)))


def test_scheme_validation():
    x = qubit_direction_projectors(0.0)
    with pytest.raises(ModelError):
        MeasurementScheme(x[:1], x, x).validate()
    povm = np.array([np.sqrt(0.5) * np.eye(2), np.sqrt(0.5) * np.eye(2)])
    MeasurementScheme(povm, x, povm).validate()
    with pytest.raises(ModelError, match="projectors"):
        MeasurementScheme(x, povm, x).validate()
    with pytest.raises(ModelError):
        MeasurementScheme(x, x, x, first_values=[1, 2, 3])


def test_xnx_scheme_values():
    s = qubit_xnx_scheme(0.3)
    assert s.first_values.tolist() == [1.0, -1.0]
    n_plus = s.intermediate[0]
    assert abs(n_plus[1, 0] - np.exp(0.3j) / 2) < 1e-15


def test_markov_condition_factorizes(rng):
    m = qubit_model(gamma=bipartite_gamma(1.0, 1.0, 0.6), h=np.zeros((2, 2)))
    table = joint_probability(m, SplitSpec.first(2), EnvPopulations(product=(np.array([0.3, 0.7]),)),
                              random_density_matrix(rng, 2), _random_scheme(rng, 2), 0.8, 1.2)
    assert markov_residual(table) < 1e-12


@pytest.mark.parametrize("omega", [0.0, 0.4])
def test_bipartite_table_closed_form(rng, omega):
    qp, qm, gamma, chi_bar, phi = 0.4, 0.6, 1.0, -0.7, 1.1
    m = _bipartite(chi_bar, gamma, omega, chi_r=0.2)
    env = EnvPopulations(product=(np.array([qp, qm]),))
    rho0 = random_density_matrix(rng, 2)
    table = joint_probability(m, SplitSpec.first(2), env, rho0, qubit_xnx_scheme(phi), 0.6, 0.9)
    px = table.p_x()
    expected = bipartite_table_closed_form(qp, qm, gamma, chi_bar, phi, 0.6, 0.9) * px[None, None, :]
    assert np.abs(table.probs - expected).max() < 1e-12


def test_table_normalized(rng):
    for _ in range(10):
        m = random_model(rng, 3, 2)
        sp = SplitSpec((0,), (1, 2))
        env = EnvPopulations(full=rng.dirichlet(np.ones(4)))
        table = joint_probability(m, sp, env, random_density_matrix(rng, 2), _random_scheme(rng, 2),
                                  float(rng.uniform(0, 3)), float(rng.uniform(0, 3)))
        assert table.probs.min() >= -1e-12
        assert abs(table.probs.sum() - 1) < 1e-10


def test_bruteforce_agreement(rng):
    for _ in range(3):
        m = random_model(rng, 3, 2)
        sp = SplitSpec((2,), (0, 1))
        q = rng.dirichlet(np.ones(4))
        rho_s = random_density_matrix(rng, 2)
        scheme = _random_scheme(rng, 2)
        table = joint_probability(m, sp, EnvPopulations(full=q), rho_s, scheme, 0.4, 1.1)
        brute = measurement_statistics_bruteforce(m, sp, compose_state(m, sp, rho_s, np.diag(q)), scheme, 0.4, 1.1)
        assert np.abs(table.probs - brute.table.probs).max() < 1e-10


def test_two_qubit_system(rng):
    m = random_model(rng, 3, 2)
    sp = SplitSpec((0, 2), (1,))
    q = rng.dirichlet(np.ones(2))
    rho_s = random_density_matrix(rng, 4)
    scheme = _random_scheme(rng, 4)
    table = joint_probability(m, sp, EnvPopulations(full=q), rho_s, scheme, 0.7, 0.2)
    brute = measurement_statistics_bruteforce(m, sp, compose_state(m, sp, rho_s, np.diag(q)), scheme, 0.7, 0.2)
    assert np.abs(table.probs - brute.table.probs).max() < 1e-10


def test_rank_two_intermediate_projector(rng):
    m = random_model(rng, 3, 2)
    sp = SplitSpec((0, 1), (2,))
    u = _random_unitary(rng, 4)
    p = projectors_from_basis(u)
    mid = np.array([p[0] + p[1], p[2] + p[3]])
    scheme = MeasurementScheme(projectors_from_basis(_random_unitary(rng, 4)), mid,
                               projectors_from_basis(_random_unitary(rng, 4)))
    q = np.array([0.25, 0.75])
    rho_s = random_density_matrix(rng, 4)
    table = joint_probability(m, sp, EnvPopulations(full=q), rho_s, scheme, 0.9, 0.6)
    brute = measurement_statistics_bruteforce(m, sp, compose_state(m, sp, rho_s, np.diag(q)), scheme, 0.9, 0.6)
    assert np.abs(table.probs - brute.table.probs).max() < 1e-10


def test_product_and_full_env_tables_agree(rng):
    nb = 12
    g = 0.5 * np.eye(nb + 1, dtype=complex)
    g[0, 1:] = 0.04j * rng.uniform(-1, 1, nb)
    g[1:, 0] = g[0, 1:].conj()
    m = qubit_model(h=np.zeros((nb + 1, nb + 1)), gamma=g)
    qs = tuple(np.array([p, 1 - p]) for p in rng.uniform(0, 1, nb))
    prod = EnvPopulations(product=qs)
    full = EnvPopulations(full=prod.full_vector())
    scheme = qubit_xnx_scheme(0.7)
    sp = SplitSpec.first(nb + 1)
    a = joint_probability(m, sp, prod, MIXED, scheme, 1.2, 0.8)
    b = joint_probability(m, sp, full, MIXED, scheme, 1.2, 0.8)
    assert np.abs(a.probs - b.probs).max() < 1e-12


def test_zero_probability_branch_recorded():
    m = _bipartite(-0.5)
    plus = np.full((2, 2), 0.5, dtype=complex)
    table = joint_probability(m, SplitSpec.first(2), EnvPopulations.uniform([2]), plus, qubit_xnx_scheme(0.4), 0.3, 0.3)
    assert ("x", 1) in table.dropped
    assert np.all(table.probs[:, :, 1] == 0)
    assert abs(table.probs.sum() - 1) < 1e-12


def test_markov_residual_cases():
    env = EnvPopulations(product=(np.array([0.4, 0.6]),))
    sp = SplitSpec.first(2)
    scheme = qubit_xnx_scheme(np.pi / 2)
    plain = joint_probability(_bipartite(0.0, chi_r=0.3), sp, env, MIXED, scheme, 0.5, 0.5)
    assert markov_residual(plain) < 1e-12
    memory = joint_probability(_bipartite(-1.0), sp, env, MIXED, scheme, 0.5, 0.5)
    assert markov_residual(memory) > 1e-3


def test_cpf_markovian_zero(rng):
    m = qubit_model(gamma=bipartite_gamma(1.0, 1.0, 0.6), h=np.zeros((2, 2)))
    table = joint_probability(m, SplitSpec.first(2), EnvPopulations.uniform([2]), MIXED, qubit_xnx_scheme(0.9), 0.5, 1.5)
    for y in range(2):
        assert abs(cpf_correlation(table, y)) < 1e-12


def test_cpf_undefined():
    m = _bipartite(-0.5)
    z = np.array([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]).astype(complex)
    scheme = MeasurementScheme(z, z, z)
    up = np.diag([1.0, 0.0]).astype(complex)
    table = joint_probability(m, SplitSpec.first(2), EnvPopulations.uniform([2]), up, scheme, 0.3, 0.3)
    with pytest.raises(ConditionalUndefined):
        cpf_correlation(table, 1)


def test_closed_form_bipartite_zeros():
    t = np.linspace(0, 3, 7)
    assert np.all(closed_form_cpf_bipartite(0.4, 0.6, 1.0, -1.0, 0.0, t, t) == 0)
    assert np.all(closed_form_cpf_bipartite(0.4, 0.6, 1.0, 0.0, 1.0, t, t) == 0)


@pytest.mark.parametrize("chi_bar", [-0.2, -1.0])
def test_cpf_bipartite_fig1_parameters(chi_bar):
    qp, qm, phi = 0.4, 0.6, np.pi / 2
    m = _bipartite(chi_bar)
    env = EnvPopulations(product=(np.array([qp, qm]),))
    sp = SplitSpec.first(2)
    rd = ReducedDynamics(m, sp, env)
    for t in np.linspace(0, 3, 40):
        table = joint_probability(m, sp, env, MIXED, qubit_xnx_scheme(phi), t, t, rd)
        ref = closed_form_cpf_bipartite(qp, qm, 1.0, chi_bar, phi, t, t)
        for y in range(2):
            assert abs(cpf_correlation(table, y) - ref) < 1e-12


@pytest.mark.parametrize("n,chi,phi", [(3, 0.5, 0.0), (4, -0.2, 0.8), (6, 1.0, 0.3)])
def test_cpf_ring_closed_form(n, chi, phi):
    m = ring_model(RingCouplingParams(n, 1.0, chi))
    env = EnvPopulations.uniform([2] * (n - 1))
    sp = SplitSpec.first(n)
    rd = ReducedDynamics(m, sp, env)
    for t, tau in [(0.3, 0.3), (0.5, 1.2), (1.4, 0.2)]:
        table = joint_probability(m, sp, env, MIXED, qubit_xnx_scheme(phi), t, tau, rd)
        ref = closed_form_cpf_ring(n, 1.0, chi, phi, t, tau)
        for y in range(2):
            assert abs(cpf_correlation(table, y) - ref) < 1e-12


def test_random_selection_markov(rng):
    for _ in range(5):
        m = random_model(rng, 3, 2)
        sp = SplitSpec((1,), (0, 2))
        env = EnvPopulations(full=rng.dirichlet(np.ones(4)))
        w = rng.dirichlet(np.ones(2), size=2).T
        table = random_selection_protocol(m, sp, env, random_density_matrix(rng, 2), _random_scheme(rng, 2), w, 0.7, 0.9)
        assert markov_residual(table) < 1e-10
        assert abs(table.probs.sum() - 1) < 1e-12


def test_random_selection_deterministic(rng):
    m = _bipartite(-1.0)
    env = EnvPopulations(product=(np.array([0.4, 0.6]),))
    sp = SplitSpec.first(2)
    rho0 = random_density_matrix(rng, 2)
    w = np.array([[1.0, 1.0], [0.0, 0.0]])
    table = random_selection_protocol(m, sp, env, rho0, qubit_xnx_scheme(np.pi / 2), w, 0.5, 0.5)
    p = table.probs
    pz_given_y0 = p[:, 0, :].sum(1) / p[:, 0, :].sum()
    assert np.abs(p[:, 0, :] - np.outer(pz_given_y0, table.p_x())).max() < 1e-12
    assert np.all(p[:, 1, :] == 0)


def test_random_selection_removes_memory():
    m = _bipartite(-1.0)
    env = EnvPopulations(product=(np.array([0.4, 0.6]),))
    sp = SplitSpec.first(2)
    scheme = qubit_xnx_scheme(np.pi / 2)
    plain = joint_probability(m, sp, env, MIXED, scheme, 0.5, 0.5)
    w = np.array([[0.3, 0.8], [0.7, 0.2]])
    reselected = random_selection_protocol(m, sp, env, MIXED, scheme, w, 0.5, 0.5)
    assert markov_residual(plain) > 1e-3
    assert markov_residual(reselected) < 1e-10


def test_reselection_rejects_bad_distribution():
    m = _bipartite(-1.0)
    with pytest.raises(ModelError):
        random_selection_protocol(m, SplitSpec.first(2), EnvPopulations.uniform([2]), MIXED,
                                  qubit_xnx_scheme(0.0), np.array([[0.5, 0.5], [0.6, 0.5]]), 0.1, 0.1)


def test_mixture_state_equivalence(rng):
    for _ in range(20):
        m = random_model(rng, 3, 3)
        sp = SplitSpec((0,), (1, 2))
        db = m.dims[1] * m.dims[2]
        env = EnvPopulations(full=rng.dirichlet(np.ones(db)))
        mix = as_markov_mixture(m, sp, env)
        rho_s = random_density_matrix(rng, m.dims[0])
        t = float(rng.uniform(0, 3))
        diag = np.eye(m.dims[0], dtype=bool)
        avg = sum(w * np.where(diag, rho_s, rho_s * np.exp(-t * r)) for w, r in zip(mix.weights, mix.rates))
        assert np.abs(avg - system_state(m, sp, rho_s, env, t)).max() < 1e-12


def test_mixture_table_equivalence(rng):
    m = random_model(rng, 3, 2)
    sp = SplitSpec((0,), (1, 2))
    env = EnvPopulations(full=rng.dirichlet(np.ones(4)))
    rho_s = random_density_matrix(rng, 2)
    scheme = _random_scheme(rng, 2)
    direct = joint_probability(m, sp, env, rho_s, scheme, 0.9, 0.4)
    mixed = mixture_table(as_markov_mixture(m, sp, env), rho_s, scheme, 0.9, 0.4)
    assert np.abs(direct.probs - mixed.probs).max() < 1e-12


def test_single_configuration_mixture(rng):
    m = _bipartite(-1.0)
    env = EnvPopulations(full=[0.0, 1.0])
    mix = as_markov_mixture(m, SplitSpec.first(2), env)
    assert len(mix) == 1
    table = markovian_table(mix.rates[0], MIXED, qubit_xnx_scheme(np.pi / 2), 0.5, 0.5)
    assert markov_residual(table) < 1e-12


def test_mixture_invariants():
    with pytest.raises(ModelError):
        MarkovMixture([0.5, 0.6], np.zeros((2, 2, 2)), np.zeros((2, 1)))
    with pytest.raises(ModelError):
        MarkovMixture([1.0], np.ones((1, 2, 2)), np.zeros((1, 1)))
