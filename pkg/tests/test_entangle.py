import numpy as np
import pytest

from multideph.entangle import (
    entanglement_region_scan,
    generator_min_eigenvalue,
    negativity_scan,
    partial_transpose,
    plus_product_state,
    ring_entangles,
    tilde_generator,
)
from multideph.errors import DimensionCap, DimensionMismatch
from multideph.exact import evolve, product_state
from multideph.model import ModelSpec, RingCouplingParams, bipartite_gamma, qubit_model, ring_model
from multideph.sampling import random_density_matrix, random_model
from multideph.split import SplitSpec


def test_partial_transpose_product_stays_psd(rng):
    rho = product_state(random_density_matrix(rng, 2), random_density_matrix(rng, 3))
    pt = partial_transpose(rho, SplitSpec((0,), (1,)), (2, 3))
    assert np.linalg.eigvalsh(pt)[0] >= -1e-12


def test_partial_transpose_involution(rng):
    rho = random_density_matrix(rng, 12)
    sp = SplitSpec((1,), (0, 2))
    pt = partial_transpose(rho, sp, (2, 3, 2))
    assert np.array_equal(partial_transpose(pt, sp, (2, 3, 2)), rho)
    assert np.trace(pt) == pytest.approx(np.trace(rho), abs=1e-15)


def test_partial_transpose_element_rule(rng):
    rho = random_density_matrix(rng, 6)
    pt = partial_transpose(rho, SplitSpec((0,), (1,)), (2, 3))
    r4, p4 = rho.reshape(2, 3, 2, 3), pt.reshape(2, 3, 2, 3)
    for s_t in range(2):
        for b_t in range(3):
            for s in range(2):
                for b in range(3):
                    assert p4[s_t, b_t, s, b] == r4[s_t, b, s, b_t]


def test_partial_transpose_bell_state():
    psi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    pt = partial_transpose(np.outer(psi, psi), SplitSpec((0,), (1,)), (2, 2))
    assert np.linalg.eigvalsh(pt)[0] == pytest.approx(-0.5, abs=1e-15)


def test_partial_transpose_shape_error():
    with pytest.raises(DimensionMismatch):
        partial_transpose(np.eye(5), SplitSpec((0,), (1,)), (2, 2))


def test_hamiltonian_generates_negativity():
    m = qubit_model(h=np.array([[0.0, 0.8], [0.8, 0.0]]), gamma=bipartite_gamma(0.1, 0.1, 0.0))
    res = negativity_scan(m, SplitSpec.first(2), plus_product_state(m), np.linspace(0, 2, 41))
    assert res.min_eigenvalue[0] >= -1e-12
    assert res.first_negative_time is not None


@pytest.mark.parametrize("chi", [-0.9, -0.3, 0.4j, 0.5 + 0.5j, 0.99j])
def test_dissipative_pair_never_entangles(chi):
    m = qubit_model(h=np.zeros((2, 2)), gamma=bipartite_gamma(1.0, 1.0, chi))
    res = negativity_scan(m, SplitSpec.first(2), plus_product_state(m), np.linspace(0, 5, 101))
    assert res.min_eigenvalue.min() >= -1e-9
    assert res.first_negative_time is None


def test_ring_four_entangles_directly():
    m = ring_model(RingCouplingParams(4, 1.0, 0.95))
    res = negativity_scan(m, SplitSpec.first(4), plus_product_state(m), np.linspace(0, 3, 61))
    assert res.first_negative_time is not None and res.first_negative_time > 0


def test_negativity_scan_cap():
    m = qubit_model(gamma=np.eye(3))
    with pytest.raises(DimensionCap):
        negativity_scan(m, SplitSpec.first(3), plus_product_state(m), [0.0], cap=4)


def test_tilde_trivial_for_real_diagonal_gamma():
    g = np.diag([0.3, 1.0, 0.7])
    h_t, g_t = tilde_generator(qubit_model(gamma=g), SplitSpec((0,), (1, 2)))
    assert np.all(h_t == 0)
    assert np.array_equal(g_t, g)


def test_tilde_equals_gamma_for_real_couplings(rng):
    m = random_model(rng, 3, 2, hamiltonian=False, real_gamma=True)
    h_t, g_t = tilde_generator(m, SplitSpec((0,), (1, 2)))
    # only the sign of the real cross block flips, a local unitary-free relabeling
    assert np.all(h_t == 0)
    assert np.abs(np.linalg.eigvalsh(g_t) - np.linalg.eigvalsh(m.gamma)).max() < 1e-12


def test_tilde_reconstruction(rng):
    for _ in range(10):
        m = random_model(rng, 3, 2)
        sp = SplitSpec((int(rng.integers(3)),), ())
        sp = SplitSpec(sp.system, tuple(i for i in range(3) if i not in sp.system))
        h_t, g_t = tilde_generator(m, sp)
        assert np.abs(g_t - g_t.conj().T).max() < 1e-12
        tilde = ModelSpec(m.subsystems, h_t, g_t)
        rho = random_density_matrix(rng, m.dimension)
        lhs = partial_transpose(evolve(m, rho, 1.1), sp, m.dims)
        rhs = evolve(tilde, partial_transpose(rho, sp, m.dims), 1.1)
        assert np.abs(lhs - rhs).max() < 1e-12


def test_ring_three_threshold():
    assert not ring_entangles(3, 0.5)
    assert ring_entangles(3, 0.9)
    model = ring_model(RingCouplingParams(3, 1.0, 0.9))
    assert generator_min_eigenvalue(model, SplitSpec.first(3)) < 0


def test_region_scan_shape():
    rows = entanglement_region_scan(range(2, 11))
    assert rows[0].chi_star_over_gamma is None
    assert (rows[0].lower_bound, rows[0].upper_bound) == (-1.0, 1.0)
    stars = [r.chi_star_over_gamma for r in rows[1:]]
    assert all(s is not None and 0 < s < 1 for s in stars)
    assert all(a > b for a, b in zip(stars, stars[1:]))
    # n = 3 frontier
    assert stars[0] == pytest.approx(2 ** -0.5, abs=2e-4)


def test_region_scan_custom_grid():
    rows = entanglement_region_scan([4], chi_grid=np.linspace(0, 1, 11))
    assert rows[0].chi_star_over_gamma == pytest.approx(0.6751, abs=2e-4)


@pytest.mark.parametrize("n,chi", [(3, 1.0), (4, 0.9), (5, 0.8), (6, 0.7), (4, 0.6)])
def test_generator_matches_direct_scan(n, chi):
    m = ring_model(RingCouplingParams(n, 1.0, chi))
    res = negativity_scan(m, SplitSpec.first(n), plus_product_state(m), np.linspace(0, 3, 61))
    if ring_entangles(n, chi):
        assert res.first_negative_time is not None
    else:
        assert res.first_negative_time is None
