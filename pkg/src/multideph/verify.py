"""Oracle-equivalence checks run by the ``verify`` command."""

from __future__ import annotations

from typing import Callable, List, NamedTuple, Optional

import numpy as np

from .exact import evolve, generalized_evolve
from .entangle import partial_transpose, tilde_generator
from .model import ModelSpec
from .operational import (
    as_markov_mixture,
    joint_probability,
    markov_residual,
    projectors_from_basis,
    random_selection_protocol,
    MeasurementScheme,
)
from .oracle import integrate_generalized, integrate_lindblad, measurement_statistics_bruteforce, simulate_mixture
from .sampling import random_density_matrix, random_generalized_model, random_model
from .split import EnvPopulations, SplitSpec, compose_state, environment_state, partial_trace, system_state


class CheckResult(NamedTuple):
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error < self.tolerance)


def _random_split(rng, n):
    k = int(rng.integers(1, n))
    perm = rng.permutation(n)
    return SplitSpec(tuple(sorted(perm[:k])), tuple(sorted(perm[k:])))


def _random_unitary(rng, d):
    q, r = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def _random_scheme(rng, d):
    return MeasurementScheme(*(projectors_from_basis(_random_unitary(rng, d)) for _ in range(3)))


def _env_state(rng, model, split):
    db = int(np.prod(split.bath_dims(model)))
    q = rng.dirichlet(np.ones(db))
    return np.diag(q).astype(complex), EnvPopulations(full=q)


def check_lindblad(rng, count=10):
    worst = 0.0
    for _ in range(count):
        m = random_model(rng, int(rng.integers(1, 5)), 3)
        rho = random_density_matrix(rng, m.dimension)
        for t in (0.1, 1.0, 5.0):
            worst = max(worst, np.abs(evolve(m, rho, t) - integrate_lindblad(m, rho, t)).max())
    return worst


def check_reduced(rng, count=10):
    worst = 0.0
    for _ in range(count):
        m = random_model(rng, int(rng.integers(2, 5)), 3)
        if m.dimension > 81:
            continue
        sp = _random_split(rng, m.n)
        rho_s = random_density_matrix(rng, int(np.prod(sp.system_dims(m))))
        rho_e, env = _env_state(rng, m, sp)
        full = evolve(m, compose_state(m, sp, rho_s, rho_e), 0.7)
        worst = max(worst,
                    np.abs(system_state(m, sp, rho_s, env, 0.7) - partial_trace(full, m.dims, sp.system)).max(),
                    np.abs(environment_state(m, sp, rho_s, rho_e, 0.7)
                           - partial_trace(full, m.dims, sp.bath)).max())
    return worst


def check_bruteforce(rng, count=5):
    worst = 0.0
    for _ in range(count):
        m = random_model(rng, 3, 2)
        sp = _random_split(rng, 3)
        ds = int(np.prod(sp.system_dims(m)))
        rho_s = random_density_matrix(rng, ds)
        rho_e, env = _env_state(rng, m, sp)
        scheme = _random_scheme(rng, ds)
        direct = joint_probability(m, sp, env, rho_s, scheme, 0.6, 0.9).probs
        brute = measurement_statistics_bruteforce(
            m, sp, compose_state(m, sp, rho_s, rho_e), scheme, 0.6, 0.9).table.probs
        worst = max(worst, np.abs(direct - brute).max())
    return worst


def check_reselection(rng, count=5):
    worst = 0.0
    for _ in range(count):
        m = random_model(rng, 3, 2)
        sp = _random_split(rng, 3)
        ds = int(np.prod(sp.system_dims(m)))
        _, env = _env_state(rng, m, sp)
        scheme = _random_scheme(rng, ds)
        w = rng.dirichlet(np.ones(ds), size=ds).T
        table = random_selection_protocol(m, sp, env, random_density_matrix(rng, ds), scheme, w, 0.8, 1.3)
        worst = max(worst, markov_residual(table))
    return worst


def check_mixture(rng, count=5):
    worst = 0.0
    for _ in range(count):
        m = random_model(rng, 3, 2)
        sp = _random_split(rng, 3)
        ds = int(np.prod(sp.system_dims(m)))
        _, env = _env_state(rng, m, sp)
        rho_s = random_density_matrix(rng, ds)
        scheme = _random_scheme(rng, ds)
        state, table = simulate_mixture(as_markov_mixture(m, sp, env), rho_s, scheme, 0.5, 0.4)
        worst = max(worst,
                    np.abs(state - system_state(m, sp, rho_s, env, 0.5)).max(),
                    np.abs(table.probs - joint_probability(m, sp, env, rho_s, scheme, 0.5, 0.4).probs).max())
    return worst


def check_tilde(rng, count=5):
    worst = 0.0
    for _ in range(count):
        m = random_model(rng, 3, 2)
        sp = _random_split(rng, 3)
        h_t, g_t = tilde_generator(m, sp)
        tilde = ModelSpec(m.subsystems, h_t, g_t)
        rho = random_density_matrix(rng, m.dimension)
        lhs = partial_transpose(evolve(m, rho, 0.9), sp, m.dims)
        rhs = evolve(tilde, partial_transpose(rho, sp, m.dims), 0.9)
        worst = max(worst, np.abs(lhs - rhs).max())
    return worst


def check_generalized(rng, count=3):
    worst = 0.0
    for _ in range(count):
        g = random_generalized_model(rng, 3, 4)
        rho = random_density_matrix(rng, g.dimension)
        worst = max(worst, np.abs(generalized_evolve(g, rho, 1.0) - integrate_generalized(g, rho, 1.0)).max())
    return worst


CHECKS = [
    ("closed form vs RK4", check_lindblad, 1e-8),
    ("reduced states vs partial traces", check_reduced, 1e-10),
    ("joint probability vs sequential simulation", check_bruteforce, 1e-10),
    ("reselection Markov residual", check_reselection, 1e-10),
    ("mixture representation", check_mixture, 1e-12),
    ("transposed generator", check_tilde, 1e-12),
    ("generalized closed form vs RK4", check_generalized, 1e-8),
]


def run_checks(seed: int = 0, tolerance: Optional[float] = None) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for name, func, tol in CHECKS:
        out.append(CheckResult(name, float(func(rng)), tol if tolerance is None else tolerance))
    return out
