"""Random models and states for property checks and the verification suite."""

from __future__ import annotations

import itertools

import numpy as np

from .model import GeneralizedModelSpec, make_model, validate_generalized


def random_psd(rng, n: int, scale: float = 1.0, rank: int = None) -> np.ndarray:
    """Hermitian PSD matrix with trace ``scale``."""
    k = n if rank is None else rank
    a = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
    g = a @ a.conj().T
    tr = np.trace(g).real
    return scale * g / tr if tr > 0 else g


def random_spectra(rng, n: int, max_dim: int = 3, min_dim: int = 2):
    return [rng.uniform(-1, 1, rng.integers(min_dim, max_dim + 1)) for _ in range(n)]


def random_model(rng, n: int, max_dim: int = 3, hamiltonian: bool = True, real_gamma: bool = False,
                 scale: float = 1.0):
    """Random pairwise model with spectra in ``[-1, 1]`` and ``Tr G = scale``."""
    subs = random_spectra(rng, n, max_dim)
    g = random_psd(rng, n, scale)
    if real_gamma:
        g = g.real
    h = np.zeros((n, n))
    if hamiltonian:
        h = rng.uniform(-1, 1, (n, n))
        h = (h + h.T) / 2
    return make_model(subs, h, g)


def random_density_matrix(rng, d: int, rank: int = None) -> np.ndarray:
    return random_psd(rng, d, 1.0, rank)


def random_generalized_model(rng, n: int, n_labels: int = 4, max_weight: int = None):
    """Qubit-spectrum model coupling random nonzero product labels."""
    max_weight = n if max_weight is None else max_weight
    labels = [mu for mu in itertools.product((0, 1), repeat=n) if 0 < sum(mu) <= max_weight]
    pick = rng.choice(len(labels), size=min(n_labels, len(labels)), replace=False)
    chosen = [labels[k] for k in pick]
    g = random_psd(rng, len(chosen))
    gm = {(chosen[a], chosen[b]): complex(g[a, b])
          for a in range(len(chosen)) for b in range(len(chosen))}
    h_mu = {mu: float(rng.uniform(-1, 1)) for mu in chosen}
    subs = [np.sort(rng.uniform(-1, 1, 2)) for _ in range(n)]
    return validate_generalized(GeneralizedModelSpec(tuple(subs), h_mu, gm))
