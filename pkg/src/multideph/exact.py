"""Closed-form evolution of the multipartite dephasing dynamics.

Every density-matrix element in the product eigenbasis evolves on its own,
``rho_t[a, b] = rho_0[a, b] * exp(-Phi[a, b] t)``, with the complex rate
``Phi = i (Omega_a - Omega_b) + Upsilon_ab``.

A multi-index is a tuple of spectrum *positions* (one per subsystem), so
membership is never decided by float comparison.
"""

from __future__ import annotations

import json
from functools import cached_property
from typing import Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, NegativeTime, UnknownMultiIndex
from .model import GeneralizedModelSpec, ModelSpec, basis_positions

MultiIndex = Tuple[int, ...]

DENSE_CACHE_MAX = 256
_ROW_CHUNK = 64


def index_values(subsystems, s: Sequence[int]) -> np.ndarray:
    """Eigenvalues selected by the positions in ``s``."""
    if len(s) != len(subsystems):
        raise DimensionMismatch(
            f"multi-index has {len(s)} entries, model has {len(subsystems)} subsystems")
    try:
        return np.array([subsystems[i][int(p)] for i, p in enumerate(s)], dtype=float)
    except IndexError:
        raise UnknownMultiIndex(f"multi-index {tuple(s)} is outside the spectra") from None


def multi_index(model, values: Sequence[float]) -> MultiIndex:
    """Positions of the given eigenvalues (exact match, first occurrence)."""
    if len(values) != model.n:
        raise DimensionMismatch(f"expected {model.n} eigenvalues, got {len(values)}")
    out = []
    for i, v in enumerate(values):
        hits = np.flatnonzero(model.subsystems[i] == v)
        if hits.size == 0:
            raise UnknownMultiIndex(f"{v} is not an eigenvalue of subsystem {i}")
        out.append(int(hits[0]))
    return tuple(out)


def flat_index(dims: Sequence[int], s: Sequence[int]) -> int:
    return int(np.ravel_multi_index(tuple(s), tuple(dims))) if len(dims) else 0


def omega(model: ModelSpec, s: Sequence[int]) -> float:
    """Frequency ``1/2 sum_ij h_ij s_i s_j`` of basis vector ``s``."""
    v = index_values(model.subsystems, s)
    return 0.5 * float(v @ model.h @ v)


def upsilon(model: ModelSpec, s_tilde: Sequence[int], s: Sequence[int]) -> complex:
    """Dissipative part of the rate for the element ``(s_tilde, s)``."""
    vt = index_values(model.subsystems, s_tilde)
    v = index_values(model.subsystems, s)
    g = model.gamma
    d = vt - v
    real_part = 0.5 * (d @ g @ d)
    # sum_ij G_ij/2 (vt_j v_i - vt_i v_j)
    imag_part = 0.5 * (v @ g @ vt - vt @ g @ v)
    return complex(real_part + imag_part)


def phi(model: ModelSpec, s_tilde: Sequence[int], s: Sequence[int]) -> complex:
    """Complex dephasing rate of the element ``(s_tilde, s)``."""
    return 1j * (omega(model, s_tilde) - omega(model, s)) + upsilon(model, s_tilde, s)


def phi_values(h: np.ndarray, gamma: np.ndarray, vt: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rates for broadcastable stacks of eigenvalue vectors ``(..., n)``.

    Uses the quadratic-form split ``Upsilon = (q(vt) + q(v)) / 2 - vt.G.v``
    with ``q(x) = x.G.x`` (real for Hermitian ``G``).
    """
    om_t = 0.5 * np.einsum("...i,ij,...j->...", vt, h, vt)
    om = 0.5 * np.einsum("...i,ij,...j->...", v, h, v)
    q_t = np.einsum("...i,ij,...j->...", vt, gamma, vt).real
    q = np.einsum("...i,ij,...j->...", v, gamma, v).real
    cross = np.einsum("...i,ij,...j->...", vt, gamma, v)
    return 1j * (om_t - om) + 0.5 * (q_t + q) - cross


class PhiTensor:
    """Lazy accessor for the rate tensor of a model.

    ``tensor[s_tilde, s]`` evaluates one element; ``table`` is the dense
    ``d x d`` array, cached when ``d <= 256``.
    """

    def __init__(self, model: ModelSpec):
        self.model = model
        self._values = None

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            self._values = self.model.basis_values()
        return self._values

    def __getitem__(self, key) -> complex:
        s_tilde, s = key
        return phi(self.model, s_tilde, s)

    def rows(self, start: int, stop: int) -> np.ndarray:
        v = self.values
        out = phi_values(self.model.h, self.model.gamma, v[start:stop, None, :], v[None, :, :])
        # structural zeros on the diagonal
        k = np.arange(start, min(stop, len(v)))
        out[k - start, k] = 0.0
        return out

    def compute(self) -> np.ndarray:
        d = len(self.values)
        if d <= DENSE_CACHE_MAX:
            return self.rows(0, d)
        return np.concatenate([self.rows(a, a + _ROW_CHUNK) for a in range(0, d, _ROW_CHUNK)])

    @cached_property
    def table(self) -> np.ndarray:
        t = self.compute()
        t.setflags(write=False)
        return t


def phi_tensor(model: ModelSpec) -> np.ndarray:
    return PhiTensor(model).table


def _check_time(t):
    if t < 0:
        raise NegativeTime(f"time must be >= 0, got {t}")


def propagate(rho0: np.ndarray, rates: np.ndarray, t: float) -> np.ndarray:
    """Elementwise ``rho0 * exp(-rates t)`` with the diagonal copied exactly."""
    _check_time(t)
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != rates.shape:
        raise DimensionMismatch(f"state shape {rho0.shape} does not match rates {rates.shape}")
    out = rho0 * np.exp(-rates * t)
    np.fill_diagonal(out, np.diagonal(rho0))
    return out


def evolve(model: ModelSpec, rho0: np.ndarray, t: float, tensor: PhiTensor = None) -> np.ndarray:
    """Exact state at time ``t`` from ``rho0`` (any state, correlated or not)."""
    _check_time(t)
    tensor = tensor if tensor is not None else PhiTensor(model)
    rho0 = np.asarray(rho0, dtype=complex)
    d = model.dimension
    if rho0.shape != (d, d):
        raise DimensionMismatch(f"state must be {d}x{d}, got {rho0.shape}")
    if d <= DENSE_CACHE_MAX:
        return propagate(rho0, tensor.table, t)
    out = np.empty_like(rho0)
    for a in range(0, d, _ROW_CHUNK):
        out[a:a + _ROW_CHUNK] = rho0[a:a + _ROW_CHUNK] * np.exp(-tensor.rows(a, a + _ROW_CHUNK) * t)
    np.fill_diagonal(out, np.diagonal(rho0))
    return out


# ---------------------------------------------------------------------------
# generalized couplings


def product_eigenvalue(mu: Sequence[int], values: np.ndarray) -> float:
    """Eigenvalue of ``S_mu`` on a basis vector: ``prod_i (mu_i s_i + 1 - mu_i)``."""
    out = 1.0
    for m, s in zip(mu, values):
        out *= m * s + (1 - m)
    return out


def _gen_values(gmodel, s):
    try:
        return index_values(gmodel.subsystems, s)
    except DimensionMismatch as e:
        raise UnknownMultiIndex(str(e)) from None


def generalized_omega(gmodel: GeneralizedModelSpec, s: Sequence[int]) -> float:
    v = _gen_values(gmodel, s)
    return 0.5 * sum(product_eigenvalue(mu, v) * hm for mu, hm in gmodel.h_mu.items())


def generalized_upsilon(gmodel: GeneralizedModelSpec, s_tilde, s) -> complex:
    """``sum G_{mu,nu} (l~^mu l~^nu / 2 + l^mu l^nu / 2 - l~^mu l^nu)``.

    ``l~^mu`` is the eigenvalue of ``S_mu`` on ``s_tilde``.  For a single
    positive rate this is ``G (l~ - l)^2 / 2 >= 0``, i.e. coherences decay.
    """
    vt = _gen_values(gmodel, s_tilde)
    v = _gen_values(gmodel, s)
    total = 0j
    for (mu, nu), g in gmodel.gamma_munu.items():
        lt_mu = product_eigenvalue(mu, vt)
        lt_nu = product_eigenvalue(nu, vt)
        l_mu = product_eigenvalue(mu, v)
        l_nu = product_eigenvalue(nu, v)
        total += g * (0.5 * lt_mu * lt_nu + 0.5 * l_mu * l_nu - lt_mu * l_nu)
    return complex(total)


def generalized_phi(gmodel: GeneralizedModelSpec, s_tilde, s) -> complex:
    return (1j * (generalized_omega(gmodel, s_tilde) - generalized_omega(gmodel, s))
            + generalized_upsilon(gmodel, s_tilde, s))


def generalized_phi_tensor(gmodel: GeneralizedModelSpec) -> np.ndarray:
    pos = basis_positions(gmodel.dims)
    vals = np.stack([gmodel.subsystems[i][pos[:, i]] for i in range(gmodel.n)], axis=1)
    lam = {}

    def eig(mu):
        if mu not in lam:
            m = np.asarray(mu, dtype=float)
            lam[mu] = np.prod(m * vals + (1 - m), axis=1)
        return lam[mu]

    om = np.zeros(len(vals))
    for mu, hm in gmodel.h_mu.items():
        om += 0.5 * hm * eig(tuple(mu))
    ups = np.zeros((len(vals), len(vals)), dtype=complex)
    for (mu, nu), g in gmodel.gamma_munu.items():
        a, b = eig(tuple(mu)), eig(tuple(nu))
        ups += g * (0.5 * (a * b)[:, None] + 0.5 * (a * b)[None, :] - np.outer(a, b))
    out = 1j * (om[:, None] - om[None, :]) + ups
    np.fill_diagonal(out, 0.0)
    return out


def generalized_evolve(gmodel: GeneralizedModelSpec, rho0: np.ndarray, t: float) -> np.ndarray:
    return propagate(rho0, generalized_phi_tensor(gmodel), t)


# ---------------------------------------------------------------------------
# density matrices


def check_density_matrix(rho: np.ndarray, herm_tol=1e-12, trace_tol=1e-12, psd_tol=1e-9):
    """Raise ``ValueError`` unless ``rho`` is Hermitian, unit-trace and PSD."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionMismatch(f"density matrix must be square, got {rho.shape}")
    if np.abs(rho - rho.conj().T).max() > herm_tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > trace_tol:
        raise ValueError(f"density matrix trace is {np.trace(rho)}")
    w = np.linalg.eigvalsh((rho + rho.conj().T) / 2)
    if w[0] < -psd_tol:
        raise ValueError(f"density matrix has eigenvalue {w[0]:.3e}")
    return rho


def pure_state(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def product_state(*rhos) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for r in rhos:
        out = np.kron(out, r)
    return out


def plus_state(dim: int = 2) -> np.ndarray:
    """Equal superposition of all basis vectors of one subsystem."""
    return np.full((dim, dim), 1.0 / dim, dtype=complex)


def rho_to_json(rho: np.ndarray) -> str:
    """Rows of ``[re, im]`` pairs in the package basis order."""
    rows = [[[float(v.real), float(v.imag)] for v in row] for row in np.asarray(rho, dtype=complex)]
    return json.dumps(rows)


def rho_from_json(text) -> np.ndarray:
    rows = json.loads(text) if isinstance(text, str) else text
    return np.array([[complex(re, im) for re, im in row] for row in rows])
