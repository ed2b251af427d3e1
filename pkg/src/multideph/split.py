"""System/environment partition of a multipartite model.

Subsystem indices are 0-based here; config files use 1-based labels and are
converted on load.  System multi-indices list positions of the system
subsystems in ``split.system`` order, bath multi-indices likewise.

Only the populations of the initial bath state enter the reduced dynamics,
so environments are described by ``EnvPopulations``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, ModelError, NegativeTime
from .exact import PhiTensor, index_values
from .model import ModelSpec, basis_positions

log = logging.getLogger(__name__)

POPULATION_TOL = 1e-12
WITNESS_TOL = 1e-14


@dataclass(frozen=True)
class SplitSpec:
    system: Tuple[int, ...]
    bath: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "system", tuple(int(i) for i in self.system))
        object.__setattr__(self, "bath", tuple(int(i) for i in self.bath))

    @classmethod
    def first(cls, n: int, n_system: int = 1) -> "SplitSpec":
        """The first ``n_system`` subsystems form the system."""
        return cls(tuple(range(n_system)), tuple(range(n_system, n)))

    @classmethod
    def from_one_based(cls, system, bath) -> "SplitSpec":
        return cls(tuple(i - 1 for i in system), tuple(i - 1 for i in bath))

    def validate(self, n: int) -> "SplitSpec":
        s, b = set(self.system), set(self.bath)
        if not self.system or not self.bath:
            raise ModelError("system and bath must both be non-empty")
        if len(s) != len(self.system) or len(b) != len(self.bath):
            raise ModelError("repeated subsystem index in split")
        if s & b:
            raise ModelError(f"subsystems {sorted(s & b)} are in both system and bath")
        if s | b != set(range(n)):
            raise ModelError(f"split must cover subsystems 0..{n - 1}, got {sorted(s | b)}")
        return self

    def system_dims(self, model) -> Tuple[int, ...]:
        return tuple(model.dims[i] for i in self.system)

    def bath_dims(self, model) -> Tuple[int, ...]:
        return tuple(model.dims[i] for i in self.bath)


@dataclass(frozen=True)
class EnvPopulations:
    """Initial bath populations, either over full bath multi-indices or per subsystem."""

    full: Optional[np.ndarray] = None
    product: Optional[Tuple[np.ndarray, ...]] = None

    def __post_init__(self):
        if (self.full is None) == (self.product is None):
            raise ModelError("give exactly one of 'full' or 'product' populations")
        if self.full is not None:
            q = np.asarray(self.full, dtype=float).ravel()
            _check_probabilities(q, "bath populations")
            object.__setattr__(self, "full", q)
        else:
            qs = tuple(np.asarray(q, dtype=float).ravel() for q in self.product)
            for k, q in enumerate(qs):
                _check_probabilities(q, f"populations of bath subsystem {k}")
            object.__setattr__(self, "product", qs)

    @classmethod
    def uniform(cls, dims: Sequence[int]) -> "EnvPopulations":
        return cls(product=tuple(np.full(d, 1.0 / d) for d in dims))

    @classmethod
    def from_state(cls, rho_e: np.ndarray) -> "EnvPopulations":
        """Diagonal of a bath state; coherences are dropped with a warning."""
        rho_e = np.asarray(rho_e)
        off = rho_e - np.diag(np.diagonal(rho_e))
        if np.abs(off).max(initial=0.0) > 0:
            log.warning("bath coherences do not enter the reduced dynamics and are ignored")
        return cls(full=np.diagonal(rho_e).real.copy())

    @property
    def is_product(self) -> bool:
        return self.product is not None

    def full_vector(self) -> np.ndarray:
        if self.full is not None:
            return self.full
        out = np.ones(1)
        for q in self.product:
            out = np.kron(out, q)
        return out

    def check(self, bath_dims: Sequence[int]) -> "EnvPopulations":
        if self.product is not None:
            if tuple(len(q) for q in self.product) != tuple(bath_dims):
                raise DimensionMismatch(
                    f"product populations have sizes {[len(q) for q in self.product]}, "
                    f"bath dims are {list(bath_dims)}")
        elif len(self.full) != int(np.prod(bath_dims)):
            raise DimensionMismatch(
                f"{len(self.full)} bath populations for bath dimension {int(np.prod(bath_dims))}")
        return self


def _check_probabilities(q, what):
    if q.size == 0 or np.any(q < 0) or not np.all(np.isfinite(q)):
        raise ModelError(f"{what} must be finite and nonnegative")
    if abs(q.sum() - 1) > POPULATION_TOL:
        raise ModelError(f"{what} sum to {q.sum()!r}, not 1")


def sub_model(model: ModelSpec, indices: Sequence[int]) -> ModelSpec:
    """The model restricted to a subset of subsystems (no revalidation needed)."""
    idx = list(indices)
    return ModelSpec(tuple(model.subsystems[i] for i in idx),
                     model.h[np.ix_(idx, idx)], model.gamma[np.ix_(idx, idx)])


def _values(model, indices):
    pos = basis_positions([model.dims[i] for i in indices])
    return np.stack([model.subsystems[i][pos[:, k]] for k, i in enumerate(indices)], axis=1)


# ---------------------------------------------------------------------------
# rate decomposition


class SplitPhi(NamedTuple):
    system_part: complex
    bath_part: complex
    cross_part: complex

    @property
    def total(self) -> complex:
        return self.system_part + self.bath_part + self.cross_part


def split_phi(model: ModelSpec, split: SplitSpec, s_tilde, b_tilde, s, b) -> SplitPhi:
    """Decompose the rate of ``(s_tilde b_tilde, s b)`` into system, bath and coupling parts."""
    from .exact import phi

    split.validate(model.n)
    sys_model = sub_model(model, split.system)
    bath_model = sub_model(model, split.bath)
    system_part = phi(sys_model, s_tilde, s)
    bath_part = phi(bath_model, b_tilde, b)
    st = index_values(sys_model.subsystems, s_tilde)
    sv = index_values(sys_model.subsystems, s)
    bt = index_values(bath_model.subsystems, b_tilde)
    bv = index_values(bath_model.subsystems, b)
    g, h = model.gamma, model.h
    cross = 0j
    for a, i in enumerate(split.system):
        for c, j in enumerate(split.bath):
            sym = (g[i, j] + g[j, i]) / 2
            anti = (g[i, j] - g[j, i]) / 2
            hsym = (h[i, j] + h[j, i]) / 2
            cross += (st[a] - sv[a]) * sym * (bt[c] - bv[c])
            cross += anti * (bt[c] * sv[a] - st[a] * bv[c])
            cross += 1j * hsym * (st[a] * bt[c] - sv[a] * bv[c])
    return SplitPhi(complex(system_part), complex(bath_part), complex(cross))


def memory_coupling(model: ModelSpec, split: SplitSpec) -> np.ndarray:
    """``n_S x n_B`` matrix ``i (h_ij + h_ji)/2 - (G_ij - G_ji)/2``.

    The partially diagonal rate is ``Phi_sys + sum_ij (s~_i - s_i) K_ij b_j``.
    """
    S, B = list(split.system), list(split.bath)
    h, g = model.h, model.gamma
    hsym = (h[np.ix_(S, B)] + h[np.ix_(B, S)].T) / 2
    anti = (g[np.ix_(S, B)] - g[np.ix_(B, S)].T) / 2
    return 1j * hsym - anti


def partial_diagonal_phi(model: ModelSpec, split: SplitSpec, s_tilde, s, b) -> complex:
    """Rate of the element ``(s_tilde b, s b)``, diagonal in the bath."""
    from .exact import phi

    split.validate(model.n)
    sys_model = sub_model(model, split.system)
    bath_subs = tuple(model.subsystems[j] for j in split.bath)
    st = index_values(sys_model.subsystems, s_tilde)
    sv = index_values(sys_model.subsystems, s)
    bv = index_values(bath_subs, b)
    h, g = model.h, model.gamma
    out = phi(sys_model, s_tilde, s)
    for a, i in enumerate(split.system):
        for c, j in enumerate(split.bath):
            out += 1j * ((h[i, j] + h[j, i]) / 2) * (st[a] - sv[a]) * bv[c]
            out -= ((g[i, j] - g[j, i]) / 2) * (st[a] - sv[a]) * bv[c]
    return complex(out)


class MemoryCondition(NamedTuple):
    present: bool
    witnesses: list


def memory_necessary_condition(model: ModelSpec, split: SplitSpec) -> MemoryCondition:
    """Whether any system-bath coupling can make the reduced dynamics non-Markovian.

    ``witnesses`` lists the ``(i, j)`` pairs (``i`` in the system, ``j`` in the
    bath, 0-based) with a nonzero symmetric Hamiltonian coupling or a nonzero
    antisymmetric rate part.
    """
    split.validate(model.n)
    h, g = model.h, model.gamma
    pairs = []
    for i in split.system:
        for j in split.bath:
            if abs((h[i, j] + h[j, i]) / 2) > WITNESS_TOL or abs((g[i, j] - g[j, i]) / 2) > WITNESS_TOL:
                pairs.append((i, j))
    return MemoryCondition(bool(pairs), pairs)


# ---------------------------------------------------------------------------
# reduced dynamics


class ReducedDynamics:
    """Precomputed data for the system's coherence factors.

    ``rates_sys`` is the system-only rate table; ``shift[a, b, j]`` is the
    coefficient of ``b_j`` in the partially diagonal rate of the system
    element ``(a, b)``.
    """

    def __init__(self, model: ModelSpec, split: SplitSpec, env: EnvPopulations):
        split.validate(model.n)
        self.model, self.split = model, split
        self.env = env.check(split.bath_dims(model))
        self.sys_dims = split.system_dims(model)
        self.bath_dims = split.bath_dims(model)
        self.rates_sys = PhiTensor(sub_model(model, split.system)).table
        vs = _values(model, split.system)
        k = memory_coupling(model, split)
        self.shift = np.einsum("abi,ij->abj", vs[:, None, :] - vs[None, :, :], k)
        self.bath_spectra = [model.subsystems[j] for j in split.bath]

    @property
    def d_system(self) -> int:
        return len(self.rates_sys)

    def bath_values(self) -> np.ndarray:
        return _values(self.model, self.split.bath)

    def component_rates(self, bvals: np.ndarray) -> np.ndarray:
        """Rate table(s) at fixed bath configuration(s), shape ``(..., dS, dS)``."""
        out = self.rates_sys + np.einsum("abj,...j->...ab", self.shift, bvals)
        d = self.d_system
        out[..., np.arange(d), np.arange(d)] = 0.0
        return out

    def joint_kernel(self, t: float, tau: float) -> np.ndarray:
        """``K[a, b, c, e] = sum_b q_b exp(-t Phi_b[a, b]) exp(-tau Phi_b[c, e])``.

        The bath sum factorizes per bath subsystem for product populations
        because the combined exponent is linear in every ``b_j``.
        """
        if t < 0 or tau < 0:
            raise NegativeTime(f"times must be >= 0, got t={t}, tau={tau}")
        d = self.d_system
        eye = np.eye(d, dtype=bool)
        r_sys = np.where(eye, 0.0, self.rates_sys)
        base = np.exp(-t * r_sys)[:, :, None, None] * np.exp(-tau * r_sys)[None, None, :, :]
        sh = self.shift
        comb = t * sh[:, :, None, None, :] + tau * sh[None, None, :, :, :]
        if self.env.is_product:
            out = base.copy()
            for j, q in enumerate(self.env.product):
                out *= np.exp(-comb[..., j, None] * self.bath_spectra[j]) @ q
            return out
        bv = self.bath_values()
        return base * (np.exp(-np.einsum("abcej,kj->abcek", comb, bv)) @ self.env.full)

    def factors(self, t: float) -> np.ndarray:
        """Coherence factors ``f_{s~ s}(t)`` for all system pairs."""
        if t < 0:
            raise NegativeTime(f"time must be >= 0, got {t}")
        if t == 0:
            return np.ones_like(self.rates_sys)
        base = np.exp(-t * self.rates_sys)
        if self.env.is_product:
            prod = np.ones_like(base)
            for j, q in enumerate(self.env.product):
                spec = self.bath_spectra[j]
                prod *= np.exp(-t * self.shift[:, :, j, None] * spec) @ q
            out = base * prod
        else:
            bv = self.bath_values()
            out = base * (np.exp(-t * np.einsum("abj,kj->abk", self.shift, bv)) @ self.env.full)
        np.fill_diagonal(out, 1.0)
        return out

    def factors_direct(self, t: float) -> np.ndarray:
        """Same as ``factors`` by explicit summation over every bath configuration."""
        if t < 0:
            raise NegativeTime(f"time must be >= 0, got {t}")
        q = self.env.full_vector()
        out = np.zeros_like(self.rates_sys)
        for qb, bv in zip(q, self.bath_values()):
            if qb:
                out += qb * np.exp(-t * self.component_rates(bv))
        return out

    def log_rates(self, t: float) -> np.ndarray:
        """Exact ``-d/dt ln f`` for every pair (``nan`` where ``f`` vanishes)."""
        if self.env.is_product:
            out = self.rates_sys.copy()
            for j, q in enumerate(self.env.product):
                spec = self.bath_spectra[j]
                c = self.shift[:, :, j, None] * spec
                w = np.exp(-t * c) * q
                with np.errstate(invalid="ignore", divide="ignore"):
                    out = out + (w * c).sum(-1) / w.sum(-1)
        else:
            c = np.einsum("abj,kj->abk", self.shift, self.bath_values())
            w = np.exp(-t * c) * self.env.full
            with np.errstate(invalid="ignore", divide="ignore"):
                out = self.rates_sys + (w * c).sum(-1) / w.sum(-1)
        np.fill_diagonal(out, 0.0)
        return out


def coherence_factor(model, split, env, s_tilde, s, t) -> complex:
    """``f_{s~ s}(t) = sum_b q_b exp(-t Phi_{s~ b, s b})`` for one system pair."""
    rd = ReducedDynamics(model, split, env)
    a = int(np.ravel_multi_index(tuple(s_tilde), rd.sys_dims))
    c = int(np.ravel_multi_index(tuple(s), rd.sys_dims))
    return complex(rd.factors(t)[a, c])


def system_state(model, split, rho0_s, env, t, dynamics: ReducedDynamics = None) -> np.ndarray:
    """Reduced system state at ``t`` for a product initial state ``rho0_s x rho0_e``."""
    rd = dynamics or ReducedDynamics(model, split, env)
    rho0_s = np.asarray(rho0_s, dtype=complex)
    if rho0_s.shape != (rd.d_system, rd.d_system):
        raise DimensionMismatch(f"system state must be {rd.d_system}x{rd.d_system}")
    out = rho0_s * rd.factors(t)
    np.fill_diagonal(out, np.diagonal(rho0_s))
    return out


def environment_state(model, split, sys_pops, rho0_e, t) -> np.ndarray:
    """Reduced bath state at ``t``; ``sys_pops`` are the initial system populations.

    A 2-d ``sys_pops`` is read as a system state and only its diagonal used.
    """
    if t < 0:
        raise NegativeTime(f"time must be >= 0, got {t}")
    split.validate(model.n)
    p = np.asarray(sys_pops)
    if p.ndim == 2:
        p = np.diagonal(p)
    p = p.real.astype(float)
    bath_model = sub_model(model, split.bath)
    rates_b = PhiTensor(bath_model).table
    vs = _values(model, split.system)
    vb = _values(model, split.bath)
    if len(p) != len(vs):
        raise DimensionMismatch(f"{len(p)} system populations for system dimension {len(vs)}")
    rho0_e = np.asarray(rho0_e, dtype=complex)
    if rho0_e.shape != (len(vb), len(vb)):
        raise DimensionMismatch(f"bath state must be {len(vb)}x{len(vb)}")
    S, B = list(split.system), list(split.bath)
    h, g = model.h, model.gamma
    hsym = (h[np.ix_(S, B)] + h[np.ix_(B, S)].T) / 2
    anti = (g[np.ix_(S, B)] - g[np.ix_(B, S)].T) / 2
    couple = 1j * hsym + anti
    diff = vb[:, None, :] - vb[None, :, :]
    big_f = np.zeros_like(rates_b)
    for ps, v in zip(p, vs):
        if ps:
            big_f += ps * np.exp(-t * (rates_b + diff @ (v @ couple)))
    out = rho0_e * big_f
    np.fill_diagonal(out, np.diagonal(rho0_e))
    return out


# ---------------------------------------------------------------------------
# full-space helpers


def _perm(split):
    return list(split.system) + list(split.bath)


def compose_state(model: ModelSpec, split: SplitSpec, rho_s, rho_e) -> np.ndarray:
    """``rho_s x rho_e`` written in the model's natural basis order."""
    return to_natural(model, split, np.kron(rho_s, rho_e))


def to_natural(model: ModelSpec, split: SplitSpec, op: np.ndarray) -> np.ndarray:
    """Reorder an operator given in (system, bath) kron order to natural order."""
    perm = _perm(split)
    dims = [model.dims[i] for i in perm]
    n = model.n
    inv = np.argsort(perm)
    t = np.asarray(op).reshape(dims + dims)
    t = t.transpose(list(inv) + [n + k for k in inv])
    d = model.dimension
    return t.reshape(d, d)


def embed_system_operator(model: ModelSpec, split: SplitSpec, op: np.ndarray) -> np.ndarray:
    """``op x I_bath`` in natural order."""
    db = int(np.prod(split.bath_dims(model)))
    return to_natural(model, split, np.kron(op, np.eye(db)))


def partial_trace(rho: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Reduced state on subsystems ``keep`` (in the given order)."""
    dims = list(dims)
    n = len(dims)
    keep = list(keep)
    t = np.asarray(rho).reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    if 2 * n > 26:
        raise DimensionMismatch("partial_trace supports at most 13 subsystems")
    rows = list(letters[:n])
    cols = list(letters[n:2 * n])
    for i in range(n):
        if i not in keep:
            cols[i] = rows[i]
    out = "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    r = np.einsum("".join(rows) + "".join(cols) + "->" + out, t)
    dk = int(np.prod([dims[i] for i in keep]))
    return r.reshape(dk, dk)
