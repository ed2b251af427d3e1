"""Brute-force reference computations.

Nothing here evaluates the closed-form rate tensor: states are integrated
from the master equation written with explicit operators, and measurement
statistics are obtained by literally measuring, evolving and measuring
again.  The only input shared with the closed-form code is the model.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import DimensionCap, DimensionMismatch, NegativeTime, NoConvergence
from .model import GeneralizedModelSpec, ModelSpec, basis_positions
from .operational import BRANCH_TOL, MarkovMixture, MeasurementScheme, OutcomeTable
from .split import SplitSpec, partial_trace

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step RK4 with step halving.

    ``dt=None`` picks the first step from a norm bound on the generator.
    """

    dt: Optional[float] = None
    cap: int = 256
    tol: float = 1e-10
    max_halvings: int = 14

    def __post_init__(self):
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")


# ---------------------------------------------------------------------------
# operators


def _site_operators(subsystems) -> List[np.ndarray]:
    """``S^(i)`` on the full space as dense diagonal matrices."""
    dims = [len(s) for s in subsystems]
    pos = basis_positions(dims)
    return [np.diag(np.asarray(s, dtype=float)[pos[:, i]]).astype(complex)
            for i, s in enumerate(subsystems)]


def _is_diagonal(ops) -> bool:
    return all(np.count_nonzero(op - np.diag(np.diagonal(op))) == 0 for op in ops)


class LindbladGenerator:
    """``-i[H, rho] + sum_ij G_ij (A_i rho A_j - {A_j A_i, rho}/2)`` for Hermitian ``A_i``.

    Commuting diagonal operators are applied by broadcasting; anything else
    falls back to dense matrix products.
    """

    def __init__(self, hamiltonian: np.ndarray, ops: List[np.ndarray], rates: np.ndarray,
                 dense: bool = False):
        self.h = np.asarray(hamiltonian, dtype=complex)
        self.ops = [np.asarray(a, dtype=complex) for a in ops]
        self.rates = np.asarray(rates, dtype=complex)
        # sum_ij G_ij A_i rho A_j = sum_i A_i rho T_i with T_i = sum_j G_ij A_j
        self.t_ops = [sum(self.rates[i, j] * self.ops[j] for j in range(len(ops)))
                      for i in range(len(ops))] if ops else []
        k = sum((self.rates[i, j] * self.ops[j] @ self.ops[i]
                 for i in range(len(ops)) for j in range(len(ops))),
                np.zeros_like(self.h))
        self.k = k
        self.diagonal = not dense and _is_diagonal([self.h, self.k] + self.ops + self.t_ops)
        if self.diagonal:
            self.h_d = np.diagonal(self.h)
            self.k_d = np.diagonal(self.k)
            self.a_d = [np.diagonal(a) for a in self.ops]
            self.t_d = [np.diagonal(a) for a in self.t_ops]

    @property
    def dimension(self) -> int:
        return self.h.shape[0]

    def norm_bound(self) -> float:
        b = 2 * np.abs(self.h).max(initial=0.0) * self.dimension if not self.diagonal \
            else 2 * np.abs(self.h_d).max(initial=0.0)
        a = max((np.abs(op).max() for op in self.ops), default=0.0)
        return float(b + 2 * np.abs(self.rates).sum() * a * a)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        if self.diagonal:
            out = -1j * (self.h_d[:, None] - self.h_d[None, :]) * rho
            for a, t in zip(self.a_d, self.t_d):
                out += a[:, None] * rho * t[None, :]
            out -= 0.5 * (self.k_d[:, None] + self.k_d[None, :]) * rho
            return out
        out = -1j * (self.h @ rho - rho @ self.h)
        for a, t in zip(self.ops, self.t_ops):
            out += a @ rho @ t
        out -= 0.5 * (self.k @ rho + rho @ self.k)
        return out


def _rk4(rhs, rho0, t, n_steps):
    dt = t / n_steps
    rho = rho0.copy()
    for _ in range(n_steps):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


def integrate(gen: LindbladGenerator, rho0, t: float, cfg: IntegratorConfig = None) -> np.ndarray:
    """RK4 at successively halved steps until two refinements agree to ``cfg.tol``."""
    cfg = cfg or IntegratorConfig()
    if t < 0:
        raise NegativeTime(f"time must be >= 0, got {t}")
    rho0 = np.asarray(rho0, dtype=complex)
    if gen.dimension > cfg.cap:
        raise DimensionCap(f"dimension {gen.dimension} exceeds the oracle cap {cfg.cap}")
    if rho0.shape != (gen.dimension, gen.dimension):
        raise DimensionMismatch(f"state must be {gen.dimension}x{gen.dimension}")
    if t == 0:
        return rho0.copy()
    dt = cfg.dt if cfg.dt is not None else 0.5 / max(gen.norm_bound(), 1e-12)
    n_steps = max(1, math.ceil(t / dt))
    prev = _rk4(gen, rho0, t, n_steps)
    for _ in range(cfg.max_halvings):
        n_steps *= 2
        cur = _rk4(gen, rho0, t, n_steps)
        if np.abs(cur - prev).max() < cfg.tol:
            return cur
        prev = cur
    raise NoConvergence(f"RK4 did not converge to {cfg.tol} after {cfg.max_halvings} halvings")


def lindblad_generator(model: ModelSpec, dense: bool = False) -> LindbladGenerator:
    """Pairwise generator with ``H = 1/2 sum_ij h_ij S^(i) S^(j)``."""
    ops = _site_operators(model.subsystems)
    d = model.dimension
    ham = np.zeros((d, d), dtype=complex)
    for i in range(model.n):
        for j in range(model.n):
            if model.h[i, j]:
                ham += 0.5 * model.h[i, j] * ops[i] @ ops[j]
    return LindbladGenerator(ham, ops, model.gamma, dense=dense)


def integrate_lindblad(model: ModelSpec, rho0, t: float, cfg: IntegratorConfig = None,
                       dense: bool = False) -> np.ndarray:
    """Numerical solution of the pairwise master equation at time ``t``."""
    cfg = cfg or IntegratorConfig()
    if model.dimension > cfg.cap:
        raise DimensionCap(f"dimension {model.dimension} exceeds the oracle cap {cfg.cap}")
    return integrate(lindblad_generator(model, dense), rho0, t, cfg)


def generalized_generator(gmodel: GeneralizedModelSpec, dense: bool = False) -> LindbladGenerator:
    """Generator with product operators ``S_mu``."""
    site = _site_operators(gmodel.subsystems)
    d = gmodel.dimension
    eye = np.eye(d, dtype=complex)

    def product(mu):
        out = eye
        for i, m in enumerate(mu):
            if m:
                out = out @ site[i]
        return out

    labels, g = gmodel.gamma_matrix()
    ops = [product(mu) for mu in labels]
    ham = sum((0.5 * hm * product(mu) for mu, hm in gmodel.h_mu.items()),
              np.zeros((d, d), dtype=complex))
    return LindbladGenerator(ham, ops, g, dense=dense)


def integrate_generalized(gmodel: GeneralizedModelSpec, rho0, t: float,
                          cfg: IntegratorConfig = None, dense: bool = False) -> np.ndarray:
    cfg = cfg or IntegratorConfig()
    if gmodel.dimension > cfg.cap:
        raise DimensionCap(f"dimension {gmodel.dimension} exceeds the oracle cap {cfg.cap}")
    return integrate(generalized_generator(gmodel, dense), rho0, t, cfg)


# ---------------------------------------------------------------------------
# sequential measurements


def _embed(op: np.ndarray, model: ModelSpec, split: SplitSpec) -> np.ndarray:
    """``op`` on the system subsystems tensored with the bath identity, natural order."""
    dims = list(model.dims)
    n = model.n
    order = list(split.system) + list(split.bath)
    db = int(np.prod([dims[j] for j in split.bath]))
    big = np.kron(op, np.eye(db)).reshape([dims[i] for i in order] * 2)
    inv = np.argsort(order)
    big = big.transpose(list(inv) + [n + k for k in inv])
    return big.reshape(model.dimension, model.dimension)


def _measure(op, rho):
    out = op @ rho @ op.conj().T
    p = float(np.trace(out).real)
    return (out / p if p >= BRANCH_TOL else None), p


@dataclass
class BruteforceResult:
    table: OutcomeTable
    environment: Dict[Tuple[int, int], np.ndarray]


def measurement_statistics_bruteforce(model: ModelSpec, split: SplitSpec, rho0_se,
                                      scheme: MeasurementScheme, t: float, tau: float,
                                      cfg: IntegratorConfig = None) -> BruteforceResult:
    """Measure, integrate, measure, integrate, measure on the full state.

    ``environment[(y, x)]`` is the bath state right after the intermediate
    measurement, ``Tr_s[E_y rho_x(t)] / P(y|x)``.
    """
    split.validate(model.n)
    cfg = cfg or IntegratorConfig()
    if model.dimension > cfg.cap:
        raise DimensionCap(f"dimension {model.dimension} exceeds the oracle cap {cfg.cap}")
    gen = lindblad_generator(model)
    rho0_se = np.asarray(rho0_se, dtype=complex)
    first = [_embed(p, model, split) for p in scheme.first]
    mid = [_embed(p, model, split) for p in scheme.intermediate]
    last = [_embed(p, model, split) for p in scheme.last]
    probs = np.zeros((len(last), len(mid), len(first)))
    env = {}
    dropped = []
    for x, px_op in enumerate(first):
        rho_x, p_x = _measure(px_op, rho0_se)
        if rho_x is None:
            dropped.append(("x", x))
            continue
        rho_xt = integrate(gen, rho_x, t, cfg)
        for y, py_op in enumerate(mid):
            rho_yx, p_yx = _measure(py_op, rho_xt)
            if rho_yx is None:
                dropped.append(("y", y, x))
                continue
            env[(y, x)] = partial_trace(rho_yx, model.dims, split.bath)
            rho_final = integrate(gen, rho_yx, tau, cfg)
            for z, pz_op in enumerate(last):
                p_z = float(np.trace(pz_op.conj().T @ pz_op @ rho_final).real)
                probs[z, y, x] = p_z * p_yx * p_x
    table = OutcomeTable(probs, scheme.last_values, scheme.intermediate_values,
                         scheme.first_values, t, tau, dropped)
    return BruteforceResult(table, env)


def simulate_mixture(mixture: MarkovMixture, rho0_s, scheme: MeasurementScheme,
                     t: float, tau: float) -> Tuple[np.ndarray, OutcomeTable]:
    """Weighted average over independent Markovian runs of the bare system.

    Returns the averaged system state at ``t`` and the averaged outcome
    table of the three-measurement sequence.
    """
    if t < 0 or tau < 0:
        raise NegativeTime("times must be >= 0")
    rho0_s = np.asarray(rho0_s, dtype=complex)
    d = rho0_s.shape[0]
    diag = np.eye(d, dtype=bool)

    def run(rates, rho, s):
        # rho_{s~ s}(t) = rho_{s~ s} exp(-t Phi_{s~ s}); populations stay put
        return np.where(diag, rho, rho * np.exp(-s * np.where(diag, 0, rates)))

    state = np.zeros_like(rho0_s)
    nz, ny, nx = len(scheme.last), len(scheme.intermediate), len(scheme.first)
    probs = np.zeros((nz, ny, nx))
    for w, rates in zip(mixture.weights, mixture.rates):
        state += w * run(rates, rho0_s, t)
        for x, px_op in enumerate(scheme.first):
            rho_x, p_x = _measure(px_op, rho0_s)
            if rho_x is None:
                continue
            rho_xt = run(rates, rho_x, t)
            for y, py_op in enumerate(scheme.intermediate):
                rho_yx, p_yx = _measure(py_op, rho_xt)
                if rho_yx is None:
                    continue
                rho_f = run(rates, rho_yx, tau)
                for z, pz_op in enumerate(scheme.last):
                    p_z = float(np.trace(pz_op.conj().T @ pz_op @ rho_f).real)
                    probs[z, y, x] += w * p_z * p_yx * p_x
    table = OutcomeTable(probs, scheme.last_values, scheme.intermediate_values,
                         scheme.first_values, t, tau)
    return state, table
