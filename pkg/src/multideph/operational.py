"""Statistics of three successive measurements on the system.

Measurements happen at ``0``, ``t`` and ``t + tau``.  Because the bath
populations are frozen and the measurements act on the system only, the
joint probability is an average over bath configurations ``b`` of
Markovian dephasing runs with rates ``Phi_{s~ b, s b}``:

    P(z, y, x) = P(x) sum_b q_b Tr[E_z (G_b(tau) o (Pi_y (G_b(t) o rho_x) Pi_y^+))]

with ``G_b(t)[a, c] = exp(-t Phi_{a b, c b})`` and ``o`` the elementwise
product.  For rank-one intermediate projectors this is the familiar
product of a ``(z | y)`` bracket and a ``(y | x)`` bracket inside the bath
sum.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import ConditionalUndefined, DimensionMismatch, ModelError
from .split import EnvPopulations, ReducedDynamics, SplitSpec

log = logging.getLogger(__name__)

BRANCH_TOL = 1e-14
COMPLETENESS_TOL = 1e-12


def _stack(ops):
    return np.array([np.asarray(o, dtype=complex) for o in ops])


@dataclass(frozen=True)
class MeasurementScheme:
    """Measurement operators ``Pi_m`` for the three stages with numeric outcome values.

    The first and last stages may be general (``sum Pi^+ Pi = I``); the
    intermediate stage must consist of orthogonal projectors.
    """

    first: np.ndarray
    intermediate: np.ndarray
    last: np.ndarray
    first_values: np.ndarray = None
    intermediate_values: np.ndarray = None
    last_values: np.ndarray = None

    def __post_init__(self):
        for name in ("first", "intermediate", "last"):
            object.__setattr__(self, name, _stack(getattr(self, name)))
            vals = getattr(self, name + "_values")
            k = len(getattr(self, name))
            if vals is None:
                vals = np.array([1.0, -1.0]) if k == 2 else np.arange(k, dtype=float)
            vals = np.asarray(vals, dtype=float)
            if len(vals) != k:
                raise ModelError(f"{name}: {k} operators but {len(vals)} outcome values")
            object.__setattr__(self, name + "_values", vals)

    @property
    def dim(self) -> int:
        return self.first.shape[-1]

    def effects(self, stage: str) -> np.ndarray:
        ops = getattr(self, stage)
        return np.einsum("kba,kbc->kac", ops.conj(), ops)

    def validate(self, dim: Optional[int] = None) -> "MeasurementScheme":
        d = self.dim if dim is None else dim
        for stage in ("first", "intermediate", "last"):
            ops = getattr(self, stage)
            if ops.ndim != 3 or ops.shape[1:] != (d, d):
                raise DimensionMismatch(f"{stage} operators must be {d}x{d}")
            total = self.effects(stage).sum(0)
            if np.abs(total - np.eye(d)).max() > COMPLETENESS_TOL:
                raise ModelError(f"{stage} operators do not resolve the identity")
        p = self.intermediate
        for a in range(len(p)):
            for b in range(len(p)):
                target = p[a] if a == b else np.zeros_like(p[a])
                if np.abs(p[a] @ p[b] - target).max() > COMPLETENESS_TOL:
                    raise ModelError(
                        f"intermediate operators {a}, {b} are not orthogonal projectors")
        return self


def projectors_from_basis(u: np.ndarray) -> np.ndarray:
    """Rank-one projectors onto the columns of unitary ``u``."""
    u = np.asarray(u, dtype=complex)
    return np.einsum("ak,bk->kab", u, u.conj())


def qubit_direction_projectors(theta_phi: float) -> np.ndarray:
    """Projectors onto spin +1/-1 along ``(cos phi, sin phi, 0)`` in the (+z, -z) basis."""
    plus = np.array([1.0, np.exp(1j * theta_phi)]) / np.sqrt(2)
    minus = np.array([1.0, -np.exp(1j * theta_phi)]) / np.sqrt(2)
    return np.array([np.outer(plus, plus.conj()), np.outer(minus, minus.conj())])


def qubit_xnx_scheme(phi: float) -> MeasurementScheme:
    """x, then n = (cos phi, sin phi, 0), then x; outcomes ordered (+1, -1)."""
    x = qubit_direction_projectors(0.0)
    return MeasurementScheme(x, qubit_direction_projectors(phi), x)


@dataclass
class OutcomeTable:
    """``probs[z, y, x]`` with the outcome values of each stage."""

    probs: np.ndarray
    z_values: np.ndarray
    y_values: np.ndarray
    x_values: np.ndarray
    t: float = 0.0
    tau: float = 0.0
    dropped: List[tuple] = field(default_factory=list)

    def p_x(self) -> np.ndarray:
        return self.probs.sum(axis=(0, 1))

    def p_y(self) -> np.ndarray:
        return self.probs.sum(axis=(0, 2))

    def to_dict(self) -> dict:
        return {
            "t": self.t, "tau": self.tau,
            "z_values": self.z_values.tolist(), "y_values": self.y_values.tolist(),
            "x_values": self.x_values.tolist(),
            "probs": self.probs.tolist(),
            "dropped": [list(d) for d in self.dropped],
        }


def _post_states(ops, rho):
    """Post-measurement states and probabilities of one stage."""
    raw = np.einsum("kab,bc,kdc->kad", ops, rho, ops.conj())
    p = np.einsum("kaa->k", raw).real
    states = np.zeros_like(raw)
    ok = p >= BRANCH_TOL
    states[ok] = raw[ok] / p[ok, None, None]
    return states, p


def joint_probability(model, split: SplitSpec, env: EnvPopulations, rho0_s, scheme: MeasurementScheme,
                      t: float, tau: float, dynamics: ReducedDynamics = None) -> OutcomeTable:
    """Exact ``P(z, y, x)`` for a product initial state ``rho0_s x rho0_e``.

    Branches with ``P(x) < 1e-14`` are recorded in ``dropped`` and have zero
    entries.
    """
    rd = dynamics or ReducedDynamics(model, split, env)
    scheme.validate(rd.d_system)
    rho0_s = np.asarray(rho0_s, dtype=complex)
    rho_x, p_x = _post_states(scheme.first, rho0_s)
    dropped = [("x", int(k)) for k in np.flatnonzero(p_x < BRANCH_TOL)]
    kernel = rd.joint_kernel(t, tau)
    pi_y = scheme.intermediate
    e_z = scheme.effects("last")
    cond = np.einsum("zec,yca,xab,yeb,abce->zyx", e_z, pi_y, rho_x, pi_y.conj(), kernel,
                     optimize=True).real
    probs = cond * np.where(p_x < BRANCH_TOL, 0.0, p_x)[None, None, :]
    py_x = cond.sum(0)
    for x in range(len(p_x)):
        if p_x[x] >= BRANCH_TOL:
            dropped += [("y", int(y), int(x)) for y in np.flatnonzero(py_x[:, x] < BRANCH_TOL)]
    if dropped:
        log.info("zero-probability branches excluded from conditioning: %s", dropped)
    return OutcomeTable(probs, scheme.last_values, scheme.intermediate_values,
                        scheme.first_values, t, tau, dropped)


def markov_residual(table: OutcomeTable) -> float:
    """``max |P(z,y,x) - P(z|y) P(y|x) P(x)|`` with marginal conditionals."""
    p = table.probs
    px = p.sum(axis=(0, 1))
    py = p.sum(axis=(0, 2))
    pzy = p.sum(axis=2)
    pyx = p.sum(axis=0)
    worst = 0.0
    for z in range(p.shape[0]):
        for y in range(p.shape[1]):
            for x in range(p.shape[2]):
                if px[x] < BRANCH_TOL or py[y] < BRANCH_TOL:
                    continue
                markov = (pzy[z, y] / py[y]) * (pyx[y, x] / px[x]) * px[x]
                worst = max(worst, abs(p[z, y, x] - markov))
    return float(worst)


def cpf_correlation(table: OutcomeTable, y: int) -> float:
    """Conditional past-future correlation for intermediate outcome index ``y``."""
    p = table.probs
    p_y = p[:, y, :].sum()
    if p_y < BRANCH_TOL:
        raise ConditionalUndefined(f"P(y={table.y_values[y]}) = {p_y:.3e}")
    pzx = p[:, y, :] / p_y
    pz = pzx.sum(1)
    px = pzx.sum(0)
    z = table.z_values
    x = table.x_values
    return float(z @ (pzx - np.outer(pz, px)) @ x)


# ---------------------------------------------------------------------------
# closed forms for the two qubit examples


def bipartite_table_closed_form(q_plus, q_minus, gamma, chi_bar, phi, t, tau) -> np.ndarray:
    """``P(z, y, x) / P(x)`` for the x-n-x scheme on a qubit with one bath qubit.

    Indexed ``[z, y, x]`` with outcome order (+1, -1).
    """
    e_t = np.exp(-2 * gamma * t)
    e_tau = np.exp(-2 * gamma * tau)
    a, b = 2 * t * chi_bar, 2 * tau * chi_bar
    f_plus_t = e_t * (q_plus * np.cos(a + phi) + q_minus * np.cos(a - phi))
    f_minus_tau = e_tau * (q_plus * np.cos(b - phi) + q_minus * np.cos(b + phi))
    f_both = e_t * e_tau * (q_plus * np.cos(a + phi) * np.cos(b - phi)
                            + q_minus * np.cos(a - phi) * np.cos(b + phi))
    v = np.array([1.0, -1.0])
    z, y, x = np.meshgrid(v, v, v, indexing="ij")
    return 0.25 * (1 + y * x * f_plus_t + z * y * f_minus_tau + z * x * f_both)


def closed_form_cpf_bipartite(q_plus, q_minus, gamma, chi_bar, phi, t, tau):
    """CPF of the x-n-x scheme for a qubit with one bath qubit, assuming ``P(x) = 1/2``."""
    return (-(4 * q_plus * q_minus) * np.sin(phi) ** 2 * np.exp(-2 * gamma * (t + tau))
            * np.sin(2 * t * chi_bar) * np.sin(2 * tau * chi_bar))


def ring_f_phi(n, gamma, chi, phi, t):
    nb = n // 2
    return np.exp(-2 * gamma * t) * np.cos(2 * chi * t) ** nb * np.cos(phi)


def ring_f_phi_two(n, gamma, chi, phi, t, tau):
    nb = n // 2
    return 0.5 * np.exp(-2 * gamma * (t + tau)) * (
        np.cos(2 * chi * (t + tau)) ** nb + np.cos(2 * phi) * np.cos(2 * chi * (t - tau)) ** nb)


def closed_form_cpf_ring(n, gamma, chi, phi, t, tau):
    """CPF of the x-n-x scheme on the first ring qubit, uniform bath, ``P(x) = 1/2``."""
    return ring_f_phi_two(n, gamma, chi, phi, t, tau) - (
        ring_f_phi(n, gamma, chi, phi, t) * ring_f_phi(n, gamma, chi, phi, tau))


# ---------------------------------------------------------------------------
# random reselection


def reselection_states(scheme: MeasurementScheme) -> np.ndarray:
    """States ``Pi_y / Tr Pi_y`` substituted after the intermediate measurement.

    For rank-one projectors these are the post-measurement states.
    """
    p = scheme.intermediate
    tr = np.einsum("kaa->k", p).real
    return p / tr[:, None, None]


def random_selection_protocol(model, split, env, rho0_s, scheme: MeasurementScheme, reselect,
                              t: float, tau: float, dynamics: ReducedDynamics = None) -> OutcomeTable:
    """Joint statistics when the intermediate outcome is discarded and replaced.

    ``reselect[y, x]`` is the probability of preparing ``rho_y`` given first
    outcome ``x``; the ``E_y`` bracket becomes the identity.
    """
    rd = dynamics or ReducedDynamics(model, split, env)
    scheme.validate(rd.d_system)
    w = np.asarray(reselect, dtype=float)
    ny, nx = len(scheme.intermediate), len(scheme.first)
    if w.shape != (ny, nx):
        raise DimensionMismatch(f"reselection table must be {ny}x{nx}")
    if np.any(w < 0) or np.abs(w.sum(0) - 1).max() > 1e-12:
        raise ModelError("reselection columns must be probability distributions")
    rho_x, p_x = _post_states(scheme.first, np.asarray(rho0_s, dtype=complex))
    rho_y = reselection_states(scheme)
    kernel = rd.joint_kernel(t, tau)
    e_z = scheme.effects("last")
    # E_y -> identity: the t-bracket keeps only populations of rho_x
    cond = np.einsum("zec,yce,xaa,aace->zyx", e_z, rho_y, rho_x, kernel, optimize=True).real
    probs = cond * w[None, :, :] * np.where(p_x < BRANCH_TOL, 0.0, p_x)[None, None, :]
    dropped = [("x", int(k)) for k in np.flatnonzero(p_x < BRANCH_TOL)]
    return OutcomeTable(probs, scheme.last_values, scheme.intermediate_values,
                        scheme.first_values, t, tau, dropped)


# ---------------------------------------------------------------------------
# statistical-mixture representation


@dataclass
class MarkovMixture:
    """Weighted Markovian dephasing dynamics, one per bath configuration.

    ``rates[k]`` is the system rate table for configuration ``configs[k]``.
    """

    weights: np.ndarray
    rates: np.ndarray
    configs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise ModelError("mixture weights must be nonnegative and sum to 1")
        r = np.asarray(self.rates, dtype=complex)
        d = r.shape[-1]
        if np.abs(r[:, np.arange(d), np.arange(d)]).max(initial=0.0) != 0.0:
            raise ModelError("component rate tables must have a zero diagonal")
        if r.real.min(initial=0.0) < -1e-10:
            raise ModelError("component rate tables must have nonnegative real parts")
        self.weights, self.rates = w, r

    def rate(self, k: int, s_tilde: int, s: int) -> complex:
        return complex(self.rates[k][s_tilde, s])

    def __len__(self):
        return len(self.weights)


def as_markov_mixture(model, split, env) -> MarkovMixture:
    """Read the reduced dynamics as a mixture of Markovian dephasing evolutions."""
    rd = ReducedDynamics(model, split, env)
    q = rd.env.full_vector()
    keep = np.flatnonzero(q > 0)
    bv = rd.bath_values()[keep]
    return MarkovMixture(q[keep], rd.component_rates(bv), bv)


def markovian_table(rates, rho0_s, scheme: MeasurementScheme, t, tau) -> OutcomeTable:
    """Joint statistics of a single time-independent dephasing dynamics."""
    scheme.validate(rates.shape[0])
    rho_x, p_x = _post_states(scheme.first, np.asarray(rho0_s, dtype=complex))
    g_t, g_tau = np.exp(-t * rates), np.exp(-tau * rates)
    d = rates.shape[0]
    g_t[np.arange(d), np.arange(d)] = 1.0
    g_tau[np.arange(d), np.arange(d)] = 1.0
    pi_y = scheme.intermediate
    e_z = scheme.effects("last")
    mid = np.einsum("yca,xab,yeb->yxce", pi_y, rho_x * g_t, pi_y.conj())
    cond = np.einsum("zec,yxce->zyx", e_z, mid * g_tau).real
    probs = cond * np.where(p_x < BRANCH_TOL, 0.0, p_x)[None, None, :]
    return OutcomeTable(probs, scheme.last_values, scheme.intermediate_values,
                        scheme.first_values, t, tau)


def mixture_table(mixture: MarkovMixture, rho0_s, scheme, t, tau) -> OutcomeTable:
    """Weight-averaged table of the per-configuration Markovian tables."""
    tables = [markovian_table(r, rho0_s, scheme, t, tau) for r in mixture.rates]
    probs = sum(w * tb.probs for w, tb in zip(mixture.weights, tables))
    first = tables[0]
    return OutcomeTable(probs, first.z_values, first.y_values, first.x_values, t, tau)
