"""Non-operational memory diagnostics built from the coherence factors.

For a qubit system written as
``d rho/dt = -i w(t)/2 [sz, rho] + g(t) (sz rho sz - rho)``
the coherence obeys ``-d/dt ln f(t) = i w(t) + 2 g(t)``, so the canonical
pair follows from one logarithmic derivative.  Negative ``g(t)`` witnesses
memory effects.  Rate poles are reported, never clipped.
"""

from __future__ import annotations

import math
from typing import Callable, List, NamedTuple, Sequence, Tuple

import numpy as np

from .errors import CoherenceZero, DenominatorVanishes, NegativeTime, RateDivergence
from .split import EnvPopulations, ReducedDynamics, SplitSpec

ZERO_COHERENCE = 1e-12
DENOMINATOR_TOL = 1e-12


def log_derivative_rate(f: Callable[[float], complex], t: float, dt: float = 1e-3) -> complex:
    """``-d/dt ln f`` at ``t`` by fourth-order finite differences on ``ln f``.

    Differences are taken on ``ln(f(t + k dt) / f(t))`` so the phase never
    crosses a branch cut.  A one-sided stencil is used when ``t < 2 dt``.
    """
    if t < 0:
        raise NegativeTime(f"time must be >= 0, got {t}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    f0 = f(t)
    if abs(f0) < ZERO_COHERENCE:
        raise CoherenceZero(f"|f({t})| = {abs(f0):.3e}; the rate diverges here")

    def L(k):
        return np.log(f(t + k * dt) / f0)

    if t >= 2 * dt:
        deriv = (8 * (L(1) - L(-1)) - (L(2) - L(-2))) / (12 * dt)
    else:
        deriv = (48 * L(1) - 36 * L(2) + 16 * L(3) - 3 * L(4)) / (12 * dt)
    return complex(-deriv)


def coherence_log_rates(model, split: SplitSpec, env: EnvPopulations, t: float) -> np.ndarray:
    """Exact ``-d/dt ln f_{s~ s}(t)`` for every system pair.

    ``f`` is a finite sum of exponentials, so its derivative is exact; pairs
    whose factor vanishes raise ``CoherenceZero``.
    """
    rd = ReducedDynamics(model, split, env)
    f = rd.factors(t)
    if np.abs(f).min() < ZERO_COHERENCE:
        a, b = np.unravel_index(np.argmin(np.abs(f)), f.shape)
        raise CoherenceZero(f"coherence ({a}, {b}) vanishes at t={t}")
    return rd.log_rates(t)


class CanonicalRates(NamedTuple):
    omega: float
    gamma_rate: float


def canonical_from_log_rate(rate: complex) -> CanonicalRates:
    """Qubit canonical pair from ``-d/dt ln f_{+-}``."""
    return CanonicalRates(float(np.imag(rate)), float(np.real(rate)) / 2)


def bipartite_coherence(q_plus, q_minus, gamma, chi_bar, t):
    """``exp(-2 g t) (q+ e^{2 i chi t} + q- e^{-2 i chi t})`` for the qubit pair."""
    t = np.asarray(t, dtype=float)
    return np.exp(-2 * gamma * t) * (q_plus * np.exp(2j * chi_bar * t)
                                     + q_minus * np.exp(-2j * chi_bar * t))


def _qubit_denominator(q_plus, q_minus, chi_bar, t):
    return q_plus ** 2 + q_minus ** 2 + 2 * q_plus * q_minus * np.cos(4 * chi_bar * t)


def qubit_canonical_rates(q_plus, q_minus, gamma, chi_bar, t) -> CanonicalRates:
    """Closed-form ``(omega(t), gamma(t))`` for a qubit dephased by one bath qubit.

    ``chi_bar`` is the imaginary rate coupling minus the Hamiltonian coupling.
    """
    if q_plus < 0 or q_minus < 0 or abs(q_plus + q_minus - 1) > 1e-12:
        raise ValueError("bath populations must be nonnegative and sum to 1")
    den = _qubit_denominator(q_plus, q_minus, chi_bar, t)
    if den <= DENOMINATOR_TOL:
        raise DenominatorVanishes(
            f"canonical rates diverge at t={t} (coherence passes through zero)", location=t)
    w = -2 * chi_bar * (q_plus - q_minus) / den
    g = gamma + 2 * chi_bar * q_plus * q_minus * math.sin(4 * chi_bar * t) / den
    return CanonicalRates(float(w), float(g))


def ring_bar_n(n: int) -> int:
    return n // 2


def ring_coherence(n, gamma, chi, t):
    """``exp(-2 g t) cos(2 chi t)^(n//2)`` for the ring with a uniform bath."""
    t = np.asarray(t, dtype=float)
    return np.exp(-2 * gamma * t) * np.cos(2 * chi * t) ** ring_bar_n(n)


def ring_canonical_rates(n, gamma, chi, t, pole_tol: float = 1e-12) -> CanonicalRates:
    """``(0, gamma + (n//2) chi tan(2 chi t))``; raises at the tangent poles."""
    c = math.cos(2 * chi * t)
    if abs(c) < pole_tol:
        raise RateDivergence(f"gamma(t) has a pole at t={t}", location=t)
    nb = ring_bar_n(n)
    if nb == 0 or chi == 0:
        return CanonicalRates(0.0, float(gamma))
    return CanonicalRates(0.0, float(gamma + nb * chi * math.tan(2 * chi * t)))


def ring_poles(chi: float, t_max: float) -> List[float]:
    """Times in ``[0, t_max]`` where ``2 chi t = pi/2 mod pi``."""
    if chi == 0:
        return []
    step = math.pi / (2 * abs(chi))
    first = math.pi / (4 * abs(chi))
    out, k = [], 0
    while first + k * step <= t_max:
        out.append(first + k * step)
        k += 1
    return out


class RateCurve(NamedTuple):
    t: np.ndarray
    omega: np.ndarray
    gamma_rate: np.ndarray
    diverged: np.ndarray


def rate_curve(func, t_grid: Sequence[float]) -> RateCurve:
    """Evaluate a canonical-rate function on a grid, flagging divergences."""
    t_grid = np.asarray(t_grid, dtype=float)
    w = np.full(len(t_grid), np.nan)
    g = np.full(len(t_grid), np.nan)
    div = np.zeros(len(t_grid), dtype=bool)
    for k, t in enumerate(t_grid):
        try:
            w[k], g[k] = func(t)
        except (RateDivergence, CoherenceZero):
            div[k] = True
    return RateCurve(t_grid, w, g, div)


def negative_intervals(t: Sequence[float], rate: Sequence[float]) -> List[Tuple[float, float]]:
    """Maximal runs of grid points where ``rate < 0`` (nan breaks a run)."""
    out = []
    start = None
    prev = None
    for tk, rk in zip(t, rate):
        if np.isfinite(rk) and rk < 0:
            if start is None:
                start = tk
            prev = tk
        elif start is not None:
            out.append((start, prev))
            start = None
    if start is not None:
        out.append((start, prev))
    return out


def gaussian_limit_check(g: float, n: int, t_grid: Sequence[float]) -> float:
    """Largest gap between ``cos(2 chi_n t)^(n/2)`` and ``exp(-2 g^2 t^2)``.

    ``chi_n = g sqrt(2/n)`` is the size-scaled coupling.
    """
    t = np.asarray(t_grid, dtype=float)
    chi_n = g * math.sqrt(2.0 / n)
    finite = np.cos(2 * chi_n * t) ** ring_bar_n(n)
    return float(np.max(np.abs(finite - np.exp(-2 * g * g * t * t))))
