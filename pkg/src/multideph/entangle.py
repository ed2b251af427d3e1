"""System-environment entanglement generated by the dephasing dynamics.

Transposing the bath indices of the full state maps the dynamics onto
another dephasing generator ``(h~, G~)`` with the same spectra.  When
``G~`` is not positive semidefinite the transposed evolution is not
completely positive and negativity can develop from product states.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionCap, DimensionMismatch, IdentificationFailure
from .exact import PhiTensor, evolve
from .model import ModelSpec, RingCouplingParams, chi_bounds, ring_gamma
from .split import SplitSpec

PT_CAP = 4096
NEGATIVE_STATE = -1e-9
NEGATIVE_GENERATOR = -1e-10
IDENTIFICATION_TOL = 1e-12


def partial_transpose(rho: np.ndarray, split: SplitSpec, dims: Sequence[int]) -> np.ndarray:
    """Transpose the bath indices of ``rho`` (natural basis order)."""
    dims = list(dims)
    n = len(dims)
    d = int(np.prod(dims))
    rho = np.asarray(rho)
    if rho.shape != (d, d):
        raise DimensionMismatch(f"state must be {d}x{d} for dims {dims}, got {rho.shape}")
    split.validate(n)
    axes = list(range(2 * n))
    for j in split.bath:
        axes[j], axes[n + j] = n + j, j
    return rho.reshape(dims + dims).transpose(axes).reshape(d, d)


class PTScanResult(NamedTuple):
    t: np.ndarray
    min_eigenvalue: np.ndarray
    first_negative_time: Optional[float]


def negativity_scan(model: ModelSpec, split: SplitSpec, rho0, t_grid, cap: int = PT_CAP) -> PTScanResult:
    """Smallest eigenvalue of the bath-transposed exact state along ``t_grid``."""
    d = model.dimension
    if d > cap:
        raise DimensionCap(f"dimension {d} exceeds the partial-transpose cap {cap}")
    tensor = PhiTensor(model)
    t_grid = np.asarray(t_grid, dtype=float)
    mins = np.empty(len(t_grid))
    for k, t in enumerate(t_grid):
        pt = partial_transpose(evolve(model, rho0, t, tensor), split, model.dims)
        mins[k] = np.linalg.eigvalsh((pt + pt.conj().T) / 2)[0]
    neg = np.flatnonzero(mins < NEGATIVE_STATE)
    first = float(t_grid[neg[0]]) if neg.size else None
    return PTScanResult(t_grid, mins, first)


def _swapped_table(model: ModelSpec, split: SplitSpec) -> np.ndarray:
    """``Phi[(s~ b), (s b~)]`` laid out as the rate of element ``(s~ b~, s b)``."""
    table = PhiTensor(model).table
    n = model.n
    dims = list(model.dims)
    t = table.reshape(dims + dims)
    axes = list(range(2 * n))
    for j in split.bath:
        axes[j], axes[n + j] = n + j, j
    return t.transpose(axes).reshape(table.shape)


def tilde_generator(model: ModelSpec, split: SplitSpec, verify: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """Couplings ``(h~, G~)`` that generate the bath-transposed dynamics.

    Blocks (S system, B bath): ``G~_SS = G_SS``, ``G~_BB = conj(G_BB)``,
    ``G~_SB = -Re G_SB - i h_SB`` and ``h~_SS = h_SS``, ``h~_BB = -h_BB``,
    ``h~_SB = -Im G_SB``.  The result is checked against the index-swapped
    rate tensor unless ``verify`` is false.
    """
    split.validate(model.n)
    S, B = list(split.system), list(split.bath)
    h, g = model.h, model.gamma
    h_t = np.zeros_like(h)
    g_t = np.zeros_like(g)
    h_t[np.ix_(S, S)] = h[np.ix_(S, S)]
    h_t[np.ix_(B, B)] = -h[np.ix_(B, B)]
    g_t[np.ix_(S, S)] = g[np.ix_(S, S)]
    g_t[np.ix_(B, B)] = g[np.ix_(B, B)].conj()
    h_sb = (h[np.ix_(S, B)] + h[np.ix_(B, S)].T) / 2
    g_sb = g[np.ix_(S, B)]
    cross = -g_sb.real - 1j * h_sb
    g_t[np.ix_(S, B)] = cross
    g_t[np.ix_(B, S)] = cross.conj().T
    h_t[np.ix_(S, B)] = -g_sb.imag
    h_t[np.ix_(B, S)] = -g_sb.imag.T
    if np.abs(g_t - g_t.conj().T).max() > IDENTIFICATION_TOL:
        raise IdentificationFailure("transposed rate matrix is not Hermitian")
    if not verify:
        return h_t, g_t
    tilde = ModelSpec(model.subsystems, h_t, g_t)
    target = _swapped_table(model, split)
    got = PhiTensor(tilde).table
    scale = max(1.0, np.abs(target).max())
    if np.abs(got - target).max() > IDENTIFICATION_TOL * scale * 10:
        raise IdentificationFailure(
            f"transposed generator misfits the swapped rates by {np.abs(got - target).max():.3e}")
    return h_t, g_t


def generator_min_eigenvalue(model: ModelSpec, split: SplitSpec, verify: bool = True) -> float:
    _, g_t = tilde_generator(model, split, verify)
    return float(np.linalg.eigvalsh(g_t)[0])


def ring_entangles(n: int, chi: float, gamma: float = 1.0) -> bool:
    """Generator criterion on the ring with the first qubit as system."""
    from .model import qubit_model

    g = ring_gamma(RingCouplingParams(n, gamma, chi), check=False)
    model = qubit_model(gamma=g, n=n)
    return generator_min_eigenvalue(model, SplitSpec.first(n), verify=False) < NEGATIVE_GENERATOR


@dataclass(frozen=True)
class ThresholdRow:
    n: int
    chi_star_over_gamma: Optional[float]
    lower_bound: float
    upper_bound: float


def entanglement_region_scan(n_range: Sequence[int], chi_grid: Sequence[float] = None,
                             gamma: float = 1.0, tol: float = 1e-4) -> List[ThresholdRow]:
    """Smallest ``chi / gamma`` at which ``G~`` acquires a negative eigenvalue.

    ``chi_grid`` holds ratios ``chi / gamma``; by default 201 points spanning
    the allowed range of each ``n``.  A coarse pass locates the first
    flagged point, then bisection refines it to ``tol``.
    """
    rows = []
    for n in n_range:
        lo, hi = (b / gamma for b in chi_bounds(n, gamma))
        grid = np.linspace(lo, hi, 201) if chi_grid is None else np.asarray(chi_grid, dtype=float)
        grid = grid[(grid >= lo - 1e-15) & (grid <= hi + 1e-15)]
        flags = [ring_entangles(n, c * gamma, gamma) for c in grid]
        star = None
        if any(flags):
            k = flags.index(True)
            if k == 0:
                star = float(grid[0])
            else:
                a, b = float(grid[k - 1]), float(grid[k])
                while b - a > tol:
                    m = 0.5 * (a + b)
                    if ring_entangles(n, m * gamma, gamma):
                        b = m
                    else:
                        a = m
                star = b
        rows.append(ThresholdRow(int(n), star, lo, hi))
    return rows


def plus_product_state(model: ModelSpec) -> np.ndarray:
    """Product of equal superpositions on every subsystem."""
    d = model.dimension
    return np.full((d, d), 1.0 / d, dtype=complex)
