"""Multipartite dephasing generators.

A model is fixed by the eigenvalue spectrum of each coupling operator
``S^(i)``, a real matrix ``h`` of Hamiltonian couplings and a Hermitian,
positive semidefinite matrix ``gamma`` of dissipative rates.  The generalized
form couples products of operators labelled by binary multi-indices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidSize,
    ModelError,
    NonHermitianGamma,
    NotPositiveSemidefinite,
)

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10

Binary = Tuple[int, ...]


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ModelSpec:
    """Pairwise generator: spectra, Hamiltonian couplings and rates.

    Basis vectors are ordered lexicographically over spectrum positions with
    subsystem 1 varying slowest (``itertools.product`` order).
    """

    subsystems: Tuple[np.ndarray, ...]
    h: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "subsystems", tuple(_frozen(s, float) for s in self.subsystems))
        object.__setattr__(self, "h", _frozen(self.h, float))
        object.__setattr__(self, "gamma", _frozen(self.gamma, complex))

    @property
    def n(self) -> int:
        return len(self.subsystems)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(len(s) for s in self.subsystems)

    @property
    def dimension(self) -> int:
        return int(np.prod(self.dims))

    def basis_positions(self) -> np.ndarray:
        """``(d, n)`` integer array of spectrum positions per basis vector."""
        return basis_positions(self.dims)

    def basis_values(self) -> np.ndarray:
        """``(d, n)`` array of eigenvalues per basis vector."""
        pos = self.basis_positions()
        return np.stack([self.subsystems[i][pos[:, i]] for i in range(self.n)], axis=1) \
            if self.n else np.zeros((1, 0))


def basis_positions(dims: Sequence[int]) -> np.ndarray:
    dims = tuple(dims)
    if not dims:
        return np.zeros((1, 0), dtype=int)
    return np.array(list(itertools.product(*[range(d) for d in dims])), dtype=int)


def _check_square(name, m, n):
    if m.ndim != 2 or m.shape != (n, n):
        raise DimensionMismatch(
            f"{name} must be {n}x{n} to match {n} subsystems, got shape {m.shape}",
            index=None)


def validate_model(raw: ModelSpec) -> ModelSpec:
    """Check the model invariants and canonicalize ``h``.

    ``h`` is replaced by its symmetric part since only that part enters the
    frequencies.  Raises ``DimensionMismatch``, ``NonHermitianGamma`` or
    ``NotPositiveSemidefinite`` naming the offending entry.
    """
    n = raw.n
    if n < 1:
        raise InvalidSize("a model needs at least one subsystem")
    for i, spec in enumerate(raw.subsystems):
        if spec.ndim != 1 or spec.size < 1:
            raise DimensionMismatch(f"subsystem {i} needs a non-empty 1-d spectrum", index=i)
        if not np.all(np.isfinite(spec)):
            raise ModelError(f"subsystem {i} has non-finite eigenvalues", index=i)
    h = np.asarray(raw.h)
    g = np.asarray(raw.gamma)
    _check_square("h", h, n)
    _check_square("gamma", g, n)
    if not np.all(np.isfinite(h)) or not np.all(np.isfinite(g)):
        raise ModelError("h and gamma must be finite")
    diff = np.abs(g - g.conj().T)
    if diff.max() > HERMITIAN_TOL:
        i, j = np.unravel_index(np.argmax(diff), diff.shape)
        raise NonHermitianGamma(
            f"gamma[{i}][{j}] = {g[i, j]} is not the conjugate of gamma[{j}][{i}] = {g[j, i]}",
            index=(int(i), int(j)))
    check_psd(g)
    return ModelSpec(raw.subsystems, (h + h.T) / 2, g)


def check_psd(g: np.ndarray, tol: float = PSD_TOL) -> float:
    """Return the smallest eigenvalue of Hermitian ``g``; raise if below ``-tol``."""
    g = np.asarray(g, dtype=complex)
    w, v = np.linalg.eigh((g + g.conj().T) / 2)
    if w[0] < -tol:
        k = int(np.argmax(np.abs(v[:, 0])))
        raise NotPositiveSemidefinite(
            f"rate matrix has eigenvalue {w[0]:.3e} < -{tol:g}; "
            f"its eigenvector is largest on index {k}",
            index=k)
    return float(w[0])


def make_model(subsystems, h=None, gamma=None) -> ModelSpec:
    """Build and validate a model; missing ``h`` or ``gamma`` default to zero."""
    n = len(subsystems)
    h = np.zeros((n, n)) if h is None else h
    gamma = np.zeros((n, n)) if gamma is None else gamma
    return validate_model(ModelSpec(tuple(subsystems), h, gamma))


QUBIT = (1.0, -1.0)


def qubit_model(h=None, gamma=None, n=None) -> ModelSpec:
    """Model of ``sigma_z`` couplings; spectrum order (+1, -1)."""
    if n is None:
        n = np.shape(gamma if gamma is not None else h)[0]
    return make_model([QUBIT] * n, h, gamma)


def bipartite_gamma(gamma, beta, chi):
    """Rate matrix ``[[gamma, chi], [chi*, beta]]`` of the two-party example."""
    return np.array([[gamma, chi], [np.conj(chi), beta]], dtype=complex)


# ---------------------------------------------------------------------------
# ring family


@dataclass(frozen=True)
class RingCouplingParams:
    n: int
    gamma: float
    chi: float
    lam: Optional[float] = None  # defaults to n/4

    @property
    def lam_value(self) -> float:
        return self.n / 4 if self.lam is None else float(self.lam)


def chi_bounds(n: int, gamma: float) -> Tuple[float, float]:
    """Range of ``chi`` keeping the ring rate matrix positive semidefinite."""
    if n < 2:
        raise InvalidSize(f"ring needs n >= 2, got {n}")
    return -gamma / (n - 1), gamma


def ring_gamma(params: RingCouplingParams, check: bool = True) -> np.ndarray:
    """``(gamma - chi) delta_jk + chi exp(2 pi i (j - k) lambda / n)``.

    With ``check`` the result is validated as PSD, which is the only
    constraint for general ``lambda``.
    """
    n = params.n
    if n < 2:
        raise InvalidSize(f"ring needs n >= 2, got {n}")
    if params.gamma < 0:
        raise ModelError("ring diagonal rate must be >= 0")
    j = np.arange(n)
    lam = params.lam_value
    if lam == n / 4:
        # exact powers of i, so off-diagonal entries are exactly real or imaginary
        f = np.array([(1j) ** (k % 4) for k in j])
    else:
        f = np.exp(2j * np.pi * j * lam / n)
    g = (params.gamma - params.chi) * np.eye(n) + params.chi * np.outer(f, f.conj())
    np.fill_diagonal(g, params.gamma)
    if check:
        check_psd(g)
    return g


def ring_model(params: RingCouplingParams) -> ModelSpec:
    """Qubit ring with ``H = 0``."""
    return qubit_model(gamma=ring_gamma(params), n=params.n)


# ---------------------------------------------------------------------------
# generalized (multi-body) couplings


@dataclass(frozen=True)
class GeneralizedModelSpec:
    """Couplings between products ``S_mu`` of subsystem operators.

    ``mu`` is a binary tuple; ``mu_i = 1`` selects ``S^(i)`` and ``mu_i = 0``
    the identity on subsystem ``i``.
    """

    subsystems: Tuple[np.ndarray, ...]
    h_mu: Dict[Binary, float] = field(default_factory=dict)
    gamma_munu: Dict[Tuple[Binary, Binary], complex] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "subsystems", tuple(_frozen(s, float) for s in self.subsystems))

    @property
    def n(self) -> int:
        return len(self.subsystems)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(len(s) for s in self.subsystems)

    @property
    def dimension(self) -> int:
        return int(np.prod(self.dims))

    def labels(self):
        """Sorted multi-indices appearing in ``gamma_munu``."""
        seen = set()
        for mu, nu in self.gamma_munu:
            seen.add(tuple(mu))
            seen.add(tuple(nu))
        return sorted(seen)

    def gamma_matrix(self):
        """``(labels, matrix)`` form of ``gamma_munu``."""
        labels = self.labels()
        pos = {m: k for k, m in enumerate(labels)}
        g = np.zeros((len(labels), len(labels)), dtype=complex)
        for (mu, nu), v in self.gamma_munu.items():
            g[pos[tuple(mu)], pos[tuple(nu)]] = v
        return labels, g


def _check_binary(mu, n):
    mu = tuple(int(x) for x in mu)
    if len(mu) != n or any(x not in (0, 1) for x in mu):
        raise DimensionMismatch(f"multi-index {mu} is not a binary {n}-tuple", index=mu)
    return mu


def validate_generalized(raw: GeneralizedModelSpec) -> GeneralizedModelSpec:
    n = raw.n
    h_mu = {}
    for mu, v in raw.h_mu.items():
        h_mu[_check_binary(mu, n)] = float(np.real(v))
    gm = {}
    for (mu, nu), v in raw.gamma_munu.items():
        gm[(_check_binary(mu, n), _check_binary(nu, n))] = complex(v)
    out = GeneralizedModelSpec(raw.subsystems, h_mu, gm)
    labels, g = out.gamma_matrix()
    if labels:
        diff = np.abs(g - g.conj().T)
        if diff.max() > HERMITIAN_TOL:
            a, b = np.unravel_index(np.argmax(diff), diff.shape)
            raise NonHermitianGamma(
                f"gamma[{labels[a]}, {labels[b]}] is not the conjugate of its transpose entry",
                index=(labels[a], labels[b]))
        check_psd(g)
    return out


def unit_index(n: int, i: int) -> Binary:
    return tuple(1 if k == i else 0 for k in range(n))


def embed_pairwise(model: ModelSpec) -> GeneralizedModelSpec:
    """Rewrite a pairwise model in generalized form.

    Rates sit on weight-1 labels (``Gamma_{e_i, e_j} = Gamma_ij``; all ``n^2``
    entries are stored, zeros included).  Off-diagonal ``h`` becomes a
    weight-2 coefficient ``h_ij + h_ji``.  A diagonal term ``h_ii s_i^2`` has
    no product-operator form unless ``s_i^2`` is constant on the spectrum,
    in which case it is an energy offset on the all-zero label.
    """
    n = model.n
    gm = {}
    for i in range(n):
        for j in range(n):
            gm[(unit_index(n, i), unit_index(n, j))] = complex(model.gamma[i, j])
    h_mu = {}
    zero = tuple([0] * n)
    offset = 0.0
    for i in range(n):
        if model.h[i, i] != 0.0:
            sq = model.subsystems[i] ** 2
            if np.ptp(sq) > 1e-12 * max(1.0, np.abs(sq).max()):
                raise ModelError(
                    f"h[{i}][{i}] multiplies S^2 on subsystem {i}, which is not a "
                    "product of S and identity operators for this spectrum",
                    index=(i, i))
            offset += model.h[i, i] * sq[0]
        for j in range(i + 1, n):
            mu = tuple(1 if k in (i, j) else 0 for k in range(n))
            h_mu[mu] = float(model.h[i, j] + model.h[j, i])
    if offset:
        h_mu[zero] = offset
    return GeneralizedModelSpec(model.subsystems, h_mu, gm)


# ---------------------------------------------------------------------------
# JSON ingestion


def _complex_entry(x, path):
    from .errors import ConfigError

    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(isinstance(v, (int, float)) for v in x):
        return complex(x[0], x[1])
    raise ConfigError(f"{path}: expected a number or a [re, im] pair, got {x!r}")


def model_from_json(doc: dict, path: str = "$") -> ModelSpec:
    """Parse the model document; errors carry the JSON path of the entry.

    Keys: ``subsystems``, ``h``, ``gamma`` (entries ``[re, im]``), or the
    ``ring: {n, gamma, chi, lambda}`` shorthand.
    """
    from .errors import ConfigError

    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: model must be an object")
    if "ring" in doc:
        r = doc["ring"]
        try:
            params = RingCouplingParams(
                int(r["n"]), float(r["gamma"]), float(r["chi"]),
                None if r.get("lambda") is None else float(r["lambda"]))
            return ring_model(params)
        except KeyError as e:
            raise ConfigError(f"{path}.ring: missing key {e.args[0]!r}") from None
        except ModelError as e:
            raise ConfigError(f"{path}.ring: {e}") from None
    try:
        subsystems = doc["subsystems"]
    except KeyError:
        raise ConfigError(f"{path}: missing key 'subsystems'") from None
    if not isinstance(subsystems, list) or not subsystems:
        raise ConfigError(f"{path}.subsystems: expected a non-empty array of arrays")
    specs = []
    for i, s in enumerate(subsystems):
        if not isinstance(s, list) or not s or not all(isinstance(v, (int, float)) for v in s):
            raise ConfigError(f"{path}.subsystems[{i}]: expected a non-empty array of reals")
        specs.append([float(v) for v in s])
    n = len(specs)
    h_doc = doc.get("h", [[0.0] * n for _ in range(n)])
    g_doc = doc.get("gamma", [[0.0] * n for _ in range(n)])
    for name, m in (("h", h_doc), ("gamma", g_doc)):
        if not isinstance(m, list) or len(m) != n or any(
                not isinstance(row, list) or len(row) != n for row in m):
            raise ConfigError(f"{path}.{name}: expected an {n}x{n} array")
    h = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            v = h_doc[i][j]
            if not isinstance(v, (int, float)):
                raise ConfigError(f"{path}.h[{i}][{j}]: expected a real number, got {v!r}")
            h[i, j] = v
    g = np.array([[_complex_entry(g_doc[i][j], f"{path}.gamma[{i}][{j}]")
                   for j in range(n)] for i in range(n)])
    try:
        return validate_model(ModelSpec(tuple(specs), h, g))
    except ModelError as e:
        loc = ""
        if isinstance(e.index, tuple) and len(e.index) == 2:
            loc = f".gamma[{e.index[0]}][{e.index[1]}]"
        elif isinstance(e, NotPositiveSemidefinite):
            loc = ".gamma"
        raise ConfigError(f"{path}{loc}: {e}") from None


def model_to_json(model: ModelSpec) -> dict:
    return {
        "subsystems": [s.tolist() for s in model.subsystems],
        "h": model.h.tolist(),
        "gamma": [[[v.real, v.imag] for v in row] for row in model.gamma],
    }
