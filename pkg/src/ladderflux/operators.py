"""Sector-restricted Hamiltonian and observables.

Units: the Hamiltonian is in rad/ns, so time is in ns.  Currents are reported
in 1/us (the angular rate in rad/ns times 1000).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .basis import SectorBasis
from .lattice import LatticeSpec

#: MHz (f = omega / 2pi) to rad/ns
MHZ_TO_RAD_PER_NS = 2.0 * np.pi * 1e-3
#: rad/ns to 1/us
PER_NS_TO_PER_US = 1e3

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """CSR matrix over a sector basis."""

    matrix: sp.csr_matrix
    hermitian: bool = True

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, other):
        return self.matrix @ other

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def expectation(self, psi: np.ndarray) -> np.ndarray:
        """``<psi|A|psi>`` for a vector or for each column of a (D, M) batch."""
        val = np.sum(psi.conj() * (self.matrix @ psi), axis=0)
        return val.real if self.hermitian else val

    def max_hermiticity_error(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0


@dataclass(frozen=True, eq=False)
class StateVector:
    basis: SectorBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.amplitudes.shape != (self.basis.dim,):
            raise ValueError(f"expected {self.basis.dim} amplitudes, got {self.amplitudes.shape}")
        norm = np.linalg.norm(self.amplitudes)
        # loose enough for RK4 states, which are not renormalised
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"state is not normalised (norm {norm:.12g})")

    @classmethod
    def fock(cls, basis: SectorBasis, config) -> "StateVector":
        psi = np.zeros(basis.dim, dtype=complex)
        psi[basis.rank(config)] = 1.0
        return cls(basis, psi)


@dataclass(frozen=True)
class TwoSiteDensity:
    sites: tuple[int, int]
    matrix: np.ndarray


def _check_basis(spec: LatticeSpec, basis: SectorBasis) -> None:
    if basis.n_sites != spec.n_sites or basis.local_dim != spec.local_dim:
        raise ValueError(
            f"basis ({basis.n_sites} sites, dim {basis.local_dim}) does not match "
            f"lattice ({spec.n_sites} sites, dim {spec.local_dim})")


@lru_cache(maxsize=512)
def hopping_operator(basis: SectorBasis, i: int, j: int, hardcore: bool = False) -> sp.csr_matrix:
    """Unitless ``a_i^dagger a_j`` in the sector.

    With ``hardcore`` the operators are projected onto occupations {0, 1}
    (``sigma_i^+ sigma_j^-``).
    """
    cfg = basis.configs
    cap = 1 if hardcore else basis.local_dim - 1
    ci = cfg[:, i].astype(np.int64)
    cj = cfg[:, j].astype(np.int64)
    if hardcore:
        src = np.nonzero((cj == 1) & (ci == 0))[0]
    else:
        src = np.nonzero((cj >= 1) & (ci < cap))[0]
    new = cfg[src].astype(np.int64)
    new[:, i] += 1
    new[:, j] -= 1
    dst = basis.rank_many(new)
    # sector closure: every generated configuration must be a basis member
    assert np.array_equal(basis.configs[dst], new), "hop left the sector"
    amp = np.sqrt((ci[src] + 1) * cj[src]).astype(complex) if not hardcore else np.ones(len(src), complex)
    return sp.csr_matrix((amp, (dst, src)), shape=(basis.dim, basis.dim))


def number_diagonal(basis: SectorBasis, site: int) -> np.ndarray:
    return basis.configs[:, site].astype(float)


def build_hamiltonian(spec: LatticeSpec, basis: SectorBasis) -> SparseOperator:
    """``H/hbar`` in rad/ns restricted to ``basis``."""
    _check_basis(spec, basis)
    H = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for e in spec.edges:
        if e.f_mhz == 0.0:
            continue
        hop = hopping_operator(basis, e.i, e.j)
        H = H + MHZ_TO_RAD_PER_NS * e.f_mhz * (hop + hop.conj().T)
    n = basis.configs.astype(float)
    diag = MHZ_TO_RAD_PER_NS * (n @ np.asarray(spec.potentials_mhz, dtype=float))
    if spec.local_dim > 2:
        diag = diag + 0.5 * MHZ_TO_RAD_PER_NS * spec.anharmonicity_mhz * (n * (n - 1)).sum(axis=1)
    H = (H + sp.diags(diag.astype(complex))).tocsr()
    H.sum_duplicates()
    H.eliminate_zeros()
    return SparseOperator(H, hermitian=True)


def current_operator(spec: LatticeSpec, basis: SectorBasis, channel: str = "bridge",
                     hardcore: bool = False) -> SparseOperator:
    """Particle current from bath A into bath B, in 1/us.

    ``channel`` is ``"bridge"`` (the weak link only), ``"cross"`` (cut-crossing
    diagonals only) or ``"cut"`` (every edge across the cut).
    """
    _check_basis(spec, basis)
    if channel == "bridge":
        edges = [spec.bridge()]
    elif channel == "cross":
        edges = [e for e in spec.cut_edges() if e.pair != frozenset(spec.bridge_edge)]
    elif channel == "cut":
        edges = spec.cut_edges()
    else:
        raise ValueError(f"unknown current channel {channel!r}")
    op = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for e in edges:
        if e.f_mhz == 0.0:
            continue
        a, b = (e.i, e.j) if e.i in spec.bath_a else (e.j, e.i)
        hop = hopping_operator(basis, a, b, hardcore)
        op = op + 1j * MHZ_TO_RAD_PER_NS * PER_NS_TO_PER_US * e.f_mhz * (hop - hop.conj().T)
    return SparseOperator(op.tocsr(), hermitian=True)


class Observables:
    """Expectation values for one (lattice, basis) pair.

    Every method accepts a single state of shape ``(D,)`` or a batch ``(D, M)``.
    """

    def __init__(self, spec: LatticeSpec, basis: SectorBasis, hamiltonian: SparseOperator | None = None,
                 hardcore_current: bool = False):
        _check_basis(spec, basis)
        self.spec = spec
        self.basis = basis
        self.H = hamiltonian if hamiltonian is not None else build_hamiltonian(spec, basis)
        self._occ = basis.configs.astype(float)
        self._hardcore = hardcore_current
        self._currents: dict[str, SparseOperator] = {}

    def current_op(self, channel: str = "bridge") -> SparseOperator:
        if channel not in self._currents:
            self._currents[channel] = current_operator(self.spec, self.basis, channel, self._hardcore)
        return self._currents[channel]

    def current(self, psi: np.ndarray, channel: str = "bridge") -> np.ndarray:
        return self.current_op(channel).expectation(psi)

    def occupations(self, psi: np.ndarray) -> np.ndarray:
        """Per-site ``<n_i>``; shape ``(L,)`` or ``(L, M)``."""
        return self._occ.T @ np.abs(psi) ** 2

    def bath_population(self, psi: np.ndarray, sites) -> np.ndarray:
        sites = sorted(set(sites))
        if any(not 0 <= s < self.spec.n_sites for s in sites):
            raise ValueError(f"unknown sites in {sites}")
        weights = self._occ[:, sites].sum(axis=1)
        return weights @ np.abs(psi) ** 2

    def energy(self, psi: np.ndarray) -> np.ndarray:
        return self.H.expectation(psi)

    def evaluate(self, name: str, psi: np.ndarray) -> np.ndarray:
        if name == "current":
            return self.current(psi)
        if name.startswith("current:"):
            return self.current(psi, name.split(":", 1)[1])
        if name == "occupations":
            return self.occupations(psi)
        if name == "population_a":
            return self.bath_population(psi, self.spec.bath_a)
        if name == "population_b":
            return self.bath_population(psi, self.spec.bath_b)
        if name == "energy":
            return self.energy(psi)
        if name == "norm":
            return np.sqrt(np.sum(np.abs(psi) ** 2, axis=0))
        raise ValueError(f"unknown observable {name!r}")


def _amplitudes(state) -> tuple[SectorBasis | None, np.ndarray]:
    if isinstance(state, StateVector):
        return state.basis, state.amplitudes
    return None, np.asarray(state)


def current_expectation(state: StateVector, spec: LatticeSpec, channel: str = "bridge",
                        hardcore: bool = False) -> float:
    """Bridge current ``i gamma (<a_A^+ a_B> - <a_A a_B^+>)`` in 1/us."""
    op = current_operator(spec, state.basis, channel, hardcore)
    return float(op.expectation(state.amplitudes))


def site_occupations(state: StateVector) -> np.ndarray:
    return state.basis.configs.T.astype(float) @ np.abs(state.amplitudes) ** 2


def bath_population(state: StateVector, site_set) -> float:
    sites = sorted(set(site_set))
    if any(not 0 <= s < state.basis.n_sites for s in sites):
        raise ValueError(f"unknown sites in {sites}")
    return float(site_occupations(state)[sites].sum())


@lru_cache(maxsize=128)
def _pair_groups(basis: SectorBasis, i: int, j: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Group configurations by the occupation of every site except ``i, j``."""
    rest = np.delete(basis.configs, [i, j], axis=1)
    _, group = np.unique(rest, axis=0, return_inverse=True)
    d = basis.local_dim
    local = basis.configs[:, i].astype(np.int64) * d + basis.configs[:, j]
    return group.ravel(), local, int(group.max()) + 1


def reduced_density_two_site(state, i: int, j: int, basis: SectorBasis | None = None) -> TwoSiteDensity:
    """Partial trace onto sites ``(i, j)``; local ordering is ``|n_i n_j>``."""
    if i == j:
        raise ValueError("need two distinct sites")
    b, psi = _amplitudes(state)
    basis = b or basis
    if basis is None:
        raise ValueError("raw amplitudes need an explicit basis")
    group, local, n_groups = _pair_groups(basis, i, j)
    d = basis.local_dim
    M = np.zeros((n_groups, d * d), dtype=complex)
    M[group, local] = psi
    rho = M.T @ M.conj()
    return TwoSiteDensity((i, j), rho)


def two_site_current_operator(spec: LatticeSpec, hardcore: bool = False) -> np.ndarray:
    """Bridge current on the ``(a, b)`` two-site space, in 1/us.

    For ``local_dim = 2`` this equals ``-(gamma/2)(X_a Y_b - Y_a X_b)``.
    """
    d = spec.local_dim
    lower = np.diag(np.sqrt(np.arange(1, d)), k=1).astype(complex)
    if hardcore:
        lower = np.zeros((d, d), complex)
        lower[0, 1] = 1.0
    raise_ = lower.conj().T
    g = MHZ_TO_RAD_PER_NS * PER_NS_TO_PER_US * spec.bridge().f_mhz
    hop = np.kron(raise_, lower)
    return 1j * g * (hop - hop.conj().T)


def pauli_current_operator(spec: LatticeSpec) -> np.ndarray:
    if spec.local_dim != 2:
        raise ValueError("Pauli form requires local_dim = 2")
    g = MHZ_TO_RAD_PER_NS * PER_NS_TO_PER_US * spec.bridge().f_mhz
    # occupation basis |0>, |1>: sigma^+ = |1><0| = (X - iY)/2
    return -0.5 * g * (np.kron(PAULI_X, PAULI_Y) - np.kron(PAULI_Y, PAULI_X))
