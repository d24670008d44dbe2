"""Time evolution: fixed-step RK4, a dense eigendecomposition oracle, and
dephasing-only Lindblad dynamics.

Times are in ns and Hamiltonians in rad/ns.  States may be a single vector
``(D,)`` or a batch of independent columns ``(D, M)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .basis import SectorBasis
from .operators import SparseOperator

log = logging.getLogger(__name__)

DENSE_LIMIT = 4000
DENSITY_LIMIT = 4096


@dataclass(frozen=True)
class TimeGrid:
    t_start: float = 0.0
    t_end: float = 1000.0
    integrator_dt: float = 0.1
    sample_dt: float = 1.0

    def __post_init__(self):
        if not self.integrator_dt > 0:
            raise ValueError(f"integrator_dt must be positive, got {self.integrator_dt}")
        if not self.sample_dt > 0 or self.t_end < self.t_start:
            raise ValueError("need sample_dt > 0 and t_end >= t_start")
        if not _divides(self.integrator_dt, self.sample_dt):
            raise ValueError(f"integrator_dt={self.integrator_dt} does not divide sample_dt={self.sample_dt}")
        if not _divides(self.sample_dt, self.t_end - self.t_start):
            raise ValueError(f"sample_dt={self.sample_dt} does not divide the span "
                             f"[{self.t_start}, {self.t_end}]")

    @property
    def substeps(self) -> int:
        return round(self.sample_dt / self.integrator_dt)

    @property
    def n_samples(self) -> int:
        return round((self.t_end - self.t_start) / self.sample_dt) + 1

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.sample_dt * np.arange(self.n_samples)


def _divides(small: float, big: float) -> bool:
    q = big / small
    return abs(q - round(q)) < 1e-9 * max(1.0, q)


@dataclass(frozen=True)
class NoiseSpec:
    """Dephasing with jump operators ``sqrt(2/T2) n_j``.  Amplitude damping is off."""

    t2_us: float = math.inf
    t1_us: float = math.inf

    def __post_init__(self):
        if not self.t2_us > 0:
            raise ValueError(f"T2 must be positive, got {self.t2_us}")
        if self.t1_us != math.inf:
            raise ValueError("amplitude damping is not modelled; t1_us must be inf")

    @property
    def dephasing_rate_per_ns(self) -> float:
        return 0.0 if math.isinf(self.t2_us) else 1.0 / (self.t2_us * 1e3)


@dataclass
class TimeSeries:
    name: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values)
        if len(self.times) != len(self.values):
            raise ValueError("times and values differ in length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    def window(self, start: float, end: float, step: float | None = None) -> "TimeSeries":
        """Samples with ``start <= t <= end`` (optionally every ``step`` ns)."""
        tol = 1e-9
        mask = (self.times >= start - tol) & (self.times <= end + tol)
        if step is not None:
            q = (self.times - start) / step
            mask &= np.abs(q - np.round(q)) < 1e-6
        if not mask.any():
            raise ValueError(f"no samples in window [{start}, {end}]")
        return TimeSeries(self.name, self.times[mask], self.values[mask])

    def value_at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9:
            raise ValueError(f"t={t} is not a sample time")
        return self.values[k]


ObservableMap = Mapping[str, Callable[[np.ndarray], np.ndarray]]


def rk4_step(A, psi: np.ndarray, h: float) -> np.ndarray:
    """One classic RK4 step of ``d psi/dt = A psi``."""
    k1 = A @ psi
    k2 = A @ (psi + 0.5 * h * k1)
    k3 = A @ (psi + 0.5 * h * k2)
    k4 = A @ (psi + h * k3)
    return psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _generator(H) -> object:
    mat = H.matrix if isinstance(H, SparseOperator) else H
    return (-1j) * mat


def _collect(observables: ObservableMap, state, records: dict[str, list]) -> None:
    for name, fn in observables.items():
        records[name].append(np.asarray(fn(state)))


def evolve_pure(H, psi0: np.ndarray, grid: TimeGrid, observables: ObservableMap,
                norm_tolerance: float | None = 1e-8, return_state: bool = False):
    """Integrate the Schroedinger equation with fixed-step RK4.

    Observables are sampled at every grid point, including ``t_start``.
    The state is never renormalised; if the final norm drifts by more than
    ``norm_tolerance`` a warning is logged.
    """
    psi = np.array(psi0, dtype=complex)
    dim = H.dim if isinstance(H, SparseOperator) else H.shape[0]
    if psi.shape[0] != dim:
        raise ValueError(f"state has dimension {psi.shape[0]}, Hamiltonian {dim}")
    A = _generator(H)
    h = grid.integrator_dt
    norm0 = np.linalg.norm(psi, axis=0)
    records: dict[str, list] = {name: [] for name in observables}
    _collect(observables, psi, records)
    for _ in range(grid.n_samples - 1):
        for _ in range(grid.substeps):
            psi = rk4_step(A, psi, h)
        _collect(observables, psi, records)
    drift = float(np.max(np.abs(np.linalg.norm(psi, axis=0) - norm0)))
    if norm_tolerance is not None and drift > norm_tolerance:
        log.warning("RK4 norm drift %.3g exceeds %.1g (dt=%g ns)", drift, norm_tolerance, h)
    times = grid.times
    series = {name: TimeSeries(name, times, np.array(vals)) for name, vals in records.items()}
    if return_state:
        return series, psi
    return series


class ExactPropagator:
    """Dense ``exp(-iHt)`` from a full Hermitian eigendecomposition."""

    def __init__(self, H, limit: int = DENSE_LIMIT):
        dim = H.dim if isinstance(H, SparseOperator) else H.shape[0]
        if dim > limit:
            raise ValueError(f"dimension {dim} exceeds dense limit {limit}")
        mat = H.toarray() if hasattr(H, "toarray") else np.asarray(H)
        self.energies, self.vectors = np.linalg.eigh(mat)

    def __call__(self, psi0: np.ndarray, t: float) -> np.ndarray:
        coeff = self.vectors.conj().T @ psi0
        phase = np.exp(-1j * self.energies * t)
        if coeff.ndim == 2:
            phase = phase[:, None]
        return self.vectors @ (phase * coeff)

    def series(self, psi0: np.ndarray, times, observables: ObservableMap) -> dict[str, TimeSeries]:
        times = np.asarray(times, dtype=float)
        coeff = self.vectors.conj().T @ psi0
        records: dict[str, list] = {name: [] for name in observables}
        for t in times:
            phase = np.exp(-1j * self.energies * t)
            if coeff.ndim == 2:
                phase = phase[:, None]
            _collect(observables, self.vectors @ (phase * coeff), records)
        return {name: TimeSeries(name, times, np.array(v)) for name, v in records.items()}


def evolve_exact(H, psi0: np.ndarray, t: float):
    """``exp(-iHt) psi0`` by dense diagonalisation (``D <= 4000``)."""
    from .operators import StateVector

    if isinstance(psi0, StateVector):
        return StateVector(psi0.basis, ExactPropagator(H)(psi0.amplitudes, t))
    return ExactPropagator(H)(np.asarray(psi0, dtype=complex), t)


# --- density matrices --------------------------------------------------------

@dataclass
class DensityMatrix:
    basis: SectorBasis
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.shape != (self.basis.dim, self.basis.dim):
            raise ValueError("density matrix shape does not match basis")

    @classmethod
    def pure(cls, basis: SectorBasis, psi: np.ndarray) -> "DensityMatrix":
        return cls(basis, np.outer(psi, psi.conj()))

    @classmethod
    def mixture(cls, basis: SectorBasis, indices, weights=None) -> "DensityMatrix":
        """Diagonal mixture of Fock states (uniform unless ``weights`` given)."""
        indices = np.asarray(indices)
        w = np.full(len(indices), 1.0 / len(indices)) if weights is None else np.asarray(weights, float)
        rho = np.zeros((basis.dim, basis.dim), dtype=complex)
        np.add.at(rho, (indices, indices), w)
        return cls(basis, rho)

    def validate(self, tol: float = 1e-8, check_spectrum: bool = True) -> None:
        rho = self.matrix
        if abs(np.trace(rho) - 1.0) > tol:
            raise ValueError(f"trace {np.trace(rho).real:.12g} != 1")
        if np.max(np.abs(rho - rho.conj().T)) > tol:
            raise ValueError("density matrix is not Hermitian")
        if check_spectrum and self.basis.dim <= 512:
            if np.linalg.eigvalsh(rho).min() < -tol:
                raise ValueError("density matrix has negative eigenvalues")


def dephasing_rates(basis: SectorBasis, noise: NoiseSpec) -> np.ndarray:
    """Decay rate (1/ns) of each coherence ``rho_ab``.

    For jumps ``sqrt(2/T2) n_j`` the dissipator acts elementwise with rate
    ``(1/T2) * sum_j (n_j(a) - n_j(b))**2``.
    """
    n = basis.configs.astype(float)
    sq = (n ** 2).sum(axis=1)
    dist = sq[:, None] + sq[None, :] - 2.0 * n @ n.T
    return noise.dephasing_rate_per_ns * dist


def lindblad_rhs(H, rates: np.ndarray, rho: np.ndarray) -> np.ndarray:
    X = H @ rho
    return -1j * (X - X.conj().T) - rates * rho


def evolve_lindblad(H, noise: NoiseSpec, rho0: DensityMatrix, grid: TimeGrid,
                    observables: ObservableMap, return_state: bool = False, limit: int = DENSITY_LIMIT):
    """RK4 on the dephasing Lindblad equation; observables take ``rho``.

    Without dephasing the step is ``R rho R^+`` with ``R`` the RK4 step of the
    Schroedinger equation, so the result coincides with ``evolve_pure`` of a
    purification to rounding.
    """
    dim = rho0.basis.dim
    if dim > limit:
        raise ValueError(f"dimension {dim} exceeds density-matrix limit {limit}")
    rho0.validate()
    mat = H.matrix if isinstance(H, SparseOperator) else H
    if mat.shape[0] != dim:
        raise ValueError("Hamiltonian and density matrix dimensions differ")
    rates = dephasing_rates(rho0.basis, noise)
    rho = rho0.matrix.copy()
    h = grid.integrator_dt
    f = lambda r: lindblad_rhs(mat, rates, r)  # noqa: E731
    A = (-1j) * mat
    coherent = noise.dephasing_rate_per_ns == 0.0
    records: dict[str, list] = {name: [] for name in observables}
    _collect(observables, rho, records)
    for _ in range(grid.n_samples - 1):
        for _ in range(grid.substeps):
            if coherent:
                rho = rk4_step(A, rk4_step(A, rho, h).conj().T, h).conj().T
                continue
            k1 = f(rho)
            k2 = f(rho + 0.5 * h * k1)
            k3 = f(rho + 0.5 * h * k2)
            k4 = f(rho + h * k3)
            rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _collect(observables, rho, records)
    series = {name: TimeSeries(name, grid.times, np.array(v)) for name, v in records.items()}
    if return_state:
        return series, DensityMatrix(rho0.basis, rho)
    return series


def density_expectation(op, rho: np.ndarray) -> float:
    """``tr(op rho)`` for a Hermitian sparse or dense operator."""
    mat = op.matrix if isinstance(op, SparseOperator) else op
    if hasattr(mat, "multiply"):
        return float(mat.multiply(rho.T).sum().real)
    return float(np.einsum("ab,ba->", mat, rho).real)
