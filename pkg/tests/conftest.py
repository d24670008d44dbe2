import numpy as np
import pytest
from hypothesis import settings

from ladderflux.basis import build_sector
from ladderflux.lattice import BRIDGE, Edge, LatticeSpec

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

TWO_PI_MHZ = 2 * np.pi * 1e-3


def two_site_spec(gamma_mhz=1.0, local_dim=2):
    return LatticeSpec(2, local_dim, (Edge(0, 1, gamma_mhz, BRIDGE),), (0.0, 0.0), -175.0,
                       frozenset({0}), frozenset({1}), (0, 1))


def lowering(d):
    return np.diag(np.sqrt(np.arange(1, d)), k=1).astype(complex)


def site_operator(op, site, n_sites, d):
    out = np.array([[1.0 + 0j]])
    for s in range(n_sites):
        out = np.kron(out, op if s == site else np.eye(d))
    return out


def dense_hamiltonian(spec):
    """Full-space Hamiltonian (rad/ns) from Kronecker products."""
    L, d = spec.n_sites, spec.local_dim
    a = [site_operator(lowering(d), s, L, d) for s in range(L)]
    H = np.zeros((d ** L, d ** L), complex)
    for e in spec.edges:
        hop = a[e.i].conj().T @ a[e.j]
        H += TWO_PI_MHZ * e.f_mhz * (hop + hop.conj().T)
    for s in range(L):
        n = a[s].conj().T @ a[s]
        H += TWO_PI_MHZ * spec.potentials_mhz[s] * n
        if d > 2:
            H += 0.5 * TWO_PI_MHZ * spec.anharmonicity_mhz * n @ (n - np.eye(d ** L))
    return H


def sector_indices(basis):
    """Positions of the sector configurations in the Kronecker (site 0 first) ordering."""
    d = basis.local_dim
    weights = d ** np.arange(basis.n_sites - 1, -1, -1)
    return basis.configs.astype(np.int64) @ weights


def random_state(dim, rng):
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def sector():
    return build_sector


# one line per acceptance criterion, filled by test_acceptance and echoed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
