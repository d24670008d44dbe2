"""Infinite-temperature ensemble predictions for the inter-bath current.

Bath A is prepared in each of its hard-core Fock states at a fixed filling
(bath B empty) and the traces are averaged; by linearity this is the
evolution of the uniform mixture over those states.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .basis import build_sector
from .lattice import CROSS, LatticeSpec
from .operators import Observables, build_hamiltonian
from .propagation import TimeGrid, TimeSeries, evolve_pure

EXHAUSTIVE_LIMIT = 10_000
CHUNK = 64


def particles_for_filling(spec: LatticeSpec, filling) -> int:
    f = Fraction(filling).limit_denominator(1000)
    n = f * len(spec.bath_a)
    if n.denominator != 1 or not 0 <= n <= len(spec.bath_a):
        raise ValueError(f"filling {f} is not realisable on {len(spec.bath_a)} bath-A sites")
    return int(n)


def bath_a_states(spec: LatticeSpec, n_a: int) -> list[tuple[int, ...]]:
    """All hard-core Fock states of bath A with ``n_a`` particles, B empty, in
    lexicographic order of occupied-site tuples."""
    out = []
    for occ in itertools.combinations(spec.bath_a_sites, n_a):
        c = [0] * spec.n_sites
        for s in occ:
            c[s] = 1
        out.append(tuple(c))
    return out


def sample_bath_a_states(spec: LatticeSpec, n_a: int, count: int, seed: int) -> list[tuple[int, ...]]:
    """``count`` distinct bath-A Fock states drawn uniformly without replacement."""
    total = math.comb(len(spec.bath_a), n_a)
    if count > total:
        raise ValueError(f"requested {count} distinct states but the bath-A sector has {total}")
    rng = np.random.default_rng(seed)
    sites = np.array(spec.bath_a_sites)
    if total <= EXHAUSTIVE_LIMIT:
        allst = bath_a_states(spec, n_a)
        return [allst[i] for i in sorted(rng.choice(total, size=count, replace=False))]
    seen: set[tuple[int, ...]] = set()
    out = []
    while len(out) < count:
        occ = tuple(sorted(rng.choice(sites, size=n_a, replace=False).tolist()))
        if occ in seen:
            continue
        seen.add(occ)
        c = [0] * spec.n_sites
        for s in occ:
            c[s] = 1
        out.append(tuple(c))
    return out


def checkerboard_state(spec: LatticeSpec) -> tuple[int, ...]:
    """Half filling of bath A with alternating occupations along both legs.

    Site ``s`` (column ``s // 2``, leg ``s % 2``) is occupied when column + leg
    is even.  Bath B is empty.
    """
    c = [0] * spec.n_sites
    for s in spec.bath_a_sites:
        col, leg = divmod(s, 2)
        if (col + leg) % 2 == 0:
            c[s] = 1
    return tuple(c)


def evolve_fock_states(spec: LatticeSpec, configs: Sequence[Sequence[int]], grid: TimeGrid,
                       names: Sequence[str] = ("current",), threads: int = 1,
                       norm_tolerance: float | None = 1e-8) -> dict[str, np.ndarray]:
    """Evolve many Fock states of one sector; returns ``{name: (T, M[, ...])}``.

    Values for observables returning per-site arrays have shape ``(T, L, M)``.
    Work is split into fixed chunks so the result does not depend on
    ``threads``.
    """
    n_tot = {sum(c) for c in configs}
    if len(n_tot) != 1:
        raise ValueError("all initial states must share one particle number")
    basis = build_sector(spec.n_sites, spec.local_dim, n_tot.pop())
    H = build_hamiltonian(spec, basis)
    obs = Observables(spec, basis, H)
    chunks = [list(configs[i:i + CHUNK]) for i in range(0, len(configs), CHUNK)]

    def run(chunk):
        psi = np.zeros((basis.dim, len(chunk)), dtype=complex)
        for m, c in enumerate(chunk):
            psi[basis.rank(c), m] = 1.0
        fns = {n: (lambda p, n=n: obs.evaluate(n, p)) for n in names}
        return evolve_pure(H, psi, grid, fns, norm_tolerance=norm_tolerance)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return {n: np.concatenate([p[n].values for p in parts], axis=-1) for n in names}


@dataclass
class EnsembleResult:
    mean: TimeSeries
    standard_error: TimeSeries
    n_states: int
    mode: str
    seed: int | None = None


def ensemble_current(spec: LatticeSpec, filling_a, grid: TimeGrid, mode: str = "auto",
                     n_samples: int | None = None, seed: int | None = None,
                     observable: str = "current", threads: int = 1) -> EnsembleResult:
    """Average ``observable`` over bath-A Fock states at ``filling_a``.

    ``mode`` is ``"exhaustive"``, ``"monte_carlo"`` or ``"auto"`` (exhaustive
    up to 10^4 states).  Monte-Carlo sampling needs ``n_samples`` and ``seed``.
    """
    n_a = particles_for_filling(spec, filling_a)
    total = math.comb(len(spec.bath_a), n_a)
    if mode == "auto":
        mode = "exhaustive" if total <= EXHAUSTIVE_LIMIT else "monte_carlo"
    if mode == "exhaustive":
        states = bath_a_states(spec, n_a)
    elif mode == "monte_carlo":
        if n_samples is None or seed is None:
            raise ValueError("Monte-Carlo averaging needs n_samples and seed")
        states = sample_bath_a_states(spec, n_a, min(n_samples, total), seed)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    traces = evolve_fock_states(spec, states, grid, (observable,), threads)[observable]
    mean = traces.mean(axis=-1)
    n = traces.shape[-1]
    se = traces.std(axis=-1, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return EnsembleResult(TimeSeries(observable, grid.times, mean),
                          TimeSeries(observable + "_se", grid.times, se), n, mode,
                          seed if mode == "monte_carlo" else None)


def steady_value(series: TimeSeries, window: tuple[float, float] = (60.0, 150.0)) -> float:
    lo, hi = window
    if lo >= hi:
        raise ValueError("window start must precede its end")
    if lo < series.times[0] - 1e-9 or hi > series.times[-1] + 1e-9:
        raise ValueError(f"window {window} outside series range")
    return float(np.mean(series.window(lo, hi).values, axis=0))


def scale_prediction(I0: float, gamma: float, gamma0: float) -> float:
    """Weak-link current extrapolated as ``I0 (gamma/gamma0)^2``."""
    if gamma0 <= 0:
        raise ValueError("reference coupling must be positive")
    return I0 * (gamma / gamma0) ** 2


def predict_population(I0: float, Ix: float, gamma: float, gamma0: float, t_us) -> np.ndarray | float:
    """Bath-B population ``(I0 (gamma/gamma0)^2 + Ix) t`` with ``t`` in us."""
    t = np.asarray(t_us, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    out = (scale_prediction(I0, gamma, gamma0) + Ix) * t
    return float(out) if out.ndim == 0 else out


@dataclass
class EnsemblePrediction:
    gamma0_mhz: float
    I0: float
    Ix: float
    window_ns: tuple[float, float]
    n_states: int
    mode: str
    seed: int | None = None

    def __post_init__(self):
        if not self.window_ns[0] < self.window_ns[1]:
            raise ValueError("window start must precede its end")
        if self.n_states < 1:
            raise ValueError("need at least one averaged state")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window_ns"] = list(self.window_ns)
        return d


def without_cross_cut(spec: LatticeSpec) -> LatticeSpec:
    keep = [e for e in spec.edges
            if not ((e.i in spec.bath_a) != (e.j in spec.bath_a) and e.tag == CROSS)]
    return replace(spec, edges=tuple(keep))


def with_bridge(spec: LatticeSpec, gamma_mhz: float) -> LatticeSpec:
    """Copy of ``spec`` with the weak link set to ``gamma_mhz``."""
    pair = frozenset(spec.bridge_edge)
    edges = [e if e.pair != pair else replace(e, f_mhz=gamma_mhz) for e in spec.edges]
    if not any(e.pair == pair for e in edges):
        edges.append(replace(spec.bridge(), f_mhz=gamma_mhz))
    return replace(spec, edges=tuple(edges))


def extract_prediction(spec: LatticeSpec, gamma0_mhz: float = 0.5, filling_a=Fraction(1, 2),
                       grid: TimeGrid | None = None, window: tuple[float, float] = (60.0, 150.0),
                       mode: str = "auto", n_samples: int | None = None, seed: int | None = None,
                       threads: int = 1, return_series: bool = False):
    """Steady bridge current ``I0`` at ``gamma0`` (cut diagonals removed) and
    cross-channel current ``Ix`` (bridge switched off, diagonals on).

    With ``return_series`` the averaged runs are returned as well, keyed
    ``"bridge"`` and ``"cross"`` (the latter absent without cut diagonals).
    """
    grid = grid or TimeGrid(0.0, window[1], 0.1, 1.0)
    bridge_only = with_bridge(without_cross_cut(spec), gamma0_mhz)
    runs = {"bridge": ensemble_current(bridge_only, filling_a, grid, mode, n_samples, seed,
                                       "current", threads)}
    cross_only = with_bridge(spec, 0.0)
    Ix = 0.0
    if any(e.tag == CROSS and e.f_mhz != 0.0 for e in cross_only.cut_edges()):
        runs["cross"] = ensemble_current(cross_only, filling_a, grid, mode, n_samples, seed,
                                         "current:cross", threads)
        Ix = steady_value(runs["cross"].mean, window)
    res0 = runs["bridge"]
    pred = EnsemblePrediction(gamma0_mhz, steady_value(res0.mean, window), Ix, tuple(window),
                              res0.n_states, res0.mode, res0.seed)
    return (pred, runs) if return_series else pred
