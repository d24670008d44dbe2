"""Finite-shot emulation of the two-basis current measurement.

The bridge current of a hard-core ladder is ``-(gamma/2)(<X_a Y_b> - <Y_a X_b>)``.
Each repetition measures the bridge pair ``S0`` times in the XY basis and
``S0`` times in the YX basis, sampling the exact four-outcome distribution of
the two-site reduced state.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .basis import SectorBasis
from .lattice import LatticeSpec
from .operators import (MHZ_TO_RAD_PER_NS, PAULI_X, PAULI_Y, PER_NS_TO_PER_US, StateVector,
                        reduced_density_two_site)

# outcome order (+,+), (+,-), (-,+), (-,-)
_PRODUCTS = np.array([1.0, -1.0, -1.0, 1.0])


@dataclass(frozen=True)
class ShotPlan:
    """``shots_per_repetition=None`` selects the noise-free analytic mode."""

    shots_per_repetition: int | None = 6000
    repetitions: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.shots_per_repetition is not None and self.shots_per_repetition < 1:
            raise ValueError("need at least one shot per repetition")
        if self.repetitions < 2:
            raise ValueError("need at least two repetitions for variance estimates")

    @property
    def analytic(self) -> bool:
        return self.shots_per_repetition is None

    def to_dict(self) -> dict:
        return {"shots_per_repetition": self.shots_per_repetition,
                "repetitions": self.repetitions, "seed": self.seed}


@dataclass
class MeasurementRecord:
    """Current estimates ``values[k, r]`` (1/us) at times ``times[k]`` (ns)."""

    times: np.ndarray
    values: np.ndarray
    plan: ShotPlan | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != len(self.times):
            raise ValueError("values must have shape (K, R) matching times")
        if len(self.times) < 2:
            raise ValueError("a record needs at least two time points")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("record contains non-finite values")

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def R(self) -> int:
        return self.values.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_ns"] + [f"rep_{r}" for r in range(self.R)])
        for t, row in zip(self.times, self.values):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MeasurementRecord":
        rows = list(csv.reader(io.StringIO(text)))
        header = [h.strip() for h in rows[0]]
        if header[0] != "t_ns" or any(h != f"rep_{r}" for r, h in enumerate(header[1:])):
            raise ValueError("unexpected record header")
        data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
        return cls(data[:, 0], data[:, 1:])


def _projectors(pauli: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    eye = np.eye(2)
    return (eye + pauli) / 2, (eye - pauli) / 2


def pauli_outcome_probabilities(rho2: np.ndarray) -> dict[str, np.ndarray]:
    """Joint outcome probabilities for the XY and YX measurements."""
    px, py = _projectors(PAULI_X), _projectors(PAULI_Y)
    out = {}
    for name, (first, second) in {"XY": (px, py), "YX": (py, px)}.items():
        p = np.array([np.trace(rho2 @ np.kron(a, b)).real for a in first for b in second])
        p = np.clip(p, 0.0, None)
        out[name] = p / p.sum()
    return out


def _current_scale(spec: LatticeSpec) -> float:
    return MHZ_TO_RAD_PER_NS * PER_NS_TO_PER_US * spec.bridge().f_mhz


def _bridge_density(state, spec: LatticeSpec, basis: SectorBasis | None = None) -> np.ndarray:
    if spec.local_dim != 2:
        raise ValueError("the two-basis Pauli protocol needs local_dim = 2")
    a, b = spec.bridge_edge
    return reduced_density_two_site(state, a, b, basis).matrix


def estimate_from_probabilities(probs: dict[str, np.ndarray], scale: float, shots: int | None,
                                rng: np.random.Generator, size: int | None = None):
    """Current estimate(s) from ``shots`` draws per basis (exact if ``shots`` is None)."""
    if shots is None:
        val = -0.5 * scale * (probs["XY"] @ _PRODUCTS - probs["YX"] @ _PRODUCTS)
        return val if size is None else np.full(size, val)
    means = {}
    for name in ("XY", "YX"):
        counts = rng.multinomial(shots, probs[name], size=size)
        means[name] = (counts @ _PRODUCTS) / shots
    return -0.5 * scale * (means["XY"] - means["YX"])


def shot_noise_variance(probs: dict[str, np.ndarray], scale: float, shots: int) -> float:
    """Exact variance of one estimate: ``(scale/2)^2 (Var XY + Var YX) / shots``."""
    var = sum(1.0 - float(probs[b] @ _PRODUCTS) ** 2 for b in ("XY", "YX"))
    return (0.5 * scale) ** 2 * var / shots


def sample_current_estimate(state: StateVector, spec: LatticeSpec, shots: int,
                            rng: np.random.Generator) -> float:
    if shots < 1:
        raise ValueError("need at least one shot")
    probs = pauli_outcome_probabilities(_bridge_density(state, spec))
    return float(estimate_from_probabilities(probs, _current_scale(spec), shots, rng))


def time_stream(seed: int, k: int) -> np.random.Generator:
    """Independent generator for time index ``k``; repetitions are drawn from it in order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(k,))))


def build_measurement_record(states, spec: LatticeSpec, plan: ShotPlan, times,
                             basis: SectorBasis | None = None) -> MeasurementRecord:
    """Emulate ``plan.repetitions`` measurements at each of ``K`` times.

    ``states`` is a sequence of :class:`StateVector` or a ``(D, K)`` array of
    amplitudes (then ``basis`` is required).
    """
    times = np.asarray(times, dtype=float)
    if isinstance(states, np.ndarray):
        if basis is None:
            raise ValueError("raw amplitude arrays need a basis")
        cols = [states[:, k] for k in range(states.shape[1])]
    else:
        cols = list(states)
    if len(cols) != len(times):
        raise ValueError(f"{len(cols)} states for {len(times)} times")
    if len(times) < 2:
        raise ValueError("need at least two time points")
    scale = _current_scale(spec)
    values = np.empty((len(times), plan.repetitions))
    for k, st in enumerate(cols):
        probs = pauli_outcome_probabilities(_bridge_density(st, spec, basis))
        values[k] = estimate_from_probabilities(
            probs, scale, plan.shots_per_repetition, time_stream(plan.seed, k), size=plan.repetitions)
    return MeasurementRecord(times, values, plan)


def expected_record_variances(states, spec: LatticeSpec, shots: int,
                              basis: SectorBasis | None = None) -> np.ndarray:
    """Per-time shot-noise variance predicted from the exact outcome distribution."""
    cols = [states[:, k] for k in range(states.shape[1])] if isinstance(states, np.ndarray) else states
    scale = _current_scale(spec)
    return np.array([shot_noise_variance(pauli_outcome_probabilities(_bridge_density(s, spec, basis)),
                                         scale, shots) for s in cols])


def sem_curve(values: np.ndarray, shots_per_repetition: int) -> tuple[np.ndarray, np.ndarray]:
    """Standard error of the running mean of one time's repetitions.

    Returns total samples ``S = r * S0`` and the SEM of the first ``r``
    repetitions, for ``r = 2 .. len(values)``.
    """
    values = np.asarray(values, dtype=float)
    r = np.arange(2, len(values) + 1)
    sems = np.array([values[:n].std(ddof=1) / math.sqrt(n) for n in r])
    return r * shots_per_repetition, sems
