"""Scenario configuration documents.

A scenario file is JSON::

    {
      "scenario": "steadiness",
      "lattice": {...} | "lattice_file": "device.json",
      "grid": {"t_start": 0, "t_end": 1000, "integrator_dt": 0.1, "sample_dt": 5},
      "shots": {"shots_per_repetition": 6000, "repetitions": 10} | "analytic": true,
      "params": {...},
      "seed": 7,
      "out": "runs/steadiness"
    }

A run manifest (which embeds the resolved document under ``"config"``) is
accepted in place of a scenario file.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from ..lattice import ConfigError, LatticeSpec, columns_for_size, spec_from_mapping
from ..measurement import ShotPlan
from ..propagation import NoiseSpec, TimeGrid

SCENARIOS = ("evolve", "typicality", "steadiness", "tunability", "gamma_scan", "ensemble")

DEFAULT_GRID = {"t_start": 0.0, "t_end": 1000.0, "integrator_dt": 0.1, "sample_dt": 5.0}
DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    "evolve": {"initial": "checkerboard", "observables": ["current", "population_b"],
               "fluctuation_window": [100.0, 1000.0, 5.0]},
    "typicality": {"sizes": [10, 14], "n_states": 20, "probe_ns": 200.0},
    "steadiness": {"sizes": [6, 10, 14], "fluctuation_window": [100.0, 1000.0, 5.0]},
    "tunability": {"n_states": 10, "steady_window": [60.0, 150.0]},
    "gamma_scan": {"gammas_mhz": [0.5, 1.0, 1.5, 2.0], "gamma0_mhz": 0.5, "n_states": None,
                   "steady_window": [60.0, 150.0]},
    "ensemble": {"gamma0_mhz": 0.5, "filling_a": "1/2", "n_samples": None,
                 "steady_window": [60.0, 150.0]},
}
_TOP_KEYS = {"scenario", "lattice", "lattice_file", "grid", "shots", "analytic", "params",
             "seed", "out", "t2_us"}
_TUNING_KEYS = ("fillings", "h0_mhz", "r")


@dataclass
class ScenarioConfig:
    scenario: str
    lattice_doc: dict[str, Any]
    grid: TimeGrid
    shots: ShotPlan | None
    params: dict[str, Any]
    seed: int | None
    out: Path
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    @property
    def lattice(self) -> LatticeSpec:
        return spec_from_mapping(self.lattice_doc, "lattice")

    def lattice_for_size(self, n_sites: int) -> LatticeSpec:
        """The configured device resized to ``n_sites`` (same couplings)."""
        ca, cb, extra = columns_for_size(n_sites)
        doc = dict(self.lattice_doc, columns_a=ca, columns_b=cb, extra_site_a=bool(extra))
        doc.pop("edge_overrides", None)
        doc.pop("potentials_mhz", None)
        return spec_from_mapping(doc, "lattice")

    def seed_for(self, *key: int) -> int:
        """Independent integer seed for a sub-task (e.g. one lattice size)."""
        import numpy as np

        if self.seed is None:
            raise ConfigError("seed", f"scenario {self.scenario!r} draws random states and needs a seed")
        return int(np.random.SeedSequence(self.seed, spawn_key=key).generate_state(1)[0])

    def resolved(self) -> dict[str, Any]:
        """JSON-ready document that reproduces this configuration."""
        g = self.grid
        return {
            "scenario": self.scenario,
            "lattice": self.lattice_doc,
            "grid": {"t_start": g.t_start, "t_end": g.t_end, "integrator_dt": g.integrator_dt,
                     "sample_dt": g.sample_dt},
            "shots": None if self.shots is None else self.shots.to_dict(),
            "analytic": self.shots is None,
            "params": self.params,
            "seed": self.seed,
            "out": str(self.out),
            "t2_us": None if math.isinf(self.noise.t2_us) else self.noise.t2_us,
        }


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(path, message)


def _nonempty_list(params: Mapping, key: str) -> None:
    if key in params and params[key] is not None:
        v = params[key]
        _require(isinstance(v, list) and len(v) > 0, f"params.{key}", "expected a non-empty list")


def config_from_mapping(doc: Mapping[str, Any], base_dir: Path = Path("."),
                        overrides: Mapping[str, Any] | None = None) -> ScenarioConfig:
    if isinstance(doc, Mapping) and isinstance(doc.get("config"), Mapping):
        doc = doc["config"]      # a run manifest
    _require(isinstance(doc, Mapping), "<root>", "expected an object")
    unknown = set(doc) - _TOP_KEYS
    _require(not unknown, sorted(unknown)[0] if unknown else "", "unknown key")
    overrides = dict(overrides or {})

    scenario = overrides.get("scenario") or doc.get("scenario")
    _require(scenario in SCENARIOS, "scenario", f"expected one of {', '.join(SCENARIOS)}, got {scenario!r}")
    if doc.get("scenario") not in (None, scenario):
        raise ConfigError("scenario", f"file declares {doc['scenario']!r} but {scenario!r} was requested")

    if "lattice" in doc and "lattice_file" in doc:
        raise ConfigError("lattice_file", "give either lattice or lattice_file, not both")
    if "lattice_file" in doc:
        path = base_dir / str(doc["lattice_file"])
        _require(path.is_file(), "lattice_file", f"file not found: {path}")
        try:
            lattice_doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("lattice_file", f"{path}: not valid JSON ({exc.msg})") from None
    else:
        _require("lattice" in doc, "lattice", "missing required key")
        lattice_doc = doc["lattice"]
    _require(isinstance(lattice_doc, Mapping), "lattice", "expected an object")
    lattice_doc = dict(lattice_doc)
    spec_from_mapping(lattice_doc, "lattice")

    grid_doc = dict(DEFAULT_GRID, **(doc.get("grid") or {}))
    _require(set(grid_doc) == set(DEFAULT_GRID), "grid", f"keys must be {sorted(DEFAULT_GRID)}")
    try:
        grid = TimeGrid(**{k: float(v) for k, v in grid_doc.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError("grid", str(exc)) from None

    analytic = bool(overrides.get("analytic") or doc.get("analytic", False))
    seed = overrides.get("seed", doc.get("seed"))
    _require(seed is None or (isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0),
             "seed", f"expected a non-negative integer, got {seed!r}")
    shots = None
    if not analytic:
        sd = doc.get("shots")
        if sd is not None:
            _require(isinstance(sd, Mapping), "shots", "expected an object")
            try:
                shots = ShotPlan(sd.get("shots_per_repetition", 6000), sd.get("repetitions", 10),
                                 seed if seed is not None else 0)
            except (TypeError, ValueError) as exc:
                raise ConfigError("shots", str(exc)) from None
            _require(seed is not None, "seed", "shot emulation needs a seed")

    params = dict(DEFAULT_PARAMS[scenario])
    given = doc.get("params") or {}
    _require(isinstance(given, Mapping), "params", "expected an object")
    if scenario == "tunability":
        present = [k for k in _TUNING_KEYS if k in given]
        _require(len(present) == 1, "params",
                 f"exactly one of {', '.join(_TUNING_KEYS)} is required, got {present or 'none'}")
    params.update(given)
    for key in ("sizes", "gammas_mhz", *_TUNING_KEYS, "observables"):
        _nonempty_list(params, key)

    t2 = overrides.get("t2_us", doc.get("t2_us"))
    try:
        noise = NoiseSpec(math.inf if t2 is None else float(t2))
    except (TypeError, ValueError) as exc:
        raise ConfigError("t2_us", str(exc)) from None

    out = overrides.get("out") or doc.get("out") or f"ladderflux-{scenario}"
    return ScenarioConfig(scenario, lattice_doc, grid, shots, params, seed, Path(out), noise)


def load_config(path: str | Path, overrides: Mapping[str, Any] | None = None) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(str(path), "config file not found")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"not valid JSON ({exc.msg} at line {exc.lineno})") from None
    return config_from_mapping(doc, path.parent, overrides)
