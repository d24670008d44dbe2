"""Scenario runners.

Each ``run_*`` function takes a :class:`ScenarioConfig` and returns a
:class:`ScenarioResult` holding every output file as text, so results can be
checksummed before anything is written.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from ..basis import build_sector
from ..ensemble import (EXHAUSTIVE_LIMIT, bath_a_states, checkerboard_state, evolve_fock_states,
                        extract_prediction, particles_for_filling, predict_population,
                        sample_bath_a_states, scale_prediction, steady_value, with_bridge)
from ..lattice import ConfigError, LatticeSpec, TuningDirective, apply_tuning
from ..measurement import ShotPlan, build_measurement_record
from ..operators import Observables, build_hamiltonian
from ..propagation import (DensityMatrix, TimeGrid, TimeSeries, density_expectation, evolve_lindblad,
                           evolve_pure)
from ..stats import fit_log_slope, mitigated_fluctuation, power_spectrum, temporal_fluctuation
from .config import ScenarioConfig

#: steady current of the 21-site device model (local dim 3), for comparison
REFERENCE_LARGE_LADDER = {"n_sites": 21, "gamma0_mhz": 0.5, "I0": 0.08, "Ix": 0.10}


@dataclass
class ScenarioResult:
    scenario: str
    files: dict[str, str] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)
    geometry: dict[str, Any] = field(default_factory=dict)

    def add(self, name: str, text: str) -> None:
        if name in self.files:
            raise ValueError(f"duplicate output {name}")
        self.files[name] = text


# --- formatting --------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def table_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def trace_csv(series: TimeSeries) -> str:
    return table_csv(["t_ns", "value"], zip(series.times, series.values))


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _tag(v) -> str:
    return str(v).replace("/", "_").replace(".", "p").replace("-", "m")


def _pmap(fn: Callable, items: Sequence, threads: int) -> list:
    """Ordered map over independent jobs."""
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _window(params: dict, key: str) -> tuple[float, ...]:
    w = params[key]
    if not isinstance(w, (list, tuple)) or len(w) not in (2, 3) or not w[0] < w[1]:
        raise ConfigError(f"params.{key}", f"expected [start, end] or [start, end, step], got {w!r}")
    return tuple(float(x) for x in w)


def _check_window_on_grid(grid: TimeGrid, window: Sequence[float], key: str) -> None:
    if window[0] < grid.t_start or window[1] > grid.t_end + 1e-9:
        raise ConfigError(f"params.{key}", f"window {list(window)} outside grid "
                                           f"[{grid.t_start}, {grid.t_end}]")


def _initial_config(spec: LatticeSpec, initial) -> tuple[int, ...]:
    if initial == "checkerboard":
        return checkerboard_state(spec)
    if (isinstance(initial, list) and len(initial) == spec.n_sites
            and all(isinstance(n, int) and 0 <= n < spec.local_dim for n in initial)):
        return tuple(initial)
    raise ConfigError("params.initial", f"expected 'checkerboard' or {spec.n_sites} occupations")


def _trajectory(spec: LatticeSpec, config: Sequence[int], grid: TimeGrid, names: Sequence[str],
                keep_states: bool = False):
    basis = build_sector(spec.n_sites, spec.local_dim, sum(config))
    H = build_hamiltonian(spec, basis)
    obs = Observables(spec, basis, H)
    fns = {n: (lambda p, n=n: obs.evaluate(n, p)) for n in names}
    if keep_states:
        fns["__state"] = lambda p: p.copy()
    psi = np.zeros(basis.dim, dtype=complex)
    psi[basis.rank(config)] = 1.0
    return basis, H, obs, evolve_pure(H, psi, grid, fns)


def _record(spec: LatticeSpec, plan: ShotPlan, states: TimeSeries, basis, window):
    """Shot-noise record over ``window`` from stored states."""
    if spec.local_dim != 2:
        raise ConfigError("shots", "shot emulation needs local_dim 2; use --analytic")
    sel = states.window(*window)
    return build_measurement_record(np.asarray(sel.values).T, spec, plan, sel.times, basis)


# --- scenarios ----------------------------------------------------------------

def run_evolve(cfg: ScenarioConfig, threads: int = 1) -> ScenarioResult:
    """One trajectory from a chosen Fock state, with its current spectrum."""
    spec = cfg.lattice
    p = cfg.params
    window = _window(p, "fluctuation_window")
    _check_window_on_grid(cfg.grid, window, "fluctuation_window")
    config = _initial_config(spec, p["initial"])
    names = list(p["observables"])
    if "current" not in names:
        names.insert(0, "current")
    try:
        basis, H, obs, series = _trajectory(spec, config, cfg.grid, names, cfg.shots is not None)
    except ValueError as exc:
        raise ConfigError("params.observables", str(exc)) from None
    res = ScenarioResult("evolve", geometry=spec.describe())
    res.summary = {"initial": list(config), "sector_dim": basis.dim}
    for name in names:
        s = series[name]
        if s.values.ndim == 1:
            res.add(f"traces/{name.replace(':', '_')}.csv", trace_csv(s))
        else:
            res.add(f"traces/{name}.csv", table_csv(
                ["t_ns"] + [f"site_{i}" for i in range(s.values.shape[1])],
                ([t, *row] for t, row in zip(s.times, s.values))))
    cur = series["current"].window(*window)
    res.summary["sigma_t2_noise_free"] = temporal_fluctuation(cur.values)
    dt = window[2] if len(window) == 3 else cfg.grid.sample_dt
    spec_rep = power_spectrum(series["current"].window(*window), dt)
    res.add("spectrum.csv", spec_rep.to_csv())
    res.add("spectrum.json", spec_rep.to_json() + "\n")
    res.summary["dominant_frequency_mhz"] = spec_rep.dominant_frequency()[1]
    if cfg.shots is not None:
        rec = _record(spec, cfg.shots, series["__state"], basis, window)
        rep = mitigated_fluctuation(rec)
        res.add("record.csv", rec.to_csv())
        res.add("estimator.csv", rep.to_csv())
        res.add("estimator.json", rep.to_json() + "\n")
        res.summary.update(sigma_t2_naive=rep.sigma_t2_naive, sigma_t2_mitigated=rep.sigma_t2_mitigated)
    return res


def run_typicality(cfg: ScenarioConfig, threads: int = 1) -> ScenarioResult:
    """Spread of ``I(t_probe)`` over random half-filled bath-A Fock states."""
    p = cfg.params
    n_states = p["n_states"]
    if not isinstance(n_states, int) or n_states < 2:
        raise ConfigError("params.n_states", "need at least two states")
    probe = float(p["probe_ns"])
    if not np.any(np.abs(cfg.grid.times - probe) < 1e-9):
        raise ConfigError("params.probe_ns", f"{probe} ns is not a sample time of the grid")
    res = ScenarioResult("typicality")
    dist_rows, summary_rows = [], []

    def one(L):
        spec = cfg.lattice_for_size(L)
        n_a = len(spec.bath_a) // 2
        total = math.comb(len(spec.bath_a), n_a)
        if n_states > total:
            raise ConfigError("params.n_states",
                              f"{n_states} distinct states requested but L={L} has only {total}")
        states = sample_bath_a_states(spec, n_a, n_states, cfg.seed_for(L))
        traces = evolve_fock_states(spec, states, cfg.grid, ("current",), threads)["current"]
        return spec, states, traces

    for L in p["sizes"]:
        spec, states, traces = one(L)
        res.geometry[f"L{L}"] = spec.describe()
        k = int(np.argmin(np.abs(cfg.grid.times - probe)))
        probe_vals = traces[k]
        for m, c in enumerate(states):
            occ = " ".join(str(s) for s, n in enumerate(c) if n)
            dist_rows.append((L, m, occ, probe_vals[m]))
            res.add(f"traces/L{L}/state_{m:03d}.csv",
                    trace_csv(TimeSeries("current", cfg.grid.times, traces[:, m])))
        mean, std = float(probe_vals.mean()), float(probe_vals.std(ddof=1))
        summary_rows.append((L, len(states), mean, std))
        res.summary[f"L{L}"] = {"mean": mean, "std": std, "n_states": len(states)}
    res.add("distribution.csv", table_csv(["L", "state", "occupied_sites", "current_at_probe"], dist_rows))
    res.add("summary.csv", table_csv(["L", "n_states", "mean", "std"], summary_rows))
    res.summary["probe_ns"] = probe
    return res


def run_steadiness(cfg: ScenarioConfig, threads: int = 1) -> ScenarioResult:
    """Temporal fluctuation versus size from the alternating half-filled start."""
    p = cfg.params
    window = _window(p, "fluctuation_window")
    _check_window_on_grid(cfg.grid, window, "fluctuation_window")
    sizes = list(p["sizes"])
    lindblad = not math.isinf(cfg.noise.t2_us)
    specs = {L: cfg.lattice_for_size(L) for L in sizes}
    if lindblad:
        from ..propagation import DENSITY_LIMIT
        for L, spec in specs.items():
            dim = build_sector(spec.n_sites, spec.local_dim, sum(checkerboard_state(spec))).dim
            if dim > DENSITY_LIMIT:
                raise ConfigError("t2_us", f"density-matrix run infeasible for L={L} "
                                           f"(sector dimension {dim} > {DENSITY_LIMIT})")
    if cfg.shots is not None and any(s.local_dim != 2 for s in specs.values()):
        raise ConfigError("shots", "shot emulation needs local_dim 2; use --analytic")

    def one(L):
        spec = specs[L]
        config = checkerboard_state(spec)
        basis, H, obs, series = _trajectory(spec, config, cfg.grid, ("current",), cfg.shots is not None)
        out = {"spec": spec, "dim": basis.dim, "series": series["current"]}
        out["noise_free"] = temporal_fluctuation(series["current"].window(*window).values)
        if cfg.shots is not None:
            out["record"] = _record(spec, cfg.shots, series["__state"], basis, window)
            out["report"] = mitigated_fluctuation(out["record"])
        if lindblad:
            op = obs.current_op()
            rho0 = DensityMatrix.pure(basis, np.eye(basis.dim)[basis.rank(config)].astype(complex))
            ls = evolve_lindblad(H, cfg.noise, rho0, cfg.grid,
                                 {"current": lambda r: density_expectation(op, r)})
            out["lindblad_series"] = ls["current"]
            out["lindblad"] = temporal_fluctuation(ls["current"].window(*window).values)
        return out

    runs = _pmap(one, sizes, threads)
    res = ScenarioResult("steadiness")
    rows = []
    for L, r in zip(sizes, runs):
        res.geometry[f"L{L}"] = r["spec"].describe()
        res.add(f"traces/current_L{L}.csv", trace_csv(r["series"]))
        rep = r.get("report")
        row = [L, r["dim"], r["noise_free"]]
        row += [rep.sigma_t2_naive, rep.sigma_t2_mitigated, rep.standard_error,
                rep.mean_sampling_variance] if rep else ["", "", "", ""]
        row += [r["lindblad"]] if lindblad else [""]
        rows.append(row)
        if rep:
            res.add(f"records/record_L{L}.csv", r["record"].to_csv())
            res.add(f"reports/estimator_L{L}.csv", rep.to_csv())
            res.add(f"reports/estimator_L{L}.json", rep.to_json() + "\n")
        if lindblad:
            res.add(f"traces/current_lindblad_L{L}.csv", trace_csv(r["lindblad_series"]))
        res.summary[f"L{L}"] = {"sigma_t2_noise_free": r["noise_free"], "K": len(r["series"].window(*window)),
                                **({"sigma_t2_naive": rep.sigma_t2_naive,
                                    "sigma_t2_mitigated": rep.sigma_t2_mitigated,
                                    "standard_error": rep.standard_error} if rep else {}),
                                **({"sigma_t2_lindblad": r["lindblad"]} if lindblad else {})}
    res.add("fluctuation_vs_L.csv", table_csv(
        ["L", "sector_dim", "sigma_t2_noise_free", "sigma_t2_naive", "sigma_t2_mitigated",
         "standard_error", "mean_sampling_variance", "sigma_t2_lindblad"], rows))
    if len(sizes) >= 3:
        fit = fit_log_slope(sizes, [r["noise_free"] for r in runs])
        res.summary["log_slope_fit"] = {"slope": fit.slope, "intercept": fit.intercept,
                                        "stderr": fit.stderr, "upper_95": fit.upper_95,
                                        "decreasing": fit.decreasing()}
        res.add("fit.json", _json(res.summary["log_slope_fit"]))
    return res


def _states_for(spec: LatticeSpec, n_a: int, n_states: int | None, seed: int | None):
    total = math.comb(len(spec.bath_a), n_a)
    if n_states is None:
        if total > EXHAUSTIVE_LIMIT:
            raise ConfigError("params.n_states", f"{total} bath-A states: set n_states and a seed")
        return bath_a_states(spec, n_a), "exhaustive"
    if n_states > total:
        raise ConfigError("params.n_states", f"{n_states} distinct states requested, sector has {total}")
    if seed is None:
        raise ConfigError("seed", "random initial states need a seed")
    return sample_bath_a_states(spec, n_a, n_states, seed), "monte_carlo"


def run_tunability(cfg: ScenarioConfig, threads: int = 1) -> ScenarioResult:
    """Averaged current for a family of fillings, bath-B potentials or bath-B couplings."""
    p = cfg.params
    keys = [k for k in ("fillings", "h0_mhz", "r") if k in p]
    if len(keys) != 1:
        raise ConfigError("params", "exactly one of fillings, h0_mhz, r is required")
    key = keys[0]
    window = _window(p, "steady_window")
    _check_window_on_grid(cfg.grid, window, "steady_window")
    base = cfg.lattice_for_size(p["size"]) if "size" in p else cfg.lattice
    res = ScenarioResult("tunability", geometry=base.describe())
    seed = cfg.seed_for(0) if p["n_states"] is not None else None

    def one(value):
        try:
            if key == "fillings":
                d = TuningDirective.filling(Fraction(str(value)))
            elif key == "h0_mhz":
                d = TuningDirective.potential_shift(float(value), p.get("target", "B"))
            else:
                d = TuningDirective.coupling_scale(float(value), p.get("target", "B"))
            spec = apply_tuning(base, d)
            n_a = particles_for_filling(spec, spec.filling_a if key == "fillings" else Fraction(1, 2))
        except ValueError as exc:
            raise ConfigError(f"params.{key}", str(exc)) from None
        states, mode = _states_for(spec, n_a, p["n_states"], seed)
        traces = evolve_fock_states(spec, states, cfg.grid, ("current",), threads)["current"]
        return states, mode, traces

    values = list(p[key])
    rows, family = [], []
    for value, (states, mode, traces) in zip(values, _pmap(one, values, 1)):
        mean = TimeSeries("current", cfg.grid.times, traces.mean(axis=1))
        per_state = np.array([steady_value(TimeSeries("c", cfg.grid.times, traces[:, m]), window[:2])
                              for m in range(traces.shape[1])])
        avg = steady_value(mean, window[:2])
        se = float(per_state.std(ddof=1) / math.sqrt(len(per_state))) if len(per_state) > 1 else 0.0
        res.add(f"traces/{key}_{_tag(value)}.csv", trace_csv(mean))
        rows.append((key, value, avg, se, len(states), mode))
        family.append({"value": str(value), "window_average": avg, "standard_error": se,
                       "n_states": len(states)})
    res.add("averages.csv", table_csv(["parameter", "value", "window_average", "standard_error",
                                       "n_states", "mode"], rows))
    diffs = np.diff([f["window_average"] for f in family])
    trend = ("increasing" if np.all(diffs > 0) else "decreasing" if np.all(diffs < 0) else "mixed")
    res.summary = {"parameter": key, "window_ns": list(window[:2]), "family": family,
                   "trend_with_parameter": trend}
    res.add("ordering.json", _json(res.summary))
    return res


def _linear_deviation(series: TimeSeries, lo: float, hi: float) -> float:
    """Largest residual of a straight-line fit relative to the range covered."""
    w = series.window(lo, hi)
    coef = np.polyfit(w.times, w.values, 1)
    resid = w.values - np.polyval(coef, w.times)
    span = abs(np.polyval(coef, hi) - np.polyval(coef, lo))
    return float(np.max(np.abs(resid)) / span) if span > 0 else math.inf


def run_gamma_scan(cfg: ScenarioConfig, threads: int = 1) -> ScenarioResult:
    """Ensemble current and bath-B population for each weak-link strength."""
    p = cfg.params
    window = _window(p, "steady_window")
    early = tuple(p.get("early_window", (100.0, 200.0)))
    late = tuple(p.get("late_window", (600.0, 1000.0)))
    linear = tuple(p.get("linear_window", (200.0, 1000.0)))
    for k, w in (("steady_window", window), ("early_window", early), ("late_window", late),
                 ("linear_window", linear)):
        _check_window_on_grid(cfg.grid, w, k)
    spec = cfg.lattice
    gamma0 = float(p["gamma0_mhz"])
    n_a = particles_for_filling(spec, Fraction(1, 2))
    seed = cfg.seed_for(0) if p["n_states"] is not None else None
    states, mode = _states_for(spec, n_a, p["n_states"], seed)
    # same seed and bath, hence the same initial states as the scan itself
    pred = extract_prediction(spec, gamma0, Fraction(1, 2), cfg.grid, window[:2], mode,
                              p["n_states"], seed, threads)
    res = ScenarioResult("gamma_scan", geometry=spec.describe())
    res.add("prediction.json", _json({**pred.to_dict(), "reference_large_ladder": REFERENCE_LARGE_LADDER}))
    t_us = cfg.grid.times / 1000.0
    rows = []
    gammas = [float(g) for g in p["gammas_mhz"]]
    runs = _pmap(lambda g: evolve_fock_states(with_bridge(spec, g), states, cfg.grid,
                                              ("current", "population_b"), threads), gammas, 1)
    for g, tr in zip(gammas, runs):
        cur = TimeSeries("current", cfg.grid.times, tr["current"].mean(axis=1))
        pop = TimeSeries("population_b", cfg.grid.times, tr["population_b"].mean(axis=1))
        ref = TimeSeries("population_b_prediction", cfg.grid.times,
                         predict_population(pred.I0, pred.Ix, g, gamma0, t_us))
        tag = _tag(g)
        res.add(f"traces/current_g{tag}.csv", trace_csv(cur))
        res.add(f"traces/population_b_g{tag}.csv", trace_csv(pop))
        res.add(f"traces/population_b_prediction_g{tag}.csv", trace_csv(ref))
        steady = steady_value(cur, window[:2])
        e, l_ = steady_value(cur, early), steady_value(cur, late)
        dev = _linear_deviation(pop, *linear)
        rows.append((g, steady, scale_prediction(pred.I0, g, gamma0), e, l_,
                     l_ / e if e != 0 else math.nan, dev))
        res.summary[f"gamma_{g}"] = {"steady_current": steady,
                                     "predicted_current": scale_prediction(pred.I0, g, gamma0),
                                     "early_average": e, "late_average": l_,
                                     "late_over_early": l_ / e if e != 0 else None,
                                     "population_linear_deviation": dev}
    res.add("gamma_scan.csv", table_csv(
        ["gamma_mhz", "steady_current", "predicted_current", "early_average", "late_average",
         "late_over_early", "population_linear_deviation"], rows))
    res.summary.update(n_states=len(states), mode=mode, prediction=pred.to_dict())
    return res


def run_ensemble(cfg: ScenarioConfig, threads: int = 1) -> ScenarioResult:
    """Extract the reference steady current and the cross-channel current."""
    p = cfg.params
    window = _window(p, "steady_window")
    _check_window_on_grid(cfg.grid, window, "steady_window")
    spec = cfg.lattice
    try:
        filling = Fraction(str(p["filling_a"]))
        particles_for_filling(spec, filling)
    except ValueError as exc:
        raise ConfigError("params.filling_a", str(exc)) from None
    n = p["n_samples"]
    n_a = int(filling * len(spec.bath_a))
    total = math.comb(len(spec.bath_a), n_a)
    mode = "exhaustive" if n is None and total <= EXHAUSTIVE_LIMIT else "monte_carlo"
    seed = cfg.seed_for(0) if mode == "monte_carlo" else None
    if mode == "monte_carlo" and n is None:
        raise ConfigError("params.n_samples", f"{total} bath-A states: set n_samples")
    pred, runs = extract_prediction(spec, float(p["gamma0_mhz"]), filling, cfg.grid, window[:2],
                                    mode, n, seed, threads, return_series=True)
    res = ScenarioResult("ensemble", geometry=spec.describe())
    for name, run in runs.items():
        res.add(f"traces/{name}_mean.csv", trace_csv(run.mean))
        res.add(f"traces/{name}_standard_error.csv", trace_csv(run.standard_error))
    res.summary = {"prediction": pred.to_dict(), "reference_large_ladder": REFERENCE_LARGE_LADDER}
    res.add("prediction.json", _json(res.summary))
    return res


RUNNERS = {
    "evolve": run_evolve,
    "typicality": run_typicality,
    "steadiness": run_steadiness,
    "tunability": run_tunability,
    "gamma_scan": run_gamma_scan,
    "ensemble": run_ensemble,
}


def run_scenario(cfg: ScenarioConfig, threads: int = 1) -> ScenarioResult:
    return RUNNERS[cfg.scenario](cfg, threads)
