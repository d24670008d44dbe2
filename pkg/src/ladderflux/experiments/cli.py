"""Command-line entry point: ``ladderflux <scenario> --config <path> [...]``."""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..lattice import ConfigError
from .config import SCENARIOS, load_config
from .output import OutputError, emit_outputs, write_manifest
from .scenarios import run_scenario

THREADS_ENV = "LADDERFLUX_THREADS"
log = logging.getLogger("ladderflux")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ladderflux",
                                 description="Two-bath ladder transport experiments.")
    ap.add_argument("scenario", choices=SCENARIOS)
    ap.add_argument("--config", required=True, help="scenario JSON file or an earlier run manifest")
    ap.add_argument("--seed", type=int, default=None, help="override the configured seed")
    ap.add_argument("--out", default=None, help="output directory (created if missing)")
    ap.add_argument("--threads", type=int, default=None,
                    help=f"worker threads (default: ${THREADS_ENV} or 1)")
    ap.add_argument("--analytic", action="store_true", help="noise-free expectation values, no shots")
    ap.add_argument("--t2-us", type=float, default=None, help="dephasing time for the density-matrix variant")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_threads(flag: int | None) -> tuple[int, str]:
    if flag is not None:
        source, n = "flag", flag
    elif os.environ.get(THREADS_ENV):
        source, raw = "env", os.environ[THREADS_ENV]
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(THREADS_ENV, f"expected an integer, got {raw!r}") from None
    else:
        source, n = "default", 1
    if n < 1:
        raise ConfigError("threads", f"must be at least 1, got {n}")
    return n, source


def _base_manifest(args: argparse.Namespace) -> dict:
    return {
        "tool": "ladderflux",
        "version": __version__,
        "scenario": args.scenario,
        "flags": {"config": args.config, "seed": args.seed, "out": args.out, "threads": args.threads,
                  "analytic": args.analytic, "t2_us": args.t2_us},
        "environment": {"python": platform.python_version(), "numpy": np.__version__,
                        "scipy": scipy.__version__},
    }


def _fail(out_dir: Path, manifest: dict, exc: Exception, code: int) -> int:
    manifest = dict(manifest, status="error", error=str(exc))
    try:
        write_manifest(out_dir, manifest)
    except OutputError as werr:
        print(f"ladderflux: could not record failure: {werr}", file=sys.stderr)
    print(f"ladderflux: error: {exc}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    manifest = _base_manifest(args)
    out_dir = Path(args.out) if args.out else Path(f"ladderflux-{args.scenario}")
    overrides = {"scenario": args.scenario, "seed": args.seed, "out": args.out,
                 "analytic": args.analytic, "t2_us": args.t2_us}
    overrides = {k: v for k, v in overrides.items() if v not in (None, False)}
    try:
        threads, source = resolve_threads(args.threads)
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        return _fail(out_dir, manifest, exc, 2)
    out_dir = cfg.out
    manifest.update(config=cfg.resolved(), threads={"count": threads, "source": source})
    started = time.perf_counter()
    manifest["started_utc"] = dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
    try:
        result = run_scenario(cfg, threads)
    except (ConfigError, ValueError) as exc:
        return _fail(out_dir, manifest, exc, 1)
    manifest.update(status="ok", elapsed_s=round(time.perf_counter() - started, 3))
    try:
        written = emit_outputs(result, manifest, out_dir)
    except OutputError as exc:
        print(f"ladderflux: error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {len(written)} files to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
