"""Experiment harness: JSON configs, replication loops, CSV/JSON reporting.

`essplit run --config FILE` repeats an estimator and writes trials.csv,
summary.json, and timings.csv. `essplit compare --configs F1,F2,...` runs
several methods on the same problem and additionally writes a merged
estimates.csv plus a Gaussian-kernel density grid for external plotting.

trials.csv is byte-reproducible under a fixed seed, so its millis column is
a schema placeholder (always 0); measured per-trial wall times live in
timings.csv, which is the one deliberately nondeterministic artifact.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from multiprocessing import Pool
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .barriers import LevelSystem, make_coordinate
from .brownian import EsSamplerConfig
from .errors import NonConvergenceError
from .sampling import RngStream
from .skeleton import ToleranceLadder
from .splitting import (Estimate, SplitConfig, euler_mls, exact_mls_fixed,
                        exact_mls_smc)

__all__ = ["RunConfig", "TrialResult", "load_config", "run", "compare", "main"]

_PROBLEMS = ("bm1d", "bm2d_min", "custom")
_METHODS = ("exact_fixed", "exact_smc", "euler_fixed", "euler_smc")

_PROBLEM_COORDS = {"bm1d": "identity_1d", "bm2d_min": "coordinate_min"}
_PROBLEM_X0 = {"bm1d": (1.0,), "bm2d_min": (0.5, 0.5)}

_KNOWN_KEYS = {
    "problem", "coordinate", "x0", "x0_box", "z_A", "levels", "method",
    "n", "n0", "ratios", "h0", "rescale", "T", "eps1", "rho", "trials",
    "seed", "out_dir", "work_fraction", "strategy", "extension_scale",
    "refine_cap", "compact", "split_grid", "notes",
}


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration (CLI exit code 2)."""


@dataclass(frozen=True)
class RunConfig:
    """One experiment: a problem, a method, and replication settings."""

    problem: str
    method: str
    x0: Tuple[float, ...]
    z_A: float
    levels: Tuple[float, ...]
    coordinate: str
    n: int = 100
    n0: int = 100
    ratios: Optional[Tuple[int, ...]] = None
    h0: float = 0.1
    rescale: float = 9.0
    T: float = 1.0
    eps1: float = 1.0
    rho: float = 0.5
    trials: int = 1
    seed: int = 0
    out_dir: Optional[str] = None
    work_fraction: float = 0.25
    strategy: str = "first"
    extension_scale: float = 0.5
    refine_cap: int = 100_000
    compact: bool = True
    split_grid: Optional[float] = None
    x0_box: Optional[Tuple[Tuple[float, float], ...]] = None
    notes: str = ""

    def split_config(self) -> SplitConfig:
        """Materialise the engine configuration (validates everything)."""
        try:
            return SplitConfig(
                level_system=LevelSystem(self.z_A, self.levels),
                xi=make_coordinate(self.coordinate),
                x0=self.x0,
                x0_box=self.x0_box,
                n0=self.n0,
                ratios=self.ratios,
                n=self.n,
                sampler=EsSamplerConfig(
                    ladder=ToleranceLadder(self.eps1, self.rho), T=self.T),
                seed=self.seed,
                strategy=self.strategy,
                work_fraction=self.work_fraction,
                refine_cap=self.refine_cap,
                extension_scale=self.extension_scale,
                compact=self.compact,
                split_grid=self.split_grid,
                h0=self.h0,
                rescale=self.rescale,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def true_p(self) -> Optional[float]:
        """Analytic probability when one exists (1D identity coordinate)."""
        if self.coordinate == "identity_1d" and len(self.x0) == 1:
            return (self.x0[0] - self.z_A) / (self.levels[-1] - self.z_A)
        return None


@dataclass(frozen=True)
class TrialResult:
    trial: int
    p_hat: float
    counts: Tuple[int, ...]
    extinct: bool
    cells: int
    refinements: int
    wall_ms: float
    failed: bool = False


def load_config(path) -> RunConfig:
    """Parse and validate a JSON experiment file."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    problem = raw.get("problem")
    if problem not in _PROBLEMS:
        raise ConfigError(f"problem must be one of {_PROBLEMS}, got {problem!r}")
    method = raw.get("method")
    if method not in _METHODS:
        raise ConfigError(f"method must be one of {_METHODS}, got {method!r}")
    if "levels" not in raw or not raw["levels"]:
        raise ConfigError("levels is required and must be non-empty")
    coordinate = raw.get("coordinate", _PROBLEM_COORDS.get(problem))
    if coordinate is None:
        raise ConfigError("custom problems must name a coordinate")
    if problem != "custom" and coordinate != _PROBLEM_COORDS[problem]:
        raise ConfigError(
            f"problem {problem} implies coordinate {_PROBLEM_COORDS[problem]}")
    x0 = raw.get("x0", _PROBLEM_X0.get(problem))
    if x0 is None:
        raise ConfigError("custom problems must give x0")
    if isinstance(x0, (int, float)):
        x0 = (float(x0),)
    trials = int(raw.get("trials", 1))
    if trials < 1:
        raise ConfigError(f"trials must be at least 1, got {trials}")
    kwargs = dict(
        problem=problem,
        method=method,
        x0=tuple(float(v) for v in x0),
        z_A=float(raw.get("z_A", 0.0)),
        levels=tuple(float(v) for v in raw["levels"]),
        coordinate=coordinate,
        trials=trials,
        seed=int(raw.get("seed", 0)),
    )
    for key in ("n", "n0", "refine_cap"):
        if key in raw:
            kwargs[key] = int(raw[key])
    if "ratios" in raw and raw["ratios"] is not None:
        kwargs["ratios"] = tuple(int(v) for v in raw["ratios"])
    for key in ("h0", "rescale", "T", "eps1", "rho", "work_fraction",
                "extension_scale"):
        if key in raw:
            kwargs[key] = float(raw[key])
    if "split_grid" in raw and raw["split_grid"] is not None:
        kwargs["split_grid"] = float(raw["split_grid"])
    if "x0_box" in raw and raw["x0_box"] is not None:
        kwargs["x0_box"] = tuple((float(a), float(b)) for a, b in raw["x0_box"])
    for key in ("out_dir", "strategy", "notes"):
        if key in raw:
            kwargs[key] = str(raw[key])
    if "compact" in raw:
        kwargs["compact"] = bool(raw["compact"])
    rc = RunConfig(**kwargs)
    rc.split_config()
    return rc


def _dispatch(cfg: SplitConfig, method: str, stream: RngStream) -> Estimate:
    if method == "exact_fixed":
        return exact_mls_fixed(cfg, stream)
    if method == "exact_smc":
        return exact_mls_smc(cfg, stream)
    if method == "euler_fixed":
        return euler_mls(cfg, stream, mode="fixed")
    return euler_mls(cfg, stream, mode="smc")


def _run_one(args) -> TrialResult:
    rc, trial = args
    cfg = rc.split_config()
    stream = RngStream(rc.seed, trial)
    m = len(rc.levels)
    start = time.perf_counter()
    try:
        est = _dispatch(cfg, rc.method, stream)
    except NonConvergenceError:
        ms = 1000.0 * (time.perf_counter() - start)
        return TrialResult(trial, math.nan, (0,) * m, False, 0, 0, ms,
                           failed=True)
    ms = 1000.0 * (time.perf_counter() - start)
    return TrialResult(trial, est.p_hat, est.counts, est.extinct,
                       est.cells, est.refinements, ms)


def _run_trials(rc: RunConfig, jobs: int) -> List[TrialResult]:
    tasks = [(rc, t) for t in range(rc.trials)]
    if jobs > 1:
        with Pool(jobs) as pool:
            results = pool.map(_run_one, tasks)
    else:
        results = [_run_one(t) for t in tasks]
    # collected in trial order by construction
    return results


def _trials_csv(results: Sequence[TrialResult], m: int) -> str:
    header = (["trial", "p_hat"] + [f"N_{i}" for i in range(1, m + 1)]
              + ["extinct", "cells", "refinements", "millis"])
    lines = [",".join(header)]
    for r in results:
        row = [str(r.trial), repr(r.p_hat)]
        row.extend(str(c) for c in r.counts)
        row.append(str(int(r.extinct)))
        row.append(str(r.cells))
        row.append(str(r.refinements))
        row.append("0")
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _timings_csv(results: Sequence[TrialResult]) -> str:
    lines = ["trial,wall_ms"]
    for r in results:
        lines.append(f"{r.trial},{r.wall_ms:.3f}")
    return "\n".join(lines) + "\n"


def _summarise(rc: RunConfig, results: Sequence[TrialResult],
               runtime_s: float) -> Dict:
    good = [r.p_hat for r in results if not r.failed]
    failures = sum(1 for r in results if r.failed)
    mean = float(np.mean(good)) if good else math.nan
    if len(good) > 1:
        var = float(np.var(good, ddof=1))
        stderr = math.sqrt(var / len(good))
    else:
        var = math.nan
        stderr = math.nan
    rel_var = var / (mean * mean) if good and mean != 0.0 else math.nan
    echo = asdict(rc)
    return {
        "problem": rc.problem,
        "method": rc.method,
        "trials": len(results),
        "failures": failures,
        "mean": mean,
        "stderr": stderr,
        "relative_variance": rel_var,
        "true_p": rc.true_p(),
        "runtime_seconds": runtime_s,
        "config": echo,
    }


def run(rc: RunConfig, out_dir=None, jobs: int = 1) -> Path:
    """Execute all trials and write trials.csv, timings.csv, summary.json.
    Returns the output directory."""
    out = Path(out_dir or rc.out_dir or "results")
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    results = _run_trials(rc, jobs)
    runtime_s = time.perf_counter() - start
    m = len(rc.levels)
    (out / "trials.csv").write_text(_trials_csv(results, m), newline="\n")
    (out / "timings.csv").write_text(_timings_csv(results), newline="\n")
    summary = _summarise(rc, results, runtime_s)
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, allow_nan=True) + "\n", newline="\n")
    return out


def _silverman_bandwidth(xs: np.ndarray) -> float:
    n = len(xs)
    sd = float(np.std(xs, ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(xs, [75.0, 25.0])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.349) if iqr > 0.0 else sd
    if spread <= 0.0:
        spread = max(abs(float(np.mean(xs))), 1.0) * 1e-3
    return 0.9 * spread * n ** (-0.2)


def _density_grid(samples: Dict[str, np.ndarray],
                  points: int = 256) -> List[Tuple[str, float, float]]:
    all_vals = np.concatenate(list(samples.values()))
    bws = {m: _silverman_bandwidth(xs) for m, xs in samples.items()}
    pad = 3.0 * max(bws.values())
    grid = np.linspace(all_vals.min() - pad, all_vals.max() + pad, points)
    rows = []
    for method, xs in samples.items():
        bw = bws[method]
        dens = np.zeros_like(grid)
        for x in xs:
            dens += np.exp(-0.5 * ((grid - x) / bw) ** 2)
        dens /= len(xs) * bw * math.sqrt(2.0 * math.pi)
        rows.extend((method, float(g), float(v)) for g, v in zip(grid, dens))
    return rows


def compare(configs: Sequence[RunConfig], out_dir, jobs: int = 1) -> Path:
    """Run several methods on one problem; write merged estimates, a common
    density grid, and per-method summaries."""
    if not configs:
        raise ConfigError("compare needs at least one config")
    key = (configs[0].problem, configs[0].x0, configs[0].z_A,
           configs[0].levels)
    for rc in configs[1:]:
        if (rc.problem, rc.x0, rc.z_A, rc.levels) != key:
            raise ConfigError(
                "compare requires all configs to describe the same problem")
    out = Path(out_dir or "comparison")
    out.mkdir(parents=True, exist_ok=True)
    merged = ["method,trial,p_hat"]
    samples: Dict[str, np.ndarray] = {}
    summaries = []
    for rc in configs:
        start = time.perf_counter()
        results = _run_trials(rc, jobs)
        runtime_s = time.perf_counter() - start
        summaries.append(_summarise(rc, results, runtime_s))
        good = np.array([r.p_hat for r in results if not r.failed])
        samples[rc.method] = good
        for r in results:
            merged.append(f"{rc.method},{r.trial},{r.p_hat!r}")
    (out / "estimates.csv").write_text("\n".join(merged) + "\n", newline="\n")
    nonempty = {m: xs for m, xs in samples.items() if len(xs) > 1}
    dens_lines = ["method,grid_point,density"]
    if nonempty:
        for method, g, v in _density_grid(nonempty):
            dens_lines.append(f"{method},{g!r},{v!r}")
    (out / "density.csv").write_text("\n".join(dens_lines) + "\n", newline="\n")
    report = {
        "problem": configs[0].problem,
        "true_p": configs[0].true_p(),
        "methods": summaries,
    }
    (out / "summary.json").write_text(
        json.dumps(report, indent=2, allow_nan=True) + "\n", newline="\n")
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="essplit",
        description="Unbiased rare-event probabilities for Brownian motion")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out-dir", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--trials", type=int, default=None)
    p_run.add_argument("--jobs", type=int, default=1)
    p_cmp = sub.add_parser("compare", help="run several configs on one problem")
    p_cmp.add_argument("--configs", required=True,
                       help="comma-separated config files")
    p_cmp.add_argument("--out-dir", default="comparison")
    p_cmp.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            rc = load_config(args.config)
            if args.seed is not None:
                rc = RunConfig(**{**asdict(rc), "seed": args.seed})
            if args.trials is not None:
                if args.trials < 1:
                    raise ConfigError("trials must be at least 1")
                rc = RunConfig(**{**asdict(rc), "trials": args.trials})
            out = run(rc, out_dir=args.out_dir, jobs=max(1, args.jobs))
            print(f"wrote {out / 'trials.csv'} and {out / 'summary.json'}")
        else:
            rcs = [load_config(p) for p in args.configs.split(",") if p]
            out = compare(rcs, out_dir=args.out_dir, jobs=max(1, args.jobs))
            print(f"wrote comparison artifacts to {out}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
