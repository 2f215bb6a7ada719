"""Replicated benchmark runs, stability aggregation and result/data I/O.

A benchmark sweeps every (manifold, replicate, K) combination. Each task
regenerates its sample from a seed derived from ``(master_seed, manifold
name, replicate)``, so tasks are pure and can run in any order on any number
of worker processes; results are reduced in key order afterwards.

The stability search scans contiguous windows of the K grid and keeps the
one whose pooled estimates have the smallest standard deviation. It is an
independent realization of the usual "stable region" heuristic: the window
width, the cutoff above which no region counts as stable (then the whole grid
is pooled) and the smallest-K tie-break are explicit parameters.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from graphdim.errors import DataParseError, GraphDimError, InvalidInputError
from graphdim.estimators import METHODS, EstimatorConfig, estimate
from graphdim.manifolds import ManifoldSpec, SampleConfig, benchmark_manifold, sample
from graphdim.neighborhood import PointCloud, as_cloud

__all__ = [
    "THREADS_ENV",
    "DEFAULT_STABILITY_CUTOFF",
    "StabilityResult",
    "KStats",
    "RunResult",
    "BenchConfig",
    "parse_k_grid",
    "derive_seed",
    "resolve_workers",
    "stability_search",
    "run_bench",
    "load_cloud",
    "save_cloud",
    "results_to_json",
    "results_to_csv",
    "write_results",
]

THREADS_ENV = "GRAPHDIM_THREADS"
DEFAULT_STABILITY_CUTOFF = 1.0
CSV_COLUMNS = ("manifold", "method", "K", "mean", "std", "stable", "window")


def parse_k_grid(text: str) -> list[int]:
    """Parse ``start:stop:step`` (stop inclusive) or a comma-separated list."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [int(x) for x in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            start, stop, step = parts
            if step <= 0 or stop < start:
                raise ValueError
            grid = list(range(start, stop + 1, step))
        else:
            grid = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InvalidInputError(f"bad K grid {text!r}; expected start:stop:step or a comma list") from None
    _check_grid(grid)
    return grid


def _check_grid(grid: Sequence[int]) -> None:
    if not grid:
        raise InvalidInputError("K grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidInputError(f"K grid must be strictly ascending, got {list(grid)}")


def derive_seed(master_seed: int, *labels) -> int:
    """64-bit seed from a BLAKE2b digest of the master seed and labels."""
    payload = "\x1f".join([str(int(master_seed))] + [str(x) for x in labels]).encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def resolve_workers(requested: Optional[int] = None) -> int:
    """Worker count: ``requested`` (default: CPU count), capped by ``GRAPHDIM_THREADS``."""
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise InvalidInputError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(1, n)


# --------------------------------------------------------------------------- stability


@dataclass(frozen=True)
class StabilityResult:
    k_window: tuple[int, int]
    mean: float
    std: float
    stable: bool

    def to_dict(self) -> dict:
        return {"k_window": list(self.k_window), "mean": self.mean, "std": self.std, "stable": self.stable}

    @classmethod
    def from_dict(cls, data: dict) -> "StabilityResult":
        lo, hi = data["k_window"]
        return cls((int(lo), int(hi)), float(data["mean"]), float(data["std"]), bool(data["stable"]))


def stability_search(
    per_k: Mapping[int, Sequence[float]],
    window: int,
    cutoff: float = DEFAULT_STABILITY_CUTOFF,
) -> StabilityResult:
    """Pick the window of consecutive K values whose pooled estimates vary least.

    Standard deviations are population (``ddof=0``) over all pooled values.
    When even the best window exceeds ``cutoff`` the whole grid is pooled and
    the result is flagged unstable.
    """
    grid = sorted(per_k)
    if not grid or any(len(per_k[k]) == 0 for k in grid):
        raise InvalidInputError("stability search needs at least one estimate for every K")
    if not 1 <= window <= len(grid):
        raise InvalidInputError(f"window must lie in [1, {len(grid)}], got {window}")
    values = [np.asarray(per_k[k], dtype=float) for k in grid]
    best = None
    for start in range(len(grid) - window + 1):
        pooled = np.concatenate(values[start:start + window])
        sd = float(pooled.std())
        if best is None or sd < best[1]:
            best = (start, sd, float(pooled.mean()))
    start, sd, mean = best
    if sd <= cutoff:
        return StabilityResult((grid[start], grid[start + window - 1]), mean, sd, True)
    pooled = np.concatenate(values)
    return StabilityResult((grid[0], grid[-1]), float(pooled.mean()), float(pooled.std()), False)


# --------------------------------------------------------------------------- results


def _num(x) -> Optional[float]:
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else float(x)


@dataclass(frozen=True)
class KStats:
    """Replicate statistics at one neighborhood size (population std)."""

    K: int
    mean: float
    std: float
    estimates: tuple[float, ...]
    failures: tuple[tuple[int, str], ...] = ()

    @classmethod
    def from_estimates(cls, K: int, estimates, failures=()) -> "KStats":
        est = tuple(float(x) for x in estimates)
        if est:
            arr = np.asarray(est)
            mean, std = float(arr.mean()), float(arr.std())
        else:
            mean = std = float("nan")
        return cls(int(K), mean, std, est, tuple((int(r), str(m)) for r, m in failures))

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "mean": _num(self.mean),
            "std": _num(self.std),
            "estimates": list(self.estimates),
            "failures": [{"replicate": r, "error": m} for r, m in self.failures],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KStats":
        mean = data["mean"]
        std = data["std"]
        return cls(
            int(data["K"]),
            float("nan") if mean is None else float(mean),
            float("nan") if std is None else float(std),
            tuple(float(x) for x in data["estimates"]),
            tuple((int(f["replicate"]), str(f["error"])) for f in data.get("failures", [])),
        )


@dataclass(frozen=True)
class RunResult:
    manifold: str
    method: str
    per_k: tuple[KStats, ...]
    stability: Optional[StabilityResult]
    wall_time: float = field(default=0.0, compare=False)

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "manifold": self.manifold,
            "method": self.method,
            "per_k": [row.to_dict() for row in self.per_k],
            "stability": None if self.stability is None else self.stability.to_dict(),
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunResult":
        stab = data.get("stability")
        return cls(
            manifold=str(data["manifold"]),
            method=str(data["method"]),
            per_k=tuple(KStats.from_dict(r) for r in data["per_k"]),
            stability=None if stab is None else StabilityResult.from_dict(stab),
            wall_time=float(data.get("wall_time", 0.0)),
        )


def results_to_json(results: Sequence[RunResult], include_timing: bool = False) -> str:
    doc = {"results": [r.to_dict(include_timing) for r in results]}
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def results_from_json(text: str) -> list[RunResult]:
    return [RunResult.from_dict(r) for r in json.loads(text)["results"]]


def _fmt(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def results_to_csv(results: Sequence[RunResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for res in results:
        for row in res.per_k:
            writer.writerow([res.manifold, res.method, row.K, _fmt(row.mean), _fmt(row.std), "", ""])
        if res.stability is not None:
            st = res.stability
            writer.writerow([
                res.manifold, res.method, "stability", _fmt(st.mean), _fmt(st.std),
                "true" if st.stable else "false", f"{st.k_window[0]}-{st.k_window[1]}",
            ])
    return buf.getvalue()


def write_results(results: Sequence[RunResult], path, fmt: Optional[str] = None, include_timing: bool = False) -> None:
    """Write results as ``csv`` or ``json`` (inferred from the suffix when ``fmt`` is None)."""
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt == "csv":
        text = results_to_csv(results)
    elif fmt == "json":
        text = results_to_json(results, include_timing)
    else:
        raise InvalidInputError(f"unsupported results format {fmt!r}")
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror or exc}") from exc


# --------------------------------------------------------------------------- clouds


def load_cloud(path, fmt: str = "csv", header: bool = False) -> PointCloud:
    """Read a point cloud, one comma-separated point per line.

    With ``header=True`` the first line is skipped. Blank trailing lines are
    ignored; row and column numbers in errors are 1-based file positions.
    """
    if fmt != "csv":
        raise InvalidInputError(f"unsupported cloud format {fmt!r}")
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataParseError(f"cannot read file: {exc.strerror or exc}", path=path) from None
    rows: list[list[float]] = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if header and lineno == 1:
            continue
        if not line.strip():
            continue
        fields = line.split(",")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise DataParseError(f"expected {width} fields, found {len(fields)}", path=path, row=lineno)
        values = []
        for col, raw in enumerate(fields, start=1):
            try:
                val = float(raw)
            except ValueError:
                raise DataParseError(f"non-numeric field {raw.strip()!r}", path=path, row=lineno, column=col) from None
            if not math.isfinite(val):
                raise DataParseError(f"non-finite field {raw.strip()!r}", path=path, row=lineno, column=col)
            values.append(val)
        rows.append(values)
    if not rows:
        raise DataParseError("file contains no data rows", path=path)
    try:
        return PointCloud(np.array(rows, dtype=float))
    except InvalidInputError as exc:
        raise DataParseError(str(exc), path=path) from None


def save_cloud(cloud, path) -> None:
    """Write a cloud as CSV using shortest round-trip float formatting."""
    cloud = as_cloud(cloud)
    lines = [",".join(repr(float(v)) for v in row) for row in cloud.points]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------- benchmark


@dataclass(frozen=True)
class BenchConfig:
    manifold_specs: tuple[ManifoldSpec, ...]
    methods: tuple[str, ...]
    n: int
    replicates: int
    k_grid: tuple[int, ...]
    window: int = 5
    master_seed: int = 0
    noise_sigma: float = 0.0
    embed_rotation: bool = False
    stability_cutoff: float = DEFAULT_STABILITY_CUTOFF
    alpha: float = 0.01
    rel_tol: float = 1e-8
    pca_alpha: float = 0.05
    twonn_trim: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "manifold_specs", tuple(self.manifold_specs))
        object.__setattr__(self, "methods", tuple(m.replace("-", "_") for m in self.methods))
        object.__setattr__(self, "k_grid", tuple(int(k) for k in self.k_grid))
        if not self.manifold_specs:
            raise InvalidInputError("bench config lists no manifolds")
        names = [s.name for s in self.manifold_specs]
        if len(set(names)) != len(names):
            raise InvalidInputError(f"manifold names must be unique, got {names}")
        if not self.methods:
            raise InvalidInputError("bench config lists no methods")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise InvalidInputError(f"unknown method(s) {bad}; expected a subset of {list(METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise InvalidInputError("methods must not repeat")
        if self.replicates < 1:
            raise InvalidInputError(f"replicates must be >= 1, got {self.replicates}")
        if self.n < 2:
            raise InvalidInputError(f"n must be >= 2, got {self.n}")
        _check_grid(self.k_grid)
        if not 2 <= self.window <= len(self.k_grid):
            if not (len(self.k_grid) == 1 and self.window == 1):
                raise InvalidInputError(
                    f"window must satisfy 2 <= window <= {len(self.k_grid)} (grid length), got {self.window}"
                )
        if not self.noise_sigma >= 0:
            raise InvalidInputError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        for k in self.k_grid:
            self.estimator_config(k)

    def estimator_config(self, K: int) -> EstimatorConfig:
        return EstimatorConfig(K=K, alpha=self.alpha, rel_tol=self.rel_tol,
                               pca_alpha=self.pca_alpha, twonn_trim=self.twonn_trim)

    def to_dict(self) -> dict:
        return {
            "manifolds": [s.to_dict() for s in self.manifold_specs],
            "methods": list(self.methods),
            "n": self.n,
            "replicates": self.replicates,
            "k_grid": list(self.k_grid),
            "window": self.window,
            "master_seed": self.master_seed,
            "noise_sigma": self.noise_sigma,
            "embed_rotation": self.embed_rotation,
            "stability_cutoff": self.stability_cutoff,
            "alpha": self.alpha,
            "rel_tol": self.rel_tol,
            "pca_alpha": self.pca_alpha,
            "twonn_trim": self.twonn_trim,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfig":
        """Build from a parsed bench.json document.

        ``manifolds`` entries are either benchmark names such as ``"M11"`` or
        full ``{"kind", "d", "p", "params", "name"}`` objects; ``k_grid`` is a
        list of integers or a ``"start:stop:step"`` string.
        """
        data = dict(data)
        known = set(cls.__dataclass_fields__) | {"manifolds"}
        unknown = set(data) - known
        if unknown:
            raise InvalidInputError(f"unknown bench config field(s): {sorted(unknown)}")
        raw_specs = data.pop("manifolds", data.pop("manifold_specs", None))
        if raw_specs is None:
            raise InvalidInputError("bench config needs a 'manifolds' list")
        specs = [benchmark_manifold(s) if isinstance(s, str) else ManifoldSpec.from_dict(s) for s in raw_specs]
        grid = data.pop("k_grid", None)
        if grid is None:
            raise InvalidInputError("bench config needs a 'k_grid'")
        if isinstance(grid, str):
            grid = parse_k_grid(grid)
        try:
            return cls(manifold_specs=specs, k_grid=grid, **data)
        except TypeError as exc:
            raise InvalidInputError(f"bad bench config: {exc}") from None

    def sample_seeds(self) -> dict[tuple[str, int], int]:
        """Derived sample seed per (manifold, replicate); raises on a collision."""
        seeds = {
            (spec.name, r): derive_seed(self.master_seed, spec.name, r)
            for spec in self.manifold_specs
            for r in range(self.replicates)
        }
        if len(set(seeds.values())) != len(seeds):
            raise InvalidInputError("derived sample seeds collide; change master_seed")
        return seeds


def _bench_task(spec: ManifoldSpec, sample_cfg: SampleConfig, est_cfg: EstimatorConfig, methods):
    """One (manifold, replicate, K) cell: returns ``{method: (d_hat | None, error, seconds)}``."""
    out = {}
    try:
        cloud = sample(spec, sample_cfg)
    except GraphDimError as exc:
        return {m: (None, f"{type(exc).__name__}: {exc}", 0.0) for m in methods}
    for method in methods:
        t0 = time.perf_counter()
        try:
            est = estimate(cloud, method, est_cfg)
            out[method] = (est.d_hat, "", time.perf_counter() - t0)
        except GraphDimError as exc:
            out[method] = (None, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0)
    return out


def run_bench(cfg: BenchConfig, workers: Optional[int] = None) -> list[RunResult]:
    """Run every (manifold, replicate, K) task and aggregate per (manifold, method).

    Output order follows the config (manifolds, then methods) and does not
    depend on the worker count or scheduling.
    """
    seeds = cfg.sample_seeds()
    keys = []
    jobs = []
    for spec in cfg.manifold_specs:
        for r in range(cfg.replicates):
            scfg = SampleConfig(n=cfg.n, seed=seeds[(spec.name, r)],
                                noise_sigma=cfg.noise_sigma, embed_rotation=cfg.embed_rotation)
            for K in cfg.k_grid:
                keys.append((spec.name, r, K))
                jobs.append((spec, scfg, cfg.estimator_config(K), cfg.methods))

    n_workers = min(resolve_workers(workers), len(jobs))
    if n_workers == 1:
        outputs = [_bench_task(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outputs = list(pool.map(_bench_task, *zip(*jobs)))
    cells = dict(zip(keys, outputs))

    results = []
    for spec in cfg.manifold_specs:
        for method in cfg.methods:
            rows = []
            elapsed = 0.0
            for K in cfg.k_grid:
                ests, fails = [], []
                for r in range(cfg.replicates):
                    d_hat, err, secs = cells[(spec.name, r, K)][method]
                    elapsed += secs
                    if d_hat is None:
                        fails.append((r, err))
                    else:
                        ests.append(d_hat)
                rows.append(KStats.from_estimates(K, ests, fails))
            usable = {row.K: row.estimates for row in rows if row.estimates}
            stab = None
            if usable:
                win = min(cfg.window, len(usable))
                stab = stability_search(usable, win, cfg.stability_cutoff)
            results.append(RunResult(spec.name, method, tuple(rows), stab, elapsed))
    return results
