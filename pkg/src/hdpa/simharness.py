"""Monte Carlo driver for the simulation study.

Every replicate draws its data and augmentation noise from seeds derived from
``(base_seed, cell ordinal, replicate ordinal)``, so results do not depend on
execution order or on the number of worker processes.  BLAS is pinned to one
thread inside each replicate for the same reason.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .asymptotics import AspectRatios, SpikedModel, phi_limit
from .errors import DomainError
from .estimators import default_K, estimate_sigma2, hdpa_estimate, pa_estimate, pa_objective
from .spectral import COVARIANCE_DIVISOR, RngSeed, augmented_spectrum, derive_seed, original_eigenvalues

log = logging.getLogger(__name__)

__all__ = [
    "DEFAULT_SPIKES",
    "FULL_NS",
    "FULL_GAMMA_PS",
    "FULL_GAMMA_RS",
    "REGIME_CELLS",
    "GeneratorSpec",
    "generate",
    "SimulationGrid",
    "CellRecord",
    "SimulationReport",
    "run_grid",
    "PhiCurves",
    "average_phi_curves",
    "resolve_threads",
    "CSV_SCHEMA_LINE",
]

CSV_SCHEMA_LINE = "# hdpa-csv v1"

DEFAULT_SPIKES = tuple(round(5.0 - 0.2 * i, 10) for i in range(11))
FULL_NS = (100, 200, 500, 1000)
FULL_GAMMA_PS = (0.05, 0.2, 0.5, 1.0, 1.5)
FULL_GAMMA_RS = (0.05, 0.2, 0.5, 1.0, 1.5, 2.5, 5.0)
# (p/n, r/n) settings of the introductory experiment, n = 400, one spike.
REGIME_CELLS = ((0.025, 0.01), (0.025, 0.5), (0.25, 0.01), (0.25, 0.5))

MODELS = ("gaussian", "bernoulli")
METHODS = ("PA", "HDPA")
SIGMA2_MODES = ("oracle", "estimated")

_DATA_STREAM = 0
_AUG_STREAM = 1


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("HDPA_THREADS", "0") or 0)
    if threads < 0:
        raise DomainError("thread count must be non-negative")
    return threads or (os.cpu_count() or 1)


@dataclass(frozen=True)
class GeneratorSpec:
    model: str
    spikes: tuple[float, ...]
    p: int
    n: int
    sigma2: float = 1.0

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise DomainError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.p < len(self.spikes) or self.n < 1:
            raise DomainError(f"p={self.p} must hold {len(self.spikes)} spikes and n must be positive")

    def variances(self) -> np.ndarray:
        v = np.full(self.p, float(self.sigma2))
        v[: len(self.spikes)] += np.asarray(self.spikes, dtype=float)
        if np.any(v < 0):
            raise DomainError("covariance is not positive semi-definite")
        return v


def generate(spec: GeneratorSpec, seed: RngSeed) -> np.ndarray:
    """Draw an ``n x p`` sample with covariance ``diag(spikes, 0, ...) + sigma2 I``.

    ``gaussian`` draws N(0, Sigma); ``bernoulli`` scales i.i.d. centred
    Bernoulli(0.5) signs ``2B - 1`` by the diagonal square root of Sigma.
    """
    root = np.sqrt(spec.variances())
    rng = seed.generator()
    if spec.model == "gaussian":
        z = rng.standard_normal((spec.n, spec.p))
    else:
        z = 2.0 * rng.integers(0, 2, size=(spec.n, spec.p)).astype(float) - 1.0
    return z * root


@dataclass(frozen=True)
class Cell:
    ordinal: int
    model: str
    n: int
    gamma_p: float
    gamma_r: float
    p: int
    r: int


@dataclass(frozen=True)
class SimulationGrid:
    ns: tuple[int, ...]
    gamma_ps: tuple[float, ...]
    gamma_rs: tuple[float, ...]
    m: int = 100
    models: tuple[str, ...] = ("gaussian",)
    methods: tuple[str, ...] = METHODS
    sigma2_modes: tuple[str, ...] = SIGMA2_MODES
    base_seed: int = 0
    spikes: tuple[float, ...] = DEFAULT_SPIKES
    sigma2: float = 1.0
    K: int | None = None
    oracle_sigma2: float | None = None

    def __post_init__(self) -> None:
        if self.m < 1:
            raise DomainError("m must be at least 1")
        for name, allowed in (("models", MODELS), ("methods", METHODS), ("sigma2_modes", SIGMA2_MODES)):
            bad = set(getattr(self, name)) - set(allowed)
            if bad or not getattr(self, name):
                raise DomainError(f"{name} must be a non-empty subset of {allowed}")

    @classmethod
    def full(cls, m: int = 1000, **kw) -> "SimulationGrid":
        return cls(FULL_NS, FULL_GAMMA_PS, FULL_GAMMA_RS, m=m, models=MODELS, **kw)

    def cells(self) -> list[Cell]:
        d = len(self.spikes)
        out = []
        for model in self.models:
            for n in self.ns:
                for gp in self.gamma_ps:
                    for gr in self.gamma_rs:
                        p, r = int(round(gp * n)), int(round(gr * n))
                        if p < d + 2 or r < 1:
                            raise DomainError(f"cell n={n}, gamma_p={gp}, gamma_r={gr} gives p={p}, r={r}")
                        out.append(Cell(len(out), model, int(n), float(gp), float(gr), p, r))
        return out


@dataclass
class CellRecord:
    model: str
    n: int
    gamma_p: float
    gamma_r: float
    p: int
    r: int
    method: str
    sigma2_mode: str
    m: int
    proportion_wrong: float
    mean_d_hat: float
    d_hat_counts: dict[int, int]
    failures: list[dict] = field(default_factory=list)
    degraded: bool = False
    wall_time: float = 0.0


@dataclass
class SimulationReport:
    records: list[CellRecord]
    metadata: dict

    def record(self, *, method: str, sigma2_mode: str, **match) -> CellRecord:
        for rec in self.records:
            if rec.method == method and rec.sigma2_mode == sigma2_mode and all(
                getattr(rec, k) == v for k, v in match.items()
            ):
                return rec
        raise KeyError((method, sigma2_mode, match))

    def to_csv(self) -> str:
        cols = ["model", "n", "gamma_p", "gamma_r", "p", "r", "method", "sigma2_mode", "m",
                "successes", "failures", "degraded", "proportion_wrong", "mean_d_hat"]
        lines = [CSV_SCHEMA_LINE, ",".join(cols)]
        for rec in self.records:
            lines.append(",".join([
                rec.model, str(rec.n), _fmt(rec.gamma_p), _fmt(rec.gamma_r), str(rec.p), str(rec.r),
                rec.method, rec.sigma2_mode, str(rec.m), str(rec.m - len(rec.failures)),
                str(len(rec.failures)), str(rec.degraded).lower(),
                _fmt(rec.proportion_wrong), _fmt(rec.mean_d_hat),
            ]))
        return "\n".join(lines) + "\n"

    def to_json(self, *, include_timing: bool = False) -> str:
        cells = []
        for rec in self.records:
            item = asdict(rec)
            item["d_hat_counts"] = {str(k): v for k, v in sorted(rec.d_hat_counts.items())}
            if not include_timing:
                item.pop("wall_time")
            cells.append(item)
        return json.dumps({"metadata": self.metadata, "cells": cells}, indent=2, sort_keys=True) + "\n"

    def write(self, out_dir, *, formats=("csv", "json"), stem: str = "simulation",
              include_timing: bool = False) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        if "csv" in formats:
            paths.append(out / f"{stem}.csv")
            paths[-1].write_text(self.to_csv(), encoding="utf-8")
        if "json" in formats:
            paths.append(out / f"{stem}.json")
            paths[-1].write_text(self.to_json(include_timing=include_timing), encoding="utf-8")
        return paths


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else format(float(x), ".17g")


def _replicate(args) -> tuple[dict, float]:
    grid, cell, rep = args
    start = time.perf_counter()
    seed_value = derive_seed(grid.base_seed, cell.ordinal, rep)
    out: dict[tuple[str, str], tuple[int | None, str | None]] = {}
    with threadpool_limits(1):
        try:
            spec = GeneratorSpec(cell.model, grid.spikes, cell.p, cell.n, grid.sigma2)
            x = generate(spec, RngSeed(seed_value, _DATA_STREAM))
            orig = original_eigenvalues(x)
            K = default_K(cell.p, cell.n) if grid.K is None else grid.K
            if K > min(cell.p, cell.n - 2) - 1:
                raise DomainError(f"K exceeds p: K={K} with p={cell.p}, n={cell.n}")
        except Exception as exc:  # noqa: BLE001 - recorded per replicate
            msg = f"{type(exc).__name__}: {exc}"
            for method in grid.methods:
                for mode in grid.sigma2_modes:
                    out[method, mode] = (None, msg)
            return {"seed": seed_value, "results": out}, time.perf_counter() - start
        for mode in grid.sigma2_modes:
            try:
                s2 = (grid.oracle_sigma2 or grid.sigma2) if mode == "oracle" else estimate_sigma2(orig, cell.p, cell.n)
                spectrum = augmented_spectrum(
                    x, cell.r, math.sqrt(s2), K + 1, RngSeed(seed_value, _AUG_STREAM)
                )
            except Exception as exc:  # noqa: BLE001
                for method in grid.methods:
                    out[method, mode] = (None, f"{type(exc).__name__}: {exc}")
                continue
            for method in grid.methods:
                est = pa_estimate if method == "PA" else hdpa_estimate
                try:
                    rep_ = est(x, cell.r, s2, K, orig_eigenvalues=orig, spectrum=spectrum)
                    out[method, mode] = (rep_.d_hat, None)
                except Exception as exc:  # noqa: BLE001
                    out[method, mode] = (None, f"{type(exc).__name__}: {exc}")
    return {"seed": seed_value, "results": out}, time.perf_counter() - start


def _map(func, tasks: list, threads: int) -> list:
    if threads <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, tasks, chunksize=max(1, len(tasks) // (8 * threads))))


def run_grid(grid: SimulationGrid, *, threads: int | None = None) -> SimulationReport:
    """Run every cell of ``grid`` and aggregate the error proportions."""
    threads = resolve_threads(threads)
    cells = grid.cells()
    tasks = [(grid, cell, rep) for cell in cells for rep in range(grid.m)]
    log.info("running %d cells x %d replicates on %d workers", len(cells), grid.m, threads)
    results = _map(_replicate, tasks, threads)

    d = len(grid.spikes)
    records = []
    for ci, cell in enumerate(cells):
        chunk = results[ci * grid.m:(ci + 1) * grid.m]
        wall = sum(t for _, t in chunk)
        for method in grid.methods:
            for mode in grid.sigma2_modes:
                counts: dict[int, int] = {}
                failures = []
                for rep, (res, _) in enumerate(chunk):
                    d_hat, err = res["results"][method, mode]
                    if err is not None:
                        failures.append({"replicate": rep, "seed": res["seed"], "error": err})
                        log.warning("replicate %d of cell %d failed (seed %d): %s", rep, ci, res["seed"], err)
                    else:
                        counts[d_hat] = counts.get(d_hat, 0) + 1
                ok = sum(counts.values())
                wrong = sum(v for k, v in counts.items() if k != d)
                records.append(CellRecord(
                    model=cell.model, n=cell.n, gamma_p=cell.gamma_p, gamma_r=cell.gamma_r,
                    p=cell.p, r=cell.r, method=method, sigma2_mode=mode, m=grid.m,
                    proportion_wrong=wrong / ok if ok else math.nan,
                    mean_d_hat=sum(k * v for k, v in counts.items()) / ok if ok else math.nan,
                    d_hat_counts=dict(sorted(counts.items())),
                    failures=failures,
                    degraded=len(failures) > 0.01 * grid.m,
                    wall_time=wall,
                ))
    metadata = {
        "base_seed": grid.base_seed,
        "software_version": __version__,
        "divisor": COVARIANCE_DIVISOR,
        "true_d": d,
        "spikes": list(grid.spikes),
        "sigma2": grid.sigma2,
        "K": grid.K,
        "m": grid.m,
        "oracle_sigma2": grid.oracle_sigma2 or grid.sigma2,
    }
    return SimulationReport(records, metadata)


@dataclass
class PhiCurves:
    gamma_p: float
    gamma_r: float
    n: int
    p: int
    r: int
    replicates: int
    mean_phi: np.ndarray
    limit_phi: np.ndarray

    @property
    def empirical_argmin(self) -> int:
        return int(np.argmin(self.mean_phi))

    @property
    def limit_argmin(self) -> int:
        return int(np.argmin(self.limit_phi))

    def rows(self) -> list[tuple[int, float, float]]:
        return [(k, float(a), float(b)) for k, (a, b) in enumerate(zip(self.mean_phi, self.limit_phi))]


def _phi_replicate(args) -> np.ndarray:
    gamma_p, gamma_r, n, lam, sigma2, K, seed_value = args
    p, r = int(round(gamma_p * n)), int(round(gamma_r * n))
    with threadpool_limits(1):
        x = generate(GeneratorSpec("gaussian", (lam,), p, n, sigma2), RngSeed(seed_value, _DATA_STREAM))
        spectrum = augmented_spectrum(x, r, math.sqrt(sigma2), K, RngSeed(seed_value, _AUG_STREAM))
        return pa_objective(spectrum, K)


def average_phi_curves(
    gamma_p: float,
    gamma_r: float,
    *,
    n: int = 400,
    replicates: int = 500,
    seed: int = 0,
    lam: float = 1.0,
    sigma2: float = 1.0,
    K: int = 6,
    threads: int | None = None,
) -> PhiCurves:
    """Mean augmentation objective over replicates next to its limit.

    Uses a single spike ``lam`` with known noise variance; the default
    ``lam = 1`` puts the spike eigenvalue at twice the noise level.
    """
    p, r = int(round(gamma_p * n)), int(round(gamma_r * n))
    if p < 2 or r < 1 or K > min(p, n - 2):
        raise DomainError(f"setting gives p={p}, r={r}; K={K} must not exceed min(p, n-2)")
    cell_key = derive_seed(seed, int(round(gamma_p * 1e6)), int(round(gamma_r * 1e6)), n)
    tasks = [(gamma_p, gamma_r, n, lam, sigma2, K, derive_seed(cell_key, i)) for i in range(replicates)]
    phis = np.array(_map(_phi_replicate, tasks, resolve_threads(threads)))
    limit = phi_limit(SpikedModel((lam,), sigma2), AspectRatios(gamma_p, gamma_r), K)
    return PhiCurves(gamma_p, gamma_r, n, p, r, replicates, phis.mean(axis=0), limit)
