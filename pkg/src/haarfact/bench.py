"""Reproducible timing and accuracy tables."""

from __future__ import annotations

import csv
import io
import time

import numpy as np

from .dyadic import intervals_up_to
from .generate import generate_operator
from .norms import ExpectationStrategy, hardy_norm
from .pipeline import PipelineConfig, full_factor
from .stepfunc import HaarCoefficients

SUITES = ("norm", "pipeline", "mc")
COLUMNS = ("suite", "stage", "n_max", "M", "mode", "wall_time", "value", "residual", "extra")


def _random_coefficients(depth: int, seed: int) -> HaarCoefficients:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, depth])))
    intervals = intervals_up_to(depth)
    values = rng.standard_normal(len(intervals))
    return HaarCoefficients(dict(zip(intervals, values.tolist())), depth, mode="float")


def _row(**fields) -> dict:
    return {key: fields.get(key, "") for key in COLUMNS}


def norm_suite(resolutions=range(10, 15), seed: int = 0, budget: float | None = None) -> list[dict]:
    """Time exact Hardy norms of dense expansions with ``M`` grid bits."""
    rows, start = [], time.perf_counter()
    for M in resolutions:
        c = _random_coefficients(M - 1, seed)
        for space in ("lp:1:independent", "lp:2:constant"):
            t0 = time.perf_counter()
            result = hardy_norm(c, space)
            rows.append(_row(suite="norm", stage="hardy_norm", M=M, mode=space,
                             wall_time=time.perf_counter() - t0, value=result.value))
        if budget is not None and time.perf_counter() - start > budget:
            break
    return rows


def pipeline_suite(seed: int = 1, budget: float | None = None) -> list[dict]:
    """Run the full chain on a few generated operators; accuracy columns are deterministic."""
    cases = [("identity", 2, {}, 0.0), ("diagonal", 3, {}, 0.6),
             ("perturbed-identity", 2, {"eps": 0.05}, 0.0), ("multiplier", 2, {}, 0.0)]
    rows, start = [], time.perf_counter()
    for kind, n_max, params, delta in cases:
        T = generate_operator(kind, n_max, seed, params)
        t0 = time.perf_counter()
        cert = full_factor(T, PipelineConfig(eta=0.1, delta=delta, seed=seed))
        wall = time.perf_counter() - t0
        for stage in cert.stages:
            rows.append(_row(suite="pipeline", stage=f"{kind}:{stage.name}", n_max=n_max,
                             mode=T.mode, wall_time=wall, value=stage.depth,
                             residual=stage.certified))
        rows.append(_row(suite="pipeline", stage=f"{kind}:endgame", n_max=n_max, mode=T.mode,
                         wall_time=wall, value=float(cert.scalar),
                         residual=cert.certified_error, extra=cert.branch))
        if budget is not None and time.perf_counter() - start > budget:
            break
    return rows


def mc_suite(depths=range(8, 13), repeats: int = 4, seed: int = 0,
             budget: float | None = None) -> list[dict]:
    """Exact against Monte Carlo independent-mode norms; ``extra`` flags ``|diff| <= 4 sigma``."""
    rows, start = [], time.perf_counter()
    sampled = ExpectationStrategy(exact_cutoff=0, mc_samples=4000, seed=seed)
    for depth in depths:
        for r in range(repeats):
            c = _random_coefficients(depth, seed * 1000 + r)
            exact = hardy_norm(c, "lp:1:independent")
            t0 = time.perf_counter()
            estimate = hardy_norm(c, "lp:1:independent", sampled)
            diff = abs(estimate.value - exact.value)
            rows.append(_row(suite="mc", stage="hardy_norm", M=depth + 1, mode="lp:1:independent",
                             wall_time=time.perf_counter() - t0, value=estimate.value,
                             residual=diff,
                             extra=str(diff <= 4 * estimate.stat_error)))
        if budget is not None and time.perf_counter() - start > budget:
            break
    return rows


def run_bench(suite: str = "all", budget: float | None = None, seed: int | None = None
              ) -> list[dict]:
    chosen = SUITES if suite == "all" else (suite,)
    rows = []
    for name in chosen:
        if name == "norm":
            rows += norm_suite(seed=seed or 0, budget=budget)
        elif name == "pipeline":
            rows += pipeline_suite(seed=1 if seed is None else seed, budget=budget)
        elif name == "mc":
            rows += mc_suite(seed=seed or 0, budget=budget)
        else:
            raise ValueError(f"suite must be one of {SUITES} or 'all'")
    return rows


def to_csv(rows: list[dict]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buffer.getvalue()


__all__ = ["SUITES", "run_bench", "norm_suite", "pipeline_suite", "mc_suite", "to_csv"]
