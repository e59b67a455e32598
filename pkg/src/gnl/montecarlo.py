"""Seeded Monte Carlo estimates of ``E||X||`` and ``E||X||^2``.

Sample ``i`` is a pure function of ``(model, seed, i)``, so results do not
depend on chunk size or on how many worker threads evaluate the chunks.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import log, sqrt
from typing import Any, Mapping, Sequence

import numpy as np

from . import rng as _rng
from .model import CoeffModel, gen_named, sample_batch

CHUNK_ENTRIES = 4_000_000


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n_samples: int
    seed: int
    sigma_star: float | None = None

    def concentration_halfwidth(self, delta: float) -> float:
        """Radius ``t`` with ``P(| ||X|| - E||X|| | >= t) <= delta`` from Gaussian concentration."""
        if self.sigma_star is None:
            raise ValueError("sigma_star was not supplied")
        if not 0.0 < delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        return self.sigma_star * sqrt(2.0 * log(2.0 / delta))


def default_threads() -> int:
    return os.cpu_count() or 1


def default_samples(d: int) -> int:
    return 10_000 if d < 16 else 200


def _chunk_size(m: CoeffModel) -> int:
    per = m.n + (m.d_rows if m.is_diagonal else m.d_rows * m.d_cols)
    return int(max(1, min(1024, CHUNK_ENTRIES // per)))


def _diag_columns(m: CoeffModel):
    idx = np.arange(m.d_rows) * (m.d_cols + 1)
    return m.flat[:, idx]


def _chunk_norms(m: CoeffModel, seed: int, start: int, count: int, diag) -> np.ndarray:
    if diag is not None:
        G = _rng.normal_block(seed, m.n, start, count)
        vals = np.asarray((diag.T @ G.T).T)
        return np.abs(vals).max(axis=1)
    X = sample_batch(m, seed, start, count)
    if min(m.shape) == 1:
        return np.linalg.norm(X.reshape(count, -1), axis=1)
    return np.linalg.svd(X, compute_uv=False)[:, 0]


def opnorm_samples(m: CoeffModel, n_samples: int, seed: int, threads: int = 1) -> np.ndarray:
    """Spectral norms of samples ``0 .. n_samples-1`` in index order."""
    seed = _rng.check_seed(seed)
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    diag = _diag_columns(m) if m.is_diagonal else None
    size = _chunk_size(m)
    starts = list(range(0, n_samples, size))
    job = lambda s: _chunk_norms(m, seed, s, min(size, n_samples - s), diag)
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, starts))
    else:
        parts = [job(s) for s in starts]
    return np.concatenate(parts)


def _summarize(vals: np.ndarray, seed: int, sigma_star: float | None) -> MCEstimate:
    n = len(vals)
    if n < 2:
        raise ValueError("need at least two samples")
    return MCEstimate(
        mean=float(np.mean(vals)),
        stderr=float(np.std(vals, ddof=1) / sqrt(n)),
        n_samples=n,
        seed=seed,
        sigma_star=sigma_star,
    )


def estimate_opnorm_mean(m: CoeffModel, n_samples: int, seed: int, threads: int = 1,
                         sigma_star: float | None = None) -> MCEstimate:
    return _summarize(opnorm_samples(m, n_samples, seed, threads), seed, sigma_star)


def estimate_second_moment(m: CoeffModel, n_samples: int, seed: int, threads: int = 1) -> MCEstimate:
    return _summarize(opnorm_samples(m, n_samples, seed, threads) ** 2, seed, None)


def tail_fraction(norms: np.ndarray, halfwidth: float) -> float:
    """Fraction of samples at distance at least ``halfwidth`` from the sample mean."""
    return float(np.mean(np.abs(norms - norms.mean()) >= halfwidth))


@dataclass
class ScalingFit:
    family: str
    dims: list[int]
    means: list[float]
    stderrs: list[float]
    slope: float
    intercept: float
    residuals: list[float]

    @property
    def max_abs_residual(self) -> float:
        return float(np.max(np.abs(self.residuals)))


def scaling_fit(family: str, dims: Sequence[int], params: Mapping[str, Any] | None = None,
                n_samples: int = 200, seed: int = 0, threads: int = 1) -> ScalingFit:
    """Least-squares slope of ``log E||X||`` against ``log d`` for a named ensemble."""
    dims = [int(d) for d in dims]
    if len(dims) < 3:
        raise ValueError("scaling fit needs at least three dimensions")
    if any(b <= a for a, b in zip(dims, dims[1:])):
        raise ValueError("dimensions must be strictly increasing")
    means, errs = [], []
    for d in dims:
        m = gen_named(family, {**dict(params or {}), "d": d})
        est = estimate_opnorm_mean(m, n_samples, seed, threads)
        means.append(est.mean)
        errs.append(est.stderr)
    x = np.log(dims)
    y = np.log(means)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return ScalingFit(family, dims, means, errs, float(slope), float(intercept),
                      [float(r) for r in resid])
