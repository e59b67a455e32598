"""Reproducible experiment suites comparing Monte Carlo ``E||X||`` with bound shapes.

Each run yields one CSV row per dimension in a fixed 16-column schema.  Extra
per-family quantities (parameters, regime flags, sample-covariance statistics)
are packed into the ``param`` column as ``key=value`` pairs separated by ``;``.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass
from math import ceil, log, nan, sqrt
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import rng as _rng
from .bounds import BoundReport, assemble, samplecov_bound
from .model import CoeffModel, ModelError, gen_named, psd_sqrt_factors
from .montecarlo import MCEstimate, default_samples, estimate_opnorm_mean

COLUMNS = (
    "family", "d", "n", "param", "sigma_col", "sigma_row", "v_frob", "sigma_star",
    "nck_lower", "nck_upper_shape", "main_bound_shape", "conjecture_shape", "epsilon",
    "mc_mean", "mc_stderr", "seed",
)

DEFAULT_DIMS = {
    "diagonal": [64, 128, 256],
    "iid": [64, 128, 256],
    "subspace": [8, 12, 16],
    "glued": [64, 128, 256],
    "perm_glued": [64, 128, 256],
    "circulant": [64, 128, 256],
    "toeplitz": [64, 128, 256],
    "block": [8, 16, 32],
    "indep_rows": [16, 32, 64],
    "sample_cov": [32, 64],
    "sample_cov_counterexample": [64, 128, 256],
}
EXAMPLES = tuple(DEFAULT_DIMS)


def fmt_float(x: float) -> str:
    return "%.17g" % x


def fmt_param(items: Mapping[str, Any]) -> str:
    parts = []
    for k, v in items.items():
        if isinstance(v, float):
            v = fmt_float(v)
        parts.append(f"{k}={v}")
    return ";".join(parts)


def parse_param(text: str) -> dict[str, str]:
    return dict(p.split("=", 1) for p in text.split(";") if p)


def make_row(family: str, m: CoeffModel | None, param: Mapping[str, Any],
             report: BoundReport | None, est: MCEstimate, seed: int,
             d: int | None = None, eps: float = nan) -> dict[str, Any]:
    row: dict[str, Any] = {
        "family": family,
        "d": d if d is not None else m.dim,
        "n": m.n if m is not None else 0,
        "param": fmt_param(param),
    }
    for key in COLUMNS[4:13]:
        row[key] = getattr(report, key) if report is not None else nan
    if report is None:
        row["epsilon"] = eps
    row.update(mc_mean=est.mean, mc_stderr=est.stderr, seed=seed)
    return row


# -- regime flags ------------------------------------------------------------------------


def subspace_regime(d: int, dim: int, eps: float) -> str:
    if dim >= d ** (1 + eps):
        return "proven"
    if dim >= d * log(d):
        return "conjectured"
    return "outside"


def glued_regime(d: int, r: int) -> str:
    if d < 3:
        return "outside"
    if r <= d / log(d) ** 4:
        return "proven"
    if r <= d / log(d):
        return "conjectured"
    return "outside"


# -- Gaussian families ----------------------------------------------------------------


def _family_model(name: str, d: int, params: Mapping[str, Any], seed: int, eps: float):
    p = dict(params)
    info: dict[str, Any] = {}
    if name in ("iid", "diagonal", "circulant", "toeplitz"):
        return gen_named(name, d=d), info
    if name == "subspace":
        if "dim" in p:
            dim = int(p["dim"])
        else:
            dim = int(round(d ** float(p.get("dim_exponent", 1.5))))
        info.update(dim=dim, regime=subspace_regime(d, dim, eps))
        return gen_named("subspace", d=d, dim=dim, seed=int(p.get("seed", seed))), info
    if name in ("glued", "perm_glued"):
        r = int(p.get("r", 2))
        info.update(r=r, regime=glued_regime(d, r))
        kw = {"d": d, "r": r}
        if name == "glued" or "seed" in p:
            kw["seed"] = int(p.get("seed", seed))
        return gen_named(name, **kw), info
    if name == "block":
        r = int(p.get("r", 2))
        nonneg = bool(p.get("nonnegative", False))
        info.update(r=r, nonnegative=int(nonneg))
        m = gen_named("block", d=d, r=r, seed=int(p.get("seed", seed)), nonnegative=nonneg)
        return m, info
    if name == "indep_rows":
        d1 = int(p.get("d1", d))
        rank = int(p.get("rank", d))
        info.update(d1=d1, rank=rank)
        return gen_named("indep_rows", d1=d1, d2=d, rank=rank, seed=int(p.get("seed", seed))), info
    raise ModelError(f"unknown example '{name}'")


# -- sample covariance ---------------------------------------------------------------


@dataclass
class Mixture:
    """Finite mixture of PSD matrices with probabilities ``weights``."""

    covs: list[np.ndarray]
    weights: np.ndarray

    def __post_init__(self):
        if not self.covs:
            raise ModelError("mixture needs at least one component")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.covs),) or np.any(w < 0) or w.sum() <= 0:
            raise ModelError("mixture weights must be nonnegative, one per component")
        self.weights = w / w.sum()
        d2 = self.covs[0].shape[0]
        factors = []
        for B in self.covs:
            if B.shape != (d2, d2):
                raise ModelError("mixture components must share one shape")
            lam, V = psd_sqrt_factors(B)
            factors.append(V * np.sqrt(lam))
        self.factors = factors

    @property
    def d2(self) -> int:
        return self.covs[0].shape[0]

    def mean(self) -> np.ndarray:
        return sum(w * B for w, B in zip(self.weights, self.covs))

    def expected_max_trace(self, d1: int) -> float:
        """``E max_i Tr(B_i)`` over ``d1`` iid draws, from the exact discrete CDF."""
        tr = np.array([np.trace(B) for B in self.covs])
        order = np.argsort(tr)
        tr, w = tr[order], self.weights[order]
        vals, idx = np.unique(tr, return_index=True)
        cdf = np.cumsum(np.add.reduceat(w, idx))
        cdf[-1] = 1.0
        prev = np.concatenate([[0.0], cdf[:-1]])
        return float(np.sum(vals * (cdf**d1 - prev**d1)))

    def rhs_shape(self, d1: int) -> float:
        return d1 * float(np.linalg.eigvalsh(self.mean())[-1]) + self.expected_max_trace(d1)


def default_mixture(d2: int, d1: int, seed: int, components: int = 3) -> Mixture:
    # orthogonal projections of rank d2/2 satisfy Tr(B) >= max(d1, d2)^(1/4) ||B||
    g = _rng.substream(seed, "mixture_components")
    rank = max(int(ceil(d2 / 2)), int(ceil(max(d1, d2) ** 0.25)))
    covs = []
    for _ in range(components):
        q, _ = np.linalg.qr(g.standard_normal((d2, rank)))
        covs.append(q @ q.T)
    return Mixture(covs, np.ones(components))


def coordinate_mixture(d2: int) -> Mixture:
    covs = []
    for j in range(d2):
        B = np.zeros((d2, d2))
        B[j, j] = 1.0
        covs.append(B)
    return Mixture(covs, np.ones(d2))


def _mixture_from_params(p: Mapping[str, Any], d2: int, d1: int, seed: int) -> Mixture:
    if "covs" in p:
        covs = [np.asarray(B, dtype=float) for B in p["covs"]]
        weights = p.get("weights", [1.0] * len(covs))
        mix = Mixture(covs, np.asarray(weights, dtype=float))
        if mix.d2 != d2:
            raise ModelError(f"mixture components are {mix.d2}x{mix.d2}, expected d={d2}")
        return mix
    return default_mixture(d2, d1, int(p.get("seed", seed)), int(p.get("components", 3)))


def draw_rows(mix: Mixture, rows: int, seed: int, index: int) -> tuple[np.ndarray, np.ndarray]:
    """Component labels and the ``rows x d2`` matrix of vectors ``z_i`` for one sample."""
    g = _rng.substream(seed, "sample_cov", index)
    labels = g.choice(len(mix.covs), size=rows, p=mix.weights)
    G = g.standard_normal((rows, mix.d2))
    Z = np.empty((rows, mix.d2))
    for c in np.unique(labels):
        sel = labels == c
        Z[sel] = G[sel] @ mix.factors[c].T
    return labels, Z


@dataclass
class SampleCovStats:
    norm_mean: float
    norm_stderr: float
    dev_mean: float
    dev_stderr: float
    n_samples: int


def sample_cov_stats(mix: Mixture, d1: int, M: int, n_samples: int, seed: int) -> SampleCovStats:
    """Monte Carlo for ``||Y||`` and ``||Y - E Y||`` with ``Y = sum_i z_i z_i^T`` over ``M*d1`` rows."""
    if n_samples < 2:
        raise ValueError("need at least two samples")
    EY = M * d1 * mix.mean()
    norms = np.empty(n_samples)
    devs = np.empty(n_samples)
    for s in range(n_samples):
        _, Z = draw_rows(mix, M * d1, seed, s)
        Y = Z.T @ Z
        lam = np.linalg.eigvalsh(Y)
        norms[s] = lam[-1]
        devs[s] = np.abs(np.linalg.eigvalsh(Y - EY)).max()
    root = sqrt(n_samples)
    return SampleCovStats(
        float(norms.mean()), float(norms.std(ddof=1) / root),
        float(devs.mean()), float(devs.std(ddof=1) / root), n_samples,
    )


def _conditional_models(mix: Mixture, d1: int, M: int, seed: int):
    # Gaussian summands X_r given the component labels of sample 0
    labels, _ = draw_rows(mix, M * d1, seed, 0)
    return [gen_named("indep_rows", covs=[mix.covs[c] for c in labels[r * d1:(r + 1) * d1]])
            for r in range(M)]


def _sample_cov_row(family: str, d: int, params: Mapping[str, Any], n_samples: int,
                    seed: int, eps: float) -> dict[str, Any]:
    d1 = int(params.get("d1", d))
    M = int(params.get("M", 1))
    if d1 < 1 or M < 1:
        raise ModelError("d1 and M must be positive")
    if family == "sample_cov_counterexample":
        mix = coordinate_mixture(d)
    else:
        mix = _mixture_from_params(params, d, d1, seed)
    stats = sample_cov_stats(mix, d1, M, n_samples, seed)
    param: dict[str, Any] = {
        "d1": d1,
        "M": M,
        "components": len(mix.covs),
        "rhs_shape": mix.rhs_shape(d1),
        "expected_max_trace": mix.expected_max_trace(d1),
        "dev_mean": stats.dev_mean,
        "dev_stderr": stats.dev_stderr,
    }
    if d1 * d <= 16384:
        param["samplecov_bound"] = samplecov_bound(_conditional_models(mix, d1, M, seed), eps, seed)
    est = MCEstimate(stats.norm_mean, stats.norm_stderr, n_samples, seed)
    return make_row(family, None, param, None, est, seed, d=d, eps=eps)


# -- driver ------------------------------------------------------------------------


def run_example(name: str, params: Mapping[str, Any] | None = None,
                dims: Sequence[int] | None = None, n_samples: int | None = None,
                seed: int = 0, eps: float = 0.1, restarts: int = 32,
                threads: int = 1) -> list[dict[str, Any]]:
    """One CSV row per dimension for the named example, in the order of ``dims``."""
    if name not in DEFAULT_DIMS:
        raise ModelError(f"unknown example '{name}' (choose from {', '.join(EXAMPLES)})")
    seed = _rng.check_seed(seed)
    params = dict(params or {})
    dims = [int(d) for d in (dims or DEFAULT_DIMS[name])]
    rows = []
    for d in dims:
        ns = n_samples or default_samples(d)
        if name.startswith("sample_cov"):
            rows.append(_sample_cov_row(name, d, params, ns, seed, eps))
            continue
        m, info = _family_model(name, d, params, seed, eps)
        report = assemble(m, eps, restarts=restarts, seed=seed, threads=threads)
        est = estimate_opnorm_mean(m, ns, seed, threads)
        rows.append(make_row(name, m, info, report, est, seed))
    return rows


def format_rows(rows: Iterable[Mapping[str, Any]], header: bool) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(COLUMNS)
    for row in rows:
        missing = set(COLUMNS) - set(row)
        if missing:
            raise ValueError(f"row is missing columns {sorted(missing)}")
        w.writerow([fmt_float(row[c]) if isinstance(row[c], float) else row[c] for c in COLUMNS])
    return buf.getvalue()


def emit_csv(rows: Iterable[Mapping[str, Any]], path: str | Path) -> Path:
    """Append ``rows`` to ``path``; a new or empty file gets the header first.

    The whole file is rewritten through a temporary file and renamed into place,
    so readers never see a partial batch.
    """
    path = Path(path)
    old = path.read_text() if path.exists() else ""
    text = old + format_rows(rows, header=not old)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=".gnl-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
