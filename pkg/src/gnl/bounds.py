"""Variance parameters of a Gaussian matrix model and the bound shapes built from them.

Shapes carry no universal constants: they are the expressions whose ratio to
``E||X||`` is expected to stay bounded, reported as-is.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from math import log, sqrt
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from . import rng as _rng
from .model import CoeffModel, ModelError, as_selfadjoint

VFROB_TOL = 1e-10
VFROB_MAX_ITER = 2000
SSTAR_TOL = 1e-8
SSTAR_MAX_ALT = 500
SSTAR_RESTARTS = 32
DEFAULT_EPS = 0.1
DENSE_VFROB_CAP = 8


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, trace: list[float]):
        super().__init__(f"{msg} (last values: {trace[-5:]})")
        self.trace = trace


def _top_eig(S: np.ndarray) -> tuple[float, np.ndarray]:
    k = S.shape[0]
    vals, vecs = sla.eigh(S, subset_by_index=[k - 1, k - 1], driver="evx")
    if vals.size == 0:
        # clustered spectra can defeat the partial solver
        vals, vecs = np.linalg.eigh(S)
    return float(vals[-1]), vecs[:, -1]


def sigma_params(m: CoeffModel) -> tuple[float, float]:
    """``(||sum A_k^T A_k||^(1/2), ||sum A_k A_k^T||^(1/2))``."""
    col = np.linalg.eigvalsh(m.row_stack.gram())[-1]
    row = np.linalg.eigvalsh(m.col_stack.gram())[-1]
    return sqrt(max(col, 0.0)), sqrt(max(row, 0.0))


# -- v_frob -------------------------------------------------------------------------


def v_frob(m: CoeffModel, seed: int = 0, tol: float = VFROB_TOL,
           max_iter: int = VFROB_MAX_ITER) -> float:
    """Square root of the top eigenvalue of the covariance operator, by power iteration.

    The operator ``B -> sum_k <A_k, B> A_k`` is applied through the flattened
    coefficient matrix ``C`` as ``C^T C``.  Iteration stops when the Rayleigh
    quotient increment, inflated by the observed geometric decay of increments,
    falls below ``tol`` relative.
    """
    C = m.flat
    x = _rng.substream(seed, "vfrob").standard_normal(C.shape[1])
    x /= np.linalg.norm(x)
    trace: list[float] = []
    prev_step = None
    for _ in range(max_iter):
        s = C @ x
        rq = float(s @ s)
        trace.append(rq)
        if rq == 0.0:
            return 0.0
        y = C.T @ s
        x = y / np.linalg.norm(y)
        if len(trace) >= 2:
            step = max(rq - trace[-2], 0.0)
            if prev_step:
                rho = min(step / prev_step, 1.0 - 1e-12)
                tail = step * max(1.0, rho / (1.0 - rho))
            else:
                tail = step
            if tail <= tol * rq:
                return sqrt(rq)
            prev_step = step
    raise ConvergenceError(f"v_frob power iteration did not converge in {max_iter} steps", trace)


def covariance_matrix(m: CoeffModel) -> np.ndarray:
    """The covariance operator as a dense ``(dr*dc)^2`` matrix (small models only)."""
    if m.dim > DENSE_VFROB_CAP:
        raise ModelError(f"dense covariance operator limited to d <= {DENSE_VFROB_CAP}")
    C = m.flat.toarray()
    return C.T @ C


def v_frob_dense(m: CoeffModel) -> float:
    return sqrt(max(float(np.linalg.eigvalsh(covariance_matrix(m))[-1]), 0.0))


# -- sigma_star ---------------------------------------------------------------------


@dataclass
class SigmaStar:
    value: float
    restarts: int
    converged: bool
    iterations: int
    best_restart: int
    v: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)


def _q_from_v(m: CoeffModel, v: np.ndarray) -> np.ndarray:
    # rows of M are A_k v, so sum_k (w^T A_k v)^2 = w^T M^T M w
    M = m.row_stack.images(v)
    return np.asarray((M.T @ M).todense())


def _q_from_w(m: CoeffModel, w: np.ndarray) -> np.ndarray:
    M = m.col_stack.images(w)
    return np.asarray((M.T @ M).todense())


def _alternate(m: CoeffModel, seed: int, restart: int, tol: float, max_alt: int):
    v = _rng.substream(seed, "sigma_star", restart).standard_normal(m.d_cols)
    v /= np.linalg.norm(v)
    val, w = _top_eig(_q_from_v(m, v))
    for it in range(1, max_alt + 1):
        _, v = _top_eig(_q_from_w(m, w))
        new, w = _top_eig(_q_from_v(m, v))
        if abs(new - val) <= tol * max(new, 1e-300):
            return max(new, 0.0), True, it, v, w
        val = new
    return max(val, 0.0), False, max_alt, v, w


def sigma_star(m: CoeffModel, restarts: int = SSTAR_RESTARTS, seed: int = 0,
               tol: float = SSTAR_TOL, max_alt: int = SSTAR_MAX_ALT,
               threads: int = 1) -> SigmaStar:
    """Lower bound on ``sup_{v,w} (sum_k <A_k v, w>^2)^(1/2)`` by alternating maximization.

    Each restart alternates exact maximization over ``w`` and over ``v``; the
    best restart wins, ties going to the lowest restart index.
    """
    if restarts < 1:
        raise ValueError("need at least one restart")
    idx = range(restarts)
    job = lambda r: _alternate(m, seed, r, tol, max_alt)
    if threads > 1 and restarts > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, idx))
    else:
        results = [job(r) for r in idx]
    best = max(range(restarts), key=lambda r: (results[r][0], -r))
    val, conv, _, v, w = results[best]
    return SigmaStar(
        value=sqrt(val),
        restarts=restarts,
        converged=all(r[1] for r in results),
        iterations=sum(r[2] for r in results),
        best_restart=best,
        v=v,
        w=w,
    )


# -- proxies and assembled shapes -----------------------------------------------------


def w_proxy(m: CoeffModel) -> float:
    """``2 (max_k ||A_k||_F)^(1/2) ||sum A_k^2||^(1/4)`` on the self-adjoint version of ``m``."""
    s = as_selfadjoint(m)
    beta = float(s.frob_norms.max()) if s.n else 0.0
    sq = float(np.linalg.eigvalsh(s.row_stack.gram())[-1])
    return 2.0 * sqrt(beta) * max(sq, 0.0) ** 0.25


def log_factor(d: int) -> float:
    return sqrt(log(d)) if d > 1 else 1.0


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {eps}")
    return eps


@dataclass
class BoundReport:
    d: int
    n: int
    sigma_col: float
    sigma_row: float
    v_frob: float
    sigma_star: float
    sigma_star_restarts: int
    sigma_star_converged: bool
    w_proxy: float
    nck_lower: float
    nck_upper_shape: float
    main_bound_shape: float
    conjecture_shape: float
    epsilon: float

    def to_dict(self) -> dict:
        return asdict(self)

    def with_epsilon(self, eps: float) -> "BoundReport":
        eps = _check_eps(eps)
        out = BoundReport(**self.to_dict())
        out.epsilon = eps
        out.main_bound_shape = self.nck_lower + self.d**eps * self.v_frob
        return out


def assemble(m: CoeffModel, eps: float = DEFAULT_EPS, restarts: int = SSTAR_RESTARTS,
             seed: int = 0, threads: int = 1) -> BoundReport:
    eps = _check_eps(eps)
    sc, sr = sigma_params(m)
    vf = v_frob(m, seed=seed)
    ss = sigma_star(m, restarts=restarts, seed=seed, threads=threads)
    d = m.dim
    lf = log_factor(d)
    nck = sc + sr
    return BoundReport(
        d=d,
        n=m.n,
        sigma_col=sc,
        sigma_row=sr,
        v_frob=vf,
        sigma_star=ss.value,
        sigma_star_restarts=ss.restarts,
        sigma_star_converged=ss.converged,
        w_proxy=w_proxy(m),
        nck_lower=nck,
        nck_upper_shape=lf * nck,
        main_bound_shape=nck + d**eps * vf,
        conjecture_shape=nck + lf * ss.value,
        epsilon=eps,
    )


def samplecov_bound(models: Sequence[CoeffModel], eps: float = DEFAULT_EPS,
                    seed: int = 0) -> float:
    """``(sum_r sigma_col^4 + sigma_row^4 + d^eps v_frob^4)^(1/2)`` over the summands."""
    eps = _check_eps(eps)
    if not models:
        raise ValueError("need at least one model")
    shape = models[0].shape
    if any(mm.shape != shape for mm in models):
        raise ModelError("all models must share one shape")
    d = max(shape)
    total = 0.0
    for mm in models:
        sc, sr = sigma_params(mm)
        total += sc**4 + sr**4 + d**eps * v_frob(mm, seed=seed) ** 4
    return sqrt(total)
