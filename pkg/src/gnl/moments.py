"""Exact Gaussian trace moments through the Wick expansion, and numeric checks
of the trace inequalities that drive the moment recursion.

For a fixed pair partition the inner sum over block labels
``sum_{f ~ nu} Tr(A_f(1) ... A_f(p))`` is a single tensor-network contraction:
one coefficient tensor per position, positions in the same block share the
label index, neighbouring positions share a matrix index.  ``np.einsum``
evaluates it without enumerating the ``n**(p/2)`` label tuples.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from . import rng as _rng
from .model import CoeffModel, ModelError, sample_batch
from .partitions import (
    PairPartition,
    SetPartition,
    double_factorial,
    enum_pair_partitions,
    is_noncrossing,
    leq,
    phi_fibers,
    FIBER_CAP,
)

WICK_BUDGET = 10**8
EXACT_RTOL = 1e-9
SLACK = 1e-8


class CheckFailure(AssertionError):
    """An inequality check was violated beyond tolerance."""


@dataclass
class CheckReport:
    name: str
    passed: bool
    n_checks: int
    max_ratio: float
    violations: int = 0
    details: dict[str, Any] = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.name}: {status} (checks={self.n_checks}, "
                f"max_ratio={self.max_ratio:.6g}, violations={self.violations})")


@dataclass
class MomentEstimate:
    p: int
    mean: float
    stderr: float
    n_samples: int
    seed: int


# -- helpers -------------------------------------------------------------------


def _require_selfadjoint(m: CoeffModel) -> None:
    if not m.selfadjoint_family:
        raise ModelError("family is not self-adjoint; apply selfadjoint_dilation first")


def _require_orthogonal(m: CoeffModel) -> None:
    if not m.orthogonal_family:
        raise ModelError("family is not trace-orthogonal")


def _check_budget(m: CoeffModel, p: int) -> None:
    cost = m.n ** (p // 2) * double_factorial(p - 1)
    if cost > WICK_BUDGET:
        raise ModelError(f"Wick expansion needs {cost:.3g} label terms, budget is {WICK_BUDGET:.0e}")


def square_sum(m: CoeffModel) -> np.ndarray:
    """``sum_k A_k^2`` for a self-adjoint family (equals ``sum_k A_k^T A_k``)."""
    return m.row_stack.gram()


def trace_power_bound(m: CoeffModel, p: int) -> float:
    """``Tr((sum_k A_k^2)^(p/2))``."""
    lam = np.clip(np.linalg.eigvalsh(square_sum(m)), 0.0, None)
    return float(np.sum(lam ** (p // 2)))


def _term(T: np.ndarray, nu: PairPartition) -> float:
    # Walk the trace cycle left to right, keeping one tensor axis per block
    # whose first position has been seen but whose second has not.
    partner = nu.partner()
    letters = string.ascii_letters[2:]
    label = {}
    for t, (a, b) in enumerate(nu.pairs):
        label[a] = label[b] = letters[t]
    first = min(partner)
    W = T
    open_ = label[first]
    for pos in sorted(partner)[1:]:
        lab = label[pos]
        if lab in open_:
            out = open_.replace(lab, "")
        else:
            out = open_ + lab
        W = np.einsum(f"{open_}xy,{lab}yz->{out}xz", W, T)
        open_ = out
    return float(np.trace(W))


# -- exact moments ---------------------------------------------------------------


def partition_term(m: CoeffModel, nu: PairPartition) -> float:
    """``sum_{f ~ nu} Tr(A_f(1) ... A_f(p))`` for one pair partition."""
    _require_selfadjoint(m)
    _check_budget(m, nu.p)
    return _term(m.dense(), nu)


def partition_terms(m: CoeffModel, p: int) -> dict[PairPartition, float]:
    """Every partition term of order ``p``, keyed by partition (enumeration order)."""
    _require_selfadjoint(m)
    _check_budget(m, p)
    T = m.dense()
    return {nu: _term(T, nu) for nu in enum_pair_partitions(p)}


def wick_trace_moment(m: CoeffModel, p: int) -> float:
    """``E Tr(X^p)`` as the sum of all partition terms; ``p = 0`` gives ``Tr(I)``."""
    _require_selfadjoint(m)
    if p < 0 or p % 2:
        raise ValueError(f"p must be a nonnegative even integer, got {p}")
    if p == 0:
        return float(m.d_rows)
    return float(sum(partition_terms(m, p).values()))


def mc_trace_moments(m: CoeffModel, ps: Sequence[int], nsamples: int, seed: int,
                     chunk: int = 50_000) -> dict[int, MomentEstimate]:
    """Sample means of ``Tr(X^p)`` for several ``p`` from one set of draws."""
    if m.d_rows != m.d_cols:
        raise ModelError("trace moments need square matrices")
    if nsamples < 2:
        raise ValueError("need at least two samples")
    ps = [int(p) for p in ps]
    sums = {p: 0.0 for p in ps}
    sq = {p: 0.0 for p in ps}
    for start in range(0, nsamples, chunk):
        count = min(chunk, nsamples - start)
        X = sample_batch(m, seed, start, count)
        if m.selfadjoint_family:
            lam = np.linalg.eigvalsh(X)
            vals = {p: np.sum(lam**p, axis=1) for p in ps}
        else:
            vals = {p: np.trace(np.linalg.matrix_power(X, p), axis1=1, axis2=2) for p in ps}
        for p in ps:
            sums[p] += float(np.sum(vals[p]))
            sq[p] += float(np.sum(vals[p] ** 2))
    out = {}
    for p in ps:
        mean = sums[p] / nsamples
        var = max(sq[p] / nsamples - mean * mean, 0.0) * nsamples / (nsamples - 1)
        out[p] = MomentEstimate(p, mean, float(np.sqrt(var / nsamples)), nsamples, seed)
    return out


def mc_trace_moment(m: CoeffModel, p: int, nsamples: int, seed: int) -> MomentEstimate:
    return mc_trace_moments(m, [p], nsamples, seed)[p]


# -- inequality checks -----------------------------------------------------------


def buchholz_check(m: CoeffModel, p: int, terms: dict | None = None) -> CheckReport:
    """Every partition term is bounded by ``Tr((sum A_k^2)^(p/2))``."""
    _require_selfadjoint(m)
    terms = terms if terms is not None else partition_terms(m, p)
    bound = trace_power_bound(m, p)
    ratios = [abs(v) / bound if bound > 0 else (0.0 if v == 0 else np.inf) for v in terms.values()]
    bad = sum(abs(v) > bound * (1 + SLACK) + SLACK for v in terms.values())
    return CheckReport("buchholz", bad == 0, len(terms), float(max(ratios)), bad,
                       {"p": p, "bound": bound})


def recursion_check(m: CoeffModel, p: int) -> CheckReport:
    """Moment recursion with the ``8^p`` constant, and ``p^4`` for nonnegative families.

    When ``p`` is within the fiber cap, each fiber sum of crossing terms is also
    checked against ``beta^2 ||sum A_k^2|| E Tr(X^(p-4))``.
    """
    _require_selfadjoint(m)
    _require_orthogonal(m)
    if p < 4 or p % 2:
        raise ValueError("recursion needs an even p >= 4")
    terms = partition_terms(m, p)
    lhs = float(sum(terms.values()))
    prev = wick_trace_moment(m, p - 4)
    beta = float(m.frob_norms.max())
    snorm = float(np.linalg.eigvalsh(square_sum(m)).max())
    trace_term = trace_power_bound(m, p)
    cross_unit = beta**2 * snorm * prev

    checks = {"general": 2.0**p * trace_term + 8.0**p * cross_unit}
    if m.nonnegative_entries:
        checks["nonnegative"] = 2.0**p * trace_term + float(p) ** 4 * cross_unit
    ratios = {k: lhs / v if v > 0 else (0.0 if lhs <= 0 else np.inf) for k, v in checks.items()}
    bad = sum(lhs > v * (1 + SLACK) + SLACK for v in checks.values())
    n_checks = len(checks)
    details: dict[str, Any] = {"p": p, "lhs": lhs, "prev": prev, "rhs": checks, "ratios": ratios}

    if p <= FIBER_CAP:
        fibers = phi_fibers(p)
        fiber_ratio = 0.0
        for s in fibers:
            tot = sum(v for nu, v in terms.items() if not is_noncrossing(nu) and leq(nu, s))
            r = abs(tot) / cross_unit if cross_unit > 0 else (0.0 if tot == 0 else np.inf)
            fiber_ratio = max(fiber_ratio, r)
            if abs(tot) > cross_unit * (1 + SLACK) + SLACK:
                bad += 1
        n_checks += len(fibers)
        details["fiber_max_ratio"] = fiber_ratio
        details["n_fibers"] = len(fibers)
    return CheckReport("recursion", bad == 0, n_checks, float(max(ratios.values())), bad, details)


def tracecross_value(A: np.ndarray, Q: Sequence[np.ndarray], Y: np.ndarray) -> float:
    """``|sum_{k1,k2} Tr(Q1 Y^2 Q2 A_k1 Q3 A_k2 Q4 A_k1 Q5 A_k2)|``."""
    M = Q[0] @ Y @ Y @ Q[1]
    Wa = np.einsum("ij,ajk->aik", M, A) @ Q[2]
    Wab = np.einsum("aij,bjk->abik", Wa, A) @ Q[3]
    Wb = np.einsum("abij,ajk->bik", Wab, A) @ Q[4]
    return float(abs(np.einsum("bij,bji->", Wb, A)))


def tracecross_check(m: CoeffModel, trials: int, seed: int) -> CheckReport:
    """Random orthogonal ``Q1..Q5`` and symmetric ``Y`` against the trace-cross bound."""
    _require_selfadjoint(m)
    _require_orthogonal(m)
    A = m.dense()
    d = m.d_rows
    beta = float(m.frob_norms.max())
    snorm = float(np.linalg.eigvalsh(square_sum(m)).max())
    worst, bad = 0.0, 0
    for t in range(trials):
        g = _rng.substream(seed, "tracecross", t)
        Q = [_rng.random_orthogonal(g, d) for _ in range(5)]
        G = g.standard_normal((d, d))
        Y = (G + G.T) / 2
        lhs = tracecross_value(A, Q, Y)
        rhs = beta**2 * snorm * float(np.trace(Y @ Y))
        worst = max(worst, lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf))
        bad += lhs > rhs * (1 + SLACK) + SLACK
    return CheckReport("tracecross", bad == 0, trials, worst, bad, {"seed": seed})


def canonical_basis(d: int) -> list[np.ndarray]:
    out = []
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d))
            E[i, j] = 1.0
            out.append(E)
    return out


def rotated_basis(d: int, seed: int) -> list[np.ndarray]:
    """Orthonormal basis ``B_k = reshape(O[:, k])`` for a random orthogonal ``O``."""
    O = _rng.random_orthogonal(_rng.substream(seed, "basis"), d * d)
    return [O[:, k].reshape(d, d) for k in range(d * d)]


def orthtr_check(basis: Sequence[Any], L: Any) -> CheckReport:
    """``sum_k B_k^T L B_k = Tr(L) I`` for an orthonormal basis of ``M_d``."""
    B = np.asarray(basis, dtype=float)
    L = np.asarray(L, dtype=float)
    if B.ndim != 3 or B.shape[1] != B.shape[2]:
        raise ValueError("basis must be a list of square matrices")
    d = B.shape[1]
    if B.shape[0] != d * d or L.shape != (d, d):
        raise ValueError(f"need {d * d} basis matrices and a {d}x{d} L")
    flat = B.reshape(d * d, -1)
    if not np.allclose(flat @ flat.T, np.eye(d * d), atol=1e-8):
        raise ValueError("basis is not orthonormal under the trace inner product")
    S = np.einsum("kji,jl,klm->im", B, L, B)
    resid = float(np.linalg.norm(S - np.trace(L) * np.eye(d)))
    tol = 1e-8 * float(np.linalg.norm(L)) * d
    ratio = resid / tol if tol > 0 else (0.0 if resid == 0 else np.inf)
    ok = resid <= tol
    return CheckReport("orthtr", ok, 1, ratio, int(not ok), {"residual": resid})


def run_checks(m: CoeffModel, p: int, trials: int = 200, seed: int = 0,
               terms: dict | None = None) -> list[CheckReport]:
    """All lemma checks applicable to a self-adjoint family."""
    _require_selfadjoint(m)
    out = [buchholz_check(m, p, terms)]
    if m.orthogonal_family:
        if p >= 4:
            out.append(recursion_check(m, p))
        out.append(tracecross_check(m, trials, seed))
    d = m.d_rows
    Lg = _rng.substream(seed, "orthtr").standard_normal((d, d))
    out.append(orthtr_check(rotated_basis(d, seed), Lg))
    return out
