"""Gaussian matrix models ``X = sum_k g_k A_k`` given by coefficient matrices.

The coefficient family is stored as one sparse ``(n, d_rows * d_cols)`` matrix
whose row ``k`` is the row-major flattening of ``A_k``.  Every structural flag
(trace-orthogonality, self-adjointness, nonnegativity) is recomputed from the
data when a model is built.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import rng as _rng

ORTHO_TOL = 1e-10
PSD_TOL = 1e-10
DENSE_LIMIT = 50_000_000

ENSEMBLES = (
    "iid",
    "diagonal",
    "subspace",
    "block",
    "indep_rows",
    "glued",
    "perm_glued",
    "circulant",
    "toeplitz",
)


class ModelError(ValueError):
    """Invalid coefficient data or generator parameters."""


def _transpose_perm(d_rows: int, d_cols: int) -> np.ndarray:
    # column index of vec(A^T) entry (j, i) in vec(A)
    idx = np.arange(d_rows * d_cols).reshape(d_rows, d_cols)
    return idx.T.ravel()


@dataclass(frozen=True)
class Stack:
    """Row ``t`` of ``S`` is row ``row[t]`` of coefficient ``k[t]`` (empty rows dropped)."""

    S: sp.csr_matrix
    k: np.ndarray
    row: np.ndarray
    n: int
    d_out: int

    def gram(self) -> np.ndarray:
        """``sum_k A_k^T A_k`` as a dense matrix."""
        return np.asarray((self.S.T @ self.S).todense())

    def images(self, v: np.ndarray) -> sp.csr_matrix:
        """Sparse ``(n, d_out)`` matrix whose row ``k`` is ``A_k v``."""
        vals = self.S @ v
        return sp.csr_matrix((vals, (self.k, self.row)), shape=(self.n, self.d_out))


class CoeffModel:
    """Immutable coefficient family ``A_1 .. A_n`` of shape ``d_rows x d_cols``."""

    def __init__(self, flat: Any, d_rows: int, d_cols: int):
        d_rows, d_cols = int(d_rows), int(d_cols)
        if d_rows < 1 or d_cols < 1:
            raise ModelError("dimensions must be positive")
        C = sp.csr_matrix(flat, dtype=np.float64)
        if C.shape[0] < 1:
            raise ModelError("a model needs at least one coefficient matrix")
        if C.shape[1] != d_rows * d_cols:
            raise ModelError(
                f"flattened coefficients have {C.shape[1]} columns, expected {d_rows * d_cols}"
            )
        if not np.all(np.isfinite(C.data)):
            raise ModelError("coefficient entries must be finite")
        C.eliminate_zeros()
        C.sort_indices()
        C.data.flags.writeable = False
        self._C = C
        self.d_rows = d_rows
        self.d_cols = d_cols
        self.orthogonal_family = self._check_orthogonal()
        self.selfadjoint_family = self._check_selfadjoint()
        self.nonnegative_entries = bool(np.all(C.data >= 0))

    # -- structure -----------------------------------------------------------

    @property
    def n(self) -> int:
        return self._C.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.d_rows, self.d_cols)

    @property
    def dim(self) -> int:
        """Ambient dimension used in ``log d`` and ``d**eps`` factors."""
        return max(self.d_rows, self.d_cols)

    @property
    def flat(self) -> sp.csr_matrix:
        return self._C

    @cached_property
    def gram(self) -> sp.csr_matrix:
        """Trace Gram matrix ``Tr(A_i A_j^T)``."""
        return (self._C @ self._C.T).tocsr()

    @cached_property
    def frob_norms(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.gram.diagonal(), 0.0))

    def _stack(self, transpose: bool) -> "Stack":
        coo = self._C.tocoo()
        i, j = np.divmod(coo.col.astype(np.int64), self.d_cols)
        d_out, d_in = self.d_rows, self.d_cols
        if transpose:
            i, j = j, i
            d_out, d_in = d_in, d_out
        key = coo.row.astype(np.int64) * d_out + i
        uniq, row_id = np.unique(key, return_inverse=True)
        S = sp.csr_matrix((coo.data, (row_id, j)), shape=(len(uniq), d_in))
        return Stack(S, uniq // d_out, uniq % d_out, self.n, d_out)

    @cached_property
    def row_stack(self) -> "Stack":
        """Nonzero rows of all ``A_k``; ``row_stack.S @ v`` lists the entries of every ``A_k v``."""
        return self._stack(False)

    @cached_property
    def col_stack(self) -> "Stack":
        """Same for the transposes ``A_k^T``."""
        return self._stack(True)

    @cached_property
    def is_diagonal(self) -> bool:
        """True when every coefficient is supported on the main diagonal."""
        if self.d_rows != self.d_cols:
            return False
        coo = self._C.tocoo()
        return bool(np.all(coo.col % (self.d_cols + 1) == 0))

    def dense(self) -> np.ndarray:
        """Coefficients as a dense ``(n, d_rows, d_cols)`` array."""
        if self.n * self.d_rows * self.d_cols > DENSE_LIMIT:
            raise ModelError("model too large to densify")
        return self._C.toarray().reshape(self.n, self.d_rows, self.d_cols)

    def coeff(self, k: int) -> np.ndarray:
        return self._C[k].toarray().reshape(self.d_rows, self.d_cols)

    def coeff_list(self) -> list[np.ndarray]:
        return list(self.dense())

    def scaled(self, c: float) -> "CoeffModel":
        return CoeffModel(self._C * float(c), self.d_rows, self.d_cols)

    # -- flag computation ------------------------------------------------------

    def _check_orthogonal(self) -> bool:
        G = self.gram.tocoo()
        norms = np.sqrt(np.maximum(self.gram.diagonal(), 0.0))
        off = G.row != G.col
        bound = ORTHO_TOL * norms[G.row[off]] * norms[G.col[off]]
        return bool(np.all(np.abs(G.data[off]) <= bound))

    def _check_selfadjoint(self) -> bool:
        if self.d_rows != self.d_cols:
            return False
        Ct = self._C[:, _transpose_perm(self.d_rows, self.d_cols)]
        diff = self._C - Ct
        if diff.nnz == 0:
            return True
        scale = np.abs(self._C.data).max()
        return bool(np.abs(diff.data).max() <= 1e-14 * scale)

    def __repr__(self) -> str:
        return (
            f"CoeffModel(n={self.n}, shape={self.shape}, "
            f"orthogonal={self.orthogonal_family}, selfadjoint={self.selfadjoint_family}, "
            f"nonnegative={self.nonnegative_entries})"
        )


def build_model(coeffs: Sequence[Any]) -> CoeffModel:
    """Build a model from a nonempty list of equally shaped real matrices."""
    if len(coeffs) == 0:
        raise ModelError("coefficient list is empty")
    mats = [np.asarray(a, dtype=np.float64) for a in coeffs]
    if mats[0].ndim != 2:
        raise ModelError("coefficients must be matrices")
    shape = mats[0].shape
    for k, a in enumerate(mats):
        if a.shape != shape:
            raise ModelError(f"coefficient {k} has shape {a.shape}, expected {shape}")
        if not np.all(np.isfinite(a)):
            raise ModelError(f"coefficient {k} has a non-finite entry")
    flat = np.stack([a.ravel() for a in mats])
    return CoeffModel(flat, shape[0], shape[1])


def _from_entries(rows: Iterable[int], cols: Iterable[int], vals: Iterable[float],
                  n: int, d_rows: int, d_cols: int) -> CoeffModel:
    C = sp.coo_matrix((np.asarray(list(vals), dtype=float),
                       (np.asarray(list(rows)), np.asarray(list(cols)))),
                      shape=(n, d_rows * d_cols))
    return CoeffModel(C, d_rows, d_cols)


def selfadjoint_dilation(m: CoeffModel) -> CoeffModel:
    """Replace each ``A_k`` by ``[[0, A_k], [A_k^T, 0]]``."""
    dr, dc = m.d_rows, m.d_cols
    D = dr + dc
    coo = m.flat.tocoo()
    i, j = np.divmod(coo.col, dc)
    k = coo.row
    top = i * D + (dr + j)
    bottom = (dr + j) * D + i
    C = sp.coo_matrix(
        (np.concatenate([coo.data, coo.data]),
         (np.concatenate([k, k]), np.concatenate([top, bottom]))),
        shape=(m.n, D * D),
    )
    return CoeffModel(C, D, D)


def as_selfadjoint(m: CoeffModel) -> CoeffModel:
    return m if m.selfadjoint_family else selfadjoint_dilation(m)


# -- sampling --------------------------------------------------------------------


def sample_batch(m: CoeffModel, seed: int, start: int, count: int) -> np.ndarray:
    """Realizations ``start .. start+count-1`` of the model, shape ``(count, d_rows, d_cols)``."""
    G = _rng.normal_block(seed, m.n, start, count)
    X = (m.flat.T @ G.T).T
    return np.ascontiguousarray(X).reshape(count, m.d_rows, m.d_cols)


def sample(m: CoeffModel, seed: int) -> np.ndarray:
    """One realization ``sum_k g_k A_k``; identical for identical ``(model, seed)``."""
    return sample_batch(m, seed, 0, 1)[0]


def covariance_apply(m: CoeffModel, B: Any) -> np.ndarray:
    """Action of ``E(X (x) X)`` on ``B``: ``sum_k Tr(B A_k^T) A_k``."""
    B = np.asarray(B, dtype=float)
    if B.shape != m.shape:
        raise ModelError(f"B has shape {B.shape}, model shape is {m.shape}")
    s = m.flat @ B.ravel()
    return np.asarray(m.flat.T @ s).reshape(m.shape)


# -- grid partitions -------------------------------------------------------------


@dataclass(frozen=True)
class GridGlue:
    """Partition of the ``d x d`` index grid into cells (0-based ``(row, col)``)."""

    d: int
    cells: tuple[tuple[tuple[int, int], ...], ...]

    def __post_init__(self):
        d = self.d
        if d < 1:
            raise ModelError("d must be positive")
        seen = np.zeros((d, d), dtype=bool)
        for cell in self.cells:
            if len(cell) == 0:
                raise ModelError("empty cell")
            for i, j in cell:
                if not (0 <= i < d and 0 <= j < d):
                    raise ModelError(f"index ({i}, {j}) outside the {d}x{d} grid")
                if seen[i, j]:
                    raise ModelError(f"index ({i}, {j}) appears in two cells")
                seen[i, j] = True
        if not seen.all():
            raise ModelError("cells do not cover the grid")

    @classmethod
    def from_lists(cls, d: int, cells: Iterable[Iterable[Iterable[int]]]) -> "GridGlue":
        return cls(int(d), tuple(tuple((int(i), int(j)) for i, j in c) for c in cells))

    @property
    def n(self) -> int:
        return len(self.cells)

    @property
    def sizes(self) -> list[int]:
        return [len(c) for c in self.cells]

    def is_partial_permutation(self) -> bool:
        """Each cell holds at most one entry per row and per column."""
        for c in self.cells:
            rows = {i for i, _ in c}
            cols = {j for _, j in c}
            if len(rows) != len(c) or len(cols) != len(c):
                return False
        return True

    def to_model(self) -> CoeffModel:
        d = self.d
        rows, cols = [], []
        for k, c in enumerate(self.cells):
            for i, j in c:
                rows.append(k)
                cols.append(i * d + j)
        return _from_entries(rows, cols, np.ones(len(rows)), self.n, d, d)


def perm_glue(d: int, r: int, seed: int | None = None) -> GridGlue:
    """Cells of size ``r`` with at most one entry per row and column.

    The ``d`` wrapped diagonals ``{(i, i+s mod d)}`` are laid end to end and cut
    into consecutive runs of ``r``.  A run straddling diagonals ``s`` and
    ``s+1`` keeps distinct rows and columns whenever ``r < d``.  With a seed,
    rows and columns are relabeled by random permutations.
    """
    if r < 1 or r > d:
        raise ModelError("perm_glued needs 1 <= r <= d")
    if (d * d) % r:
        raise ModelError(f"r={r} does not divide d^2={d * d}")
    seq = [(i, (i + s) % d) for s in range(d) for i in range(d)]
    if seed is not None:
        g = _rng.substream(seed, "perm_glued")
        pr, pc = g.permutation(d), g.permutation(d)
        seq = [(int(pr[i]), int(pc[j])) for i, j in seq]
    cells = tuple(tuple(seq[t : t + r]) for t in range(0, d * d, r))
    glue = GridGlue(d, cells)
    if not glue.is_partial_permutation():  # pragma: no cover - construction invariant
        raise ModelError("internal error: perm_glued cell repeats a row or column")
    return glue


def random_glue(d: int, r: int, seed: int) -> GridGlue:
    """Uniformly shuffled grid cut into cells of size ``r``."""
    if r < 1 or (d * d) % r:
        raise ModelError(f"r={r} does not divide d^2={d * d}")
    order = _rng.substream(seed, "glued").permutation(d * d)
    cells = tuple(
        tuple((int(t // d), int(t % d)) for t in order[s : s + r]) for s in range(0, d * d, r)
    )
    return GridGlue(d, cells)


# -- named ensembles -------------------------------------------------------------


def _int_param(params: Mapping[str, Any], key: str, default: Any = None) -> int:
    if key not in params:
        if default is None:
            raise ModelError(f"missing parameter '{key}'")
        return int(default)
    v = params[key]
    if isinstance(v, bool) or int(v) != v:
        raise ModelError(f"parameter '{key}' must be an integer")
    return int(v)


def psd_sqrt_factors(B: Any) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (clipped at zero) and eigenvectors of a PSD matrix."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ModelError("covariance must be a square matrix")
    if not np.allclose(B, B.T, rtol=0, atol=1e-12 * max(1.0, np.abs(B).max())):
        raise ModelError("covariance must be symmetric")
    lam, V = np.linalg.eigh((B + B.T) / 2)
    scale = np.abs(lam).max() if lam.size else 0.0
    if lam.size and lam.min() < -PSD_TOL * scale:
        raise ModelError(f"covariance is not PSD (eigenvalue {lam.min():.3g})")
    return np.clip(lam, 0.0, None), V


def _gen_iid(p):
    d = _int_param(p, "d")
    n = d * d
    return _from_entries(range(n), range(n), np.ones(n), n, d, d)


def _gen_diagonal(p):
    d = _int_param(p, "d")
    return _from_entries(range(d), [i * d + i for i in range(d)], np.ones(d), d, d, d)


def _gen_subspace(p):
    d = _int_param(p, "d")
    dim = _int_param(p, "dim")
    if not 1 <= dim <= d * d:
        raise ModelError("subspace dimension must lie in [1, d^2]")
    g = _rng.substream(_int_param(p, "seed", 0), "subspace")
    q, r = np.linalg.qr(g.standard_normal((d * d, dim)))
    q = q * np.sign(np.diag(r))
    return CoeffModel(q.T, d, d)


def _gen_block(p):
    if "blocks" in p:
        blocks = np.asarray(p["blocks"], dtype=float)
        if blocks.ndim != 4 or blocks.shape[0] != blocks.shape[1] or blocks.shape[2] != blocks.shape[3]:
            raise ModelError("blocks must have shape (d, d, r, r)")
    else:
        d, r = _int_param(p, "d"), _int_param(p, "r")
        g = _rng.substream(_int_param(p, "seed", 0), "block")
        blocks = g.standard_normal((d, d, r, r))
        if p.get("nonnegative", False):
            blocks = np.abs(blocks)
    d, r = blocks.shape[0], blocks.shape[2]
    D = d * r
    rows, cols, vals = [], [], []
    for i in range(d):
        for j in range(d):
            k = i * d + j
            a, b = np.nonzero(blocks[i, j])
            rows.extend([k] * len(a))
            cols.extend(((i * r + a) * D + (j * r + b)).tolist())
            vals.extend(blocks[i, j][a, b].tolist())
    return _from_entries(rows, cols, vals, d * d, D, D)


def _gen_indep_rows(p):
    if "covs" in p:
        covs = [np.asarray(B, dtype=float) for B in p["covs"]]
    else:
        d1, d2 = _int_param(p, "d1"), _int_param(p, "d2")
        rank = _int_param(p, "rank", d2)
        g = _rng.substream(_int_param(p, "seed", 0), "indep_rows")
        covs = []
        for _ in range(d1):
            F = g.standard_normal((d2, rank))
            covs.append(F @ F.T / rank)
    if not covs:
        raise ModelError("indep_rows needs at least one row covariance")
    d1, d2 = len(covs), covs[0].shape[0]
    rows, cols, vals = [], [], []
    for i, B in enumerate(covs):
        if B.shape != (d2, d2):
            raise ModelError("row covariances must share one shape")
        lam, V = psd_sqrt_factors(B)
        for j in range(d2):
            k = i * d2 + j
            vec = np.sqrt(lam[j]) * V[:, j]
            nz = np.nonzero(vec)[0]
            rows.extend([k] * len(nz))
            cols.extend((i * d2 + nz).tolist())
            vals.extend(vec[nz].tolist())
    return _from_entries(rows, cols, vals, d1 * d2, d1, d2)


def _gen_glued(p):
    if "cells" in p:
        glue = GridGlue.from_lists(_int_param(p, "d"), p["cells"])
        if "r" in p:
            r = _int_param(p, "r")
            if r * glue.n != glue.d ** 2 or any(s != r for s in glue.sizes):
                raise ModelError(f"cells are not all of size r={r} (r*n must equal d^2)")
    else:
        glue = random_glue(_int_param(p, "d"), _int_param(p, "r"), _int_param(p, "seed", 0))
    return glue.to_model()


def _gen_perm_glued(p):
    seed = p.get("seed")
    return perm_glue(_int_param(p, "d"), _int_param(p, "r"),
                     None if seed is None else int(seed)).to_model()


def _gen_circulant(p):
    # A_k = P^k with (P)_{i,j} = 1 iff i - j = 1 mod d, k = 1..d
    d = _int_param(p, "d")
    rows, cols = [], []
    for k in range(d):
        shift = (k + 1) % d
        for j in range(d):
            rows.append(k)
            cols.append(((j + shift) % d) * d + j)
    return _from_entries(rows, cols, np.ones(len(rows)), d, d, d)


def _gen_toeplitz(p):
    # X_{i,j} = g_{|i-j|}: symmetric Toeplitz with unequal cell sizes
    d = _int_param(p, "d")
    rows, cols = [], []
    for i in range(d):
        for j in range(d):
            rows.append(abs(i - j))
            cols.append(i * d + j)
    return _from_entries(rows, cols, np.ones(len(rows)), d, d, d)


_GENERATORS = {
    "iid": _gen_iid,
    "diagonal": _gen_diagonal,
    "subspace": _gen_subspace,
    "block": _gen_block,
    "indep_rows": _gen_indep_rows,
    "glued": _gen_glued,
    "perm_glued": _gen_perm_glued,
    "circulant": _gen_circulant,
    "toeplitz": _gen_toeplitz,
}


def gen_named(name: str, params: Mapping[str, Any] | None = None, **kwargs: Any) -> CoeffModel:
    """Build one of the named ensembles; parameters may be passed as a map or keywords."""
    if name not in _GENERATORS:
        raise ModelError(f"unknown ensemble '{name}' (choose from {', '.join(ENSEMBLES)})")
    p = dict(params or {})
    p.update(kwargs)
    return _GENERATORS[name](p)


# -- model files -----------------------------------------------------------------


def model_from_dict(doc: Mapping[str, Any]) -> CoeffModel:
    if "coeffs" in doc:
        return build_model(doc["coeffs"])
    if "generator" in doc:
        params = dict(doc.get("params", {}))
        if "seed" in doc and "seed" not in params:
            params["seed"] = doc["seed"]
        return gen_named(doc["generator"], params)
    raise ModelError("model document needs 'coeffs' or 'generator'")


def load_model_file(path: str | Path) -> CoeffModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def model_to_dict(m: CoeffModel) -> dict:
    return {"coeffs": [a.tolist() for a in m.dense()]}
