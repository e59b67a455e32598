import numpy as np

from gnl.model import build_model


def random_symmetric_family(seed: int, n: int, d: int) -> "CoeffModel":
    g = np.random.default_rng(seed)
    coeffs = []
    for _ in range(n):
        G = g.standard_normal((d, d))
        coeffs.append((G + G.T) / 2)
    return build_model(coeffs)


def symmetric_orthogonal_family(seed: int, n: int, d: int, nonnegative: bool = False):
    """``n`` symmetric matrices, pairwise trace-orthogonal, with varied Frobenius norms."""
    g = np.random.default_rng(seed)
    if nonnegative:
        # disjoint symmetric supports guarantee orthogonality
        cells = [(i, j) for i in range(d) for j in range(i, d)]
        order = g.permutation(len(cells))
        groups = np.array_split(order, n)
        coeffs = []
        for grp in groups:
            A = np.zeros((d, d))
            for t in grp:
                i, j = cells[t]
                A[i, j] = A[j, i] = g.uniform(0.5, 2.0)
            coeffs.append(A)
        return build_model(coeffs)
    dim = d * (d + 1) // 2
    basis = []
    for i in range(d):
        for j in range(i, d):
            E = np.zeros((d, d))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = 1 / np.sqrt(2)
            basis.append(E)
    basis = np.array(basis)
    q, _ = np.linalg.qr(g.standard_normal((dim, dim)))
    scales = g.uniform(0.5, 2.0, size=n)
    return build_model([s * np.tensordot(q[:, k], basis, axes=1) for k, s in enumerate(scales)])
