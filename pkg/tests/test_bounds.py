from math import log, sqrt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gnl.bounds import (
    ConvergenceError, assemble, samplecov_bound, sigma_params, sigma_star, v_frob,
    v_frob_dense, w_proxy,
)
from gnl.model import ModelError, build_model, gen_named, selfadjoint_dilation


def grid_sigma_star(A, step=1e-3):
    """Brute force over both unit circles (d = 2)."""
    t = np.arange(0.0, np.pi, step)
    U = np.stack([np.cos(t), np.sin(t)], axis=1)
    f = np.zeros((len(t), len(t)))
    for a in A:
        f += (U @ a @ U.T) ** 2
    return sqrt(f.max())


def random_model(seed, n, dr, dc):
    g = np.random.default_rng(seed)
    return build_model(list(g.standard_normal((n, dr, dc))))


def orthogonal_model(seed, n, d):
    g = np.random.default_rng(seed)
    q, _ = np.linalg.qr(g.standard_normal((d * d, n)))
    scales = g.uniform(0.2, 3.0, n)
    return build_model([s * q[:, k].reshape(d, d) for k, s in enumerate(scales)]), scales


# -- sigma parameters ------------------------------------------------------------------


@pytest.mark.parametrize("name,d,expected", [
    ("iid", 9, (3.0, 3.0)),
    ("diagonal", 7, (1.0, 1.0)),
    ("circulant", 16, (4.0, 4.0)),
])
def test_sigma_params_examples(name, d, expected):
    assert sigma_params(gen_named(name, d=d)) == pytest.approx(expected, rel=1e-12)


def test_sigma_params_rectangular():
    m = random_model(0, 3, 2, 4)
    A = m.dense()
    col = np.linalg.eigvalsh(sum(a.T @ a for a in A))[-1]
    row = np.linalg.eigvalsh(sum(a @ a.T for a in A))[-1]
    assert sigma_params(m) == pytest.approx((sqrt(col), sqrt(row)), rel=1e-12)


# -- v_frob ------------------------------------------------------------------------------


def test_v_frob_subspace():
    assert v_frob(gen_named("subspace", d=6, dim=20, seed=2)) == pytest.approx(1.0, rel=1e-10)


def test_v_frob_single():
    A = np.random.default_rng(3).standard_normal((4, 3))
    assert v_frob(build_model([A])) == pytest.approx(np.linalg.norm(A), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 6), st.integers(2, 4))
def test_v_frob_orthogonal_family(seed, n, d):
    n = min(n, d * d)
    m, scales = orthogonal_model(seed, n, d)
    assert m.orthogonal_family
    assert v_frob(m) == pytest.approx(scales.max(), rel=1e-8)


@pytest.mark.parametrize("seed,n,d", [(0, 3, 2), (1, 5, 4), (2, 12, 6), (3, 20, 8), (4, 2, 8)])
def test_v_frob_power_matches_dense(seed, n, d):
    m = random_model(seed, n, d, d)
    assert v_frob(m) == pytest.approx(v_frob_dense(m), rel=1e-8)


def test_v_frob_dense_cap():
    with pytest.raises(ModelError):
        v_frob_dense(gen_named("iid", d=9))


def test_v_frob_nonconvergence_reports_trace():
    m = random_model(7, 10, 5, 5)
    with pytest.raises(ConvergenceError) as exc:
        v_frob(m, max_iter=2)
    assert len(exc.value.trace) == 2


# -- sigma_star --------------------------------------------------------------------------


def test_sigma_star_iid():
    r = sigma_star(gen_named("iid", d=10), restarts=4)
    assert r.value == pytest.approx(1.0, rel=1e-10)
    assert r.converged and r.restarts == 4


def test_sigma_star_single():
    A = np.random.default_rng(1).standard_normal((5, 3))
    assert sigma_star(build_model([A]), restarts=4).value == pytest.approx(
        np.linalg.norm(A, 2), rel=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_sigma_star_grid_oracle(seed):
    m = random_model(seed, 2 + seed % 3, 2, 2)
    assert sigma_star(m).value == pytest.approx(grid_sigma_star(m.dense()), abs=1e-4)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 6), st.integers(1, 4), st.integers(1, 4))
def test_sigma_star_upper_bounds(seed, n, dr, dc):
    m = random_model(seed, n, dr, dc)
    ss = sigma_star(m, restarts=4, seed=seed).value
    sc, sr = sigma_params(m)
    vf = v_frob(m)
    assert ss <= vf * (1 + 1e-6)
    assert ss <= sc * (1 + 1e-6)
    assert ss <= sr * (1 + 1e-6)


def test_sigma_star_threads_identical():
    m = random_model(4, 6, 5, 5)
    a = sigma_star(m, restarts=8, seed=3, threads=1)
    b = sigma_star(m, restarts=8, seed=3, threads=4)
    assert a.value == b.value and a.best_restart == b.best_restart


# -- proxy and assembled shapes ----------------------------------------------------------


def test_w_proxy_examples():
    assert w_proxy(build_model([[[1.0]]])) == pytest.approx(2.0)
    assert w_proxy(gen_named("diagonal", d=6)) == pytest.approx(2.0)
    d = 10
    # the dilation doubles squared Frobenius norms but sum A_k^2 stays d I
    assert w_proxy(gen_named("iid", d=d)) == pytest.approx(2 * 2**0.25 * d**0.25, rel=1e-12)


def test_assemble_iid():
    r = assemble(gen_named("iid", d=100), 0.1, restarts=4)
    assert r.sigma_col == pytest.approx(10.0) and r.v_frob == pytest.approx(1.0)
    assert r.main_bound_shape == pytest.approx(20 + 100**0.1, rel=1e-9)
    assert r.main_bound_shape == pytest.approx(21.5849, abs=1e-4)
    assert r.nck_upper_shape == pytest.approx(sqrt(log(100)) * 20)


def test_assemble_diagonal():
    d = 32
    r = assemble(gen_named("diagonal", d=d), 0.1, restarts=4)
    assert r.nck_lower == pytest.approx(2.0)
    assert r.conjecture_shape == pytest.approx(2 + sqrt(log(d)), rel=1e-9)


def test_assemble_identity_single():
    d, eps = 16, 0.25
    r = assemble(build_model([np.eye(d)]), eps, restarts=2)
    assert r.main_bound_shape == pytest.approx(2 + d**eps * sqrt(d), rel=1e-9)


def test_assemble_degenerate_dimension():
    r = assemble(build_model([[[2.0]]]), 0.5, restarts=2)
    assert r.nck_upper_shape == pytest.approx(r.nck_lower)


@pytest.mark.parametrize("eps", [0.0, -0.1, 1.5])
def test_assemble_eps_range(eps):
    with pytest.raises(ValueError):
        assemble(gen_named("iid", d=2), eps)


def test_assemble_nonnegative_and_ordered():
    for name, kw in [("toeplitz", {"d": 8}), ("subspace", {"d": 5, "dim": 9, "seed": 1}),
                     ("block", {"d": 3, "r": 2, "seed": 4})]:
        r = assemble(gen_named(name, kw), 0.1, restarts=8)
        for key, val in r.to_dict().items():
            if isinstance(val, float):
                assert val >= 0, key
        assert r.sigma_star <= min(r.v_frob, r.sigma_col) * (1 + 1e-6)


@pytest.mark.parametrize("c", [0.5, 3.0, 17.25])
def test_scaling_equivariance(c):
    m = random_model(2, 5, 4, 4)
    base = assemble(m, 0.1, restarts=6).to_dict()
    scaled = assemble(m.scaled(c), 0.1, restarts=6).to_dict()
    for key, val in base.items():
        if key in ("epsilon", "d", "n", "sigma_star_restarts", "sigma_star_converged"):
            assert scaled[key] == val
        else:
            assert scaled[key] == pytest.approx(c * val, rel=1e-12), key


def test_with_epsilon_matches_assemble():
    m = gen_named("toeplitz", d=6)
    a = assemble(m, 0.05, restarts=4).with_epsilon(0.25)
    b = assemble(m, 0.25, restarts=4)
    assert a.to_dict() == b.to_dict()


# -- sample covariance bound -------------------------------------------------------------


def test_samplecov_bound_iid():
    d, eps = 8, 0.1
    assert samplecov_bound([gen_named("iid", d=d)], eps) == pytest.approx(
        sqrt(d**2 + d**2 + d**eps), rel=1e-12)


def test_samplecov_bound_homogeneity():
    m = random_model(1, 4, 3, 3)
    single = samplecov_bound([m])
    assert samplecov_bound([m] * 5) == pytest.approx(sqrt(5) * single, rel=1e-12)


def test_samplecov_bound_errors():
    with pytest.raises(ValueError):
        samplecov_bound([])
    with pytest.raises(ModelError):
        samplecov_bound([gen_named("iid", d=2), gen_named("iid", d=3)])
