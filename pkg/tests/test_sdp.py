import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from ncgeom import sdp

seeds = st.integers(0, 2**32 - 1)


def _random_map(rng, m, p, q, complex_=True):
    T = rng.standard_normal((m, p, q))
    if complex_:
        T = T + 1j * rng.standard_normal((m, p, q))
    return sp.csc_matrix(T.reshape(m, -1).T)


def _brute_hessian(Tmap, shape, P, R, Q):
    m = Tmap.shape[1]
    Ts = [Tmap[:, j].toarray().reshape(shape) for j in range(m)]
    H = np.zeros((m, m))
    for j in range(m):
        M = P @ Ts[j] @ R + Q @ Ts[j].conj().T @ Q
        for k in range(m):
            H[j, k] = 2 * np.real(np.vdot(Ts[k], M))
    return H


@pytest.mark.parametrize("real", [False, True])
@pytest.mark.parametrize("dense", [False, True])
def test_hessian_paths_agree_with_brute_force(real, dense, rng):
    p, q, m = 5, 3, 7
    Tmap = _random_map(rng, m, p, q, complex_=not real)
    x = rng.standard_normal(m) * 0.05
    bar = sdp._Barrier((Tmap @ x).reshape(p, q))
    assert bar.feasible()
    P, R, Q = bar.PRQ()
    h = sdp._Hessian(Tmap, (p, q), real)
    h.dense = dense
    if dense and not hasattr(h, "Tstack"):
        T = Tmap.toarray().T.reshape(m, p, q)
        h.Tstack = np.ascontiguousarray(T.real if real else T)
    H = h(P, R, Q)
    ref = _brute_hessian(Tmap, (p, q), P.real if real else P, R.real if real else R, Q.real if real else Q)
    assert np.allclose(H, ref, atol=1e-10 * np.abs(ref).max())


@given(seeds)
def test_lmi_block_is_psd_with_nuclear_trace(seed):
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    Z = sdp.lmi_block(Y)
    assert np.linalg.eigvalsh(Z).min() >= -1e-12
    assert abs(np.trace(Z).real - np.linalg.svd(Y, compute_uv=False).sum()) <= 1e-10
    # off-diagonal block pairs with T to give -Re<T, Y>
    assert np.allclose(Z[:4, 4:], -Y / 2)


@given(seeds)
def test_bounds_bracket_and_certificate_revalidates(seed):
    rng = np.random.default_rng(seed)
    p, q, m = 4, 4, 5
    Tmap = _random_map(rng, m, p, q)
    c = rng.standard_normal(m)
    res = sdp.solve_norm_program(Tmap, (p, q), c, tol=1e-8)
    assert res.status == "certified"
    assert res.lower <= res.upper and res.gap <= 1e-8 * max(1, res.upper)
    x = res.x
    assert np.linalg.norm((Tmap @ x).reshape(p, q), 2) <= 1 + 1e-9
    up, resid = sdp.validate_certificate(Tmap, (p, q), c, res.Y)
    assert up >= res.lower - 1e-12 and abs(up - res.upper) <= 1e-9 * max(1, up)
    # weak duality against random feasible points
    for _ in range(20):
        z = rng.standard_normal(m)
        z /= np.linalg.norm((Tmap @ z).reshape(p, q), 2)
        assert c @ z <= up + 1e-12


def test_scalar_program_matches_closed_form():
    # max c x subject to |x| ||T|| <= 1
    T0 = np.diag([2.0, 1.0])
    Tmap = sp.csc_matrix(T0.reshape(-1, 1))
    res = sdp.solve_norm_program(Tmap, (2, 2), np.array([3.0]), tol=1e-10)
    assert abs(res.lower - 1.5) <= 1e-9 and abs(res.upper - 1.5) <= 1e-9


def test_kernel_directions_found():
    a = np.eye(2).reshape(-1)
    Tmap = sp.csc_matrix(np.stack([a, 2 * a, np.array([0, 1, 0, 0.0])], axis=1))
    K, smin = sdp.kernel_directions(Tmap)
    assert K.shape == (3, 1)
    assert np.linalg.norm(Tmap @ K[:, 0]) <= 1e-12
    assert smin > 0


def test_budget_exhaustion_is_reported(rng):
    Tmap = _random_map(rng, 6, 5, 5)
    res = sdp.solve_norm_program(Tmap, (5, 5), rng.standard_normal(6), tol=1e-12, max_iter=2)
    assert res.status == "budget_exhausted"
    assert res.lower <= res.upper


def test_zero_objective():
    Tmap = sp.csc_matrix(np.eye(4)[:, :2])
    res = sdp.solve_norm_program(Tmap, (2, 2), np.zeros(2))
    assert res.lower == 0 and res.status == "certified"
