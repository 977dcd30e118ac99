"""Certified solver for  max c.x  subject to  ||sum_j x_j T_j|| <= 1.

The operator-norm ball is the LMI [[I, T], [T*, I]] >= 0. We run a long-step
log-det barrier method on -log det(I - T*T), evaluating every barrier
quantity through the SVD of T so that nothing degrades as ||T|| -> 1.

Every iterate yields a dual candidate Y = (2/t) T (I - T*T)^{-1}. It is moved
onto the affine set {Re<T_j, Y> = c_j} by a least-squares correction inside
span{T_j}, and then ||Y||_* is an upper bound on the optimum: for feasible x,
c.x = Re<T(x), Y> <= ||T(x)|| ||Y||_* <= ||Y||_*.

The maps are given as a sparse (p*q, m) matrix whose column j is the
row-major flattening of T_j. Coordinates x along the kernel of x -> T(x) must
have zero objective; callers detect and remove them first (see
:func:`kernel_directions`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import logging

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

KERNEL_RTOL = 1e-9
# stop at a fraction of the requested gap so that the reported gap has slack
_GAP_SAFETY = 0.5

log = logging.getLogger(__name__)
_DENSE_KERNEL_LIMIT = 1500
_HESS_CHUNK_BYTES = 64 * 2**20
# measured: kron/sparse products run far below GEMM speed, so their flop
# count is weighted before comparing with the dense path
_KRON_WEIGHT = 64


@dataclass
class NormProgramResult:
    x: np.ndarray
    lower: float
    upper: float
    Y: np.ndarray = field(repr=False)
    status: str
    iterations: int
    norm_Tx: float
    dual_residual: float

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    def lmi_certificate(self) -> np.ndarray:
        """Dual PSD block Z for [[I, T], [T*, I]] >= 0 with trace ||Y||_*."""
        return lmi_block(self.Y)


def lmi_block(Y: np.ndarray) -> np.ndarray:
    U, s, Vh = np.linalg.svd(Y, full_matrices=False)
    G = np.vstack([U, -Vh.conj().T]) * np.sqrt(s / 2)[None, :]
    return G @ G.conj().T


def apply_map(Tmap: sp.spmatrix, x: np.ndarray, shape) -> np.ndarray:
    return (Tmap @ x).reshape(shape)


def adjoint_map(Tmap: sp.spmatrix, Y: np.ndarray) -> np.ndarray:
    """Re<T_j, Y> for every j."""
    return np.real(Tmap.conj().T @ Y.reshape(-1))


def kernel_directions(Tmap: sp.spmatrix, rtol: float = KERNEL_RTOL):
    """Orthonormal basis (columns) of the real kernel of x -> T(x).

    Returns (K, smin_plus): kernel directions are right singular vectors with
    singular value <= rtol * largest; smin_plus is the smallest singular value
    kept, used to bound ||x|| on the complement. For large m the candidates
    come from the Gram eigenvectors and are refined by an SVD restricted to them.
    """
    m = Tmap.shape[1]
    if m == 0:
        return np.zeros((0, 0)), np.inf
    if m <= _DENSE_KERNEL_LIMIT:
        M = Tmap.toarray()
        R = np.vstack([M.real, M.imag])
        _, s, Vt = np.linalg.svd(R, full_matrices=R.shape[0] < m)
        s = np.concatenate([s, np.zeros(m - s.size)])
        if s[0] == 0:
            return np.eye(m), np.inf
        keep = s > rtol * s[0]
        return Vt[~keep].T, float(s[keep][-1])
    G = np.real((Tmap.conj().T @ Tmap).toarray())
    w, V = sla.eigh(G)
    lmax = w[-1]
    if lmax <= 0:
        return np.eye(m), np.inf
    cand = w <= 1e-10 * lmax
    smin_plus = float(np.sqrt(w[~cand][0]))
    Vc = V[:, cand]
    if Vc.shape[1] == 0:
        return Vc, smin_plus
    B = Tmap @ Vc
    R = np.vstack([B.real, B.imag])
    _, s, Vt = np.linalg.svd(R, full_matrices=R.shape[0] < Vc.shape[1])
    s = np.concatenate([s, np.zeros(Vc.shape[1] - s.size)])
    smax = np.sqrt(lmax)
    ker = s <= rtol * smax
    if np.any(~ker):
        smin_plus = min(smin_plus, float(s[~ker][-1]))
    return Vc @ Vt[ker].T, smin_plus


class _Barrier:
    """Quantities of -log det(I - T*T) at a point, from the SVD of T (p >= q)."""

    def __init__(self, T: np.ndarray):
        U, s, Vh = np.linalg.svd(T, full_matrices=True)
        self.T = T
        self.U, self.s, self.V = U, s, Vh.conj().T
        one_m = (1 - s) * (1 + s)
        self.inv = 1.0 / one_m
        self.value = -np.sum(np.log(one_m))

    def feasible(self) -> bool:
        return bool(self.s.size == 0 or self.s[0] < 1.0)

    def grad_matrix(self) -> np.ndarray:
        # gradient in direction T_j is 2 Re<T W, T_j>, W = (I - T*T)^{-1}
        q = self.V.shape[0]
        Us = self.U[:, :q]
        return (Us * (self.s * self.inv)[None, :]) @ self.V.conj().T

    def PRQ(self):
        q = self.V.shape[0]
        p = self.U.shape[0]
        dP = np.ones(p)
        dP[:q] = self.inv
        P = (self.U * dP[None, :]) @ self.U.conj().T
        R = (self.V * self.inv[None, :]) @ self.V.conj().T
        Q = -(self.U[:, :q] * (self.s * self.inv)[None, :]) @ self.V.conj().T
        return P, R, Q


class _Hessian:
    """H_jk = 2 Re <T_k, P T_j R + Q T_j* Q>, the barrier Hessian.

    With B the (pq, m) matrix of flattened T_j, the map X -> P X R + Q X* Q
    is (P (x) R^T) on vec(X) plus (Q (x) Q^T) on vec(X*). Rows of these
    Kronecker factors are generated in chunks, so memory stays bounded.
    """

    def __init__(self, Tmap: sp.csc_matrix, shape, real: bool):
        p, q = shape
        self.shape = shape
        self.m = Tmap.shape[1]
        self.real = real
        B = Tmap.tocsr()
        if real:
            B = sp.csr_matrix(B.real)
        self.B = B
        self.BH = B.conj().T.tocsr()
        dense_cost = self.m * (p * p * q + p * q * q) * 2 + self.m * self.m * p * q
        kron_cost = 2 * B.nnz * p * q + 2 * p * p * q * q + B.nnz * self.m
        self.dense = dense_cost < _KRON_WEIGHT * kron_cost
        if self.dense:
            T = Tmap.toarray().T.reshape(self.m, p, q)
            self.Tstack = np.ascontiguousarray(T.real if real else T)

    def __call__(self, P, R, Q) -> np.ndarray:
        p, q = self.shape
        if self.real:
            P, R, Q = (np.ascontiguousarray(X.real) for X in (P, R, Q))
        if self.dense:
            T = self.Tstack
            m = self.m
            # 2-d GEMMs only; batched matmul on strided stacks is far slower
            TR = (T.reshape(m * p, q) @ R).reshape(m, p, q)
            M = (P @ TR.transpose(1, 0, 2).reshape(p, m * q)).reshape(p, m, q).transpose(1, 0, 2)
            Ts = np.ascontiguousarray(np.conj(np.swapaxes(T, 1, 2)))  # (m, q, p)
            TQ = (Ts.reshape(m * q, p) @ Q).reshape(m, q, q)
            M = M + (Q @ TQ.transpose(1, 0, 2).reshape(q, m * q)).reshape(p, m, q).transpose(1, 0, 2)
            H = np.real(T.reshape(m, -1).conj() @ M.reshape(m, -1).T)
            return H + H.T
        B = self.B
        item = 8 if self.real else 16
        rows_per = max(1, _HESS_CHUNK_BYTES // (2 * item * p * q * q))
        Rt = R.T
        Bc = B.conj() if not self.real else B
        # permutation so that (Q (x) Q^T) acts on vec(X*): X*[c, d] = conj X[d, c]
        perm = np.arange(p * q).reshape(p, q).T.reshape(-1)
        Bstar = Bc[perm]  # rows indexed by (c, d) of the q x p matrix X*
        H = np.zeros((self.m, self.m))
        for a0 in range(0, p, rows_per):
            a1 = min(p, a0 + rows_per)
            rows = slice(a0 * q, a1 * q)
            K1 = np.kron(P[a0:a1], Rt)  # rows (a, b), cols (c, d) of X (p x q)
            K2 = np.kron(Q[a0:a1], Q.T)  # rows (a, b), cols (c, d) of X* (q x p)
            MK = (B.T @ K1.T).T + (Bstar.T @ K2.T).T  # (chunk, m)
            H += np.real(self.BH[:, rows] @ MK)
        return H + H.T


def solve_norm_program(
    Tmap: sp.spmatrix,
    shape: tuple[int, int],
    c: np.ndarray,
    *,
    kernel: np.ndarray | None = None,
    smin_plus: float | None = None,
    tol: float = 1e-7,
    max_iter: int = 500,
    mu: float = 8.0,
) -> NormProgramResult:
    """Maximize c.x subject to ||T(x)|| <= 1 with certified bounds.

    ``kernel`` (m x k, orthonormal columns) spans directions with T(x) = 0;
    ``c`` must be orthogonal to it. The returned ``upper`` includes the slack
    from the residual of the dual equality constraints.
    """
    Tmap = sp.csc_matrix(Tmap)
    p, q = shape
    m = Tmap.shape[1]
    c = np.asarray(c, dtype=float)
    if kernel is None:
        kernel, smin_plus = kernel_directions(Tmap)
    transposed = q > p
    if transposed:
        # work with T_j* so the SVD-side dimension q is the small one
        C = Tmap.tocoo()
        a, b = np.divmod(C.row, q)
        Tmap = sp.csc_matrix((np.conj(C.data), (b * p + a, C.col)), shape=Tmap.shape)
        p, q = q, p
    real = not np.any(Tmap.data.imag)
    hess = _Hessian(Tmap, (p, q), real)
    KK = kernel @ kernel.T if kernel.size else np.zeros((m, m))

    G = np.real((Tmap.conj().T @ Tmap).toarray())
    Gf = sla.cho_factor(G + KK + 1e-300 * np.eye(m))

    def certify(Y):
        r = c - adjoint_map(Tmap, Y)
        y = sla.cho_solve(Gf, r)
        Y = Y + (Tmap @ y).reshape(p, q)
        res = float(np.linalg.norm(c - adjoint_map(Tmap, Y)))
        slack = res * np.sqrt(q) / smin_plus if res > 0 and np.isfinite(smin_plus) else res
        return Y, float(np.sum(np.linalg.svd(Y, compute_uv=False))) + slack, res

    def lower_of(x):
        nrm = float(np.linalg.norm((Tmap @ x).reshape(p, q), 2)) if m else 0.0
        return float(c @ x) / max(1.0, nrm), nrm

    cn = np.linalg.norm(c)
    x = np.zeros(m)
    if cn == 0 or m == 0:
        Y0 = np.zeros((p, q), dtype=complex)
        Y0, up, res = certify(Y0)
        return _finish(x, 0.0, up, Y0, "certified", 0, 0.0, res, transposed)

    # initial t makes the first Newton step from 0 roughly unit length
    z = sla.cho_solve(Gf, c)
    t = 1.0 / np.sqrt(max(c @ z / 2, 1e-300))
    best_low, best_x, best_nrm = 0.0, x.copy(), 0.0
    best_up, best_Y, best_res = np.inf, None, np.inf
    status = "budget_exhausted"
    it = 0
    bar = _Barrier((Tmap @ x).reshape(p, q))
    while it < max_iter:
        it += 1
        gm = bar.grad_matrix()
        g = -t * c + 2 * adjoint_map(Tmap, gm)
        P, R, Q = bar.PRQ()
        H = hess(P, R, Q)
        try:
            dx = -sla.cho_solve(sla.cho_factor(H + KK), g)
        except np.linalg.LinAlgError:
            w, V = sla.eigh(H + KK)
            w = np.maximum(w, 1e-14 * max(w[-1], 1e-300))
            dx = -(V @ ((V.T @ g) / w))
        lam2 = float(-g @ dx)
        # dual estimates: the current point, and its linearization along the
        # Newton step, which satisfies T*(Y) = c exactly by the Newton equation
        Dl = (Tmap @ dx).reshape(p, q)
        for Y0 in ((2.0 / t) * gm, (2.0 / t) * (gm + P @ Dl @ R + Q @ Dl.conj().T @ Q)):
            Y, up, res = certify(Y0)
            if up < best_up:
                best_up, best_Y, best_res = up, Y, res
        low, nrm = lower_of(x)
        if low > best_low or best_x is None:
            best_low, best_x, best_nrm = low, x.copy(), nrm
        log.debug("it=%d t=%.3g lam2=%.3g low=%.10f up=%.10f res=%.2g", it, t, lam2, best_low, best_up, res)
        if best_up - best_low <= _GAP_SAFETY * tol * max(1.0, best_up):
            status = "certified"
            break
        # backtracking line search on t c.x - log det, staying strictly inside
        f0 = -t * (c @ x) + bar.value
        s = 1.0 if lam2 < 0.25 else 1.0 / (1.0 + np.sqrt(lam2))
        while True:
            xn = x + s * dx
            bn = _Barrier((Tmap @ xn).reshape(p, q))
            if bn.feasible() and -t * (c @ xn) + bn.value <= f0 - 0.25 * s * lam2:
                break
            s *= 0.5
            if s < 1e-12:
                bn = None
                break
        if bn is None:
            # no progress at this t: the current point is as centered as it gets
            t *= mu
            continue
        x, bar = xn, bn
        if lam2 < 0.5:
            t *= mu
    if status != "certified":
        low, nrm = lower_of(x)
        if low > best_low:
            best_low, best_x, best_nrm = low, x.copy(), nrm
        if best_up - best_low <= tol * max(1.0, best_up):
            status = "certified"
    if kernel.size:
        best_x = best_x - kernel @ (kernel.T @ best_x)
    return _finish(best_x, best_low, best_up, best_Y, status, it, best_nrm, best_res, transposed)


def _finish(x, low, up, Y, status, it, nrm, res, transposed):
    if transposed:
        Y = Y.conj().T
    return NormProgramResult(x, low, max(up, low), Y, status, it, nrm, res)


def validate_certificate(Tmap: sp.spmatrix, shape, c, Y, smin_plus=None) -> tuple[float, float]:
    """Recompute the bound a dual matrix Y certifies, independent of the solver.

    Returns (upper_bound, equality_residual). The bound includes the slack
    ||r|| sqrt(q) / smin_plus for the residual r of Re<T_j, Y> = c_j, which is
    valid for feasible x orthogonal to the kernel.
    """
    Y = np.asarray(Y, dtype=complex).reshape(shape)
    r = np.asarray(c, dtype=float) - adjoint_map(sp.csc_matrix(Tmap), Y)
    res = float(np.linalg.norm(r))
    if smin_plus is None:
        _, smin_plus = kernel_directions(Tmap)
    q = min(shape)
    slack = res * np.sqrt(q) / smin_plus if res > 0 and np.isfinite(smin_plus) else res
    return float(np.sum(np.linalg.svd(Y, compute_uv=False))) + slack, res
