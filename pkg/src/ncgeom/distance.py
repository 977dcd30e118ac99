"""Certified Connes spectral distance between states of a finite spectral triple.

    d(phi, phi') = sup { phi(a) - phi'(a) : a = a*, ||[D, a]|| <= 1 }

With a = sum_j x_j h_j over the Hermitian basis of the algebra this is
max c.x subject to ||T(x)|| <= 1, solved by :mod:`ncgeom.sdp`.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .algebra import State
from .errors import ArgumentError, DimensionError
from .linalg import operator_norm
from .sdp import kernel_directions, solve_norm_program, validate_certificate
from .triple import SpectralTriple, grading_split

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 500


@dataclass
class DistanceResult:
    lower: float
    upper: float
    status: str
    optimizer: np.ndarray = field(repr=False)
    iterations: int
    witness: np.ndarray | None = field(default=None, repr=False)
    certificate: np.ndarray | None = field(default=None, repr=False)
    constraint_norm: float = 0.0
    dual_residual: float = 0.0
    reduction: str = "full"

    @property
    def gap(self) -> float:
        if not np.isfinite(self.upper):
            return 0.0 if self.status == "infinite" else np.inf
        return self.upper - self.lower

    @property
    def value(self) -> float:
        """Midpoint of the certified interval."""
        if self.status == "infinite":
            return np.inf
        return 0.5 * (self.lower + self.upper)

    def brackets(self, v: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= v <= self.upper + slack

    def to_json(self) -> dict:
        return {
            "lower": _num(self.lower),
            "upper": _num(self.upper),
            "status": self.status,
            "iterations": int(self.iterations),
            "gap": _num(self.gap),
            "constraint_norm": float(self.constraint_norm),
        }


def _num(v):
    v = float(v)
    return v if np.isfinite(v) else ("inf" if v > 0 else "-inf")


def _comm_map(D: np.ndarray) -> sp.csr_matrix:
    # vec_r([D, X]) = (D (x) 1 - 1 (x) D^T) vec_r(X)
    n = D.shape[0]
    Ds = sp.csr_matrix(D)
    I = sp.identity(n, format="csr")
    return (sp.kron(Ds, I) - sp.kron(I, Ds.T)).tocsr()


def _even_map(T: SpectralTriple) -> tuple[sp.csr_matrix, tuple[int, int]]:
    # [D, a] has blocks D+ a+ - a- D+ and its adjoint; one block suffices
    Pp, Pm = grading_split(T)
    D = T.dirac
    tol = 1e-9 * max(1.0, operator_norm(D))
    if operator_norm(Pp.conj().T @ D @ Pp) > tol or operator_norm(Pm.conj().T @ D @ Pm) > tol:
        raise ArgumentError("Dirac operator is not off-diagonal for the grading")
    Dp = Pm.conj().T @ D @ Pp  # maps the +1 space to the -1 space
    npl, nmi = Pp.shape[1], Pm.shape[1]
    Pp_s, Pm_s = sp.csr_matrix(Pp), sp.csr_matrix(Pm)
    Dp_s = sp.csr_matrix(Dp)
    # vec_r(P* h P) = (P* (x) P^T) vec_r(h)
    Cp = sp.kron(Pp_s.conj().T, Pp_s.T)
    Cm = sp.kron(Pm_s.conj().T, Pm_s.T)
    L = sp.kron(Dp_s, sp.identity(npl)) @ Cp - sp.kron(sp.identity(nmi), Dp_s.T) @ Cm
    return L.tocsr(), (nmi, npl)


def _is_real(M) -> bool:
    M = M.data if sp.issparse(M) else np.asarray(M)
    return not np.any(np.imag(M))


def _build_problem(T: SpectralTriple, phi: State, phip: State, even: bool):
    A = T.algebra
    n = T.hilbert_dim
    if phi.dim != n or phip.dim != n:
        raise DimensionError(f"states on C^{phi.dim}, C^{phip.dim} but triple on C^{n}")
    Hs = A.hermitian_flat
    if even:
        L, shape = _even_map(T)
    else:
        L, shape = _comm_map(T.dirac), (n, n)
    delta = (phi.rho - phip.rho).T.reshape(-1)
    c_full = np.real(Hs.T @ delta)
    reduction = "full"
    cols = np.arange(Hs.shape[1])
    nr = A.n_real
    if 0 < nr < Hs.shape[1] and _is_real(L) and _is_real(phi.rho) and _is_real(phip.rho):
        # real data: conj(a) is feasible with the same value, so real a suffice
        cols = cols[:nr]
        reduction = "real"
    Hsub = Hs[:, cols]
    Tmap = (L @ Hsub).tocsc()
    Tmap.eliminate_zeros()
    return Tmap, shape, c_full[cols], Hsub, reduction, (L @ Hs).tocsc(), c_full


def _identity_coords(Hsub: sp.spmatrix, n: int) -> np.ndarray | None:
    e = np.eye(n).reshape(-1)
    coords = np.real(Hsub.conj().T @ e)
    back = Hsub @ coords
    if np.linalg.norm(back - e) > 1e-9 * np.sqrt(n):
        return None
    return coords / np.linalg.norm(coords)


def _solve(T, phi, phip, tol, max_iter, even) -> DistanceResult:
    if not tol > 0:
        raise ArgumentError("tol must be positive")
    n = T.hilbert_dim
    Tmap, shape, c, Hsub, reduction, Tfull, cfull = _build_problem(T, phi, phip, even)
    red = reduction + ("+even" if even else "")
    zero = np.zeros((n, n), dtype=complex)
    # the identity direction is a guaranteed kernel element with c.1 = 0
    if T.algebra.unital:
        e = _identity_coords(Hsub, n)
        if e is not None:
            c = c - (c @ e) * e
    K, smin_plus = kernel_directions(Tmap)
    if K.size:
        ck = K.T @ c
        if np.linalg.norm(ck) > tol:
            k = (Hsub @ (K @ ck)).reshape(n, n)
            k = 0.5 * (k + k.conj().T) / np.linalg.norm(ck)
            return DistanceResult(np.inf, np.inf, "infinite", zero, 0, witness=k, reduction=red)
        c = c - K @ ck
    res = solve_norm_program(Tmap, shape, c, kernel=K, smin_plus=smin_plus, tol=tol, max_iter=max_iter)
    a = (Hsub @ res.x).reshape(n, n)
    a = 0.5 * (a + a.conj().T)
    # lower bound is exactly phi(a) - phi'(a) of a feasible a
    cn = _constraint_norm(T, a, even)
    if cn > 1.0:
        a = a / cn
    lower = float(np.real(np.trace((phi.rho - phip.rho) @ a)))
    upper = res.upper
    if reduction == "real":
        # the certificate is re-validated against the complex problem
        upper_full, dres = validate_certificate(Tfull, shape, cfull - _ident_part(T, Tfull, cfull, n), res.Y, smin_plus)
        upper = max(upper, upper_full)
    else:
        dres = res.dual_residual
    upper = max(upper, lower)
    status = res.status
    if status == "certified" and upper - lower > tol * max(1.0, upper):
        status = "budget_exhausted"
    return DistanceResult(
        lower, upper, status, a, res.iterations, certificate=res.Y,
        constraint_norm=min(cn, 1.0), dual_residual=dres, reduction=red,
    )


def _ident_part(T, Tfull, cfull, n):
    # component of the full objective along the identity, which is projected out
    if not T.algebra.unital:
        return np.zeros_like(cfull)
    e = _identity_coords(T.algebra.hermitian_flat, n)
    if e is None:
        return np.zeros_like(cfull)
    return (cfull @ e) * e


def _constraint_norm(T: SpectralTriple, a: np.ndarray, even: bool) -> float:
    if even:
        Pp, Pm = grading_split(T)
        Dp = Pm.conj().T @ T.dirac @ Pp
        return operator_norm(Dp @ (Pp.conj().T @ a @ Pp) - (Pm.conj().T @ a @ Pm) @ Dp)
    return operator_norm(T.dirac @ a - a @ T.dirac)


def spectral_distance(
    T: SpectralTriple, phi: State, phip: State, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> DistanceResult:
    """Certified bounds on d_D(phi, phi') with the full constraint ||[D, a]|| <= 1."""
    return _solve(T, phi, phip, tol, max_iter, even=False)


def spectral_distance_even(
    T: SpectralTriple, phi: State, phip: State, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> DistanceResult:
    """Same as :func:`spectral_distance` for an even triple with off-diagonal D.

    For a = a* commuting with the grading, ||[D, a]|| equals the norm of the
    single block D+ a+ - a- D+, which halves the size of the constraint.
    """
    if T.grading is None:
        raise ArgumentError("spectral_distance_even needs a graded triple")
    return _solve(T, phi, phip, tol, max_iter, even=True)


def default_tol() -> float:
    v = os.environ.get("NCGEOM_TOL")
    return float(v) if v else DEFAULT_TOL


@dataclass
class DistanceMatrix:
    lower: np.ndarray
    upper: np.ndarray
    status: list
    labels: list

    @property
    def values(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)


def distance_matrix(
    T: SpectralTriple, states, tol: float = DEFAULT_TOL, even: bool = False, max_workers: int | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
) -> DistanceMatrix:
    """Pairwise certified distances; each unordered pair is solved once."""
    states = list(states)
    k = len(states)
    lo = np.zeros((k, k))
    up = np.zeros((k, k))
    status = [["certified"] * k for _ in range(k)]
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    fn = spectral_distance_even if even else spectral_distance

    def run(ij):
        i, j = ij
        return fn(T, states[i], states[j], tol, max_iter)

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers) as ex:
            results = list(ex.map(run, pairs))
    else:
        results = [run(ij) for ij in pairs]
    for (i, j), r in zip(pairs, results):
        lo[i, j] = lo[j, i] = r.lower
        up[i, j] = up[j, i] = r.upper
        status[i][j] = status[j][i] = r.status
    labels = [s.label if s.label is not None else f"s{i}" for i, s in enumerate(states)]
    return DistanceMatrix(lo, up, status, labels)


def diagonal_lower_bound(T: SpectralTriple, phi: State, phip: State, tol: float = DEFAULT_TOL):
    """Fast heuristic: optimize over diagonal Hermitian elements of the algebra only.

    The result is a valid lower bound on the distance (a feasible element),
    but not a certified value of the distance itself. Returns (bound, a).
    """
    A = T.algebra
    n = T.hilbert_dim
    H = A.hermitian_flat.tocsc()
    diag_idx = np.arange(n) * (n + 1)
    mask = np.ones(n * n, dtype=bool)
    mask[diag_idx] = False
    keep = [j for j in range(H.shape[1]) if not np.any(H[:, j].toarray().ravel()[mask])]
    if not keep:
        return 0.0, np.zeros((n, n), dtype=complex)
    Hd = H[:, keep]
    L = _comm_map(T.dirac)
    Tmap = (L @ Hd).tocsc()
    c = np.real(Hd.T @ (phi.rho - phip.rho).T.reshape(-1))
    K, smin = kernel_directions(Tmap)
    if K.size:
        ck = K.T @ c
        if np.linalg.norm(ck) > tol:
            return np.inf, np.zeros((n, n), dtype=complex)
        c = c - K @ ck
    res = solve_norm_program(Tmap, (n, n), c, kernel=K, smin_plus=smin, tol=tol)
    a = (Hd @ res.x).reshape(n, n)
    cn = operator_norm(T.dirac @ a - a @ T.dirac)
    if cn > 1:
        a = a / cn
    return float(np.real(np.trace((phi.rho - phip.rho) @ a))), a
