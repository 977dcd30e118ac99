"""Spectral triples, the differential d_D, one-forms, and the Wigner doubling."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .algebra import MatrixAlgebra, algebra_from_json, algebra_to_json
from .errors import ArgumentError, DimensionError, DomainError, ParseError
from .linalg import (
    SUBSPACE_RTOL,
    OperatorSubspace,
    anticomm,
    as_matrix,
    comm,
    dag,
    herm,
    hs_norm,
    matrix_from_json,
    matrix_to_json,
    operator_norm,
    subspace_from_orthonormal,
    subspace_span,
)
from .report import ValidationReport

AXIOM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SpectralTriple:
    """(A, H, D, gamma) with H = C^n implicit in the algebra."""

    algebra: MatrixAlgebra
    dirac: np.ndarray
    grading: np.ndarray | None = None

    def __post_init__(self):
        n = self.algebra.hilbert_dim
        D = as_matrix(self.dirac, square=True)
        if D.shape[0] != n:
            raise DimensionError(f"Dirac operator on C^{D.shape[0]} but algebra on C^{n}")
        if hs_norm(D - dag(D)) > AXIOM_TOL * max(1.0, hs_norm(D)):
            raise ArgumentError("Dirac operator is not Hermitian")
        D = herm(D)
        D.setflags(write=False)
        object.__setattr__(self, "dirac", D)
        if self.grading is not None:
            g = as_matrix(self.grading, square=True)
            if g.shape[0] != n:
                raise DimensionError(f"grading on C^{g.shape[0]} but algebra on C^{n}")
            if hs_norm(D) > 0 and (np.allclose(g, np.eye(n)) or np.allclose(g, -np.eye(n))):
                raise ArgumentError("degenerate grading (+-identity) forces D = 0")
            g = g.copy()
            g.setflags(write=False)
            object.__setattr__(self, "grading", g)

    @property
    def hilbert_dim(self) -> int:
        return self.algebra.hilbert_dim

    @property
    def is_even(self) -> bool:
        return self.grading is not None

    def with_dirac(self, D) -> "SpectralTriple":
        return SpectralTriple(self.algebra, D, self.grading)

    @cached_property
    def one_forms(self) -> "OneFormSpace":
        return omega1(self)


def check_axioms(T: SpectralTriple, tol: float = AXIOM_TOL) -> ValidationReport:
    rep = ValidationReport()
    A, D = T.algebra, T.dirac
    scale = max(1.0, operator_norm(D))
    rep.add("dirac_hermitian", operator_norm(D - dag(D)) / scale, tol)
    for name, r in A.closure_residuals().items():
        rep.add(f"algebra_{name}", r, tol)
    # boundedness of [D, a] is automatic in finite dimension: informational
    cmax = max((operator_norm(comm(D, b)) for b in A.basis[:64]), default=0.0)
    rep.add("bounded_commutators", cmax, passed=True, info=True)
    if T.grading is not None:
        g = T.grading
        n = T.hilbert_dim
        rep.add("grading_hermitian", operator_norm(g - dag(g)), tol)
        rep.add("grading_involution", operator_norm(g @ g - np.eye(n)), tol)
        gc = max((operator_norm(comm(g, b)) / max(1.0, operator_norm(b)) for b in A.basis), default=0.0)
        rep.add("grading_commutes_algebra", gc, tol)
        rep.add("grading_anticommutes_dirac", operator_norm(anticomm(g, D)) / scale, tol)
    return rep


def differential(T: SpectralTriple, a) -> np.ndarray:
    """d_D a = [D, a] for a in the algebra."""
    a = as_matrix(a)
    ok, r = T.algebra.contains(a)
    if not ok:
        raise DomainError(f"operand not in the algebra (residual {r:.2e})")
    return comm(T.dirac, a)


@dataclass(frozen=True, eq=False)
class OneFormSpace:
    space: OperatorSubspace
    source: SpectralTriple = field(repr=False)
    method: str = "generators"

    @property
    def rank(self) -> int:
        return self.space.rank

    def contains(self, M) -> tuple[bool, float]:
        return self.space.contains(M)

    def generator_residual(self, max_generators: int = 4096, rng=None) -> float:
        """Largest residual of generators a[D,b] against the space (sampled if many)."""
        A = self.source.algebra
        D = self.source.dirac
        d = A.dim
        if d * d <= max_generators:
            pairs = [(i, j) for i in range(d) for j in range(d)]
        else:
            rng = np.random.default_rng(0) if rng is None else rng
            pairs = rng.integers(0, d, size=(max_generators, 2))
        B = A.basis if d * d <= max_generators else None
        worst = 0.0
        for i, j in pairs:
            bi = B[i] if B is not None else A.basis_flat[i].toarray().reshape(D.shape)
            bj = B[j] if B is not None else A.basis_flat[j].toarray().reshape(D.shape)
            g = bi @ comm(D, bj)
            worst = max(worst, self.space.residual(g) / max(1.0, hs_norm(g)))
        return worst


def _commutators(T: SpectralTriple):
    D = T.dirac
    n = T.hilbert_dim
    B = T.algebra.basis_flat
    Ds = sp.csr_matrix(D)
    for k in range(B.shape[0]):
        b = sp.csr_matrix(B[k].reshape(n, n))
        yield np.asarray((Ds @ b - b @ Ds).todense())


def _omega1_generators(T: SpectralTriple, rel_tol: float) -> OperatorSubspace:
    n = T.hilbert_dim
    S0 = subspace_span(list(_commutators(T)), rel_tol, shape=(n, n))
    if S0.rank == 0:
        return S0
    basis = T.algebra.basis
    gens = np.einsum("iab,jbc->ijac", basis, S0.basis).reshape(-1, n, n)
    return subspace_span(gens, rel_tol)


def _omega1_structured(T: SpectralTriple, rel_tol: float) -> OperatorSubspace:
    # Omega^1 is the A-bimodule generated by the commutators [D, b_j]; in the
    # Wedderburn frame it is (+)_{b,c} V_bc (x) M_{n_b x n_c}
    A = T.algebra
    F = A.frame
    blocks = A.blocks
    offs = np.cumsum([0] + [nb * m for nb, m in blocks])
    R = {}
    for s in _commutators(T):
        st = dag(F) @ s @ F
        for bi, (nb, mb) in enumerate(blocks):
            for ci, (nc, mc) in enumerate(blocks):
                blk = st[offs[bi]:offs[bi + 1], offs[ci]:offs[ci + 1]]
                vecs = blk.reshape(mb, nb, mc, nc).transpose(1, 3, 0, 2).reshape(nb * nc, mb * mc)
                prev = R.get((bi, ci))
                stack = vecs if prev is None else np.vstack([prev, vecs])
                R[(bi, ci)] = np.linalg.qr(stack, mode="r") if stack.shape[0] > mb * mc else stack
    smax = max((np.linalg.svd(r, compute_uv=False)[0] for r in R.values() if r.size), default=0.0)
    n = T.hilbert_dim
    out = []
    if smax == 0.0:
        return subspace_from_orthonormal(np.zeros((0, n, n)), rel_tol)
    for bi, (nb, mb) in enumerate(blocks):
        for ci, (nc, mc) in enumerate(blocks):
            r = R[(bi, ci)]
            _, s, Vh = np.linalg.svd(r, full_matrices=False)
            V = Vh[s > rel_tol * smax]  # orthonormal rows spanning the row space V_bc
            for v in V:
                vm = v.reshape(mb, mc)
                for i in range(nb):
                    for j in range(nc):
                        e = np.zeros((nb, nc))
                        e[i, j] = 1.0
                        full = np.zeros((n, n), dtype=complex)
                        full[offs[bi]:offs[bi + 1], offs[ci]:offs[ci + 1]] = np.kron(vm, e)
                        out.append(F @ full @ dag(F))
    return subspace_from_orthonormal(np.array(out).reshape(-1, n, n), rel_tol)


def omega1(T: SpectralTriple, method: str = "auto", rel_tol: float = SUBSPACE_RTOL) -> OneFormSpace:
    """Omega^1_D(A) = span{a [D, b]} as an operator subspace.

    ``method="generators"`` spans the products b_i [D, b_j] directly;
    ``"structured"`` uses the block shape of a unital algebra built by the
    constructors in :mod:`ncgeom.algebra` and is exact and fast.
    """
    if method == "auto":
        method = "structured" if T.algebra.structured else "generators"
    if method == "structured":
        if not T.algebra.structured:
            raise ArgumentError("structured one-forms need a unital algebra with known blocks")
        S = _omega1_structured(T, rel_tol)
    elif method == "generators":
        S = _omega1_generators(T, rel_tol)
    else:
        raise ArgumentError(f"unknown method {method!r}")
    return OneFormSpace(S, T, method)


def unitary_equivalent(T: SpectralTriple, Tp: SpectralTriple, U, tol: float = AXIOM_TOL) -> ValidationReport:
    U = as_matrix(U)
    rep = ValidationReport()
    if U.shape != (Tp.hilbert_dim, T.hilbert_dim):
        rep.add("dimensions", float("inf"), passed=False)
        return rep
    n = T.hilbert_dim
    rep.add("unitary", operator_norm(dag(U) @ U - np.eye(n)), tol)
    scale = max(1.0, operator_norm(T.dirac))
    rep.add("intertwines_dirac", operator_norm(U @ T.dirac - Tp.dirac @ U) / scale, tol)
    into = max((Tp.algebra.contains(U @ b @ dag(U))[1] / max(1.0, hs_norm(b)) for b in T.algebra.basis), default=0.0)
    rep.add("algebra_into", into, tol)
    rep.add("algebra_dims", abs(T.algebra.dim - Tp.algebra.dim), passed=T.algebra.dim == Tp.algebra.dim)
    if T.grading is not None or Tp.grading is not None:
        if T.grading is None or Tp.grading is None:
            rep.add("grading", float("inf"), passed=False)
        else:
            rep.add("intertwines_grading", operator_norm(U @ T.grading - Tp.grading @ U), tol)
    return rep


def grading_split(T: SpectralTriple, tol: float = AXIOM_TOL):
    """Isometries P+ and P- onto the +1/-1 eigenspaces of the grading.

    For a diagonal grading these are coordinate selections.
    """
    g = T.grading
    if g is None:
        raise ArgumentError("triple is not graded")
    d = np.diag(g)
    n = T.hilbert_dim
    if hs_norm(g - np.diag(d)) == 0 and np.all(np.abs(np.abs(d) - 1) < tol):
        I = np.eye(n)
        return I[:, d.real > 0], I[:, d.real < 0]
    w, V = sla.eigh(herm(g))
    return V[:, w > 0], V[:, w < 0]


def wigner_double(T: SpectralTriple, mode: str = "auto") -> SpectralTriple:
    """Doubling on Hilbert-Schmidt operators, with D acting by commutator.

    ``mode="full"`` builds H (x) H* (dimension n^2) with D (x) 1 - 1 (x) D^T,
    algebra a (x) 1 and, for even T, grading gamma (x) gamma^T.
    ``mode="even"`` applies to even triples whose algebra acts as
    diag(a0, a0) on H0 (+) H0 in the grading eigenbasis: it doubles only H0,
    giving C^2 (x) L2(H0) (dimension 2 n0^2) with Dirac [[0, [D-, .]], [[D+, .], 0]]
    and grading diag(1, -1) (x) 1. ``"auto"`` picks "even" when it applies.
    Row-major flattening is used throughout: vec(a X b) = (a (x) b^T) vec(X).
    """
    if mode == "auto":
        mode = "even" if _even_doubling_data(T) is not None else "full"
    from .algebra import algebra_from_basis, tensor_identity

    if mode == "full":
        n = T.hilbert_dim
        D = T.dirac
        I = np.eye(n)
        DD = np.kron(D, I) - np.kron(I, D.T)
        AD = tensor_identity(T.algebra, n, side="right")
        g = None if T.grading is None else np.kron(T.grading, T.grading.T)
        return SpectralTriple(AD, DD, g)
    if mode == "even":
        data = _even_doubling_data(T)
        if data is None:
            raise ArgumentError("even doubling needs a graded triple with algebra diag(a0, a0)")
        A0, Dp, Dm = data
        n0 = Dp.shape[0]
        I = np.eye(n0)
        Dplus = np.kron(Dp, I) - np.kron(I, Dp.T)
        Dminus = np.kron(Dm, I) - np.kron(I, Dm.T)
        Z = np.zeros_like(Dplus)
        DD = np.block([[Z, Dminus], [Dplus, Z]])
        AD = tensor_identity(tensor_identity(A0, n0, side="right"), 2)
        g = np.kron(np.diag([1.0, -1.0]), np.eye(n0 * n0))
        return SpectralTriple(AD, DD, g)
    raise ArgumentError(f"unknown doubling mode {mode!r}")


def wigner_state(T: SpectralTriple, phi, mode: str = "auto"):
    """The state on ``wigner_double(T, mode)`` that restricts to ``phi`` on the algebra.

    It is the vector state of vec(sqrt(rho)), since Tr(X* a X) = Tr(a X X*).
    In even mode rho is first folded onto H0 as rho++ + rho--.
    """
    from .algebra import State

    if mode == "auto":
        mode = "even" if _even_doubling_data(T) is not None else "full"
    rho = phi.rho
    if mode == "even":
        Pp, Pm = grading_split(T)
        rho = dag(Pp) @ rho @ Pp + dag(Pm) @ rho @ Pm
    w, V = sla.eigh(herm(rho))
    X = (V * np.sqrt(np.clip(w, 0.0, None))) @ dag(V)
    x = X.reshape(-1)
    R = np.outer(x, x.conj())
    if mode == "even":
        R = np.kron(np.eye(2) / 2, R)
    return State(R / np.trace(R).real, phi.label)


def _even_doubling_data(T: SpectralTriple, tol: float = AXIOM_TOL):
    if T.grading is None:
        return None
    Pp, Pm = grading_split(T)
    if Pp.shape[1] != Pm.shape[1]:
        return None
    D = T.dirac
    if operator_norm(dag(Pp) @ D @ Pp) > tol or operator_norm(dag(Pm) @ D @ Pm) > tol:
        return None
    return _half_algebra(T.algebra, Pp, Pm, tol), dag(Pm) @ D @ Pp, dag(Pp) @ D @ Pm


def _half_algebra(A: MatrixAlgebra, Pp, Pm, tol):
    # A acting as diag(a0, a0) on the grading halves: return the algebra of a0
    from .algebra import algebra_from_basis, full_matrix_algebra

    n = A.hilbert_dim
    n0 = Pp.shape[1]
    I = np.eye(n)
    if n == 2 * n0 and np.array_equal(Pp, I[:, :n0]) and np.array_equal(Pm, I[:, n0:]):
        # diagonal grading diag(1, -1) (x) 1: compare the two diagonal blocks sparsely
        B = A.basis_flat.tocoo()
        r, c = np.divmod(B.col, n)
        top = (r < n0) & (c < n0)
        bot = (r >= n0) & (c >= n0)
        if not np.all(top | bot):
            return None
        sub = sp.csr_matrix((B.data[top], (B.row[top], r[top] * n0 + c[top])), shape=(A.dim, n0 * n0))
        low = sp.csr_matrix((B.data[bot], (B.row[bot], (r[bot] - n0) * n0 + c[bot] - n0)), shape=(A.dim, n0 * n0))
        if abs(sub - low).max() > tol:
            return None
        if sub.nnz == n0 * n0 and abs(sub - sp.identity(n0 * n0)).max() == 0:
            return full_matrix_algebra(n0)
        return algebra_from_basis(sub.toarray().reshape(-1, n0, n0), validate=False)
    a0 = []
    for b in A.basis:
        bp = dag(Pp) @ b @ Pp
        bm = dag(Pm) @ b @ Pm
        if operator_norm(bp - bm) > tol * max(1.0, operator_norm(b)):
            return None
        a0.append(bp)
    return algebra_from_basis(np.array(a0), validate=False)


def triple_to_json(T: SpectralTriple) -> dict:
    out = {"algebra": algebra_to_json(T.algebra), "dirac": matrix_to_json(T.dirac)}
    if T.grading is not None:
        out["grading"] = matrix_to_json(T.grading)
    return out


def triple_from_json(obj) -> SpectralTriple:
    try:
        A = algebra_from_json(obj["algebra"])
        D = matrix_from_json(obj["dirac"])
        g = matrix_from_json(obj["grading"]) if obj.get("grading") is not None else None
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed triple object: {exc}") from exc
    return SpectralTriple(A, D, g)
