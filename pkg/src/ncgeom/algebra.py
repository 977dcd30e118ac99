"""Finite-dimensional *-algebras of operators and their states."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ArgumentError, DimensionError, DomainError
from .linalg import (
    SUBSPACE_RTOL,
    as_matrix,
    dag,
    herm,
    hs_norm,
    subspace_span,
)

CLOSURE_TOL = 1e-10
STATE_TOL = 1e-12
# above this many basis pairs the product-closure check samples pairs
_CLOSURE_PAIR_LIMIT = 4096


@dataclass(frozen=True, eq=False)
class MatrixAlgebra:
    """A *-closed span of operators on C^hilbert_dim, given by a basis.

    The basis is stored as a sparse (dim x n^2) matrix of row-major
    flattenings; ``basis`` materializes the dense (dim, n, n) stack on demand.

    ``blocks`` and ``frame`` optionally record the Wedderburn shape: in the
    orthonormal frame ``frame`` every element is ``block_diag(kron(1_m, a_b))``
    over ``blocks = ((n_b, m_b), ...)``. Constructors fill these in; algebras
    read from JSON leave them empty and the generic routines are used.
    """

    hilbert_dim: int
    basis_flat: sp.csr_matrix = field(repr=False)
    unital: bool
    blocks: tuple | None = None
    frame: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        n = self.hilbert_dim
        B = self.basis_flat
        if not sp.issparse(B):
            b = np.asarray(B, dtype=complex)
            if b.ndim == 2 and b.shape == (n, n):
                b = b[None]
            if b.ndim == 3:
                if b.shape[1:] != (n, n):
                    raise DimensionError(f"basis of shape {b.shape} on C^{n}")
                b = b.reshape(b.shape[0], -1)
            B = b
        B = sp.csr_matrix(B, dtype=complex)
        if B.shape[1] != n * n:
            raise DimensionError(f"basis rows of length {B.shape[1]} on C^{n}")
        object.__setattr__(self, "basis_flat", B)

    @property
    def dim(self) -> int:
        return self.basis_flat.shape[0]

    def __len__(self):
        return self.dim

    @cached_property
    def basis(self) -> np.ndarray:
        n = self.hilbert_dim
        b = self.basis_flat.toarray().reshape(-1, n, n)
        b.setflags(write=False)
        return b

    @cached_property
    def span(self):
        return subspace_span(self.basis)

    @property
    def structured(self) -> bool:
        return self.blocks is not None and self.unital

    def project(self, a) -> np.ndarray:
        """Orthogonal (HS) projection of an operator onto the algebra."""
        a = as_matrix(a)
        if a.shape != (self.hilbert_dim,) * 2:
            raise DimensionError(f"operator {a.shape} on C^{self.hilbert_dim}")
        if self.blocks is None:
            return self.span.project(a)
        F = self.frame
        b = dag(F) @ a @ F
        out = np.zeros_like(b)
        off = 0
        for nb, m in self.blocks:
            sz = nb * m
            blk = b[off:off + sz, off:off + sz].reshape(m, nb, m, nb)
            avg = np.einsum("cicj->ij", blk) / m
            out[off:off + sz, off:off + sz] = np.kron(np.eye(m), avg)
            off += sz
        return F @ out @ dag(F)

    def contains(self, a, tol: float = CLOSURE_TOL) -> tuple[bool, float]:
        a = as_matrix(a)
        r = hs_norm(a - self.project(a))
        return r <= tol * max(1.0, hs_norm(a)), r

    def element(self, coeffs) -> np.ndarray:
        c = np.asarray(coeffs, dtype=complex)
        n = self.hilbert_dim
        return (self.basis_flat.T @ c).reshape(n, n)

    def random_element(self, rng, hermitian=False) -> np.ndarray:
        c = rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim)
        a = self.element(c)
        return herm(a) if hermitian else a

    def closure_residuals(self, rng=None) -> dict:
        """Largest membership residuals for adjoints, products and the unit."""
        rng = np.random.default_rng(0) if rng is None else rng
        S = self.span
        basis = self.basis
        adj = max((S.residual(dag(b)) for b in basis), default=0.0)
        d = self.dim
        if d * d <= _CLOSURE_PAIR_LIMIT:
            pairs = [(i, j) for i in range(d) for j in range(d)]
        else:
            pairs = [tuple(p) for p in rng.integers(0, d, size=(_CLOSURE_PAIR_LIMIT, 2))]
        prod = 0.0
        for i, j in pairs:
            ab = basis[i] @ basis[j]
            prod = max(prod, S.residual(ab) / max(1.0, hs_norm(ab)))
        out = {"independence": float(d - S.rank), "adjoint": adj, "product": prod}
        if self.unital:
            out["unit"] = S.residual(np.eye(self.hilbert_dim))
        return out

    def validate(self, tol: float = CLOSURE_TOL):
        res = self.closure_residuals()
        bad = {k: v for k, v in res.items() if v > tol}
        if bad:
            raise DomainError(f"not a *-algebra with the declared basis: {bad}")
        return res

    @cached_property
    def hermitian_flat(self) -> sp.csc_matrix:
        """Sparse (n^2 x m) matrix whose columns are the Hermitian basis, flattened."""
        H = _structured_hermitian(self)
        if H is None:
            hb = _hermitian_basis(self)
            H = sp.csc_matrix(hb.reshape(len(hb), -1).T)
        return H

    @cached_property
    def hermitian_basis(self) -> np.ndarray:
        n = self.hilbert_dim
        H = self.hermitian_flat.toarray().T.reshape(-1, n, n)
        H.setflags(write=False)
        return H

    @cached_property
    def n_real(self) -> int:
        """Number of leading real-symmetric elements of the Hermitian basis."""
        H = self.hermitian_flat.tocsc()
        cnt = 0
        for j in range(H.shape[1]):
            col = H.data[H.indptr[j]:H.indptr[j + 1]]
            if np.any(col.imag != 0):
                break
            cnt += 1
        return cnt


def _orthonormal_real(cands: np.ndarray, rtol=SUBSPACE_RTOL) -> np.ndarray:
    # cands: (k, d) real vectors; Gram-Schmidt on a maximal independent subset
    # kept in construction order
    if cands.shape[0] == 0:
        return cands
    s = np.linalg.svd(cands, compute_uv=False)
    if s[0] == 0:
        return cands[:0]
    r = int(np.sum(s > rtol * s[0]))
    _, _, piv = sla.qr(cands.T, mode="economic", pivoting=True)
    keep = np.sort(piv[:r])
    Q, R = np.linalg.qr(cands[keep].T)
    Q = Q * np.sign(np.diag(R))[None, :]
    Q[np.abs(Q) < 1e-15] = 0.0
    return Q.T


def _hermitian_basis(A: MatrixAlgebra) -> np.ndarray:
    n = A.hilbert_dim
    herms = np.concatenate([herm(A.basis), herm(-1j * A.basis)])
    # h = re + i*im with re real-symmetric and i*im Hermitian on its own
    sym = _orthonormal_real(herms.real.reshape(len(herms), -1))
    asym = _orthonormal_real(herms.imag.reshape(len(herms), -1))
    out = np.concatenate([sym.astype(complex), 1j * asym]).reshape(-1, n, n)
    if len(out) == A.dim and all(A.contains(h)[0] for h in out):
        return out
    # not closed under entrywise conjugation: real-linear span of the herms
    hf = herms.reshape(len(herms), -1)
    flat = np.concatenate([hf.real, hf.imag], axis=1)
    Q = _orthonormal_real(flat)
    return (Q[:, : n * n] + 1j * Q[:, n * n:]).reshape(-1, n, n)


def hermitian_basis(A: MatrixAlgebra) -> np.ndarray:
    """Orthonormal real-linear basis of the self-adjoint part of ``A``.

    Real-symmetric elements come first when the algebra is closed under
    entrywise conjugation, which lets the distance solver drop the imaginary
    directions for real problems.
    """
    return A.hermitian_basis


def _matrix_units(n: int) -> sp.csr_matrix:
    return sp.identity(n * n, dtype=complex, format="csr")


def _structured_hermitian(A: MatrixAlgebra):
    # canonical sparse basis e_ii, (e_ij + e_ji)/sqrt2, i(e_ij - e_ji)/sqrt2 in
    # every block, pushed through a permutation frame; None if not applicable
    if not A.structured:
        return None
    F = A.frame
    if not (np.all((F == 0) | (F == 1)) and np.all(F.sum(axis=0) == 1)):
        return None
    n = A.hilbert_dim
    perm = np.argmax(F, axis=0)  # frame column c sits at H index perm[c]
    real_cols, imag_cols = [], []
    off = 0
    for nb, m in A.blocks:
        scale = 1.0 / np.sqrt(m)
        for i in range(nb):
            for j in range(i, nb):
                re_entries, im_entries = [], []
                for c in range(m):
                    r = perm[off + c * nb + i]
                    s = perm[off + c * nb + j]
                    if i == j:
                        re_entries.append((r * n + r, scale))
                    else:
                        w = scale / np.sqrt(2)
                        re_entries += [(r * n + s, w), (s * n + r, w)]
                        im_entries += [(r * n + s, -1j * w), (s * n + r, 1j * w)]
                real_cols.append(re_entries)
                if im_entries:
                    imag_cols.append(im_entries)
        off += nb * m
    cols = real_cols + imag_cols
    rows = [i for col in cols for i, _ in col]
    vals = [v for col in cols for _, v in col]
    idx = [k for k, col in enumerate(cols) for _ in col]
    return sp.csc_matrix((np.array(vals, dtype=complex), (rows, idx)), shape=(n * n, len(cols)))


def full_matrix_algebra(n: int) -> MatrixAlgebra:
    if n < 1:
        raise DimensionError("n must be at least 1")
    return MatrixAlgebra(n, _matrix_units(n), True, blocks=((n, 1),), frame=np.eye(n))


def diagonal_algebra(n: int) -> MatrixAlgebra:
    if n < 1:
        raise DimensionError("n must be at least 1")
    diag_idx = np.arange(n) * (n + 1)
    B = sp.csr_matrix((np.ones(n, dtype=complex), (np.arange(n), diag_idx)), shape=(n, n * n))
    return MatrixAlgebra(n, B, True, blocks=((1, 1),) * n, frame=np.eye(n))


def _embed_flat(B: sp.csr_matrix, d: int, n: int, offset: int) -> sp.csr_matrix:
    # re-index flattened d x d operators into the (offset, offset) block of n x n
    B = B.tocoo()
    r, c = np.divmod(B.col, d)
    cols = (r + offset) * n + (c + offset)
    return sp.csr_matrix((B.data, (B.row, cols)), shape=(B.shape[0], n * n))


def direct_sum(parts) -> MatrixAlgebra:
    parts = list(parts)
    if not parts:
        raise ArgumentError("direct_sum needs at least one summand")
    dims = [p.hilbert_dim for p in parts]
    n = sum(dims)
    offs = np.cumsum([0] + dims)
    B = sp.vstack([_embed_flat(p.basis_flat, d, n, o) for p, d, o in zip(parts, dims, offs)])
    blocks = frame = None
    if all(p.blocks is not None for p in parts):
        blocks = tuple(bl for p in parts for bl in p.blocks)
        frame = sla.block_diag(*[p.frame for p in parts])
    return MatrixAlgebra(n, B.tocsr(), all(p.unital for p in parts), blocks, frame)


def tensor_identity(A: MatrixAlgebra, k: int, side: str = "left") -> MatrixAlgebra:
    """The algebra {kron(1_k, a)} on C^k (x) C^n, or {kron(a, 1_k)} with ``side="right"``."""
    if k < 1:
        raise DimensionError("k must be at least 1")
    n = A.hilbert_dim
    N = k * n
    Bc = A.basis_flat.tocoo()
    r, c = np.divmod(Bc.col, n)
    rows, cols, vals = [], [], []
    for t in range(k):
        rows.append(Bc.row)
        cols.append((r + t * n) * N + (c + t * n))
        vals.append(Bc.data)
    B = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(A.dim, N * N)
    )
    blocks = frame = None
    if A.blocks is not None:
        # in A's frame, C^k (x) (+)_b C^{m_b} (x) C^{n_b}; regroup to (+)_b C^{k m_b} (x) C^{n_b}
        perm = []
        offs = np.cumsum([0] + [m * nb for nb, m in A.blocks])
        for bi, (nb, m) in enumerate(A.blocks):
            for t in range(k):
                for j in range(m * nb):
                    perm.append(t * n + offs[bi] + j)
        P = np.eye(N)[:, perm]
        frame = np.kron(np.eye(k), A.frame) @ P
        blocks = tuple((nb, k * m) for nb, m in A.blocks)
    out = MatrixAlgebra(N, B, A.unital, blocks, frame)
    if side == "left":
        return out
    if side != "right":
        raise ArgumentError(f"side must be 'left' or 'right', got {side!r}")
    # kron(a, 1_k) = S kron(1_k, a) S^T with S: |t, i> -> |i, t>
    perm = (np.arange(N) % n) * k + np.arange(N) // n
    S = sp.csr_matrix((np.ones(N), (perm, np.arange(N))), shape=(N, N))
    Bc = out.basis_flat.tocoo()
    r, c = np.divmod(Bc.col, N)
    Bs = sp.csr_matrix((Bc.data, (Bc.row, perm[r] * N + perm[c])), shape=Bc.shape)
    fr = None if out.frame is None else S @ out.frame
    return MatrixAlgebra(N, Bs, A.unital, out.blocks, fr)


def algebra_from_basis(basis, unital=None, validate=True) -> MatrixAlgebra:
    """Build an algebra from a user-supplied spanning set (checked for *-closure)."""
    b = np.asarray(basis, dtype=complex)
    if b.ndim == 2:
        b = b[None]
    if b.ndim != 3 or b.shape[1] != b.shape[2]:
        raise DimensionError(f"basis must be a list of square matrices, got {b.shape}")
    n = b.shape[1]
    S = subspace_span(b)
    if S.rank != b.shape[0]:
        raise DomainError(f"basis is linearly dependent (rank {S.rank} < {b.shape[0]})")
    has_unit = S.contains(np.eye(n))[0]
    if unital is None:
        unital = has_unit
    elif unital and not has_unit:
        raise DomainError("declared unital but the identity is not in the span")
    A = MatrixAlgebra(n, b, bool(unital))
    if validate:
        A.validate()
    return A


def algebra_to_json(A: MatrixAlgebra) -> dict:
    from .linalg import matrix_to_json

    return {
        "hilbert_dim": A.hilbert_dim,
        "unital": A.unital,
        "basis": [matrix_to_json(b) for b in A.basis],
    }


def algebra_from_json(obj) -> MatrixAlgebra:
    from .errors import ParseError
    from .linalg import matrix_from_json

    if isinstance(obj, dict) and "kind" in obj:
        # shorthand: {"kind": "full" | "diagonal", "n": n, "copies": k}
        try:
            kind, n, k = obj["kind"], int(obj["n"]), int(obj.get("copies", 1))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed algebra shorthand: {exc}") from exc
        makers = {"full": full_matrix_algebra, "diagonal": diagonal_algebra}
        if kind not in makers or n < 1 or k < 1:
            raise ParseError(f"unknown algebra kind {kind!r} or bad size")
        A = makers[kind](n)
        return tensor_identity(A, k) if k > 1 else A
    try:
        n = int(obj["hilbert_dim"])
        basis = [matrix_from_json(m) for m in obj["basis"]]
        unital = obj.get("unital")
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed algebra object: {exc}") from exc
    if any(b.shape != (n, n) for b in basis):
        raise DimensionError("basis matrices do not match hilbert_dim")
    return algebra_from_basis(basis, unital=unital)


@dataclass(frozen=True, eq=False)
class State:
    """A density matrix rho, acting as phi(a) = Tr(rho a)."""

    rho: np.ndarray
    label: str | None = None

    def __post_init__(self):
        rho = as_matrix(self.rho, square=True)
        if hs_norm(rho - dag(rho)) > 1e-10 * max(1.0, hs_norm(rho)):
            raise DomainError("density matrix is not Hermitian")
        rho = herm(rho)
        if abs(np.trace(rho).real - 1.0) > STATE_TOL * max(1, rho.shape[0]):
            raise DomainError(f"density matrix has trace {np.trace(rho).real}")
        if np.linalg.eigvalsh(rho)[0] < -STATE_TOL:
            raise DomainError("density matrix is not positive")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    def __call__(self, a) -> complex:
        return evaluate(self, a)


def vector_state(psi, label=None) -> State:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    nrm = np.linalg.norm(psi)
    if nrm == 0:
        raise ArgumentError("zero vector does not define a state")
    if abs(nrm - 1.0) > 1e-12:
        raise ArgumentError(f"state vector has norm {nrm}, expected 1")
    return State(np.outer(psi, psi.conj()), label)


def evaluate(phi: State, a) -> complex:
    a = as_matrix(a)
    if a.shape != phi.rho.shape:
        raise DimensionError(f"operator {a.shape} vs state on C^{phi.dim}")
    return complex(np.sum(phi.rho.T * a))


def state_to_json(phi: State) -> dict:
    from .linalg import matrix_to_json

    out = {"rho": matrix_to_json(phi.rho)}
    if phi.label is not None:
        out["label"] = phi.label
    return out


def state_from_json(obj) -> State:
    from .errors import ParseError
    from .linalg import matrix_from_json

    try:
        if "vector" in obj:
            v = obj["vector"]
            psi = (np.asarray(v["re"], dtype=float) + 1j * np.asarray(v.get("im", [0.0] * len(v["re"])), dtype=float)
                   if isinstance(v, dict) else np.asarray(v, dtype=float))
            psi = psi / np.linalg.norm(psi)
            return vector_state(psi, obj.get("label"))
        return State(matrix_from_json(obj["rho"]), obj.get("label"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed state object: {exc}") from exc
