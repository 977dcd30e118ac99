"""Dense complex linear algebra used throughout the package.

Matrices are plain ``numpy.ndarray`` objects with complex dtype. The only
structured value defined here is :class:`OperatorSubspace`, an orthonormal
Hilbert-Schmidt basis of a linear span of operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError

SUBSPACE_RTOL = 1e-9
HERM_TOL = 1e-8


def as_matrix(M, square=False) -> np.ndarray:
    """Return ``M`` as a 2-d complex array, optionally insisting on a square shape."""
    A = np.asarray(M, dtype=complex)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2:
        raise DimensionError(f"expected a matrix, got array of shape {A.shape}")
    if square and A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    return A


def dag(M: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(M, -1, -2))


def herm(M: np.ndarray) -> np.ndarray:
    """Hermitian part (M + M*)/2."""
    return 0.5 * (M + dag(M))


def comm(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B - B @ A


def anticomm(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B + B @ A


def kron(*ops) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def hs_inner(A: np.ndarray, B: np.ndarray) -> complex:
    """Hilbert-Schmidt inner product Tr(A* B)."""
    return complex(np.vdot(A, B))


def hs_norm(M: np.ndarray) -> float:
    return float(np.linalg.norm(M))


def operator_norm(M) -> float:
    """Largest singular value."""
    A = np.asarray(M, dtype=complex)
    if A.size == 0:
        return 0.0
    if A.ndim != 2:
        raise DimensionError(f"expected a matrix, got array of shape {A.shape}")
    return float(np.linalg.norm(A, 2))


def is_hermitian(M: np.ndarray, tol: float = HERM_TOL) -> bool:
    return hs_norm(M - dag(M)) <= tol * max(1.0, hs_norm(M))


def herm_eig(M) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix, symmetrized first.

    Returns ascending eigenvalues and a unitary ``U`` with ``M = U diag(w) U*``.
    """
    A = as_matrix(M, square=True)
    w, U = sla.eigh(herm(A))
    return w, U


def residual(A: np.ndarray, B: np.ndarray) -> float:
    """Operator-norm distance, the residual used in validation reports."""
    return operator_norm(np.asarray(A) - np.asarray(B))


def unitarity_residual(U: np.ndarray) -> float:
    U = as_matrix(U)
    r = operator_norm(dag(U) @ U - np.eye(U.shape[1]))
    if U.shape[0] == U.shape[1]:
        r = max(r, operator_norm(U @ dag(U) - np.eye(U.shape[0])))
    return r


@dataclass(frozen=True)
class OperatorSubspace:
    """A linear subspace of operators on C^n with an orthonormal HS basis.

    ``basis`` has shape ``(rank, rows, cols)``.
    """

    shape: tuple[int, int]
    basis: np.ndarray
    tolerance: float = SUBSPACE_RTOL
    _flat: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=complex).reshape(-1, *self.shape)
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)
        flat = b.reshape(b.shape[0], self.shape[0] * self.shape[1])
        flat.setflags(write=False)
        object.__setattr__(self, "_flat", flat)

    @property
    def rank(self) -> int:
        return self.basis.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.shape[0] * self.shape[1]

    def __len__(self):
        return self.rank

    def coefficients(self, M) -> np.ndarray:
        M = as_matrix(M)
        if M.shape != self.shape:
            raise DimensionError(f"matrix of shape {M.shape} vs subspace of {self.shape}")
        return self._flat.conj() @ M.reshape(-1)

    def project(self, M) -> np.ndarray:
        return (self.coefficients(M) @ self._flat).reshape(self.shape)

    def residual(self, M) -> float:
        M = as_matrix(M)
        return hs_norm(M - self.project(M))

    def contains(self, M) -> tuple[bool, float]:
        return subspace_contains(self, M)

    def contains_subspace(self, other: "OperatorSubspace") -> float:
        """Largest HS residual of ``other``'s basis after projecting onto ``self``."""
        if other.rank == 0:
            return 0.0
        C = other._flat @ self._flat.conj().T
        R = other._flat - C @ self._flat
        return float(np.max(np.linalg.norm(R, axis=1)))

    def orthonormality_residual(self) -> float:
        G = self._flat.conj() @ self._flat.T
        return float(np.max(np.abs(G - np.eye(self.rank)), initial=0.0))


def _span_rank(flat: np.ndarray, rel_tol: float) -> int:
    s = np.linalg.svd(flat, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def _ordered_basis(flat: np.ndarray, rank: int) -> np.ndarray:
    # pick `rank` well-conditioned spanners by pivoted QR, then orthonormalize
    # them in construction order
    if rank == 0:
        return np.zeros((0, flat.shape[1]), dtype=complex)
    _, _, piv = sla.qr(flat.T, mode="economic", pivoting=True)
    keep = np.sort(piv[:rank])
    Q, _ = np.linalg.qr(flat[keep].T)
    return Q.T


def subspace_span(spanners, rel_tol: float = SUBSPACE_RTOL, shape=None) -> OperatorSubspace:
    """Orthonormal HS basis of the linear span of ``spanners``.

    Rank is decided by singular values above ``rel_tol`` times the largest.
    The basis is Gram-Schmidt on a maximal well-conditioned subset of the
    spanners taken in their original order.
    """
    mats = [as_matrix(s) for s in spanners] if not isinstance(spanners, np.ndarray) else None
    if mats is not None:
        if not mats:
            if shape is None:
                raise DimensionError("empty spanner list needs an explicit shape")
            return OperatorSubspace(tuple(shape), np.zeros((0, *shape), dtype=complex))
        shp = mats[0].shape
        if any(m.shape != shp for m in mats):
            raise DimensionError("spanners must share dimensions")
        stack = np.stack(mats)
    else:
        stack = np.asarray(spanners, dtype=complex)
        if stack.ndim == 2:
            stack = stack[None]
        shp = stack.shape[1:]
    flat = stack.reshape(stack.shape[0], -1)
    rank = _span_rank(flat, rel_tol)
    return OperatorSubspace(tuple(shp), _ordered_basis(flat, rank), tolerance=rel_tol)


def subspace_from_orthonormal(basis: np.ndarray, tolerance: float = SUBSPACE_RTOL) -> OperatorSubspace:
    basis = np.asarray(basis, dtype=complex)
    return OperatorSubspace(tuple(basis.shape[1:]), basis, tolerance=tolerance)


def subspace_contains(S: OperatorSubspace, M) -> tuple[bool, float]:
    """Membership test: residual ``||M - P_S M||_HS`` against ``tol * max(1, ||M||_HS)``."""
    M = as_matrix(M)
    r = S.residual(M)
    return r <= S.tolerance * max(1.0, hs_norm(M)), r


def null_space_real(A: np.ndarray, rel_tol: float = SUBSPACE_RTOL) -> tuple[np.ndarray, np.ndarray]:
    """Real null space of a complex-linear map given on real coordinates.

    ``A`` has shape (rows, m) with complex entries; the map x -> A x is taken
    over real x. Returns (kernel basis as columns, singular values).
    """
    R = np.vstack([A.real, A.imag])
    _, s, Vt = np.linalg.svd(R, full_matrices=True)
    if s.size == 0 or s[0] == 0.0:
        return np.eye(A.shape[1]), s
    rank = int(np.sum(s > rel_tol * s[0]))
    return Vt[rank:].T, s


# JSON serialization, shared by every module and the CLI

def matrix_to_json(M) -> dict:
    A = as_matrix(M)
    return {
        "rows": int(A.shape[0]),
        "cols": int(A.shape[1]),
        "re": [float(x) for x in A.real.reshape(-1)],
        "im": [float(x) for x in A.imag.reshape(-1)],
    }


def matrix_from_json(obj) -> np.ndarray:
    """Read {rows, cols, re, im}, or a nested list of real numbers."""
    from .errors import ParseError

    if isinstance(obj, list):
        try:
            A = np.asarray(obj, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"malformed matrix list: {exc}") from exc
        if A.ndim != 2:
            raise ParseError(f"matrix list must be 2-d, got {A.ndim}-d")
        return A.astype(complex)
    try:
        rows, cols = int(obj["rows"]), int(obj["cols"])
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", [0.0] * (rows * cols)), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed matrix object: {exc}") from exc
    if re.size != rows * cols or im.size != rows * cols:
        raise ParseError(f"matrix entry count {re.size}/{im.size} does not match {rows}x{cols}")
    return (re + 1j * im).reshape(rows, cols)
