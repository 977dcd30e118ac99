"""The gauge category of a fixed pair (A, H).

Objects are Dirac operators on H; a morphism D -> D' is a Hermitian one-form
omega in Omega^1_D(A) with D' = D + omega. Hom-sets are empty or a single
point, so every question here reduces to subspace membership.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import MatrixAlgebra
from .errors import ArgumentError, CompositionError, DimensionError
from .linalg import (
    SUBSPACE_RTOL,
    as_matrix,
    hs_norm,
    is_hermitian,
    operator_norm,
    subspace_span,
)
from .report import ValidationReport
from .triple import OneFormSpace, SpectralTriple, omega1

ENDPOINT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GaugeMorphism:
    source: np.ndarray = field(repr=False)
    target: np.ndarray = field(repr=False)
    omega: np.ndarray = field(repr=False)
    algebra: MatrixAlgebra = field(repr=False)

    def check(self, tol: float = SUBSPACE_RTOL) -> ValidationReport:
        rep = ValidationReport()
        rep.add("omega_hermitian", hs_norm(self.omega - self.omega.conj().T), tol * max(1.0, hs_norm(self.omega)))
        rep.add("endpoints", hs_norm(self.target - self.source - self.omega), ENDPOINT_TOL)
        S = _omega1(self.algebra, self.source)
        rep.add("omega_in_omega1", S.space.residual(self.omega), tol * max(1.0, hs_norm(self.omega)))
        return rep


def _hermitian(M, name: str) -> np.ndarray:
    M = as_matrix(M, square=True)
    if not is_hermitian(M):
        raise ArgumentError(f"{name} is not Hermitian")
    return 0.5 * (M + M.conj().T)


def _omega1(A: MatrixAlgebra, D) -> OneFormSpace:
    return omega1(SpectralTriple(A, D))


def mor(A: MatrixAlgebra, D, Dp, tol: float = SUBSPACE_RTOL, graded=None) -> GaugeMorphism | None:
    """The unique morphism D -> D', or None when D' - D is not a one-form of D.

    With ``graded`` set to a grading, both objects must anticommute with it.
    """
    D = _hermitian(D, "D")
    Dp = _hermitian(Dp, "D'")
    if D.shape != Dp.shape or D.shape[0] != A.hilbert_dim:
        raise DimensionError(f"Dirac operators of shapes {D.shape}, {Dp.shape} on C^{A.hilbert_dim}")
    if graded is not None:
        g = as_matrix(graded)
        for name, X in (("D", D), ("D'", Dp)):
            if operator_norm(g @ X + X @ g) > ENDPOINT_TOL * max(1.0, operator_norm(X)):
                raise ArgumentError(f"{name} does not anticommute with the grading")
    omega = Dp - D
    S = _omega1(A, D)
    ok, _ = S.contains(omega) if S.rank else (not np.any(np.abs(omega) > tol), 0.0)
    if not ok:
        return None
    return GaugeMorphism(D, Dp, omega, A)


def identity(A: MatrixAlgebra, D) -> GaugeMorphism:
    D = _hermitian(D, "D")
    return GaugeMorphism(D, D, np.zeros_like(D), A)


def compose(f: GaugeMorphism, g: GaugeMorphism, tol: float = ENDPOINT_TOL) -> GaugeMorphism:
    """g after f, with omega = f.omega + g.omega."""
    if f.source.shape != g.source.shape or hs_norm(f.target - g.source) > tol:
        raise CompositionError("target of the first morphism is not the source of the second")
    h = GaugeMorphism(f.source, g.target, f.omega + g.omega, f.algebra)
    S = _omega1(f.algebra, f.source)
    if not S.contains(h.omega)[0] and S.rank:
        raise CompositionError("composite one-form left Omega^1 of the source")
    return h


def is_isomorphism(f: GaugeMorphism, tol: float = SUBSPACE_RTOL) -> bool:
    """True iff Omega^1 at source and target coincide (equal rank, mutual containment)."""
    S = _omega1(f.algebra, f.source).space
    Sp = _omega1(f.algebra, f.target).space
    if S.rank != Sp.rank:
        return False
    return S.contains_subspace(Sp) <= tol and Sp.contains_subspace(S) <= tol


def admissible_perturbations(n: int, grading=None) -> np.ndarray:
    """Basis of Hermitian n x n matrices, or of those anticommuting with ``grading``."""
    out = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n), dtype=complex)
            E[i, j] = E[j, i] = 1.0
            out.append(E)
            if i != j:
                F = np.zeros((n, n), dtype=complex)
                F[i, j], F[j, i] = -1j, 1j
                out.append(F)
    out = np.array(out)
    if grading is not None:
        g = as_matrix(grading)
        out = 0.5 * (out - g @ out @ g)
        S = subspace_span(out, shape=(n, n)) if len(out) else None
        return S.basis if S is not None else out[:0]
    return out


def is_initial(A: MatrixAlgebra, D, grading=None, tol: float = SUBSPACE_RTOL) -> bool:
    """True iff every admissible Hermitian perturbation is a one-form of D."""
    D = _hermitian(D, "D")
    n = D.shape[0]
    if grading is not None and operator_norm(grading @ D + D @ grading) > ENDPOINT_TOL * max(1.0, operator_norm(D)):
        raise ArgumentError("D does not anticommute with the grading")
    S = omega1(SpectralTriple(A, D, grading) if grading is not None and np.any(D) else SpectralTriple(A, D))
    targets = admissible_perturbations(n, grading)
    if S.rank == 0:
        return len(targets) == 0
    return all(S.space.residual(P) <= tol * max(1.0, hs_norm(P)) for P in targets)


@dataclass
class FinalObjectWitness:
    """Pair (D1, D2) = (1, 0) showing that no object is final."""

    D1: np.ndarray
    D2: np.ndarray
    report: ValidationReport

    def __iter__(self):
        return iter((self.D1, self.D2))


def no_final_object_witness(A: MatrixAlgebra, hilbert_dim: int | None = None) -> FinalObjectWitness:
    """Witness that the category has no final object.

    Omega^1 of the identity is zero, so the identity only maps to itself and
    Mor(1, 0) is empty; Omega^1 of 0 is zero, so Mor(0, 1) is empty too. A
    final object F would need a morphism from both 1 and 0; the first forces
    F = 1 and the second then fails.
    """
    n = A.hilbert_dim if hilbert_dim is None else int(hilbert_dim)
    if n < 1 or n != A.hilbert_dim:
        raise DimensionError(f"hilbert_dim {hilbert_dim} does not match the algebra on C^{A.hilbert_dim}")
    one = np.eye(n, dtype=complex)
    zero = np.zeros((n, n), dtype=complex)
    rep = ValidationReport()
    rep.add("omega1_of_identity_is_zero", omega1(SpectralTriple(A, one)).rank, passed=omega1(SpectralTriple(A, one)).rank == 0)
    rep.add("mor(1,0)_empty", 0.0, passed=mor(A, one, zero) is None)
    rep.add("mor(0,1)_empty", 0.0, passed=mor(A, zero, one) is None)
    return FinalObjectWitness(one, zero, rep)


@dataclass(frozen=True, eq=False)
class GaugeCategory:
    """The category for a fixed (A, H); ``graded`` restricts objects to odd D."""

    algebra: MatrixAlgebra
    grading: np.ndarray | None = None
    graded: bool = False

    def __post_init__(self):
        if self.graded and self.grading is None:
            raise ArgumentError("graded category needs a grading")

    @property
    def hilbert_dim(self) -> int:
        return self.algebra.hilbert_dim

    def _g(self):
        return self.grading if self.graded else None

    def mor(self, D, Dp):
        return mor(self.algebra, D, Dp, graded=self._g())

    def identity(self, D):
        return identity(self.algebra, D)

    def compose(self, f, g):
        return compose(f, g)

    def is_isomorphism(self, f):
        return is_isomorphism(f)

    def is_initial(self, D):
        return is_initial(self.algebra, D, self._g())

    def no_final_object_witness(self):
        return no_final_object_witness(self.algebra)
