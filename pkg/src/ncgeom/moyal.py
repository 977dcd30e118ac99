"""Truncated Moyal plane: the harmonic-oscillator spectral triple cut at size N.

Layout: the Hilbert space is C^2 (x) C^N with the spinor index outermost, the
algebra is M_N acting as kron(1_2, a), and

    D = sqrt(2/theta) [[0, a], [a^dag, 0]],    gamma = diag(1_N, -1_N),

where a is the truncated annihilation operator. The same formula at size n is
the finite triple (M_n, C^n (x) C^2, D_n) with X_n = a^dag truncated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from scipy.special import gammainc

from .algebra import State, full_matrix_algebra, tensor_identity
from .connections import Connection, Correspondence, RectBimodule, compose_correspondences, identity_correspondence
from .errors import ArgumentError, DomainError, TruncationError
from .linalg import herm_eig, operator_norm
from .report import ValidationReport
from .triple import SpectralTriple

TAIL_TOL = 1e-12


def interior_size(N: int) -> int:
    """Number of basis states treated as free of truncation effects."""
    return N - max(4, N // 4)


def ladder(N: int) -> np.ndarray:
    """Truncated annihilation operator: a|n> = sqrt(n)|n-1>."""
    return np.diag(np.sqrt(np.arange(1, N, dtype=float)), 1)


def dirac_matrix(N: int, theta: float) -> np.ndarray:
    a = ladder(N)
    Z = np.zeros((N, N))
    return np.sqrt(2.0 / theta) * np.block([[Z, a], [a.T, Z]]).astype(complex)


@dataclass(frozen=True, eq=False)
class MoyalTruncation:
    N: int
    theta: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ArgumentError(f"truncation size must be an integer >= 2, got {self.N}")
        if not self.theta > 0:
            raise ArgumentError(f"theta must be positive, got {self.theta}")

    @cached_property
    def a(self) -> np.ndarray:
        return ladder(self.N)

    @cached_property
    def adag(self) -> np.ndarray:
        return self.a.T.copy()

    @cached_property
    def dirac(self) -> np.ndarray:
        return dirac_matrix(self.N, self.theta)

    @cached_property
    def grading(self) -> np.ndarray:
        return np.diag(np.r_[np.ones(self.N), -np.ones(self.N)]).astype(complex)

    @cached_property
    def triple(self) -> SpectralTriple:
        return SpectralTriple(tensor_identity(full_matrix_algebra(self.N), 2), self.dirac, self.grading)

    def embed(self, a) -> np.ndarray:
        """M_N -> operators on C^2 (x) C^N."""
        return np.kron(np.eye(2), a)

    @property
    def interior(self) -> int:
        return interior_size(self.N)

    def check(self) -> ValidationReport:
        a, ad = self.a, self.adag
        n = np.arange(self.N)
        m = self.N - 1
        rep = ValidationReport()
        rep.add("number_operator", np.max(np.abs(ad @ a - np.diag(n))), 1e-13 * self.N)
        ccr = a @ ad - ad @ a
        rep.add("ccr_interior", np.max(np.abs(ccr[:m, :m] - np.eye(m))), 1e-12)
        D2 = self.dirac @ self.dirac
        blk = (2.0 / self.theta) * sla.block_diag(a @ ad, ad @ a)
        rep.add("dirac_square_blocks", np.max(np.abs(D2 - blk)), 1e-12 * max(1.0, np.abs(blk).max()))
        from .triple import check_axioms

        rep.extend(check_axioms(self.triple), "axioms.")
        return rep


def truncation(N: int, theta: float = 1.0) -> MoyalTruncation:
    return MoyalTruncation(int(N), float(theta))


def finite_triple(n: int, theta: float = 1.0) -> SpectralTriple:
    """(M_n (x) 1_2, C^2 (x) C^n, D_n, gamma_n)."""
    return truncation(n, theta).triple


def spectrum(M: MoyalTruncation) -> np.ndarray:
    """Ascending eigenvalues of D^2."""
    return herm_eig(M.dirac @ M.dirac)[0]


# ---------------------------------------------------------------- states and operators


def _proj_state(M: MoyalTruncation, v: np.ndarray, label=None) -> State:
    P = np.outer(v, v.conj())
    return State(np.kron(np.eye(2) / 2.0, P), label)


def eigenstate(M: MoyalTruncation, m: int) -> State:
    """Psi_m(a) = a_mm."""
    if not 0 <= m < M.N:
        raise DomainError(f"eigenstate index {m} outside 0..{M.N - 1}")
    e = np.zeros(M.N, dtype=complex)
    e[m] = 1.0
    return _proj_state(M, e, f"psi{m}")


def _tail_mass(x: float, N: int) -> float:
    # Poisson(x) mass on {N, N+1, ...}
    return float(gammainc(N, x)) if x > 0 else 0.0


def suggested_size(z: complex, theta: float, tol: float = TAIL_TOL) -> int:
    x = abs(z) ** 2 / (2.0 * theta)
    N = 2
    while _tail_mass(x, N) > tol:
        N *= 2
    lo = N // 2
    while lo + 1 < N:
        mid = (lo + N) // 2
        if _tail_mass(x, mid) > tol:
            lo = mid
        else:
            N = mid
    return N


def coherent_vector(M: MoyalTruncation, z: complex, tol: float = TAIL_TOL) -> np.ndarray:
    """|z> = exp(-|z|^2/4 theta) sum (z/sqrt(2 theta))^n / sqrt(n!) |n>, truncated and renormalized."""
    w = complex(z) / np.sqrt(2.0 * M.theta)
    tail = _tail_mass(abs(w) ** 2, M.N)
    if tail > tol:
        Ns = suggested_size(z, M.theta, tol)
        raise TruncationError(f"coherent state tail mass {tail:.2e} beyond N={M.N}; use N >= {Ns}", Ns)
    c = np.empty(M.N, dtype=complex)
    c[0] = np.exp(-abs(w) ** 2 / 2.0)
    for n in range(1, M.N):
        c[n] = c[n - 1] * w / np.sqrt(n)
    return c / np.linalg.norm(c)


def coherent_state(M: MoyalTruncation, z: complex) -> State:
    return _proj_state(M, coherent_vector(M, z), f"z={complex(z):g}")


def translation(M: MoyalTruncation, z: complex) -> np.ndarray:
    """T(z) = exp((z a^dag - conj(z) a) / sqrt(2 theta)) on C^N."""
    z = complex(z)
    G = (z * M.adag - np.conj(z) * M.a) / np.sqrt(2.0 * M.theta)
    return sla.expm(G)


def rotation(M: MoyalTruncation, tau: complex) -> np.ndarray:
    """R(tau) = exp(i tau a^dag a); a contraction for Im(tau) >= 0."""
    return np.diag(np.exp(1j * complex(tau) * np.arange(M.N)))


@dataclass
class ANElement:
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    Nparam: int
    comm_norm: float
    feasible: np.ndarray = field(repr=False)
    sharp: np.ndarray = field(repr=False)


def aN_element(M: MoyalTruncation, Nparam: int) -> ANElement:
    """a_N = a^dag R(i/N) + R(i/N) a and b_N = a_N / (1 + (e^{1/N} - 1) N).

    ``comm_norm`` is ||[D, b_N]|| with the Dirac operator of M. The estimate
    behind b_N bounds ||[a^dag, b_N]|| by one, so D contributes sqrt(2/theta)
    and the feasible element is ``feasible`` = sqrt(theta/2) b_N (rescaled if
    truncation pushes its norm past one). Since the normalizing denominator
    tends to 2, ``sharp`` = a_N / ||[D, a_N]|| gives the tighter bound.
    """
    if Nparam < 1:
        raise ArgumentError("Nparam must be >= 1")
    R = rotation(M, 1j / Nparam).real
    a = M.adag @ R + R @ M.a
    b = a / (1.0 + (np.exp(1.0 / Nparam) - 1.0) * Nparam)
    D = M.dirac
    B = M.embed(b)
    cn = operator_norm(D @ B - B @ D)
    f = np.sqrt(M.theta / 2.0) * B
    fn = operator_norm(D @ f - f @ D)
    if fn > 1.0:
        f = f / fn
    A = M.embed(a)
    sharp = A / operator_norm(D @ A - A @ D)
    return ANElement(a.astype(complex), b.astype(complex), Nparam, cn, f.astype(complex), sharp.astype(complex))


def an_lower_bound(M: MoyalTruncation, z: complex, Nparam: int, zp: complex = 0.0, sharp: bool = False) -> float:
    """Feasible lower bound Psi_z(f) - Psi_z'(f) with f the scaled b_N (or a_N when ``sharp``)."""
    el = aN_element(M, Nparam)
    f = el.sharp if sharp else el.feasible
    return float(np.real(np.trace((coherent_state(M, z).rho - coherent_state(M, zp).rho) @ f)))


# ---------------------------------------------------------------- closed forms


def eigenstate_distance_formula(m: int, n: int, theta: float = 1.0) -> float:
    """sqrt(theta/2) sum_{k=m+1}^{n} 1/sqrt(k)."""
    m, n = sorted((int(m), int(n)))
    if m < 0:
        raise ArgumentError("eigenstate indices must be non-negative")
    k = np.arange(m + 1, n + 1, dtype=float)
    return float(np.sqrt(theta / 2.0) * np.sum(1.0 / np.sqrt(k)))


@dataclass(frozen=True)
class EmbeddedEigenstateSpace:
    """Eigenstates 0..M placed on the half-line at x_m = sum_{k<=m} sqrt(theta/2k)."""

    theta: float
    M: int

    @cached_property
    def points(self) -> np.ndarray:
        k = np.arange(1, self.M + 1, dtype=float)
        return np.r_[0.0, np.cumsum(np.sqrt(self.theta / (2.0 * k)))]

    def distance(self, m: int, n: int) -> float:
        return float(abs(self.points[m] - self.points[n]))

    def check(self, tol: float = 1e-14) -> ValidationReport:
        x = self.points
        g = np.diff(x)
        n = np.arange(1, self.M + 1, dtype=float)
        up = np.sqrt(2 * self.theta * n)
        rep = ValidationReport()
        rep.add("origin", abs(x[0]), 0.0)
        rep.add("increasing", float(-g.min(initial=1.0)), passed=bool(np.all(g > 0)))
        rep.add("gaps_decreasing", 0.0, passed=bool(np.all(np.diff(g) < 0)))
        slack = tol * np.maximum(1.0, up)
        rep.add("upper_bound", float(max(0.0, np.max(x[1:] - up, initial=0.0))), passed=bool(np.all(x[1:] <= up + slack)))
        lo = up - np.sqrt(2 * self.theta)
        rep.add("lower_bound", float(max(0.0, np.max(lo - x[1:], initial=0.0))), passed=bool(np.all(lo <= x[1:] + slack)))
        iso = max((abs(self.distance(i, j) - eigenstate_distance_formula(i, j, self.theta))
                   for i in range(self.M + 1) for j in range(i + 1, self.M + 1)), default=0.0)
        rep.add("isometry", iso, tol * max(1.0, x[-1]))
        return rep


def hausdorff_points_interval(points, lo: float, hi: float) -> float:
    """Hausdorff distance between a finite set inside [lo, hi] and the interval."""
    x = np.sort(np.asarray(points, dtype=float))
    if x[0] < lo or x[-1] > hi:
        raise ArgumentError("points must lie in the interval")
    gaps = np.diff(np.r_[lo, x, hi])
    # end gaps are covered from one side only
    return float(max(gaps[0], gaps[-1], 0.5 * gaps[1:-1].max(initial=0.0)))


def gh_experiment(theta: float, M_points: int) -> dict:
    """Hausdorff distance between {x_0..x_M} and [0, x_M]; bounds the GH distance to the half-line piece."""
    if M_points < 2:
        raise ArgumentError("M_points must be >= 2")
    X = EmbeddedEigenstateSpace(theta, M_points)
    h = hausdorff_points_interval(X.points, 0.0, X.points[-1])
    return {"theta": float(theta), "M": int(M_points), "hausdorff_distance": h,
            "closed_form": 0.5 * np.sqrt(theta / 2.0)}


def gh_sweep(thetas, M_points: int) -> list:
    return [gh_experiment(t, M_points) for t in thetas]


# ---------------------------------------------------------------- zeta function


def _levels(w: np.ndarray, rtol: float = 1e-8):
    """Distinct values and multiplicities of a sorted array."""
    vals, mult = [w[0]], [1]
    for x in w[1:]:
        if abs(x - vals[-1]) <= rtol * max(1.0, abs(x)):
            mult[-1] += 1
        else:
            vals.append(x)
            mult.append(1)
    return np.array(vals), np.array(mult)


def _slope(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    n = len(x)
    s2 = float(res[0]) / (n - 2) if res.size and n > 2 else 0.0
    se = np.sqrt(s2 / np.sum((x - x.mean()) ** 2)) if n > 2 else np.inf
    return float(coef[0]), float(se)


def zeta_estimates(M: MoyalTruncation, eps=(1e-2, 5e-3, 2.5e-3)) -> dict:
    """Metric dimension and volume (residue at z = 2 of Tr |D|^{-z}) from the truncated spectrum.

    Only eigenvalues of D^2 on the kernel complement and inside the interior
    block are used. The dimension is the log-log slope of the counting
    function; the volume is eps * zeta(2 + eps) with the spectrum continued
    past the interior by Euler-Maclaurin, extrapolated to eps = 0.
    """
    w = spectrum(M)
    w = w[w > 1e-9 * w.max()]
    keep = max(3, int(len(w) * M.interior / M.N))
    w = w[:keep]
    vals, mult = _levels(w)
    small = M.N < 32
    widen = 32.0 / M.N if small else 1.0

    # dimension: count(Lambda) ~ Lambda^d at Lambda = sqrt(level)
    lam = np.sqrt(vals)
    cnt = np.cumsum(mult)
    lx, ly = np.log(lam), np.log(cnt)
    d, se = _slope(lx, ly)
    h = len(lx) // 2
    spread = abs(_slope(lx[:h + 1], ly[:h + 1])[0] - _slope(lx[h:], ly[h:])[0]) if len(lx) >= 6 else 1.0
    d_err = (2 * se + 0.5 * spread) * widen + 1e-12

    # volume: levels ~ mu_K + s j with multiplicity g past the interior
    idx = np.arange(len(vals), dtype=float)
    s, _ = _slope(idx, vals)
    g = float(np.median(mult))
    muK = float(vals[-1])

    def zeta(z):
        q = z / 2.0
        body = float(np.sum(mult * vals ** (-q)))
        integral = g * muK ** (1 - q) / (s * (q - 1))
        f0 = g * muK ** (-q)
        f1 = -q * s * g * muK ** (-q - 1)
        f3 = -q * (q + 1) * (q + 2) * s ** 3 * g * muK ** (-q - 3)
        return body + integral - f0 / 2 - f1 / 12 + f3 / 720

    e = np.asarray(eps, dtype=float)
    R = np.array([x * zeta(2 + x) for x in e])
    quad = np.polyfit(e, R, len(e) - 1)[-1]
    lin = np.polyfit(e[-2:], R[-2:], 1)[-1]
    vol = float(quad)
    v_err = (abs(quad - lin) + 1e-3 * abs(quad)) * widen
    out = {
        "theta": M.theta, "N": M.N,
        "dimension_estimate": d, "dimension_error": float(d_err),
        "volume_estimate": vol, "volume_error": float(v_err),
        "levels_used": int(len(vals)),
    }
    if small:
        out["warning"] = f"N={M.N} < 32: few interior levels, error bars widened by {widen:.2f}"
    return out


# ---------------------------------------------------------------- correspondences


_SP = np.array([[0.0, 1.0], [0.0, 0.0]])  # |0><1| on the spinor index
_SM = _SP.T


def _e00(n: int) -> np.ndarray:
    e = np.zeros((n, n))
    e[0, 0] = 1.0
    return e


def rect_nabla(eta, left_ladder, right_X, theta: float):
    """One-form valued derivative of a rectangular matrix eta.

    Returns (upper, lower) blocks sqrt(2/theta) (L eta - eta X^*) and
    sqrt(2/theta) (L^* eta - eta X), where L is ``left_ladder``.
    """
    c = np.sqrt(2.0 / theta)
    L, X = left_ladder, right_X
    return c * (L @ eta - eta @ X.conj().T), c * (L.conj().T @ eta - eta @ X)


def stack_one_form_parts(stack, m: int, n: int):
    """Read (upper, lower) rows off a stack of [[0, |0><u_i|], [|0><v_i|, 0]] blocks."""
    B = np.asarray(stack).reshape(m, 2 * n, 2 * n)
    return B[:, 0, n:].copy(), B[:, n, :n].copy()


def _rect_correspondence(n_src: int, k: int, L: np.ndarray, theta: float,
                         source: SpectralTriple, target: SpectralTriple) -> Correspondence:
    # module M_{k x n_src} = p A^k over M_{n_src} (x) 1_2, alpha built from the target ladder L
    R = RectBimodule(k, n_src)
    E = R.as_projective(source.algebra)
    c = np.sqrt(2.0 / theta)
    e = _e00(n_src)
    alpha = c * (np.kron(L, np.kron(_SP, e)) + np.kron(L.conj().T, np.kron(_SM, e)))
    conn = Connection(E, alpha, source)
    return Correspondence(conn, R.multiplication_map(2), source, target)


def moyal_correspondence(n: int, M: MoyalTruncation) -> tuple[Correspondence, Correspondence]:
    """Forward (M_n -> truncated Moyal) and reverse correspondences.

    Forward: bimodule C^N (x) conj(C^n) with nabla(eta) built from a eta - eta X_n.
    Reverse: C^n (x) conj(C^N) with X_n xi - xi a.
    """
    if not 2 <= n <= M.N // 2:
        raise ArgumentError(f"need 2 <= n <= N/2, got n={n}, N={M.N}")
    Tn = finite_triple(n, M.theta)
    TM = M.triple
    Xn = ladder(n).T
    fwd = _rect_correspondence(n, M.N, M.a, M.theta, Tn, TM)
    rev = _rect_correspondence(M.N, n, Xn.T, M.theta, TM, Tn)
    return fwd, rev


def intertwining_residual(c: Correspondence, interior: int | None = None) -> float:
    """max ||(U D_E - D' U) v|| over target basis vectors |s, i> with i < interior, v = U^* |s, i>."""
    U = c.U
    DE = c.connection.dirac_ambient
    Dp = c.target.dirac
    m = Dp.shape[0] // 2
    interior = m if interior is None else interior
    idx = [s * m + i for s in range(2) for i in range(interior)]
    V = U.conj().T[:, idx]
    return operator_norm(U @ DE @ V - Dp @ U @ V)


def row_by_column_map(n: int, N: int) -> np.ndarray:
    """Ambient form of M_{n x N} (x)_{M_N} M_{N x n} -> M_n, xi (x) eta -> xi eta.

    On C^n (x) C^N (x) C^2 (x) C^n it sends |j, i, s, 0> with i = 0 to |s, j>;
    everything else is killed by the round-trip projection.
    """
    d = 2 * n
    V = np.zeros((d, n * N * d))
    for j in range(n):
        for s in range(2):
            V[s * n + j, (j * N + 0) * d + s * n + 0] = 1.0
    return V


def round_trip(n: int, M: MoyalTruncation):
    """(composite M_n -> Moyal -> M_n, identity correspondence of M_n, row-by-column V)."""
    fwd, rev = moyal_correspondence(n, M)
    rt = compose_correspondences(fwd, rev)
    ident = identity_correspondence(fwd.source)
    return rt, ident, row_by_column_map(n, M.N)


# ---------------------------------------------------------------- sweeps


def eigenstate_rows(theta: float, N: int, mmax: int, even: bool = True, tol: float | None = None) -> list:
    """Certified eigenstate distances for all 0 <= m < n <= mmax."""
    from .distance import default_tol, spectral_distance, spectral_distance_even

    M = truncation(N, theta)
    fn = spectral_distance_even if even else spectral_distance
    tol = default_tol() if tol is None else tol
    rows = []
    for m in range(mmax + 1):
        for n in range(m + 1, mmax + 1):
            r = fn(M.triple, eigenstate(M, m), eigenstate(M, n), tol)
            f = eigenstate_distance_formula(m, n, theta)
            rows.append({"m": m, "n": n, "lower": r.lower, "upper": r.upper, "formula": f,
                         "residual": max(0.0, r.lower - f, f - r.upper), "status": r.status})
    return rows


def coherent_rows(theta: float, r: float, Ns, Nparam: int = 4, even: bool = True, tol: float | None = None) -> list:
    """Certified d(Psi_0, Psi_r) and the a_N lower bound across truncations."""
    from .distance import default_tol, spectral_distance, spectral_distance_even

    fn = spectral_distance_even if even else spectral_distance
    tol = default_tol() if tol is None else tol
    rows = []
    for N in Ns:
        M = truncation(N, theta)
        res = fn(M.triple, coherent_state(M, 0.0), coherent_state(M, r), tol)
        lb = an_lower_bound(M, r, Nparam)
        lbs = an_lower_bound(M, r, Nparam, sharp=True)
        err = max(0.0, res.lower - r, r - res.upper)
        rows.append({"N": int(N), "r": float(r), "lower": res.lower, "upper": res.upper,
                     "formula": float(r), "residual": err, "aN_lower": lb, "aN_sharp_lower": lbs, "status": res.status})
    return rows
