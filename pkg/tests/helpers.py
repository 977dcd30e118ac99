"""Random objects shared by the test modules."""

import numpy as np
import scipy.linalg as sla

from ncgeom.algebra import diagonal_algebra, direct_sum, full_matrix_algebra, tensor_identity
from ncgeom.connections import Connection, ProjectiveModule
from ncgeom.linalg import dag, herm
from ncgeom.triple import SpectralTriple


def rand_herm(rng, n, scale=1.0):
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (X + dag(X)) / 2


def rand_unitary(rng, n):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def rand_algebra(rng, max_dim=6):
    """One of the standard shapes with Hilbert dimension at most ``max_dim``."""
    kind = rng.integers(5)
    if kind == 0:
        return full_matrix_algebra(int(rng.integers(1, max_dim + 1)))
    if kind == 1:
        return diagonal_algebra(int(rng.integers(2, max_dim + 1)))
    if kind == 2:
        a = int(rng.integers(1, 3))
        b = int(rng.integers(1, max(2, max_dim - a + 1)))
        return direct_sum([full_matrix_algebra(a), full_matrix_algebra(min(b, max_dim - a))])
    if kind == 3:
        return tensor_identity(full_matrix_algebra(int(rng.integers(1, max_dim // 2 + 1))), 2)
    return direct_sum([full_matrix_algebra(1), tensor_identity(full_matrix_algebra(1), 2),
                       full_matrix_algebra(2)][: int(rng.integers(2, 4))])


def rand_triple(rng, max_dim=6):
    A = rand_algebra(rng, max_dim)
    return SpectralTriple(A, rand_herm(rng, A.hilbert_dim))


def rand_projection(rng, A, k):
    """Spectral projection of a random Hermitian element of M_k(A); it lies in M_k(A)."""
    d = A.hilbert_dim
    X = np.zeros((k * d, k * d), dtype=complex)
    for i in range(k):
        for j in range(k):
            X[i * d:(i + 1) * d, j * d:(j + 1) * d] = A.random_element(rng)
    X = herm(X)
    w, V = sla.eigh(X)
    keep = w > np.median(w) if rng.random() < 0.5 else w > 0
    if not np.any(keep):
        keep[-1] = True
    P = V[:, keep] @ dag(V[:, keep])
    # exact projection onto a union of eigenspaces: snap degenerate clusters together
    return herm(P)


def rand_one_form(rng, T, terms=3):
    A = T.algebra
    D = T.dirac
    out = np.zeros_like(D, dtype=complex)
    for _ in range(terms):
        a, b = A.random_element(rng), A.random_element(rng)
        out += a @ (D @ b - b @ D)
    return out


def rand_connection(rng, T, k=None, max_k=2, scale=0.5):
    """Random Hermitian connection on a random projective module over T.algebra."""
    k = int(rng.integers(1, max_k + 1)) if k is None else k
    A = T.algebra
    d = A.hilbert_dim
    for _ in range(20):
        p = rand_projection(rng, A, k)
        try:
            module = ProjectiveModule(k, p, A)
            break
        except Exception:
            continue
    X = np.zeros((k * d, k * d), dtype=complex)
    for i in range(k):
        for j in range(k):
            X[i * d:(i + 1) * d, j * d:(j + 1) * d] = rand_one_form(rng, T)
    alpha = module.p @ herm(X) @ module.p * scale
    return Connection(module, herm(alpha), T)
