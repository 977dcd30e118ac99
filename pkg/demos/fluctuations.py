"""Gauge morphisms, a fluctuation by a projective module, and composing two of them."""

import numpy as np

from ncgeom import gauge
from ncgeom.algebra import full_matrix_algebra, tensor_identity
from ncgeom.connections import (
    compose_fluctuations,
    connection_with,
    fluctuate,
    fluctuation_correspondence,
    ProjectiveModule,
)
from ncgeom.triple import SpectralTriple, omega1

M2 = full_matrix_algebra(2)
D = np.array([[0.0, 1.0], [1.0, 0.0]])
f = gauge.mor(M2, D, np.zeros((2, 2)))
print("omega for D -> 0:\n", f.omega.real)
print("a morphism 0 -> D exists:", gauge.mor(M2, np.zeros((2, 2)), D) is not None)
print("D is initial:", gauge.is_initial(M2, D))

rng = np.random.default_rng(1)
A = tensor_identity(full_matrix_algebra(2), 2)
X = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
T = SpectralTriple(A, X + X.conj().T)
print("rank of one-forms:", omega1(T).rank)

# rank-one projection in M_2(A) picks a line in C^2 (x) C^4
q = np.array([[1.0, 1.0], [1.0, 1.0]]) / 2
E = ProjectiveModule(2, np.kron(q, np.eye(4)), A)
w = T.dirac @ A.basis[1] - A.basis[1] @ T.dirac
alpha = E.p @ np.kron(np.eye(2), 0.3 * (w + w.conj().T)) @ E.p
c1 = connection_with(E, T, alpha)
T1 = fluctuate(T, c1)
print("fluctuated Dirac spectrum:", np.round(np.linalg.eigvalsh(T1.dirac), 4))

c2 = connection_with(ProjectiveModule(1, np.eye(4), T1.algebra), T1, np.zeros((4, 4)))
cf = compose_fluctuations(T, c1, c2)
print("composite agrees with two steps:", cf.report.passed)
print("correspondence check:", fluctuation_correspondence(T, c1).check().passed)
