import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import rand_algebra, rand_herm
from ncgeom.algebra import (
    State,
    algebra_from_basis,
    algebra_from_json,
    algebra_to_json,
    diagonal_algebra,
    direct_sum,
    evaluate,
    full_matrix_algebra,
    state_from_json,
    state_to_json,
    tensor_identity,
    vector_state,
)
from ncgeom.errors import ArgumentError, DimensionError, DomainError, ParseError
from ncgeom.linalg import dag

seeds = st.integers(0, 2**32 - 1)

CONSTRUCTORS = [
    lambda: full_matrix_algebra(3),
    lambda: diagonal_algebra(4),
    lambda: direct_sum([full_matrix_algebra(2), full_matrix_algebra(1)]),
    lambda: tensor_identity(full_matrix_algebra(2), 3),
    lambda: tensor_identity(full_matrix_algebra(2), 2, side="right"),
    lambda: tensor_identity(direct_sum([full_matrix_algebra(1), full_matrix_algebra(2)]), 2),
]


@pytest.mark.parametrize("make", CONSTRUCTORS)
def test_constructors_are_star_closed(make, rng):
    A = make()
    basis = A.basis
    for _ in range(10):
        i, j = rng.integers(0, A.dim, 2)
        assert A.contains(basis[i] @ basis[j])[1] <= 1e-10
        assert A.contains(dag(basis[i]))[1] <= 1e-10
    assert A.contains(np.eye(A.hilbert_dim))[0]
    res = A.validate()
    assert res["independence"] == 0


@pytest.mark.parametrize("make", CONSTRUCTORS)
def test_projection_agrees_with_span(make, rng):
    A = make()
    X = rng.standard_normal((A.hilbert_dim,) * 2) + 1j * rng.standard_normal((A.hilbert_dim,) * 2)
    assert np.allclose(A.project(X), A.span.project(X), atol=1e-12)


@pytest.mark.parametrize("make", CONSTRUCTORS)
def test_hermitian_basis_is_orthonormal_and_real_first(make):
    A = make()
    H = A.hermitian_basis
    assert len(H) == A.dim
    for h in H:
        assert np.allclose(h, dag(h))
    G = np.real(np.einsum("iab,jab->ij", H.conj(), H))
    assert np.allclose(G, np.eye(len(H)), atol=1e-12)
    assert np.all(np.imag(H[: A.n_real]) == 0)


def test_tensor_identity_layout():
    A = tensor_identity(full_matrix_algebra(2), 3)
    a = np.array([[1, 2], [3, 4]])
    assert A.contains(np.kron(np.eye(3), a))[0]
    assert not A.contains(np.kron(a, np.eye(3)))[0]
    B = tensor_identity(full_matrix_algebra(2), 3, side="right")
    assert B.contains(np.kron(a, np.eye(3)))[0]


def test_algebra_from_basis_rejects_non_algebra():
    with pytest.raises(DomainError):
        algebra_from_basis([np.eye(2), np.array([[0, 1], [0, 0]])])
    with pytest.raises(DomainError):
        algebra_from_basis([np.eye(2), 2 * np.eye(2)])


def test_bad_sizes():
    with pytest.raises(DimensionError):
        full_matrix_algebra(0)
    with pytest.raises(ArgumentError):
        direct_sum([])


@given(seeds)
def test_state_evaluation_properties(seed):
    rng = np.random.default_rng(seed)
    A = rand_algebra(rng)
    n = A.hilbert_dim
    psi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    phi = vector_state(psi / np.linalg.norm(psi))
    a = A.random_element(rng)
    assert abs(evaluate(phi, dag(a)) - np.conj(evaluate(phi, a))) <= 1e-10 * max(1.0, np.abs(a).max())
    h = A.random_element(rng, hermitian=True)
    w = np.linalg.eigvalsh(h)
    v = evaluate(phi, h).real
    assert w[0] - 1e-10 <= v <= w[-1] + 1e-10


def test_state_validation(rng):
    with pytest.raises(DomainError):
        State(np.diag([0.5, 0.6]))
    with pytest.raises(DomainError):
        State(np.diag([1.5, -0.5]))
    with pytest.raises(DomainError):
        State(np.array([[0.5, 0.5], [0.0, 0.5]]))
    with pytest.raises(ArgumentError):
        vector_state([0.0, 0.0])
    with pytest.raises(ArgumentError):
        vector_state([1.0, 1.0])
    with pytest.raises(DimensionError):
        evaluate(vector_state([1.0, 0.0]), np.eye(3))


def test_json_round_trip(rng):
    A = direct_sum([full_matrix_algebra(2), full_matrix_algebra(1)])
    B = algebra_from_json(algebra_to_json(A))
    assert B.dim == A.dim and B.unital
    for b in A.basis:
        assert B.contains(b)[0]
    rho = rand_herm(rng, 3)
    rho = rho @ rho
    phi = State(rho / np.trace(rho).real, label="x")
    psi = state_from_json(state_to_json(phi))
    assert np.allclose(psi.rho, phi.rho) and psi.label == "x"


def test_json_shorthands():
    A = algebra_from_json({"kind": "full", "n": 2, "copies": 2})
    assert A.hilbert_dim == 4 and A.dim == 4
    assert algebra_from_json({"kind": "diagonal", "n": 3}).dim == 3
    phi = state_from_json({"vector": [3, 4]})
    assert np.allclose(np.diag(phi.rho).real, [0.36, 0.64])
    phi = state_from_json({"vector": {"re": [0, 0], "im": [1, 0]}})
    assert np.allclose(phi.rho, np.diag([1, 0]))


@pytest.mark.parametrize(
    "obj", [{"kind": "weird", "n": 2}, {"kind": "full"}, {"hilbert_dim": 2}, {"basis": []}]
)
def test_json_algebra_errors(obj):
    with pytest.raises(ParseError):
        algebra_from_json(obj)


def test_json_state_errors():
    with pytest.raises(ParseError):
        state_from_json({"nothing": 1})


@given(seeds)
def test_hermitian_basis_of_rotated_algebra(seed):
    # a generic unitary rotation destroys closure under entrywise conjugation
    rng = np.random.default_rng(seed)
    from helpers import rand_unitary

    A0 = tensor_identity(full_matrix_algebra(2), 2)
    U = rand_unitary(rng, 4)
    A = algebra_from_basis(np.array([U @ b @ dag(U) for b in A0.basis]))
    H = A.hermitian_basis
    assert len(H) == A.dim
    for h in H:
        assert np.allclose(h, dag(h))
        assert A.contains(h)[1] <= 1e-10
