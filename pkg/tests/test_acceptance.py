"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""

import numpy as np
import pytest

from helpers import rand_connection, rand_herm, rand_triple
from oracles import EIGENSTATE_DISTANCE, GH, METRIC_DIMENSION, TWO_POINT, ZETA_VOLUME
from ncgeom import gauge, moyal
from ncgeom.algebra import diagonal_algebra, full_matrix_algebra, vector_state
from ncgeom.connections import (
    compose_correspondences,
    compose_fluctuations,
    fluctuate_quotient,
    fluctuation_correspondence,
    free_module,
    grassmannian_connection,
    identity_correspondence,
    similarity_check,
)
from ncgeom.distance import distance_matrix, spectral_distance, spectral_distance_even
from ncgeom.linalg import operator_norm
from ncgeom.triple import SpectralTriple, omega1, unitary_equivalent, wigner_double, wigner_state

THETAS = (1.0, 2.0)
PAIRS = [(m, n) for m in range(7) for n in range(m + 1, 7)]


def _eig_suite(N, even):
    out = {}
    fn = spectral_distance_even if even else spectral_distance
    for theta in THETAS:
        M = moyal.truncation(N, theta)
        states = [moyal.eigenstate(M, k) for k in range(7)]
        for m, n in PAIRS:
            out[theta, m, n] = fn(M.triple, states[m], states[n])
    return out


@pytest.fixture(scope="module")
def eig12_full():
    return _eig_suite(12, even=False)


@pytest.fixture(scope="module")
def eig12_even():
    return _eig_suite(12, even=True)


@pytest.fixture(scope="module")
def eig24_full():
    return _eig_suite(24, even=False)


def test_criterion_01_one_forms(criterion):
    c = criterion(1, "one-form ranks")
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    cases = [(SpectralTriple(full_matrix_algebra(2), sx), 4), (SpectralTriple(full_matrix_algebra(2), 2.5 * np.eye(2)), 0)]
    cases += [(moyal.finite_triple(n), 2 * n * n) for n in (2, 3, 4)]
    worst = 0.0
    ranks = []
    for T, expect in cases:
        O = omega1(T)
        ranks.append(O.rank)
        assert O.rank == expect
        if O.rank:
            worst = max(worst, O.space.orthonormality_residual())
            a, b = T.algebra.basis[-1], T.algebra.basis[0]
            w = a @ (T.dirac @ b - b @ T.dirac)
            worst = max(worst, O.space.residual(w) / max(1.0, np.linalg.norm(w)))
    c.detail = f"ranks={ranks} max_residual={worst:.1e}"
    assert worst <= 1e-9


def test_criterion_02_gauge_category(criterion):
    c = criterion(2, "gauge category")
    rng = np.random.default_rng(2)
    M2 = full_matrix_algebra(2)
    D = np.array([[0.0, 1.0], [1.0, 0.0]])
    f = gauge.mor(M2, D, np.zeros((2, 2)))
    assert f is not None and np.array_equal(f.omega, -D)
    assert gauge.mor(M2, np.zeros((2, 2)), D) is None
    initial = 0
    for n in (2, 3, 4):
        for _ in range(20):
            assert gauge.is_initial(full_matrix_algebra(n), rand_herm(rng, n))
            initial += 1
    for n in (1, 2, 3, 4):
        assert gauge.no_final_object_witness(full_matrix_algebra(n)).report.passed
    c.detail = f"omega=-D, {initial} random D initial, witnesses n<=4"


def test_criterion_03_fluctuation_identity(criterion):
    c = criterion(3, "trivial fluctuation is unitarily equivalent to the base")
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        T = rand_triple(rng, 6)
        TQ, U, rep = fluctuate_quotient(T, grassmannian_connection(free_module(T.algebra), T))
        eq = unitary_equivalent(TQ, T, U, tol=1e-10)
        worst = max(worst, max(ch.residual for ch in eq))
        assert rep.passed and eq.passed
    c.detail = f"20 triples, max residual {worst:.1e}"
    assert worst <= 1e-10


def test_criterion_04_composition_laws(criterion):
    c = criterion(4, "composition laws")
    rng = np.random.default_rng(4)
    two_step = assoc = 0.0
    for _ in range(20):
        T = rand_triple(rng, 4)
        c1 = rand_connection(rng, T)
        f1 = fluctuation_correspondence(T, c1)
        c2 = rand_connection(rng, f1.target)
        f2 = fluctuation_correspondence(f1.target, c2)
        f3 = fluctuation_correspondence(f2.target, rand_connection(rng, f2.target))
        cf = compose_fluctuations(T, c1, c2)
        assert cf.report.passed
        two_step = max(two_step, cf.report["two_step_vs_composed"].residual)
        L = compose_correspondences(compose_correspondences(f1, f2), f3)
        R = compose_correspondences(f1, compose_correspondences(f2, f3))
        for X, Y in ((L.module.p, R.module.p), (L.alpha, R.alpha), (L.U, R.U)):
            assert X.shape == Y.shape
            assoc = max(assoc, operator_norm(X - Y))
        p = f1.module.p
        assert similarity_check(compose_correspondences(identity_correspondence(T), f1), f1, p).passed
        assert similarity_check(compose_correspondences(f1, identity_correspondence(f1.target)), f1, p).passed
    c.detail = f"two-step {two_step:.1e}, associativity {assoc:.1e}, identity similar"
    assert two_step <= 1e-9 and assoc <= 1e-9


def test_criterion_05_certified_distances(criterion):
    c = criterion(5, "certified distances")
    worst_err = worst_gap = worst_tri = 0.0
    for t, d in TWO_POINT.items():
        T = SpectralTriple(diagonal_algebra(2), np.array([[0.0, t], [t, 0.0]]))
        r = spectral_distance(T, vector_state([1.0, 0.0]), vector_state([0.0, 1.0]))
        assert r.status == "certified"
        worst_err = max(worst_err, abs(r.value - d), r.lower - d, d - r.upper)
        worst_gap = max(worst_gap, r.gap)
    rng = np.random.default_rng(5)
    # triangle inequality on state triples of several triples
    triples = [moyal.truncation(6, 1.0).triple]
    from ncgeom.algebra import tensor_identity

    for _ in range(3):
        A = tensor_identity(full_matrix_algebra(3), 2)
        triples.append(SpectralTriple(A, rand_herm(rng, 6)))
    for T in triples:
        n = T.hilbert_dim
        vs = rng.standard_normal((4, n)) + 1j * rng.standard_normal((4, n))
        states = [vector_state(v / np.linalg.norm(v)) for v in vs]
        Dm = distance_matrix(T, states)
        assert all(s == "certified" for row in Dm.status for s in row)
        worst_gap = max(worst_gap, float(np.max(Dm.upper - Dm.lower)))
        for i in range(4):
            for j in range(4):
                for k in range(4):
                    worst_tri = max(worst_tri, Dm.lower[i, k] - Dm.upper[i, j] - Dm.upper[j, k])
    c.detail = f"two-point error {worst_err:.1e}, max gap {worst_gap:.1e}, triangle {max(worst_tri, 0):.1e}"
    assert worst_err <= 1e-7 and worst_gap <= 1e-7 and worst_tri <= 2e-7


def test_criterion_06_eigenstate_distances(criterion, eig12_full, eig24_full):
    c = criterion(6, "eigenstate distances")
    bracket = drift = 0.0
    for (theta, m, n), r in eig12_full.items():
        f = EIGENSTATE_DISTANCE[theta][m, n]
        assert r.status == "certified"
        bracket = max(bracket, r.lower - f, f - r.upper)
        drift = max(drift, abs(eig24_full[theta, m, n].value - r.value))
    c.detail = f"{len(eig12_full)} pairs, bracket miss {max(bracket, 0):.1e}, N=12->24 drift {drift:.1e}"
    assert bracket <= 1e-5 and drift <= 1e-6


def test_criterion_07_coherent_states(criterion):
    c = criterion(7, "coherent-state convergence")
    # error = distance from r to the certified interval, so solver noise
    # inside the interval does not count as truncation error
    ok, parts = True, []
    for r in (0.25, 0.5):
        rows = moyal.coherent_rows(1.0, r, (16, 32, 64), even=True)
        errs = [row["residual"] for row in rows]
        mid64 = 0.5 * (rows[-1]["lower"] + rows[-1]["upper"])
        parts.append(f"r={r}: errors " + "/".join(f"{e:.1e}" for e in errs) + f" N=64 value {mid64:.9f}")
        ok &= all(row["status"] == "certified" for row in rows)
        ok &= abs(mid64 - r) <= 0.1 * r
        ok &= all(b <= a for a, b in zip(errs, errs[1:]))
        ok &= all(row["aN_lower"] <= row["upper"] and row["aN_sharp_lower"] <= row["upper"] for row in rows)
    c.detail = "; ".join(parts)
    assert ok


def test_criterion_08_wigner_equivalence(criterion):
    c = criterion(8, "Wigner/Schroedinger metric equivalence")
    worst = 0.0
    solves = 0
    for N, mode in ((4, "full"), (4, "even"), (6, "even"), (8, "even")):
        M = moyal.truncation(N, 1.0)
        T = M.triple
        W = wigner_double(T, mode)
        for m in range(4):
            for n in range(m + 1, 4):
                a, b = moyal.eigenstate(M, m), moyal.eigenstate(M, n)
                r = spectral_distance(T, a, b)
                rw = spectral_distance_even(W, wigner_state(T, a, mode), wigner_state(T, b, mode))
                assert r.status == rw.status == "certified"
                worst = max(worst, abs(r.value - rw.value))
                solves += 1
    c.detail = f"{solves} pairs, max difference {worst:.1e}"
    assert worst <= 2e-7


def test_criterion_09_even_reduction(criterion, eig12_full, eig12_even):
    c = criterion(9, "even-triple reduction")
    worst = max(abs(eig12_full[k].value - eig12_even[k].value) for k in eig12_full)
    c.detail = f"{len(eig12_full)} pairs, max difference {worst:.1e}"
    assert worst <= 2e-7


def test_criterion_10_zeta(criterion):
    c = criterion(10, "zeta volume and dimension")
    rep = moyal.zeta_estimates(moyal.truncation(256, 1.0))
    vol, dim = rep["volume_estimate"], rep["dimension_estimate"]
    c.detail = f"volume {vol:.4f}, dimension {dim:.4f}"
    assert abs(vol - ZETA_VOLUME[1.0]) <= 0.02
    assert abs(dim - METRIC_DIMENSION) <= 0.05


def test_criterion_11_gromov_hausdorff(criterion):
    c = criterion(11, "Gromov-Hausdorff experiment")
    thetas = (1.0, 0.5, 0.25, 0.125)
    vals = [moyal.gh_experiment(t, 10)["hausdorff_distance"] for t in thetas]
    err = max(abs(v - GH[t]) for v, t in zip(vals, thetas))
    c.detail = f"values {['%.6f' % v for v in vals]}, error {err:.1e}"
    assert err <= 1e-12
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_criterion_12_moyal_correspondences(criterion):
    c = criterion(12, "Moyal correspondences")
    M = moyal.truncation(24, 1.0)
    fwd, rev = moyal.moyal_correspondence(3, M)
    rf = moyal.intertwining_residual(fwd, M.interior)
    rr = moyal.intertwining_residual(rev)
    rt, ident, V = moyal.round_trip(3, M)
    sim = similarity_check(rt, ident, V)
    c.detail = f"forward {rf:.1e}, reverse {rr:.1e}, round trip similar={sim.passed}"
    assert fwd.check().passed and rev.check().passed
    assert rf <= 1e-9 and rr <= 1e-9 and sim.passed
