import itertools

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from brm import CovModel, solve_pi_sigma, verify_representation
from brm.errors import AllNonpositive, PreconditionViolation
from brm.qp import TAU_ACT
from tests.oracles import qp_primal_enumeration, random_spd


@st.composite
def instances(draw, d_min=2, d_max=6):
    d = draw(st.integers(d_min, d_max))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    sigma = random_spd(rng, d)
    a = rng.normal(size=d)
    a[rng.integers(d)] = abs(a[rng.integers(d)]) + 0.1
    assume(np.any(a > 0))
    return CovModel(sigma), a, rng


def test_identity():
    sol = solve_pi_sigma(CovModel.identity(2), [1.0, 1.0])
    assert sol.index_I == (0, 1) and sol.value == pytest.approx(2.0)
    assert np.allclose(sol.a_tilde, [1, 1]) and np.allclose(sol.lam, [1, 1])


def test_single_active():
    sol = solve_pi_sigma(CovModel([[1.0, 0.5], [0.5, 1.0]]), [1.0, 0.2])
    assert sol.index_I == (0,) and sol.index_J == (1,) and sol.index_U == ()
    assert np.allclose(sol.a_tilde, [1.0, 0.5]) and np.allclose(sol.lam, [1.0, 0.0])
    assert sol.value == pytest.approx(1.0)


def test_equicorrelated_full_set():
    sol = solve_pi_sigma(CovModel.equicorrelated(3, 0.5), np.ones(3))
    assert sol.index_I == (0, 1, 2)
    assert np.allclose(sol.lam, 0.5, atol=1e-14) and sol.value == pytest.approx(1.5)


def test_boundary_tie_prefers_smaller_set():
    # a~_2 = rho * a_1 = a_2 exactly: both {1} and {1, 2} satisfy KKT
    sol = solve_pi_sigma(CovModel([[1.0, 0.5], [0.5, 1.0]]), [1.0, 0.5])
    assert sol.index_I == (0,) and sol.index_U == (1,) and sol.boundary_degenerate


def test_errors():
    with pytest.raises(AllNonpositive):
        solve_pi_sigma(CovModel.identity(2), [0.0, -1.0])
    with pytest.raises(PreconditionViolation):
        solve_pi_sigma(CovModel.identity(2), [1.0])


@given(instances())
def test_certificate_invariants(inst):
    model, a, _ = inst
    sol = solve_pi_sigma(model, a)
    I, J = list(sol.index_I), list(sol.index_J)
    S = model.sigma
    assert np.allclose(sol.a_tilde[I], a[I])
    lam_I = np.linalg.solve(S[np.ix_(I, I)], a[I])
    assert np.allclose(sol.lam[I], lam_I, rtol=1e-9, atol=1e-12) and np.all(lam_I > TAU_ACT)
    assert np.all(sol.a_tilde >= a - TAU_ACT)
    assert np.allclose(np.linalg.solve(S, sol.a_tilde), sol.lam, atol=1e-8 * (1 + np.abs(sol.lam).max()))
    assert np.all(sol.lam[J] >= 0)
    assert sol.value == pytest.approx(a[I] @ lam_I, rel=1e-10) and sol.value > 0
    assert sol.value == pytest.approx(sol.a_tilde @ np.linalg.solve(S, sol.a_tilde), rel=1e-8)


@given(instances())
def test_unique_kkt_set(inst):
    model, a, _ = inst
    S = model.sigma
    passing = []
    for size in range(1, model.dim + 1):
        for I in itertools.combinations(range(model.dim), size):
            I = list(I)
            J = [j for j in range(model.dim) if j not in I]
            lam = np.linalg.solve(S[np.ix_(I, I)], a[I])
            ok = np.all(lam > TAU_ACT)
            if J:
                ok &= np.all(S[np.ix_(J, I)] @ lam >= a[J] - TAU_ACT)
            if ok:
                passing.append(tuple(I))
    sol = solve_pi_sigma(model, a)
    assert len(passing) == 1 or sol.boundary_degenerate
    assert passing[0] == sol.index_I


@given(instances())
def test_optimal_against_random_feasible_points(inst):
    model, a, rng = inst
    sol = solve_pi_sigma(model, a)
    x = a + np.abs(rng.normal(size=(1000, model.dim))) * rng.exponential(size=(1000, 1))
    q = np.einsum("ij,ij->i", x, np.linalg.solve(model.sigma, x.T).T)
    assert np.all(q >= sol.value - 1e-9)


@given(instances(), st.floats(0.1, 10.0))
def test_scale_equivariance(inst, kappa):
    model, a, _ = inst
    s1, s2 = solve_pi_sigma(model, a), solve_pi_sigma(model, kappa * a)
    assert s1.index_I == s2.index_I
    assert np.allclose(s2.a_tilde, kappa * s1.a_tilde, rtol=1e-9, atol=1e-12)
    assert s2.value == pytest.approx(kappa**2 * s1.value, rel=1e-9)


@given(instances(), st.floats(0.05, 20.0))
def test_time_scale_covariance(inst, t):
    model, a, _ = inst
    s1, s2 = solve_pi_sigma(model, a), solve_pi_sigma(model.scaled(t), a)
    assert s1.index_I == s2.index_I
    assert np.allclose(s1.a_tilde, s2.a_tilde, rtol=1e-9, atol=1e-12)
    assert s2.value == pytest.approx(s1.value / t, rel=1e-9)


@given(instances(d_min=2, d_max=5))
def test_matches_primal_oracle(inst):
    model, a, _ = inst
    sol = solve_pi_sigma(model, a)
    I, x, val = qp_primal_enumeration(model.sigma, a)
    assert sol.value == pytest.approx(val, rel=1e-9)
    assert np.allclose(sol.a_tilde, x, atol=1e-8)


def test_representation_examples():
    m = CovModel([[1.0, 0.5], [0.5, 1.0]])
    sol = solve_pi_sigma(m, [1.0, 0.2])
    assert verify_representation(m, sol, [3.0, -7.0], [0])
    assert verify_representation(m, sol, [3.0, -7.0], [0, 1])
    with pytest.raises(PreconditionViolation):
        verify_representation(m, solve_pi_sigma(m, [1.0, 1.0]), [1.0, 1.0], [0])


@given(st.integers(0, 2**32 - 1))
def test_representation_sweep(seed):
    rng = np.random.default_rng(seed)
    model = CovModel(random_spd(rng, 4))
    a = rng.normal(size=4)
    a[0] = abs(a[0]) + 0.1
    sol = solve_pi_sigma(model, a)
    extra = [j for j in sol.index_J if rng.random() < 0.5]
    F = sorted(set(sol.index_I) | set(extra))
    assert all(verify_representation(model, sol, rng.normal(size=4) * 5, F) for _ in range(100))
