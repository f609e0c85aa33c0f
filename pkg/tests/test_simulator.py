import math

import numpy as np
import pytest
from scipy import stats

from brm import CovModel, RiskSpec, sample_failure_time, simulate_psi, simulate_psi_infinite
from brm.errors import InsufficientHits, PreconditionViolation, Unsupported
from brm.rng import stream
from brm.simulator import infinite_t_cap, ks_against_exponential
from tests.oracles import drifted_first_passage

N = 100_000


def one_d(u=1.0, a=1.0, c=1.0, **kw):
    return RiskSpec(CovModel.identity(1), [a], [c], u, 1, **kw)


def test_reflection_value():
    res = simulate_psi(one_d(), 256, 200_000, 1)
    exact = drifted_first_passage(1.0, 1.0)
    assert exact == pytest.approx(0.0904, abs=1e-4)
    assert abs(res.psi_hat.value - exact) <= 3 * res.psi_hat.stderr
    assert not res.warnings


def test_tilted_matches_plain_and_exact():
    s = one_d(u=3.0, c=0.5)
    exact = drifted_first_passage(3.0, 0.5)
    est = simulate_psi(s, 256, 50_000, 2, tilt=True, refinement_check=False).psi_hat
    assert abs(est.value - exact) <= 3 * est.stderr
    plain_rel = math.sqrt((1 - exact) / (exact * 50_000))
    assert est.stderr / est.value < plain_rel / 4


def test_multivariate_tilt_agrees_with_plain():
    s = RiskSpec(CovModel.equicorrelated(3, 0.4), [1.0, 0.8, 1.2], [0.3, 0.0, -0.2], 1.2, 2)
    plain = simulate_psi(s, 256, 200_000, 3, refinement_check=False).psi_hat
    tilted = simulate_psi(s, 256, 100_000, 4, tilt=True, refinement_check=False).psi_hat
    assert abs(plain.value - tilted.value) <= 3 * math.hypot(plain.stderr, tilted.stderr)


def test_start_time_respected():
    s = RiskSpec(CovModel.identity(1), [1.0], [0.0], 1.0, 1, s_start=0.5)
    res = simulate_psi(s, 256, N, 5, refinement_check=False).psi_hat
    # P(max_{[0.5,1]} B > 1) = P(B(0.5) > 1) + E[P(bridge-free max over 0.5 more > 1 - B(0.5)); B(0.5) <= 1]
    z = np.linspace(-8, 1, 20001)
    inner = stats.norm.pdf(z, scale=math.sqrt(0.5)) * 2 * stats.norm.sf((1 - z) / math.sqrt(0.5))
    exact = stats.norm.sf(1 / math.sqrt(0.5)) + np.trapezoid(inner, z)
    assert abs(res.value - exact) <= 3 * res.stderr


def test_empty_and_certain_regimes():
    far = RiskSpec(CovModel.identity(2), [1.0, 1.0], [0.0, 0.0], 30.0, 2)
    assert simulate_psi(far, 256, 20_000, 0, refinement_check=False).psi_hat.value == 0.0
    below = RiskSpec(CovModel.identity(1), [-1.0], [0.0], 1.0, 1, s_start=0.1)
    assert simulate_psi(below, 256, 20_000, 0, refinement_check=False).psi_hat.value > 0.99


def test_monotone_in_u_k_and_grid():
    m = CovModel.equicorrelated(3, 0.3)
    base = RiskSpec(m, np.ones(3), np.full(3, 0.2), 1.2, 2)
    v = lambda s, g=256: simulate_psi(s, g, 50_000, 9, refinement_check=False).psi_hat.value
    by_u = [v(base.with_u(u)) for u in (1.0, 1.2, 1.5)]
    assert by_u[0] >= by_u[1] >= by_u[2]
    by_k = [v(RiskSpec(m, np.ones(3), np.full(3, 0.2), 1.2, k)) for k in (1, 2, 3)]
    assert by_k[0] >= by_k[1] >= by_k[2]
    assert v(base, 512) >= v(base, 256)


def test_refinement_check_reported():
    res = simulate_psi(one_d(u=1.5), 256, 50_000, 2)
    coarse, fine = res.refinement_check
    assert coarse == res.psi_hat and fine.value >= coarse.value


def test_seed_and_thread_determinism():
    s = RiskSpec(CovModel.equicorrelated(2, 0.5), [1.0, 1.0], [0.0, 0.0], 1.5, 2)
    a = simulate_psi(s, 256, 30_000, 7, threads=1, refinement_check=False)
    b = simulate_psi(s, 256, 30_000, 7, threads=3, refinement_check=False)
    assert a.psi_hat == b.psi_hat
    c = simulate_psi(s, 256, 30_000, 8, refinement_check=False)
    assert c.psi_hat != a.psi_hat


def test_preconditions():
    with pytest.raises(PreconditionViolation):
        simulate_psi(one_d(), 128, 1000, 0)
    with pytest.raises(Unsupported):
        simulate_psi(one_d(t_end=math.inf), 256, 1000, 0)
    with pytest.raises(PreconditionViolation):
        simulate_psi(one_d(), 256, 1000, 0, tilt=True, hitting_times=True)


def test_hitting_times_follow_first_passage_law():
    u, c = 1.0, 0.5
    res = simulate_psi(one_d(u=u, c=c), 256, 100_000, 4, hitting_times=True, refinement_check=False)
    tau = res.hitting_times
    p1 = drifted_first_passage(u, c)
    cdf = lambda t: np.array([drifted_first_passage(u, c, x) for x in np.atleast_1d(t)]) / p1
    assert stats.kstest(tau, cdf).pvalue > 1e-3


# ----------------------------------------------------------------- infinite


def test_infinite_ruin_probability():
    s = one_d(u=2.0, t_end=math.inf)
    res = simulate_psi_infinite(s, None, 128, 200_000, 3)
    assert res.diagnostics["t_cap"] == pytest.approx(infinite_t_cap(s)) and infinite_t_cap(s) == pytest.approx(8.0)
    assert res.psi_hat.covers(math.exp(-4.0)) or abs(res.psi_hat.value - math.exp(-4)) <= 3 * res.psi_hat.stderr


def test_infinite_independent_union():
    s = RiskSpec(CovModel.identity(2), [1.0, 2.0], [1.0, 0.5], 1.5, 1, t_end=math.inf)
    res = simulate_psi_infinite(s, None, 128, 200_000, 4).psi_hat
    exact = 1 - (1 - math.exp(-2 * 1.0 * 1.0 * 1.5)) * (1 - math.exp(-2 * 2.0 * 0.5 * 1.5))
    assert abs(res.value - exact) <= 3 * res.stderr


def test_infinite_cap_doubling_is_negligible():
    s = one_d(u=2.0, t_end=math.inf)
    a = simulate_psi_infinite(s, 8.0, 128, 100_000, 5).psi_hat
    b = simulate_psi_infinite(s, 16.0, 256, 100_000, 5).psi_hat
    assert abs(a.value - b.value) <= 3 * math.hypot(a.stderr, b.stderr)


def test_infinite_cap_too_small():
    with pytest.raises(PreconditionViolation):
        simulate_psi_infinite(one_d(u=2.0, t_end=math.inf), 1.0, 128, 1000, 0)


# ------------------------------------------------------------- failure time


def test_failure_time_rates():
    assert sample_failure_time(one_d(u=3.0, c=0.0), n_rep=20_000, seed=1).rate == pytest.approx(0.5)
    assert sample_failure_time(one_d(u=3.0, c=0.0, t_end=2.0), n_rep=20_000, seed=1).rate == pytest.approx(1 / 8)
    two = RiskSpec(CovModel.identity(2), [1.0, 1.0], [0.0, 0.0], 3.0, 2)
    assert sample_failure_time(two, n_rep=20_000, seed=1).rate == pytest.approx(1.0)


def test_failure_time_tilted_matches_exact_conditional_law():
    u = 3.0
    ft = sample_failure_time(one_d(u=u, c=0.0), n_rep=20_000, seed=6)
    # X = u^2 (1 - tau) given tau <= 1, with P(tau <= t) = 2 Phi_bar(u / sqrt(t)):
    # P(X <= x) = 1 - P(tau <= 1 - x / u^2) / P(tau <= 1)
    x = np.sort(ft.samples)
    w = ft.weights[np.argsort(ft.samples)]
    emp = np.cumsum(w) / w.sum()
    before = np.concatenate([[0.0], emp[:-1]])
    F = 1 - stats.norm.sf(u / np.sqrt(1 - x / u**2)) / stats.norm.sf(u)
    D = max(np.max(np.abs(emp - F)), np.max(np.abs(F - before)))
    assert D <= stats.kstwo.ppf(0.99, int(ft.n_eff))


def test_failure_time_guards():
    with pytest.raises(PreconditionViolation):
        sample_failure_time(RiskSpec(CovModel.identity(2), [1.0, 1.0], [0.0, 0.0], 3.0, 1))
    with pytest.raises(PreconditionViolation):
        sample_failure_time(one_d(u=6.0), grid=256, refine_depth=2, n_rep=1000)
    with pytest.raises(InsufficientHits):
        sample_failure_time(one_d(u=6.0, c=0.0), n_rep=1000, seed=0, tilt=False)


def test_ks_harness():
    g = stream(0, "ks")
    assert ks_against_exponential(g.exponential(2.0, 5000), 0.5).passed
    assert not ks_against_exponential(g.exponential(1.0, 10_000), 0.5).passed
    assert not ks_against_exponential(np.full(500, 2.0), 0.5).passed
    with pytest.raises(PreconditionViolation):
        ks_against_exponential(np.ones(100), 1.0)


def test_ks_null_pass_rate():
    g = stream(1, "ks-null")
    passes = [ks_against_exponential(g.exponential(1.0, 300), 1.0).passed for _ in range(400)]
    # level 0.01: at most about 4 failures expected; 12 is > 4 sd away
    assert sum(not p for p in passes) <= 12
