"""Acceptance criteria 1-8.  Each test records one PASS/FAIL line (see conftest)."""

import math
import time

import numpy as np
import pytest
from scipy.stats import norm

from brm import (CovModel, RiskSpec, constant_C, equicorrelated_closed_forms, estimate_E,
                 infinite_horizon_lograte, psi_k_asymptotic, sample_failure_time, sandwich, simulate_psi,
                 simulate_psi_infinite, solve_pi_sigma)
from brm.presets import sandwich_corpus
from brm.simulator import ks_against_exponential
from tests.oracles import drifted_first_passage, qp_primal_enumeration

pytestmark = pytest.mark.slow


def test_criterion_1_qp_against_enumeration(report):
    rng = np.random.default_rng(20240601)
    cases = []
    for _ in range(500):
        d = int(rng.integers(2, 7))
        G = rng.normal(size=(d, d))
        while abs(np.linalg.det(G)) < 1e-3:
            G = rng.normal(size=(d, d))
        a = rng.normal(size=d)
        if not np.any(a > 0):
            a[rng.integers(d)] = abs(a[rng.integers(d)]) + 0.05
        cases.append((CovModel.from_gamma(G), a))
    t0 = time.perf_counter()
    sols = [solve_pi_sigma(m, a) for m, a in cases]
    elapsed = time.perf_counter() - t0
    bad_I = bad_x = bad_v = 0
    worst_x = worst_v = 0.0
    for (m, a), sol in zip(cases, sols):
        I, x, val = qp_primal_enumeration(m.sigma, a)
        bad_I += sol.index_I != I
        dx = float(np.linalg.norm(sol.a_tilde - x))
        dv = abs(sol.value - val)
        worst_x, worst_v = max(worst_x, dx), max(worst_v, dv)
        bad_x += dx > 1e-8
        bad_v += dv > 1e-10
    ok = bad_I == bad_x == bad_v == 0 and elapsed < 10
    report(1, ok, f"500 instances: I mismatches {bad_I}, max |a~ diff| {worst_x:.1e}, "
                  f"max |value diff| {worst_v:.1e}, solver time {elapsed:.2f}s")
    assert ok


def test_criterion_2_sandwich_corpus(report):
    n = 10**6
    t0 = time.perf_counter()
    rows = []
    for i, spec in enumerate(sandwich_corpus()):
        b = sandwich(spec, n, seed=100 + i)
        sim = simulate_psi(spec, 256, n, seed=200 + i, refinement_check=False).psi_hat
        lo_s = math.hypot(sim.stderr, b.lower.stderr)
        hi_s = math.hypot(sim.stderr, b.upper.stderr)
        inside = b.lower.value - 3 * lo_s <= sim.value <= b.upper.value + 3 * hi_s
        rows.append((i, spec.dim, spec.k, b.lower.value, sim.value, b.upper.value, inside))
    elapsed = time.perf_counter() - t0
    for r in rows:
        print(f"  spec {r[0]:2d} d={r[1]} k={r[2]}: p_T={r[3]:.5f} psi={r[4]:.5f} K p_T={r[5]:.5f} {'ok' if r[6] else 'OUT'}")
    psis = [r[4] for r in rows]
    ok = all(r[6] for r in rows) and elapsed < 300 and 1e-4 <= min(psis) and max(psis) <= 0.3
    report(2, ok, f"{sum(r[6] for r in rows)}/20 inside [p_T - 3s, K p_T + 3s], psi in "
                  f"[{min(psis):.4f}, {max(psis):.4f}], {elapsed:.0f}s at 1e6 reps")
    assert ok


def test_criterion_3_one_dimensional_constant(report):
    spec = RiskSpec(CovModel.identity(1), [1.0], [1.0], 5.0, 1)
    C = constant_C(spec, n_rep=10**6, seed=3).c_of_a
    c_ok = abs(C.value - 2.0) <= 3 * C.stderr and C.stderr <= 0.02
    asym = psi_k_asymptotic(spec, n_rep=10**6, seed=3).value
    ratio = asym / drifted_first_passage(5.0, 1.0)
    ok = c_ok and 0.9 <= ratio <= 1.1
    report(3, ok, f"C = {C.value:.4f} +- {C.stderr:.4f} (target 2), chain/exact at u=5, c=1: {ratio:.4f}")
    assert ok


def test_criterion_4_infinite_horizon(report):
    t0 = time.perf_counter()
    errs = []
    for a, c in [(1.0, 1.0), (2.0, 3.0), (0.5, 2.0)]:
        u = 4.0
        est = infinite_horizon_lograte(RiskSpec(CovModel.identity(1), [a], [c], u, 1, t_end=math.inf))
        errs.append(abs(-est.log_value - 2 * a * c * u) / (2 * a * c * u))
    spec = RiskSpec(CovModel.identity(1), [1.0], [1.0], 4.0, 1, t_end=math.inf)
    sim = simulate_psi_infinite(spec, None, 128, 10**7, seed=4).psi_hat
    elapsed = time.perf_counter() - t0
    target = math.exp(-8.0)
    ok = max(errs) <= 4 * np.finfo(float).eps and sim.covers(target) and elapsed < 180
    report(4, ok, f"max rel. lograte error {max(errs):.1e}; psi(u=4) = {sim.value:.4e} "
                  f"CI [{sim.ci95[0]:.4e}, {sim.ci95[1]:.4e}] vs e^-8 = {target:.4e}; {elapsed:.0f}s")
    assert ok


def test_criterion_5_failure_time_law(report):
    trend_us = (3.0, 4.0, 5.0, 6.0, 8.0, 10.0)
    n_rep = {1: 20_000, 2: 100_000}
    lines, ok = [], True
    for d in (1, 2):
        stats = {}
        for u in trend_us:
            spec = RiskSpec(CovModel.identity(d), np.ones(d), np.zeros(d), u, d)
            ft = sample_failure_time(spec, n_rep=n_rep[d], seed=50 + d)
            stats[u] = (ks_against_exponential(ft.samples, ft.rate, ft.weights), ft.rate)
        final, rate = stats[trend_us[-1]]
        trend = " ".join(f"u={u:g}:{stats[u][0].statistic:.3f}" for u in trend_us)
        d_ok = final.passed and final.n_eff >= 500 and stats[4.0][0].statistic < stats[3.0][0].statistic
        ok &= d_ok
        lines.append(f"d={d} rate {rate:g}: KS {final.statistic:.4f} <= {final.critical:.4f} "
                     f"(n_eff {final.n_eff:.0f}) at u={trend_us[-1]:g}; trend {trend}")
    report(5, ok, " | ".join(lines))
    assert ok


def test_criterion_6_ratio_stabilization(report):
    us = (2.5, 3.0, 3.5)
    base = RiskSpec(CovModel.identity(2), [1.0, 1.0], [0.0, 0.0], 2.5, 2)
    C = constant_C(base, n_rep=10**5, seed=6).c_of_a
    chain, exact_p1 = [], []
    for u in us:
        s = base.with_u(u)
        sim = simulate_psi(s, 256, 10**6, seed=60, tilt=True, refinement_check=False).psi_hat
        asym = psi_k_asymptotic(s, n_rep=10**5, seed=6)
        chain.append((sim.value / asym.value, sim.stderr / asym.value))
        exact_p1.append(sim.value / (C.value * norm.sf(u) ** 2))
    gaps = [abs(1 - r) for r, _ in chain]
    ok = gaps[0] > gaps[1] > gaps[2] and 0.5 <= chain[-1][0] <= 2.0
    report(6, ok, "psi_sim / (C p1-asymptotic): " + ", ".join(f"u={u:g}: {r:.3f}+-{s:.3f}" for u, (r, s) in zip(us, chain))
           + f" | with exact Gaussian p1: " + ", ".join(f"{r:.3f}" for r in exact_p1) + f" | C = {C.value:.3f}")
    assert ok


def test_criterion_7_equicorrelated_closed_form(report):
    worst, flips = 0.0, []
    for rho in (-0.2, 0.0, 0.3, 0.7):
        for d in (3, 5):
            res = equicorrelated_closed_forms(d, rho, with_constant=False)
            worst = max(worst, float(np.max(np.abs(res.lam - 1 / (1 + rho * (d - 1))))))
            # flip of the full-index criterion in a_d with a_1..a_{d-1} = 1
            thr = rho * (d - 1) / (1 + rho * (d - 2))
            for side, a_d in (("above", thr + 1e-6), ("below", thr - 1e-6)):
                a = np.ones(d)
                a[-1] = a_d
                cf = equicorrelated_closed_forms(d, rho, a=a, with_constant=False)
                qp = solve_pi_sigma(CovModel.equicorrelated(d, rho), a)
                want = d if side == "above" else d - 1
                flips.append(cf.full_index == (side == "above") and qp.m == want and len(cf.index_I) == want)
    ok = worst <= 1e-12 and all(flips)
    report(7, ok, f"max |lambda - 1/(1+rho(d-1))| = {worst:.1e} over 8 cases; "
                  f"|I| flips at the threshold in {sum(flips)}/{len(flips)} probes")
    assert ok


@pytest.mark.parametrize("m", [1, 2, 3])
def test_criterion_8_estimator_consistency(report, m):
    model = CovModel.equicorrelated(m, 0.5) if m == 3 else CovModel.identity(m)
    a = np.ones(m)
    lam = solve_pi_sigma(model, a).lam
    n = {1: 100_000, 2: 50_000, 3: 30_000}[m]
    caps = (2.0, 4.0, 8.0)
    est = {L: estimate_E(model, a, lam, L, n_rep=n, seed=80, stream_tag=f"L{L}") for L in caps}
    mono = all(est[x].value <= est[y].value + 2 * math.hypot(est[x].stderr, est[y].stderr)
               for x, y in zip(caps, caps[1:]))
    L = caps[-1]
    base = est[L]
    steps = 4 * int(L)
    fine = estimate_E(model, a, lam, L, grid_steps=2 * steps, n_rep=n, seed=80, stream_tag="fine")
    other = estimate_E(model, a, lam, L, n_rep=n, seed=81, stream_tag=f"L{L}")
    grid_ok = abs(fine.value - base.value) <= 2 * math.hypot(fine.stderr, base.stderr)
    seed_ok = abs(other.value - base.value) <= 3 * math.hypot(other.stderr, base.stderr)
    ok = mono and grid_ok and seed_ok
    report(8, ok, f"m={m}: E(2,4,8) = " + ", ".join(f"{est[c].value:.3f}+-{est[c].stderr:.3f}" for c in caps)
           + f"; 2n grid {fine.value:.3f}+-{fine.stderr:.3f}; seed 81 {other.value:.3f}+-{other.stderr:.3f}")
    assert ok
