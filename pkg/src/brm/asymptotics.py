"""Exact asymptotics of simultaneous failure probabilities.

Finite horizon::

    psi_k(S, 1, a u) ~ sum over k-subsets I' of  C(a_I') p1(a_I' u)

where ``p1(a u) = P(W(1) > a u + c)`` is given by a Laplace-type Gaussian
tail formula built on the quadratic program of :mod:`brm.qp`, and ``C`` is a
Pickands-type constant

    C(a) = prod(lam_I) * E,   E = int P(exists t >= 0: W_I(t) - t a_I > x) exp(lam_I' x) dx,

estimated by Monte Carlo on ``[0, Lambda]`` with a doubling truncation schedule.
Other horizons are reduced to ``T = 1`` by Brownian self-similarity.  The
leading order does not depend on the start time ``S``, which is ignored here.

Infinite horizon: only the exponential rate ``(u/2) min_t r_I(t)`` is
available, where ``r_I(t) = min_{x >= a_I + c_I t} x' Sigma_II^{-1} x / t``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .bounds import RiskSpec
from .errors import NoMinimizer, PreconditionViolation, TruncationNotConverged, Unsupported
from .gauss import CovModel, McEstimate, mvn_survival
from .paths import ExceedanceTracker, check_dyadic, levy_grid, path_maxima
from .qp import QpSolution, solve_pi_sigma
from .rng import Accumulator, map_chunks, stream, stream_key

log = logging.getLogger(__name__)

LAMBDA0 = 8.0
MAX_DOUBLINGS = 6  # stop at 64 * lambda0
STEPS_PER_UNIT = 4
E_DEPTH = 12  # multivariate crossing event; one dimension only needs E_DEPTH_1D
E_DEPTH_1D = 4
E_EPS = 1e-3
GOLDEN_TOL = 1e-8
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def _subset_label(idx) -> str:
    return ",".join(str(i + 1) for i in idx)


@dataclass
class PickandsEstimate:
    """Truncated Pickands-type integral ``E([0, Lambda])`` and the constant ``C(a)``.

    ``c_of_a = prefactor * value``.  ``cond_prob`` is the boundary factor of
    the Gaussian tail formula for the same problem; it is reported for
    reference and is not part of ``c_of_a``.
    """

    lambda_cap: float
    value: McEstimate
    prefactor: float
    cond_prob: McEstimate
    c_of_a: McEstimate
    index_I: tuple[int, ...] = ()
    history: list[tuple[float, McEstimate]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lambda_cap": self.lambda_cap,
            "E": self.value.to_dict(),
            "prefactor": self.prefactor,
            "cond_prob": self.cond_prob.to_dict(),
            "C": self.c_of_a.to_dict(),
            "I": [i + 1 for i in self.index_I],
            "history": [{"lambda_cap": lc, "E": e.to_dict()} for lc, e in self.history],
        }


@dataclass
class SubsetTerm:
    subset: tuple[int, ...]
    value: float
    log_value: float
    qp: QpSolution | None = None
    constant: PickandsEstimate | None = None
    cond_prob: McEstimate | None = None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "subset": [i + 1 for i in self.subset],
            "value": self.value,
            "log_value": self.log_value,
            "qp": None if self.qp is None else self.qp.to_dict(),
            "C": None if self.constant is None else self.constant.to_dict(),
            "cond_prob": None if self.cond_prob is None else self.cond_prob.to_dict(),
            **self.detail,
        }


@dataclass
class AsymptoticEstimate:
    value: float
    log_value: float
    terms: list[SubsetTerm]
    dominant_subsets: list[tuple[int, ...]]
    regime: str = "finite_horizon"

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "value": self.value,
            "log_value": self.log_value,
            "dominant_subsets": [[i + 1 for i in s] for s in self.dominant_subsets],
            "terms": [t.to_dict() for t in self.terms],
        }


def _sum_logs(logs) -> float:
    logs = [x for x in logs if x > -math.inf]
    if not logs:
        return -math.inf
    top = max(logs)
    return top + math.log(math.fsum(math.exp(x - top) for x in logs))


def _unit(spec: RiskSpec) -> RiskSpec:
    if not spec.finite:
        raise Unsupported("finite-horizon asymptotics need a finite T")
    return spec if spec.t_end == 1.0 else spec.unit_horizon()


# ---------------------------------------------------------------- Gaussian tail


def conditional_factor(model: CovModel, sol: QpSolution, c, *, formula: str = "point",
                       n_rep: int = 10**5, seed: int = 0, threads=None) -> McEstimate:
    """Boundary factor for the indices ``U`` where the QP constraint binds with zero multiplier.

    ``formula="point"`` gives ``P(W_U(1) > c_U | W_I(1) = c_I)`` from the
    conditional Gaussian law.  ``formula="orthant"`` gives the ratio
    ``P(W_U > c_U, W_I > c_I) / P(W_I > c_I)`` of two survival estimates on a
    shared stream.  Returns exactly 1 when ``U`` is empty.
    """
    c = np.asarray(c, dtype=float)
    I, U = list(sol.index_I), list(sol.index_U)
    if not U:
        return McEstimate.exact(1.0, seed)
    if formula == "point":
        S = model.sigma
        B = model.restrict(I).solve(S[np.ix_(I, U)])  # Sigma_II^{-1} Sigma_IU
        mean = B.T @ c[I]
        cov = S[np.ix_(U, U)] - S[np.ix_(U, I)] @ B
        return mvn_survival(CovModel(cov), list(c[U] - mean), n_rep, seed, threads)
    if formula == "orthant":
        d = model.dim
        joint = [c[i] if i in I or i in U else None for i in range(d)]
        base = [c[i] if i in I else None for i in range(d)]
        num = mvn_survival(model, joint, n_rep, seed, threads)
        den = mvn_survival(model, base, n_rep, seed, threads)
        ratio = num.value / den.value
        se = ratio * math.hypot(num.stderr / max(num.value, 1e-300), den.stderr / den.value)
        return McEstimate(ratio, se, n_rep, seed)
    raise PreconditionViolation(f"unknown formula {formula!r}")


def _log_p1_core(model: CovModel, sol: QpSolution, c, u: float, formula: str) -> float:
    """``log`` of ``prod(lam_I)^{-1} u^{-m} phi(.)`` without the boundary factor."""
    I = list(sol.index_I)
    c = np.asarray(c, dtype=float)
    if formula == "point":
        sub = model.restrict(I)
        x = u * sol.a[I] + c[I]
        dim, logdet, quad = len(I), sub.logdet(), float(x @ sub.solve(x))
    else:
        x = u * sol.a_tilde + c
        dim, logdet, quad = model.dim, model.logdet(), float(x @ model.solve(x))
    log_phi = -0.5 * quad - 0.5 * logdet - 0.5 * dim * math.log(2 * math.pi)
    return -float(np.sum(np.log(sol.lam[I]))) - sol.m * math.log(u) + log_phi


def tail_asymptotic_p1(spec: RiskSpec, *, formula: str = "point", n_rep: int = 10**5, seed: int = 0,
                       threads=None) -> AsymptoticEstimate:
    """Tail formula for ``p1(a u) = P(W(T) > a u + c T)`` over all ``d`` components.

    With ``I`` the active set of the quadratic program and ``U`` its boundary
    indices::

        p1 ~ prod(lam_I)^{-1} u^{-m} phi_I(u a_I + c_I) P(W_U > c_U | W_I = c_I)

    ``formula="orthant"`` evaluates the variant with the full ``d``-dimensional
    density at ``u a~ + c`` and the orthant conditional probability.  The two
    coincide when ``I`` is the full index set.
    """
    unit = _unit(spec)
    sol = solve_pi_sigma(unit.model, unit.a)
    cond = conditional_factor(unit.model, sol, unit.c, formula=formula, n_rep=n_rep, seed=seed, threads=threads)
    log_core = _log_p1_core(unit.model, sol, unit.c, unit.u, formula)
    log_value = log_core + math.log(cond.value) if cond.value > 0 else -math.inf
    value = math.exp(log_value)
    idx = tuple(range(spec.dim))
    term = SubsetTerm(idx, value, log_value, qp=sol, cond_prob=cond, detail={"formula": formula})
    return AsymptoticEstimate(value, log_value, [term], [idx])


# ----------------------------------------------------------- Pickands constant


def _default_steps(lambda_cap: float) -> int:
    n = max(1, math.ceil(STEPS_PER_UNIT * lambda_cap))
    return 1 << (n - 1).bit_length()


def estimate_E(model: CovModel, a_I, lam_I, lambda_cap: float, grid_steps: int | None = None,
               n_rep: int = 10**5, seed: int = 0, *, refine_depth: int | None = None, eps: float = E_EPS,
               max_depth: int | None = None,
               stream_tag: str = "", threads=None) -> McEstimate:
    """Unbiased estimate of ``E([0, Lambda]) = int P(exists t <= Lambda: Y(t) > x) exp(lam' x) dx``.

    ``Y(t) = W_I(t) - t a_I``.  Per path, ``M`` is the componentwise maximum
    of ``Y``, ``x_i = M_i - Exp(1)/lam_i`` and the path contributes
    ``prod(1/lam_i) exp(lam' M) 1{exists t: Y(t) > x}``.  Paths are drawn on
    ``grid_steps`` dyadic steps (default: about 4 per time unit).  Maxima and
    the crossing event are resolved by keyed bridge refinement up to
    ``refine_depth`` further halvings (default 4 for ``m = 1``, 12 otherwise);
    intervals still open at that depth contribute exact bridge-maximum draws
    to ``M``.  For ``m = 1`` the crossing indicator is identically one, so the
    estimate targets the continuous-time integral.  For ``m > 1`` the crossing
    event is monitored on the refined nodes, which biases ``E`` slightly down.
    """
    a_I = np.asarray(a_I, dtype=float).reshape(-1)
    lam_I = np.asarray(lam_I, dtype=float).reshape(-1)
    m = model.dim
    if a_I.size != m or lam_I.size != m:
        raise PreconditionViolation("a_I and lam_I must match the model dimension")
    if np.any(lam_I <= 0):
        raise PreconditionViolation("all multipliers lam_I must be positive")
    if lambda_cap < 0:
        raise PreconditionViolation("lambda_cap must be non-negative")
    log_pref = -float(np.sum(np.log(lam_I)))
    if lambda_cap == 0:
        return McEstimate.exact(math.exp(log_pref), seed)
    if refine_depth is None:
        refine_depth = E_DEPTH_1D if m == 1 else E_DEPTH
    max_depth = refine_depth if max_depth is None else max_depth
    n_steps = _default_steps(lambda_cap) if grid_steps is None else int(grid_steps)
    check_dyadic(n_steps)
    chol = model.chol
    times = np.linspace(0.0, lambda_cap, n_steps + 1)
    key = stream_key(seed, "E", stream_tag, "bridge")
    chunk = max(256, min(8192, (1 << 21) // ((n_steps + 1) * m)) // 2 * 2)

    def run(j, size, offset):
        X = levy_grid(stream(seed, "E", stream_tag, j), chol, -a_I, 0.0, lambda_cap, n_steps, size)
        M, _ = path_maxima(X, times, key, chol, max_depth, eps, path_offset=offset)
        w = np.exp(M @ lam_I + log_pref)
        if m > 1:
            x = M - stream(seed, "E-exp", stream_tag, j).standard_exponential((size, m)) / lam_I
            tracker = ExceedanceTracker(x, np.diag(model.sigma), k=m)
            hit, _, _ = tracker.run(X, times, key, chol, refine_depth, path_offset=offset)
            w = np.where(hit, w, 0.0)
        h = size // 2
        return 0.5 * (w[:h] + w[h:])

    acc = Accumulator()
    for part in map_chunks(run, n_rep, threads, chunk=chunk):
        acc.add(part)
    mean, se = acc.mean_stderr()
    return McEstimate(mean, se, n_rep, seed)


_C_CACHE: dict = {}


def _pickands(model: CovModel, sol: QpSolution, c, *, lambda0, n_rep, seed, grid_steps, refine_depth,
              threads) -> PickandsEstimate:
    I = list(sol.index_I)
    sub = model.restrict(I)
    a_I, lam_I = sol.a[I], sol.lam[I]
    cache_key = (sub.sigma.tobytes(), a_I.tobytes(), lambda0, n_rep, seed, grid_steps, refine_depth)
    cond = conditional_factor(model, sol, c, n_rep=n_rep, seed=seed, threads=threads)
    if cache_key in _C_CACHE:
        hit = _C_CACHE[cache_key]
        return PickandsEstimate(hit.lambda_cap, hit.value, hit.prefactor, cond, hit.c_of_a,
                                tuple(sol.index_I), list(hit.history))
    prefactor = float(np.prod(lam_I))
    history = []
    prev = None
    for i in range(MAX_DOUBLINGS + 1):
        cap = lambda0 * 2**i
        steps = None if grid_steps is None else int(grid_steps) * 2**i
        est = estimate_E(sub, a_I, lam_I, cap, steps, n_rep, seed, refine_depth=refine_depth,
                         stream_tag=f"{a_I.tobytes().hex()}:{i}", threads=threads)
        history.append((cap, est))
        if prev is not None and abs(est.value - prev.value) < 2 * math.hypot(est.stderr, prev.stderr):
            out = PickandsEstimate(cap, est, prefactor, cond, est.scaled(prefactor), tuple(I), history)
            _C_CACHE[cache_key] = out
            return out
        prev = est
    raise TruncationNotConverged(
        "E([0, Lambda]) did not stabilise under doubling",
        lambda_caps=[h[0] for h in history],
        values=[h[1].value for h in history],
        stderrs=[h[1].stderr for h in history],
    )


def constant_C(spec: RiskSpec, *, lambda0: float = LAMBDA0, n_rep: int = 10**5, seed: int = 0,
               grid_steps: int | None = None, refine_depth: int | None = None, threads=None) -> PickandsEstimate:
    """Pickands-type constant ``C(a)`` for the full index vector of ``spec``.

    ``E([0, Lambda])`` is estimated for ``Lambda = lambda0 * 2**i`` on
    independent streams until two successive values differ by less than two
    joint standard errors; ``TruncationNotConverged`` after ``64 lambda0``.
    ``grid_steps`` (if given) is the base step count at ``lambda0`` and is
    doubled along with ``Lambda``.  Results are cached per restricted problem.
    """
    if lambda0 <= 0:
        raise PreconditionViolation("lambda0 must be positive")
    sol = solve_pi_sigma(spec.model, spec.a)
    unit_c = _unit(spec).c if spec.finite else spec.c
    return _pickands(spec.model, sol, unit_c, lambda0=lambda0, n_rep=n_rep, seed=seed, grid_steps=grid_steps,
                     refine_depth=refine_depth, threads=threads)


def clear_constant_cache() -> None:
    _C_CACHE.clear()


# ------------------------------------------------------------ finite horizon


def _order_key(sol: QpSolution, c) -> tuple[float, float, int]:
    """Exponent coefficients of a subset term: ``u^2``, ``u`` and the power ``u^{-m}``.

    Smaller tuples are asymptotically larger terms.
    """
    I = list(sol.index_I)
    return (sol.value, float(sol.lam[I] @ np.asarray(c)[I]), sol.m)


def _dominant(keys: dict, tol: float = 1e-9) -> list:
    best = min(keys.values())

    def close(k):
        return abs(k[0] - best[0]) <= tol * (1 + abs(best[0])) and abs(k[1] - best[1]) <= tol * (1 + abs(best[1])) \
            and k[2] == best[2]

    return sorted(s for s, k in keys.items() if close(k))


def psi_k_asymptotic(spec: RiskSpec, *, formula: str = "point", lambda0: float = LAMBDA0, n_rep: int = 10**5,
                     seed: int = 0, grid_steps: int | None = None, refine_depth: int | None = None,
                     threads=None) -> AsymptoticEstimate:
    """Sum over k-subsets ``I'`` of ``C(a_I') p1(a_I' u)``.

    Subsets whose restricted ``a`` has no positive component are skipped with
    a log message.  ``dominant_subsets`` are the subsets of leading
    asymptotic order: smallest ``u^2`` coefficient, then smallest ``u``
    coefficient, then smallest power of ``u^{-1}``.
    """
    unit = _unit(spec)
    unit.check_finite_asymptotics()
    terms, keys = [], {}
    for idx in spec.subsets():
        sub = unit.restrict(idx)
        if np.all(sub.a <= 0):
            log.info("subset %s skipped: restricted a has no positive component", _subset_label(idx))
            continue
        p1 = tail_asymptotic_p1(sub, formula=formula, n_rep=n_rep, seed=seed, threads=threads)
        sol = p1.terms[0].qp
        C = _pickands(sub.model, sol, sub.c, lambda0=lambda0, n_rep=n_rep, seed=seed, grid_steps=grid_steps,
                      refine_depth=refine_depth, threads=threads)
        log_value = p1.log_value + math.log(C.c_of_a.value)
        detail = {"p1": p1.value, "I_local": [i + 1 for i in sol.index_I]}
        terms.append(SubsetTerm(tuple(idx), math.exp(log_value), log_value, sol, C, p1.terms[0].cond_prob, detail))
        keys[tuple(idx)] = _order_key(sol, sub.c)
    log_value = _sum_logs([t.log_value for t in terms])
    return AsymptoticEstimate(math.exp(log_value), log_value, terms, _dominant(keys) if keys else [])


# ----------------------------------------------------------- infinite horizon


def golden_section(f, lo: float, hi: float, tol: float = GOLDEN_TOL) -> float:
    """Minimiser of a unimodal ``f`` on ``(lo, hi)`` to absolute tolerance ``tol``.

    The endpoints are never evaluated.
    """
    x1 = hi - _INV_PHI * (hi - lo)
    x2 = lo + _INV_PHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INV_PHI * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INV_PHI * (hi - lo)
            f2 = f(x2)
    return x1 if f1 <= f2 else x2


@dataclass
class RateFunction:
    """``r_I(t) = min_{x >= a_I + c_I t} x' Sigma_II^{-1} x / t`` with its minimiser."""

    subset: tuple[int, ...]
    model: CovModel
    a: np.ndarray
    c: np.ndarray
    t_hat: float = math.nan
    r_min: float = math.nan

    def r(self, t: float) -> float:
        if not t > 0:
            raise PreconditionViolation("r is defined for t > 0")
        return solve_pi_sigma(self.model, self.a + self.c * t).value / t

    def solution(self, t: float) -> QpSolution:
        return solve_pi_sigma(self.model, self.a + self.c * t)

    def to_dict(self) -> dict:
        return {"subset": [i + 1 for i in self.subset], "t_hat": self.t_hat, "r_min": self.r_min}


def rate_function(spec: RiskSpec, idx=None) -> RateFunction:
    """Rate function of the subset ``idx`` (0-based; default all components) and its minimum.

    The bracket ``(0, t_hi]`` doubles ``t_hi`` from 1 until ``r(t_hi) > r(t_hi / 2)``;
    convexity then puts the minimiser inside, found by golden section.
    """
    idx = tuple(range(spec.dim)) if idx is None else tuple(idx)
    model = spec.model.restrict(idx)
    a, c = spec.a[list(idx)], spec.c[list(idx)]
    if not np.any(c > 0):
        raise NoMinimizer(f"c has no positive component on subset {_subset_label(idx)}")
    rf = RateFunction(idx, model, a.copy(), c.copy())
    t_hi = 1.0
    while rf.r(t_hi) <= rf.r(t_hi / 2):
        t_hi *= 2
        if t_hi > 1e12:
            raise NoMinimizer("rate function keeps decreasing")
    rf.t_hat = golden_section(rf.r, 0.0, t_hi)
    rf.r_min = rf.r(rf.t_hat)
    return rf


def infinite_horizon_lograte(spec: RiskSpec) -> AsymptoticEstimate:
    """Exponential rate of ``psi_k(S, inf, a u)``: ``-log psi ~ (u/2) min_I r_I(t_hat_I)``.

    Only the rate is available; ``value`` is ``exp(log_value)`` with no prefactor.
    """
    spec.check_infinite_asymptotics()
    terms, keys = [], {}
    for idx in spec.subsets():
        rf = rate_function(spec, idx)
        rate = 0.5 * spec.u * rf.r_min
        terms.append(SubsetTerm(tuple(idx), math.exp(-rate), -rate, rf.solution(rf.t_hat),
                                detail={"t_hat": rf.t_hat, "r_min": rf.r_min, "lograte": rate}))
        keys[tuple(idx)] = (rf.r_min, 0.0, 0)
    log_value = max(t.log_value for t in terms)
    return AsymptoticEstimate(math.exp(log_value), log_value, terms, _dominant(keys), regime="infinite_horizon_lograte")


# ----------------------------------------------------- equicorrelated models


def equicorrelated_lambda(a_I, rho: float) -> np.ndarray:
    """``Sigma_II^{-1} a_I`` for an equicorrelated block in closed form."""
    a_I = np.asarray(a_I, dtype=float)
    m = a_I.size
    return (a_I - rho * a_I.sum() / (1 + rho * (m - 1))) / (1 - rho)


def full_index_threshold(a, rho: float) -> float:
    """All indices are active iff ``min(a)`` exceeds ``rho sum(a) / (1 + rho (d - 1))``."""
    a = np.asarray(a, dtype=float)
    return rho * a.sum() / (1 + rho * (a.size - 1))


def dominant_pairs(model: CovModel, c) -> list[tuple[int, int]]:
    """Pairs of leading order for ``k = 2`` and ``a = 1``.

    The largest correlation wins; among those, the smallest ``c_i + c_j``
    (a larger drift raises both thresholds and makes the pair less likely).
    """
    c = np.asarray(c, dtype=float)
    d = model.dim
    if d < 2:
        raise PreconditionViolation("need at least two components")
    sd = np.sqrt(np.diag(model.sigma))
    corr = model.sigma / np.outer(sd, sd)
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    tau = max(corr[i, j] for i, j in pairs)
    top = [(i, j) for i, j in pairs if abs(corr[i, j] - tau) <= 1e-12]
    cmin = min(c[i] + c[j] for i, j in top)
    return [(i, j) for i, j in top if abs(c[i] + c[j] - cmin) <= 1e-12]


@dataclass
class EquicorrelatedResult:
    d: int
    rho: float
    k: int
    index_I: tuple[int, ...]
    lam: np.ndarray
    threshold: float
    full_index: bool
    binom: int
    constant: PickandsEstimate | None = None
    asymptotic: AsymptoticEstimate | None = None
    pairs: list[tuple[int, int]] | None = None

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "rho": self.rho,
            "k": self.k,
            "I": [i + 1 for i in self.index_I],
            "lambda": self.lam.tolist(),
            "threshold": self.threshold,
            "full_index": self.full_index,
            "binom": self.binom,
            "C": None if self.constant is None else self.constant.to_dict(),
            "asymptotic": None if self.asymptotic is None else self.asymptotic.to_dict(),
            "dominant_pairs": None if self.pairs is None else [[i + 1, j + 1] for i, j in self.pairs],
        }


def _equicorrelated_active(a, rho):
    """Active set from the closed form: the ``m`` largest entries of ``a`` for the largest feasible ``m``."""
    order = np.argsort(-a, kind="stable")
    d = a.size
    for m in range(d, 0, -1):
        I = np.sort(order[:m])
        lam_I = equicorrelated_lambda(a[I], rho)
        J = np.setdiff1d(np.arange(d), I)
        if np.all(lam_I > 0) and np.all(rho * lam_I.sum() >= a[J] - 1e-12):
            lam = np.zeros(d)
            lam[I] = lam_I
            return tuple(int(i) for i in I), lam
    raise PreconditionViolation("no active set found; a needs a positive component")


def equicorrelated_closed_forms(d: int, rho: float, a=1.0, c=0.0, k: int | None = None, u: float | None = None, *,
                                with_constant: bool = True, lambda0: float = LAMBDA0, n_rep: int = 10**5,
                                seed: int = 0, threads=None) -> EquicorrelatedResult:
    """Closed forms for ``Sigma`` with unit variances and common correlation ``rho``.

    ``a`` (scalar or vector) gives the active set and multipliers of the
    quadratic program directly.  For a common ``a = alpha 1`` and ``c = gamma 1``
    every k-subset contributes the same term, so
    ``psi_k ~ binom(d, k) C(alpha 1_k) p1(alpha u 1_k)``; this is evaluated
    when ``u`` is given and ``with_constant`` is set.
    """
    model = CovModel.equicorrelated(d, rho)
    a_vec = np.broadcast_to(np.asarray(a, dtype=float), (d,)).copy()
    c_vec = np.broadcast_to(np.asarray(c, dtype=float), (d,)).copy()
    k = d if k is None else int(k)
    if not 1 <= k <= d:
        raise PreconditionViolation(f"k must lie in [1, {d}]")
    index_I, lam = _equicorrelated_active(a_vec, rho)
    thr = full_index_threshold(a_vec, rho)
    res = EquicorrelatedResult(d, rho, k, index_I, lam, thr, bool(a_vec.min() > thr), math.comb(d, k))
    if d >= 2:
        res.pairs = dominant_pairs(model, c_vec)
    equal = np.all(a_vec == a_vec[0]) and np.all(c_vec == c_vec[0])
    if with_constant and equal and a_vec[0] > 0:
        sub = RiskSpec(CovModel.equicorrelated(k, rho), a_vec[:k], c_vec[:k], 1.0 if u is None else u, k)
        res.constant = constant_C(sub, lambda0=lambda0, n_rep=n_rep, seed=seed, threads=threads)
        if u is not None:
            p1 = tail_asymptotic_p1(sub, n_rep=n_rep, seed=seed, threads=threads)
            log_term = p1.log_value + math.log(res.constant.c_of_a.value)
            subsets = [tuple(s) for s in RiskSpec(model, a_vec, c_vec, u, k).subsets()]
            log_value = math.log(res.binom) + log_term
            term = SubsetTerm(tuple(range(k)), math.exp(log_term), log_term, p1.terms[0].qp, res.constant,
                              p1.terms[0].cond_prob, {"multiplicity": res.binom})
            res.asymptotic = AsymptoticEstimate(math.exp(log_value), log_value, [term], subsets)
    return res


def gaussian_tail_exact(spec: RiskSpec) -> float:
    """``P(W(T) > a u + c T)`` over all components by numerical integration (for checks)."""
    unit = _unit(spec)
    b = unit.a * unit.u + unit.c
    if unit.dim == 1:
        return float(stats.norm.sf(b[0] / math.sqrt(unit.model.sigma[0, 0])))
    if unit.dim == 2:
        sd = np.sqrt(np.diag(unit.model.sigma))
        rho = unit.model.sigma[0, 1] / (sd[0] * sd[1])
        z = b / sd
        s = math.sqrt(1 - rho * rho)
        val, _ = integrate.quad(lambda x: stats.norm.pdf(x) * stats.norm.sf((z[1] - rho * x) / s), z[0], np.inf,
                                epsabs=0.0, epsrel=1e-10, limit=200)
        return float(val)
    # P(W > b) = P(-W < -b)
    mvn = stats.multivariate_normal(mean=np.zeros(unit.dim), cov=unit.model.sigma, abseps=1e-14, releps=1e-8,
                                    maxpts=10**7)
    return float(mvn.cdf(-b))
