"""Path-simulation estimates of simultaneous failure probabilities.

The simulated event is ``exists t in [S, T]: #{i : W_i(t) - c_i t > a_i u} >= k``
evaluated on a dyadic grid, refined near the failure levels by Brownian-bridge
midpoints (see :mod:`brm.paths`).  Grid monitoring can only miss crossings, so
estimates are biased downward; ``refinement_check`` reports the coupled
estimate on the grid with twice as many steps.

Optional importance sampling (``tilt=True``) shifts the drift of ``W`` towards
the most likely failure point of each k-subset and reweights by the exact
likelihood ratio, which depends on ``W(T)`` only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .bounds import RiskSpec
from .errors import InsufficientHits, PreconditionViolation, Unsupported
from .gauss import McEstimate, PathGrid
from .paths import ExceedanceTracker, check_dyadic, levy_grid
from .qp import solve_pi_sigma
from .rng import Accumulator, map_chunks, stream, stream_key

DEFAULT_DEPTH = 12
# Paths are drawn on this many steps and the nominal grid is reached by keyed
# bridge refinement of the intervals where a crossing cannot be excluded.
COARSE_STEPS = 16
DEFENSIVE_WEIGHT = 0.05


class GridBias(UserWarning):
    pass


@dataclass
class SimResult:
    psi_hat: McEstimate
    n_paths: int
    grid: PathGrid
    hitting_times: np.ndarray | None = None
    refinement_check: tuple[McEstimate, McEstimate] | None = None
    warnings: list[str] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "psi_hat": self.psi_hat.to_dict(),
            "n_paths": self.n_paths,
            "grid": self.grid.to_dict(),
            "warnings": list(self.warnings),
            "diagnostics": dict(self.diagnostics),
        }
        if self.refinement_check is not None:
            out["refinement_check"] = [e.to_dict() for e in self.refinement_check]
        if self.hitting_times is not None:
            out["n_hitting_times"] = int(len(self.hitting_times))
        return out


@dataclass
class _Tilt:
    thetas: np.ndarray  # (n_comp, d); row 0 is the untilted defensive component
    weights: np.ndarray
    T: float
    sigma: np.ndarray

    def log_lr(self, w_t: np.ndarray, t=None) -> np.ndarray:
        """``log dP/dQ`` on the information up to time ``t`` (default ``T``) given ``W(t)`` (rows)."""
        t = self.T if t is None else np.asarray(t, dtype=float)
        quad = 0.5 * np.einsum("ji,ik,jk->j", self.thetas, self.sigma, self.thetas)
        expo = w_t @ self.thetas.T - np.multiply.outer(t, quad) + np.log(self.weights)[None, :]
        return -logsumexp(expo, axis=1)


def failure_tilt(spec: RiskSpec, t_end: float) -> _Tilt:
    """Mixture of drift changes, one per k-subset, aimed at failure at ``t_end``.

    For subset ``I`` the drift of ``W`` becomes ``Sigma[:, I] lam_I / T`` where
    ``lam_I`` is the multiplier of the quadratic program for ``u a_I + c_I T``
    on ``T Sigma_II``; under that drift ``W(T) - cT`` is centred on the most
    likely failure point.
    """
    d, T = spec.dim, t_end
    thetas = [np.zeros(d)]
    for idx in spec.subsets():
        b = spec.levels[list(idx)] + spec.c[list(idx)] * T
        if np.all(b <= 0):
            continue
        sol = solve_pi_sigma(spec.model.restrict(idx).scaled(T), b)
        theta = np.zeros(d)
        theta[list(idx)] = sol.lam[:]
        thetas.append(theta)
    thetas = np.array(thetas)
    n_tilt = len(thetas) - 1
    if n_tilt == 0:
        weights = np.array([1.0])
    else:
        weights = np.concatenate([[DEFENSIVE_WEIGHT], np.full(n_tilt, (1 - DEFENSIVE_WEIGHT) / n_tilt)])
    return _Tilt(thetas, weights, T, spec.model.sigma)


def _run_event(spec, s_sim, t_end, n_steps, n_rep, seed, tag, *, level, k=None, subsets=None,
               first_time=False, depth=DEFAULT_DEPTH, tilt=None, threads=None):
    """Simulate chunks and return per-chunk dicts with hits, first times and log weights."""
    model = spec.model
    chol = model.chol
    var = np.diag(model.sigma)
    n0 = min(n_steps, COARSE_STEPS)
    depth = depth + check_dyadic(n_steps // n0)
    times = np.linspace(s_sim, t_end, n0 + 1)
    key = stream_key(seed, tag, "bridge")
    def run(j, size, offset):
        tracker = ExceedanceTracker(level, var, k=k, subsets=subsets, first_time=first_time)
        gen = stream(seed, tag, j)
        drift = -spec.c
        comp = None
        if tilt is not None:
            half = size // 2
            mix = stream(seed, tag, "mixture", j)
            comp = mix.choice(len(tilt.weights), size=half, p=tilt.weights)
            comp = np.concatenate([comp, comp])
            drift = -spec.c[None, :] + tilt.thetas[comp] @ model.sigma
        X = levy_grid(gen, chol, drift, s_sim, t_end, n0, size)
        hit, ftime, nodes = tracker.run(X, times, key, chol, depth, path_offset=offset)
        out = {"hit": hit, "first_time": ftime, "nodes": nodes}
        if tilt is not None and first_time:
            # stopped at the hitting time; paths without a hit get weight zero anyway
            t_stop = np.where(np.isfinite(ftime), ftime, t_end)
            x_stop = np.where(np.isfinite(ftime)[:, None], tracker.first_value, X[:, -1])
            out["log_w"] = tilt.log_lr(x_stop + np.multiply.outer(t_stop, spec.c), t_stop)
        elif tilt is not None:
            out["log_w"] = tilt.log_lr(X[:, -1] + spec.c * t_end)
        return out

    return map_chunks(run, n_rep, threads)


def _pair_means(values):
    h = len(values) // 2
    return 0.5 * (values[:h] + values[h:])


def _estimate(parts, n_rep, seed, column=None):
    acc = Accumulator()
    for part in parts:
        hit = part["hit"] if column is None else column(part["hit"])
        v = hit.astype(float)
        if "log_w" in part:
            v = np.where(hit, np.exp(part["log_w"]), 0.0)
        acc.add(_pair_means(v))
    mean, se = acc.mean_stderr()
    return McEstimate(mean, se, n_rep, seed)


def _grid_for(spec: RiskSpec, grid) -> PathGrid:
    if grid is None:
        return PathGrid(spec.s_start, spec.t_end, 256)
    if isinstance(grid, int):
        return PathGrid(spec.s_start, spec.t_end, grid)
    return grid


def simulate_psi(spec: RiskSpec, grid=None, n_rep: int = 10**5, seed: int = 0, *, refine_depth: int = DEFAULT_DEPTH,
                 tilt: bool = False, refinement_check: bool = True, hitting_times: bool = False,
                 threads=None) -> SimResult:
    """Estimate ``psi_k(S, T, a u)`` by simulating paths on ``[S, T]``.

    ``grid`` is a :class:`PathGrid`, a number of steps, or ``None`` (256 steps).
    The step count must be a power of two and at least 256.  With
    ``hitting_times`` the first failure times in ``[S, T]`` are kept (plain
    sampling only).
    """
    if not spec.finite:
        raise Unsupported("infinite horizon: use simulate_psi_infinite")
    grid = _grid_for(spec, grid)
    check_dyadic(grid.n_steps)
    if grid.n_steps < 256:
        raise PreconditionViolation("simulate_psi needs at least 256 grid steps")
    if hitting_times and tilt:
        raise PreconditionViolation("hitting times are only collected without tilting")
    tl = failure_tilt(spec, spec.t_end) if tilt else None

    def once(n_steps, times=False):
        parts = _run_event(spec, spec.s_start, spec.t_end, n_steps, n_rep, seed, "psi", level=spec.levels,
                           k=spec.k, first_time=times, depth=refine_depth, tilt=tl, threads=threads)
        return _estimate(parts, n_rep, seed), sum(p["nodes"] for p in parts), parts

    est, nodes, parts = once(grid.n_steps, hitting_times)
    result = SimResult(psi_hat=est, n_paths=n_rep, grid=grid,
                       diagnostics={"refined_nodes": nodes, "refine_depth": refine_depth, "tilt": tilt})
    if hitting_times:
        ft = np.concatenate([p["first_time"] for p in parts])
        result.hitting_times = ft[np.isfinite(ft)]
    if refinement_check:
        fine, _, _ = once(2 * grid.n_steps)
        result.refinement_check = (est, fine)
        joint = math.hypot(est.stderr, fine.stderr)
        if abs(fine.value - est.value) > 3 * joint:
            msg = f"grid bias: {est.value:.6g} at n={grid.n_steps} vs {fine.value:.6g} at 2n"
            result.warnings.append(msg)
            warnings.warn(msg, GridBias, stacklevel=2)
    return result


def simulate_subset_events(spec: RiskSpec, grid=None, n_rep: int = 10**5, seed: int = 0, *,
                           refine_depth: int = DEFAULT_DEPTH, threads=None):
    """Per-subset probabilities ``psi_I`` and pairwise ``P(exists t,s: A_I(t), A_J(s))``.

    Returns ``(per_subset, pairwise)`` keyed by 0-based index tuples, with
    pairwise entries for unordered pairs ``I < J``.  Suitable input for
    :func:`brm.bounds.bonferroni`.
    """
    if not spec.finite:
        raise Unsupported("finite horizon only")
    grid = _grid_for(spec, grid)
    check_dyadic(grid.n_steps)
    subsets = spec.subsets()
    parts = _run_event(spec, spec.s_start, spec.t_end, grid.n_steps, n_rep, seed, "psi",
                       level=spec.levels, subsets=subsets, depth=refine_depth, threads=threads)
    per_subset = {I: _estimate(parts, n_rep, seed, column=lambda h, s=s: h[:, s]) for s, I in enumerate(subsets)}
    pairwise = {}
    for s1 in range(len(subsets)):
        for s2 in range(s1 + 1, len(subsets)):
            pairwise[(subsets[s1], subsets[s2])] = _estimate(
                parts, n_rep, seed, column=lambda h, a=s1, b=s2: h[:, a] & h[:, b])
    return per_subset, pairwise


def infinite_t_cap(spec: RiskSpec) -> float:
    """``4 u max_I t_hat_I``: four times the slowest most-likely failure time."""
    from .asymptotics import rate_function

    hats = [rate_function(spec, idx).t_hat for idx in spec.subsets() if np.any(spec.c[list(idx)] > 0)]
    return 4.0 * spec.u * max(hats)


def simulate_psi_infinite(spec: RiskSpec, t_cap: float | None = None, grid=128, n_rep: int = 10**5, seed: int = 0,
                          *, refine_depth: int = 14, refinement_check: bool = False, threads=None) -> SimResult:
    """Estimate ``psi_k(S, inf, a u)`` by simulation truncated at ``t_cap``.

    ``t_cap`` defaults to ``4 u max_I t_hat_I`` and may not be smaller.  The
    result carries ``tail_log_bound``: the exponential rate ``(u/2) min_I r_I(t_cap/u)``
    that bounds the discarded tail ``P(exists t > t_cap: ...)``.
    """
    from .asymptotics import rate_function

    spec.check_infinite_asymptotics()
    needed = infinite_t_cap(spec)
    if t_cap is None:
        t_cap = needed
    elif t_cap < needed * (1 - 1e-12):
        raise PreconditionViolation(f"t_cap={t_cap:g} is below 4 u max t_hat = {needed:g}")
    n_steps = grid.n_steps if isinstance(grid, PathGrid) else int(grid)
    check_dyadic(n_steps)
    finite = RiskSpec(spec.model, spec.a, spec.c, spec.u, spec.k, spec.s_start, t_cap)
    tail_rates = []
    for idx in spec.subsets():
        rf = rate_function(spec, idx)
        tail_rates.append(0.5 * spec.u * rf.r(t_cap / spec.u))

    def once(steps):
        parts = _run_event(finite, spec.s_start, t_cap, steps, n_rep, seed, "psi_inf",
                           level=spec.levels, k=spec.k, depth=refine_depth, threads=threads)
        return _estimate(parts, n_rep, seed), sum(p["nodes"] for p in parts)

    est, nodes = once(n_steps)
    result = SimResult(
        psi_hat=est, n_paths=n_rep, grid=PathGrid(spec.s_start, t_cap, n_steps),
        diagnostics={"t_cap": t_cap, "tail_log_bound": min(tail_rates), "refined_nodes": nodes,
                     "refine_depth": refine_depth},
    )
    if refinement_check:
        fine, _ = once(2 * n_steps)
        result.refinement_check = (est, fine)
        if abs(fine.value - est.value) > 3 * math.hypot(est.stderr, fine.stderr):
            result.warnings.append("grid bias between n and 2n steps")
    return result


@dataclass
class FailureTimes:
    """Rescaled failure times ``u^2 (T - tau)`` for paths with ``tau in [S, T]``."""

    samples: np.ndarray
    weights: np.ndarray
    rate: float
    n_paths: int
    grid: PathGrid

    @property
    def n_eff(self) -> float:
        w = self.weights
        return float(w.sum() ** 2 / np.sum(w * w)) if len(w) else 0.0


def sample_failure_time(spec: RiskSpec, grid=None, n_rep: int = 10**5, seed: int = 0, *,
                        refine_depth: int = 16, tilt: bool = True, min_samples: int = 200,
                        threads=None) -> FailureTimes:
    """First time all ``d`` components are in failure, conditioned on ``tau in [S, T]``.

    Returns ``u^2 (T - tau)`` with importance weights (all ones when
    ``tilt=False``) and the limiting exponential rate
    ``a~' Sigma^{-1} a~ / (2 T^2)``.  Paths start at the origin at time 0.
    The finest refined step must resolve ``1 / (64 u^2)``.
    """
    if spec.k != spec.dim:
        raise PreconditionViolation("failure-time law is implemented for k = d only")
    if not spec.finite:
        raise Unsupported("finite horizon only")
    T, u = spec.t_end, spec.u
    if grid is None:
        n_steps = 256
    else:
        n_steps = grid.n_steps if isinstance(grid, PathGrid) else int(grid)
    check_dyadic(n_steps)
    finest = T / n_steps / 2**refine_depth
    if finest > T / (64 * u * u):
        raise PreconditionViolation("grid too coarse for the failure-time scale: raise n_steps or refine_depth")
    tl = failure_tilt(spec, T) if tilt else None
    parts = _run_event(spec, 0.0, T, n_steps, n_rep, seed, "tau", level=spec.levels, k=spec.k,
                       first_time=True, depth=refine_depth, tilt=tl, threads=threads)
    taus, ws = [], []
    for part in parts:
        ft = part["first_time"]
        keep = (ft >= spec.s_start) & (ft <= T)
        taus.append(ft[keep])
        ws.append(np.exp(part["log_w"][keep]) if "log_w" in part else np.ones(keep.sum()))
    tau = np.concatenate(taus)
    w = np.concatenate(ws)
    rate = solve_pi_sigma(spec.model, spec.a).value / (2 * T * T)
    out = FailureTimes(u * u * (T - tau), w, rate, n_rep, PathGrid(0.0, T, n_steps))
    if out.n_eff < min_samples:
        raise InsufficientHits(
            f"only {out.n_eff:.0f} effective conditional samples (need {min_samples}); lower u or raise n_rep",
            n_eff=out.n_eff,
        )
    return out


@dataclass(frozen=True)
class KSResult:
    statistic: float
    critical: float
    n_eff: float
    passed: bool


def ks_against_exponential(samples, rate: float, weights=None, level: float = 0.01) -> KSResult:
    """One-sample Kolmogorov-Smirnov test of ``samples`` against ``Exp(rate)``.

    With ``weights`` the weighted empirical CDF is used and the critical value
    is taken at the effective sample size ``(sum w)^2 / sum w^2``.
    """
    x = np.asarray(samples, dtype=float)
    if len(x) < 200:
        raise PreconditionViolation("KS test needs at least 200 samples")
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    cw = np.cumsum(w) / w.sum()
    cdf = -np.expm1(-rate * x)
    before = np.concatenate([[0.0], cw[:-1]])
    stat = float(max(np.max(cw - cdf), np.max(cdf - before)))
    n_eff = float(w.sum() ** 2 / np.sum(w * w))
    crit = float(stats.kstwo.ppf(1 - level, max(int(round(n_eff)), 1)))
    return KSResult(stat, crit, n_eff, stat <= crit)
