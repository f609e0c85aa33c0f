"""Dependence structure, Gaussian density/survival, and correlated path sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.stats import norm, qmc

from .errors import NotPositiveDefinite, PreconditionViolation
from .rng import Accumulator, map_chunks, stream

PD_TOL = 1e-10
SYM_TOL = 1e-12


@dataclass(eq=False)
class CovModel:
    """Covariance ``sigma`` of ``W(1) = gamma @ B(1)`` with its Cholesky factor."""

    sigma: np.ndarray
    gamma: np.ndarray | None = None
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise PreconditionViolation(f"sigma must be square, got shape {sigma.shape}")
        scale = max(1.0, float(np.max(np.abs(sigma))))
        if np.max(np.abs(sigma - sigma.T)) > SYM_TOL * scale:
            raise PreconditionViolation("sigma is not symmetric")
        sigma = 0.5 * (sigma + sigma.T)
        if self.gamma is not None:
            gamma = np.atleast_2d(np.asarray(self.gamma, dtype=float))
            if gamma.shape != sigma.shape:
                raise PreconditionViolation("gamma and sigma shapes differ")
            if np.max(np.abs(gamma @ gamma.T - sigma)) > 1e-10:
                raise PreconditionViolation("gamma @ gamma.T does not match sigma")
            self.gamma = gamma
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite("sigma is not positive definite") from None
        if np.min(np.diag(chol)) <= PD_TOL:
            raise NotPositiveDefinite(
                f"Cholesky pivot {np.min(np.diag(chol)):.3e} below {PD_TOL}; sigma is numerically singular"
            )
        self.sigma = sigma
        self.chol = chol

    @classmethod
    def from_gamma(cls, gamma) -> CovModel:
        gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
        return cls(gamma @ gamma.T, gamma=gamma)

    @classmethod
    def identity(cls, d: int) -> CovModel:
        return cls(np.eye(d))

    @classmethod
    def equicorrelated(cls, d: int, rho: float) -> CovModel:
        sigma = np.full((d, d), float(rho))
        np.fill_diagonal(sigma, 1.0)
        return cls(sigma)

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    def restrict(self, idx) -> CovModel:
        idx = list(idx)
        return CovModel(self.sigma[np.ix_(idx, idx)])

    def scaled(self, t: float) -> CovModel:
        return CovModel(t * self.sigma)

    def solve(self, b) -> np.ndarray:
        """``sigma^{-1} b`` through the Cholesky factor."""
        return linalg.cho_solve((self.chol, True), np.asarray(b, dtype=float))

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))


@dataclass(frozen=True)
class PathGrid:
    """Uniform time grid on ``[s_start, t_end]`` with ``n_steps`` intervals."""

    s_start: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if self.s_start < 0 or not self.t_end > self.s_start:
            raise PreconditionViolation("need 0 <= s_start < t_end")
        if int(self.n_steps) < 1:
            raise PreconditionViolation("n_steps must be positive")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.s_start, self.t_end, self.n_steps + 1)

    @property
    def dt(self) -> float:
        return (self.t_end - self.s_start) / self.n_steps

    def to_dict(self) -> dict:
        return {"s_start": self.s_start, "t_end": self.t_end, "n_steps": self.n_steps}


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    n_rep: int
    seed: int | None

    @property
    def ci95(self) -> tuple[float, float]:
        if self.value == 0.0 and self.stderr == 0.0 and self.n_rep > 0:
            # no hits: exact (Clopper-Pearson) upper limit for a zero count
            return (0.0, -math.expm1(math.log(0.025) / self.n_rep))
        half = 1.959963984540054 * self.stderr
        return (self.value - half, self.value + half)

    def covers(self, x: float) -> bool:
        lo, hi = self.ci95
        return lo <= x <= hi

    def scaled(self, factor: float) -> McEstimate:
        return McEstimate(self.value * factor, self.stderr * abs(factor), self.n_rep, self.seed)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "ci95": list(self.ci95),
            "n_rep": self.n_rep,
            "seed": self.seed,
        }

    @classmethod
    def exact(cls, value: float, seed: int | None = None) -> McEstimate:
        return cls(float(value), 0.0, 0, seed)


def mvn_pdf(model: CovModel, x) -> float:
    """Density of ``N(0, sigma)`` at ``x``."""
    x = np.asarray(x, dtype=float).reshape(model.dim)
    z = linalg.solve_triangular(model.chol, x, lower=True)
    d = model.dim
    return float(np.exp(-0.5 * z @ z - 0.5 * model.logdet() - 0.5 * d * np.log(2 * np.pi)))


def _lower_mask(lower, d):
    """Split thresholds into a finite vector and a bounded-below mask.

    ``None`` and ``-inf`` both mean "unbounded below".
    """
    if len(lower) != d:
        raise PreconditionViolation(f"lower has {len(lower)} entries, model has dimension {d}")
    bounded = np.array([v is not None and not (np.isinf(v) and v < 0) for v in lower])
    values = np.array([float(v) if b else 0.0 for v, b in zip(lower, bounded)])
    return values, bounded


def mvn_survival(model: CovModel, lower, n_rep: int, seed: int, threads=None) -> McEstimate:
    """Antithetic Monte Carlo estimate of ``P(W(1) >= lower)``."""
    if n_rep < 1000:
        raise PreconditionViolation("mvn_survival needs n_rep >= 1000")
    values, bounded = _lower_mask(lower, model.dim)
    if not bounded.any():
        return McEstimate(1.0, 0.0, n_rep, seed)
    L = model.chol[bounded]
    b = values[bounded]

    def run(j, size, _offset):
        z = stream(seed, "mvn", j).standard_normal((size // 2, model.dim))
        x = z @ L.T
        hit = np.all(x >= b, axis=1).astype(float) + np.all(-x >= b, axis=1)
        return 0.5 * hit

    acc = Accumulator()
    for pair_means in map_chunks(run, n_rep, threads):
        acc.add(pair_means)
    mean, se = acc.mean_stderr()
    return McEstimate(mean, se, n_rep, seed)


def mvn_survival_qmc(model: CovModel, lower, n_rep: int, seed: int, n_scrambles: int = 16) -> McEstimate:
    """Randomised-QMC estimate of the same probability (independent second estimator).

    Uses ``n_scrambles`` independently scrambled Sobol' sequences; the standard
    error comes from the spread across scrambles.
    """
    values, bounded = _lower_mask(lower, model.dim)
    if not bounded.any():
        return McEstimate(1.0, 0.0, n_rep, seed)
    m = max(1, int(np.ceil(np.log2(max(n_rep // n_scrambles, 2)))))
    rng = np.random.default_rng(seed)
    ests = []
    for _ in range(n_scrambles):
        u = qmc.Sobol(model.dim, scramble=True, seed=rng).random_base2(m)
        x = norm.ppf(np.clip(u, 1e-300, 1 - 1e-16)) @ model.chol.T
        ests.append(np.mean(np.all(x[:, bounded] >= values[bounded], axis=1)))
    ests = np.asarray(ests)
    return McEstimate(float(ests.mean()), float(ests.std(ddof=1) / np.sqrt(n_scrambles)), n_scrambles * 2**m, seed)


def sample_paths(model: CovModel, drift_c, grid: PathGrid, n_rep: int, seed: int) -> np.ndarray:
    """Paths of ``W(t) - c t`` on ``grid.times``, shape ``(n_rep, d, n_steps + 1)``.

    Paths start at the origin at time 0; when ``grid.s_start > 0`` the first
    grid value is the exact Gaussian state at ``s_start``.
    """
    c = np.asarray(drift_c, dtype=float).reshape(model.dim)
    times = grid.times
    dts = np.diff(np.concatenate([[0.0], times]))
    g = stream(seed, "sample_paths")
    z = g.standard_normal((n_rep, len(times), model.dim))
    incr = np.sqrt(dts)[None, :, None] * (z @ model.chol.T) - dts[None, :, None] * c
    return np.cumsum(incr, axis=1).transpose(0, 2, 1)
