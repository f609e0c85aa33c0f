"""Problem instances, the Gaussian sandwich bounds and Bonferroni brackets."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import IllConditionedK, PreconditionViolation, SignConditionViolation, Unsupported
from .gauss import CovModel, McEstimate, mvn_survival
from .rng import Accumulator, map_chunks, stream

log = logging.getLogger(__name__)

MAX_K_DIM = 20


@dataclass(eq=False)
class RiskSpec:
    """``psi_k(S, T, a u)`` for the model ``a u + c t - W(t)``, ``W = Gamma B``.

    ``t_end=math.inf`` selects the infinite horizon.
    """

    model: CovModel
    a: np.ndarray
    c: np.ndarray
    u: float
    k: int
    s_start: float = 0.0
    t_end: float = 1.0

    def __post_init__(self):
        d = self.model.dim
        self.a = np.asarray(self.a, dtype=float).reshape(-1)
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        if self.a.size != d or self.c.size != d:
            raise PreconditionViolation(f"a and c must have {d} entries")
        if not self.u > 0:
            raise PreconditionViolation("u must be positive")
        if not 1 <= int(self.k) <= d:
            raise PreconditionViolation(f"k must lie in [1, {d}]")
        self.k = int(self.k)
        if self.s_start < 0 or not self.t_end > self.s_start:
            raise PreconditionViolation("need 0 <= s_start < t_end")

    @property
    def dim(self) -> int:
        return self.model.dim

    @property
    def finite(self) -> bool:
        return math.isfinite(self.t_end)

    @property
    def levels(self) -> np.ndarray:
        """Failure levels ``a u`` for ``W(t) - c t``."""
        return self.a * self.u

    def subsets(self):
        return list(itertools.combinations(range(self.dim), self.k))

    def restrict(self, idx) -> RiskSpec:
        idx = list(idx)
        return RiskSpec(self.model.restrict(idx), self.a[idx], self.c[idx], self.u, len(idx), self.s_start, self.t_end)

    def with_u(self, u: float) -> RiskSpec:
        return replace(self, u=float(u))

    def unit_horizon(self) -> RiskSpec:
        """Equivalent problem on ``[S/T, 1]`` by Brownian self-similarity.

        ``(a, c, u) -> (a, c sqrt(T), u / sqrt(T))``.
        """
        if not self.finite:
            raise Unsupported("self-similarity reduction needs a finite horizon")
        T = self.t_end
        r = math.sqrt(T)
        return RiskSpec(self.model, self.a, self.c * r, self.u / r, self.k, self.s_start / T, 1.0)

    def check_finite_asymptotics(self) -> None:
        if np.count_nonzero(self.a <= 0) > self.k - 1:
            raise SignConditionViolation("a has more than k-1 non-positive components")

    def check_infinite_asymptotics(self) -> None:
        """``c`` and ``a + c t`` have at most ``k-1`` non-positive components for all ``t >= 0``."""
        kmax = self.k - 1
        if np.count_nonzero(self.c <= 0) > kmax:
            raise SignConditionViolation("c has more than k-1 non-positive components")
        with np.errstate(divide="ignore", invalid="ignore"):
            cross = -self.a / self.c
        cross = np.sort(cross[np.isfinite(cross) & (cross > 0)])
        probes = [0.0]
        for i, t in enumerate(cross):
            nxt = cross[i + 1] if i + 1 < len(cross) else 2 * t + 1
            probes += [t, 0.5 * (t + nxt)]
        if not len(cross):
            probes.append(1.0)
        for t in probes:
            if np.count_nonzero(self.a + self.c * t <= 0) > kmax:
                raise SignConditionViolation(f"a + c t has more than k-1 non-positive components at t={t:g}")
        # t -> infinity: the sign of c decides, ties by a
        tail = np.where(self.c != 0, self.c, self.a)
        if np.count_nonzero(tail <= 0) > kmax:
            raise SignConditionViolation("a + c t has more than k-1 non-positive components as t -> inf")

    def to_dict(self) -> dict:
        return {
            "sigma": self.model.sigma.tolist(),
            "a": self.a.tolist(),
            "c": self.c.tolist(),
            "u": self.u,
            "k": self.k,
            "s_start": self.s_start,
            "t_end": None if not self.finite else self.t_end,
        }


@dataclass
class BoundResult:
    lower: McEstimate
    upper: McEstimate
    k_const: float
    k_const_stderr: float
    per_subset_K_terms: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "lower": self.lower.to_dict(),
            "upper": self.upper.to_dict(),
            "k_const": self.k_const,
            "k_const_stderr": self.k_const_stderr,
            "per_subset_K_terms": {
                ",".join(str(i + 1) for i in s): est.to_dict() for s, est in self.per_subset_K_terms.items()
            },
        }


def _require_finite(spec: RiskSpec):
    if not spec.finite:
        raise Unsupported("bounds need a finite horizon T")


def p_T(spec: RiskSpec, n_rep: int = 10**6, seed: int = 0, threads=None) -> McEstimate:
    """Monte Carlo estimate of ``P(at least k components of W(T) - cT exceed a u)``."""
    _require_finite(spec)
    T = spec.t_end
    L = spec.model.chol * math.sqrt(T)
    level = spec.levels + spec.c * T
    k = spec.k

    def run(j, size, _offset):
        z = stream(seed, "p_T", j).standard_normal((size // 2, spec.dim)) @ L.T
        hit = ((z > level).sum(1) >= k).astype(float) + ((-z > level).sum(1) >= k)
        return 0.5 * hit

    acc = Accumulator()
    for part in map_chunks(run, n_rep, threads):
        acc.add(part)
    mean, se = acc.mean_stderr()
    return McEstimate(mean, se, n_rep, seed)


def k_constant_terms(spec: RiskSpec, n_rep: int = 10**6, seed: int = 0, threads=None) -> dict:
    """Orthant probabilities ``P(W_i(T) > max(0, c_i T), i in I)`` for every k-subset ``I``.

    All subsets share ``seed`` so their estimates are computed on common draws.
    """
    _require_finite(spec)
    d, k = spec.dim, spec.k
    if d > MAX_K_DIM:
        raise PreconditionViolation(f"K enumeration limited to d <= {MAX_K_DIM}")
    if math.comb(d, k) > 10**5:
        log.warning("enumerating %d subsets for K", math.comb(d, k))
    T = spec.t_end
    # P(W(T) > x) = P(W(1) > x / sqrt(T))
    thresh = np.maximum(0.0, spec.c * T) / math.sqrt(T)
    terms = {}
    for idx in sorted(spec.subsets()):
        lower = [thresh[i] if i in idx else None for i in range(d)]
        terms[idx] = mvn_survival(spec.model, lower, n_rep, seed, threads)
    return terms


def _k_from_terms(terms: dict) -> tuple[float, float]:
    for idx, est in terms.items():
        if est.value <= 5 * est.stderr:
            raise IllConditionedK(
                "orthant probability indistinguishable from zero",
                subset=[i + 1 for i in idx],
                value=est.value,
                stderr=est.stderr,
            )
    worst = min(terms.values(), key=lambda e: e.value)
    K = 1.0 / worst.value
    return K, worst.stderr * K * K


def k_constant(spec: RiskSpec, n_rep: int = 10**6, seed: int = 0, threads=None) -> float:
    """``K = 1 / min_I P(W_i(T) > max(0, c_i T), i in I)`` over k-subsets ``I``."""
    return _k_from_terms(k_constant_terms(spec, n_rep, seed, threads))[0]


def sandwich(spec: RiskSpec, n_rep: int = 10**6, seed: int = 0, threads=None) -> BoundResult:
    """``p_T(u) <= psi_k(S, T, u) <= K p_T(u)`` with Monte Carlo ``p_T`` and ``K``."""
    lower = p_T(spec, n_rep, seed, threads)
    terms = k_constant_terms(spec, n_rep, seed + 1, threads)
    K, K_se = _k_from_terms(terms)
    up_value = K * lower.value
    up_se = math.sqrt((K * lower.stderr) ** 2 + (lower.value * K_se) ** 2)
    upper = McEstimate(up_value, up_se, n_rep, seed)
    return BoundResult(lower=lower, upper=upper, k_const=K, k_const_stderr=K_se, per_subset_K_terms=terms)


def bonferroni(spec: RiskSpec, per_subset: dict, pairwise: dict) -> tuple[float, float]:
    """Bonferroni bracket from subset probabilities and pairwise joint probabilities.

    ``per_subset`` maps each k-subset (tuple of 0-based indices) to ``psi_I``;
    ``pairwise`` maps pairs of distinct subsets to
    ``P(exists t, s: A_I(t) and A_J(s))``.  Values may be floats or
    ``McEstimate``.  Every entry of ``pairwise`` is subtracted once: pass
    unordered pairs for the classical bound, both orders for the weaker
    double sum.
    """

    def val(x):
        return x.value if isinstance(x, McEstimate) else float(x)

    wanted = set(spec.subsets())
    have = {tuple(sorted(s)) for s in per_subset}
    missing = wanted - have
    if missing:
        raise PreconditionViolation(f"missing subsets: {sorted(missing)}")
    upper = math.fsum(val(per_subset[s]) for s in per_subset if tuple(sorted(s)) in wanted)
    pairs = math.fsum(val(v) for (s1, s2), v in pairwise.items() if s1 != s2)
    lower = max(0.0, upper - pairs)
    return lower, upper
