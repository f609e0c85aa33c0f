"""Exact solution of ``min x' Sigma^{-1} x  s.t.  x >= a`` by active-set enumeration.

The minimiser is characterised by an index set ``I`` on which the constraints
bind with strictly positive multipliers::

    a~_I = a_I,   lam_I = Sigma_II^{-1} a_I > 0,   a~_J = Sigma_JI lam_I >= a_J.

For the small dimensions used here every non-empty ``I`` is tried and the KKT
conditions are checked directly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import AllNonpositive, Degenerate, PreconditionViolation
from .gauss import CovModel

TAU_ACT = 1e-9
MAX_DIM = 12


@dataclass(frozen=True, eq=False)
class QpSolution:
    a: np.ndarray
    a_tilde: np.ndarray
    index_I: tuple[int, ...]
    index_J: tuple[int, ...]
    index_U: tuple[int, ...]
    lam: np.ndarray
    value: float
    boundary_degenerate: bool = False

    @property
    def m(self) -> int:
        return len(self.index_I)

    def to_dict(self) -> dict:
        """JSON form with 1-based index sets."""
        return {
            "a": self.a.tolist(),
            "a_tilde": self.a_tilde.tolist(),
            "I": [i + 1 for i in self.index_I],
            "J": [j + 1 for j in self.index_J],
            "U": [u + 1 for u in self.index_U],
            "lambda": self.lam.tolist(),
            "value": self.value,
            "m": self.m,
            "boundary_degenerate": self.boundary_degenerate,
        }


@dataclass
class _Candidate:
    idx: tuple[int, ...]
    lam_I: np.ndarray
    lam_ext: np.ndarray
    a_tilde: np.ndarray
    slack: float  # min(min lam_I, min(a~_J - a_J)); >= 0 up to tolerance means KKT holds


def _candidate(sigma, a, idx) -> _Candidate:
    d = len(a)
    I = list(idx)
    J = [j for j in range(d) if j not in idx]
    S_II = sigma[np.ix_(I, I)]
    factor = linalg.cho_factor(S_II, lower=True)
    lam_I = linalg.cho_solve(factor, a[I])
    # iterative refinement with extended-precision residuals
    S_ext, a_ext = S_II.astype(np.longdouble), a[I].astype(np.longdouble)
    lam_ext = lam_I.astype(np.longdouble)
    for _ in range(2):
        lam_ext = lam_ext + linalg.cho_solve(factor, (a_ext - S_ext @ lam_ext).astype(float))
    lam_I = lam_ext.astype(float)
    a_tilde = np.array(a, dtype=float)
    slack = float(np.min(lam_I)) - TAU_ACT
    if J:
        a_tilde[J] = sigma[np.ix_(J, I)] @ lam_I
        slack = min(slack, float(np.min(a_tilde[J] - a[J])) + TAU_ACT)
    return _Candidate(tuple(idx), lam_I, lam_ext, a_tilde, slack)


def solve_pi_sigma(model: CovModel, a) -> QpSolution:
    """Unique solution of the quadratic program for threshold vector ``a``.

    Raises ``AllNonpositive`` if no component of ``a`` is positive and
    ``Degenerate`` if no index set satisfies the KKT conditions.  When several
    index sets pass (multiplier or slack exactly at zero) the smallest one is
    returned and ``boundary_degenerate`` is set.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    d = model.dim
    if a.size != d:
        raise PreconditionViolation(f"a has {a.size} entries, model has dimension {d}")
    if d > MAX_DIM:
        raise PreconditionViolation(f"active-set enumeration limited to d <= {MAX_DIM}")
    if np.all(a <= 0):
        raise AllNonpositive("a has no strictly positive component")
    sigma = model.sigma
    passing = []
    near = []
    for size in range(1, d + 1):
        for idx in itertools.combinations(range(d), size):
            if np.all(a[list(idx)] <= 0):
                # lam_I > 0 is impossible when a_I <= 0 (a_I' lam_I = a_I' S_II^{-1} a_I > 0 fails)
                continue
            cand = _candidate(sigma, a, idx)
            if cand.slack >= 0:
                passing.append(cand)
            else:
                near.append(cand)
    if not passing:
        near.sort(key=lambda c: -c.slack)
        raise Degenerate(
            "no index set satisfies the KKT conditions",
            near_misses=[{"I": [i + 1 for i in c.idx], "slack": c.slack} for c in near[:2]],
        )
    best = min(passing, key=lambda c: (len(c.idx), c.idx))
    return _finish(model, a, best, boundary=len(passing) > 1)


def _finish(model, a, cand, boundary) -> QpSolution:
    d = len(a)
    I = cand.idx
    J = tuple(j for j in range(d) if j not in I)
    U = tuple(j for j in J if abs(cand.a_tilde[j] - a[j]) <= TAU_ACT)
    lam = np.zeros(d)
    lam[list(I)] = cand.lam_I
    # lam = Sigma^{-1} a~ vanishes on J exactly; store the exact zeros
    value = float(a[list(I)].astype(np.longdouble) @ cand.lam_ext)
    return QpSolution(
        a=a.copy(),
        a_tilde=cand.a_tilde,
        index_I=I,
        index_J=J,
        index_U=U,
        lam=lam,
        value=value,
        # a~_j = a_j on U means the multiplier of j sits exactly at zero
        boundary_degenerate=boundary or bool(U),
    )


def verify_representation(model: CovModel, sol: QpSolution, x, F) -> bool:
    """Check ``x' Sigma^{-1} a~ == x_F' Sigma_FF^{-1} a~_F`` for an index set ``F`` containing ``I``.

    ``F`` is given with 0-based indices.
    """
    F = sorted(set(int(f) for f in F))
    if not set(sol.index_I) <= set(F):
        raise PreconditionViolation("F must contain the active index set I")
    x = np.asarray(x, dtype=float).reshape(model.dim)
    lhs = float(x @ model.solve(sol.a_tilde))
    sub = model.restrict(F)
    rhs = float(x[F] @ sub.solve(sol.a_tilde[F]))
    return abs(lhs - rhs) <= 1e-8 * (1.0 + abs(lhs))
