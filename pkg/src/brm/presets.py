"""Built-in problem instances: the sandwich-check corpus and the equicorrelated examples."""

from __future__ import annotations

import numpy as np

from .bounds import RiskSpec
from .gauss import CovModel


def _gamma3():
    return CovModel.from_gamma([[1.0, 0.0, 0.0], [0.4, 0.9, 0.0], [-0.3, 0.5, 0.8]])


def _gamma4():
    return CovModel.from_gamma([[1.0, 0.0, 0.0, 0.0], [0.5, 0.8, 0.0, 0.0], [0.2, -0.3, 0.9, 0.0],
                                [0.3, 0.3, 0.3, 0.8]])


def sandwich_corpus() -> list[RiskSpec]:
    """Twenty finite-horizon instances with ``d <= 4`` and moderate failure probabilities."""
    eq = CovModel.equicorrelated
    I = CovModel.identity
    ones = np.ones
    return [
        RiskSpec(I(1), [1.0], [1.0], 1.0, 1),
        RiskSpec(I(1), [1.0], [0.0], 2.0, 1),
        RiskSpec(I(1), [2.0], [-1.0], 1.5, 1),
        RiskSpec(I(2), [1.0, 1.0], [0.0, 0.0], 1.5, 1),
        RiskSpec(I(2), [1.0, 1.0], [0.5, 0.5], 1.0, 2),
        RiskSpec(eq(2, 0.5), [1.0, 0.2], [0.0, 0.0], 2.0, 2),
        RiskSpec(eq(2, -0.3), [1.0, 1.0], [0.2, 0.2], 0.8, 2),
        RiskSpec(eq(2, 0.8), [1.0, 2.0], [1.0, 0.0], 1.0, 1),
        RiskSpec(eq(3, 0.3), ones(3), np.zeros(3), 1.7, 1),
        RiskSpec(eq(3, 0.3), ones(3), np.zeros(3), 1.5, 2),
        RiskSpec(eq(3, 0.3), ones(3), np.full(3, 0.5), 1.0, 3),
        RiskSpec(_gamma3(), [1.0, 0.5, 0.8], [0.2, 0.0, 0.1], 1.5, 2),
        RiskSpec(I(3), ones(3), ones(3), 0.5, 3),
        RiskSpec(eq(4, 0.5), ones(4), np.zeros(4), 2.0, 1),
        RiskSpec(eq(4, 0.5), ones(4), np.zeros(4), 1.5, 2),
        RiskSpec(eq(4, 0.5), ones(4), np.full(4, 0.3), 1.2, 3),
        RiskSpec(eq(4, 0.5), ones(4), np.zeros(4), 1.0, 4),
        RiskSpec(_gamma4(), [1.0, 0.8, 0.6, 0.4], [0.0, 0.0, 0.5, 0.5], 1.8, 2),
        RiskSpec(I(2), [1.0, 1.0], [0.0, 0.0], 1.5, 1, s_start=0.5),
        RiskSpec(eq(3, 0.2), ones(3), np.full(3, 0.5), 2.0, 2, t_end=2.0),
    ]


def example_spec(example_id: int, *, rho: float = 0.5, d: int = 3, u: float = 3.0) -> dict:
    """Configurations of the three worked examples (``a = 1``, ``c = 0``)."""
    if example_id == 1:
        return {"spec": RiskSpec(CovModel.equicorrelated(d, rho), np.ones(d), np.zeros(d), u, 1)}
    if example_id == 2:
        return {"spec": RiskSpec(CovModel.equicorrelated(d, rho), np.ones(d), np.zeros(d), u, 2)}
    if example_id == 3:
        return {"d": d, "rho": rho, "a": 1.0, "c": 0.0, "u": u}
    raise ValueError(f"unknown example {example_id}")
