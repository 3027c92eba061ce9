"""Search for weights that maximise the guaranteed decay rate.

The objective is ``J(d) = min_t min_k alpha_k(t; d)`` over a finite time grid
(a single point for time-homogeneous chains).  Because ``alpha`` depends
only on weight ratios, ``d_1`` is pinned to 1 and Nelder-Mead runs over the
remaining log-weights.  Points where ``D B D^-1`` has a negative off-diagonal
entry are penalised by ``1e3`` times the violation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .models import ChainModel, is_homogeneous
from .reduction import reduce
from .weighting import ESS_NONNEG_TOL, WeightMatrix, WeightShape

__all__ = ["OptimizationProblem", "OptimizationResult", "objective", "optimize_weights"]

PENALTY = 1e3


@dataclass
class OptimizationProblem:
    model: ChainModel
    shape: WeightShape = WeightShape.CUMULATIVE_UPPER
    horizon: float = 10.0
    grid: int = 64
    feas_tol: float = ESS_NONNEG_TOL
    budget: int = 2000
    restarts: int = 5

    def __post_init__(self):
        self.shape = WeightShape(self.shape)
        if self.budget < 1:
            raise ValueError("iteration budget must be >= 1")


@dataclass
class OptimizationResult:
    d: tuple[float, ...]
    J: float
    feasible: bool
    iterations: int
    grid_certified: bool
    restarts: list[dict] = field(default_factory=list)

    def weights(self, shape) -> WeightMatrix:
        return WeightMatrix(shape, self.d)


class _Objective:
    def __init__(self, prob: OptimizationProblem):
        m = prob.model
        rs = reduce(m)
        self.homogeneous = is_homogeneous(m, prob.horizon)
        ts = [0.0] if self.homogeneous else np.linspace(0.0, prob.horizon, prob.grid)
        self.Bs = np.stack([rs.B(float(t)) for t in ts])
        self.S = m.S
        self.shape = prob.shape
        self.off = ~np.eye(self.S, dtype=bool)
        self.feas_tol = prob.feas_tol
        self.evals = 0
        self.scale = max(float(np.abs(self.Bs).max()), 1e-300)
        self.kappa: float | None = None

    def weights(self, phi) -> WeightMatrix:
        return WeightMatrix(self.shape, (1.0,) + tuple(np.exp(np.asarray(phi, dtype=float))))

    def evaluate(self, D: WeightMatrix, kappa: float | None = None) -> tuple[float, float]:
        """Return ``(J, violation)`` for weights ``D``.

        With ``kappa`` set, ``J`` is the soft minimum
        ``-log(sum(exp(-kappa * alpha))) / kappa``, a smooth lower bound of
        the true minimum that tightens as ``kappa`` grows.
        """
        H = D.matrix() @ self.Bs @ D.inverse()
        alpha = -H.sum(axis=1)
        lo = float(alpha.min())
        if kappa is None:
            J = lo
        else:
            J = lo - math.log(float(np.exp(-kappa * (alpha - lo)).sum())) / kappa
        worst_off = float(H[:, self.off].min()) if self.S > 1 else 0.0
        return J, max(0.0, -worst_off - self.feas_tol)

    def __call__(self, phi) -> float:
        self.evals += 1
        if not np.all(np.isfinite(phi)) or np.abs(phi).max(initial=0.0) > 700:
            return math.inf
        J, viol = self.evaluate(self.weights(phi), self.kappa)
        return -(J - PENALTY * viol)


def objective(prob: OptimizationProblem, D: WeightMatrix) -> tuple[float, float]:
    """``(J, violation)`` of a given weight matrix under the problem's time grid."""
    return _Objective(prob).evaluate(D)


def _starts(n: int, rng: np.random.Generator, count: int) -> list[np.ndarray]:
    k = np.arange(1, n + 1)
    base = [np.zeros(n), k * math.log(2.0), -k * math.log(2.0)]
    while len(base) < count:
        base.append(rng.normal(0.0, 1.0, n))
    return base[:count]


def _nelder_mead(obj: _Objective, x: np.ndarray, budget: int) -> np.ndarray:
    """Nelder-Mead, re-seeded with a fresh simplex around the incumbent each
    time it converges; the simplex shrinks when a re-seed brings no gain."""
    n = x.size
    start = obj.evals
    fx = obj(x)
    size = 0.5
    while obj.evals - start < budget and size > 1e-9:
        simplex = np.vstack([x] + [x + size * e for e in np.eye(n)])
        left = budget - (obj.evals - start)
        res = minimize(obj, x, method="Nelder-Mead",
                       options={"initial_simplex": simplex, "maxfev": max(left, 1),
                                "xatol": 1e-12, "fatol": 1e-15, "adaptive": n > 4})
        if res.fun < fx - 1e-15:
            x, fx = res.x, float(res.fun)
        else:
            size *= 0.25
    return x


def _search(obj: _Objective, x: np.ndarray, budget: int) -> np.ndarray:
    """Soft-min continuation followed by the exact objective.

    The true ``min_k alpha_k`` is kinked exactly where the optimum sits
    (several columns tie), which stalls simplex moves; smoothing first and
    sharpening ``kappa`` step by step keeps the search moving.
    """
    stages = [10.0, 100.0, 1e3, 1e4, 1e5]
    share = budget // (2 * len(stages))
    for k in stages:
        obj.kappa = k / obj.scale
        x = _nelder_mead(obj, x, share)
    obj.kappa = None
    return _nelder_mead(obj, x, budget - share * len(stages))


def optimize_weights(prob: OptimizationProblem, seed: int = 0) -> OptimizationResult:
    """Maximise ``J`` over positive weights with Nelder-Mead restarts.

    Restart starting points: uniform weights, geometric ratios 2 and 1/2, and
    seeded random log-weights.  The best feasible point wins (ties go to the
    earlier restart); if none is feasible the least-penalised point is
    returned with ``feasible=False``.
    """
    obj = _Objective(prob)
    n = obj.S - 1
    if n == 0:
        J, viol = obj.evaluate(WeightMatrix(prob.shape, (1.0,)))
        return OptimizationResult((1.0,), J, viol == 0.0, 1, not obj.homogeneous)
    rng = np.random.default_rng(seed)
    best = None
    runs = []
    for r, x0 in enumerate(_starts(n, rng, prob.restarts)):
        x = _search(obj, np.asarray(x0, dtype=float), prob.budget)
        D = obj.weights(x)
        J, viol = obj.evaluate(D)
        runs.append({"restart": r, "J": J, "violation": viol})
        key = (viol == 0.0, J if viol == 0.0 else -viol)
        if best is None or key > best[0]:
            best = (key, D, J, viol)
    _, D, J, viol = best
    return OptimizationResult(D.d, J, viol == 0.0, obj.evals, not obj.homogeneous, runs)
