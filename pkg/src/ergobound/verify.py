"""Numerical verification of the weighted-norm bounds.

The measured quantity is always ``||D (z*(t) - z**(t))||_1`` built from two
forward-equation solutions, so a sandwich check exercises model assembly,
reduction, weighting, quadrature and the ODE solver end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import envelopes
from .models import ChainModel, ModelError, is_homogeneous
from .ode import DEFAULT_ATOL, DEFAULT_RTOL, Trajectory, solve_p, solve_x
from .reduction import reduce
from .weighting import WeightMatrix, alpha_profile, check_condition_ii, make_H

__all__ = [
    "weighted_norm",
    "SandwichRecord",
    "SandwichReport",
    "run_sandwich",
    "verify_tolerance",
    "GapBracket",
    "spectral_gap",
    "spectral_gap_bracket",
    "PositivityReport",
    "positivity_check",
    "ORDERING_TOL",
]

ORDERING_TOL = 1e-14
VERIFY_BASE_TOL = 1e-6
POSITIVITY_TOL = 1e-10


def weighted_norm(z, D: WeightMatrix) -> float:
    z = np.asarray(z, dtype=float)
    if z.shape[0] != D.S:
        raise ValueError(f"vector has length {z.shape[0]}, weights {D.S}")
    return float(np.abs(D.matrix() @ z).sum())


def verify_tolerance(rtol: float, qtol: float, base: float = VERIFY_BASE_TOL) -> float:
    """Relative slack for sandwich checks: ``base + 10 * (rtol + qtol)``."""
    return base + 10.0 * (rtol + qtol)


@dataclass
class SandwichRecord:
    t: float
    measured: float
    upper: float
    lower: float
    margin_upper: float
    margin_lower: float


@dataclass
class SandwichReport:
    records: list[SandwichRecord]
    m0: float
    lower_applicable: bool
    condition_ii: object
    tol_verify: float
    abs_slack: float
    rtol: float
    atol: float
    qtol: float
    trajectory: Trajectory | None = None
    violations: list[tuple[str, float, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def header(self) -> list[str]:
        return [
            f"tolerance rule: relative slack = 1e-6 + 10*(rtol + qtol) = {self.tol_verify:.3e}",
            f"absolute slack = 10 * S * atol * ||D||_1 = {self.abs_slack:.3e}",
            f"rtol={self.rtol:g} atol={self.atol:g} qtol={self.qtol:g}",
            str(self.condition_ii),
            f"initial D-norm m0={self.m0!r}; lower bound applicable: {self.lower_applicable}",
            f"violations: {len(self.violations)}",
        ]

    def ratios(self) -> np.ndarray:
        """``measured / upper`` at every checkpoint with a nonzero envelope."""
        return np.array([r.measured / r.upper for r in self.records if r.upper > 0])


def run_sandwich(
    m: ChainModel,
    D: WeightMatrix,
    p0_a,
    p0_b,
    t_end: float,
    checkpoints=None,
    tol_verify: float | None = None,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    qtol: float = 1e-10,
    condition_samples: int = 200,
) -> SandwichReport:
    """Integrate two initial distributions and compare their weighted distance
    with ``U(t) m0`` and ``L(t) m0``.

    The upper envelope is only checked when essential nonnegativity passed on
    ``[0, t_end]``; the lower one additionally needs ``D (z_a(0) - z_b(0)) >= 0``.
    """
    if checkpoints is None:
        checkpoints = np.linspace(0.0, t_end, 41)[1:]
    ts = np.asarray(checkpoints, dtype=float)
    if tol_verify is None:
        tol_verify = verify_tolerance(rtol, qtol)
    rs = reduce(m)
    H = make_H(rs, D)
    cond = check_condition_ii(H, t_end, condition_samples)
    profile = alpha_profile(rs, D)
    env = envelopes(profile, qtol).grid(ts)

    P0 = np.column_stack([np.asarray(p0_a, dtype=float), np.asarray(p0_b, dtype=float)])
    traj = solve_p(m, P0, t_end, ts, rtol, atol)
    Dm = D.matrix()
    x0 = Dm @ (P0[1:, 0] - P0[1:, 1])
    m0 = float(np.abs(x0).sum())
    lower_applicable = bool(x0.min() >= -ORDERING_TOL)
    abs_slack = 10.0 * m.S * atol * float(np.abs(Dm).sum(axis=0).max())

    report = SandwichReport([], m0, lower_applicable, cond, tol_verify, abs_slack, rtol, atol, qtol, traj)
    for k, t in enumerate(ts):
        y = traj.y[k]
        measured = float(np.abs(Dm @ (y[1:, 0] - y[1:, 1])).sum())
        upper, lower = env["U"][k] * m0, env["L"][k] * m0
        mu = upper * (1 + tol_verify) + abs_slack - measured
        ml = measured - (lower * (1 - tol_verify) - abs_slack)
        report.records.append(SandwichRecord(float(t), measured, upper, lower, mu, ml))
        if cond.passed and mu < 0:
            report.violations.append(("upper", float(t), mu))
        if cond.passed and lower_applicable and ml < 0:
            report.violations.append(("lower", float(t), ml))
    return report


# ---------------------------------------------------------------------------
# spectral gap


def spectral_gap(B: np.ndarray) -> float:
    """Smallest real part among the eigenvalues of ``-B`` (LAPACK Hessenberg QR)."""
    try:
        ev = np.linalg.eigvals(np.asarray(B, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"eigenvalue iteration did not converge: {exc}") from exc
    return float(np.min(-ev.real))


@dataclass
class GapBracket:
    beta_star: float
    beta_lower: float
    gap: float
    margin_low: float   # gap - beta_star
    margin_high: float  # beta_lower - gap

    def holds(self, slack: float = 1e-8) -> bool:
        return self.margin_low >= -slack and self.margin_high >= -slack

    def __str__(self) -> str:
        return (
            f"beta_star={self.beta_star:.10g} <= gap={self.gap:.10g} <= beta_lower={self.beta_lower:.10g}: "
            f"{'holds' if self.holds() else 'VIOLATED'} (margins {self.margin_low:.3e}, {self.margin_high:.3e})"
        )


def spectral_gap_bracket(m: ChainModel, D: WeightMatrix, horizon: float = 10.0) -> GapBracket:
    """Compare the decay parameter of a time-homogeneous chain with its
    ``[beta_star, beta_lower]`` bracket.

    Raises:
        ModelError: the rates change with time on the sample grid.
    """
    if not is_homogeneous(m, horizon):
        raise ModelError("spectral gap needs time-constant rates")
    rs = reduce(m)
    gap = spectral_gap(rs.B(0.0))
    bs, bl = alpha_profile(rs, D).betas(0.0)
    return GapBracket(bs, bl, gap, gap - bs, bl - gap)


# ---------------------------------------------------------------------------
# positivity


@dataclass
class PositivityReport:
    passed: bool
    min_entry: float
    t_end: float

    def __str__(self) -> str:
        return f"positivity: {'PASS' if self.passed else 'FAIL'} (most negative entry {self.min_entry:.3e})"


def positivity_check(H, x0, t_end: float, rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                     samples: int = 201) -> PositivityReport:
    """Integrate ``dx/dt = H(t) x`` from a nonnegative start and report the
    most negative entry seen at any accepted step or output point."""
    x0 = np.asarray(x0, dtype=float)
    if x0.min() < 0:
        raise ValueError("x0 must be entrywise nonnegative")
    traj = solve_x(H, x0, t_end, np.linspace(0.0, t_end, samples), rtol, atol)
    worst = min(traj.min_value, float(traj.y.min()))
    return PositivityReport(worst >= -POSITIVITY_TOL, worst if math.isfinite(worst) else 0.0, t_end)
