"""Dormand-Prince 5(4) integration of the linear systems used here.

Local error is controlled on the 4th-order embedded solution while the
5th-order one is propagated; output on a caller grid comes from the quartic
continuous extension of the pair.  Rate breakpoints are forced step
boundaries, and stage evaluations that land exactly on the end of a
breakpoint segment are taken one ulp to its left so the left-closed
convention of piecewise rates holds inside every step.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .models import ChainModel
from .reduction import ReducedSystem

__all__ = ["Trajectory", "SolverError", "integrate", "solve_p", "solve_z", "solve_x",
           "DEFAULT_RTOL", "DEFAULT_ATOL"]

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
SAFETY = 0.9
MIN_STEP = 1e-12
MAX_REJECT_FRACTION = 0.9
MAX_ATTEMPTS = 2_000_000
# h * |lambda| estimate above this for STIFF_STEPS accepted steps means the
# step size is pinned by stability rather than accuracy
STIFF_RATIO = 3.25
STIFF_STEPS = 15
SIMPLEX_REPORT_TOL = 1e-10
SIMPLEX_FAIL_TOL = 1e-8

_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# 5th-order minus 4th-order weights, last entry multiplies the FSAL stage
_E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# Shampine's quartic dense output
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


class SolverError(RuntimeError):
    pass


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray  # shape (len(t),) + state shape
    steps: int = 0
    rejections: int = 0
    rhs_evals: int = 0
    min_value: float = math.inf  # smallest state entry over all accepted steps
    max_drift: float = 0.0       # max |sum - 1| per distribution (probability runs only)
    min_output: float = math.inf
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    def at(self, k: int) -> np.ndarray:
        return self.y[k]


def _out_grid(out_grid, t_end: float) -> np.ndarray:
    if out_grid is None:
        return np.array([0.0, t_end]) if t_end > 0 else np.array([0.0])
    g = np.asarray(out_grid, dtype=float).ravel()
    if g.size == 0:
        raise ValueError("empty output grid")
    if np.any(np.diff(g) <= 0):
        raise ValueError("output grid must be strictly increasing")
    if g[0] < 0 or g[-1] > t_end * (1 + 1e-15) + 1e-300:
        raise ValueError(f"output grid must lie in [0, {t_end}]")
    return g


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0,
    t_end: float,
    out_grid: Sequence[float] | None = None,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    breakpoints: Sequence[float] = (),
    on_step: Callable[[float, np.ndarray], None] | None = None,
) -> Trajectory:
    """Integrate ``dy/dt = rhs(t, y)`` from 0 to ``t_end`` and sample on ``out_grid``.

    ``y0`` may be any array shape; ``rhs`` receives and returns that shape.

    Raises:
        SolverError: on step-size underflow, when more than 90% of step
            attempts are rejected, when the step size stays at the explicit
            stability limit for 15 accepted steps (stiffness), or after
            2 million attempts.
    """
    if not (rtol > 0 and atol > 0):
        raise ValueError("tolerances must be positive")
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    y0 = np.array(y0, dtype=float)
    shape = y0.shape
    grid = _out_grid(out_grid, t_end)
    out = np.empty((len(grid),) + shape)
    traj = Trajectory(grid, out)
    traj.min_value = float(y0.min()) if y0.size else math.inf
    n_out = 0
    while n_out < len(grid) and grid[n_out] <= 0.0:
        out[n_out] = y0
        n_out += 1
    if t_end == 0 or n_out == len(grid) and grid[-1] >= t_end:
        return traj

    cuts = [0.0] + sorted({b for b in breakpoints if 0.0 < b < t_end}) + [t_end]
    h_max = t_end / 10.0
    h = min(1e-4 * t_end, h_max)
    y = y0.ravel().copy()
    attempts = 0
    stiff = calm = 0

    def F(t, v):
        traj.rhs_evals += 1
        return np.asarray(rhs(t, v.reshape(shape)), dtype=float).ravel()

    for seg_start, seg_end in zip(cuts, cuts[1:]):
        t_clip = math.nextafter(seg_end, -math.inf)
        t = seg_start
        k0 = F(t, y)
        while t < seg_end:
            last = False
            if t + h >= seg_end or seg_end - (t + h) < MIN_STEP:
                h = seg_end - t
                last = True
            K = np.empty((7, y.size))
            K[0] = k0
            for s in range(1, 6):
                ys = y + h * (np.dot(_A[s], K[:s]))
                K[s] = F(min(t + _C[s] * h, t_clip), ys)
            y6 = ys
            y_new = y + h * (_B @ K[:6])
            K[6] = F(t_clip if last else t + h, y_new)
            err = h * (_E @ K)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = float(np.sqrt(np.mean((err / scale) ** 2))) if y.size else 0.0
            attempts += 1
            if attempts > MAX_ATTEMPTS:
                raise SolverError(f"no progress after {MAX_ATTEMPTS} step attempts (t={t:g})")
            if not np.all(np.isfinite(y_new)):
                err_norm = math.inf
            if err_norm <= 1.0:
                t_new = seg_end if last else t + h
                # dense output for grid points in (t, t_new]
                if n_out < len(grid) and grid[n_out] <= t_new:
                    Q = K.T @ _P
                    while n_out < len(grid) and grid[n_out] <= t_new:
                        theta = (grid[n_out] - t) / h
                        powers = theta ** np.arange(1, 5)
                        out[n_out] = (y + h * (Q @ powers)).reshape(shape)
                        n_out += 1
                y, t, k0 = y_new, t_new, K[6]
                traj.steps += 1
                if y.size:
                    traj.min_value = min(traj.min_value, float(y.min()))
                if on_step is not None:
                    on_step(t, y.reshape(shape))
                den = float(np.dot(y_new - y6, y_new - y6))
                if den > 0 and h * h * float(np.dot(K[6] - K[5], K[6] - K[5])) > STIFF_RATIO ** 2 * den:
                    stiff, calm = stiff + 1, 0
                    if stiff >= STIFF_STEPS:
                        raise SolverError(f"step size held at the stability limit near t={t:g}; "
                                          "system looks stiff for an explicit method")
                else:
                    calm += 1
                    if calm >= 6:
                        stiff = 0
                factor = 5.0 if err_norm == 0 else min(5.0, max(0.2, SAFETY * err_norm ** -0.2))
            else:
                traj.rejections += 1
                factor = max(0.2, SAFETY * err_norm ** -0.2) if math.isfinite(err_norm) else 0.2
                if attempts >= 50 and traj.rejections > MAX_REJECT_FRACTION * attempts:
                    raise SolverError(
                        f"{traj.rejections} of {attempts} steps rejected near t={t:g}; "
                        "system looks stiff for an explicit method"
                    )
            h = min(h * factor, h_max)
            if h < MIN_STEP and t < seg_end and seg_end - t > MIN_STEP:
                raise SolverError(f"step size underflow at t={t!r} (h={h:.3g})")
    while n_out < len(grid):  # grid points equal to t_end within rounding
        out[n_out] = y.reshape(shape)
        n_out += 1
    return traj


def _check_simplex(traj: Trajectory):
    y = traj.y
    sums = y.sum(axis=1)
    traj.max_drift = float(np.abs(sums - 1.0).max()) if len(y) else 0.0
    traj.min_output = float(y.min()) if y.size else math.inf
    if traj.max_drift > SIMPLEX_FAIL_TOL or traj.min_output < -SIMPLEX_FAIL_TOL:
        raise SolverError(
            f"probability drift {traj.max_drift:.3g} / min entry {traj.min_output:.3g} "
            "exceeds 1e-8; model or solver defect"
        )


def solve_p(m: ChainModel, p0, t_end: float, out_grid=None, rtol: float = DEFAULT_RTOL,
            atol: float = DEFAULT_ATOL) -> Trajectory:
    """Forward equations ``dp/dt = A(t) p``.

    ``p0`` is a distribution over states ``0..S`` or a ``(S+1, m)`` array of
    ``m`` distributions integrated together (columns).
    """
    p0 = np.asarray(p0, dtype=float)
    if p0.shape[0] != m.n:
        raise ValueError(f"p0 has {p0.shape[0]} states, model has {m.n}")
    if p0.min() < -SIMPLEX_REPORT_TOL or np.abs(p0.sum(axis=0) - 1).max() > SIMPLEX_REPORT_TOL:
        raise ValueError("p0 must be stochastic")
    traj = integrate(lambda t, p: m.A(t) @ p, p0, t_end, out_grid, rtol, atol, m.breakpoints())
    _check_simplex(traj)
    return traj


def solve_z(rs: ReducedSystem, z0, t_end: float, out_grid=None, rtol: float = DEFAULT_RTOL,
            atol: float = DEFAULT_ATOL) -> Trajectory:
    """Reduced affine system ``dz/dt = B(t) z + f(t)``."""
    return integrate(rs.rhs, z0, t_end, out_grid, rtol, atol, rs.breakpoints())


def solve_x(H: Callable[[float], np.ndarray], x0, t_end: float, out_grid=None, rtol: float = DEFAULT_RTOL,
            atol: float = DEFAULT_ATOL, breakpoints: Sequence[float] | None = None) -> Trajectory:
    """Transformed difference system ``dx/dt = H(t) x``; ``x0`` is any real vector."""
    if breakpoints is None:
        breakpoints = getattr(H, "breakpoints", ())
    return integrate(lambda t, x: H(t) @ x, x0, t_end, out_grid, rtol, atol, breakpoints)
