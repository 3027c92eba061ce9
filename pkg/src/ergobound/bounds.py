"""Exponential envelopes from an alpha profile, and an ergodicity diagnosis."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .rates import adaptive_simpson, as_rate
from .weighting import WeightMatrix, check_condition_i

__all__ = [
    "RateEnvelope",
    "RateProfile",
    "ErgodicityReport",
    "envelopes",
    "ergodicity_diagnosis",
    "to_total_variation",
    "ENVELOPE_DEPTH",
]

# min/max over columns adds kinks between nodes; bisection needs extra depth
ENVELOPE_DEPTH = 48


class RateProfile:
    """Profile given directly by expressions for ``beta_star`` and ``beta_lower``.

    Useful when the decay rates are known in closed form; quacks like
    :class:`ergobound.weighting.AlphaProfile` for everything in this module.
    """

    def __init__(self, beta_star, beta_lower=None):
        self._star = as_rate(beta_star)
        self._lower = as_rate(beta_lower) if beta_lower is not None else self._star

    def beta_star(self, t: float) -> float:
        return self._star(t)

    def beta_lower(self, t: float) -> float:
        return self._lower(t)

    def betas(self, t: float) -> tuple[float, float]:
        return self._star(t), self._lower(t)

    def breakpoints(self) -> tuple[float, ...]:
        return tuple(sorted(set(self._star.breakpoints()) | set(self._lower.breakpoints())))


@dataclass
class RateEnvelope:
    """``U(t) = exp(-int_0^t beta_star)`` and ``L(t) = exp(-int_0^t beta_lower)``."""

    profile: object
    tol: float = 1e-10

    def integral_star(self, t0: float, t1: float) -> float:
        return adaptive_simpson(self.profile.beta_star, t0, t1, self.tol, ENVELOPE_DEPTH,
                                self.profile.breakpoints())

    def integral_lower(self, t0: float, t1: float) -> float:
        return adaptive_simpson(self.profile.beta_lower, t0, t1, self.tol, ENVELOPE_DEPTH,
                                self.profile.breakpoints())

    def U(self, t: float) -> float:
        return math.exp(-self.integral_star(0.0, t))

    def L(self, t: float) -> float:
        return math.exp(-self.integral_lower(0.0, t))

    def grid(self, ts: Sequence[float]) -> dict[str, np.ndarray]:
        """Sample ``beta_star``, ``beta_lower``, ``U`` and ``L`` on an increasing grid.

        Integrals are accumulated piece by piece between consecutive grid
        points, each to ``tol`` scaled by the piece's share of ``[0, t_max]``.
        Both rates are integrated together so every alpha vector is
        computed once.
        """
        ts = np.asarray(ts, dtype=float)
        if ts.size and (ts[0] < 0 or np.any(np.diff(ts) < 0)):
            raise ValueError("grid must be nonnegative and nondecreasing")
        t_max = float(ts[-1]) if ts.size else 0.0
        bs, bl, Is, Il = (np.empty(ts.size) for _ in range(4))
        acc = np.zeros(2)
        prev = 0.0
        bps = self.profile.breakpoints()

        def both(t):
            return np.array(self.profile.betas(t))

        for n, t in enumerate(ts):
            if t > prev:
                tol = self.tol * (t - prev) / t_max
                acc = acc + adaptive_simpson(both, prev, t, tol, ENVELOPE_DEPTH, bps)
                prev = t
            bs[n], bl[n] = self.profile.betas(float(t))
            Is[n], Il[n] = acc
        return {"t": ts, "beta_star": bs, "beta_lower": bl, "U": np.exp(-Is), "L": np.exp(-Il),
                "int_beta_star": Is, "int_beta_lower": Il}


def envelopes(profile, tol: float = 1e-10) -> RateEnvelope:
    if not tol > 0:
        raise ValueError("tol must be positive")
    return RateEnvelope(profile, tol)


@dataclass
class ErgodicityReport:
    horizon: float
    integral: float
    average: float
    tail_average: float
    verdict: str

    def __str__(self) -> str:
        return (
            f"int_0^{self.horizon:g} beta_star = {self.integral:.10g}; average {self.average:.6g} "
            f"(second half {self.tail_average:.6g}); verdict: {self.verdict}. "
            "Divergence of the integral on [0, inf) cannot be decided from a finite horizon."
        )


def ergodicity_diagnosis(profile, horizon: float, tol: float = 1e-10) -> ErgodicityReport:
    """Finite-horizon evidence for divergence of ``int_0^inf beta_star``.

    Verdicts: ``weakly-ergodic-evidence`` when the average of ``beta_star`` is
    positive over the whole horizon and over its second half;
    ``horizon-dependent`` when only the full-horizon average is positive;
    ``negative-evidence`` otherwise.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    env = envelopes(profile, tol)
    first = env.integral_star(0.0, horizon / 2)
    second = env.integral_star(horizon / 2, horizon)
    total = first + second
    avg, tail = total / horizon, second / (horizon / 2)
    if avg > 0 and tail > 0:
        verdict = "weakly-ergodic-evidence"
    elif avg > 0:
        verdict = "horizon-dependent"
    else:
        verdict = "negative-evidence"
    return ErgodicityReport(horizon, total, avg, tail, verdict)


def to_total_variation(bound_in_D_norm: float, D: WeightMatrix) -> float:
    """Bound on ``||p* - p**||_1`` implied by a bound on ``||z* - z**||_{1D}``.

    ``||p* - p**||_1 <= 2 ||z* - z**||_1 <= (2 / d) ||z* - z**||_{1D}``.
    """
    if bound_in_D_norm < 0:
        raise ValueError("bound must be nonnegative")
    return 2.0 * bound_in_D_norm / check_condition_i(D)
