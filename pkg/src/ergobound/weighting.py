"""Weight matrices and the per-column decay rates they induce.

For a weight matrix ``D`` the transformed generator is ``H(t) = D B(t) D^-1``.
If ``H`` is essentially nonnegative (off-diagonal entries >= 0), the negated
column sums ``alpha_k(t)`` of ``H`` bound the decay of ``||D (z* - z**)||_1``:
``beta_star = min_k alpha_k`` drives the upper envelope and
``beta_lower = max_k alpha_k`` the lower one.
"""

from __future__ import annotations

import warnings
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .models import ChainModel, ModelKind
from .reduction import ReducedSystem, reduce

__all__ = [
    "WeightShape",
    "WeightMatrix",
    "AlphaProfile",
    "ConditionIIReport",
    "ConditionWarning",
    "make_H",
    "check_condition_i",
    "check_condition_ii",
    "alpha_profile",
    "alpha_closed_form",
    "default_weights",
    "ESS_NONNEG_TOL",
]

ESS_NONNEG_TOL = 1e-12


class ConditionWarning(UserWarning):
    pass


class WeightShape(str, Enum):
    CUMULATIVE_UPPER = "cumulative-upper"
    DIAGONAL = "diagonal"


@dataclass(frozen=True)
class WeightMatrix:
    """Positive weights ``d_1..d_S`` arranged either diagonally or as
    ``D[i, j] = d_i`` for ``j >= i`` (cumulative upper triangle)."""

    shape: WeightShape
    d: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "shape", WeightShape(self.shape))
        object.__setattr__(self, "d", tuple(float(x) for x in self.d))
        if not self.d:
            raise ValueError("need at least one weight")
        if not all(np.isfinite(x) and x > 0 for x in self.d):
            raise ValueError("weights must be positive and finite")

    @classmethod
    def ones(cls, shape, S: int) -> "WeightMatrix":
        return cls(WeightShape(shape), (1.0,) * S)

    @property
    def S(self) -> int:
        return len(self.d)

    def matrix(self) -> np.ndarray:
        d = np.asarray(self.d)
        if self.shape is WeightShape.DIAGONAL:
            return np.diag(d)
        return np.triu(np.ones((self.S, self.S))) * d[:, None]

    def inverse(self) -> np.ndarray:
        # cumulative: D = diag(d) T with T all-ones upper, T^-1 = I - superdiagonal
        inv_d = 1.0 / np.asarray(self.d)
        if self.shape is WeightShape.DIAGONAL:
            return np.diag(inv_d)
        out = np.diag(inv_d)
        out[np.arange(self.S - 1), np.arange(1, self.S)] = -inv_d[1:]
        return out

    def pattern(self) -> tuple[np.ndarray, np.ndarray]:
        """The 0/1 matrix ``T`` with ``D = diag(d) T``, and its inverse."""
        if self.shape is WeightShape.DIAGONAL:
            return np.eye(self.S), np.eye(self.S)
        T = np.triu(np.ones((self.S, self.S)))
        return T, np.eye(self.S) - np.eye(self.S, k=1)

    def ratios(self) -> np.ndarray:
        """``R[i, j] = d_i / d_j``."""
        d = np.asarray(self.d)
        return d[:, None] / d[None, :]

    def scaled(self, c: float) -> "WeightMatrix":
        return WeightMatrix(self.shape, tuple(c * x for x in self.d))

    def to_config(self) -> dict:
        return {"shape": self.shape.value, "d": list(self.d)}

    @classmethod
    def from_config(cls, cfg) -> "WeightMatrix":
        try:
            return cls(WeightShape(cfg["shape"]), tuple(cfg["d"]))
        except KeyError as exc:
            raise ValueError(f"weights config missing key {exc.args[0]!r}") from None


def default_weights(m: ChainModel) -> WeightMatrix:
    """Unit weights in the shape natural for the model kind."""
    shape = WeightShape.CUMULATIVE_UPPER if m.kind in (ModelKind.BDPC, ModelKind.SZK) else WeightShape.DIAGONAL
    return WeightMatrix.ones(shape, m.S)


def _check_dims(rs: ReducedSystem, D: WeightMatrix):
    if D.S != rs.S:
        raise ValueError(f"weights have length {D.S}, model needs {rs.S}")


def make_H(rs: ReducedSystem, D: WeightMatrix) -> Callable[[float], np.ndarray]:
    # H = diag(d) T B T^-1 diag(1/d); the weights only enter through d_i/d_j,
    # so rescaling d leaves the pattern product bit-identical
    _check_dims(rs, D)
    T, Tinv = D.pattern()
    R = D.ratios()

    def H(t: float) -> np.ndarray:
        return R * (T @ rs.B(t) @ Tinv)

    H.breakpoints = rs.breakpoints()  # type: ignore[attr-defined]
    return H


def check_condition_i(D: WeightMatrix) -> float:
    """Largest ``d`` with ``||D z||_1 >= d ||z||_1``, i.e. ``1 / ||D^-1||_1``."""
    return 1.0 / float(np.abs(D.inverse()).sum(axis=0).max())


@dataclass
class ConditionIIReport:
    passed: bool
    min_offdiag: float
    t: float
    i: int
    j: int
    samples: int
    horizon: float

    def __str__(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"essential nonnegativity: {verdict} (min off-diagonal {self.min_offdiag:.3e} "
            f"at t={self.t:g}, entry ({self.i},{self.j}); {self.samples} samples on [0, {self.horizon:g}])"
        )


def _grid(horizon: float, samples: int, breakpoints: Sequence[float] = ()) -> np.ndarray:
    pts = set(np.linspace(0.0, horizon, samples).tolist())
    pts.update(b for b in breakpoints if 0 <= b <= horizon)
    pts.update(np.nextafter(b, 0.0) for b in breakpoints if 0 < b <= horizon)
    return np.array(sorted(pts))


def check_condition_ii(H, horizon: float, samples: int = 200) -> ConditionIIReport:
    """Smallest off-diagonal entry of ``H(t)`` over a sample grid; PASS iff >= -1e-12.

    Row/column indices in the report are 1-based state labels.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    worst = (np.inf, 0.0, 0, 0)
    for t in _grid(horizon, samples, getattr(H, "breakpoints", ())):
        Ht = H(float(t))
        n = Ht.shape[0]
        if n == 1:
            continue
        masked = np.where(np.eye(n, dtype=bool), np.inf, Ht)
        k = int(np.argmin(masked))
        if masked.flat[k] < worst[0]:
            i, j = divmod(k, n)
            worst = (float(masked.flat[k]), float(t), i + 1, j + 1)
    value = worst[0] if np.isfinite(worst[0]) else 0.0
    return ConditionIIReport(value >= -ESS_NONNEG_TOL, value, worst[1], worst[2], worst[3], samples, horizon)


class AlphaProfile:
    """Per-column decay rates ``alpha(t)`` and the derived envelopes' rates.

    Array position ``j`` of :meth:`alpha` is column ``j + 1`` of ``H``.  For
    birth-death-catastrophe chains the conventional label of that column is
    ``alpha_j`` (j = 0..S-1); for chains absorbed at zero it is ``alpha_{j+1}``.
    """

    def __init__(self, alpha_fn: Callable[[float], np.ndarray], S: int, breakpoints: Sequence[float] = (),
                 source: str = "matrix"):
        self._alpha = alpha_fn
        self.S = S
        self._breakpoints = tuple(breakpoints)
        self.source = source

    def alpha(self, t: float) -> np.ndarray:
        return self._alpha(t)

    def beta_star(self, t: float) -> float:
        return float(self._alpha(t).min())

    def beta_lower(self, t: float) -> float:
        return float(self._alpha(t).max())

    def h_star(self, t: float) -> float:
        return -self.beta_star(t)

    def h_lower(self, t: float) -> float:
        return -self.beta_lower(t)

    def betas(self, t: float) -> tuple[float, float]:
        a = self._alpha(t)
        return float(a.min()), float(a.max())

    def breakpoints(self) -> tuple[float, ...]:
        return self._breakpoints


def alpha_profile(rs: ReducedSystem, D: WeightMatrix, check_horizon: float | None = None,
                  check_samples: int = 200) -> AlphaProfile:
    """Alpha profile from negated column sums of ``D B(t) D^-1``.

    With ``check_horizon`` set, essential nonnegativity is sampled first and a
    :class:`ConditionWarning` is issued when it fails; the profile is
    returned regardless.
    """
    H = make_H(rs, D)
    if check_horizon is not None:
        rep = check_condition_ii(H, check_horizon, check_samples)
        if not rep.passed:
            warnings.warn(f"bounds not guaranteed: {rep}", ConditionWarning, stacklevel=2)

    def alpha(t: float) -> np.ndarray:
        return -H(t).sum(axis=0)

    return AlphaProfile(alpha, rs.S, rs.breakpoints(), "matrix")


def alpha_closed_form(m: ChainModel, D: WeightMatrix) -> AlphaProfile:
    """Closed-form alpha profile for the two supported (kind, shape) pairs.

    Birth-death-catastrophe with cumulative weights, for column ``k + 1``
    (``k = 0..S-1``)::

        alpha_k = lam_k + mu_{k+1} + xi_{k+1}
                  - (d_{k+2}/d_{k+1}) lam_{k+1} - (d_k/d_{k+1}) mu_k
                  + (xi_{k+1} - xi_k) * (d_1 + ... + d_k) / d_{k+1}

    with ``lam_S = mu_0 = xi_0 = 0``.  The last term vanishes when the
    catastrophe rate is the same in every state.

    Absorbing at zero with diagonal weights, for ``k = 1..S``::

        alpha_k = -a_kk - sum_{i != k} (d_i / d_k) a_ik
    """
    if D.S != m.S:
        raise ValueError(f"weights have length {D.S}, model needs {m.S}")
    S = m.S
    d = np.asarray(D.d)
    if m.kind is ModelKind.BDPC and D.shape is WeightShape.CUMULATIVE_UPPER:
        lam_f = [r.fn for r in m.tables["lambda"]]
        mu_f = [r.fn for r in m.tables["mu"]]
        xi_f = [r.fn for r in m.tables["xi"]]
        ratio_up = np.append(d[1:] / d[:-1], 0.0)        # d_{k+2}/d_{k+1}
        ratio_down = np.insert(d[:-1] / d[1:], 0, 0.0)   # d_k/d_{k+1}
        prefix = np.insert(np.cumsum(d)[:-1], 0, 0.0) / d  # (d_1+..+d_k)/d_{k+1}

        def alpha(t: float) -> np.ndarray:
            lam = np.array([f(t) for f in lam_f] + [0.0])   # lam_0..lam_S
            mu = np.array([0.0] + [f(t) for f in mu_f])     # mu_0..mu_S
            xi = np.array([0.0] + [f(t) for f in xi_f])     # xi_0..xi_S
            return (lam[:S] + mu[1:] + xi[1:] - ratio_up * lam[1:] - ratio_down * mu[:S]
                    + (xi[1:] - xi[:S]) * prefix)

    elif m.kind is ModelKind.ABSORBING and D.shape is WeightShape.DIAGONAL:
        def alpha(t: float) -> np.ndarray:
            B = m.A(t)[1:, 1:]
            diag = np.diag(B).copy()
            off = (d[:, None] * B).sum(axis=0) - d * diag
            return -diag - off / d

    else:
        raise ValueError(f"no closed form for kind {m.kind.value!r} with {D.shape.value} weights")
    return AlphaProfile(alpha, S, m.breakpoints(), "closed-form")


def profile_for(m: ChainModel, D: WeightMatrix) -> AlphaProfile:
    return alpha_profile(reduce(m), D)
