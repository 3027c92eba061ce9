"""Finite continuous-time Markov chain models.

A :class:`ChainModel` holds the state count ``S + 1`` and a list of
transitions ``(source, target, rate)``.  :meth:`ChainModel.A` assembles the
transposed intensity matrix, ``A[j, i] = q_ij(t)`` off the diagonal and
``A[i, i] = -sum_j q_ij(t)``, so that ``dp/dt = A(t) p`` with columns summing
to zero.

Three structured families have dedicated builders (birth-death-catastrophe,
batch arrival / group service, absorbing at zero); any other finite chain can
be described by a sparse intensity map with :func:`build_general`.
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .rates import RateEvaluationError, RateExpr, RateSyntaxError, as_rate

__all__ = [
    "ModelKind",
    "ChainModel",
    "ModelError",
    "ConfigError",
    "Violation",
    "ValidationReport",
    "build_bdpc",
    "build_szk",
    "build_absorbing",
    "build_general",
    "birth_death_q",
    "eval_A",
    "validate",
    "is_homogeneous",
    "model_from_config",
    "model_to_config",
    "load_model",
]

NEG_TOL = 1e-12
DEFAULT_HORIZON = 10.0
DEFAULT_SAMPLES = 1000


class ModelKind(str, Enum):
    BDPC = "bdpc"
    SZK = "szk"
    ABSORBING = "absorbing"
    GENERAL = "general"


class ModelError(ValueError):
    """A model is malformed or violates an invariant of its kind."""

    def __init__(self, message: str, violations: Sequence["Violation"] = ()):
        self.violations = list(violations)
        super().__init__(message)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Violation:
    kind: str  # "negativity" | "monotonicity" | "absorbing" | "evaluation"
    rate: str
    t: float
    value: float = math.nan
    k: int | None = None

    def __str__(self) -> str:
        at_k = f", k={self.k}" if self.k is not None else ""
        return f"{self.kind}: {self.rate}{at_k} at t={self.t:g} (value {self.value:.6g})"


@dataclass
class ValidationReport:
    kind: ModelKind
    horizon: float
    samples: int
    violations: list[Violation] = field(default_factory=list)
    flags: dict[str, bool] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        lines = [f"model kind: {self.kind.value}; grid: {self.samples} points on [0, {self.horizon:g}]"]
        lines += [f"  {name}: {'yes' if v else 'NO'}" for name, v in self.flags.items()]
        if self.violations:
            lines.append(f"{len(self.violations)} violation(s):")
            lines += [f"  {v}" for v in self.violations]
        else:
            lines.append("no violations")
        return "\n".join(lines)


@dataclass(frozen=True, eq=False)
class ChainModel:
    """Immutable chain on states ``0..S``.

    ``tables`` keeps the kind-specific rate tables by name (``lambda``,
    ``mu``, ``xi`` or ``q``) with human-readable labels; ``transitions``
    lists every ``(source, target, rate-index)`` triple referencing
    ``rates``.  A rate shared by several transitions is evaluated once per
    call of :meth:`A`.
    """

    S: int
    kind: ModelKind
    rates: tuple[RateExpr, ...]
    labels: tuple[str, ...]
    transitions: tuple[tuple[int, int, int], ...]
    tables: Mapping[str, tuple[RateExpr, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if self.S < 1:
            raise ModelError(f"S must be >= 1, got {self.S}")
        n = self.S + 1
        src = np.array([s for s, _, _ in self.transitions], dtype=np.intp)
        dst = np.array([d for _, d, _ in self.transitions], dtype=np.intp)
        ridx = np.array([r for _, _, r in self.transitions], dtype=np.intp)
        object.__setattr__(self, "_flat", dst * n + src)
        object.__setattr__(self, "_ridx", ridx)
        object.__setattr__(self, "_fns", tuple(r.fn for r in self.rates))

    @property
    def n(self) -> int:
        return self.S + 1

    def rate_values(self, t: float) -> np.ndarray:
        try:
            vals = np.array([f(t) for f in self._fns], dtype=float)
        except (RateEvaluationError, ZeroDivisionError, OverflowError) as exc:
            raise RateEvaluationError(f"rate evaluation failed at t={t!r}: {exc}") from exc
        if not np.all(np.isfinite(vals)):
            raise RateEvaluationError(f"non-finite rate at t={t!r}")
        return vals

    def A(self, t: float) -> np.ndarray:
        n = self.n
        vals = self.rate_values(t)
        A = np.bincount(self._flat, weights=vals[self._ridx], minlength=n * n).reshape(n, n)
        A[np.diag_indices(n)] = -A.sum(axis=0)
        return A

    def breakpoints(self) -> tuple[float, ...]:
        pts: set[float] = set()
        for r in self.rates:
            pts.update(r.breakpoints())
        return tuple(sorted(pts))

    def __repr__(self) -> str:
        return f"ChainModel(kind={self.kind.value}, S={self.S}, transitions={len(self.transitions)})"


class _Assembler:
    def __init__(self):
        self.rates: list[RateExpr] = []
        self.labels: list[str] = []
        self.transitions: list[tuple[int, int, int]] = []

    def add_rate(self, rate, label: str) -> int:
        self.rates.append(as_rate(rate))
        self.labels.append(label)
        return len(self.rates) - 1

    def link(self, src: int, dst: int, idx: int):
        self.transitions.append((src, dst, idx))


def _check_len(name: str, seq: Sequence, expected: int):
    if len(seq) != expected:
        raise ModelError(f"{name} must have {expected} entries, got {len(seq)}")


def build_bdpc(S, lam, mu, xi, *, check: bool = True, horizon: float = DEFAULT_HORIZON,
               samples: int = DEFAULT_SAMPLES) -> ChainModel:
    """Birth-death-catastrophe chain on ``0..S``.

    ``lam[k]`` is the birth rate out of state ``k`` (k = 0..S-1); ``mu[k-1]``
    and ``xi[k-1]`` are the death and catastrophe rates out of state ``k``
    (k = 1..S).  A catastrophe sends the chain straight to 0, so for ``k = 1``
    the death and catastrophe rates both land in ``A[0, 1]``.
    """
    _check_len("lambda", lam, S)
    _check_len("mu", mu, S)
    _check_len("xi", xi, S)
    asm = _Assembler()
    for k in range(S):
        asm.link(k, k + 1, asm.add_rate(lam[k], f"lambda_{k}"))
    for k in range(1, S + 1):
        asm.link(k, k - 1, asm.add_rate(mu[k - 1], f"mu_{k}"))
    for k in range(1, S + 1):
        asm.link(k, 0, asm.add_rate(xi[k - 1], f"xi_{k}"))
    rates = tuple(asm.rates)
    m = ChainModel(S, ModelKind.BDPC, rates, tuple(asm.labels), tuple(asm.transitions),
                   {"lambda": rates[:S], "mu": rates[S:2 * S], "xi": rates[2 * S:]})
    if check:
        _raise_on(validate(m, horizon, samples))
    return m


def build_szk(S, lam, mu, *, check: bool = True, horizon: float = DEFAULT_HORIZON,
              samples: int = DEFAULT_SAMPLES) -> ChainModel:
    """Batch-arrival / group-service chain: ``q[i, i+k] = lam[k-1]``, ``q[i, i-k] = mu[k-1]``.

    The rates do not depend on the current state; the builder requires both
    tables to be nonincreasing in the batch size ``k`` on the sample grid.
    """
    _check_len("lambda", lam, S)
    _check_len("mu", mu, S)
    asm = _Assembler()
    li = [asm.add_rate(lam[k - 1], f"lambda_{k}") for k in range(1, S + 1)]
    mi = [asm.add_rate(mu[k - 1], f"mu_{k}") for k in range(1, S + 1)]
    for i in range(S + 1):
        for k in range(1, S + 1):
            if i + k <= S:
                asm.link(i, i + k, li[k - 1])
            if i - k >= 0:
                asm.link(i, i - k, mi[k - 1])
    rates = tuple(asm.rates)
    m = ChainModel(S, ModelKind.SZK, rates, tuple(asm.labels), tuple(asm.transitions),
                   {"lambda": rates[:S], "mu": rates[S:]})
    if check:
        _raise_on(validate(m, horizon, samples))
    return m


def _q_items(q) -> list[tuple[int, int, object]]:
    if isinstance(q, Mapping):
        return [(int(i), int(j), r) for (i, j), r in q.items()]
    return [(int(e["i"]), int(e["j"]), e["rate"]) for e in q]


def _build_sparse(S, q, kind: ModelKind, check, horizon, samples) -> ChainModel:
    asm = _Assembler()
    seen = set()
    for i, j, rate in _q_items(q):
        if i == j:
            raise ModelError(f"diagonal entry ({i},{j}) is not an intensity")
        if not (0 <= i <= S and 0 <= j <= S):
            raise ModelError(f"entry ({i},{j}) outside states 0..{S}")
        if kind is ModelKind.ABSORBING and i == 0:
            raise ModelError(f"entry ({i},{j}) leaves the absorbing state 0")
        if (i, j) in seen:
            raise ModelError(f"duplicate entry ({i},{j})")
        seen.add((i, j))
        asm.link(i, j, asm.add_rate(rate, f"q_{i},{j}"))
    rates = tuple(asm.rates)
    m = ChainModel(S, kind, rates, tuple(asm.labels), tuple(asm.transitions), {"q": rates})
    if check:
        _raise_on(validate(m, horizon, samples))
    return m


def build_absorbing(S, q, *, check: bool = True, horizon: float = DEFAULT_HORIZON,
                    samples: int = DEFAULT_SAMPLES) -> ChainModel:
    """Chain absorbed at 0 from a sparse map ``{(i, j): rate}`` with ``i != 0``."""
    return _build_sparse(S, q, ModelKind.ABSORBING, check, horizon, samples)


def build_general(S, q, *, check: bool = True, horizon: float = DEFAULT_HORIZON,
                  samples: int = DEFAULT_SAMPLES) -> ChainModel:
    return _build_sparse(S, q, ModelKind.GENERAL, check, horizon, samples)


def birth_death_q(lam: Mapping[int, object], mu: Mapping[int, object]) -> dict[tuple[int, int], object]:
    """Sparse intensity map of a birth-death chain; ``lam[k]``: k -> k+1, ``mu[k]``: k -> k-1."""
    q: dict[tuple[int, int], object] = {}
    for k, r in lam.items():
        q[(k, k + 1)] = r
    for k, r in mu.items():
        q[(k, k - 1)] = r
    return q


def eval_A(m: ChainModel, t: float) -> np.ndarray:
    """Transposed intensity matrix at time ``t``."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    A = m.A(t)
    off = A[~np.eye(m.n, dtype=bool)]
    if off.size and off.min() < -NEG_TOL:
        i, j = np.unravel_index(np.argmin(np.where(np.eye(m.n, dtype=bool), np.inf, A)), A.shape)
        raise ModelError(f"negative intensity q_{j},{i}({t:g}) = {A[i, j]:.6g}")
    return A


# ---------------------------------------------------------------------------
# validation


def _sample(rate: RateExpr, grid: np.ndarray) -> tuple[np.ndarray, float | None]:
    fn = rate.fn
    out = np.empty(len(grid))
    for n, t in enumerate(grid):
        try:
            out[n] = fn(t)
        except (RateEvaluationError, ZeroDivisionError, OverflowError):
            out[n] = math.nan
            return out, float(t)
    bad = ~np.isfinite(out)
    return out, (float(grid[np.argmax(bad)]) if bad.any() else None)


def validate(m: ChainModel, horizon: float = DEFAULT_HORIZON, samples: int = DEFAULT_SAMPLES) -> ValidationReport:
    """Sample-based check of the model invariants on ``samples`` equispaced points of ``[0, horizon]``.

    Violations are report content; nothing is raised.
    """
    if not horizon > 0 or samples < 2:
        raise ValueError("need horizon > 0 and samples >= 2")
    grid = np.linspace(0.0, horizon, samples)
    report = ValidationReport(m.kind, horizon, samples)
    values = {}
    for rate, label in zip(m.rates, m.labels):
        vals, bad_t = _sample(rate, grid)
        if bad_t is not None:
            report.violations.append(Violation("evaluation", label, bad_t))
            continue
        values[label] = vals
        neg = vals < -NEG_TOL
        if neg.any():
            n = int(np.argmax(neg))
            report.violations.append(Violation("negativity", label, float(grid[n]), float(vals[n])))
    report.flags["nonnegative"] = not any(v.kind in ("negativity", "evaluation") for v in report.violations)

    if m.kind is ModelKind.SZK:
        mono_ok = True
        for name in ("lambda", "mu"):
            for k in range(1, m.S):
                a, b = values.get(f"{name}_{k}"), values.get(f"{name}_{k + 1}")
                if a is None or b is None:
                    continue
                up = b > a + NEG_TOL
                if up.any():
                    n = int(np.argmax(up))
                    mono_ok = False
                    report.violations.append(
                        Violation("monotonicity", name, float(grid[n]), float(b[n] - a[n]), k)
                    )
        report.flags["monotone"] = mono_ok
    if m.kind is ModelKind.ABSORBING:
        leaves_zero = [s for s, _, _ in m.transitions if s == 0]
        report.flags["absorbing_row_zero"] = not leaves_zero
        for _ in leaves_zero:
            report.violations.append(Violation("absorbing", "row 0", 0.0))
    try:
        drift = max(abs(m.A(float(t)).sum(axis=0)).max() for t in grid[:: max(1, samples // 50)])
        report.flags["columns_sum_zero"] = bool(drift < 1e-14 * max(1.0, _scale(m, grid)))
    except RateEvaluationError:
        report.flags["columns_sum_zero"] = False
    return report


def _scale(m: ChainModel, grid) -> float:
    return float(max(abs(m.A(float(t))).max() for t in grid[:: max(1, len(grid) // 10)]))


def _raise_on(report: ValidationReport):
    if report.violations:
        first = report.violations[0]
        raise ModelError(f"invalid {report.kind.value} model: {first}", report.violations)


def is_homogeneous(m: ChainModel, horizon: float = DEFAULT_HORIZON, samples: int = 64) -> bool:
    """True when ``A(t)`` does not change on a sample grid over ``[0, horizon]``."""
    A0 = m.A(0.0)
    tol = 1e-14 * max(1.0, float(abs(A0).max()))
    pts = list(np.linspace(0.0, horizon, samples)) + list(m.breakpoints())
    return all(np.abs(m.A(float(t)) - A0).max() <= tol for t in pts)


# ---------------------------------------------------------------------------
# config files


def _rates_from(cfg, key: str, length: int | None = None) -> list[RateExpr]:
    if key not in cfg:
        raise ConfigError(f"missing key {key!r}")
    items = cfg[key]
    if not isinstance(items, list):
        raise ConfigError(f"{key!r} must be a list of rate strings")
    out = []
    for n, text in enumerate(items):
        try:
            out.append(as_rate(text if isinstance(text, str) else float(text)))
        except RateSyntaxError as exc:
            raise RateSyntaxError(f"{key}[{n}]: {exc}") from None
    return out


def model_from_config(cfg: Mapping, *, check: bool = True, horizon: float = DEFAULT_HORIZON) -> ChainModel:
    """Build a model from the JSON config schema (``kind``, ``S``, rate lists / ``q`` entries)."""
    try:
        kind = ModelKind(str(cfg["kind"]).lower())
        S = int(cfg["S"])
    except KeyError as exc:
        raise ConfigError(f"missing key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if kind is ModelKind.BDPC:
        return build_bdpc(S, _rates_from(cfg, "lambda"), _rates_from(cfg, "mu"), _rates_from(cfg, "xi"),
                          check=check, horizon=horizon)
    if kind is ModelKind.SZK:
        return build_szk(S, _rates_from(cfg, "lambda"), _rates_from(cfg, "mu"), check=check, horizon=horizon)
    if "q" not in cfg:
        raise ConfigError("missing key 'q'")
    q = {}
    for n, e in enumerate(cfg["q"]):
        try:
            q[(int(e["i"]), int(e["j"]))] = as_rate(e["rate"] if isinstance(e["rate"], str) else float(e["rate"]))
        except KeyError as exc:
            raise ConfigError(f"q[{n}] missing key {exc.args[0]!r}") from None
        except RateSyntaxError as exc:
            raise RateSyntaxError(f"q[{n}]: {exc}") from None
    builder = build_absorbing if kind is ModelKind.ABSORBING else build_general
    return builder(S, q, check=check, horizon=horizon)


def model_to_config(m: ChainModel) -> dict:
    cfg: dict = {"kind": m.kind.value, "S": m.S}
    if m.kind in (ModelKind.BDPC, ModelKind.SZK):
        for name, table in m.tables.items():
            cfg[name] = [str(r) for r in table]
    else:
        cfg["q"] = [
            {"i": s, "j": d, "rate": str(m.rates[r])} for s, d, r in m.transitions
        ]
    return cfg


def load_model(path, *, check: bool = True, horizon: float = DEFAULT_HORIZON) -> ChainModel:
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return model_from_config(cfg, check=check, horizon=horizon)
