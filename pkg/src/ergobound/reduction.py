"""Elimination of ``p_0`` from the forward equations.

With ``z = (p_1, ..., p_S)`` and ``p_0 = 1 - sum(z)`` the forward system
becomes ``dz/dt = B(t) z + f(t)`` where ``b_ij = a_ij - a_i0`` and
``f_i = a_i0`` (``i, j = 1..S``).  Array position ``k`` of ``z``, ``f`` and
of the rows/columns of ``B`` holds state ``k + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import ChainModel

__all__ = ["ReducedSystem", "reduce", "p_to_z", "z_to_p", "SIMPLEX_EPS"]

SIMPLEX_EPS = 1e-10


@dataclass(frozen=True)
class ReducedSystem:
    model: ChainModel

    @property
    def S(self) -> int:
        return self.model.S

    def Bf(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        A = self.model.A(t)
        f = A[1:, 0].copy()
        return A[1:, 1:] - f[:, None], f

    def B(self, t: float) -> np.ndarray:
        return self.Bf(t)[0]

    def f(self, t: float) -> np.ndarray:
        return self.model.A(t)[1:, 0].copy()

    def rhs(self, t: float, z: np.ndarray) -> np.ndarray:
        B, f = self.Bf(t)
        return B @ z + (f if z.ndim == 1 else f[:, None])

    def breakpoints(self) -> tuple[float, ...]:
        return self.model.breakpoints()


def reduce(m: ChainModel) -> ReducedSystem:
    return ReducedSystem(m)


def p_to_z(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise ValueError("p must be a vector over states 0..S")
    if p.min() < -SIMPLEX_EPS or abs(p.sum() - 1.0) > SIMPLEX_EPS:
        raise ValueError("p is not a probability vector")
    return p[1:].copy()


def z_to_p(z) -> np.ndarray:
    """Rebuild ``(1 - sum z, z)``; entries in ``[-eps, 0)`` are clamped to zero."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise ValueError("z must be a vector")
    if z.size and z.min() < -SIMPLEX_EPS:
        raise ValueError(f"z has entry {z.min():.3g} below -{SIMPLEX_EPS:g}")
    z = np.where(z < 0, 0.0, z)
    total = z.sum()
    if total > 1.0 + SIMPLEX_EPS:
        raise ValueError(f"sum(z) = {total!r} exceeds 1")
    return np.concatenate(([max(1.0 - total, 0.0)], z))
