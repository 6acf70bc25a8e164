"""Degree-of-freedom layout for V_h x Q~_h x R."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import TensorBasis
from .mesh import GeometricMesh


@dataclass(frozen=True)
class DofMap:
    """Element-major numbering.

    Velocity dofs come first: element ``e``, component ``c``, local shape ``i``
    sits at ``e*3*nv + c*nv + i``.  Pressure dofs follow at ``M + e*np + j`` and
    the mean-value multiplier is the last index ``M + N``.
    """
    n_elements: int
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"polynomial degree k must be >= 1, got {self.k}")

    @property
    def velocity_basis(self) -> TensorBasis:
        return TensorBasis(self.k)

    @property
    def pressure_basis(self) -> TensorBasis:
        return TensorBasis(self.k - 1)

    @property
    def nv(self) -> int:
        return (self.k + 1) ** 3

    @property
    def np_(self) -> int:
        return self.k ** 3

    @property
    def M(self) -> int:
        return 3 * self.nv * self.n_elements

    @property
    def N(self) -> int:
        return self.np_ * self.n_elements

    @property
    def total(self) -> int:
        return self.M + self.N + 1

    @property
    def multiplier(self) -> int:
        return self.M + self.N

    def velocity(self, e: int, c: int) -> np.ndarray:
        start = e * 3 * self.nv + c * self.nv
        return np.arange(start, start + self.nv)

    def velocity_block(self, e: int) -> np.ndarray:
        return np.arange(e * 3 * self.nv, (e + 1) * 3 * self.nv)

    def pressure(self, e: int, offset: bool = False) -> np.ndarray:
        start = e * self.np_ + (self.M if offset else 0)
        return np.arange(start, start + self.np_)

    def split(self, x):
        """Split an augmented (or M+N) vector into velocity, pressure, multiplier."""
        x = np.asarray(x)
        u = x[: self.M].reshape(self.n_elements, 3, self.nv)
        p = x[self.M: self.M + self.N].reshape(self.n_elements, self.np_)
        r = float(x[self.M + self.N]) if len(x) > self.M + self.N else 0.0
        return u, p, r


def build_dofmap(mesh: GeometricMesh, k: int) -> DofMap:
    if int(k) != k or k < 1:
        raise ValueError(f"polynomial degree k must be >= 1, got {k}")
    return DofMap(len(mesh), int(k))
