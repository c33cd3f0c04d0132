"""Staggered (MAC) grid geometry and discrete field containers.

Layout, with ``i`` the x-index and ``j`` the y-index (``indexing='ij'``)::

    p[i, j]  cell centers        x = (i + 1/2) hx,  y = (j + 1/2) hy   shape (nx, ny)
    u[i, j]  vertical faces      x = i hx,          y = (j + 1/2) hy   shape (nx + 1, ny)
    v[i, j]  horizontal faces    x = (i + 1/2) hx,  y = j hy           shape (nx, ny + 1)

The faces ``u[0, :]``, ``u[nx, :]``, ``v[:, 0]`` and ``v[:, ny]`` lie on the
walls and hold the normal velocity, which is zero for the homogeneous
Dirichlet problems treated here.  Tangential wall values are imposed through
reflected ghosts inside the operators.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class StaggeredGrid:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("cell counts must be integers")
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"need nx, ny >= 2, got nx={self.nx}, ny={self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError(f"domain lengths must be positive, got lx={self.lx}, ly={self.ly}")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def h(self) -> float:
        """Largest mesh width."""
        return max(self.hx, self.hy)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def u_shape(self) -> tuple[int, int]:
        return (self.nx + 1, self.ny)

    @property
    def v_shape(self) -> tuple[int, int]:
        return (self.nx, self.ny + 1)

    @property
    def p_shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    # coordinates ---------------------------------------------------------

    def x_nodes(self):
        return np.arange(self.nx + 1) * self.hx

    def y_nodes(self):
        return np.arange(self.ny + 1) * self.hy

    def x_centers(self):
        return (np.arange(self.nx) + 0.5) * self.hx

    def y_centers(self):
        return (np.arange(self.ny) + 0.5) * self.hy

    def u_coords(self):
        return np.meshgrid(self.x_nodes(), self.y_centers(), indexing="ij")

    def v_coords(self):
        return np.meshgrid(self.x_centers(), self.y_nodes(), indexing="ij")

    def p_coords(self):
        return np.meshgrid(self.x_centers(), self.y_centers(), indexing="ij")

    def corner_coords(self):
        return np.meshgrid(self.x_nodes(), self.y_nodes(), indexing="ij")

    # masks -----------------------------------------------------------------

    def interior_mask(self, shape) -> np.ndarray:
        """Boolean mask of the unknown (non-wall) entries of a u- or v-shaped array."""
        mask = np.ones(shape, dtype=bool)
        if tuple(shape) == self.u_shape:
            mask[0, :] = mask[-1, :] = False
        elif tuple(shape) == self.v_shape:
            mask[:, 0] = mask[:, -1] = False
        elif tuple(shape) != self.p_shape:
            raise ValueError(f"shape {shape} does not belong to {self}")
        return mask

    def component_of(self, shape) -> str:
        shape = tuple(shape)
        if shape == self.u_shape:
            return "u"
        if shape == self.v_shape:
            return "v"
        if shape == self.p_shape:
            return "p"
        raise ValueError(f"shape {shape} does not belong to {self}")


def make_grid(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0) -> StaggeredGrid:
    return StaggeredGrid(nx, ny, float(lx), float(ly))


@dataclass
class FaceVectorField:
    """Velocity stored on the faces of a :class:`StaggeredGrid`."""

    u: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, grid: StaggeredGrid) -> "FaceVectorField":
        return cls(np.zeros(grid.u_shape), np.zeros(grid.v_shape))

    @classmethod
    def from_functions(cls, grid: StaggeredGrid, fu, fv) -> "FaceVectorField":
        """Sample ``fu(x, y)`` and ``fv(x, y)`` on the faces and zero the wall normals."""
        w = cls(np.asarray(fu(*grid.u_coords()), dtype=float) * np.ones(grid.u_shape),
                np.asarray(fv(*grid.v_coords()), dtype=float) * np.ones(grid.v_shape))
        return w.with_wall_normals_zeroed()

    def with_wall_normals_zeroed(self) -> "FaceVectorField":
        u = self.u.copy()
        v = self.v.copy()
        u[0, :] = u[-1, :] = 0.0
        v[:, 0] = v[:, -1] = 0.0
        return FaceVectorField(u, v)

    def copy(self) -> "FaceVectorField":
        return FaceVectorField(self.u.copy(), self.v.copy())

    def components(self):
        return (self.u, self.v)

    def map(self, fn) -> "FaceVectorField":
        return FaceVectorField(fn(self.u), fn(self.v))

    def __add__(self, other):
        return FaceVectorField(self.u + other.u, self.v + other.v)

    def __sub__(self, other):
        return FaceVectorField(self.u - other.u, self.v - other.v)

    def __mul__(self, s):
        return FaceVectorField(self.u * s, self.v * s)

    __rmul__ = __mul__

    def __neg__(self):
        return FaceVectorField(-self.u, -self.v)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v)))

    def pack(self) -> np.ndarray:
        return np.concatenate([self.u.ravel(), self.v.ravel()])

    @classmethod
    def unpack(cls, vec, grid: StaggeredGrid) -> "FaceVectorField":
        nu = grid.u_shape[0] * grid.u_shape[1]
        return cls(vec[:nu].reshape(grid.u_shape).copy(), vec[nu:].reshape(grid.v_shape).copy())


class CellTensorField(NamedTuple):
    """Velocity gradient components at cell centers."""

    dudx: np.ndarray
    dudy: np.ndarray
    dvdx: np.ndarray
    dvdy: np.ndarray

    def frobenius(self) -> np.ndarray:
        return np.sqrt(self.dudx**2 + self.dudy**2 + self.dvdx**2 + self.dvdy**2)


def random_field(grid: StaggeredGrid, rng: np.random.Generator) -> FaceVectorField:
    """White-noise velocity with zero wall normals."""
    return FaceVectorField(rng.standard_normal(grid.u_shape),
                           rng.standard_normal(grid.v_shape)).with_wall_normals_zeroed()


def random_divfree_field(grid: StaggeredGrid, rng: np.random.Generator) -> FaceVectorField:
    """Discretely divergence-free random velocity from a corner streamfunction.

    The streamfunction vanishes on the boundary nodes, so the wall-normal
    faces come out exactly zero.
    """
    psi = np.zeros((grid.nx + 1, grid.ny + 1))
    psi[1:-1, 1:-1] = rng.standard_normal((grid.nx - 1, grid.ny - 1))
    u = (psi[:, 1:] - psi[:, :-1]) / grid.hy
    v = -(psi[1:, :] - psi[:-1, :]) / grid.hx
    return FaceVectorField(u, v)
