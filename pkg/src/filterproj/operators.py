"""Second-order MAC difference operators, inner products and discrete norms."""
from __future__ import annotations

import numpy as np

from .grid import CellTensorField, FaceVectorField, StaggeredGrid


# inner products ------------------------------------------------------------

def _dot(a: np.ndarray, b: np.ndarray) -> float:
    # np.sum uses fixed-order pairwise summation, so results are reproducible.
    return float(np.sum(np.multiply(a, b).ravel()))


def inner(f, g, grid: StaggeredGrid | None = None) -> float:
    """Area-weighted L2 inner product of two cell fields or two face fields.

    Wall-normal faces carry the same weight as interior faces; they are zero
    for Dirichlet fields and do not contribute.
    """
    if isinstance(f, FaceVectorField) != isinstance(g, FaceVectorField):
        raise ValueError("cannot mix face and cell fields")
    if isinstance(f, FaceVectorField):
        if f.u.shape != g.u.shape or f.v.shape != g.v.shape:
            raise ValueError("shape mismatch")
        s = _dot(f.u, g.u) + _dot(f.v, g.v)
    else:
        f = np.asarray(f)
        g = np.asarray(g)
        if f.shape != g.shape:
            raise ValueError(f"shape mismatch: {f.shape} vs {g.shape}")
        s = _dot(f, g)
    return s * (grid.cell_area if grid is not None else 1.0)


def l2_norm(f, grid: StaggeredGrid | None = None) -> float:
    return float(np.sqrt(max(inner(f, f, grid), 0.0)))


# divergence / gradient --------------------------------------------------

def divergence(w: FaceVectorField, grid: StaggeredGrid) -> np.ndarray:
    return (w.u[1:, :] - w.u[:-1, :]) / grid.hx + (w.v[:, 1:] - w.v[:, :-1]) / grid.hy


def gradient_p(p: np.ndarray, grid: StaggeredGrid) -> FaceVectorField:
    """Centered pressure gradient on interior faces; zero on wall faces."""
    gu = np.zeros(grid.u_shape)
    gv = np.zeros(grid.v_shape)
    gu[1:-1, :] = (p[1:, :] - p[:-1, :]) / grid.hx
    gv[:, 1:-1] = (p[:, 1:] - p[:, :-1]) / grid.hy
    return FaceVectorField(gu, gv)


def neumann_laplacian(p: np.ndarray, grid: StaggeredGrid) -> np.ndarray:
    """``-div grad p`` with zero normal gradient on the walls (positive semidefinite)."""
    return -divergence(gradient_p(p, grid), grid)


# variable-coefficient diffusion -------------------------------------------

def _var_diffusion_u(w, c, hn, ht):
    """-div(c grad w) for an array laid out like ``u``.

    Axis 0 is node-centred with Dirichlet values stored in the first and last
    rows; axis 1 is cell-centred with reflected ghosts (ghost = -interior).
    """
    out = np.zeros_like(w)
    # normal direction: fluxes live at cell centres, coefficient needs no averaging
    fx = c * (w[1:, :] - w[:-1, :]) / hn
    out[1:-1, :] = -(fx[1:, :] - fx[:-1, :]) / hn
    # tangential direction: fluxes live at cell corners
    cpad = np.concatenate([c[:, :1], c, c[:, -1:]], axis=1)
    ccorner = 0.25 * (cpad[:-1, :-1] + cpad[1:, :-1] + cpad[:-1, 1:] + cpad[1:, 1:])
    ce = ccorner[:, :]  # shape (nx-1, ny+1) for interior faces
    wi = w[1:-1, :]
    grad = np.empty((wi.shape[0], wi.shape[1] + 1))
    grad[:, 1:-1] = (wi[:, 1:] - wi[:, :-1]) / ht
    grad[:, 0] = 2.0 * wi[:, 0] / ht
    grad[:, -1] = -2.0 * wi[:, -1] / ht
    fy = ce * grad
    out[1:-1, :] -= (fy[:, 1:] - fy[:, :-1]) / ht
    return out


def var_diffusion(w: np.ndarray, c, grid: StaggeredGrid) -> np.ndarray:
    """Discrete ``-div(c grad w)`` for one velocity component.

    ``w`` is a u- or v-shaped array (homogeneous Dirichlet), ``c`` a
    non-negative cell-centred coefficient or a scalar.  Cell values are
    averaged arithmetically onto the stencil edges that need them.  The
    resulting matrix is symmetric positive semidefinite.
    """
    w = np.asarray(w, dtype=float)
    c = np.broadcast_to(np.asarray(c, dtype=float), grid.p_shape)
    if np.any(c < 0):
        raise ValueError("diffusion coefficient must be non-negative")
    comp = grid.component_of(w.shape)
    if comp == "u":
        return _var_diffusion_u(w, c, grid.hx, grid.hy)
    if comp == "v":
        return _var_diffusion_u(w.T, c.T, grid.hy, grid.hx).T
    raise ValueError("var_diffusion acts on face components only")


def vector_diffusion(w: FaceVectorField, c, grid: StaggeredGrid) -> FaceVectorField:
    return FaceVectorField(var_diffusion(w.u, c, grid), var_diffusion(w.v, c, grid))


def h1_seminorm(w, grid: StaggeredGrid) -> float:
    """sqrt((K w, w)) with K the Dirichlet Laplacian, summed over components."""
    if isinstance(w, FaceVectorField):
        s = sum(_dot(var_diffusion(x, 1.0, grid), x) for x in w.components())
    else:
        s = _dot(var_diffusion(w, 1.0, grid), w)
    return float(np.sqrt(max(s * grid.cell_area, 0.0)))


def energy_form(w: FaceVectorField, c, grid: StaggeredGrid) -> float:
    """(c grad w, grad w) in its discrete form ``(var_diffusion(w, c), w)``."""
    return inner(vector_diffusion(w, c, grid), w, grid)


# advection ------------------------------------------------------------------

def _advect_u(ws: FaceVectorField, wu: np.ndarray, hx, hy):
    """Skew-symmetric advection of a u-shaped array by the face velocity ``ws``.

    Around the u control volume the transporting fluxes are two-point averages
    of ``ws``; the operator keeps only the neighbour terms of the central
    conservative form, which equals 1/2[(w*.grad)w + div(w* (x) w)].
    """
    out = np.zeros_like(wu)
    # east/west faces at cell centres: F = mean of the two adjacent u*
    fc = 0.5 * (ws.u[1:, :] + ws.u[:-1, :])            # (nx, ny)
    out[1:-1, :] += fc[1:, :] * wu[2:, :] - fc[:-1, :] * wu[:-2, :]
    out[1:-1, :] /= 2.0 * hx
    # north/south faces at corners: F = mean of the two adjacent v*
    fn = 0.5 * (ws.v[1:, :] + ws.v[:-1, :])            # (nx-1, ny+1)
    wi = wu[1:-1, :]
    up = np.zeros_like(wi)
    dn = np.zeros_like(wi)
    up[:, :-1] = fn[:, 1:-1] * wi[:, 1:]
    up[:, -1] = fn[:, -1] * (-wi[:, -1])
    dn[:, 1:] = fn[:, 1:-1] * wi[:, :-1]
    dn[:, 0] = fn[:, 0] * (-wi[:, 0])
    out[1:-1, :] += (up - dn) / (2.0 * hy)
    return out


def advect(wstar: FaceVectorField, w: FaceVectorField, grid: StaggeredGrid) -> FaceVectorField:
    """Skew-symmetric centred discretisation of ``(w* . grad) w`` on the faces.

    The matrix acting on the unknowns of ``w`` is exactly antisymmetric, so
    ``inner(advect(ws, w), w) == 0`` up to round-off.
    """
    au = _advect_u(wstar, w.u, grid.hx, grid.hy)
    ws_t = FaceVectorField(wstar.v.T, wstar.u.T)
    av = _advect_u(ws_t, w.v.T, grid.hy, grid.hx).T
    return FaceVectorField(au, av)


# velocity gradient ----------------------------------------------------------

def _centered_diff_axis1(f, h):
    """d/d(axis 1) of a cell-centred array; one-sided second order at the ends."""
    d = np.empty_like(f)
    n = f.shape[1]
    if n >= 3:
        d[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (2 * h)
        d[:, 0] = (-3 * f[:, 0] + 4 * f[:, 1] - f[:, 2]) / (2 * h)
        d[:, -1] = (3 * f[:, -1] - 4 * f[:, -2] + f[:, -3]) / (2 * h)
    else:
        d[:, :] = ((f[:, 1] - f[:, 0]) / h)[:, None]
    return d


def grad_tensor(w: FaceVectorField, grid: StaggeredGrid) -> CellTensorField:
    """Velocity gradient at cell centres.

    Normal derivatives are exact face differences; cross derivatives are
    taken from the cell-averaged velocity without reference to wall data.
    """
    dudx = (w.u[1:, :] - w.u[:-1, :]) / grid.hx
    dvdy = (w.v[:, 1:] - w.v[:, :-1]) / grid.hy
    uc = 0.5 * (w.u[1:, :] + w.u[:-1, :])
    vc = 0.5 * (w.v[:, 1:] + w.v[:, :-1])
    dudy = _centered_diff_axis1(uc, grid.hy)
    dvdx = _centered_diff_axis1(vc.T, grid.hx).T
    return CellTensorField(dudx, dudy, dvdx, dvdy)


# discrete negative norm -------------------------------------------------------

def hneg1_norm(f, grid: StaggeredGrid, rel_tol: float = 1e-12, max_iter: int | None = None) -> float:
    """sqrt((f, K^{-1} f)) with K the homogeneous Dirichlet Laplacian.

    Accepts a face field (componentwise) or a single u/v-shaped component.
    """
    from .linsolve import SolverConfig, SolverError, cg_solve

    cfg = SolverConfig(rel_tol=rel_tol, abs_tol=1e-300, max_iter=max_iter)
    comps = f.components() if isinstance(f, FaceVectorField) else (np.asarray(f, dtype=float),)
    total = 0.0
    for fc in comps:
        mask = grid.interior_mask(fc.shape)
        if not np.any(fc[mask]):
            continue
        x, stats = cg_solve(lambda z: var_diffusion(z, 1.0, grid), fc, cfg, mask=mask)
        if not stats.converged:
            raise SolverError(f"negative-norm solve did not converge "
                              f"(residual {stats.final_residual:.3e})")
        total += _dot(np.where(mask, fc, 0.0), x)
    return float(np.sqrt(max(total * grid.cell_area, 0.0)))
