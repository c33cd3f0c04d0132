"""Indicator functionals and the nonlinear differential filter.

The filter ``F`` maps ``w`` to the solution of

    (I + K_c) F w = w,   c = delta**2 * max(a(u_ind), eps),

componentwise with homogeneous Dirichlet data, where ``K_c`` is
:func:`~filterproj.operators.var_diffusion`.  ``G = I - F`` is the
fluctuation operator.  The indicator ``a`` is evaluated once per call from
``u_ind`` and then frozen, so ``F`` and ``G`` are linear within a call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from .grid import FaceVectorField, StaggeredGrid
from .linsolve import SolverConfig, SolverError, cg_solve, dense_solve

BOUNDED_KINDS = ("constant", "normalized_gradient", "q_criterion", "vreman")
KINDS = BOUNDED_KINDS + ("raw_smagorinsky", "geometric_mean")


@dataclass(frozen=True)
class IndicatorKind:
    """An indicator functional.

    ``name`` is one of :data:`KINDS`; ``parts`` lists the member indicators
    of a ``geometric_mean``.  ``eta`` regularises the normalisations.
    """

    name: str = "constant"
    eta: float = 1e-10
    parts: tuple = ()

    def __post_init__(self):
        if self.name not in KINDS:
            raise ValueError(f"unknown indicator {self.name!r}; choose from {KINDS}")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.name == "geometric_mean" and not self.parts:
            raise ValueError("geometric_mean needs at least one member indicator")

    @property
    def bounded(self) -> bool:
        """True when the indicator is guaranteed to lie in [0, 1]."""
        if self.name == "geometric_mean":
            return all(p.bounded for p in self.parts)
        return self.name != "raw_smagorinsky"

    @classmethod
    def parse(cls, text: str, eta: float = 1e-10) -> "IndicatorKind":
        """Parse ``"vreman"`` or ``"geometric_mean(q_criterion, vreman)"``."""
        text = text.strip()
        if text.startswith("geometric_mean"):
            inner = text[len("geometric_mean"):].strip()
            if not (inner.startswith("(") and inner.endswith(")")):
                raise ValueError(f"malformed indicator {text!r}")
            names = [t.strip() for t in inner[1:-1].split(",") if t.strip()]
            return cls("geometric_mean", eta, tuple(cls.parse(n, eta) for n in names))
        return cls(text, eta)

    def __str__(self):
        if self.name == "geometric_mean":
            return "geometric_mean(" + ",".join(str(p) for p in self.parts) + ")"
        return self.name


def eval_indicator(kind: IndicatorKind, w: FaceVectorField, grid: StaggeredGrid) -> np.ndarray:
    """Cell-centred indicator field ``a(w)``."""
    if kind.name == "constant":
        return np.ones(grid.p_shape)
    if kind.name == "geometric_mean":
        prod = np.ones(grid.p_shape)
        for part in kind.parts:
            prod = prod * eval_indicator(part, w, grid)
        return prod ** (1.0 / len(kind.parts))

    g = ops.grad_tensor(w, grid)
    eta = kind.eta
    if kind.name == "raw_smagorinsky":
        return g.frobenius()
    if kind.name == "normalized_gradient":
        mag = g.frobenius()
        return mag / (mag.max() + eta)
    if kind.name == "q_criterion":
        # |S|^2 / (|S|^2 + |Omega|^2): 0 for rigid rotation, 1 for pure strain
        s12 = 0.5 * (g.dudy + g.dvdx)
        o12 = 0.5 * (g.dudy - g.dvdx)
        s2 = g.dudx**2 + g.dvdy**2 + 2 * s12**2
        o2 = 2 * o12**2
        # equals 0.5 * (1 - 2Q / (|S|^2 + |Omega|^2)) with Q = (|Omega|^2 - |S|^2) / 2,
        # written so that a vanishing gradient maps to 0
        return np.clip(s2 / (s2 + o2 + eta), 0.0, 1.0)
    if kind.name == "vreman":
        # beta = alpha^T alpha, alpha_ij = d u_j / d x_i
        b11 = g.dudx**2 + g.dvdx**2
        b22 = g.dudy**2 + g.dvdy**2
        b12 = g.dudx * g.dudy + g.dvdx * g.dvdy
        bb = np.maximum(b11 * b22 - b12**2, 0.0)
        aa = g.dudx**2 + g.dudy**2 + g.dvdx**2 + g.dvdy**2
        return np.clip(np.sqrt(bb) / (aa + eta), 0.0, 1.0)
    raise AssertionError(kind.name)


@dataclass(frozen=True)
class FilterSpec:
    """Filter parameters.

    The filtering radius is either an explicit cell field ``delta`` or the
    rule ``delta = c_delta * h``.  ``chi0`` sets the relaxation weight
    ``chi = chi0 * dt`` used by the stepper.
    """

    kind: IndicatorKind = field(default_factory=IndicatorKind)
    c_delta: float | None = 1.0
    delta: np.ndarray | float | None = None
    eps_floor: float = 0.0
    chi0: float = 1.0
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not (0.0 <= self.eps_floor < 1.0):
            raise ValueError("eps_floor must lie in [0, 1)")
        if self.chi0 < 0:
            raise ValueError("chi0 must be >= 0")
        if self.delta is None and (self.c_delta is None or self.c_delta < 0):
            raise ValueError("need a non-negative c_delta or an explicit delta field")
        if self.delta is not None and np.any(np.asarray(self.delta) < 0):
            raise ValueError("delta must be non-negative")

    def delta_field(self, grid: StaggeredGrid) -> np.ndarray:
        if self.delta is not None:
            return np.broadcast_to(np.asarray(self.delta, dtype=float), grid.p_shape)
        return np.full(grid.p_shape, self.c_delta * grid.h)

    def delta_max(self, grid: StaggeredGrid) -> float:
        return float(np.abs(self.delta_field(grid)).max())

    def coefficient(self, u_ind: FaceVectorField, grid: StaggeredGrid) -> np.ndarray:
        """Frozen diffusion coefficient ``delta**2 * max(a(u_ind), eps)``."""
        a = eval_indicator(self.kind, u_ind, grid)
        return self.delta_field(grid) ** 2 * np.maximum(a, self.eps_floor)


@dataclass
class FilterResult:
    filtered: FaceVectorField
    coefficient: np.ndarray
    iterations: int


def _filter_component(wc, coef, grid, cfg):
    mask = grid.interior_mask(wc.shape)
    if not np.any(coef):
        return wc.copy(), 0

    def A(x):
        return x + ops.var_diffusion(x, coef, grid)

    x, stats = cg_solve(A, wc, cfg, mask=mask)
    if not stats.converged:
        raise SolverError(f"filter solve stalled at residual {stats.final_residual:.3e} "
                          f"after {stats.iterations} iterations")
    return x, stats.iterations


def filter_with_coefficient(w: FaceVectorField, coef, grid: StaggeredGrid,
                            cfg: SolverConfig = SolverConfig()) -> FilterResult:
    """Apply ``(I + K_coef)^{-1}`` to each component of ``w``."""
    coef = np.broadcast_to(np.asarray(coef, dtype=float), grid.p_shape)
    fu, iu = _filter_component(w.u, coef, grid, cfg)
    fv, iv = _filter_component(w.v, coef, grid, cfg)
    return FilterResult(FaceVectorField(fu, fv), coef, iu + iv)


def filter_details(w: FaceVectorField, u_ind: FaceVectorField, spec: FilterSpec,
                   grid: StaggeredGrid) -> FilterResult:
    return filter_with_coefficient(w, spec.coefficient(u_ind, grid), grid, spec.solver)


def apply_filter(w: FaceVectorField, u_ind: FaceVectorField, spec: FilterSpec,
                 grid: StaggeredGrid) -> FaceVectorField:
    """``F(u_ind) w``; pass ``u_ind = w`` for the usual self-filtered velocity."""
    return filter_details(w, u_ind, spec, grid).filtered


def apply_G(w, u_ind, spec: FilterSpec, grid: StaggeredGrid) -> FaceVectorField:
    return w - apply_filter(w, u_ind, spec, grid)


def dense_filter(w: FaceVectorField, coef, grid: StaggeredGrid) -> FaceVectorField:
    """Filter by direct factorisation of the assembled system (test oracle)."""
    coef = np.broadcast_to(np.asarray(coef, dtype=float), grid.p_shape)
    out = []
    for wc in w.components():
        mask = grid.interior_mask(wc.shape)
        out.append(dense_solve(lambda x: x + ops.var_diffusion(x, coef, grid), wc, mask=mask))
    return FaceVectorField(*out)


def dissipation_pair(w, u_ind, spec: FilterSpec, grid: StaggeredGrid):
    """``((G w, w), (delta^2 a grad w, grad w))`` with one frozen coefficient."""
    res = filter_details(w, u_ind, spec, grid)
    g_ww = ops.inner(w - res.filtered, w, grid)
    visc_ww = ops.energy_form(w, res.coefficient, grid)
    return g_ww, visc_ww


@dataclass
class StabilityReport:
    chi: float
    g_ww: float          # (G w, w)
    w_norm2: float       # ||w||^2
    gw_norm2: float      # ||G w||^2
    adjoint_defect: float
    adjoint_scale: float
    cond_energy: bool    # chi (Gw, w) <= ||w||^2
    cond_g: bool         # chi ||Gw||^2 <= (Gw, w)
    self_adjoint: bool

    @property
    def passed(self) -> bool:
        return self.cond_energy and self.cond_g and self.self_adjoint

    @property
    def margin_energy(self) -> float:
        return self.w_norm2 - self.chi * self.g_ww

    @property
    def margin_g(self) -> float:
        return self.g_ww - self.chi * self.gw_norm2


def check_stability_conditions(w, u_ind, spec: FilterSpec, grid: StaggeredGrid, chi: float,
                               y: FaceVectorField | None = None, rel_slack: float = 1e-10,
                               adjoint_tol: float = 1e-9, rng=None) -> StabilityReport:
    """Evaluate both energy-stability conditions and the symmetry of ``G``.

    ``y`` is the partner field for the symmetry test; a seeded random field
    is drawn when it is omitted.
    """
    if not 0.0 <= chi <= 1.0:
        raise ValueError("chi must lie in [0, 1]")
    from .grid import random_field

    if y is None:
        y = random_field(grid, rng if rng is not None else np.random.default_rng(0))
    coef = spec.coefficient(u_ind, grid)
    gw = w - filter_with_coefficient(w, coef, grid, spec.solver).filtered
    gy = y - filter_with_coefficient(y, coef, grid, spec.solver).filtered
    g_ww = ops.inner(gw, w, grid)
    w2 = ops.inner(w, w, grid)
    gw2 = ops.inner(gw, gw, grid)
    defect = abs(ops.inner(gw, y, grid) - ops.inner(w, gy, grid))
    scale = ops.l2_norm(w, grid) * ops.l2_norm(y, grid)
    slack = rel_slack * w2
    return StabilityReport(
        chi=chi, g_ww=g_ww, w_norm2=w2, gw_norm2=gw2,
        adjoint_defect=defect, adjoint_scale=scale,
        cond_energy=bool(chi * g_ww <= w2 + slack and g_ww >= -slack),
        cond_g=bool(chi * gw2 <= g_ww + slack),
        self_adjoint=bool(defect <= adjoint_tol * scale),
    )


def eigen_gain(delta: float, lam: float) -> float:
    """Filter gain ``1 / (1 + delta^2 lam)`` on a Laplacian eigenmode (a = 1)."""
    return 1.0 / (1.0 + delta * delta * lam)


def laplacian_eigenvalue(k: int, m: int, grid: StaggeredGrid) -> float:
    """Eigenvalue of the 5-point Dirichlet Laplacian for sin(k pi x/lx) sin(m pi y/ly)."""
    return (4.0 / grid.hx**2 * math.sin(k * math.pi * grid.hx / (2 * grid.lx)) ** 2
            + 4.0 / grid.hy**2 * math.sin(m * math.pi * grid.hy / (2 * grid.ly)) ** 2)
