"""Projection scheme with a filter-relax stabilisation step.

One step, in the default ``"after"`` order::

    momentum     (w~ - u^n)/dt + (w^n . grad) w~ - nu lap w~ = f(t_{n+1})
    projection   w = w~ - dt grad p,  div w = 0
    filter       wbar = F(w) w
    relax        u = (1 - chi) w + chi wbar,  chi = chi0 dt   [then re-project u]

The ``"before"`` order filters and relaxes ``w~`` and then projects.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import operators as ops
from .filters import FilterSpec, filter_details
from .grid import FaceVectorField, StaggeredGrid
from .linsolve import SolverConfig, SolverError, bicgstab_solve, cg_solve

MODES = ("after", "before")
EPS = np.finfo(float).eps


class StepError(RuntimeError):
    """A sub-step failed; ``state`` holds the last good state for inspection."""

    def __init__(self, msg, state=None, stage=None):
        super().__init__(msg)
        self.state = state
        self.stage = stage


class StabilityViolation(RuntimeError):
    pass


@dataclass
class FlowState:
    t: float
    u: FaceVectorField
    w: FaceVectorField
    p: np.ndarray
    w_tilde: FaceVectorField | None = None  # momentum-step velocity that produced w

    @classmethod
    def from_velocity(cls, w0: FaceVectorField, grid: StaggeredGrid, t0: float = 0.0):
        w0 = w0.with_wall_normals_zeroed()
        return cls(t0, w0.copy(), w0.copy(), np.zeros(grid.p_shape))


@dataclass
class StepperConfig:
    grid: StaggeredGrid
    dt: float
    nu: float
    filter: FilterSpec = field(default_factory=FilterSpec)
    mode: str = "after"
    reproject: bool = True
    forcing: Callable[[float], FaceVectorField] | None = None
    momentum_solver: SolverConfig = field(default_factory=SolverConfig)
    poisson_solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self._chi_warned = False

    @property
    def chi(self) -> float:
        chi = self.filter.chi0 * self.dt
        if chi > 1.0:
            if not self._chi_warned:
                warnings.warn(f"chi = chi0*dt = {chi:g} clamped to 1", RuntimeWarning)
                self._chi_warned = True
            return 1.0
        return chi

    def forcing_at(self, t) -> FaceVectorField | None:
        return None if self.forcing is None else self.forcing(t)


@dataclass
class StepReport:
    t: float
    kinetic_energy: float
    viscous_dissipation: float
    model_dissipation_increment: float
    norm_u: float
    norm_w: float
    norm_wtilde: float
    norm_u_unprojected: float
    div_residual: float
    div_tolerance: float
    projection_jump2: float      # ||w^{n+1} - (projection input)||^2
    momentum_jump2: float        # ||w~^{n+1} - u^n||^2
    forcing_hneg1_2: float       # ||f(t_{n+1})||_{-1}^2, nan when not evaluated
    iters_momentum: int
    iters_poisson: int
    iters_filter: int


CSV_COLUMNS = ("t", "ke", "visc_diss", "model_diss_inc", "norm_u", "norm_w", "div_res",
               "iters_momentum", "iters_poisson", "iters_filter")


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def reports_to_csv(reports, fh=None) -> str:
    """Step reports as CSV text (and written to ``fh`` when given)."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_COLUMNS)
    for r in reports:
        wr.writerow([_fmt(v) for v in (r.t, r.kinetic_energy, r.viscous_dissipation,
                                       r.model_dissipation_increment, r.norm_u, r.norm_w,
                                       r.div_residual, r.iters_momentum, r.iters_poisson,
                                       r.iters_filter)])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


# sub-steps ---------------------------------------------------------------------

def _face_mask(grid):
    return np.concatenate([grid.interior_mask(grid.u_shape).ravel(),
                           grid.interior_mask(grid.v_shape).ravel()])


def momentum_operator(wstar: FaceVectorField, cfg: StepperConfig):
    """``x -> x/dt + advect(w*, x) + nu K x`` on packed face vectors."""
    grid = cfg.grid
    inv_dt = 1.0 / cfg.dt

    def apply(vec):
        x = FaceVectorField.unpack(vec, grid)
        adv = ops.advect(wstar, x, grid)
        out = FaceVectorField(
            inv_dt * x.u + adv.u + cfg.nu * ops.var_diffusion(x.u, 1.0, grid),
            inv_dt * x.v + adv.v + cfg.nu * ops.var_diffusion(x.v, 1.0, grid))
        return out.pack()

    return apply


def momentum_step(state: FlowState, cfg: StepperConfig, t_next: float | None = None):
    """Solve the linearised momentum problem for ``w~``; returns ``(w~, stats)``."""
    grid = cfg.grid
    t_next = state.t + cfg.dt if t_next is None else t_next
    rhs = state.u * (1.0 / cfg.dt)
    f = cfg.forcing_at(t_next)
    if f is not None:
        rhs = rhs + f
    A = momentum_operator(state.w, cfg)
    x0 = state.u.pack()
    vec, stats = bicgstab_solve(A, rhs.pack(), cfg.momentum_solver, x0=x0, mask=_face_mask(grid))
    if not stats.converged:
        raise StepError(f"momentum solve failed: residual {stats.final_residual:.3e} after "
                        f"{stats.iterations} iterations", state, "momentum")
    return FaceVectorField.unpack(vec, grid), stats


def solve_pressure(rhs: np.ndarray, grid: StaggeredGrid, cfg: SolverConfig):
    """Mean-free solution of ``-div grad p = rhs`` (pure Neumann)."""
    return cg_solve(lambda q: ops.neumann_laplacian(q, grid), rhs - np.mean(rhs), cfg,
                    singular=True)


def projection_step(w_tilde: FaceVectorField, cfg: StepperConfig, dt: float | None = None):
    """L2 projection onto discretely divergence-free fields.

    Returns ``(w, p, stats)`` with ``w = w~ - dt grad p`` and ``p`` mean-free.
    """
    grid = cfg.grid
    dt = cfg.dt if dt is None else dt
    if not w_tilde.is_finite():
        raise StepError("non-finite velocity entering projection", stage="projection")
    div = ops.divergence(w_tilde, grid)
    p, stats = solve_pressure(-div / dt, grid, cfg.poisson_solver)
    if not stats.converged:
        raise StepError(f"pressure solve failed: residual {stats.final_residual:.3e}",
                        stage="projection")
    w = w_tilde - ops.gradient_p(p, grid) * dt
    return w, p, stats


def divergence_bound(w_in: FaceVectorField, dt: float, cfg: StepperConfig) -> float:
    """Guaranteed bound on ``||div w||`` (Euclidean) after projecting ``w_in``."""
    grid = cfg.grid
    sc = cfg.poisson_solver
    div_in = float(np.linalg.norm(ops.divergence(w_in, grid)))
    scale = max(np.abs(w_in.u).max(), np.abs(w_in.v).max()) / min(grid.hx, grid.hy)
    roundoff = 64 * EPS * scale * math.sqrt(grid.nx * grid.ny)
    return max(sc.rel_tol * div_in, dt * sc.abs_tol) + roundoff


@dataclass
class RelaxInfo:
    u_unprojected: FaceVectorField
    g_ww: float
    iters_filter: int
    iters_poisson: int


def filter_relax_step(w_next: FaceVectorField, cfg: StepperConfig, reproject: bool | None = None):
    """Filter, relax, and optionally re-project; returns ``(u, info)``."""
    grid = cfg.grid
    chi = cfg.chi
    reproject = cfg.reproject if reproject is None else reproject
    if chi == 0.0:
        return w_next.copy(), RelaxInfo(w_next, 0.0, 0, 0)
    try:
        res = filter_details(w_next, w_next, cfg.filter, grid)
    except SolverError as exc:
        raise StepError(str(exc), stage="filter") from exc
    wbar = res.filtered
    g_ww = ops.inner(w_next - wbar, w_next, grid)
    u = w_next * (1.0 - chi) + wbar * chi
    iters_p = 0
    u_raw = u
    if reproject:
        u, _, stats = projection_step(u, cfg, dt=1.0)
        iters_p = stats.iterations
    return u, RelaxInfo(u_raw, g_ww, res.iterations, iters_p)


def advance(state: FlowState, cfg: StepperConfig, evaluate_forcing_norm: bool = False):
    """One time step; returns ``(new_state, report)``."""
    grid = cfg.grid
    t_next = state.t + cfg.dt
    try:
        w_tilde, mstats = momentum_step(state, cfg, t_next)
        if cfg.mode == "after":
            proj_in = w_tilde
            w, p, pstats = projection_step(proj_in, cfg)
            u, info = filter_relax_step(w, cfg)
        else:
            proj_in, info = filter_relax_step(w_tilde, cfg, reproject=False)
            w, p, pstats = projection_step(proj_in, cfg)
            u = w.copy()
    except StepError as exc:
        exc.state = state
        raise

    chi = cfg.chi
    f2 = float("nan")
    if evaluate_forcing_norm:
        f = cfg.forcing_at(t_next)
        f2 = 0.0 if f is None else ops.hneg1_norm(f, grid) ** 2
    norm_w = ops.l2_norm(w, grid)
    report = StepReport(
        t=t_next,
        kinetic_energy=0.5 * norm_w**2,
        viscous_dissipation=cfg.nu * cfg.dt * ops.h1_seminorm(w_tilde, grid) ** 2,
        model_dissipation_increment=chi * info.g_ww,
        norm_u=ops.l2_norm(u, grid),
        norm_w=norm_w,
        norm_wtilde=ops.l2_norm(w_tilde, grid),
        norm_u_unprojected=ops.l2_norm(info.u_unprojected, grid),
        div_residual=float(np.linalg.norm(ops.divergence(w, grid))),
        div_tolerance=divergence_bound(proj_in, cfg.dt, cfg),
        projection_jump2=ops.inner(w - proj_in, w - proj_in, grid),
        momentum_jump2=ops.inner(w_tilde - state.u, w_tilde - state.u, grid),
        forcing_hneg1_2=f2,
        iters_momentum=mstats.iterations,
        iters_poisson=pstats.iterations + info.iters_poisson,
        iters_filter=info.iters_filter,
    )
    return FlowState(t_next, u, w, p, w_tilde), report


@dataclass
class StabilityLedger:
    """Running sides of the a priori energy estimate."""

    w0_norm2: float
    lhs_sums: float = 0.0
    rhs_sums: float = 0.0
    lhs: float = 0.0
    rhs: float = 0.0
    history: list = field(default_factory=list)

    def update(self, rep: StepReport, nu: float, dt: float):
        self.lhs_sums += rep.projection_jump2 + rep.momentum_jump2 + rep.viscous_dissipation
        if not math.isnan(rep.forcing_hneg1_2):
            self.rhs_sums += dt / nu * rep.forcing_hneg1_2
        self.lhs = rep.norm_w**2 + self.lhs_sums
        self.rhs = self.w0_norm2 + self.rhs_sums
        self.history.append((rep.t, self.lhs, self.rhs))

    def holds(self, rel=1e-10) -> bool:
        return self.lhs <= self.rhs * (1.0 + rel)


def run(initial: FlowState, cfg: StepperConfig, n_steps: int, check_stability: bool = True,
        on_violation: str = "abort", callback=None):
    """Advance ``n_steps`` times, monitoring the energy estimate.

    Returns ``(final_state, reports, ledger)``.  ``on_violation`` is
    ``"abort"`` (raise :class:`StabilityViolation`) or ``"warn"``.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if on_violation not in ("abort", "warn"):
        raise ValueError("on_violation must be 'abort' or 'warn'")
    ledger = StabilityLedger(ops.inner(initial.w, initial.w, cfg.grid))
    state = initial
    reports = []
    for _ in range(n_steps):
        state, rep = advance(state, cfg, evaluate_forcing_norm=check_stability)
        reports.append(rep)
        if check_stability:
            ledger.update(rep, cfg.nu, cfg.dt)
            if not ledger.holds():
                msg = (f"energy estimate violated at t={rep.t:g}: "
                       f"lhs={ledger.lhs:.16e} > rhs={ledger.rhs:.16e}")
                if on_violation == "abort":
                    raise StabilityViolation(msg)
                warnings.warn(msg, RuntimeWarning)
        if callback is not None:
            callback(state, rep)
    return state, reports, ledger
