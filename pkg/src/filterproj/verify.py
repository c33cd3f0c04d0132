"""Manufactured solution, error measurement, convergence studies and the
property suite that exercises the filter and stepper inequalities."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import operators as ops
from .filters import (FilterSpec, IndicatorKind, dense_filter,
                      filter_with_coefficient)
from .grid import FaceVectorField, StaggeredGrid, make_grid, random_divfree_field, random_field
from .linsolve import SolverConfig
from .stepper import FlowState, StepperConfig, advance, momentum_step, projection_step

PI = math.pi


# manufactured solution ---------------------------------------------------------
#
#   u = g(t) (sin^2(pi x) sin(2 pi y), -sin(2 pi x) sin^2(pi y))
#   p = g(t) cos(pi x) cos(pi y),        g(t) = cos t,  on the unit square.

def _g(t):
    return math.cos(t)


def _dg(t):
    return -math.sin(t)


def velocity_shape(x, y):
    """Spatial profile U(x, y) of the manufactured velocity."""
    return (np.sin(PI * x) ** 2 * np.sin(2 * PI * y),
            -np.sin(2 * PI * x) * np.sin(PI * y) ** 2)


def pressure_shape(x, y):
    return np.cos(PI * x) * np.cos(PI * y)


def exact_velocity(t, grid: StaggeredGrid) -> FaceVectorField:
    g = _g(t)
    return FaceVectorField.from_functions(grid, lambda x, y: g * velocity_shape(x, y)[0],
                                          lambda x, y: g * velocity_shape(x, y)[1])


def exact_pressure(t, grid: StaggeredGrid) -> np.ndarray:
    p = _g(t) * pressure_shape(*grid.p_coords())
    return p - p.mean()


def exact_fields(t, grid: StaggeredGrid):
    """Face samples of the exact velocity and mean-free cell samples of the pressure."""
    return exact_velocity(t, grid), exact_pressure(t, grid)


def forcing_components(t, nu, x, y):
    """Right-hand side ``u_t + (u.grad)u - nu lap u + grad p`` at points ``(x, y)``."""
    g, dg = _g(t), _dg(t)
    sx, cx = np.sin(PI * x), np.cos(PI * x)
    sy, cy = np.sin(PI * y), np.cos(PI * y)
    s2x, c2x = np.sin(2 * PI * x), np.cos(2 * PI * x)
    s2y, c2y = np.sin(2 * PI * y), np.cos(2 * PI * y)

    U1 = sx**2 * s2y
    U2 = -s2x * sy**2
    U1x = PI * s2x * s2y
    U1y = 2 * PI * sx**2 * c2y
    U2x = -2 * PI * c2x * sy**2
    U2y = -PI * s2x * s2y
    lapU1 = 2 * PI**2 * c2x * s2y - 4 * PI**2 * sx**2 * s2y
    lapU2 = 4 * PI**2 * s2x * sy**2 - 2 * PI**2 * s2x * c2y
    px = -PI * sx * cy
    py = -PI * cx * sy

    f1 = dg * U1 + g * g * (U1 * U1x + U2 * U1y) - nu * g * lapU1 + g * px
    f2 = dg * U2 + g * g * (U1 * U2x + U2 * U2y) - nu * g * lapU2 + g * py
    return f1, f2


def forcing(t, nu, grid: StaggeredGrid) -> FaceVectorField:
    return FaceVectorField.from_functions(grid, lambda x, y: forcing_components(t, nu, x, y)[0],
                                          lambda x, y: forcing_components(t, nu, x, y)[1])


def manufactured_forcing(nu, grid):
    """Forcing supplier ``t -> f(t)`` for :class:`StepperConfig`."""
    return lambda t: forcing(t, nu, grid)


def discrete_residual(t, nu, grid: StaggeredGrid, dt_fd: float = 1e-5) -> FaceVectorField:
    """Discrete momentum residual of the sampled exact solution.

    Uses the grid operators for advection, diffusion and pressure gradient and
    a centred difference in time; it is O(h^2) when the forcing is right.
    """
    u = exact_velocity(t, grid)
    p = exact_pressure(t, grid)
    ut = (exact_velocity(t + dt_fd, grid) - exact_velocity(t - dt_fd, grid)) * (0.5 / dt_fd)
    res = (ut + ops.advect(u, u, grid) + ops.vector_diffusion(u, nu, grid)
           + ops.gradient_p(p, grid) - forcing(t, nu, grid))
    return res.with_wall_normals_zeroed()


# errors -------------------------------------------------------------------------

@dataclass
class ErrorRecord:
    t: float
    eps_tilde: float   # ||u(t_n) - w~^n||
    eps: float         # ||u(t_n) - w^n||
    e: float           # ||u(t_n) - u^n||
    q: float           # ||p^n - p(t_n)||, both mean-free
    grad_eps_tilde: float
    grad_eps: float


def measure_errors(state: FlowState, w_tilde: FaceVectorField | None, grid: StaggeredGrid) -> ErrorRecord:
    ue, pe = exact_fields(state.t, grid)
    wt = state.w if w_tilde is None else w_tilde
    pn = state.p - state.p.mean()
    return ErrorRecord(
        t=state.t,
        eps_tilde=ops.l2_norm(ue - wt, grid),
        eps=ops.l2_norm(ue - state.w, grid),
        e=ops.l2_norm(ue - state.u, grid),
        q=ops.l2_norm(pn - pe, grid),
        grad_eps_tilde=ops.h1_seminorm(ue - wt, grid),
        grad_eps=ops.h1_seminorm(ue - state.w, grid),
    )


# convergence study ----------------------------------------------------------------

def observed_rates(errors, ratios=None):
    """Rates ``log(E_k / E_{k+1}) / log(dt_k / dt_{k+1})`` (base 2 for halving)."""
    errors = list(errors)
    if ratios is None:
        ratios = [2.0] * (len(errors) - 1)
    return [math.log(errors[k] / errors[k + 1]) / math.log(ratios[k])
            for k in range(len(errors) - 1)]


@dataclass
class ConvergenceRow:
    dt: float
    delta_max: float
    h: float
    E_v: float
    E_p: float
    rate_v: float | None = None
    rate_p: float | None = None
    floored: bool = False
    max_eps_tilde: float = 0.0
    steps: int = 0


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["dt", "delta_max", "h", "E_v", "E_p", "rate_v", "rate_p", "floored"])
        for r in self.rows:
            wr.writerow([repr(r.dt), repr(r.delta_max), repr(r.h), repr(r.E_v), repr(r.E_p),
                         "" if r.rate_v is None else repr(r.rate_v),
                         "" if r.rate_p is None else repr(r.rate_p),
                         int(r.floored)])
        return buf.getvalue()

    def fitted_rates(self):
        """Rates between consecutive rows that are both above the spatial floor."""
        rv, rp = [], []
        for a, b in zip(self.rows[:-1], self.rows[1:]):
            if a.floored or b.floored:
                continue
            ratio = a.dt / b.dt
            rv.append(math.log(a.E_v / b.E_v) / math.log(ratio))
            rp.append(math.log(a.E_p / b.E_p) / math.log(ratio))
        return rv, rp


def delta_min_h_dt(grid: StaggeredGrid, dt: float) -> float:
    """Default radius rule ``delta = min(h, dt^(1/4))``, which keeps delta^4 <= dt."""
    return min(grid.h, dt ** 0.25)


def manufactured_run(grid: StaggeredGrid, dt: float, t_final: float, nu: float,
                     spec: FilterSpec, mode="after", reproject=True,
                     momentum_solver=SolverConfig(), poisson_solver=SolverConfig()):
    """Run the stepper on the manufactured solution and accumulate the errors."""
    n_steps = int(round(t_final / dt))
    if not math.isclose(n_steps * dt, t_final, rel_tol=1e-12):
        raise ValueError(f"t_final={t_final} is not a multiple of dt={dt}")
    cfg = StepperConfig(grid, dt, nu, spec, mode=mode, reproject=reproject,
                        forcing=manufactured_forcing(nu, grid),
                        momentum_solver=momentum_solver, poisson_solver=poisson_solver)
    state = FlowState.from_velocity(exact_velocity(0.0, grid), grid)
    records = []
    for _ in range(n_steps):
        state, _ = advance(state, cfg)
        records.append(measure_errors(state, state.w_tilde, grid))
    return state, records


def convergence_study(dt_list, nx=128, nu=0.05, t_final=1.0, chi0=1.0,
                      kind: IndicatorKind = IndicatorKind("constant"), delta_rule=None,
                      mode="after", reproject=True, stall_rate=0.25, progress=None,
                      solver=SolverConfig()):
    """Temporal refinement study on a fixed grid.

    ``delta_rule(grid, dt)`` gives the (uniform) filtering radius; the
    default is ``min(h, dt^(1/4))``.  A row is flagged ``floored`` once the
    velocity error stops decreasing, i.e. its observed rate against the
    previous row falls below ``stall_rate``; the flag sticks for all finer
    rows.  Floored rows are excluded from rate fits.
    """
    dt_list = [float(d) for d in dt_list]
    if any(b >= a for a, b in zip(dt_list[:-1], dt_list[1:])):
        raise ValueError("dt_list must be strictly decreasing")
    grid = make_grid(nx, nx)
    delta_rule = delta_rule or delta_min_h_dt
    table = ConvergenceTable()
    for dt in dt_list:
        delta = delta_rule(grid, dt)
        spec = FilterSpec(kind=kind, c_delta=None, delta=delta, chi0=chi0, solver=solver)
        # the manufactured velocity is O(1) at t = 0: the step-1 pressure is O(1/dt)
        _, records = manufactured_run(grid, dt, t_final, nu, spec, mode, reproject,
                                      momentum_solver=solver, poisson_solver=solver)
        E_v = math.sqrt(dt * sum(r.e**2 for r in records))
        E_p = math.sqrt(dt * sum(r.q**2 for r in records))
        row = ConvergenceRow(dt, delta, grid.h, E_v, E_p,
                             max_eps_tilde=max(r.eps_tilde for r in records),
                             steps=len(records))
        table.rows.append(row)
        if progress:
            progress(row)
    for k in range(1, len(table.rows)):
        a, b = table.rows[k - 1], table.rows[k]
        b.rate_v = math.log(a.E_v / b.E_v) / math.log(a.dt / b.dt)
        b.rate_p = math.log(a.E_p / b.E_p) / math.log(a.dt / b.dt)
    floored = False
    for r in table.rows[1:]:
        floored = floored or r.rate_v < stall_rate
        r.floored = floored
    return table


# property suite ---------------------------------------------------------------

DEFAULT_KINDS = ("constant", "normalized_gradient", "q_criterion", "vreman",
                 "geometric_mean(normalized_gradient,q_criterion,vreman)")
TIGHT = SolverConfig(rel_tol=1e-13, abs_tol=1e-300)


@dataclass
class Check:
    name: str
    size: int
    kind: str
    margin: float      # worst normalised slack; >= 0 means the inequality held
    passed: bool
    seed: int
    skipped: bool = False
    note: str = ""


@dataclass
class PropertyReport:
    seed: int
    sizes: list
    checks: list = field(default_factory=list)
    notices: list = field(default_factory=list)
    lower_bounds: dict = field(default_factory=dict)   # kind -> {size: min ratio}

    @property
    def passed(self) -> bool:
        return all(c.passed or c.skipped for c in self.checks)

    def to_json(self) -> str:
        payload = {"seed": self.seed, "sizes": list(self.sizes), "passed": self.passed,
                   "notices": self.notices,
                   "lower_bounds": {k: {str(s): v for s, v in d.items()}
                                    for k, d in self.lower_bounds.items()},
                   "checks": [asdict(c) for c in self.checks]}
        return json.dumps(payload, indent=2, sort_keys=False)


def field_rng(seed: int, size: int, tag: int) -> np.random.Generator:
    return np.random.default_rng([seed, size, tag])


def filter_property_samples(grid, spec: FilterSpec, rng, n_fields, with_dual=False,
                            with_partner=True):
    """Per-field quantities for the filter inequalities, all with frozen coefficients."""
    dmax = spec.delta_max(grid)
    out = []
    for _ in range(n_fields):
        w = random_field(grid, rng)
        y = random_field(grid, rng) if with_partner else None
        coef = spec.coefficient(w, grid)
        fw = filter_with_coefficient(w, coef, grid, spec.solver).filtered
        gw = w - fw
        rec = {
            "w2": ops.inner(w, w, grid),
            "fw2": ops.inner(fw, fw, grid),
            "gww": ops.inner(gw, w, grid),
            "gw2": ops.inner(gw, gw, grid),
            "visc": ops.energy_form(w, coef, grid),
            "grad": ops.h1_seminorm(w, grid),
            "dmax": dmax,
            "amax": float(coef.max() / dmax**2) if dmax > 0 else 0.0,
        }
        if y is not None:
            gy = y - filter_with_coefficient(y, coef, grid, spec.solver).filtered
            rec["adj_defect"] = abs(ops.inner(gw, y, grid) - ops.inner(w, gy, grid))
            rec["adj_scale"] = math.sqrt(rec["w2"] * ops.inner(y, y, grid))
        if with_dual:
            rec["dual"] = ops.hneg1_norm(gw, grid)
        out.append(rec)
    return out


def property_suite(seed: int = 0, sizes=(8, 16, 32, 64), kinds=DEFAULT_KINDS, n_fields: int = 100,
                   c_delta: float = 1.0, rel_slack: float = 1e-10, dual_slack: float = 0.1,
                   with_dual: bool = True, with_dense: bool = True,
                   solver: SolverConfig = TIGHT) -> PropertyReport:
    """Run the filter-operator inequalities over seeded random fields.

    Every check records its worst normalised margin.  For unbounded
    indicators (``raw_smagorinsky``) only the upper dissipation bound is
    asserted; the bounds that need ``a <= 1`` are skipped with a notice.
    """
    sizes = list(sizes)
    if not set(sizes) <= {8, 16, 32, 64}:
        raise ValueError("sizes must be drawn from {8, 16, 32, 64}")
    report = PropertyReport(seed, sizes)
    for ki, kname in enumerate(kinds):
        kind = IndicatorKind.parse(kname) if isinstance(kname, str) else kname
        kname = str(kind)
        if not kind.bounded:
            report.notices.append(
                f"{kname}: indicator may exceed 1; two-sided equivalence and filter-error "
                f"bounds skipped, upper dissipation bound kept")
        spec = FilterSpec(kind=kind, c_delta=c_delta, chi0=1.0, solver=solver)
        for n in sizes:
            grid = make_grid(n, n)
            rng = field_rng(seed, n, ki)
            recs = filter_property_samples(grid, spec, rng, n_fields, with_dual=with_dual)

            def add(name, margins, skip=False, note=""):
                m = float(min(margins))
                report.checks.append(Check(name, n, kname, m, bool(m >= 0.0), seed, skip, note))

            add("self_adjoint", [1e-9 - r["adj_defect"] / r["adj_scale"] for r in recs])
            add("gww_nonnegative", [(r["gww"] + rel_slack * r["w2"]) / r["w2"] for r in recs])
            add("energy_condition", [(r["w2"] * (1 + rel_slack) - r["gww"]) / r["w2"] for r in recs])
            add("g_condition", [(r["gww"] + rel_slack * r["w2"] - r["gw2"]) / r["w2"] for r in recs])
            add("dissipation_upper", [(r["visc"] * (1 + rel_slack) - r["gww"]) / r["w2"] for r in recs])
            add("filter_contraction", [(r["w2"] * (1 + rel_slack) - r["fw2"]) / r["w2"] for r in recs])
            bounded = kind.bounded
            note = "" if bounded else "requires a <= 1"
            ratios = [r["gww"] / r["visc"] for r in recs if r["visc"] > 0]
            if bounded and ratios:
                report.lower_bounds.setdefault(kname, {})[n] = float(min(ratios))
            add("dissipation_lower_positive", [min(ratios) if ratios else 0.0],
                skip=not bounded, note=note)
            add("filter_error_l2", [(r["dmax"] * r["grad"] * (1 + rel_slack)
                                     - math.sqrt(r["gw2"])) / math.sqrt(r["w2"]) for r in recs],
                skip=not bounded, note=note)
            if with_dual:
                add("filter_error_dual", [((1 + dual_slack) * r["dmax"]**2 * r["grad"] - r["dual"])
                                          / math.sqrt(r["w2"]) for r in recs],
                    skip=not bounded, note=note)
            if with_dense and n == 8:
                margins = []
                for _ in range(5):
                    w = random_field(grid, rng)
                    coef = spec.coefficient(w, grid)
                    it = filter_with_coefficient(w, coef, grid, spec.solver).filtered
                    de = dense_filter(w, coef, grid)
                    margins.append(1e-8 - ops.l2_norm(it - de, grid) / ops.l2_norm(de, grid))
                add("dense_oracle", margins)
    return report


def relax_norm_check(grid, spec: FilterSpec, chi: float, rng, n_fields=20, reproject=True):
    """Worst ``(||w|| - ||u||)/||w||`` over random divergence-free ``w``."""
    from .stepper import filter_relax_step

    cfg = StepperConfig(grid, dt=chi / spec.chi0 if spec.chi0 else 1.0, nu=1.0, filter=spec,
                        reproject=reproject, poisson_solver=TIGHT)
    worst = math.inf
    for _ in range(n_fields):
        w = random_divfree_field(grid, rng)
        u, _ = filter_relax_step(w, cfg)
        nw = ops.l2_norm(w, grid)
        worst = min(worst, (nw - ops.l2_norm(u, grid)) / nw)
    return worst


# reference scheme ------------------------------------------------------------------

def chorin_step(state: FlowState, cfg: StepperConfig) -> FlowState:
    """Plain projection step (momentum + projection, no filter) for reduction checks."""
    w_tilde, _ = momentum_step(state, cfg)
    w, p, _ = projection_step(w_tilde, cfg)
    return FlowState(state.t + cfg.dt, w, w, p, w_tilde)
