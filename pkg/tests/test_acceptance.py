"""Acceptance criteria.  Each test records one PASS/FAIL line, printed in the
terminal summary under "acceptance criteria"."""
import math
import time

import numpy as np

from conftest import ACCEPTANCE_LINES
from filterproj import operators as ops
from filterproj.cli import main
from filterproj.filters import FilterSpec, IndicatorKind, dense_filter, filter_details
from filterproj.grid import make_grid, random_divfree_field, random_field
from filterproj.linsolve import dense_solve
from filterproj.stepper import (FlowState, StepperConfig, _face_mask, advance, momentum_operator,
                                momentum_step, projection_step, run)
from filterproj.verify import (DEFAULT_KINDS, TIGHT, chorin_step, convergence_study, field_rng,
                               filter_property_samples, property_suite)


def record(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def unit_random_divfree(grid, rng):
    w = random_divfree_field(grid, rng)
    return w * (1.0 / max(np.abs(w.u).max(), np.abs(w.v).max()))


def test_criterion_1_filter_operator_suite():
    t0 = time.perf_counter()
    rep = property_suite(seed=0, sizes=(8, 16, 32, 64), kinds=DEFAULT_KINDS, n_fields=100,
                         c_delta=1.0, with_dual=False, with_dense=False)
    elapsed = time.perf_counter() - t0
    wanted = {"self_adjoint", "gww_nonnegative", "energy_condition", "g_condition",
              "dissipation_upper"}
    checks = [c for c in rep.checks if c.name in wanted]
    failed = [f"{c.name}/{c.kind}/n={c.size}" for c in checks if not c.passed]
    worst = min(c.margin for c in checks)
    ok = not failed and elapsed < 60.0
    record(1, ok, f"{len(checks)} checks, worst margin {worst:.2e}, {elapsed:.1f}s"
           + (f", failed: {failed}" if failed else ""))
    assert ok


def test_criterion_2_dissipation_lower_bound():
    sizes = (16, 32, 64)
    worst_spread, worst_min, bad = 0.0, math.inf, []
    for c_delta in (0.5, 1.0):
        for ki, kname in enumerate(DEFAULT_KINDS):
            spec = FilterSpec(IndicatorKind.parse(kname), c_delta=c_delta, solver=TIGHT)
            mins = []
            for n in sizes:
                recs = filter_property_samples(make_grid(n, n), spec, field_rng(2, n, ki), 200,
                                               with_partner=False)
                mins.append(min(r["gww"] / r["visc"] for r in recs))
            mean = sum(mins) / len(mins)
            spread = max(abs(m - mean) / mean for m in mins)
            worst_spread = max(worst_spread, spread)
            worst_min = min(worst_min, min(mins))
            if min(mins) < 0.05 or spread > 0.2:
                bad.append(f"{kname}@{c_delta}: {mins}")
    ok = not bad
    record(2, ok, f"min ratio {worst_min:.3f} (>= 0.05), max deviation from size-mean "
                  f"{100 * worst_spread:.1f}% (<= 20%)" + (f", failed: {bad}" if bad else ""))
    assert ok


def test_criterion_3_filter_error_estimates():
    worst_l2, worst_dual, bad = -math.inf, -math.inf, []
    for ki, kname in enumerate(DEFAULT_KINDS):
        spec = FilterSpec(IndicatorKind.parse(kname), c_delta=1.0, solver=TIGHT)
        for n in (8, 16, 32, 64):
            recs = filter_property_samples(make_grid(n, n), spec, field_rng(3, n, ki), 100,
                                           with_dual=True, with_partner=False)
            for r in recs:
                l2 = math.sqrt(r["gw2"]) / (r["dmax"] * r["grad"])
                dual = r["dual"] / (r["dmax"] ** 2 * r["grad"])
                worst_l2, worst_dual = max(worst_l2, l2), max(worst_dual, dual)
            if worst_l2 > 1 + 1e-10 or worst_dual > 1.1:
                bad.append(f"{kname}/n={n}")
    ok = not bad
    record(3, ok, f"max ||w-Fw||/(dmax|w|_1) = {worst_l2:.4f} (<= 1), "
                  f"max dual ratio = {worst_dual:.4f} (<= 1.1)" + (f", failed: {bad}" if bad else ""))
    assert ok


def test_criterion_4_per_step_invariants():
    g = make_grid(64, 64)
    w0 = unit_random_divfree(g, np.random.default_rng(4))
    cfg = StepperConfig(g, dt=0.01, nu=0.01, filter=FilterSpec(IndicatorKind("vreman"), chi0=1.0))
    t0 = time.perf_counter()
    violations = []
    rel = 1e-12   # round-off allowance on the norm chain

    def check(state, rep):
        if rep.norm_u > rep.norm_w * (1 + rel):
            violations.append(f"|u|>|w| at t={rep.t:g}")
        if rep.norm_w > rep.norm_wtilde * (1 + rel):
            violations.append(f"|w|>|w~| at t={rep.t:g}")
        if rep.div_residual > rep.div_tolerance:
            violations.append(f"div at t={rep.t:g}")

    state, reports, ledger = run(FlowState.from_velocity(w0, g), cfg, 500,
                                 on_violation="warn", callback=check)
    elapsed = time.perf_counter() - t0
    w02 = ledger.w0_norm2
    lhs_ok = all(lhs <= w02 * (1 + 1e-10) for _, lhs, _ in ledger.history)
    ok = not violations and lhs_ok and elapsed < 120.0 and len(reports) == 500
    record(4, ok, f"500 steps, max lhs/|w0|^2 = {max(h[1] for h in ledger.history) / w02:.6f}, "
                  f"max div/tol = {max(r.div_residual / r.div_tolerance for r in reports):.3f}, "
                  f"{elapsed:.1f}s" + (f", violations: {violations[:5]}" if violations else ""))
    assert ok


def test_criterion_5_temporal_convergence():
    t0 = time.perf_counter()
    table = convergence_study([1 / 40, 1 / 80, 1 / 160, 1 / 320], nx=128, nu=0.05, t_final=1.0,
                              chi0=1.0, delta_rule=lambda grid, dt: grid.h)
    elapsed = time.perf_counter() - t0
    rv, rp = table.fitted_rates()
    sup = [r.max_eps_tilde for r in table.rows]
    sup_ok = all(a / b >= math.sqrt(2) * 0.75 for a, b in zip(sup, sup[1:]))
    ok = bool(rv) and all(0.7 <= r <= 1.3 for r in rv) and all(r >= 0.4 for r in rp) \
        and elapsed <= 900 and sup_ok
    record(5, ok, "rate_v=" + ",".join(f"{r:.3f}" for r in rv)
           + " rate_p=" + ",".join(f"{r:.3f}" for r in rp)
           + f" floored={[r.floored for r in table.rows]}"
           + " sup-error ratios=" + ",".join(f"{a / b:.2f}" for a, b in zip(sup, sup[1:]))
           + f" {elapsed:.0f}s")
    assert ok


def test_criterion_6_dense_oracle_equivalence():
    g = make_grid(8, 8)
    worst = {"filter": 0.0, "momentum": 0.0, "projection": 0.0}
    mask = _face_mask(g)
    for seed in range(20):
        rng = np.random.default_rng([6, seed])
        w = random_field(g, rng)
        spec = FilterSpec(IndicatorKind("vreman"), solver=TIGHT)
        res = filter_details(w, w, spec, g)
        ref = dense_filter(w, res.coefficient, g)
        worst["filter"] = max(worst["filter"],
                              ops.l2_norm(res.filtered - ref, g) / ops.l2_norm(ref, g))

        state = FlowState(0.0, random_field(g, rng), random_field(g, rng), np.zeros(g.p_shape))
        f = random_field(g, rng)
        cfg = StepperConfig(g, dt=0.05, nu=0.02, forcing=lambda t: f, momentum_solver=TIGHT,
                            poisson_solver=TIGHT)
        w_t, _ = momentum_step(state, cfg)
        rhs = (state.u * (1 / cfg.dt) + f).pack()
        ref = dense_solve(momentum_operator(state.w, cfg), rhs, mask=mask)
        worst["momentum"] = max(worst["momentum"],
                                np.linalg.norm(w_t.pack() - ref) / np.linalg.norm(ref))

        w_in = random_field(g, rng)
        w_p, p, _ = projection_step(w_in, cfg)
        b = -ops.divergence(w_in, g) / cfg.dt
        p_ref = dense_solve(lambda q: ops.neumann_laplacian(q, g), b - b.mean(), singular=True)
        w_ref = w_in - ops.gradient_p(p_ref, g) * cfg.dt
        worst["projection"] = max(worst["projection"],
                                  np.linalg.norm(p - p_ref) / np.linalg.norm(p_ref),
                                  ops.l2_norm(w_p - w_ref, g) / ops.l2_norm(w_ref, g))
    ok = all(v <= 1e-8 for v in worst.values())
    record(6, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " (<= 1e-8, 20 seeds)")
    assert ok


def test_criterion_7_chorin_reduction():
    g = make_grid(32, 32)
    cfg = StepperConfig(g, dt=0.01, nu=0.01, filter=FilterSpec(IndicatorKind("vreman"), chi0=0.0))
    a = b = FlowState.from_velocity(unit_random_divfree(g, np.random.default_rng(7)), g)
    identical = True
    for _ in range(100):
        a, _ = advance(a, cfg)
        b = chorin_step(b, cfg)
        identical &= (np.array_equal(a.u.u, b.u.u) and np.array_equal(a.u.v, b.u.v)
                      and np.array_equal(a.w.u, b.w.u) and np.array_equal(a.w.v, b.w.v)
                      and np.array_equal(a.p, b.p))
    record(7, identical, "100 steps with chi0 = 0 bitwise equal to the unfiltered projection step")
    assert identical


def test_criterion_8_cli_determinism(tmp_path):
    cfgs = {
        "run": "[grid]\nnx = 16\n[time]\ndt = 0.02\nn_steps = 10\nnu = 0.01\n"
               "[filter]\nindicator = geometric_mean(q_criterion,vreman)\nchi0 = 1\n"
               "[output]\nseed = 5\n",
        "convergence": "[c]\nnx = 16\nnu = 0.05\nt_final = 0.2\ndt_list = 0.1, 0.05\n",
        "filter-props": "[p]\nsizes = 8, 16\nn_fields = 10\nseed = 5\n",
    }
    same = {}
    for cmd, text in cfgs.items():
        path = tmp_path / f"{cmd}.ini"
        path.write_text(text)
        blobs = []
        for k in range(2):
            out = tmp_path / f"{cmd}-{k}"
            main([cmd, "--config", str(path), "--out", str(out), "--quiet"])
            blobs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        same[cmd] = bool(blobs[0]) and blobs[0] == blobs[1]
    ok = all(same.values())
    record(8, ok, ", ".join(f"{k}: {'identical' if v else 'DIFFERENT'}" for k, v in same.items()))
    assert ok
