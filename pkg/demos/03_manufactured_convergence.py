"""First-order temporal convergence on a manufactured solution.

The grid is fixed and fine enough that the time error dominates; halving dt
should halve the aggregate velocity error E_v = sqrt(dt sum ||e^n||^2).
A smaller version of the full study (128^2, dt down to 1/320) that runs in a few
seconds.

Run:  python3 demos/03_manufactured_convergence.py
"""
from filterproj.verify import convergence_study


def show(row):
    print(f"dt={row.dt:.5f}  E_v={row.E_v:.3e}  E_p={row.E_p:.3e}  steps={row.steps}")


table = convergence_study([1 / 10, 1 / 20, 1 / 40, 1 / 80], nx=64, nu=0.05, t_final=0.5,
                          delta_rule=lambda grid, dt: grid.h, progress=show)
rv, rp = table.fitted_rates()
print("velocity rates:", ", ".join(f"{r:.2f}" for r in rv))
print("pressure rates:", ", ".join(f"{r:.2f}" for r in rp))
print(table.to_csv())
