"""
Blow-up of a nonlinear Volterra equation
=========================================

Solve y(t) = z(t) + int_0^t K(t - s) b(y(s)) ds for the unit kernel, the
quadratic nonlinearity and the forcing z(t) = t - 1.  Here the exact
solution is tan(t - pi/4), so blow-up happens at 3 pi / 4.
"""
import math

from fracvol import (AffineForcing, Power, VolterraProblem, blowup_refinement,
                     explosion_bound, explosion_bound_geometric)

# two_sided=True makes b(y) = y^2 also for negative y, matching the tan solution
problem = VolterraProblem(1.0, AffineForcing(1.0, 1.0), Power(1.0, 2.0, two_sided=True))

# Refine the grid and extrapolate the time at which the solution crosses the cap
reports, t_cap = blowup_refinement(problem, 3.0, [1000, 2000, 4000])
for r in reports:
    print(f"{r.grid_steps:5d} steps: t_cap = {r.t_cap:.5f}")
print(f"extrapolated: {t_cap:.5f}   exact: {3 * math.pi / 4:.5f}")

# The a-priori upper bound on the explosion time needs only the forcing and b
bound = explosion_bound(VolterraProblem(1.0, AffineForcing(1.0, 1.0), Power(1.0, 2.0)), 100.0)
print(f"explosion bound: {bound.bound:.6f} (minimiser x = {bound.minimizer_x:.4f})")

# A geometric ladder of levels gives a cruder bound that tightens as R -> 1
for R in (2.0, 1.1, 1.01):
    g = explosion_bound_geometric(problem, 1.0, R)
    print(f"ladder R = {R:<5}: {g:.4f}")

# A rougher kernel explodes later than the unit kernel, and still below its bound
rough = VolterraProblem(0.75, AffineForcing(1.0, 1.0), Power(1.0, 2.0))
rep = blowup_refinement(rough, 4.0, [2000, 4000])[0][-1]
print(f"alpha = 0.75: t_cap = {rep.t_cap:.4f} <= bound {explosion_bound(rough, 100.0).bound:.4f}")
