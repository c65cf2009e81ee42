"""
Moment explosion through a variational lower bound
===================================================

log E[S_T^m] is bounded below by the expected payoff of any admissible
drift control.  Capping the control at ever larger levels makes the
bound grow without limit when rho^2 < (m - 1)/m and vol-of-vol is
exponential.
"""
from fracvol import (ControlConfig, Exponential, Grid, MCConfig, ModelParams, PowerKernel, Zeta,
                     boue_dupuis_lower_bound, choose_gamma)

rho, m = -0.3, 2.0
gamma = choose_gamma(rho, m)
print(f"gamma = {gamma:.4f}")

model = ModelParams(rho, PowerKernel(0.9), Exponential(2.0, Zeta.constant(1.0)))
mc = MCConfig(5_000, Grid(1.0, 100), master_seed=5)
for cap in (10.0, 100.0, 1000.0):
    r = boue_dupuis_lower_bound(model, ControlConfig(rho, m, gamma, cap, barrier_A=3.0), mc)
    print(f"cap {cap:>7}: lower bound on log E[S_T^m] = {r.mean:.3e}")

# outside the feasible region no admissible constant control exists
try:
    choose_gamma(-0.71, 2.0)
except Exception as exc:
    print("rho = -0.71, m = 2:", exc)
