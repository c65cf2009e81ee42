"""
Does the price lose mass?  Hitting probabilities of the drifted equation
=========================================================================

Under the measure with density S_T the volatility driver gains a drift
rho sigma(Y).  The price is a true martingale exactly when the drifted
equation does not reach infinity, so the loss S0 - E[S_T] equals the
probability of hitting ever higher levels before T.
"""
from fracvol import Exponential, Grid, MCConfig, ModelParams, PowerKernel, Zeta, martingale_defect

levels = [3.0, 5.0, 8.0, 12.0]
mc = MCConfig(20_000, Grid(1.0, 100), master_seed=11)

for rho in (-0.6, 0.6):
    model = ModelParams(rho, PowerKernel(0.9), Exponential(2.0, Zeta.constant(1.0)))
    rep = martingale_defect(model, levels, mc)
    print(f"rho = {rho:+.1f}")
    for n in rep.grids:
        row = "  ".join(f"{r.mean:.4f}" for r in rep.hit_probs[n])
        print(f"  {n:4d} steps, levels {levels}: {row}")
    print(f"  defect estimate: {rep.defect_estimate:.4f}")
