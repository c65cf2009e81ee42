"""
Monte Carlo for a rough Bergomi-type price
==========================================

The price is a stochastic exponential driven by sigma(Y).  On a grid
its expectation is 1; conditioning on the volatility driver removes
the orthogonal noise and cuts the variance.
"""
from fracvol import (Exponential, Grid, MCConfig, ModelParams, PowerKernel, Zeta,
                     conditional_price_estimator, price_estimator, simulate_price_paths)

model = ModelParams(rho=-0.7, kernel=PowerKernel(0.8),
                    vol=Exponential(1.5, Zeta.constant(0.2)))
mc = MCConfig(20_000, Grid(1.0, 100), master_seed=7)

plain = price_estimator(model, mc)
cond = conditional_price_estimator(model, mc)
print(f"plain       E[S_T] = {plain.mean:.4f} +- {plain.std_error:.4f}")
print(f"conditional E[S_T] = {cond.mean:.4f} +- {cond.std_error:.4f}")

paths = simulate_price_paths(model, MCConfig(5, Grid(1.0, 100), master_seed=7))
for k, (s, m) in enumerate(zip(paths.terminal, paths.running_max)):
    print(f"path {k}: S_T = {s:.4f}, running max = {m:.4f}")
