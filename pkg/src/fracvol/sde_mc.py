"""
Monte Carlo engines for the price process and the drifted Volterra SDEs.

Two mechanisms are simulated through the drifted equation

    Y_t = Y0_t + int_0^t K(t - s) d(s) ds,     d(s) = c * sigma(s, Y_s),

where ``Y0`` is a fresh copy of the Gaussian driver:

* martingale defect -- with ``c = rho`` the change of measure turns
  ``S0 - E[S_T]`` into ``S0 * lim_n P(tau_n <= T)``, ``tau_n`` the first
  hitting time of level ``n`` by ``Y``;
* moment explosion -- with ``c = rho m + gamma`` (capped at ``n`` and
  switched off after ``Y0`` reaches ``A``) the payoff
  ``1{theta_A > T} int (m^2 - m - gamma^2)/2 sigma^2 dt`` is a lower bound
  for ``ln E[S_T^m / S0^m]``.

A left-point Euler scheme for ``ln S`` is an exact discrete martingale, so
plain estimates of ``E[S_T]`` can never show the defect on a fixed grid;
the hitting-probability route is the only one used for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, InfeasibleError
from .gauss_path import Grid, build_joint_factor, iter_path_chunks
from .model_core import SIGMA_SAT, ModelParams
from .stats import MCResult, proportion, summarize
from .volterra import DEFAULT_EXPLOSION_CAP, BlowUpReport, product_weights


@dataclass(frozen=True)
class MCConfig:
    n_paths: int
    grid: Grid
    master_seed: int = 0
    explosion_cap: float = DEFAULT_EXPLOSION_CAP
    antithetic: bool = False
    threads: int = 1
    chunk: int = 8192

    def __post_init__(self):
        if self.n_paths < 1:
            raise DomainError("n_paths must be >= 1")
        if not self.explosion_cap > 0:
            raise DomainError("explosion cap must be > 0")
        if self.antithetic and self.n_paths % 2:
            raise DomainError("antithetic sampling needs an even number of paths")
        if self.chunk < 1 or self.threads < 1:
            raise DomainError("chunk and threads must be >= 1")

    def echo(self) -> dict:
        return {"n_paths": self.n_paths, "T": self.grid.T, "n": self.grid.n,
                "master_seed": self.master_seed, "explosion_cap": self.explosion_cap,
                "antithetic": self.antithetic}

    def with_grid(self, n: int) -> "MCConfig":
        return MCConfig(self.n_paths, Grid(self.grid.T, n), self.master_seed,
                        self.explosion_cap, self.antithetic, self.threads, self.chunk)


@dataclass(frozen=True)
class ControlConfig:
    """Truncated feedback control of the moment-explosion argument.

    ``gamma`` must satisfy ``rho m + gamma > 0`` and ``m^2 - m - gamma^2 > 0``.
    """

    rho: float
    m: float
    gamma: float
    cap_n: float
    barrier_A: float

    def __post_init__(self):
        if not self.m > 1:
            raise DomainError("m must be > 1")
        if not self.rho * self.m + self.gamma > 0:
            raise InfeasibleError("rho*m + gamma > 0 is violated")
        if not self.m * self.m - self.m - self.gamma ** 2 > 0:
            raise InfeasibleError("m^2 - m - gamma^2 > 0 is violated")
        if not self.cap_n > 0 or not self.barrier_A > 0:
            raise DomainError("cap_n and barrier_A must be > 0")

    @property
    def drift_coeff(self) -> float:
        return self.rho * self.m + self.gamma

    @property
    def payoff_coeff(self) -> float:
        return 0.5 * (self.m * self.m - self.m - self.gamma ** 2)


@dataclass
class DefectReport:
    levels: list
    hit_probs: dict            # grid steps -> list of MCResult, one per level
    defect_estimate: float
    grids: list
    s0: float = 1.0


@dataclass
class PriceSample:
    terminal: np.ndarray
    running_max: np.ndarray
    path_indices: np.ndarray


@dataclass
class DriftedPaths:
    """Vectorised outcome of ``drifted_volterra_paths``.

    ``y`` is NaN after a path's explosion node; ``first_hit[k]`` holds the
    first node index at which ``y >= levels[k]`` (``-1`` if never).
    """

    grid: Grid
    y0: np.ndarray
    y: np.ndarray
    exploded: np.ndarray
    explosion_node: np.ndarray
    theta_node: np.ndarray
    levels: list
    first_hit: np.ndarray
    explosion_cap: float

    def report(self, k: int) -> BlowUpReport:
        t = self.grid.times
        last = int(self.explosion_node[k]) if self.exploded[k] else self.grid.n
        crossings = [(lv, float(t[self.first_hit[j, k]]))
                     for j, lv in enumerate(self.levels) if self.first_hit[j, k] >= 0]
        return BlowUpReport(bool(self.exploded[k]),
                            float(t[last]) if self.exploded[k] else math.inf,
                            crossings, self.grid.n, t[: last + 1], self.y[k, : last + 1].copy())


# ---------------------------------------------------------------------------
# price process
# ---------------------------------------------------------------------------

def _check_grid(model: ModelParams, mc: MCConfig):
    if abs(model.T - mc.grid.T) > 1e-12 * model.T:
        raise DomainError("model horizon and grid horizon differ")


def _sigma_nodes(model: ModelParams, grid: Grid, y: np.ndarray) -> np.ndarray:
    return model.vol(grid.times[:-1], y[:, :-1])


def simulate_price_paths(model: ModelParams, mc: MCConfig) -> PriceSample:
    """Log-Euler ``ln S_{i+1} = ln S_i + sigma_i dW_i - sigma_i^2 dt / 2`` on exact (Y, W) paths."""
    _check_grid(model, mc)
    factor = build_joint_factor(model.kernel, model.rho, mc.grid)
    dt = mc.grid.dt
    term, rmax, idx = [], [], []
    with np.errstate(over="ignore", invalid="ignore"):
        for b in iter_path_chunks(factor, mc.master_seed, mc.n_paths, mc.chunk,
                                  mc.antithetic, mc.threads):
            sig = _sigma_nodes(model, mc.grid, b.y)
            logs = np.cumsum(sig * b.dw - 0.5 * sig * sig * dt, axis=1)
            s = model.s0 * np.exp(logs)
            term.append(s[:, -1])
            rmax.append(np.maximum(model.s0, np.max(s, axis=1)))
            idx.append(b.path_indices)
    return PriceSample(np.concatenate(term), np.concatenate(rmax), np.concatenate(idx))


def price_estimator(model: ModelParams, mc: MCConfig) -> MCResult:
    """Plain Monte Carlo estimate of ``E[S_T]``."""
    sample = simulate_price_paths(model, mc)
    return summarize(sample.terminal, config=mc.echo(), antithetic=mc.antithetic)


def conditional_price_estimator(model: ModelParams, mc: MCConfig) -> MCResult:
    """Estimate ``E[S_T]`` by integrating out the component of ``W`` independent of ``Z``.

    Per path: ``S0 exp(rho sum sigma_i dZ_i - rho^2 sum sigma_i^2 dt / 2)``.
    On the grid its expectation is exactly ``S0``; it is an unbiasedness and
    variance-reduction harness, not a defect detector.
    """
    _check_grid(model, mc)
    factor = build_joint_factor(model.kernel, model.rho, mc.grid)
    dt, r = mc.grid.dt, model.rho
    vals = []
    with np.errstate(over="ignore", invalid="ignore"):
        for b in iter_path_chunks(factor, mc.master_seed, mc.n_paths, mc.chunk,
                                  mc.antithetic, mc.threads):
            if r == 0.0:
                vals.append(np.full(len(b), model.s0))
                continue
            sig = _sigma_nodes(model, mc.grid, b.y)
            expo = np.sum(r * sig * b.dz - 0.5 * r * r * sig * sig * dt, axis=1)
            vals.append(model.s0 * np.exp(expo))
    return summarize(np.concatenate(vals), config=mc.echo(), antithetic=mc.antithetic)


def truncated_moment(model: ModelParams, m: float, caps: Sequence[float],
                     mc: MCConfig) -> list:
    """``E[min(S_T, c)^m]`` for each cap, all on the same simulated paths."""
    caps = [float(c) for c in caps]
    if any(b <= a for a, b in zip(caps, caps[1:])):
        raise DomainError("caps must be strictly increasing")
    s = simulate_price_paths(model, mc).terminal
    out = []
    for c in caps:
        res = summarize(np.minimum(s, c) ** m, config={**mc.echo(), "cap": c, "m": m},
                        antithetic=mc.antithetic)
        out.append(res)
    return out


# ---------------------------------------------------------------------------
# drifted Volterra equation
# ---------------------------------------------------------------------------

def _drifted_chunk(y0: np.ndarray, model: ModelParams, grid: Grid, drift_coeff: float,
                   cap_n: Optional[float], barrier_A: Optional[float],
                   post_barrier_coeff: Optional[float], explosion_cap: float):
    """Solve ``Y_i = Y0_i + sum_{j<i} w_ij d_j`` for a block of paths.

    Returns ``(y, exploded, explosion_node, theta_node)``; ``theta_node`` is
    ``n + 1`` when the barrier is never reached.
    """
    m, n1 = y0.shape
    n = n1 - 1
    t = grid.times
    c = product_weights(model.kernel.alpha, grid.dt, n)
    if barrier_A is not None:
        reached = y0 >= barrier_A
        theta = np.where(reached.any(axis=1), reached.argmax(axis=1), n + 1)
    else:
        theta = np.full(m, n + 1)
    post = drift_coeff if post_barrier_coeff is None else post_barrier_coeff

    y = np.empty_like(y0)
    D = np.zeros_like(y0)
    exploded = np.zeros(m, dtype=bool)
    node = np.full(m, -1)

    def drift(i, yi):
        sig = model.vol(t[i], yi)
        pre = drift_coeff * sig
        if cap_n is not None:
            pre = np.minimum(pre, cap_n)
        return np.where(i <= theta, pre, post * sig)

    with np.errstate(over="ignore", invalid="ignore"):
        y[:, 0] = y0[:, 0]
        D[:, 0] = drift(0, y[:, 0])
        for i in range(1, n1):
            y[:, i] = y0[:, i] + D[:, :i] @ c[i:0:-1]
            new = ~exploded & ~(y[:, i] <= explosion_cap)
            if new.any():
                exploded |= new
                node[new] = i
            if i < n:
                di = drift(i, y[:, i])
                di[exploded] = 0.0
                D[:, i] = di
    after = np.arange(n1)[None, :] > np.where(exploded, node, n1)[:, None]
    y[after] = np.nan
    return y, exploded, node, theta


def _first_hits(y: np.ndarray, exploded, node, levels) -> np.ndarray:
    out = np.full((len(levels), y.shape[0]), -1)
    with np.errstate(invalid="ignore"):
        for k, lv in enumerate(levels):
            hit = y >= lv
            hit[exploded, node[exploded]] = True
            any_hit = hit.any(axis=1)
            out[k, any_hit] = hit[any_hit].argmax(axis=1)
    return out


def drifted_volterra_paths(model: ModelParams, drift_coeff: float, mc: MCConfig,
                           cap_n: Optional[float] = None, barrier_A: Optional[float] = None,
                           post_barrier_coeff: Optional[float] = None,
                           levels: Sequence[float] = ()) -> DriftedPaths:
    """Simulate ``Y = Y0 + K * d`` path by path, ``d_j = drift_coeff sigma(t_j, Y_j)``.

    With ``cap_n`` the drift is ``min(drift_coeff sigma, cap_n)`` at nodes up
    to ``theta_A`` (first node where ``Y0 >= barrier_A``) and
    ``post_barrier_coeff * sigma`` afterwards.  Paths exceeding
    ``mc.explosion_cap`` are marked exploded and truncated.
    """
    _check_grid(model, mc)
    if cap_n is not None and not cap_n > 0:
        raise DomainError("cap_n must be > 0")
    factor = build_joint_factor(model.kernel, model.rho, mc.grid)
    parts = []
    for b in iter_path_chunks(factor, mc.master_seed, mc.n_paths, mc.chunk,
                              mc.antithetic, mc.threads):
        parts.append((b.y,) + _drifted_chunk(b.y, model, mc.grid, drift_coeff, cap_n,
                                             barrier_A, post_barrier_coeff, mc.explosion_cap))
    y0 = np.concatenate([p[0] for p in parts])
    y = np.concatenate([p[1] for p in parts])
    exploded = np.concatenate([p[2] for p in parts])
    node = np.concatenate([p[3] for p in parts])
    theta = np.concatenate([p[4] for p in parts])
    levels = [float(v) for v in levels]
    return DriftedPaths(mc.grid, y0, y, exploded, node, theta, levels,
                        _first_hits(y, exploded, node, levels), mc.explosion_cap)


# ---------------------------------------------------------------------------
# martingale defect
# ---------------------------------------------------------------------------

def hit_probabilities(model: ModelParams, levels: Sequence[float], mc: MCConfig):
    """``P(tau_n <= T)`` under the drifted measure for each level, plus explosion count."""
    _check_grid(model, mc)
    factor = build_joint_factor(model.kernel, model.rho, mc.grid)
    counts = np.zeros(len(levels), dtype=np.int64)
    n_exploded = 0
    for b in iter_path_chunks(factor, mc.master_seed, mc.n_paths, mc.chunk,
                              mc.antithetic, mc.threads):
        y, exploded, node, _ = _drifted_chunk(b.y, model, mc.grid, model.rho, None, None, None,
                                              mc.explosion_cap)
        hits = _first_hits(y, exploded, node, levels)
        counts += np.count_nonzero(hits >= 0, axis=1)
        n_exploded += int(np.count_nonzero(exploded))
    out = []
    for lv, k in zip(levels, counts):
        r = proportion(int(k), mc.n_paths, {**mc.echo(), "level": lv})
        r.n_exploded = n_exploded
        out.append(r)
    return out


def martingale_defect(model: ModelParams, levels: Sequence[float], mc: MCConfig,
                      grids: Optional[Sequence[int]] = None) -> DefectReport:
    """Defect ``S0 - E[S_T]`` through hitting probabilities of the drifted equation.

    Runs on ``mc.grid`` and, unless ``grids`` is given, on a grid twice as
    fine.  The reported defect is ``S0`` times the hitting probability at the
    largest level on the finest grid; no extrapolation in the level is made.
    """
    levels = [float(v) for v in levels]
    if not levels:
        raise DomainError("levels must be nonempty")
    if any(v <= 0 for v in levels) or any(b <= a for a, b in zip(levels, levels[1:])):
        raise DomainError("levels must be positive and strictly increasing")
    grids = list(grids) if grids is not None else [mc.grid.n, 2 * mc.grid.n]
    probs = {}
    for n in grids:
        probs[n] = hit_probabilities(model, levels, mc.with_grid(n))
    finest = max(grids)
    return DefectReport(levels, probs, model.s0 * probs[finest][-1].mean, grids, model.s0)


# ---------------------------------------------------------------------------
# moment explosion
# ---------------------------------------------------------------------------

def choose_gamma(rho: float, m: float) -> float:
    """Midpoint of the feasible interval ``(-rho m, sqrt(m^2 - m))``.

    Feasible iff ``rho^2 < (m - 1) / m``.
    """
    if rho > 0:
        raise DomainError("the moment-explosion control needs rho <= 0")
    if not m > 1:
        raise DomainError("m must be > 1")
    if not rho * rho < (m - 1.0) / m:
        raise InfeasibleError(
            f"rho^2 < (m-1)/m is violated: rho^2 = {rho * rho:.6g} >= {(m - 1.0) / m:.6g}")
    gamma = 0.5 * (-rho * m + math.sqrt(m * m - m))
    assert rho * m + gamma > 0 and m * m - m - gamma * gamma > 0
    return gamma


def _bd_payoff_chunk(y0, model: ModelParams, ctrl: ControlConfig, mc: MCConfig):
    y, exploded, node, theta = _drifted_chunk(
        y0, model, mc.grid, ctrl.drift_coeff, ctrl.cap_n, ctrl.barrier_A,
        ctrl.rho * ctrl.m, mc.explosion_cap)
    n = mc.grid.n
    with np.errstate(over="ignore", invalid="ignore"):
        sig = model.vol(mc.grid.times[:-1], y[:, :-1])
        rate = np.minimum(sig * sig, SIGMA_SAT)
    # after explosion the rate stays at its saturated value
    rate = np.where(np.isnan(rate), SIGMA_SAT, rate)
    payoff = ctrl.payoff_coeff * np.sum(rate, axis=1) * mc.grid.dt
    payoff = np.where(theta > n, payoff, 0.0)
    return payoff, exploded


def boue_dupuis_payoffs(model: ModelParams, ctrl: ControlConfig, mc: MCConfig):
    """Per-path payoffs ``1{theta_A > T} sum (m^2-m-gamma^2)/2 sigma^2(t_i, Y_i) dt``."""
    _check_grid(model, mc)
    if abs(ctrl.rho - model.rho) > 0:
        raise DomainError("control was built for a different rho")
    factor = build_joint_factor(model.kernel, model.rho, mc.grid)
    pays, n_exp = [], 0
    for b in iter_path_chunks(factor, mc.master_seed, mc.n_paths, mc.chunk,
                              mc.antithetic, mc.threads):
        p, e = _bd_payoff_chunk(b.y, model, ctrl, mc)
        pays.append(p)
        n_exp += int(np.count_nonzero(e))
    return np.concatenate(pays), n_exp


def boue_dupuis_lower_bound(model: ModelParams, ctrl: ControlConfig, mc: MCConfig) -> MCResult:
    """Monte Carlo value of the truncated-control lower bound on ``ln E[S_T^m / S0^m]``."""
    payoffs, n_exp = boue_dupuis_payoffs(model, ctrl, mc)
    res = summarize(payoffs, n_exp, {**mc.echo(), "m": ctrl.m, "gamma": ctrl.gamma,
                                     "cap_n": ctrl.cap_n, "barrier_A": ctrl.barrier_A},
                    antithetic=mc.antithetic)
    return res
