"""
Deterministic Volterra equations with power kernel and their blow-up.

Solves ``y(t) = z(t) + int_0^t K(t - s) b(s, y(s)) ds`` with
``K(r) = alpha r**(alpha - 1)`` by explicit left-point product integration:
the kernel is integrated exactly over each cell while ``b`` is frozen at the
left node, so

    y_i = z_i + sum_{j<i} w_{ij} b(t_j, y_j),
    w_{ij} = (t_i - t_j)**alpha - (t_i - t_{j+1})**alpha.

On a uniform grid ``w_{ij} = dt**alpha ((i-j)**alpha - (i-j-1)**alpha)`` is
Toeplitz, and ``sum_j w_{ij} = t_i**alpha`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import optimize

from .errors import DataError, DomainError
from .model_core import PowerKernel, VolSpec, osgood_check

DEFAULT_EXPLOSION_CAP = 1e12
# ladder levels beyond this would saturate b
_LOG_WMAX = math.log(1e100)


# ---------------------------------------------------------------------------
# problem description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineForcing:
    """``z(t) = lam * t - offset``."""

    lam: float
    offset: float = 1.0

    def __call__(self, t):
        return self.lam * np.asarray(t, dtype=float) - self.offset

    def level_time(self, x: float) -> float:
        """``h(x) = sup{t >= 0 : z(t) <= x}`` (0 when the set is empty)."""
        if self.lam > 0:
            return max(0.0, (x + self.offset) / self.lam)
        return math.inf if x >= -self.offset else 0.0


@dataclass(frozen=True)
class SampledForcing:
    """Forcing sampled on increasing ``times``; linearly interpolated."""

    times: tuple
    values: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise DataError("sampled forcing needs matching 1-d times and values (>= 2 points)")
        if np.any(np.diff(t) <= 0):
            raise DataError("forcing times must be strictly increasing")
        object.__setattr__(self, "times", tuple(t.tolist()))
        object.__setattr__(self, "values", tuple(v.tolist()))

    def __call__(self, t):
        return np.interp(t, self.times, self.values)


Forcing = Union[AffineForcing, SampledForcing]


@dataclass(frozen=True)
class VolterraProblem:
    """``y = z + K_alpha * b(., y)`` with ``b = min(multiplier * sigma, cap_level)``."""

    alpha: float
    forcing: Forcing
    nonlinearity: VolSpec
    multiplier: float = 1.0
    cap_level: Optional[float] = None

    def __post_init__(self):
        PowerKernel(self.alpha)  # validates alpha > 1/2
        if self.cap_level is not None and not self.cap_level > 0:
            raise DomainError("cap level must be > 0")
        if not self.multiplier >= 0:
            raise DomainError("multiplier must be >= 0")

    def b(self, t, y):
        out = self.multiplier * self.nonlinearity(t, y)
        if self.cap_level is not None:
            out = np.minimum(out, self.cap_level)
        return out

    def b_time_infimum(self, w, T: float):
        out = self.multiplier * self.nonlinearity.time_infimum(w, T)
        if self.cap_level is not None:
            out = np.minimum(out, self.cap_level)
        return out


@dataclass
class BlowUpReport:
    exploded: bool
    t_cap: float
    level_crossings: list
    grid_steps: int
    times: np.ndarray = field(repr=False)
    solution_path: np.ndarray = field(repr=False)


@dataclass
class ExplosionBound:
    bound: float
    minimizer_x: float
    h_value: float
    integral_value: float
    osgood_finite: bool


# ---------------------------------------------------------------------------
# scheme
# ---------------------------------------------------------------------------

def product_weights(alpha: float, dt: float, steps: int) -> np.ndarray:
    """Toeplitz weights ``c[k] = dt**alpha (k**alpha - (k-1)**alpha)``, ``c[0] = 0``."""
    k = np.arange(steps + 1, dtype=float)
    c = np.zeros(steps + 1)
    c[1:] = dt ** alpha * (k[1:] ** alpha - (k[1:] - 1.0) ** alpha)
    return c


def kernel_convolve(alpha: float, dt: float, values) -> np.ndarray:
    """``out_i = sum_{j<i} w_{ij} values_j`` for node values ``0..n``.

    ``values`` may be 1-d (one path) or 2-d ``(paths, nodes)``.
    """
    v = np.asarray(values, dtype=float)
    n = v.shape[-1] - 1
    c = product_weights(alpha, dt, n)
    if v.ndim == 1:
        return np.convolve(v, c)[: n + 1]
    # lower-triangular Toeplitz product, row i uses c[i - j]
    idx = np.arange(n + 1)
    diff = idx[:, None] - idx[None, :]
    M = np.where(diff > 0, c[np.clip(diff, 0, n)], 0.0)
    return v @ M.T


def _grid(horizon: float, steps: int) -> np.ndarray:
    return np.linspace(0.0, horizon, steps + 1)


def solve_volterra(problem: VolterraProblem, horizon: float, steps: int,
                   cap: float = DEFAULT_EXPLOSION_CAP,
                   levels: Optional[Sequence[float]] = None) -> BlowUpReport:
    """Explicit product-integration solve on ``[0, horizon]`` with ``steps`` cells.

    The path is truncated at the first node where ``y`` exceeds ``cap``;
    ``t_cap`` is that node's time (``inf`` when no explosion occurs).
    """
    if steps < 2:
        raise DomainError("steps must be >= 2")
    if not horizon > 0:
        raise DomainError("horizon must be > 0")
    t = _grid(horizon, steps)
    z = np.asarray(problem.forcing(t), dtype=float)
    if not np.all(np.isfinite(z)):
        raise DataError("forcing has non-finite values on the solve grid")
    if isinstance(problem.forcing, SampledForcing) and problem.forcing.times[-1] < horizon * (1 - 1e-12):
        raise DataError("sampled forcing does not cover the solve horizon")
    if not cap > np.max(np.abs(z)):
        raise DomainError("explosion cap must exceed sup |z|")
    if levels is None:
        levels = [10.0 ** k for k in range(0, int(math.floor(math.log10(cap))) + 1)]
    levels = sorted(float(x) for x in levels)

    dt = horizon / steps
    c = product_weights(problem.alpha, dt, steps)
    y = np.empty(steps + 1)
    D = np.empty(steps + 1)
    y[0] = z[0]
    D[0] = problem.b(t[0], y[0])
    exploded = False
    last = steps
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, steps + 1):
            y[i] = z[i] + np.dot(D[:i], c[i:0:-1])
            if not y[i] <= cap:
                exploded = True
                last = i
                break
            D[i] = problem.b(t[i], y[i])

    path = y[: last + 1].copy()
    crossings = []
    above = np.flatnonzero
    for lv in levels:
        hit = above(~(path < lv))
        if hit.size:
            crossings.append((lv, float(t[hit[0]])))
    return BlowUpReport(
        exploded=exploded,
        t_cap=float(t[last]) if exploded else math.inf,
        level_crossings=crossings,
        grid_steps=steps,
        times=t[: last + 1],
        solution_path=path,
    )


def richardson_tcap(reports: Sequence[BlowUpReport]) -> float:
    """First-order Richardson extrapolation ``2 t(2n) - t(n)`` of the last two grids."""
    if len(reports) < 2:
        raise DataError("need at least two grids")
    a, b = reports[-2], reports[-1]
    if not (a.exploded and b.exploded):
        return math.inf
    ratio = b.grid_steps / a.grid_steps
    return b.t_cap + (b.t_cap - a.t_cap) / (ratio - 1.0)


def blowup_refinement(problem: VolterraProblem, horizon: float, steps_list: Sequence[int],
                      cap: float = DEFAULT_EXPLOSION_CAP):
    """Solve on each grid of ``steps_list``; return ``(reports, extrapolated_t_cap)``."""
    reports = [solve_volterra(problem, horizon, s, cap) for s in steps_list]
    return reports, richardson_tcap(reports)


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------

@dataclass
class ComparisonResult:
    holds: bool
    max_violation: float


def check_comparison(candidate_path, problem: VolterraProblem, direction: str,
                     times, tol: float = 1e-9) -> ComparisonResult:
    """Check the discrete sub/super-solution inequality at every node.

    ``direction='sub'``:   u_i <= z_i + sum_{j<i} w_ij b(t_j, u_j)
    ``direction='super'``: u_i >= z_i + sum_{j<i} w_ij b(t_j, u_j)

    ``max_violation`` is the worst signed excess (<= 0 when the inequality
    holds strictly everywhere).  ``holds`` tolerates ``tol * max(1, |u|_inf)``.
    """
    if direction not in ("sub", "super"):
        raise DomainError("direction must be 'sub' or 'super'")
    u = np.asarray(candidate_path, dtype=float)
    t = np.asarray(times, dtype=float)
    if u.ndim != 1 or u.shape != t.shape or u.size < 3:
        raise DataError("candidate path and grid must be 1-d of equal length >= 3")
    dt = t[1] - t[0]
    if t[0] != 0.0 or not np.allclose(np.diff(t), dt, rtol=1e-9, atol=0.0):
        raise DataError("grid must be uniform and start at 0")
    rhs = np.asarray(problem.forcing(t), float) + kernel_convolve(problem.alpha, dt, problem.b(t, u))
    excess = u - rhs if direction == "sub" else rhs - u
    worst = float(np.max(excess))
    return ComparisonResult(worst <= tol * max(1.0, float(np.max(np.abs(u)))), worst)


# ---------------------------------------------------------------------------
# explicit blow-up bound
# ---------------------------------------------------------------------------

def _require_affine_nondecreasing(problem: VolterraProblem) -> AffineForcing:
    z = problem.forcing
    if not isinstance(z, AffineForcing):
        raise DomainError("the blow-up bound needs an affine forcing")
    if z.lam < 0:
        raise DomainError("the blow-up bound needs a nondecreasing forcing (lam >= 0)")
    return z


def _integral_term(problem: VolterraProblem, x: float, T: float):
    """``(1/alpha) int_x^inf (w / b0(w))**(1/alpha) dw / w`` and its finiteness."""
    if problem.cap_level is not None:
        return math.inf, False
    if problem.multiplier == 0:
        return math.inf, False
    res = osgood_check(problem.nonlinearity, problem.alpha, x, T, scale=problem.multiplier)
    return res.value / problem.alpha, res.finite


def explosion_bound(problem: VolterraProblem, T: float) -> ExplosionBound:
    """Upper bound on ``min(T_inf, T)``: ``inf_{x>=0} h(x) + (1/alpha) int_x^inf (w/b0)**(1/alpha) dw/w``.

    ``b0`` is the infimum of ``b`` over ``t in [0, T]``.  The infimum over
    ``x`` is located by a log-spaced scan followed by bounded Brent
    refinement around the three best local minima.  Every evaluated objective
    value is itself a valid bound, so the result is valid even if the global
    minimiser is missed.

    For a mirrored (two-sided) power nonlinearity only ``w >= 0`` enters; the
    two-sided solution dominates the one-sided one, so the bound carries over.
    """
    z = _require_affine_nondecreasing(problem)
    if not T > 0:
        raise DomainError("T must be > 0")

    _, finite = _integral_term(problem, 1.0, T)
    if not finite:
        return ExplosionBound(math.inf, math.nan, math.nan, math.inf, False)

    def F(x):
        x = float(x)
        if x < 0:
            return math.inf
        h = z.level_time(x)
        if not math.isfinite(h):
            return math.inf
        val, _ = _integral_term(problem, x, T)
        return h + val

    x_hi = 1.0
    while x_hi < 1e8 and not (F(2 * x_hi) > F(x_hi) and math.isfinite(F(x_hi))):
        x_hi *= 2
    xs = np.concatenate([[0.0], np.logspace(-6, math.log10(2 * x_hi), 61)])
    vals = np.array([F(x) for x in xs])

    local = [k for k in range(len(xs))
             if np.isfinite(vals[k])
             and (k == 0 or vals[k] <= vals[k - 1])
             and (k == len(xs) - 1 or vals[k] <= vals[k + 1])]
    local = sorted(local, key=lambda k: vals[k])[:3]
    best_x, best_v = float(xs[np.argmin(vals)]), float(np.min(vals))
    for k in local:
        lo = xs[max(k - 1, 0)]
        hi = xs[min(k + 1, len(xs) - 1)]
        if hi <= lo:
            continue
        r = optimize.minimize_scalar(F, bounds=(lo, hi), method="bounded",
                                     options={"xatol": 1e-12 * max(1.0, hi)})
        if r.fun < best_v:
            best_x, best_v = float(r.x), float(r.fun)
    if not math.isfinite(best_v):
        return ExplosionBound(math.inf, math.nan, math.nan, math.inf, True)
    h = z.level_time(best_x)
    integral, _ = _integral_term(problem, best_x, T)
    return ExplosionBound(h + integral, best_x, h, integral, True)


def explosion_bound_geometric(problem: VolterraProblem, x: float, R: float, T: float = math.inf,
                              max_levels: int = 10 ** 6, rtol: float = 1e-15) -> float:
    """Level-ladder bound ``h(x) + sum_{n>=1} (x (R**n - R**(n-1)) / b0(x R**(n-1)))**(1/alpha)``.

    Terms are summed in blocks; once successive terms shrink geometrically the
    remainder is closed with ``term * r / (1 - r)`` (exact for power-law
    ``b``).  Returns ``inf`` when the ladder does not converge.
    """
    if not R > 1:
        raise DomainError("R must be > 1")
    if not x > 0:
        raise DomainError("x must be > 0")
    z = _require_affine_nondecreasing(problem)
    h = z.level_time(x)
    if not math.isfinite(h):
        return math.inf
    a_inv = 1.0 / problem.alpha
    logx, logR = math.log(x), math.log(R)
    total = 0.0
    prev_term = None
    block = 4096
    n0 = 1
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        while n0 <= max_levels:
            n = np.arange(n0, min(n0 + block, max_levels + 1), dtype=float)
            n = n[logx + (n - 1) * logR < _LOG_WMAX]
            if n.size == 0:
                break
            w_prev = np.exp(logx + (n - 1) * logR)
            b0 = problem.b_time_infimum(w_prev, T)
            terms = (w_prev * (R - 1.0) / b0) ** a_inv
            for term in terms:
                if not math.isfinite(term):
                    return math.inf
                total += term
                if prev_term is not None and prev_term > 0:
                    r = term / prev_term
                    if r < 1.0:
                        tail = term * r / (1.0 - r)
                        if tail <= rtol * total:
                            return h + total + tail
                prev_term = term
            n0 += block
            block = min(block * 2, 1 << 18)
    return math.inf
