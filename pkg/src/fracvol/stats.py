"""Monte Carlo summaries: means with standard errors, Wilson intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats as _st

_Z95 = float(_st.norm.ppf(0.975))


@dataclass
class MCResult:
    """Estimate with standard error and a 95% normal interval ``mean +- 1.96 se``."""

    mean: float
    std_error: float
    ci95: tuple
    n_paths: int
    n_exploded: int = 0
    wilson: Optional[tuple] = None
    config: dict = field(default_factory=dict)


def wilson_interval(successes: int, n: int, z: float = _Z95) -> tuple:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    p = successes / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def summarize(values, n_exploded: int = 0, config: Optional[dict] = None,
              antithetic: bool = False) -> MCResult:
    """Order-independent mean and standard error of per-path values.

    Sums use ``math.fsum`` so the result does not depend on batching.  Values
    are rescaled by their max magnitude before squaring so saturated payoffs
    near 1e300 do not overflow.  With ``antithetic`` the standard error is
    computed from pair averages.
    """
    v = np.asarray(values, dtype=float)
    if antithetic:
        if v.size % 2:
            raise ValueError("antithetic estimates need an even number of paths")
        v_se = 0.5 * (v[0::2] + v[1::2])
    else:
        v_se = v
    n = v.size
    mean = math.fsum(v) / n
    m = len(v_se)
    if m > 1:
        scale = float(np.max(np.abs(v_se))) or 1.0
        w = v_se / scale
        wm = math.fsum(w) / m
        var = math.fsum((w - wm) ** 2) / (m - 1)
        se = scale * math.sqrt(var / m)
    else:
        se = math.nan
    return MCResult(mean, se, (mean - 1.96 * se, mean + 1.96 * se), n, n_exploded,
                    None, dict(config or {}))


def proportion(successes: int, n: int, config: Optional[dict] = None) -> MCResult:
    """Binomial proportion as an ``MCResult`` with Wilson interval attached."""
    p = successes / n
    se = math.sqrt(p * (1 - p) / n)
    return MCResult(p, se, (p - 1.96 * se, p + 1.96 * se), n, 0,
                    wilson_interval(successes, n), dict(config or {}))
