"""
Exact Gaussian simulation of ``Y = K * dZ`` jointly with its Brownian drivers.

The pair ``(Y, Z)`` at the grid nodes is a centred Gaussian vector whose
covariance is known in closed form, so it is sampled exactly by a Cholesky
factor.  The price driver is then completed as

    W = rho Z + rho_bar B,     W_bar = rho_bar Z - rho B,

with ``B`` a Brownian motion independent of ``(Y, Z)``.  This reproduces
``Z = rho W + rho_bar W_bar`` with ``W``, ``W_bar`` independent, and the
factor does not depend on ``rho``, so correlation sweeps share random
numbers.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy import linalg

from .errors import DataError, DomainError, NumericalError
from .model_core import PowerKernel, covariance_matrix_YY
from .stats import MCResult, proportion
from .streams import path_normals
from .volterra import kernel_convolve

log = logging.getLogger(__name__)

JITTER_START = 1e-14
JITTER_MAX = 1e-8


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``t_i = i T / n``, ``i = 0..n``."""

    T: float
    n: int

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError("grid horizon must be > 0")
        if int(self.n) != self.n or self.n < 2:
            raise DomainError("grid needs n >= 2 steps")

    @property
    def dt(self) -> float:
        return self.T / self.n

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)


@dataclass
class JointFactor:
    """Lower Cholesky factor of ``Cov(Y_{t_1..t_n}, Z_{t_1..t_n})``."""

    kernel: PowerKernel
    rho: float
    grid: Grid
    chol: np.ndarray = field(repr=False)
    covariance: np.ndarray = field(repr=False)
    jitter: float = 0.0

    @property
    def rho_bar(self) -> float:
        return math.sqrt(max(0.0, 1.0 - self.rho ** 2))

    def covariance_yw(self) -> np.ndarray:
        """Analytic covariance of ``(Y_{t_1..t_n}, W_{t_1..t_n})``."""
        n = self.grid.n
        C = self.covariance.copy()
        C[:n, n:] *= self.rho
        C[n:, :n] *= self.rho
        return C


@dataclass
class PathBundle:
    """Jointly sampled paths, one row per path index.

    ``y`` has ``n + 1`` node values (``y[:, 0] == 0``); ``dw``, ``dz`` and
    ``dwbar`` hold the ``n`` step increments.
    """

    grid: Grid
    y: np.ndarray
    dw: np.ndarray
    dz: np.ndarray
    dwbar: np.ndarray
    path_indices: np.ndarray
    master_seed: int

    def __len__(self):
        return self.y.shape[0]


def joint_covariance(kernel: PowerKernel, grid: Grid) -> np.ndarray:
    """``2n x 2n`` covariance of ``(Y, Z)`` at ``t_1..t_n``."""
    t = grid.times[1:]
    a = kernel.alpha
    cyy = covariance_matrix_YY(kernel, t)
    tt, uu = np.meshgrid(t, t, indexing="ij")
    cyz = tt ** a - (tt - np.minimum(tt, uu)) ** a
    czz = np.minimum(tt, uu)
    return np.block([[cyy, cyz], [cyz.T, czz]])


def _cholesky_with_jitter(C: np.ndarray):
    scale = float(np.max(np.diag(C)))
    eps = JITTER_START
    while eps <= JITTER_MAX * (1 + 1e-9):
        try:
            L = linalg.cholesky(C + eps * scale * np.eye(C.shape[0]), lower=True)
            if eps > JITTER_START:
                log.info("cholesky succeeded after jitter escalation to %.1e", eps)
            return L, eps * scale
        except linalg.LinAlgError:
            log.info("cholesky failed at relative jitter %.1e, escalating", eps)
            eps *= 10
    w = np.linalg.eigvalsh(C)
    raise NumericalError(
        f"covariance factorisation failed at max jitter {JITTER_MAX:g}; "
        f"min eigenvalue {w[0]:.3e}, max eigenvalue {w[-1]:.3e}, size {C.shape[0]}")


def build_joint_factor(kernel: PowerKernel, rho: float, grid: Grid) -> JointFactor:
    """Factor the ``(Y, Z)`` covariance on ``grid``; ``rho`` is used when mixing in ``B``."""
    if not -1.0 <= rho <= 1.0:
        raise DomainError("rho must lie in [-1, 1]")
    C = joint_covariance(kernel, grid)
    L, jitter = _cholesky_with_jitter(C)
    return JointFactor(kernel, float(rho), grid, L, C, jitter)


def _bundle_from_normals(factor: JointFactor, xi: np.ndarray, indices, master_seed) -> PathBundle:
    n = factor.grid.n
    yz = xi[:, : 2 * n] @ factor.chol.T
    count = xi.shape[0]
    y = np.zeros((count, n + 1))
    y[:, 1:] = yz[:, :n]
    z = np.zeros((count, n + 1))
    z[:, 1:] = yz[:, n:]
    dz = np.diff(z, axis=1)
    db = xi[:, 2 * n:] * math.sqrt(factor.grid.dt)
    r, rb = factor.rho, factor.rho_bar
    return PathBundle(factor.grid, y, r * dz + rb * db, dz, rb * dz - r * db,
                      np.asarray(indices), master_seed)


def sample_joint_paths(factor: JointFactor, rng_stream, count: int,
                       antithetic: bool = False) -> PathBundle:
    """Draw ``count`` paths.

    ``rng_stream`` is ``master_seed`` or ``(master_seed, first_index)``; path
    ``first_index + k`` always receives the same draws.
    """
    if count < 1:
        raise DomainError("count must be >= 1")
    if isinstance(rng_stream, tuple):
        master_seed, start = rng_stream
    else:
        master_seed, start = rng_stream, 0
    indices = np.arange(start, start + count)
    xi = path_normals(master_seed, indices, 3 * factor.grid.n, antithetic)
    return _bundle_from_normals(factor, xi, indices, master_seed)


def iter_path_chunks(factor: JointFactor, master_seed: int, n_paths: int,
                     chunk: int = 8192, antithetic: bool = False,
                     threads: int = 1) -> Iterator[PathBundle]:
    """Yield consecutive bundles covering path indices ``0..n_paths-1`` in order."""
    starts = list(range(0, n_paths, chunk))

    def make(s):
        return sample_joint_paths(factor, (master_seed, s), min(chunk, n_paths - s), antithetic)

    if threads <= 1:
        for s in starts:
            yield make(s)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            yield from pool.map(make, starts)


def convolve_drift(kernel: PowerKernel, drift_samples, grid: Grid) -> np.ndarray:
    """``out_i = sum_{j<i} w_ij drift_j`` with exact product weights.

    ``drift_samples`` holds one value per step (``n``), or ``(paths, n)``.
    """
    d = np.asarray(drift_samples, dtype=float)
    if d.shape[-1] != grid.n:
        raise DataError(f"expected {grid.n} drift samples per path, got {d.shape[-1]}")
    pad = np.zeros(d.shape[:-1] + (1,))
    return kernel_convolve(kernel.alpha, grid.dt, np.concatenate([d, pad], axis=-1))


def cameron_martin_map(kernel: PowerKernel, f, grid: Grid) -> np.ndarray:
    """Cameron-Martin image ``t -> int_0^t K(t - s) f(s) ds`` of a step function ``f``."""
    return convolve_drift(kernel, f, grid)


def corridor_probability(kernel: PowerKernel, lam: float, T: float, grid: Grid,
                         rng, count: int, chunk: int = 8192) -> MCResult:
    """Estimate ``P(lam t - 1 <= Y_t <= lam t`` at every grid node``)``.

    ``rng`` is a master seed.  Returns the proportion with its Wilson interval.
    """
    if count < 100:
        raise DomainError("corridor estimate needs count >= 100")
    if abs(grid.T - T) > 1e-12 * T:
        raise DataError("grid horizon does not match T")
    factor = build_joint_factor(kernel, 0.0, grid)
    t = grid.times
    lower, upper = lam * t - 1.0, lam * t
    inside = 0
    for bundle in iter_path_chunks(factor, rng, count, chunk):
        ok = np.all((bundle.y >= lower) & (bundle.y <= upper), axis=1)
        inside += int(np.count_nonzero(ok))
    return proportion(inside, count, {"alpha": kernel.alpha, "lambda": lam, "T": T,
                                      "n": grid.n, "seed": rng})
