import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import comb

from fracvol import (DataError, DomainError, Grid, NumericalError, PowerKernel,
                     build_joint_factor, cameron_martin_map, convolve_drift,
                     corridor_probability, sample_joint_paths, variance_Y)
from fracvol.gauss_path import _cholesky_with_jitter, iter_path_chunks, joint_covariance
from fracvol.stats import wilson_interval
from fracvol.streams import path_generator, path_normals


def sparre_andersen(n):
    """P(a symmetric continuous random walk stays <= 0 for n steps) = C(2n, n) / 4^n."""
    return comb(2 * n, n, exact=True) / 4 ** n


# -- grid and factor ---------------------------------------------------------------

def test_grid():
    g = Grid(2.0, 4)
    assert g.dt == 0.5 and list(g.times) == [0.0, 0.5, 1.0, 1.5, 2.0]
    with pytest.raises(DomainError):
        Grid(1.0, 1)
    with pytest.raises(DomainError):
        Grid(0.0, 4)


def test_factor_rho_zero_block():
    f = build_joint_factor(PowerKernel(0.8), 0.0, Grid(1.0, 8))
    C = f.covariance_yw()
    assert np.all(C[:8, 8:] == 0) and np.all(C[8:, :8] == 0)


def test_factor_brownian_duplicated_blocks():
    g = Grid(1.0, 16)
    f = build_joint_factor(PowerKernel(1.0), 1.0, g)
    C = f.covariance_yw()
    bm = np.minimum.outer(g.times[1:], g.times[1:])
    for blk in (C[:16, :16], C[:16, 16:], C[16:, :16], C[16:, 16:]):
        assert np.max(np.abs(blk - bm)) <= 1e-12
    b = sample_joint_paths(f, 3, 50)
    assert np.max(np.abs(b.y[:, 1:] - np.cumsum(b.dw, axis=1))) < 1e-5
    assert np.array_equal(b.dz, b.dw)


def test_factor_reconstructs_covariance():
    f = build_joint_factor(PowerKernel(0.7), -0.4, Grid(1.0, 32))
    assert np.allclose(f.chol @ f.chol.T, f.covariance, rtol=0, atol=1e-12)
    assert 0 < f.jitter <= 1e-8 * np.max(np.diag(f.covariance))


def test_jitter_failure_reports_diagnostics():
    C = np.diag([1.0, -1.0])
    with pytest.raises(NumericalError, match="min eigenvalue"):
        _cholesky_with_jitter(C)


def test_factor_rejects_bad_rho():
    with pytest.raises(DomainError):
        build_joint_factor(PowerKernel(0.8), 1.5, Grid(1.0, 4))


# -- sampling ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def big_bundle():
    f = build_joint_factor(PowerKernel(0.8), -0.7, Grid(1.0, 16))
    return f, sample_joint_paths(f, 99, 100_000)


def test_sample_mean_and_variance(big_bundle):
    f, b = big_bundle
    n = len(b)
    for k in range(1, 17):
        col = b.y[:, k]
        assert abs(col.mean()) <= 4 * col.std() / math.sqrt(n)
    y = b.y[:, -1]
    var_hat = y.var()
    se = math.sqrt(np.mean((y * y - var_hat) ** 2) / n)
    assert abs(var_hat - variance_Y(PowerKernel(0.8), 1.0)) <= 4 * se


def test_bundle_structure(big_bundle):
    f, b = big_bundle
    assert np.all(b.y[:, 0] == 0)
    r, rb = f.rho, f.rho_bar
    assert np.allclose(b.dz, r * b.dw + rb * b.dwbar, atol=1e-13)
    # W and W_bar have unit-rate independent increments
    dt = f.grid.dt
    assert np.var(b.dw) / dt == pytest.approx(1.0, abs=0.01)
    assert np.var(b.dwbar) / dt == pytest.approx(1.0, abs=0.01)
    assert abs(np.mean(b.dw * b.dwbar)) / dt < 0.01


def test_partition_invariance_bit_exact():
    f = build_joint_factor(PowerKernel(0.8), -0.7, Grid(1.0, 16))
    whole = sample_joint_paths(f, 1234, 10_000)
    parts = [sample_joint_paths(f, (1234, s), 1000) for s in range(0, 10_000, 1000)]
    for name in ("y", "dw", "dz", "dwbar"):
        joined = np.concatenate([getattr(p, name) for p in parts])
        assert np.array_equal(getattr(whole, name), joined)
    threaded = list(iter_path_chunks(f, 1234, 10_000, chunk=777, threads=4))
    assert np.array_equal(whole.y, np.concatenate([c.y for c in threaded]))


def test_streams_contract():
    a = path_normals(5, [7, 3], 10)
    assert np.array_equal(a[0], path_generator(5, 7).standard_normal(10))
    assert np.array_equal(a[1], path_generator(5, 3).standard_normal(10))
    assert not np.array_equal(path_normals(6, [7], 10)[0], a[0])
    anti = path_normals(5, [0, 1, 2, 3], 6, antithetic=True)
    assert np.array_equal(anti[0], -anti[1]) and np.array_equal(anti[2], -anti[3])


def test_sample_count_validation():
    f = build_joint_factor(PowerKernel(0.8), 0.0, Grid(1.0, 4))
    with pytest.raises(DomainError):
        sample_joint_paths(f, 0, 0)


# -- drift convolution -----------------------------------------------------------------

def test_convolve_drift_examples():
    g = Grid(1.0, 50)
    assert np.all(convolve_drift(PowerKernel(0.8), np.zeros(50), g) == 0)
    assert np.allclose(convolve_drift(PowerKernel(1.0), np.ones(50), g), g.times, atol=1e-14)
    assert np.allclose(convolve_drift(PowerKernel(0.8), np.ones(50), g), g.times ** 0.8,
                       atol=1e-13)
    assert np.array_equal(cameron_martin_map(PowerKernel(0.8), np.ones(50), g),
                          convolve_drift(PowerKernel(0.8), np.ones(50), g))
    with pytest.raises(DataError):
        convolve_drift(PowerKernel(0.8), np.ones(49), g)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.55, 2.0), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2 ** 31))
def test_convolve_drift_linear(alpha, a, b, seed):
    rng = np.random.default_rng(seed)
    g = Grid(1.0, 40)
    f1, f2 = rng.normal(size=40), rng.normal(size=40)
    k = PowerKernel(alpha)
    lhs = convolve_drift(k, a * f1 + b * f2, g)
    rhs = a * convolve_drift(k, f1, g) + b * convolve_drift(k, f2, g)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_convolve_drift_matches_quadrature():
    # drift f(s) = s (left-point sampled) against the exact step-function integral
    g = Grid(1.0, 20)
    f = g.times[:-1]
    got = convolve_drift(PowerKernel(0.7), f, g)
    a = 0.7
    for i, t in enumerate(g.times):
        ref = sum(f[j] * ((t - g.times[j]) ** a - (t - g.times[j + 1]) ** a) for j in range(i))
        assert got[i] == pytest.approx(ref, rel=1e-12, abs=1e-15)


# -- corridor ------------------------------------------------------------------------

def test_corridor_brownian_oracles():
    # alpha = 1: Y is Brownian; T = 0.01 puts the lower wall ten deviations away
    n, count = 16, 100_000
    res = corridor_probability(PowerKernel(1.0), 0.0, 0.01, Grid(0.01, n), 8, count)
    exact = sparre_andersen(n)
    assert res.wilson[0] <= exact <= res.wilson[1]
    # brute force: fine Brownian grid (independent RNG), coarse nodes checked
    rng = np.random.default_rng(77)
    for sub in (4, 16):
        steps = rng.normal(scale=math.sqrt(0.01 / (n * sub)), size=(count // 4, n * sub))
        b = np.cumsum(steps, axis=1)[:, sub - 1::sub]
        k = int(np.count_nonzero(np.all((b <= 0) & (b >= -1), axis=1)))
        lo, hi = wilson_interval(k, count // 4)
        assert lo <= exact <= hi
        assert abs(k / (count // 4) - res.mean) <= 4 * math.hypot(
            res.std_error, math.sqrt(exact * (1 - exact) / (count // 4)))


def test_corridor_two_steps_matches_walk_formula():
    res = corridor_probability(PowerKernel(1.0), 0.0, 0.01, Grid(0.01, 2), 3, 100_000)
    assert abs(res.mean - sparre_andersen(2)) <= 4 * res.std_error


def test_corridor_large_lambda_vanishes():
    res = corridor_probability(PowerKernel(0.8), 1e3, 1.0, Grid(1.0, 16), 1, 10_000)
    assert res.mean == 0.0


def test_corridor_nonincreasing_in_lambda_past_peak():
    k, g = PowerKernel(1.2), Grid(1.0, 16)
    vals = [corridor_probability(k, lam, 1.0, g, 21, 20_000).mean for lam in (1.0, 1.5, 2.0, 3.0)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_corridor_rises_for_small_lambda():
    # the upper wall lam*t binds near t = 0, so a small slope first helps
    k, g = PowerKernel(1.2), Grid(1.0, 16)
    lo = corridor_probability(k, 0.0, 1.0, g, 21, 100_000)
    hi = corridor_probability(k, 0.75, 1.0, g, 21, 100_000)
    assert hi.mean - lo.mean > 4 * math.hypot(lo.std_error, hi.std_error)


def test_corridor_validation():
    with pytest.raises(DomainError):
        corridor_probability(PowerKernel(0.8), 1.0, 1.0, Grid(1.0, 4), 0, 50)
    with pytest.raises(DataError):
        corridor_probability(PowerKernel(0.8), 1.0, 2.0, Grid(1.0, 4), 0, 200)


def test_joint_covariance_symmetric_psd():
    C = joint_covariance(PowerKernel(0.6), Grid(1.0, 24))
    assert np.array_equal(C, C.T)
    assert np.min(np.linalg.eigvalsh(C)) > -1e-12
