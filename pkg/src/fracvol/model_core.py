"""
Model primitives: power kernel, volatility families, model parameters.

The kernel is ``K(r) = alpha * r**(alpha - 1)`` and the driving Gaussian
process is ``Y_t = int_0^t K(t - s) dZ_s``.  Everything here is a pure
function of its inputs.

Covariances are available three ways:

* ``variance_Y``            closed form ``alpha**2 t**(2 alpha - 1) / (2 alpha - 1)``
* ``covariance_YY``         adaptive quadrature after a substitution that removes
                            the endpoint singularity
* ``covariance_matrix_YY``  vectorised hypergeometric closed form, used to build
                            simulation factors on large grids
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import integrate, special

from .errors import DataError, DomainError, InfeasibleError

# sigma saturates here instead of overflowing
SIGMA_SAT = 1e300
_LOG_SAT = math.log(SIGMA_SAT)

_QUAD_EPSREL = 1e-10


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerKernel:
    """Riemann-Liouville type kernel ``K(r) = alpha * r**(alpha - 1)``.

    ``alpha = H + 1/2`` for a Hurst index ``H``.  Square integrability of
    ``K(t - .)`` on ``[0, t]`` requires ``alpha > 1/2``.
    """

    alpha: float

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha <= 0.5:
            raise InfeasibleError(
                f"alpha must be > 1/2 for a square-integrable kernel, got {self.alpha}")

    @classmethod
    def from_hurst(cls, H: float) -> "PowerKernel":
        return cls(H + 0.5)

    @property
    def hurst(self) -> float:
        return self.alpha - 0.5

    def __call__(self, r):
        return eval_kernel(self, r)


def eval_kernel(kernel: PowerKernel, r):
    """Evaluate ``alpha * r**(alpha - 1)`` for ``r > 0`` (scalar or array)."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(~(r_arr > 0)):
        raise DomainError("kernel argument must be > 0")
    a = kernel.alpha
    out = a * r_arr ** (a - 1.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# volatility families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Zeta:
    """Piecewise-linear nonnegative function of time, constant outside its knots."""

    times: tuple = (0.0,)
    values: tuple = (1.0,)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise DataError("zeta knots and values must be 1-d arrays of equal nonzero length")
        if np.any(np.diff(t) <= 0):
            raise DataError("zeta knots must be strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise DataError("zeta values must be finite and nonnegative")
        object.__setattr__(self, "times", tuple(float(x) for x in t))
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    @classmethod
    def constant(cls, value: float) -> "Zeta":
        return cls((0.0,), (float(value),))

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    def infimum(self, T: float) -> float:
        """Minimum over ``[0, T]``; attained at a knot or an endpoint."""
        knots = [x for x in self.times if 0.0 <= x <= T]
        pts = np.array([0.0, T, *knots])
        return float(np.min(self(pts)))


def _as_zeta(z) -> Zeta:
    if isinstance(z, Zeta):
        return z
    return Zeta.constant(float(z))


@dataclass(frozen=True)
class Exponential:
    """``sigma(t, y) = zeta(t) * exp(eta * y)``, the rough Bergomi form."""

    eta: float
    zeta: Zeta = field(default_factory=lambda: Zeta.constant(1.0))

    def __post_init__(self):
        if not self.eta >= 0:
            raise DomainError(f"eta must be >= 0, got {self.eta}")
        object.__setattr__(self, "zeta", _as_zeta(self.zeta))

    monotone = True

    def __call__(self, t, y):
        z = self.zeta(t)
        with np.errstate(over="ignore", invalid="ignore"):
            arg = np.minimum(self.eta * np.asarray(y, dtype=float), _LOG_SAT)
            out = np.minimum(z * np.exp(arg), SIGMA_SAT)
        return out

    def time_infimum(self, w, T: float):
        return self.zeta.infimum(T) * np.exp(np.minimum(self.eta * np.asarray(w, float), _LOG_SAT))


@dataclass(frozen=True)
class Power:
    """``sigma(t, y) = c * max(y, 0)**p``.

    With ``two_sided=True`` the negative half-line is mirrored
    (``c * |y|**p``); that variant is not monotone and exists for
    benchmark problems such as ``y' = 1 + y**2``.
    """

    c: float
    p: float
    two_sided: bool = False

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError(f"c must be > 0, got {self.c}")
        if not self.p > 0:
            raise DomainError(f"p must be > 0, got {self.p}")

    @property
    def monotone(self) -> bool:
        return not self.two_sided

    def __call__(self, t, y):
        y = np.asarray(y, dtype=float)
        base = np.abs(y) if self.two_sided else np.maximum(y, 0.0)
        with np.errstate(over="ignore", invalid="ignore"):
            out = np.minimum(self.c * base ** self.p, SIGMA_SAT)
        return out + 0.0 * np.asarray(t, dtype=float)

    def time_infimum(self, w, T: float):
        return self(0.0, w)


@dataclass(frozen=True)
class Constant:
    """``sigma(t, y) = sbar``."""

    sbar: float

    def __post_init__(self):
        if not self.sbar >= 0:
            raise DomainError(f"sbar must be >= 0, got {self.sbar}")

    monotone = True

    def __call__(self, t, y):
        return np.full(np.broadcast(np.asarray(t), np.asarray(y)).shape, float(self.sbar))

    def time_infimum(self, w, T: float):
        return np.full(np.shape(w), float(self.sbar))


VolSpec = Union[Exponential, Power, Constant]


def eval_sigma(vol: VolSpec, t, y):
    """Nonnegative, overflow-safe volatility ``sigma(t, y)``.

    Scalars in, float out; arrays broadcast.
    """
    if np.any(np.asarray(t) < 0):
        raise DomainError("time must be >= 0")
    out = vol(t, y)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# model parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """``dS/S = sigma(t, Y) dW``, ``Y = K * dZ``, ``Z = rho W + rho_bar W_bar``."""

    rho: float
    kernel: PowerKernel
    vol: VolSpec
    T: float = 1.0
    s0: float = 1.0

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0:
            raise DomainError(f"rho must lie in [-1, 1], got {self.rho}")
        if not self.s0 > 0:
            raise DomainError(f"s0 must be > 0, got {self.s0}")
        if not self.T > 0:
            raise DomainError(f"horizon T must be > 0, got {self.T}")

    @property
    def rho_bar(self) -> float:
        return math.sqrt(max(0.0, 1.0 - self.rho * self.rho))


# ---------------------------------------------------------------------------
# covariance structure
# ---------------------------------------------------------------------------

def variance_Y(kernel: PowerKernel, t: float) -> float:
    """``Var(Y_t) = alpha**2 t**(2 alpha - 1) / (2 alpha - 1)``."""
    if t < 0:
        raise DomainError("t must be >= 0")
    a = kernel.alpha
    return a * a * t ** (2 * a - 1) / (2 * a - 1)


def variance_Y_quadrature(kernel: PowerKernel, t: float) -> float:
    """``int_0^t K(t - s)**2 ds`` by adaptive quadrature.

    The substitution ``t - s = v**(1 / (2 alpha - 1))`` maps the endpoint
    singularity to a constant integrand.
    """
    if t < 0:
        raise DomainError("t must be >= 0")
    if t == 0:
        return 0.0
    a = kernel.alpha
    k = 1.0 / (2 * a - 1)
    vmax = t ** (2 * a - 1)

    def f(v):
        r = v ** k
        return a * a * r ** (2 * a - 2) * k * v ** (k - 1) if v > 0 else a * a * k

    val, _ = integrate.quad(f, 0.0, vmax, epsabs=0.0, epsrel=_QUAD_EPSREL, limit=200)
    return val


def covariance_YY(kernel: PowerKernel, t: float, u: float) -> float:
    """``int_0^{min(t,u)} K(t - s) K(u - s) ds`` by singularity-removing quadrature.

    With ``r = min - s = v**(1/alpha)`` the factor ``r**(alpha - 1) dr``
    becomes ``dv / alpha``; the remaining factor ``(d + r)**(alpha - 1)`` is
    smooth for ``d = |t - u| > 0`` and the integral is split at the crossover
    ``r = d`` to keep the adaptive rule efficient when ``d`` is small.
    """
    if t < 0 or u < 0:
        raise DomainError("times must be >= 0")
    lo, hi = (t, u) if t <= u else (u, t)
    if lo == 0:
        return 0.0
    d = hi - lo
    if d == 0:
        return variance_Y_quadrature(kernel, lo)
    a = kernel.alpha
    vmax = lo ** a

    def f(v):
        return a * (d + v ** (1.0 / a)) ** (a - 1.0)

    vc = min(d ** a, vmax)
    total = 0.0
    for left, right in ((0.0, vc), (vc, vmax)):
        if right > left:
            val, _ = integrate.quad(f, left, right, epsabs=0.0, epsrel=_QUAD_EPSREL, limit=200)
            total += val
    return total


def covariance_matrix_YY(kernel: PowerKernel, times) -> np.ndarray:
    """Covariance matrix of ``Y`` at ``times`` via the closed form.

    For ``u <= t``: ``C(t, u) = alpha u**alpha t**(alpha-1) 2F1(1-alpha, 1; 1+alpha; u/t)``.
    The hypergeometric series converges at ``u/t = 1`` because ``2 alpha - 1 > 0``.
    """
    times = np.asarray(times, dtype=float)
    a = kernel.alpha
    tt, uu = np.meshgrid(times, times, indexing="ij")
    hi = np.maximum(tt, uu)
    lo = np.minimum(tt, uu)
    out = np.zeros_like(hi)
    pos = lo > 0
    ratio = lo[pos] / hi[pos]
    out[pos] = a * lo[pos] ** a * hi[pos] ** (a - 1.0) * special.hyp2f1(1.0 - a, 1.0, 1.0 + a, ratio)
    diag = np.isclose(tt, uu, rtol=0.0, atol=0.0) & pos
    out[diag] = a * a * hi[diag] ** (2 * a - 1) / (2 * a - 1)
    return out


def cross_cov_YW(kernel: PowerKernel, rho: float, t: float, u: float):
    """``Cov(Y_t, W_u) = rho (t**alpha - (t - min(t, u))**alpha)``."""
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    a = kernel.alpha
    m = np.minimum(t, u)
    out = rho * (t ** a - (t - m) ** a)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# continuity diagnostics
# ---------------------------------------------------------------------------

def _increment_sd(kernel: PowerKernel, t, tp) -> np.ndarray:
    t = np.asarray(t, float)
    tp = np.asarray(tp, float)
    a = kernel.alpha
    lo = np.minimum(t, tp)
    hi = np.maximum(t, tp)
    v_lo = a * a * lo ** (2 * a - 1) / (2 * a - 1)
    v_hi = a * a * hi ** (2 * a - 1) / (2 * a - 1)
    cov = np.zeros_like(hi)
    pos = lo > 0
    cov[pos] = (a * lo[pos] ** a * hi[pos] ** (a - 1.0)
                * special.hyp2f1(1.0 - a, 1.0, 1.0 + a, lo[pos] / hi[pos]))
    return np.sqrt(np.maximum(v_lo + v_hi - 2.0 * cov, 0.0))


def continuity_modulus(kernel: PowerKernel, T: float, mesh: Sequence[float],
                       resolution: int = 400) -> np.ndarray:
    """Grid lower estimate of ``theta_T(h)``, the sup of increment standard deviations.

    For each lag ``h`` the sup runs over pairs ``(t, t + delta)`` with ``t``
    on a uniform grid of ``resolution`` cells and ``delta`` in the grid lags
    ``<= h`` plus ``h`` itself.  A running maximum over the (ascending) mesh
    keeps the result nondecreasing.
    """
    mesh = np.asarray(mesh, dtype=float)
    if mesh.size == 0:
        raise DomainError("mesh must contain at least one lag")
    if np.any(np.diff(mesh) < 0):
        raise DomainError("mesh must be sorted ascending")
    if np.any(mesh <= 0) or np.any(mesh > T):
        raise DomainError("lags must satisfy 0 < h <= T")

    grid = np.linspace(0.0, T, resolution + 1)
    step = T / resolution
    cache = {}

    def best_for_lag(delta):
        key = round(delta / step * 1e9)
        if key not in cache:
            starts = grid[grid + delta <= T * (1 + 1e-14)]
            starts = np.append(starts, max(T - delta, 0.0))
            cache[key] = float(np.max(_increment_sd(kernel, starts, np.minimum(starts + delta, T))))
        return cache[key]

    out = np.empty(mesh.size)
    running = 0.0
    k_done = 0
    for i, h in enumerate(mesh):
        k_max = int(np.floor(h / step * (1 + 1e-12)))
        for k in range(max(k_done, 1), k_max + 1):
            running = max(running, best_for_lag(k * step))
        k_done = max(k_done, k_max + 1)
        running = max(running, best_for_lag(h))
        out[i] = running
    return out


@dataclass
class DudleyEstimate:
    integral_estimate: float
    converged: bool
    tail_exponent: float
    sampled_part: float
    tail_part: float


def dudley_diagnostic(theta_samples: Sequence[tuple]) -> DudleyEstimate:
    """Estimate ``int_{0+} sqrt(ln(1/u)) d theta(u)`` from sampled ``(h, theta)`` pairs.

    The sampled range contributes a trapezoidal Riemann-Stieltjes sum.  Below
    the smallest lag, ``theta ~ C h**beta`` is fitted from the first samples
    and integrated analytically (an upper incomplete gamma).  ``converged`` is
    set when the fitted ``beta`` is positive; this is a diagnostic, not a proof.
    """
    arr = np.asarray(theta_samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise DataError("need at least two (h, theta) samples")
    h, th = arr[:, 0], arr[:, 1]
    if np.any(h <= 0) or np.any(np.diff(h) <= 0):
        raise DataError("lags must be positive and strictly increasing")
    if np.any(np.diff(th) < 0):
        raise DataError("theta samples must be nondecreasing")

    f = np.sqrt(np.maximum(np.log(1.0 / h), 0.0))
    sampled = float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(th)))

    k = min(5, h.size)
    if th[0] > 0 and th[k - 1] > 0 and h[k - 1] > h[0]:
        beta = float(np.polyfit(np.log(h[:k]), np.log(th[:k]), 1)[0])
    else:
        beta = 0.0
    converged = beta > 1e-3
    tail = 0.0
    if converged and h[0] < 1:
        # int_0^{h0} sqrt(ln 1/u) d(C u**beta) with C = th0 / h0**beta
        C = th[0] / h[0] ** beta
        L = math.log(1.0 / h[0])
        tail = C * beta * beta ** -1.5 * special.gamma(1.5) * special.gammaincc(1.5, beta * L)
    return DudleyEstimate(sampled + tail, converged, beta, sampled, tail)


# ---------------------------------------------------------------------------
# Osgood-type integrability
# ---------------------------------------------------------------------------

@dataclass
class OsgoodResult:
    finite: bool
    value: float


def osgood_check(vol: VolSpec, alpha: float, A: float, T0: float,
                 scale: float = 1.0) -> OsgoodResult:
    """Decide finiteness of ``int_A^inf (w / (scale * inf_t sigma0(t, w)))**(1/alpha) dw/w``.

    Adaptive quadrature on ``[A, W_max]`` plus an exact analytic tail.
    ``A = 0`` is accepted (the blow-up bound needs it).
    """
    if A < 0:
        raise DomainError("A must be >= 0")
    if not scale > 0:
        raise DomainError("scale must be > 0")
    s = 1.0 / alpha
    inf = OsgoodResult(False, math.inf)

    if isinstance(vol, Constant):
        return inf

    if isinstance(vol, Power):
        if vol.p <= 1 or A == 0:
            return inf
        c = scale * vol.c
        expo = (1.0 - vol.p) * s      # integrand = c**-s * w**(expo - 1)
        w_max = 1e3 * max(A, 1.0)
        # w = e**u turns dw/w into du and the integrand into c**-s * e**(expo u)
        head, _ = integrate.quad(lambda u: c ** -s * math.exp(expo * u), math.log(A), math.log(w_max),
                                 epsabs=0.0, epsrel=_QUAD_EPSREL, limit=200)
        tail = c ** -s * w_max ** expo / -expo
        return OsgoodResult(True, head + tail)

    if isinstance(vol, Exponential):
        zmin = scale * vol.zeta.infimum(T0)
        if zmin <= 0 or vol.eta <= 0:
            return inf
        eta = vol.eta
        beta = eta * s                  # integrand = zmin**-s * w**(s-1) * exp(-beta w)
        w_max = max(A, 50.0 / eta)
        pref = zmin ** -s
        if A == 0:
            head, _ = integrate.quad(lambda w: pref * math.exp(-beta * w), 0.0, w_max,
                                     weight="alg", wvar=(s - 1.0, 0.0),
                                     epsabs=0.0, epsrel=_QUAD_EPSREL, limit=200)
        elif w_max > A:
            head, _ = integrate.quad(lambda u: pref * math.exp(s * u - beta * math.exp(u)),
                                     math.log(A), math.log(w_max),
                                     epsabs=0.0, epsrel=_QUAD_EPSREL, limit=200)
        else:
            head = 0.0
        tail = pref * beta ** -s * special.gamma(s) * special.gammaincc(s, beta * w_max)
        return OsgoodResult(True, float(head + tail))

    raise DomainError(f"unsupported volatility family {type(vol).__name__}")
