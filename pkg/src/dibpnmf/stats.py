"""Densities, samplers and moment routines used by the samplers.

Scalar log-densities are written against :mod:`math` because the stick
updates call them inside tight Python loops. Array routines use numpy.
Every sampler takes an explicit :class:`numpy.random.Generator`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special
from scipy.stats import rankdata

from .errors import DomainError, NumericalError

NEG_INF = -math.inf

# Below this much truncated mass the inverse-CDF route loses all precision.
_TAIL_MASS = 1e-300


@dataclass(frozen=True)
class BivariateBetaParams:
    """Olkin-Liu bivariate beta parameters; marginals are Beta(a, c), Beta(b, c)."""

    a: float
    b: float
    c: float = 1.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.c > 0):
            raise DomainError(f"bivariate beta needs a, b, c > 0, got {self}")


@dataclass(frozen=True)
class FgmParams:
    """FGM copula with Beta(alpha1, 1) and Beta(alpha2, 1) margins."""

    rho: float
    alpha1: float
    alpha2: float

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0:
            raise DomainError(f"FGM rho must lie in [-1, 1], got {self.rho}")
        if not (self.alpha1 > 0 and self.alpha2 > 0):
            raise DomainError(f"FGM margins need alpha1, alpha2 > 0, got {self}")


@dataclass(frozen=True)
class GaussKernelParams:
    """Two-point squared-exponential kernel plus isotropic noise."""

    sigma: float = 1.0
    s: float = 1.0
    eta: float = 1.0
    t1: float = 1.0
    t2: float = 2.0

    def __post_init__(self):
        if not (self.sigma > 0 and self.s > 0 and self.eta > 0):
            raise DomainError(f"kernel scales must be positive, got {self}")
        if self.t1 == self.t2:
            raise DomainError("covariate locations t1 and t2 must differ")

    def covariance(self, s=None):
        """2x2 kernel matrix at length scale ``s`` (defaults to ``self.s``)."""
        s = self.s if s is None else s
        off = self.sigma**2 * math.exp(-((self.t1 - self.t2) ** 2) / s**2)
        return np.array([[self.sigma**2, off], [off, self.sigma**2]])


# ---------------------------------------------------------------------------
# Exponential and gamma


def exp_logpdf_mean(y, mean):
    """Log-density of an exponential with the given *mean* (not rate)."""
    mean_arr = np.asarray(mean, dtype=float)
    if np.any(mean_arr <= 0):
        raise DomainError("exponential mean must be positive")
    out = -np.log(mean_arr) - np.asarray(y, dtype=float) / mean_arr
    return float(out) if out.ndim == 0 else out


def gamma_logpdf(x, shape, rate):
    """Gamma log-density in the shape/rate parameterisation; -inf off support."""
    if x <= 0:
        return NEG_INF
    return shape * math.log(rate) - math.lgamma(shape) + (shape - 1) * math.log(x) - rate * x


def beta1_logpdf(x, alpha):
    """Log-density of Beta(alpha, 1), i.e. ``alpha * x**(alpha-1)`` on (0, 1)."""
    if not 0.0 < x < 1.0:
        if x == 1.0:
            return math.log(alpha)
        return NEG_INF
    return math.log(alpha) + (alpha - 1.0) * math.log(x)


# ---------------------------------------------------------------------------
# Truncated Beta(alpha, 1)


def truncated_beta_sample(alpha, lo, hi, rng=None, u=None):
    """Draw from Beta(alpha, 1) restricted to ``[lo, hi]`` by inverting its CDF.

    The CDF is ``x**alpha``, so ``x = (lo**a + u (hi**a - lo**a))**(1/a)``.
    That is evaluated as ``hi * (1 - (1-u)(1-r))**(1/a)`` with
    ``r = (lo/hi)**a`` to stay accurate when ``alpha`` is small.
    Pass ``u`` to supply the uniform draw directly.
    """
    if not (0.0 <= lo < hi <= 1.0):
        raise DomainError(f"need 0 <= lo < hi <= 1, got lo={lo}, hi={hi}")
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if u is None:
        u = rng.random()
    if lo == 0.0:
        one_minus_r = 1.0
    else:
        one_minus_r = -math.expm1(alpha * math.log(lo / hi))
    inner = -(1.0 - u) * one_minus_r
    x = hi * math.exp(math.log1p(inner) / alpha) if inner > -1.0 else 0.0
    return min(max(x, lo), hi)


# ---------------------------------------------------------------------------
# Bivariate beta (Olkin-Liu)


def _log_b3(a, b, c):
    return math.lgamma(a) + math.lgamma(b) + math.lgamma(c) - math.lgamma(a + b + c)


def bivariate_beta_logpdf(x, y, p: BivariateBetaParams):
    """Log-density of the bivariate beta on the open unit square."""
    if not (0.0 < x < 1.0 and 0.0 < y < 1.0):
        raise DomainError(f"bivariate beta support is (0,1)^2, got ({x}, {y})")
    a, b, c = p.a, p.b, p.c
    return (
        (a - 1.0) * math.log(x)
        + (b - 1.0) * math.log(y)
        + (b + c - 1.0) * math.log1p(-x)
        + (a + c - 1.0) * math.log1p(-y)
        - _log_b3(a, b, c)
        - (a + b + c) * math.log1p(-x * y)
    )


def bivariate_beta_sample(p: BivariateBetaParams, rng, size=None):
    """Draw pairs via the gamma construction ``(G_a/(G_a+G_c), G_b/(G_b+G_c))``.

    With independent unit-rate gammas this has exactly the bivariate beta
    density above.
    """
    ga = rng.standard_gamma(p.a, size)
    gb = rng.standard_gamma(p.b, size)
    gc = rng.standard_gamma(p.c, size)
    return ga / (ga + gc), gb / (gb + gc)


def _quad2d(fn, tol, relax=(1.0, 1e2, 1e4)):
    """Integrate ``fn(x, y)`` over the unit square by nested adaptive quadrature.

    The inner integral gets a breakpoint near ``y = 1`` scaled to ``1 - x``,
    where the ``(1 - xy)`` factor peaks. If it still fails, the tolerance is
    relaxed step by step; the returned error estimate reflects what was reached.
    """
    inner_err = [0.0]

    def inner(x):
        pts = None
        if x > 0.9:
            pts = (1.0 - 10.0 * (1.0 - x),)
        last = None
        for r in relax:
            with warnings.catch_warnings():
                warnings.simplefilter("error", integrate.IntegrationWarning)
                try:
                    val, err = integrate.quad(
                        lambda y: fn(x, y), 0.0, 1.0, epsabs=tol * r, epsrel=tol * r, limit=200, points=pts
                    )
                except integrate.IntegrationWarning as exc:
                    last = exc
                    continue
            inner_err[0] = max(inner_err[0], err)
            return val
        raise NumericalError("inner quadrature did not converge", x=x, reason=str(last))

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(inner, 0.0, 1.0, epsabs=tol, epsrel=tol, limit=200)
        except integrate.IntegrationWarning as exc:
            raise NumericalError("outer quadrature did not converge", reason=str(exc)) from None
    return val, err + inner_err[0]


def bivariate_beta_integral(p: BivariateBetaParams, weight=None, tol=1e-10):
    """Integral of ``weight(x, y) * pdf(x, y)`` over the unit square.

    Returns ``(value, abs_error_estimate)``.
    """
    lb = _log_b3(p.a, p.b, p.c)
    a, b, c = p.a, p.b, p.c

    def dens(x, y):
        if x <= 0.0 or y <= 0.0 or x >= 1.0 or y >= 1.0:
            return 0.0
        lp = (
            (a - 1.0) * math.log(x)
            + (b - 1.0) * math.log(y)
            + (b + c - 1.0) * math.log1p(-x)
            + (a + c - 1.0) * math.log1p(-y)
            - lb
            - (a + b + c) * math.log1p(-x * y)
        )
        d = math.exp(lp)
        return d if weight is None else d * weight(x, y)

    return _quad2d(dens, tol)


def bivariate_beta_moments(p: BivariateBetaParams, tol=1e-10):
    """Means and Pearson correlation of the bivariate beta by quadrature.

    Returns ``(mean_x, mean_y, correlation)``. Raises :class:`NumericalError`
    if any of the six integrals fails to converge.
    """
    mass, _ = bivariate_beta_integral(p, tol=tol)
    mom = {}
    for name, w in (
        ("x", lambda x, y: x),
        ("y", lambda x, y: y),
        ("xx", lambda x, y: x * x),
        ("yy", lambda x, y: y * y),
        ("xy", lambda x, y: x * y),
    ):
        mom[name] = bivariate_beta_integral(p, w, tol=tol)[0] / mass
    vx = mom["xx"] - mom["x"] ** 2
    vy = mom["yy"] - mom["y"] ** 2
    if vx <= 0 or vy <= 0:
        raise NumericalError("non-positive variance from quadrature", var_x=vx, var_y=vy, mass=mass)
    corr = (mom["xy"] - mom["x"] * mom["y"]) / math.sqrt(vx * vy)
    return mom["x"], mom["y"], corr


# ---------------------------------------------------------------------------
# FGM copula


def fgm_copula_logdensity(u, v, rho):
    """Log of the FGM copula density ``1 + rho (2u-1)(2v-1)``; -inf where it vanishes."""
    d = 1.0 + rho * (2.0 * u - 1.0) * (2.0 * v - 1.0)
    return math.log(d) if d > 0.0 else NEG_INF


def fgm_pair_logpdf(nu1, nu2, p: FgmParams):
    """Joint log-density of ``(nu1, nu2)`` with Beta(alpha, 1) margins joined by FGM."""
    if not (0.0 < nu1 < 1.0 and 0.0 < nu2 < 1.0):
        raise DomainError(f"FGM pair support is (0,1)^2, got ({nu1}, {nu2})")
    u = nu1**p.alpha1
    v = nu2**p.alpha2
    return (
        fgm_copula_logdensity(u, v, p.rho)
        + math.log(p.alpha1)
        + (p.alpha1 - 1.0) * math.log(nu1)
        + math.log(p.alpha2)
        + (p.alpha2 - 1.0) * math.log(nu2)
    )


def fgm_conditional_inverse(u, w, rho):
    """Solve ``w = v + rho v (1-v)(1-2u)`` for ``v`` in [0, 1].

    The left side is the FGM conditional CDF of ``v`` given ``u``.
    Works elementwise on arrays.
    """
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    beta = rho * (1.0 - 2.0 * u)
    small = np.abs(beta) < 1e-12
    safe = np.where(small, 1.0, beta)
    disc = np.maximum((1.0 + safe) ** 2 - 4.0 * safe * w, 0.0)
    # Root of beta v^2 - (1+beta) v + w = 0 in [0, 1], in the cancellation-free form.
    v = 2.0 * w / ((1.0 + safe) + np.sqrt(disc))
    v = np.where(small, w, np.clip(v, 0.0, 1.0))
    return float(v) if v.ndim == 0 else v


def fgm_uniform_sample(rho, rng, size=None):
    """Draw copula-scale pairs ``(u, v)`` from the FGM copula."""
    u = rng.random(size)
    w = rng.random(size)
    return u, fgm_conditional_inverse(u, w, rho)


def fgm_pair_sample(p: FgmParams, rng, size=None):
    """Draw ``(nu1, nu2)`` with Beta(alpha1, 1), Beta(alpha2, 1) margins."""
    u, v = fgm_uniform_sample(p.rho, rng, size)
    return np.power(u, 1.0 / p.alpha1), np.power(v, 1.0 / p.alpha2)


# ---------------------------------------------------------------------------
# Gaussian


def normal_cdf(x, mean=0.0, var=1.0):
    if np.any(np.asarray(var) <= 0):
        raise DomainError("variance must be positive")
    return special.ndtr((np.asarray(x, dtype=float) - mean) / np.sqrt(var))


def normal_inv_cdf(p, mean=0.0, var=1.0):
    """Gaussian quantile. ``p`` must lie strictly inside (0, 1)."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(np.asarray(var) <= 0):
        raise DomainError("variance must be positive")
    if np.any((p_arr <= 0.0) | (p_arr >= 1.0)):
        raise DomainError("quantile level must lie in the open interval (0, 1)")
    return mean + np.sqrt(var) * special.ndtri(p_arr)


def normal_logpdf(x, mean, var):
    return -0.5 * math.log(2.0 * math.pi * var) - 0.5 * (x - mean) ** 2 / var


def _upper_tail_exponential(a, rng, size):
    """Standard normal restricted to ``[a, inf)`` for large ``a`` (Robert 1995)."""
    out = np.empty(size)
    lam = 0.5 * (a + np.sqrt(a * a + 4.0))
    for i in range(size):
        while True:
            z = a + rng.standard_exponential() / lam
            if rng.random() <= math.exp(-0.5 * (z - lam) ** 2):
                out[i] = z
                break
    return out


def truncated_normal_sample(mean, var, bound, side, rng, diagnostics=None):
    """Draw from N(mean, var) restricted to a half-line.

    ``side="below"`` gives support ``(-inf, bound]``, ``side="above"`` gives
    ``[bound, inf)``. Arguments broadcast. When the retained mass underflows
    the draw switches to an exponential-proposal rejection sampler and
    ``diagnostics["tail_fallbacks"]`` is incremented.
    """
    if side not in ("below", "above"):
        raise DomainError(f"side must be 'below' or 'above', got {side!r}")
    mean, var, bound = np.broadcast_arrays(
        np.asarray(mean, dtype=float), np.asarray(var, dtype=float), np.asarray(bound, dtype=float)
    )
    if np.any(var <= 0):
        raise DomainError("variance must be positive")
    sd = np.sqrt(var)
    # Reflect "below" onto "above": x <= bound  <=>  -x >= -bound.
    sign = 1.0 if side == "above" else -1.0
    a = sign * (bound - mean) / sd
    shape = a.shape
    a = a.ravel()
    # 1 - random() lies in (0, 1], keeping ndtri finite.
    u = 1.0 - rng.random(a.size)
    mass = special.ndtr(-a)
    z = np.empty(a.size)
    ok = mass > _TAIL_MASS
    z[ok] = -special.ndtri(u[ok] * mass[ok])
    z[ok] = np.maximum(z[ok], a[ok])
    bad = np.flatnonzero(~ok)
    if bad.size:
        for i in bad:
            z[i] = _upper_tail_exponential(a[i], rng, 1)[0]
        if diagnostics is not None:
            diagnostics["tail_fallbacks"] = diagnostics.get("tail_fallbacks", 0) + int(bad.size)
    out = mean + sign * sd * z.reshape(shape)
    # Guard the boundary against rounding in the affine map.
    out = np.minimum(out, bound) if side == "below" else np.maximum(out, bound)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Rank correlation


def spearman_rho(pairs):
    """Spearman rank correlation with average ranks for ties.

    Returns ``None`` when either margin is constant (the statistic is undefined).
    """
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
        raise DomainError("spearman_rho needs at least 3 (x, y) pairs")
    rx = rankdata(arr[:, 0])
    ry = rankdata(arr[:, 1])
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0.0:
        return None
    return float(rx @ ry) / denom
