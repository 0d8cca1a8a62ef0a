"""Gaussian observation kernel and base measure for cluster centers.

Two modes:

* ``fixed_variance`` -- centers are scalars ``mu_j ~ N(mu0, sigma0_sq)``
  and the kernel is ``N(. | mu_j, kernel_var)``.  Marginals of exchangeable
  points are exact compound-symmetry Gaussians (rank-one covariance).
* ``mean_variance`` -- centers are pairs ``(mu_j, sigma_j^2)`` with
  ``mu_j ~ N(mu0, sigma0_sq)`` independent of ``sigma_j^2 ~ IG(alpha0, beta0)``
  and kernel ``N(. | mu_j, sigma_j^2)``.  The mean integrates analytically;
  the variance is integrated by fixed Gauss-Legendre quadrature in
  ``log sigma^2`` over an inverse-gamma quantile range, which keeps the
  marginal cheap enough to sit inside the room-allocation sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.special import gammaln, logsumexp, ndtr
from scipy.stats import invgamma

from .errors import NumericError

__all__ = ["KernelModel", "MotherAtomLocation", "MotherAtom",
           "log_marginal", "log_predictive", "measure_m", "measure_m2",
           "sample_tau_fullcond"]

_LOG_2PI = math.log(2.0 * math.pi)
_QUANTILE_EPS = 1e-8
_SUPPORT_SDS = 9.0


@dataclass(frozen=True)
class MotherAtomLocation:
    """A cluster center: mean, plus its own variance in mean_variance mode."""

    mu: float
    sigma_sq: Optional[float] = None

    def __post_init__(self):
        if self.sigma_sq is not None and not self.sigma_sq > 0.0:
            raise ValueError("sigma_sq must be positive when present")


@dataclass(frozen=True)
class MotherAtom:
    """A mother-process point: jump (cluster mass scale) and location."""

    gamma: float
    location: MotherAtomLocation


@dataclass(frozen=True)
class KernelModel:
    mode: str
    mu0: float
    sigma0_sq: float
    kernel_var: Optional[float] = None
    alpha0: Optional[float] = None
    beta0: Optional[float] = None
    quad_points: int = 200

    def __post_init__(self):
        if self.mode not in ("fixed_variance", "mean_variance"):
            raise ValueError(f"unknown kernel mode {self.mode!r}")
        if not self.sigma0_sq > 0.0:
            raise ValueError("sigma0_sq must be positive")
        if self.mode == "fixed_variance":
            if self.kernel_var is None or not self.kernel_var > 0.0:
                raise ValueError("fixed_variance mode requires kernel_var > 0")
        else:
            if self.alpha0 is None or not self.alpha0 > 1.0:
                raise ValueError("mean_variance mode requires alpha0 > 1 "
                                 "(finite prior mean of the kernel variance)")
            if self.beta0 is None or not self.beta0 > 0.0:
                raise ValueError("mean_variance mode requires beta0 > 0")

    @classmethod
    def fixed_variance(cls, mu0: float, sigma0_sq: float, kernel_var: float,
                       quad_points: int = 200) -> "KernelModel":
        return cls("fixed_variance", mu0, sigma0_sq, kernel_var=kernel_var,
                   quad_points=quad_points)

    @classmethod
    def mean_variance(cls, mu0: float, sigma0_sq: float, alpha0: float,
                      beta0: float, quad_points: int = 200) -> "KernelModel":
        return cls("mean_variance", mu0, sigma0_sq, alpha0=alpha0, beta0=beta0,
                   quad_points=quad_points)

    @cached_property
    def _var_nodes(self):
        """Quadrature nodes/log-weights for integrating the kernel variance.

        Gauss-Legendre in t = log sigma^2 over the IG quantile range
        [1e-8, 1 - 1e-8]; log-weight absorbs the IG density and the
        Jacobian e^t.
        """
        if self.mode != "mean_variance":
            raise AssertionError("variance nodes only exist in mean_variance mode")
        lo = invgamma.ppf(_QUANTILE_EPS, self.alpha0, scale=self.beta0)
        hi = invgamma.ppf(1.0 - _QUANTILE_EPS, self.alpha0, scale=self.beta0)
        x, w = np.polynomial.legendre.leggauss(self.quad_points)
        tlo, thi = math.log(lo), math.log(hi)
        t = 0.5 * (thi - tlo) * x + 0.5 * (thi + tlo)
        v = np.exp(t)
        log_ig = (self.alpha0 * math.log(self.beta0) - gammaln(self.alpha0)
                  - (self.alpha0 + 1.0) * t - self.beta0 / v)
        logw = np.log(0.5 * (thi - tlo) * w) + log_ig + t
        return v, logw

    def max_kernel_sd(self) -> float:
        """Largest kernel scale the quadrature grid considers (support bound)."""
        if self.mode == "fixed_variance":
            return math.sqrt(self.kernel_var)
        return math.sqrt(float(self._var_nodes[0][-1]))


def _cs_logpdf(p, s1, s2, v, s, mu0):
    """Compound-symmetry Gaussian log density from sufficient statistics.

    Density of p exchangeable points with mean mu0, covariance v*I + s*J,
    evaluated from (count, sum, sum of squares); broadcasts over all inputs.
    """
    q = s2 - 2.0 * mu0 * s1 + p * mu0 * mu0
    l = s1 - p * mu0
    vp = v + p * s
    return (-0.5 * p * _LOG_2PI
            - 0.5 * ((p - 1.0) * np.log(v) + np.log(vp))
            - 0.5 * (q / v - s * l * l / (v * vp)))


def log_marginal_stats(model: KernelModel, p, s1, s2):
    """log marginal of a point set given its (count, sum, sum-of-squares).

    Vectorized over leading dimensions; ``p = 0`` gives ~0 (log of total
    quadrature weight) so empty conditioning sets need no special case.
    """
    p = np.asarray(p, dtype=float)
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    if model.mode == "fixed_variance":
        out = _cs_logpdf(p, s1, s2, model.kernel_var, model.sigma0_sq, model.mu0)
        return out if out.ndim else float(out)
    v, logw = model._var_nodes
    ll = _cs_logpdf(p[..., None], s1[..., None], s2[..., None], v,
                    model.sigma0_sq, model.mu0)
    out = logsumexp(ll + logw, axis=-1)
    return out if np.ndim(out) else float(out)


def log_marginal(model: KernelModel, points) -> float:
    """log of the joint marginal density m(x_1, ..., x_p)."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise ValueError("log_marginal requires at least one point")
    return log_marginal_stats(model, pts.size, pts.sum(), (pts * pts).sum())


def log_predictive(model: KernelModel, x: float, cluster_points) -> float:
    """log m(x | cluster members) = log m(members + x) - log m(members)."""
    pts = np.asarray(cluster_points, dtype=float)
    p, s1, s2 = pts.size, pts.sum(), (pts * pts).sum()
    return (log_marginal_stats(model, p + 1, s1 + x, s2 + x * x)
            - log_marginal_stats(model, p, s1, s2))


def _interval(A):
    lo, hi = float(A[0]), float(A[1])
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError(f"interval must be finite with lo < hi, got {A}")
    return lo, hi


def measure_m(model: KernelModel, A) -> float:
    """Marginal probability m(A) of one point landing in the interval A."""
    lo, hi = _interval(A)
    if model.mode == "fixed_variance":
        sd = math.sqrt(model.sigma0_sq + model.kernel_var)
        return float(ndtr((hi - model.mu0) / sd) - ndtr((lo - model.mu0) / sd))
    v, logw = model._var_nodes
    sd = np.sqrt(model.sigma0_sq + v)
    mass = ndtr((hi - model.mu0) / sd) - ndtr((lo - model.mu0) / sd)
    return float(np.exp(logsumexp(logw, b=mass)))


def measure_m2(model: KernelModel, A) -> float:
    """Two-point marginal m(A, A): both of two same-center points in A.

    Conditional on the center the two coordinates are independent, so the
    inner integrals reduce to squared Gaussian-CDF differences; the center
    (and, in mean_variance mode, the kernel variance) is integrated last by
    Gauss-Legendre.
    """
    lo, hi = _interval(A)
    mu0, s0 = model.mu0, math.sqrt(model.sigma0_sq)
    sd_hi = model.max_kernel_sd()
    glo = max(lo - _SUPPORT_SDS * sd_hi, mu0 - _SUPPORT_SDS * s0)
    ghi = min(hi + _SUPPORT_SDS * sd_hi, mu0 + _SUPPORT_SDS * s0)
    if glo >= ghi:
        return 0.0
    x, w = np.polynomial.legendre.leggauss(model.quad_points)
    mu = 0.5 * (ghi - glo) * x + 0.5 * (ghi + glo)
    wmu = 0.5 * (ghi - glo) * w
    dens = np.exp(-0.5 * ((mu - mu0) / s0) ** 2) / (s0 * math.sqrt(2 * math.pi))
    if model.mode == "fixed_variance":
        sk = math.sqrt(model.kernel_var)
        q = ndtr((hi - mu) / sk) - ndtr((lo - mu) / sk)
        out = float(np.sum(wmu * dens * q * q))
    else:
        v, logw = model._var_nodes
        sk = np.sqrt(v)[:, None]
        q = ndtr((hi - mu[None, :]) / sk) - ndtr((lo - mu[None, :]) / sk)
        inner = (q * q) @ (wmu * dens)
        out = float(np.exp(logsumexp(logw, b=np.maximum(inner, 0.0))))
    _check_moment_ordering(measure_m(model, A), out)
    return out


def _check_moment_ordering(m1: float, m2: float, slack: float = 1e-7):
    if not (m1 * m1 - slack <= m2 <= m1 + slack):
        raise NumericError(f"moment ordering m(A)^2 <= m(A,A) <= m(A) violated: "
                           f"m(A)={m1}, m(A,A)={m2}")


def kernel_logpdf(model: KernelModel, loc: MotherAtomLocation, x):
    var = model.kernel_var if model.mode == "fixed_variance" else loc.sigma_sq
    x = np.asarray(x, dtype=float)
    return -0.5 * (_LOG_2PI + math.log(var)) - 0.5 * (x - loc.mu) ** 2 / var


def sample_kernel(model: KernelModel, loc: MotherAtomLocation, size: int, rng) -> np.ndarray:
    var = model.kernel_var if model.mode == "fixed_variance" else loc.sigma_sq
    return rng.normal(loc.mu, math.sqrt(var), size=size)


def sample_location_prior(model: KernelModel, rng) -> MotherAtomLocation:
    """One draw of a cluster center from the base measure."""
    mu = rng.normal(model.mu0, math.sqrt(model.sigma0_sq))
    if model.mode == "fixed_variance":
        return MotherAtomLocation(mu)
    sig2 = 1.0 / rng.gamma(model.alpha0, 1.0 / model.beta0)
    return MotherAtomLocation(mu, sig2)


def sample_tau_fullcond(model: KernelModel, cluster_points,
                        current: Optional[MotherAtomLocation], rng) -> MotherAtomLocation:
    """Resample a cluster center given its member values.

    fixed_variance: exact draw from the conjugate normal full conditional.
    mean_variance: one two-block Gibbs scan, mu | sigma^2 then sigma^2 | mu
    (both conjugate); ``current`` supplies the incoming sigma^2, or the
    prior is used when the room is brand new.
    """
    pts = np.asarray(cluster_points, dtype=float)
    if pts.size == 0:
        raise ValueError("sample_tau_fullcond requires a nonempty cluster")
    p, s1 = pts.size, float(pts.sum())
    if model.mode == "fixed_variance":
        prec = 1.0 / model.sigma0_sq + p / model.kernel_var
        mean = (model.mu0 / model.sigma0_sq + s1 / model.kernel_var) / prec
        return MotherAtomLocation(rng.normal(mean, math.sqrt(1.0 / prec)))
    if current is not None and current.sigma_sq is not None:
        sig2 = current.sigma_sq
    else:
        sig2 = 1.0 / rng.gamma(model.alpha0, 1.0 / model.beta0)
    prec = 1.0 / model.sigma0_sq + p / sig2
    mean = (model.mu0 / model.sigma0_sq + s1 / sig2) / prec
    mu = rng.normal(mean, math.sqrt(1.0 / prec))
    rate = model.beta0 + 0.5 * float(np.sum((pts - mu) ** 2))
    sig2 = 1.0 / rng.gamma(model.alpha0 + 0.5 * p, 1.0 / rate)
    return MotherAtomLocation(mu, sig2)
