"""Levy-density families for mother and child jump processes.

All families live in one generalized-gamma parameterization

    rho(s) = a / Gamma(1 - sigma) * s^(-1 - sigma) * exp(-tau * s),

with the gamma family as ``sigma == 0`` and the sigma-stable family as
``tau == 0``.  Keeping a single parameterization matters because
exponential tilting ``rho(s) -> exp(-u s) rho(s)`` (the operation every
posterior update applies) maps ``(a, sigma, tau)`` to ``(a, sigma, tau + u)``:
the type is closed under tilting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ._backend import invert_tail_mass
from ._pykernels import tail_mass_raw

__all__ = ["LevyParams", "psi", "kappa", "log_kappa", "log_kappa_ratio",
           "tail_mass", "tail_mass_inverse", "tilt"]


@dataclass(frozen=True)
class LevyParams:
    """Parameters of a generalized-gamma Levy density.

    ``a > 0`` is the total-mass parameter, ``sigma`` in ``[0, 1)`` the
    stability index and ``tau >= 0`` the exponential tilt.  ``sigma`` and
    ``tau`` cannot both vanish (the density would not be normalizable).
    """

    a: float
    sigma: float = 0.0
    tau: float = 1.0

    def __post_init__(self):
        if not (self.a > 0.0 and math.isfinite(self.a)):
            raise ValueError(f"total mass a must be positive, got {self.a}")
        if not (0.0 <= self.sigma < 1.0):
            raise ValueError(f"sigma must lie in [0, 1), got {self.sigma}")
        if not (self.tau >= 0.0 and math.isfinite(self.tau)):
            raise ValueError(f"tau must be nonnegative, got {self.tau}")
        if self.sigma == 0.0 and self.tau == 0.0:
            raise ValueError("sigma = tau = 0 violates the normalization "
                             "conditions (jump measure not integrable)")

    @property
    def family(self) -> str:
        if self.sigma == 0.0:
            return "gamma"
        if self.tau == 0.0:
            return "stable"
        return "generalized_gamma"

    @classmethod
    def gamma(cls, a: float, tau: float = 1.0) -> "LevyParams":
        if tau <= 0.0:
            raise ValueError("gamma family requires tau > 0")
        return cls(a=a, sigma=0.0, tau=tau)

    @classmethod
    def generalized_gamma(cls, a: float, sigma: float, tau: float) -> "LevyParams":
        return cls(a=a, sigma=sigma, tau=tau)

    @classmethod
    def stable(cls, a: float, sigma: float) -> "LevyParams":
        if sigma <= 0.0:
            raise ValueError("stable family requires sigma > 0")
        return cls(a=a, sigma=sigma, tau=0.0)

    def density(self, s):
        """Pointwise Levy density rho(s); used by quadrature oracles."""
        s = np.asarray(s, dtype=float)
        lognorm = math.log(self.a) - gammaln(1.0 - self.sigma)
        return np.exp(lognorm - (1.0 + self.sigma) * np.log(s) - self.tau * s)


def psi(params: LevyParams, u) -> float:
    """Laplace exponent ``psi(u) = int (1 - exp(-u s)) rho(s) ds``.

    Strictly increasing with ``psi(0) = 0``.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0):
        raise ValueError("psi requires u >= 0")
    a, sig, tau = params.a, params.sigma, params.tau
    if sig == 0.0:
        out = a * np.log1p(u / tau)
    elif tau == 0.0:
        out = (a / sig) * u ** sig
    else:
        # (a/sigma) ((u+tau)^sigma - tau^sigma), cancellation-free at small u
        out = (a / sig) * tau ** sig * np.expm1(sig * np.log1p(u / tau))
    return out if out.ndim else float(out)


def log_kappa(params: LevyParams, u, n) -> float:
    """log of ``kappa(u, n) = int exp(-u s) s^n rho(s) ds``.

    Closed form ``a / Gamma(1 - sigma) * Gamma(n - sigma) * (u + tau)^(sigma - n)``;
    requires ``u + tau > 0``.
    """
    u = np.asarray(u, dtype=float)
    n = np.asarray(n)
    if np.any(u < 0.0):
        raise ValueError("kappa requires u >= 0")
    if np.any(n < 1) or not np.issubdtype(n.dtype, np.integer):
        raise ValueError("kappa requires integer n >= 1")
    a, sig, tau = params.a, params.sigma, params.tau
    if np.any(u + tau <= 0.0):
        raise ValueError("kappa diverges at u = 0 for the stable family")
    out = (math.log(a) - gammaln(1.0 - sig) + gammaln(n - sig)
           + (sig - n) * np.log(u + tau))
    return out if out.ndim else float(out)


def kappa(params: LevyParams, u, n) -> float:
    """Tilted moment ``kappa(u, n)``; see :func:`log_kappa`."""
    out = np.exp(log_kappa(params, u, n))
    return out if isinstance(out, np.ndarray) and out.ndim else float(out)


def log_kappa_ratio(params: LevyParams, u, n) -> float:
    """log of ``kappa(u, n + 1) / kappa(u, n)`` = log(n - sigma) - log(u + tau).

    This ratio is the seat-at-occupied-table weight in the predictive
    process, so it gets its own cancellation-free implementation.
    """
    u = np.asarray(u, dtype=float)
    n = np.asarray(n, dtype=float)
    if np.any(u < 0.0) or np.any(n < 1):
        raise ValueError("ratio requires u >= 0 and n >= 1")
    if np.any(u + params.tau <= 0.0):
        raise ValueError("ratio diverges at u = 0 for the stable family")
    out = np.log(n - params.sigma) - np.log(u + params.tau)
    return out if out.ndim else float(out)


def tail_mass(params: LevyParams, x) -> float:
    """Jump tail mass ``int_x^inf rho(s) ds`` for ``x > 0``.

    Strictly decreasing, diverging as ``x -> 0`` (infinite activity).
    Gamma family reduces to ``a * E1(tau x)``; the sigma-stable tail is a
    power law; the full generalized-gamma case needs the upper incomplete
    gamma of negative first argument (recurrence for small argument, Lentz
    continued fraction for large).
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise ValueError("tail_mass requires x > 0")
    out = tail_mass_raw(x, params.a, params.sigma, params.tau)
    return out if out.ndim else float(out)


def tail_mass_inverse(params: LevyParams, eta, scale: float = 1.0):
    """Solve ``scale * tail_mass(x) = eta`` for each entry of ``eta``.

    ``eta`` must be positive.  Jumps come out in the order of ``eta``
    (ascending eta means descending jumps).  Delegates to the selected
    compute backend (bisection in log space, 64 fixed iterations).
    """
    eta = np.ascontiguousarray(eta, dtype=float)
    if eta.size and (np.any(eta <= 0.0) or not np.all(np.isfinite(eta))):
        raise ValueError("eta must be positive and finite")
    return invert_tail_mass(eta, params.a * scale, params.sigma, params.tau)


def tilt(params: LevyParams, u: float) -> LevyParams:
    """Exponential tilting ``rho(s) -> exp(-u s) rho(s)``; closed in the family."""
    if u < 0.0:
        raise ValueError("tilt requires u >= 0")
    if u == 0.0:
        return params
    return LevyParams(a=params.a, sigma=params.sigma, tau=params.tau + u)
