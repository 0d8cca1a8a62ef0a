"""Prior moments and the across-group correlation of the mixing measures.

The correlation of ``p_l(A)`` across groups factorizes into three
dependence integrals over the auxiliary tilt variable and a ratio of
kernel-marginal moments over the set A.  The integrals are evaluated by
adaptive quadrature after substituting ``u = e^w - 1``: for gamma-type
child processes the raw integrands decay only like ``1 / (u log(u)^c)``,
which no compactification of u itself can resolve at tight tolerances,
while in w the tails are polynomial or faster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import NumericError
from .kernel import KernelModel, measure_m, measure_m2
from .levy import LevyParams, log_kappa, psi

__all__ = ["DependenceIntegrals", "dependence_integrals", "prior_correlation",
           "prior_expectation", "correlation_grid", "different_rooms_integral",
           "different_tables_different_rooms_integral", "nggp_i1_closed_form"]

_EPSABS = 1e-12
_EPSREL = 1e-9
_ABS_TOL = 1e-10
_REL_TOL = 1e-8


@dataclass(frozen=True)
class DependenceIntegrals:
    """Pairwise clustering probabilities driving the prior correlation.

    i1: two observations from different groups share a mother atom.
    i12: two same-group observations share a mother atom but not a child atom.
    i11: two same-group observations share a child atom.
    """

    i1: float
    i12: float
    i11: float


_LOG_DIRECT = 300.0  # |log u| below this: evaluate u directly


class _TiltPoint:
    """One integration abscissa u, parameterized by log u, overflow-safe.

    The dependence integrands carry mass at u far outside the range of
    doubles in either direction (heavy mother tails push relevant u below
    e^-2000; QUADPACK's infinite-interval transform probes u above e^700),
    so every downstream quantity -- log(u + tau), the Laplace exponent and
    its log, log tilted moments -- must be derivable from log u alone.
    ``u`` is materialized only when representable.
    """

    def __init__(self, log_u: float):
        self.log_u = log_u
        self.u = math.exp(log_u) if abs(log_u) <= _LOG_DIRECT else None

    @classmethod
    def from_w(cls, w: float) -> "_TiltPoint":
        # u = e^w - 1; for w > 300 this is e^w to full precision
        if w > _LOG_DIRECT:
            return cls(w)
        return cls(math.log(math.expm1(w)))

    def log_u_plus(self, tau: float) -> float:
        """log(u + tau)."""
        if tau == 0.0:
            return self.log_u
        if self.u is not None:
            return math.log(self.u + tau)
        if self.log_u > 0.0:  # u huge: log(u) + tau/u correction vanishes
            return self.log_u
        return math.log(tau)  # u below e^-300: swamped by tau


def _log_kappa_at(params: LevyParams, log_u_plus_tau: float, n: int) -> float:
    return (math.log(params.a) - math.lgamma(1.0 - params.sigma)
            + math.lgamma(n - params.sigma)
            + (params.sigma - n) * log_u_plus_tau)


def _psi_at(params: LevyParams, pt: _TiltPoint):
    """(value or inf/0 limit, log value) of the Laplace exponent at pt."""
    a, sig, tau = params.a, params.sigma, params.tau
    if pt.u is not None:
        val = psi(params, pt.u)
        return val, (math.log(val) if val > 0.0 else -math.inf)
    if tau == 0.0:
        log_val = math.log(a / sig) + sig * pt.log_u
    elif pt.log_u > 0.0:  # u huge
        if sig == 0.0:
            val = a * (pt.log_u_plus(tau) - math.log(tau))
            return val, math.log(val)
        corr = sig * (math.log(tau) - pt.log_u)
        log_val = (math.log(a / sig) + sig * pt.log_u
                   + math.log1p(-math.exp(corr)))
    else:  # u below e^-300: psi(u) ~ kappa(0, 1) u
        log_val = (math.log(a) + (sig - 1.0) * math.log(tau) + pt.log_u)
    val = math.exp(log_val) if log_val < 700.0 else math.inf
    return val, log_val


def _psi0_of(params0: LevyParams, v_val: float, v_log: float) -> float:
    """Mother Laplace exponent evaluated at v (value + log supplied)."""
    a0, sig0, tau0 = params0.a, params0.sigma, params0.tau
    if tau0 == 0.0:
        # exact power form; v_log keeps sub-underflow v alive, which matters
        # for small stability indices
        expo = sig0 * v_log
        if expo > 700.0:
            return math.inf
        return (a0 / sig0) * math.exp(expo)
    if not math.isfinite(v_val):
        return math.inf
    if sig0 == 0.0:
        return a0 * math.log1p(v_val / tau0)
    return psi(params0, v_val)


def _integrate_w(f_log, p_zero: float = 1.0):
    """Integrate exp(f_log(pt)) du over u in (0, inf) via w = log(1 + u).

    The substitution turns the slow logarithmic tails of gamma-type
    children into polynomial ones that the adaptive rule's extrapolation
    handles.  ``p_zero`` is the known power of the integrand at u -> 0
    (stable-type factors make it approach -1); the head piece is flattened
    by the matching power substitution w = z^k before integration.
    """

    if p_zero <= -1.0:
        raise NumericError(f"integrand not integrable at zero (power {p_zero})")

    def g_tail(w):
        if w <= 0.0:
            return 0.0
        val = f_log(_TiltPoint.from_w(w)) + w
        return math.exp(val) if -745.0 < val < 709.0 else 0.0

    def g_head(y):
        # w = e^-y maps the endpoint power w^p into exp(-(1 + p) y): smooth
        # exponential decay for any integrable power, with the abscissa kept
        # in log form so sub-underflow u still contributes
        w = math.exp(-y) if y < 745.0 else 0.0
        pt = _TiltPoint(-y) if y >= _LOG_DIRECT else _TiltPoint.from_w(w)
        val = f_log(pt) + w - y
        return math.exp(val) if -745.0 < val < 709.0 else 0.0

    v1, e1, *_ = quad(g_head, 0.0, np.inf, epsabs=0.5 * _EPSABS,
                      epsrel=_EPSREL, limit=500, full_output=1)
    v2, e2, *_ = quad(g_tail, 1.0, np.inf, epsabs=0.5 * _EPSABS,
                      epsrel=_EPSREL, limit=500, full_output=1)
    val, err = v1 + v2, e1 + e2
    if err > max(_ABS_TOL, _REL_TOL * abs(val)):
        raise NumericError(f"dependence-integral quadrature did not converge: "
                           f"estimate {val}, error bound {err}")
    return float(val)


def _zero_power(rho: LevyParams, rho0: LevyParams, n_child, n_mother) -> float:
    """Power of the pair integrand at u -> 0 (from the stable-type factors)."""
    p = 1.0
    if rho.tau == 0.0:
        p += sum(rho.sigma - n for n in n_child)
    rate = rho.sigma if rho.tau == 0.0 else 1.0  # psi(u) ~ u^rate at zero
    if rho0.tau == 0.0:
        p += rate * sum(rho0.sigma - m for m in n_mother)
    return p


def _zero_power_mother(rho0: LevyParams, n_mother) -> float:
    p = 1.0
    if rho0.tau == 0.0:
        p += sum(rho0.sigma - m for m in n_mother)
    return p


def _limit_value(pt: _TiltPoint) -> float:
    if pt.u is not None:
        return pt.u
    return math.inf if pt.log_u > 0.0 else 0.0


def _i1_integrand(rho0: LevyParams):
    def f(pt: _TiltPoint):
        return (pt.log_u + _log_kappa_at(rho0, pt.log_u_plus(rho0.tau), 2)
                - _psi0_of(rho0, _limit_value(pt), pt.log_u))
    return f


def _pair_integrand(rho: LevyParams, rho0: LevyParams, n_child, n_mother):
    """log of u * kappa(u,.)... * kappa0(psi(u), n) * exp(-psi0(psi(u))).

    ``n_child`` is the list of child tilted-moment orders (their logs sum),
    ``n_mother`` the mother order applied at v = psi(u).
    """

    def f(pt: _TiltPoint):
        lup = pt.log_u_plus(rho.tau)
        out = pt.log_u
        for n in n_child:
            out += _log_kappa_at(rho, lup, n)
        v_val, v_log = _psi_at(rho, pt)
        lvp0 = (np.logaddexp(v_log, math.log(rho0.tau))
                if rho0.tau > 0.0 else v_log)
        for n in n_mother:
            out += _log_kappa_at(rho0, float(lvp0), n)
        psi0 = _psi0_of(rho0, v_val, v_log)
        if math.isinf(psi0):
            return -math.inf
        return out - psi0

    return f


def dependence_integrals(rho: LevyParams, rho0: LevyParams) -> DependenceIntegrals:
    """The three dependence integrals for a child/mother Levy pair.

    Closed forms are used where they exist (gamma mother for i1; the
    sigma-stable pair for all three); everything else is quadrature.
    """
    if rho.tau == 0.0 and rho0.tau == 0.0:
        return DependenceIntegrals(i1=1.0 - rho0.sigma,
                                   i12=rho.sigma * (1.0 - rho0.sigma),
                                   i11=1.0 - rho.sigma)

    if rho0.sigma == 0.0:
        i1 = 1.0 / (1.0 + rho0.a)
    else:
        i1 = _integrate_w(_i1_integrand(rho0),
                          _zero_power_mother(rho0, [2]))

    i12 = _integrate_w(_pair_integrand(rho, rho0, [1, 1], [2]),
                       _zero_power(rho, rho0, [1, 1], [2]))
    i11 = _integrate_w(_pair_integrand(rho, rho0, [2], [1]),
                       _zero_power(rho, rho0, [2], [1]))
    return DependenceIntegrals(i1=i1, i12=i12, i11=i11)


def different_rooms_integral(rho0: LevyParams) -> float:
    """Probability that two tables from different groups sit in different
    rooms; complements i1 to one (internal consistency identity)."""

    def f(pt: _TiltPoint):
        return (pt.log_u + 2.0 * _log_kappa_at(rho0, pt.log_u_plus(rho0.tau), 1)
                - _psi0_of(rho0, _limit_value(pt), pt.log_u))

    return _integrate_w(f, _zero_power_mother(rho0, [1, 1]))


def different_tables_different_rooms_integral(rho: LevyParams,
                                              rho0: LevyParams) -> float:
    """Probability that two same-group observations take different tables in
    different rooms; completes i12 + i11 to one."""
    return _integrate_w(_pair_integrand(rho, rho0, [1, 1], [1, 1]),
                        _zero_power(rho, rho0, [1, 1], [1, 1]))


def prior_expectation(model: KernelModel, A) -> float:
    """E[p_l(A)] = m(A), whatever the jump parts are."""
    return measure_m(model, A)


def _m_ratio(model: KernelModel, A) -> float:
    m1 = measure_m(model, A)
    if not 0.0 < m1 < 1.0:
        raise ValueError(f"correlation needs m(A) strictly inside (0, 1), "
                         f"got {m1}; enlarge or shrink A")
    m2 = measure_m2(model, A)
    denom = m2 - m1 * m1
    if denom <= 1e-14 * m1:
        raise NumericError("perfectly flat base: m(A, A) = m(A)^2, "
                           "correlation ratio undefined")
    return (m1 - m1 * m1) / denom


def prior_correlation(rho: LevyParams, rho0: LevyParams,
                      model: KernelModel, A) -> float:
    """Across-group correlation of p_l(A) and p_l'(A); always in (0, 1]."""
    dep = dependence_integrals(rho, rho0)
    ratio = _m_ratio(model, A)
    cor = 1.0 / (dep.i12 / dep.i1 + ratio * dep.i11 / dep.i1)
    return float(cor)


def correlation_grid(rho_grid, rho0_grid, model: KernelModel, A):
    """Correlation for every (child, mother) pair of the two grids.

    Returns a list of row dicts (child and mother parameters plus the
    correlation); the kernel-moment ratio is shared across cells.
    """
    ratio = _m_ratio(model, A)
    rows = []
    for rho in rho_grid:
        for rho0 in rho0_grid:
            dep = dependence_integrals(rho, rho0)
            cor = 1.0 / (dep.i12 / dep.i1 + ratio * dep.i11 / dep.i1)
            rows.append({
                "rho_a": rho.a, "rho_sigma": rho.sigma, "rho_tau": rho.tau,
                "rho0_a": rho0.a, "rho0_sigma": rho0.sigma, "rho0_tau": rho0.tau,
                "correlation": float(cor),
            })
    return rows


def nggp_i1_closed_form(rho0: LevyParams) -> float:
    """Generalized-gamma-mother closed form for i1.

    Reads the scale constant as ``beta0 = (a0 / sigma0) * tau0^sigma0``;
    with that reading the expression matches the quadrature path (which
    stays authoritative).  Uses arbitrary-precision arithmetic because the
    upper incomplete gamma carries a negative, possibly large first
    argument and an ``e^beta0`` factor that can overflow floats.
    """
    if rho0.sigma == 0.0 or rho0.tau == 0.0:
        raise ValueError("closed form needs sigma0 > 0 and tau0 > 0")
    import mpmath as mp

    with mp.workdps(50):
        a0, s0, t0 = map(mp.mpf, (rho0.a, rho0.sigma, rho0.tau))
        beta0 = a0 / s0 * t0 ** s0
        val = (1 - s0) * (1 - beta0 ** (1 / s0) * mp.exp(beta0)
                          * mp.gammainc(1 - 1 / s0, beta0, mp.inf))
        return float(val)
