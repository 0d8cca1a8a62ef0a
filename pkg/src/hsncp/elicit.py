"""Data-driven hyperparameter elicitation.

Pipeline: center the base measure on the data; find the within-cluster
distance scale d* as the first local minimum of a kernel density estimate
of all pairwise distances; solve a two-condition half-t system for the
center-spread prior (alpha0, beta0); fix the noise-variance prior scale so
the prior cluster variance matches the empirical variance; and, when a
prior correlation target is given, tune a Levy total mass by root finding
on the exact correlation.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln
from scipy.stats import t as student_t

from .errors import ElicitationError
from .kernel import KernelModel
from .levy import LevyParams
from .moments import prior_correlation

__all__ = ["ElicitationResult", "DStarResult", "center_base", "find_d_star",
           "solve_half_t", "solve_beta_f", "match_correlation", "elicit_all"]

ALPHA_F = 1.5
_KDE_GRID = 2048
_ALPHA0_MAX = 100.0


@dataclass(frozen=True)
class DStarResult:
    d_star: float
    unimodal: bool  # no local minimum found; value is an inflection point


@dataclass(frozen=True)
class ElicitationResult:
    mu0: float
    sigma0_sq: float
    d_star: float
    alpha0: float
    beta0: float
    beta_f: float
    alpha_f: float
    mean_within_distance: float
    lam: float
    unimodal_distances: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _flatten(data) -> np.ndarray:
    if isinstance(data, np.ndarray) and data.ndim == 1:
        return np.asarray(data, dtype=float)
    return np.concatenate([np.asarray(g, dtype=float) for g in data])


def center_base(data):
    """Base-measure centering: grand mean, and spread set so the farthest
    observation sits two prior standard deviations out."""
    y = _flatten(data)
    if y.size < 2:
        raise ElicitationError("centering needs at least two observations")
    mu0 = float(y.mean())
    sigma0 = float(np.max(np.abs(y - mu0))) / 2.0
    if sigma0 <= 0.0:
        raise ElicitationError("constant data: base spread would be zero")
    return mu0, sigma0 * sigma0


def _pairwise_distances(y: np.ndarray) -> np.ndarray:
    n = y.size
    if n > 6000:  # chunk to bound the n x n buffer
        out = []
        for i in range(0, n, 2048):
            blk = np.abs(y[i:i + 2048, None] - y[None, :])
            iu = np.triu_indices(blk.shape[0], k=1 + i, m=n)
            out.append(blk[iu])
        return np.concatenate(out)
    d = np.abs(y[:, None] - y[None, :])
    return d[np.triu_indices(n, k=1)]


def _silverman_bandwidth(d: np.ndarray) -> float:
    sd = float(np.std(d))
    iqr = float(np.subtract(*np.percentile(d, [75, 25])))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    if spread <= 0.0:
        raise ElicitationError("degenerate pairwise distances")
    return 0.9 * spread * d.size ** (-0.2)


def find_d_star(data, bandwidth_rule: str = "silverman") -> DStarResult:
    """Within-cluster distance scale from the pairwise-distance KDE.

    Gaussian KDE (binned, 2048-point grid on [0, max distance], Silverman
    bandwidth), scanned upward for the first strict local minimum.  With no
    local minimum (unimodal distances) the first inflection after the mode
    is returned, flagged.
    """
    if bandwidth_rule != "silverman":
        raise ElicitationError(f"unknown bandwidth rule {bandwidth_rule!r}")
    y = _flatten(data)
    if y.size < 3:
        raise ElicitationError("d* needs at least three observations")
    d = _pairwise_distances(y)
    if np.unique(d).size < 2:
        raise ElicitationError("d* needs at least two distinct distances")
    bw = _silverman_bandwidth(d)
    grid = np.linspace(0.0, float(d.max()), _KDE_GRID)
    step = grid[1] - grid[0]
    hist, _ = np.histogram(d, bins=_KDE_GRID,
                           range=(-0.5 * step, grid[-1] + 0.5 * step))
    half = int(math.ceil(6.0 * bw / step))
    offs = np.arange(-half, half + 1) * step
    kern = np.exp(-0.5 * (offs / bw) ** 2)
    dens = np.convolve(hist, kern, mode="same")
    for i in range(1, _KDE_GRID - 1):
        if dens[i] < dens[i - 1] and dens[i] < dens[i + 1]:
            return DStarResult(float(grid[i]), unimodal=False)
    mode = int(np.argmax(dens))
    d2 = np.diff(dens, 2)
    for i in range(max(mode, 1), _KDE_GRID - 2):
        if d2[i - 1] < 0.0 <= d2[i]:
            return DStarResult(float(grid[i]), unimodal=True)
    return DStarResult(float(grid[min(mode + half, _KDE_GRID - 1)]), unimodal=True)


def _half_t_mean_factor(nu: float) -> float:
    # mean of a scale-1 half-t with nu > 1 degrees of freedom
    return (2.0 * math.sqrt(nu) / (math.sqrt(math.pi) * (nu - 1.0))
            * math.exp(gammaln(0.5 * (nu + 1.0)) - gammaln(0.5 * nu)))


def solve_half_t(d_star: float, mean_within: float, lam: float = 0.7):
    """Center-spread prior (alpha0, beta0) from two half-t conditions.

    The gap between two same-room centers, scaled by sqrt(2 beta0/alpha0),
    is half-t with 2 alpha0 degrees of freedom.  Condition one puts 99% of
    that gap below d*; condition two matches its mean to lam times the
    observed mean within-d* distance.  The scale is eliminated through the
    first condition and alpha0 found by bracketed root finding.
    """
    if not (d_star > 0.0 and mean_within > 0.0):
        raise ElicitationError("d* and the within-cluster mean distance "
                               "must be positive")
    if not 0.0 < lam < 1.0:
        raise ElicitationError("lambda must lie in (0, 1)")

    def gap_mean(alpha0: float) -> float:
        nu = 2.0 * alpha0
        scale = d_star / student_t.ppf(0.995, nu)
        return scale * _half_t_mean_factor(nu)

    target = lam * mean_within

    def f(alpha0: float) -> float:
        return gap_mean(alpha0) - target

    lo, hi = 1.0 + 1e-9, _ALPHA0_MAX
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0.0:
        raise ElicitationError(
            f"no alpha0 in (1, {_ALPHA0_MAX}] meets both conditions: the "
            f"implied mean gap ranges [{min(flo, fhi) + target:.4g}, "
            f"{max(flo, fhi) + target:.4g}] but lambda * m = {target:.4g}")
    alpha0 = brentq(f, lo, hi, xtol=1e-12, rtol=1e-14)
    scale = d_star / student_t.ppf(0.995, 2.0 * alpha0)
    beta0 = alpha0 * scale * scale / 2.0
    return float(alpha0), float(beta0)


def solve_beta_f(sample_var: float, alpha0: float, beta0: float) -> float:
    """Noise-variance prior scale: with shape fixed at 3/2, choose the scale
    so expected noise plus expected center-spread variance equals the
    empirical variance."""
    spread = beta0 / (alpha0 - 1.0)
    if sample_var <= spread:
        raise ElicitationError(
            f"center-spread prior mean {spread:.4g} already exceeds the "
            f"empirical variance {sample_var:.4g}")
    return 0.5 * (sample_var - spread)


def mean_within_distance(data, d_star: float) -> float:
    d = _pairwise_distances(_flatten(data))
    close = d[d <= d_star]
    if close.size == 0:
        raise ElicitationError("no pairwise distances below d*")
    return float(close.mean())


def elicit_all(data, lam: float = 0.7,
               bandwidth_rule: str = "silverman") -> ElicitationResult:
    """Full pipeline; deterministic given the data."""
    y = _flatten(data)
    mu0, sigma0_sq = center_base(y)
    ds = find_d_star(y, bandwidth_rule)
    m_within = mean_within_distance(y, ds.d_star)
    alpha0, beta0 = solve_half_t(ds.d_star, m_within, lam)
    beta_f = solve_beta_f(float(np.var(y)), alpha0, beta0)
    return ElicitationResult(mu0=mu0, sigma0_sq=sigma0_sq, d_star=ds.d_star,
                             alpha0=alpha0, beta0=beta0, beta_f=beta_f,
                             alpha_f=ALPHA_F, mean_within_distance=m_within,
                             lam=lam, unimodal_distances=ds.unimodal)


def match_correlation(target: float, free_param: str, rho: LevyParams,
                      rho0: LevyParams, model: KernelModel, A,
                      tol: float = 1e-4):
    """Tune one Levy parameter until the prior correlation hits the target.

    ``free_param`` is ``"rho.a"`` or ``"rho0.a"``.  A geometric scan
    locates a sign change (checking the empirical monotonicity assumption);
    root finding then runs inside that bracket.
    """
    if not 0.0 < target < 1.0:
        raise ElicitationError("correlation target must lie in (0, 1)")
    if free_param not in ("rho.a", "rho0.a"):
        raise ElicitationError(f"unsupported free parameter {free_param!r}")

    def with_value(x: float):
        if free_param == "rho.a":
            return replace(rho, a=x), rho0
        return rho, replace(rho0, a=x)

    def f(x: float) -> float:
        r, r0 = with_value(x)
        return prior_correlation(r, r0, model, A) - target

    grid = np.geomspace(1e-3, 1e3, 25)
    vals = [f(x) for x in grid]
    sign_changes = [i for i in range(len(grid) - 1)
                    if vals[i] == 0.0 or vals[i] * vals[i + 1] < 0.0]
    if not sign_changes:
        reached = [v + target for v in vals]
        raise ElicitationError(
            f"target {target} unreachable by {free_param}: correlation "
            f"ranges [{min(reached):.4g}, {max(reached):.4g}] over the bracket")
    i = sign_changes[0]
    x = brentq(f, grid[i], grid[i + 1], xtol=1e-12, rtol=1e-15)
    if abs(f(x)) > tol:
        raise ElicitationError(f"root finding stalled at |gap| = {abs(f(x)):.2g}")
    return with_value(float(x))
