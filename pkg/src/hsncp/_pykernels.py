"""NumPy implementations of the hot kernels.

These are the fallback used when the compiled extension is unavailable
(and the reference the extension is tested against).  Functions here are
deliberately free of validation; the public modules own the contracts.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import exp1, gammaincc

BACKEND_NAME = "python"

_LOG_LO = math.log(1e-300)
_CF_ITER = 64
_BISECT_ITER = 64


def upper_gamma_negative(s: float, x: np.ndarray) -> np.ndarray:
    """Upper incomplete gamma ``Gamma(s, x)`` for ``s in (-1, 0)``, ``x > 0``.

    Small x: one-step recurrence from ``Gamma(s + 1, x)`` (no cancellation
    there).  Large x: Lentz continued fraction, fixed iteration count so the
    compiled backend can reproduce the arithmetic exactly.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 2.0
    if np.any(small):
        xs = x[small]
        g1 = math.gamma(s + 1.0) * gammaincc(s + 1.0, xs)
        out[small] = (np.power(xs, s) * np.exp(-xs) - g1) / (-s)
    if np.any(~small):
        out[~small] = _upper_gamma_cf(s, x[~small])
    return out


def _upper_gamma_cf(s: float, x: np.ndarray) -> np.ndarray:
    tiny = 1e-300
    b = x + 1.0 - s
    c = np.full_like(x, 1.0 / tiny)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, _CF_ITER + 1):
        an = -i * (i - s)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < tiny, tiny, d)
        c = b + an / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        d = 1.0 / d
        h = h * (d * c)
    return np.exp(-x + s * np.log(x)) * h


def tail_mass_raw(x, a: float, sigma: float, tau: float):
    """``int_x^inf rho(s) ds`` for the generalized-gamma Levy density."""
    x = np.asarray(x, dtype=float)
    if sigma == 0.0:
        return a * exp1(tau * x)
    if tau == 0.0:
        return a / math.gamma(1.0 - sigma) * np.power(x, -sigma) / sigma
    pref = a / math.gamma(1.0 - sigma) * tau ** sigma
    return pref * upper_gamma_negative(-sigma, tau * x)


def invert_tail_mass(eta: np.ndarray, a: float, sigma: float, tau: float) -> np.ndarray:
    """Solve ``tail_mass(x) = eta`` elementwise (eta > 0).

    Stable family inverts in closed form; otherwise bisection in log x on
    ``[1e-300, hi]`` with a doubling upper bracket and 64 fixed iterations.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.size == 0:
        return np.empty(0, dtype=float)
    if tau == 0.0:
        c = a / (math.gamma(1.0 - sigma) * sigma)
        return np.power(c / eta, 1.0 / sigma)
    if float(np.max(eta)) > tail_mass_raw(1e-300, a, sigma, tau):
        raise ArithmeticError("tail-mass inversion target not bracketed "
                              "above 1e-300")
    eta_min = float(np.min(eta))
    hi = 1.0
    for _ in range(1100):
        if tail_mass_raw(hi, a, sigma, tau) < eta_min:
            break
        hi *= 2.0
    else:
        raise ArithmeticError("tail-mass inversion: no upper bracket")
    lo = np.full(eta.shape, _LOG_LO)
    hi = np.full(eta.shape, math.log(hi))
    for _ in range(_BISECT_ITER):
        mid = 0.5 * (lo + hi)
        ge = tail_mass_raw(np.exp(mid), a, sigma, tau) >= eta
        lo = np.where(ge, mid, lo)
        hi = np.where(ge, hi, mid)
    return np.exp(0.5 * (lo + hi))


def sample_labels(y: np.ndarray, phi: np.ndarray, log_s: np.ndarray,
                  sigma_f_sq: float, u: np.ndarray) -> np.ndarray:
    """Categorical atom labels, one per observation.

    Weight of atom h for observation i is proportional to
    ``S_h * N(y_i | phi_h, sigma_f_sq)``; sampling is inverse-CDF on the
    per-row normalized weights using the supplied uniforms.
    """
    inv2 = 0.5 / sigma_f_sq
    d = y[:, None] - phi[None, :]
    logw = log_s[None, :] - d * d * inv2
    m = logw.max(axis=1)
    w = np.exp(logw - m[:, None])
    cum = np.cumsum(w, axis=1)
    thr = u * cum[:, -1]
    labels = (cum < thr[:, None]).sum(axis=1)
    return np.minimum(labels, phi.size - 1).astype(np.int64)
