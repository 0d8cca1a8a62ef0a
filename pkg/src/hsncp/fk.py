"""Truncated simulation of homogeneous CRMs in decreasing jump order.

Jumps are obtained by inverting the scaled jump tail mass at the partial
sums of unit-exponential increments, keeping everything above a threshold
epsilon; locations are drawn i.i.d. from a supplied sampler (a single
kernel component, or the finite mixture spanned by truncated mother
atoms).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericError
from .kernel import KernelModel, MotherAtomLocation, sample_kernel
from .levy import LevyParams, tail_mass, tail_mass_inverse

__all__ = ["TruncatedCRM", "sample_jumps", "sample_locations",
           "kernel_location_sampler", "mixture_location_sampler",
           "sample_truncated_crm"]

_MAX_JUMPS = 20_000_000

LocationSampler = Callable[[int, np.random.Generator], np.ndarray]


@dataclass
class TruncatedCRM:
    """Jumps (strictly decreasing, all >= epsilon) with matching locations."""

    jumps: np.ndarray
    locations: np.ndarray
    epsilon: float
    params: LevyParams

    def __post_init__(self):
        if self.jumps.shape != self.locations.shape:
            raise ValueError("jumps and locations must align")
        if self.jumps.size:
            if not np.all(np.diff(self.jumps) < 0.0):
                raise ValueError("jumps must be strictly decreasing")
            if self.jumps[-1] < self.epsilon:
                raise ValueError("all jumps must be >= epsilon")

    @property
    def total_mass(self) -> float:
        return float(self.jumps.sum())


def _exponential_partial_sums(rng: np.random.Generator, eta_max: float) -> np.ndarray:
    """Partial sums of unit exponentials up to the first one exceeding
    eta_max, which is discarded.  Batch size depends only on eta_max so the
    generator stream is identical across compute backends."""
    batch = max(16, int(1.5 * eta_max) + 8)
    total = 0.0
    chunks = []
    n_drawn = 0
    while True:
        incr = rng.standard_exponential(batch)
        sums = total + np.cumsum(incr)
        chunks.append(sums)
        total = float(sums[-1])
        n_drawn += batch
        if total > eta_max:
            break
        if n_drawn > _MAX_JUMPS:
            raise NumericError(f"truncation level admits more than "
                               f"{_MAX_JUMPS} jumps; raise epsilon")
    eta = np.concatenate(chunks) if len(chunks) > 1 else chunks[0]
    return eta[eta <= eta_max]


def sample_jumps(params: LevyParams, total_mass_scale: float, epsilon: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Jumps of a CRM with mean intensity ``total_mass_scale * rho``, in
    strictly decreasing order, truncated at epsilon.

    Successive unit-exponential partial sums eta_j are matched to jump
    sizes through ``total_mass_scale * tail_mass(jump) = eta_j``; the walk
    stops at the first jump below epsilon.
    """
    if not epsilon > 0.0:
        raise ValueError("epsilon must be positive")
    if not total_mass_scale >= 0.0:
        raise ValueError("total_mass_scale must be nonnegative")
    if total_mass_scale == 0.0:
        return np.empty(0)
    eta_max = total_mass_scale * tail_mass(params, epsilon)
    if eta_max > _MAX_JUMPS:
        raise NumericError(f"expected jump count {eta_max:.3g} above epsilon "
                           f"is unreasonably large; raise epsilon")
    eta = _exponential_partial_sums(rng, eta_max)
    if eta.size == 0:
        return np.empty(0)
    jumps = tail_mass_inverse(params, eta, scale=total_mass_scale)
    # inversion is monotone; ties are impossible up to floating error
    return np.maximum(jumps, epsilon)


def sample_locations(count: int, sampler: LocationSampler,
                     rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. draws from a location sampler handle."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count == 0:
        return np.empty(0)
    return np.asarray(sampler(count, rng), dtype=float)


def kernel_location_sampler(model: KernelModel,
                            location: MotherAtomLocation) -> LocationSampler:
    """Locations around one fixed mother atom."""

    def draw(count: int, rng: np.random.Generator) -> np.ndarray:
        return sample_kernel(model, location, count, rng)

    return draw


def sample_mixture_locations(model: KernelModel, gammas: np.ndarray,
                             locations: list, count: int,
                             rng: np.random.Generator):
    """Draw from the mother-jump-weighted kernel mixture.

    Returns (values, component indices); callers that need to remember
    which mother atom produced each point use the indices.
    """
    gammas = np.asarray(gammas, dtype=float)
    if gammas.size != len(locations):
        raise ValueError("one weight per mother atom required")
    if count == 0:
        return np.empty(0), np.empty(0, dtype=np.int64)
    if gammas.size == 0:
        raise ValueError("cannot draw locations from an empty mixture")
    comps = rng.choice(gammas.size, size=count, p=gammas / gammas.sum())
    out = np.empty(count)
    for j in np.unique(comps):
        sel = comps == j
        out[sel] = sample_kernel(model, locations[j], int(sel.sum()), rng)
    return out, comps.astype(np.int64)


def mixture_location_sampler(model: KernelModel, gammas: np.ndarray,
                             locations: list) -> LocationSampler:
    """Locations from the kernel mixture weighted by truncated mother jumps."""

    def draw(count: int, rng: np.random.Generator) -> np.ndarray:
        return sample_mixture_locations(model, gammas, locations, count, rng)[0]

    return draw


def sample_truncated_crm(params: LevyParams, total_mass_scale: float,
                         epsilon: float, sampler: LocationSampler,
                         rng: np.random.Generator) -> TruncatedCRM:
    """Jumps and locations in one call."""
    jumps = sample_jumps(params, total_mass_scale, epsilon, rng)
    locs = sample_locations(jumps.size, sampler, rng)
    return TruncatedCRM(jumps=jumps, locations=locs, epsilon=epsilon,
                        params=params)
