"""Generative draws from the hierarchical prior and benchmark fixtures.

``simulate_prior`` produces grouped synthetic data with the two-level
labels (which child atom, which shared mother atom) that the posterior
machinery is supposed to recover.  ``simulate_fixture`` regenerates the
benchmark data-generating processes used by the acceptance suite,
including the misspecified mixtures with their density-argmax oracle
labels.  ``predictive_weights`` exposes the three-way seating rule of the
latent allocation process for testing and interpretation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .errors import SimulationError
from .fk import kernel_location_sampler, sample_jumps, sample_locations
from .kernel import (KernelModel, MotherAtom, MotherAtomLocation,
                     sample_location_prior)
from .levy import LevyParams, kappa, log_kappa, log_kappa_ratio, psi

__all__ = ["SyntheticDataset", "RestaurantState", "simulate_prior",
           "predictive_weights", "simulate_fixture", "FIXTURE_SCENARIOS"]


@dataclass
class SyntheticDataset:
    """Grouped observations with their generative labels.

    ``room_labels`` are the across-group cluster ids (mother atom of the
    latent atom behind each observation); for fixtures they carry the
    ground-truth labels instead and ``component_labels`` (when distinct)
    the generating mixture component.
    """

    groups: list
    latent_x: list
    room_labels: list
    mother_atoms: list = field(default_factory=list)
    component_labels: Optional[list] = None

    def n_groups(self) -> int:
        return len(self.groups)


class _Hierarchy:
    """One truncated draw of the mother process and all child processes."""

    def __init__(self, mother_gammas, mother_locs, child_s, child_phi, child_room):
        self.mother_gammas = mother_gammas
        self.mother_locs = mother_locs
        self.child_s = child_s          # per group
        self.child_phi = child_phi
        self.child_room = child_room    # mother index per child atom


def draw_prior_hierarchy(rho: LevyParams, rho0: LevyParams, model: KernelModel,
                         n_groups: int, epsilon: float,
                         rng: np.random.Generator) -> _Hierarchy:
    mother_gammas = sample_jumps(rho0, 1.0, epsilon, rng)
    if mother_gammas.size == 0:
        raise SimulationError("mother process truncated to nothing; "
                              "lower epsilon or raise the mother total mass")
    mother_locs = [sample_location_prior(model, rng) for _ in mother_gammas]
    child_s, child_phi, child_room = [], [], []
    for _ in range(n_groups):
        s_parts, phi_parts, room_parts = [], [], []
        for j, gam in enumerate(mother_gammas):
            jumps = sample_jumps(rho, float(gam), epsilon, rng)
            if jumps.size == 0:
                continue
            locs = sample_locations(jumps.size,
                                    kernel_location_sampler(model, mother_locs[j]),
                                    rng)
            s_parts.append(jumps)
            phi_parts.append(locs)
            room_parts.append(np.full(jumps.size, j, dtype=np.int64))
        if not s_parts:
            raise SimulationError("a group's child process truncated to "
                                  "nothing; lower epsilon")
        child_s.append(np.concatenate(s_parts))
        child_phi.append(np.concatenate(phi_parts))
        child_room.append(np.concatenate(room_parts))
    return _Hierarchy(mother_gammas, mother_locs, child_s, child_phi, child_room)


def simulate_prior(rho: LevyParams, rho0: LevyParams, model: KernelModel,
                   group_sizes, epsilon: float, sigma_f_sq: float,
                   rng: np.random.Generator) -> SyntheticDataset:
    """Draw a grouped dataset from the truncated hierarchical prior.

    Mother atoms are simulated first, then per group one child process per
    mother atom; latent values pick child atoms proportionally to their
    jumps and observations add Gaussian noise ``sigma_f_sq``.
    """
    group_sizes = [int(n) for n in group_sizes]
    if not group_sizes or any(n < 1 for n in group_sizes):
        raise ValueError("every group needs at least one observation")
    if not sigma_f_sq > 0.0:
        raise ValueError("sigma_f_sq must be positive")
    hier = draw_prior_hierarchy(rho, rho0, model, len(group_sizes), epsilon, rng)
    groups, latent, rooms = [], [], []
    for ell, n in enumerate(group_sizes):
        s = hier.child_s[ell]
        idx = rng.choice(s.size, size=n, p=s / s.sum())
        x = hier.child_phi[ell][idx]
        groups.append(x + rng.normal(0.0, math.sqrt(sigma_f_sq), size=n))
        latent.append(x)
        rooms.append(hier.child_room[ell][idx])
    atoms = [MotherAtom(float(g), loc)
             for g, loc in zip(hier.mother_gammas, hier.mother_locs)]
    return SyntheticDataset(groups=groups, latent_x=latent, room_labels=rooms,
                            mother_atoms=atoms)


@dataclass
class RestaurantState:
    """Occupancy counts of the seating process: per-group table sizes and
    each table's room, from which room totals follow."""

    xi: list    # per group: int array of table occupancies (>= 1)
    t: list     # per group: int array of room ids (0-based, gap-free)

    def __post_init__(self):
        for xi_l, t_l in zip(self.xi, self.t):
            xi_l = np.asarray(xi_l)
            if xi_l.size and np.any(xi_l < 1):
                raise ValueError("table occupancies must be >= 1")
            if len(xi_l) != len(t_l):
                raise ValueError("one room id per table required")
        zeta = self.zeta()
        if zeta.size and np.any(zeta < 1):
            raise ValueError("room ids must be gap-free")

    def zeta(self) -> np.ndarray:
        all_t = np.concatenate([np.asarray(t_l, dtype=np.int64)
                                for t_l in self.t]) if self.t else np.empty(0, np.int64)
        if all_t.size == 0:
            return np.empty(0, dtype=np.int64)
        return np.bincount(all_t)


def predictive_weights(state: RestaurantState, group: int, rho: LevyParams,
                       rho0: LevyParams, u_vec):
    """Unnormalized seating weights for the next customer of one group.

    Returns ``(existing_tables, new_table_per_room, new_room)``: the weight
    of joining table h, of opening a table in existing room j, and of
    opening a brand-new room.
    """
    u_vec = np.asarray(u_vec, dtype=float)
    if np.any(u_vec <= 0.0):
        raise ValueError("auxiliary variables must be positive")
    u = float(u_vec[group])
    v = float(np.sum(psi(rho, u_vec)))
    xi = np.asarray(state.xi[group], dtype=np.int64)
    zeta = state.zeta()
    existing = np.exp(log_kappa_ratio(rho, u, xi)) if xi.size else np.empty(0)
    k1 = kappa(rho, u, 1)
    if zeta.size:
        new_table = k1 * np.exp(log_kappa_ratio(rho0, v, zeta))
    else:
        new_table = np.empty(0)
    new_room = k1 * math.exp(log_kappa(rho0, v, 1))
    return existing, new_table, new_room


def _skew_normal_pdf(x, xi, omega, alpha):
    z = (x - xi) / omega
    return 2.0 / omega * stats.norm.pdf(z) * stats.norm.cdf(alpha * z)


class _MixtureSpec:
    """A finite mixture of (possibly composite) component densities."""

    def __init__(self, weights, samplers, pdfs):
        self.weights = np.asarray(weights, dtype=float)
        self.samplers = samplers
        self.pdfs = pdfs

    def draw(self, n, rng):
        comps = rng.choice(self.weights.size, size=n, p=self.weights)
        x = np.empty(n)
        for h in np.unique(comps):
            sel = comps == h
            x[sel] = self.samplers[h](int(sel.sum()), rng)
        return x, comps

    def oracle_labels(self, x):
        dens = np.stack([pdf(x) for pdf in self.pdfs])
        return np.argmax(dens, axis=0).astype(np.int64)


def _gauss_mix(means, var, weights):
    means = np.asarray(means, dtype=float)
    weights = np.asarray(weights, dtype=float) / np.sum(weights)
    sd = math.sqrt(var)

    def sampler(n, rng):
        comps = rng.choice(means.size, size=n, p=weights)
        return rng.normal(means[comps], sd)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return np.sum(weights[:, None] * stats.norm.pdf(x[None, :], means[:, None], sd),
                      axis=0)

    return sampler, pdf


def _unimodal_symmetric_spec() -> _MixtureSpec:
    def s1(n, rng):  # two scales around -12
        wide = rng.random(n) < 0.5
        return np.where(wide, rng.normal(-12.0, 2.0, n), rng.normal(-12.0, 0.3, n))

    def p1(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * stats.norm.pdf(x, -12.0, 0.3) + 0.5 * stats.norm.pdf(x, -12.0, 2.0)

    s2, p2 = _gauss_mix([-5.5, -4.0, -2.5], 1.0, [1, 1, 1])
    s3, p3 = _gauss_mix([4.0], 1.0, [1.0])

    def s4(n, rng):
        return 12.0 + rng.standard_t(3, size=n)

    def p4(x):
        return stats.t.pdf(np.asarray(x, dtype=float), 3, loc=12.0, scale=1.0)

    return _MixtureSpec([0.25, 0.25, 0.25, 0.25], [s1, s2, s3, s4],
                        [p1, p2, p3, p4])


def _multimodal_spec() -> _MixtureSpec:
    # second component mirrored to the positive axis (symmetric design)
    s1, p1 = _gauss_mix([-6.0, -5.0, -4.0, -3.0], 0.09, [3, 5, 5, 3])
    s2, p2 = _gauss_mix([6.0, 5.0, 4.0, 3.0], 0.09, [5, 3, 3, 5])
    return _MixtureSpec([0.5, 0.5], [s1, s2], [p1, p2])


def _skew_spec(params) -> _MixtureSpec:
    (xi1, om1, al1), (xi2, om2, al2) = params

    def make(xi, om, al):
        def sampler(n, rng):
            return stats.skewnorm.rvs(al, loc=xi, scale=om, size=n, random_state=rng)

        def pdf(x):
            return _skew_normal_pdf(np.asarray(x, dtype=float), xi, om, al)

        return sampler, pdf

    s1, p1 = make(xi1, om1, al1)
    s2, p2 = make(xi2, om2, al2)
    return _MixtureSpec([0.5, 0.5], [s1, s2], [p1, p2])


FIXTURE_SCENARIOS = ("illustrative", "three_component", "unimodal_symmetric",
                     "multimodal", "skewed_converging", "skewed_diverging",
                     "skewed_same_direction")


def simulate_fixture(scenario: str, n_per_group, rng: np.random.Generator,
                     sigma_t: float = 0.286) -> SyntheticDataset:
    """Benchmark datasets with ground-truth labels.

    ``illustrative``: two groups, two shifted Gaussian components each.
    ``three_component``: two groups, three components with random means
    (spread ``sigma_t``).  The remaining single-group scenarios are the
    misspecified mixtures; their ``room_labels`` are the density-argmax
    oracle labels.
    """
    if scenario not in FIXTURE_SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; "
                         f"choose from {FIXTURE_SCENARIOS}")
    if np.isscalar(n_per_group):
        sizes = None
    else:
        sizes = [int(n) for n in n_per_group]

    if scenario == "illustrative":
        means = [(-4.4, 3.55), (-3.6, 4.45)]
        sizes = sizes or [int(n_per_group)] * 2
        groups, latent, labels = [], [], []
        for ell, n in enumerate(sizes):
            comps = rng.choice(2, size=n)
            x = np.array([means[ell][c] for c in comps])
            groups.append(rng.normal(x, 1.0))
            latent.append(x)
            labels.append(comps.astype(np.int64))
        return SyntheticDataset(groups=groups, latent_x=latent,
                                room_labels=labels, component_labels=labels)

    if scenario == "three_component":
        centers = (-8.0, 0.0, 8.0)
        means = [[rng.normal(c, sigma_t) for c in centers] for _ in range(2)]
        sizes = sizes or [int(n_per_group)] * 2
        groups, latent, labels = [], [], []
        for ell, n in enumerate(sizes):
            comps = rng.choice(3, size=n)
            x = np.array([means[ell][c] for c in comps])
            groups.append(rng.normal(x, 1.0))
            latent.append(x)
            labels.append(comps.astype(np.int64))
        return SyntheticDataset(groups=groups, latent_x=latent,
                                room_labels=labels, component_labels=labels)

    spec = {
        "unimodal_symmetric": _unimodal_symmetric_spec,
        "multimodal": _multimodal_spec,
        "skewed_converging": lambda: _skew_spec([(-5.5, 1.5, 20.0), (5.5, 1.5, -20.0)]),
        "skewed_diverging": lambda: _skew_spec([(-3.0, 2.0, 20.0), (3.0, 2.0, 20.0)]),
        "skewed_same_direction": lambda: _skew_spec([(-1.0, 2.0, -20.0), (1.0, 2.0, 20.0)]),
    }[scenario]()
    n = int(n_per_group) if sizes is None else sizes[0]
    y, comps = spec.draw(n, rng)
    oracle = spec.oracle_labels(y)
    return SyntheticDataset(groups=[y], latent_x=[y.copy()],
                            room_labels=[oracle],
                            component_labels=[comps.astype(np.int64)])
