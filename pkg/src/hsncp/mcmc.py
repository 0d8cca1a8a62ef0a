"""Conditional Gibbs sampler for the hierarchical mixture posterior.

One sweep:

1. reallocate observations over all truncated atoms of their group;
2. redraw displayed atom values and jumps from their exact conditionals;
3. reallocate displayed atoms over rooms (collapsed over room parameters,
   marginal-likelihood weights);
4. refresh room centers and jumps, then the non-allocated child part of
   every occupied room (tilted truncated CRM);
5. redraw the fresh part: a tilted truncated mother process plus per-group
   child processes mixing over its atoms;
6. redraw the per-group auxiliary variables from gamma full conditionals;
7. redraw the observation noise variance (conjugate inverse gamma).

A supporting pass keeps the state coherent: atoms hit in step 1 move into
the allocated set (fresh ones get a room through the step-3 rule), atoms
that lost all observations fall back into the non-allocated pools, and
emptied rooms are discarded with dense relabeling.

All categorical draws are inverse-CDF on max-normalized weights computed
in log space, one uniform per draw, so the generator stream is identical
under both compute backends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _backend
from .errors import NumericError, SimulationError
from .fk import (kernel_location_sampler, mixture_location_sampler,
                 sample_jumps, sample_locations)
from .kernel import (KernelModel, MotherAtomLocation, log_marginal_stats,
                     sample_location_prior, sample_tau_fullcond)
from .levy import LevyParams, log_kappa, log_kappa_ratio, psi, tilt
from .prior_sim import draw_prior_hierarchy

__all__ = ["SamplerConfig", "SamplerState", "ChainRecord", "run_chain",
           "init_state", "prior_state", "resample_observations",
           "step1_labels", "step2_allocated", "step3_rooms",
           "step4_room_refresh", "step5_fresh_mass", "step6_aux",
           "step7_kernel_var"]


@dataclass(frozen=True)
class SamplerConfig:
    rho: LevyParams
    rho0: LevyParams
    model: KernelModel
    epsilon: float = 1e-6
    alpha_f: float = 1.5
    beta_f: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        if not (self.alpha_f > 0.0 and self.beta_f > 0.0):
            raise ValueError("inverse-gamma noise prior needs positive parameters")


@dataclass
class ChainRecord:
    """One kept iteration: across-group labels plus everything needed to
    evaluate group densities."""

    iteration: int
    sigma_f_sq: float
    u: np.ndarray
    labels: list            # per group: room id per observation
    atom_s: list            # per group: jumps of all truncated atoms
    atom_phi: list
    atom_room: list         # room id per atom; -1 = outside occupied rooms
    n_rooms: int

    def to_json_dict(self) -> dict:
        return {
            "iter": self.iteration,
            "sigma_f_sq": self.sigma_f_sq,
            "U": [float(x) for x in self.u],
            "labels": [[int(x) for x in lab] for lab in self.labels],
            "atoms": [
                [{"S": float(s), "phi": float(p), "room": int(r)}
                 for s, p, r in zip(s_l, p_l, r_l)]
                for s_l, p_l, r_l in zip(self.atom_s, self.atom_phi, self.atom_room)
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ChainRecord":
        atom_s = [np.array([a["S"] for a in grp]) for grp in d["atoms"]]
        atom_phi = [np.array([a["phi"] for a in grp]) for grp in d["atoms"]]
        atom_room = [np.array([a["room"] for a in grp], dtype=np.int64)
                     for grp in d["atoms"]]
        labels = [np.asarray(lab, dtype=np.int64) for lab in d["labels"]]
        all_rooms = [r[r >= 0] for r in atom_room if len(r)]
        n_rooms = int(max((r.max() for r in all_rooms if r.size), default=-1)) + 1
        return cls(iteration=int(d["iter"]), sigma_f_sq=float(d["sigma_f_sq"]),
                   u=np.asarray(d["U"], dtype=float), labels=labels,
                   atom_s=atom_s, atom_phi=atom_phi, atom_room=atom_room,
                   n_rooms=n_rooms)


def _categorical(logw: np.ndarray, rng: np.random.Generator) -> int:
    w = np.exp(logw - logw.max())
    cum = np.cumsum(w)
    idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="left"))
    return min(idx, len(w) - 1)


class SamplerState:
    """Mutable sampler state; invariants are checked by :meth:`validate`."""

    def __init__(self, config: SamplerConfig, n_groups: int):
        self.config = config
        self.g = n_groups
        self.c = [np.empty(0, dtype=np.int64) for _ in range(n_groups)]
        self.s_a = [np.empty(0) for _ in range(n_groups)]
        self.phi_a = [np.empty(0) for _ in range(n_groups)]
        self.t_a = [np.empty(0, dtype=np.int64) for _ in range(n_groups)]
        self.s_na_room = [[] for _ in range(n_groups)]
        self.phi_na_room = [[] for _ in range(n_groups)]
        self.s_na_new = [np.empty(0) for _ in range(n_groups)]
        self.phi_na_new = [np.empty(0) for _ in range(n_groups)]
        # provisional mother (index into fresh_gamma) of each fresh atom:
        # promotion must recover the true association, not resample it
        self.mother_na_new = [np.empty(0, dtype=np.int64) for _ in range(n_groups)]
        self.fresh_gamma = np.empty(0)
        self.fresh_loc: list[MotherAtomLocation] = []
        self.room_gamma: list[float] = []
        self.room_loc: list[MotherAtomLocation] = []
        self.u = np.ones(n_groups)
        self.sigma_f_sq = 1.0
        # displayed-value statistics per room, rebuilt lazily
        self.zeta = np.empty(0, dtype=np.int64)
        self.room_sum = np.empty(0)
        self.room_sumsq = np.empty(0)
        self.room_logm = np.empty(0)

    # ----- room bookkeeping ------------------------------------------------

    @property
    def n_rooms(self) -> int:
        return len(self.room_gamma)

    def total_child_psi(self) -> float:
        return float(np.sum(psi(self.config.rho, self.u)))

    def rebuild_room_stats(self):
        r = self.n_rooms
        t_all = (np.concatenate(self.t_a) if any(len(t) for t in self.t_a)
                 else np.empty(0, dtype=np.int64))
        phi_all = (np.concatenate(self.phi_a) if t_all.size else np.empty(0))
        self.zeta = np.bincount(t_all, minlength=r).astype(np.int64)
        self.room_sum = np.bincount(t_all, weights=phi_all, minlength=r)
        self.room_sumsq = np.bincount(t_all, weights=phi_all * phi_all,
                                      minlength=r)
        self.room_logm = np.atleast_1d(
            log_marginal_stats(self.config.model, self.zeta, self.room_sum,
                               self.room_sumsq)) if r else np.empty(0)

    def _refresh_logm(self, j: int):
        self.room_logm[j] = log_marginal_stats(
            self.config.model, self.zeta[j], self.room_sum[j], self.room_sumsq[j])

    def room_add(self, j: int, x: float):
        self.zeta[j] += 1
        self.room_sum[j] += x
        self.room_sumsq[j] += x * x
        self._refresh_logm(j)

    def room_remove(self, j: int, x: float):
        self.zeta[j] -= 1
        self.room_sum[j] -= x
        self.room_sumsq[j] -= x * x
        self._refresh_logm(j)

    def room_create(self, x: float, rng: np.random.Generator) -> int:
        """New room seeded by a single displayed value: center from its
        one-point full conditional, jump from the count-one conditional."""
        cfg = self.config
        loc = sample_tau_fullcond(cfg.model, [x], None, rng)
        v = self.total_child_psi()
        gam = rng.gamma(1.0 - cfg.rho0.sigma, 1.0 / (v + cfg.rho0.tau))
        self.room_loc.append(loc)
        self.room_gamma.append(float(gam))
        for ell in range(self.g):
            self.s_na_room[ell].append(np.empty(0))
            self.phi_na_room[ell].append(np.empty(0))
        self.zeta = np.append(self.zeta, 1)
        self.room_sum = np.append(self.room_sum, x)
        self.room_sumsq = np.append(self.room_sumsq, x * x)
        self.room_logm = np.append(self.room_logm, 0.0)
        j = self.n_rooms - 1
        self._refresh_logm(j)
        return j

    def room_discard(self, j: int) -> int:
        """Drop an emptied room: its mother atom and any remaining
        non-allocated child atoms migrate to the fresh part, and every room
        id above j shifts down.  Returns the mother's index in the fresh
        pool."""
        if self.zeta[j] != 0:
            raise AssertionError("only empty rooms can be discarded")
        m_new = self.fresh_gamma.size
        self.fresh_gamma = np.append(self.fresh_gamma, self.room_gamma[j])
        self.fresh_loc.append(self.room_loc[j])
        del self.room_gamma[j]
        del self.room_loc[j]
        for ell in range(self.g):
            n_mig = self.s_na_room[ell][j].size
            self.s_na_new[ell] = np.concatenate(
                [self.s_na_new[ell], self.s_na_room[ell][j]])
            self.phi_na_new[ell] = np.concatenate(
                [self.phi_na_new[ell], self.phi_na_room[ell][j]])
            self.mother_na_new[ell] = np.concatenate(
                [self.mother_na_new[ell],
                 np.full(n_mig, m_new, dtype=np.int64)])
            del self.s_na_room[ell][j]
            del self.phi_na_room[ell][j]
            tl = self.t_a[ell]
            tl[tl > j] -= 1
        for name in ("zeta", "room_sum", "room_sumsq", "room_logm"):
            setattr(self, name, np.delete(getattr(self, name), j))
        return m_new

    def room_from_fresh_mother(self, m: int) -> int:
        """Promote fresh mother m to an occupied room (empty for now); the
        caller moves in its displayed/non-allocated children and finally
        drops promoted mothers from the fresh pool."""
        self.room_gamma.append(float(self.fresh_gamma[m]))
        self.room_loc.append(self.fresh_loc[m])
        for ell in range(self.g):
            self.s_na_room[ell].append(np.empty(0))
            self.phi_na_room[ell].append(np.empty(0))
        self.zeta = np.append(self.zeta, 0)
        self.room_sum = np.append(self.room_sum, 0.0)
        self.room_sumsq = np.append(self.room_sumsq, 0.0)
        self.room_logm = np.append(self.room_logm, 0.0)
        j = self.n_rooms - 1
        self._refresh_logm(j)
        return j

    def drop_fresh_mothers(self, promoted: dict):
        """Remove promoted mothers from the fresh pool, reindex the
        remaining fresh atoms, and move children of promoted mothers into
        their new room's non-allocated pool."""
        if not promoted:
            return
        n_m = self.fresh_gamma.size
        keep = np.ones(n_m, dtype=bool)
        for m in promoted:
            keep[m] = False
        new_index = np.cumsum(keep) - 1
        for ell in range(self.g):
            mothers = self.mother_na_new[ell]
            stay = keep[mothers]
            for i in np.nonzero(~stay)[0]:
                j = promoted[int(mothers[i])]
                self.s_na_room[ell][j] = np.append(self.s_na_room[ell][j],
                                                   self.s_na_new[ell][i])
                self.phi_na_room[ell][j] = np.append(self.phi_na_room[ell][j],
                                                     self.phi_na_new[ell][i])
            self.s_na_new[ell] = self.s_na_new[ell][stay]
            self.phi_na_new[ell] = self.phi_na_new[ell][stay]
            self.mother_na_new[ell] = new_index[mothers[stay]]
        self.fresh_gamma = self.fresh_gamma[keep]
        self.fresh_loc = [loc for k, loc in zip(keep, self.fresh_loc) if k]

    def room_members(self) -> list:
        members = [[] for _ in range(self.n_rooms)]
        for ell in range(self.g):
            for x, j in zip(self.phi_a[ell], self.t_a[ell]):
                members[j].append(float(x))
        return members

    def group_total_mass(self, ell: int) -> float:
        mass = float(self.s_a[ell].sum()) + float(self.s_na_new[ell].sum())
        for arr in self.s_na_room[ell]:
            mass += float(arr.sum())
        return mass

    # ----- step-3 seating rule ---------------------------------------------

    def _room_logweights(self, x: float, v: float) -> np.ndarray:
        """log seating weights of a displayed value over existing rooms plus
        a new room (marginal-likelihood times the room-count ratio)."""
        cfg = self.config
        r = self.n_rooms
        logw = np.empty(r + 1)
        if r:
            with_x = np.atleast_1d(log_marginal_stats(
                cfg.model, self.zeta + 1, self.room_sum + x,
                self.room_sumsq + x * x))
            logw[:r] = (log_kappa_ratio(cfg.rho0, v, self.zeta)
                        + with_x - self.room_logm)
        logw[r] = (log_kappa(cfg.rho0, v, 1)
                   + log_marginal_stats(cfg.model, 1, x, x * x))
        return logw

    def seat_displayed_value(self, x: float, v: float,
                             rng: np.random.Generator) -> int:
        pick = _categorical(self._room_logweights(x, v), rng)
        if pick == self.n_rooms:
            pick = self.room_create(x, rng)
        else:
            self.room_add(pick, x)
        return pick

    # ----- invariants -------------------------------------------------------

    def validate(self, data=None):
        cfg = self.config
        r = self.n_rooms
        if len(self.room_loc) != r or any(len(self.s_na_room[ell]) != r
                                          for ell in range(self.g)):
            raise AssertionError("room structure arrays disagree on room count")
        if np.any(self.u <= 0.0) or not self.sigma_f_sq > 0.0:
            raise AssertionError("auxiliary variables and noise variance "
                                 "must be positive")
        t_all = []
        for ell in range(self.g):
            k = len(self.s_a[ell])
            if not (len(self.phi_a[ell]) == len(self.t_a[ell]) == k):
                raise AssertionError("allocated arrays disagree")
            if k == 0 or np.any(self.s_a[ell] <= 0.0):
                raise AssertionError("each group needs allocated atoms with "
                                     "positive jumps")
            if self.c[ell].size:
                counts = np.bincount(self.c[ell], minlength=k)
                if counts.size > k or np.any(counts[:k] < 1):
                    raise AssertionError("labels must hit every allocated atom")
            if data is not None and len(data[ell]) != self.c[ell].size:
                raise AssertionError("label vector length mismatch")
            for arr in self.s_na_room[ell] + [self.s_na_new[ell]]:
                if arr.size and float(arr.min()) < cfg.epsilon:
                    raise AssertionError("non-allocated jumps below epsilon")
            if self.t_a[ell].size:
                if self.t_a[ell].min() < 0 or self.t_a[ell].max() >= r:
                    raise AssertionError("room labels out of range")
            t_all.append(self.t_a[ell])
        zeta = np.bincount(np.concatenate(t_all), minlength=r) if r else np.empty(0)
        if r and np.any(zeta < 1):
            raise AssertionError("rooms must be gap-free and occupied")
        if np.any(np.asarray(self.room_gamma) <= 0.0):
            raise AssertionError("mother jumps must be positive")


# ----- sweep steps -----------------------------------------------------------


def step1_labels(state: SamplerState, data, rng: np.random.Generator) -> SamplerState:
    """Reallocate observations, then restore state coherence.

    Raw labels are drawn over the frozen atom sets of each group.  Newly
    hit in-room atoms enter the allocated set keeping their room; atoms
    that lost every observation return to the non-allocated pools (or are
    dropped when below the truncation level); emptied rooms are discarded;
    newly hit fresh atoms get a room from the step-3 rule.
    """
    cfg = state.config
    state.rebuild_room_stats()
    raw, layouts = [], []
    for ell in range(state.g):
        s_all = np.concatenate([state.s_a[ell]] + state.s_na_room[ell]
                               + [state.s_na_new[ell]])
        phi_all = np.concatenate([state.phi_a[ell]] + state.phi_na_room[ell]
                                 + [state.phi_na_new[ell]])
        uni = rng.random(len(data[ell]))
        labels = _backend.sample_labels(
            np.ascontiguousarray(data[ell], dtype=float),
            np.ascontiguousarray(phi_all),
            np.ascontiguousarray(np.log(s_all)),
            state.sigma_f_sq, uni)
        raw.append(labels)
        layouts.append((len(state.s_a[ell]),
                        [len(a) for a in state.s_na_room[ell]],
                        len(state.s_na_new[ell])))

    plans = []
    for ell in range(state.g):
        n_a, seg_lens, n_fresh = layouts[ell]
        h_tot = n_a + sum(seg_lens) + n_fresh
        counts = np.bincount(raw[ell], minlength=h_tot)
        plans.append({"counts": counts, "index_map": np.full(h_tot, -1, np.int64)})

    # newly hit in-room atoms join the displayed set first (keeps their
    # rooms occupied even if the previous occupant de-allocates below)
    new_lists = []
    for ell in range(state.g):
        n_a, seg_lens, _ = layouts[ell]
        counts = plans[ell]["counts"]
        imap = plans[ell]["index_map"]
        new_s, new_phi, new_t = [], [], []
        for h in range(n_a):
            if counts[h] > 0:
                imap[h] = len(new_s)
                new_s.append(state.s_a[ell][h])
                new_phi.append(state.phi_a[ell][h])
                new_t.append(state.t_a[ell][h])
        off = n_a
        keep_na = []
        for j, ln in enumerate(seg_lens):
            keep = np.ones(ln, dtype=bool)
            for loc_i in range(ln):
                h = off + loc_i
                if counts[h] > 0:
                    keep[loc_i] = False
                    imap[h] = len(new_s)
                    x = float(state.phi_na_room[ell][j][loc_i])
                    new_s.append(state.s_na_room[ell][j][loc_i])
                    new_phi.append(x)
                    new_t.append(j)
                    state.room_add(j, x)
            keep_na.append(keep)
            off += ln
        new_lists.append({"s": new_s, "phi": new_phi, "t": new_t,
                          "keep_na": keep_na})

    # de-allocations: displayed atoms that lost every observation
    dealloc = [[] for _ in range(state.g)]
    for ell in range(state.g):
        n_a = layouts[ell][0]
        counts = plans[ell]["counts"]
        for h in range(n_a):
            if counts[h] == 0:
                state.room_remove(int(state.t_a[ell][h]), float(state.phi_a[ell][h]))
                dealloc[ell].append((float(state.s_a[ell][h]),
                                     float(state.phi_a[ell][h]),
                                     int(state.t_a[ell][h])))

    # rewrite allocated/non-allocated pools, then drop emptied rooms
    for ell in range(state.g):
        nl = new_lists[ell]
        state.s_a[ell] = np.asarray(nl["s"], dtype=float)
        state.phi_a[ell] = np.asarray(nl["phi"], dtype=float)
        state.t_a[ell] = np.asarray(nl["t"], dtype=np.int64)
        for j, keep in enumerate(nl["keep_na"]):
            state.s_na_room[ell][j] = state.s_na_room[ell][j][keep]
            state.phi_na_room[ell][j] = state.phi_na_room[ell][j][keep]

    alive = state.zeta > 0
    new_id = np.cumsum(alive) - 1
    dead_mother = {}
    for j in np.nonzero(~alive)[0][::-1]:
        dead_mother[int(j)] = state.room_discard(int(j))

    for ell in range(state.g):
        add_room = {}
        add_fresh = []
        for s, x, j_old in dealloc[ell]:
            if s < cfg.epsilon:
                continue
            if alive[j_old]:
                add_room.setdefault(int(new_id[j_old]), []).append((s, x))
            else:
                add_fresh.append((s, x, dead_mother[j_old]))
        for j, pairs in add_room.items():
            ss, xs = zip(*pairs)
            state.s_na_room[ell][j] = np.concatenate([state.s_na_room[ell][j], ss])
            state.phi_na_room[ell][j] = np.concatenate([state.phi_na_room[ell][j], xs])
        if add_fresh:
            ss, xs, ms = zip(*add_fresh)
            state.s_na_new[ell] = np.concatenate([state.s_na_new[ell], ss])
            state.phi_na_new[ell] = np.concatenate([state.phi_na_new[ell], xs])
            state.mother_na_new[ell] = np.concatenate(
                [state.mother_na_new[ell], np.asarray(ms, dtype=np.int64)])

    # newly hit fresh atoms rejoin through their provisional mother, which
    # becomes an occupied room (shared when several hits have one mother)
    promoted_rooms: dict = {}
    for ell in range(state.g):
        n_a, seg_lens, n_fresh = layouts[ell]
        counts = plans[ell]["counts"]
        imap = plans[ell]["index_map"]
        off = n_a + sum(seg_lens)
        # migrations above appended entries after the original n_fresh;
        # promotion indices refer to the original prefix
        keep = np.ones(state.s_na_new[ell].size, dtype=bool)
        for loc_i in range(n_fresh):
            h = off + loc_i
            if counts[h] > 0:
                keep[loc_i] = False
                x = float(state.phi_na_new[ell][loc_i])
                s = float(state.s_na_new[ell][loc_i])
                m = int(state.mother_na_new[ell][loc_i])
                if m not in promoted_rooms:
                    promoted_rooms[m] = state.room_from_fresh_mother(m)
                room = promoted_rooms[m]
                state.room_add(room, x)
                imap[h] = len(state.s_a[ell])
                state.s_a[ell] = np.append(state.s_a[ell], s)
                state.phi_a[ell] = np.append(state.phi_a[ell], x)
                state.t_a[ell] = np.append(state.t_a[ell], room)
        state.s_na_new[ell] = state.s_na_new[ell][keep]
        state.phi_na_new[ell] = state.phi_na_new[ell][keep]
        state.mother_na_new[ell] = state.mother_na_new[ell][keep]
        state.c[ell] = plans[ell]["index_map"][raw[ell]]
        if np.any(state.c[ell] < 0):
            raise NumericError("label bookkeeping lost an observation")
    state.drop_fresh_mothers(promoted_rooms)
    return state


def step2_allocated(state: SamplerState, data, rng: np.random.Generator) -> SamplerState:
    """Exact conjugate redraw of displayed atom values and jumps."""
    cfg = state.config
    model = cfg.model
    room_mu = np.array([loc.mu for loc in state.room_loc])
    if model.mode == "fixed_variance":
        room_var = np.full(state.n_rooms, model.kernel_var)
    else:
        room_var = np.array([loc.sigma_sq for loc in state.room_loc])
    for ell in range(state.g):
        k = len(state.s_a[ell])
        nh = np.bincount(state.c[ell], minlength=k).astype(float)
        sumy = np.bincount(state.c[ell], weights=np.asarray(data[ell], float),
                           minlength=k)
        t = state.t_a[ell]
        prec = 1.0 / room_var[t] + nh / state.sigma_f_sq
        mean = (room_mu[t] / room_var[t] + sumy / state.sigma_f_sq) / prec
        state.phi_a[ell] = rng.normal(mean, np.sqrt(1.0 / prec))
        shape = nh - cfg.rho.sigma
        rate = state.u[ell] + cfg.rho.tau
        state.s_a[ell] = rng.gamma(shape, 1.0 / rate)
    return state


def step3_rooms(state: SamplerState, rng: np.random.Generator) -> SamplerState:
    """Room reallocation of every displayed atom (collapsed Gibbs scan)."""
    state.rebuild_room_stats()
    v = state.total_child_psi()
    for ell in range(state.g):
        for h in range(len(state.phi_a[ell])):
            x = float(state.phi_a[ell][h])
            j = int(state.t_a[ell][h])
            state.room_remove(j, x)
            if state.zeta[j] == 0:
                state.room_discard(j)
            state.t_a[ell][h] = state.seat_displayed_value(x, v, rng)
    return state


def step4_room_refresh(state: SamplerState, rng: np.random.Generator) -> SamplerState:
    """Refresh room centers/jumps and regenerate each room's non-allocated
    child part from the tilted truncated CRM."""
    cfg = state.config
    state.rebuild_room_stats()
    v = state.total_child_psi()
    members = state.room_members()
    for j in range(state.n_rooms):
        state.room_loc[j] = sample_tau_fullcond(cfg.model, members[j],
                                                state.room_loc[j], rng)
        state.room_gamma[j] = float(rng.gamma(state.zeta[j] - cfg.rho0.sigma,
                                              1.0 / (v + cfg.rho0.tau)))
    for ell in range(state.g):
        tilted = tilt(cfg.rho, float(state.u[ell]))
        for j in range(state.n_rooms):
            jumps = sample_jumps(tilted, state.room_gamma[j], cfg.epsilon, rng)
            locs = sample_locations(
                jumps.size, kernel_location_sampler(cfg.model, state.room_loc[j]),
                rng)
            state.s_na_room[ell][j] = jumps
            state.phi_na_room[ell][j] = locs
    return state


def step5_fresh_mass(state: SamplerState, rng: np.random.Generator) -> SamplerState:
    """Redraw the part of the hierarchy not attached to any occupied room:
    a doubly truncated draw (tilted mother, then per-group children mixing
    over the new mother atoms)."""
    cfg = state.config
    v = state.total_child_psi()
    tilted0 = tilt(cfg.rho0, v)
    state.fresh_gamma = sample_jumps(tilted0, 1.0, cfg.epsilon, rng)
    state.fresh_loc = [sample_location_prior(cfg.model, rng)
                       for _ in range(state.fresh_gamma.size)]
    scale = float(state.fresh_gamma.sum())
    for ell in range(state.g):
        if scale <= 0.0:
            state.s_na_new[ell] = np.empty(0)
            state.phi_na_new[ell] = np.empty(0)
            state.mother_na_new[ell] = np.empty(0, dtype=np.int64)
            continue
        tilted = tilt(cfg.rho, float(state.u[ell]))
        jumps = sample_jumps(tilted, scale, cfg.epsilon, rng)
        locs, comps = sample_mixture_locations(
            cfg.model, state.fresh_gamma, state.fresh_loc, jumps.size, rng)
        state.s_na_new[ell] = jumps
        state.phi_na_new[ell] = locs
        state.mother_na_new[ell] = comps
    return state


def step6_aux(state: SamplerState, rng: np.random.Generator) -> SamplerState:
    """Auxiliary variables: gamma draws with rate the full truncated mass."""
    for ell in range(state.g):
        n_ell = state.c[ell].size
        mass = state.group_total_mass(ell)
        if not mass > 0.0:
            raise AssertionError("total truncated mass vanished with "
                                 "allocations present")
        state.u[ell] = rng.gamma(n_ell, 1.0 / mass)
    return state


def step7_kernel_var(state: SamplerState, data, rng: np.random.Generator) -> SamplerState:
    """Observation noise variance from its conjugate inverse gamma."""
    cfg = state.config
    n = 0
    ss = 0.0
    for ell in range(state.g):
        y = np.asarray(data[ell], dtype=float)
        resid = y - state.phi_a[ell][state.c[ell]]
        n += y.size
        ss += float(resid @ resid)
    state.sigma_f_sq = 1.0 / rng.gamma(cfg.alpha_f + 0.5 * n,
                                       1.0 / (cfg.beta_f + 0.5 * ss))
    return state


def sweep(state: SamplerState, data, rng: np.random.Generator) -> SamplerState:
    step1_labels(state, data, rng)
    step2_allocated(state, data, rng)
    step3_rooms(state, rng)
    step4_room_refresh(state, rng)
    step5_fresh_mass(state, rng)
    step6_aux(state, rng)
    step7_kernel_var(state, data, rng)
    return state


def record_state(state: SamplerState, data, iteration: int) -> ChainRecord:
    labels, atom_s, atom_phi, atom_room = [], [], [], []
    for ell in range(state.g):
        labels.append(state.t_a[ell][state.c[ell]].copy())
        segs_s = [state.s_a[ell]] + state.s_na_room[ell] + [state.s_na_new[ell]]
        segs_p = [state.phi_a[ell]] + state.phi_na_room[ell] + [state.phi_na_new[ell]]
        rooms = [state.t_a[ell]]
        rooms += [np.full(len(state.s_na_room[ell][j]), j, dtype=np.int64)
                  for j in range(state.n_rooms)]
        rooms += [np.full(len(state.s_na_new[ell]), -1, dtype=np.int64)]
        atom_s.append(np.concatenate(segs_s))
        atom_phi.append(np.concatenate(segs_p))
        atom_room.append(np.concatenate(rooms))
    return ChainRecord(iteration=iteration, sigma_f_sq=state.sigma_f_sq,
                       u=state.u.copy(), labels=labels, atom_s=atom_s,
                       atom_phi=atom_phi, atom_room=atom_room,
                       n_rooms=state.n_rooms)


def init_state(data, config: SamplerConfig, rng: np.random.Generator,
               atoms_per_group: int = 4) -> SamplerState:
    """Deterministic-shape data-driven start: a few quantile-spaced atoms
    per group, one room per atom; burn-in does the rest."""
    state = SamplerState(config, len(data))
    for ell, y in enumerate(data):
        y = np.asarray(y, dtype=float)
        if y.size == 0:
            raise ValueError("every group needs at least one observation")
        k = min(atoms_per_group, y.size)
        qs = np.quantile(y, (np.arange(k) + 0.5) / k)
        c = np.argmin(np.abs(y[:, None] - qs[None, :]), axis=1)
        used = np.unique(c)
        qs = qs[used]
        c = np.searchsorted(used, c)
        state.c[ell] = c.astype(np.int64)
        state.phi_a[ell] = qs.astype(float)
        state.s_a[ell] = np.full(qs.size, 1.0)
        state.t_a[ell] = np.empty(qs.size, dtype=np.int64)
    all_y = np.concatenate([np.asarray(y, float) for y in data])
    state.sigma_f_sq = max(float(np.var(all_y)) / 4.0, 1e-6)
    state.u = np.ones(state.g)
    state.zeta = np.empty(0, dtype=np.int64)
    v = state.total_child_psi()
    state.room_sum = np.empty(0)
    state.room_sumsq = np.empty(0)
    state.room_logm = np.empty(0)
    for ell in range(state.g):
        for h, x in enumerate(state.phi_a[ell]):
            state.t_a[ell][h] = state.seat_displayed_value(float(x), v, rng)
    # conjugate jump init given the seating
    for ell in range(state.g):
        k = len(state.s_a[ell])
        nh = np.bincount(state.c[ell], minlength=k).astype(float)
        state.s_a[ell] = rng.gamma(nh - config.rho.sigma,
                                   1.0 / (state.u[ell] + config.rho.tau))
    return state


def run_chain(data, config: SamplerConfig, n_iter: int, burn_in: int,
              thin: int, seed, validate_every: int = 0,
              init: Optional[SamplerState] = None) -> list:
    """Run one chain and return the kept records.

    Deterministic given ``seed``.  ``validate_every`` > 0 checks the state
    invariants on that cadence and reports the failing iteration.
    """
    if n_iter < burn_in or burn_in < 0 or thin < 1:
        raise ValueError("need n_iter >= burn_in >= 0 and thin >= 1")
    data = [np.ascontiguousarray(y, dtype=float) for y in data]
    rng = np.random.default_rng(seed)
    state = init if init is not None else init_state(data, config, rng)
    records = []
    for it in range(n_iter):
        sweep(state, data, rng)
        if validate_every and (it + 1) % validate_every == 0:
            try:
                state.validate(data)
            except AssertionError as exc:
                raise NumericError(f"state invariant violated at iteration "
                                   f"{it}: {exc}") from exc
        if it >= burn_in and (it - burn_in) % thin == 0:
            records.append(record_state(state, data, it))
    return records


# ----- prior-consistent construction (joint-distribution testing) ------------


def prior_state(config: SamplerConfig, group_sizes,
                rng: np.random.Generator, max_tries: int = 200):
    """A (state, data) pair drawn exactly from the truncated prior.

    Used by the joint-distribution correctness test: starting the sweep
    from here keeps the chain stationary.  Rare hierarchy draws where some
    group has no truncated atoms are rejected.
    """
    cfg = config
    for _ in range(max_tries):
        try:
            hier = draw_prior_hierarchy(cfg.rho, cfg.rho0, cfg.model,
                                        len(group_sizes), cfg.epsilon, rng)
        except SimulationError:
            continue
        break
    else:
        raise NumericError("could not draw a usable truncated hierarchy")

    g = len(group_sizes)
    state = SamplerState(cfg, g)
    n_mothers = hier.mother_gammas.size
    allocations = []
    for ell, n in enumerate(group_sizes):
        s = hier.child_s[ell]
        allocations.append(rng.choice(s.size, size=int(n), p=s / s.sum()))

    hit_any = [np.unique(alloc) for alloc in allocations]
    occupied = sorted({int(hier.child_room[ell][a])
                       for ell in range(g) for a in hit_any[ell]})
    room_of_mother = {m: j for j, m in enumerate(occupied)}
    state.room_gamma = [float(hier.mother_gammas[m]) for m in occupied]
    state.room_loc = [hier.mother_locs[m] for m in occupied]
    fresh = [m for m in range(n_mothers) if m not in room_of_mother]
    state.fresh_gamma = hier.mother_gammas[list(fresh)] if fresh else np.empty(0)
    state.fresh_loc = [hier.mother_locs[m] for m in fresh]

    for ell in range(g):
        alloc = allocations[ell]
        hit = hit_any[ell]
        imap = {int(a): i for i, a in enumerate(hit)}
        state.s_a[ell] = hier.child_s[ell][hit]
        state.phi_a[ell] = hier.child_phi[ell][hit]
        state.t_a[ell] = np.array([room_of_mother[int(hier.child_room[ell][a])]
                                   for a in hit], dtype=np.int64)
        state.c[ell] = np.array([imap[int(a)] for a in alloc], dtype=np.int64)
        mask = np.ones(hier.child_s[ell].size, dtype=bool)
        mask[hit] = False
        state.s_na_room[ell] = [np.empty(0) for _ in occupied]
        state.phi_na_room[ell] = [np.empty(0) for _ in occupied]
        fresh_s, fresh_phi = [], []
        for a in np.nonzero(mask)[0]:
            m = int(hier.child_room[ell][a])
            if m in room_of_mother:
                j = room_of_mother[m]
                state.s_na_room[ell][j] = np.append(state.s_na_room[ell][j],
                                                    hier.child_s[ell][a])
                state.phi_na_room[ell][j] = np.append(state.phi_na_room[ell][j],
                                                      hier.child_phi[ell][a])
            else:
                fresh_s.append(hier.child_s[ell][a])
                fresh_phi.append(hier.child_phi[ell][a])
        state.s_na_new[ell] = np.asarray(fresh_s, dtype=float)
        state.phi_na_new[ell] = np.asarray(fresh_phi, dtype=float)

    for ell in range(g):
        state.u[ell] = rng.gamma(len(allocations[ell]),
                                 1.0 / state.group_total_mass(ell))
    state.sigma_f_sq = 1.0 / rng.gamma(cfg.alpha_f, 1.0 / cfg.beta_f)
    state.rebuild_room_stats()
    data = resample_observations(state, rng)
    return state, data


def resample_observations(state: SamplerState, rng: np.random.Generator) -> list:
    """Fresh data given the current allocation (likelihood draw)."""
    sd = math.sqrt(state.sigma_f_sq)
    return [state.phi_a[ell][state.c[ell]]
            + rng.normal(0.0, sd, size=state.c[ell].size)
            for ell in range(state.g)]
