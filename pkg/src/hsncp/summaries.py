"""Posterior post-processing of chain output.

Everything operates on across-group labels: the posterior similarity
matrix averages co-clustering indicators, the point estimate minimizes the
chain-averaged variation-of-information distance over the sampled
partitions, density grids average the truncated mixture densities, and the
entropy table quantifies how evenly each estimated cluster draws from the
groups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["PosteriorSimilarity", "similarity_matrix", "point_estimate_vi",
           "predictive_density_grid", "cluster_entropy", "adjusted_rand_index",
           "variation_of_information"]


@dataclass
class PosteriorSimilarity:
    """Pairwise co-clustering frequencies over all observations, groups
    concatenated in input order."""

    matrix: np.ndarray

    def __post_init__(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("similarity matrix must be square")


def _flat_labels(record) -> np.ndarray:
    return np.concatenate([np.asarray(lab, dtype=np.int64)
                           for lab in record.labels])


def similarity_matrix(chain) -> PosteriorSimilarity:
    """Fraction of kept iterations in which each pair shares a room."""
    if not chain:
        raise ValueError("similarity_matrix needs a nonempty chain")
    first = _flat_labels(chain[0])
    acc = np.zeros((first.size, first.size))
    for rec in chain:
        lab = _flat_labels(rec)
        acc += lab[:, None] == lab[None, :]
    acc /= len(chain)
    return PosteriorSimilarity(acc)


def _canonical(labels: np.ndarray) -> tuple:
    _, canon = np.unique(labels, return_inverse=True)
    return tuple(canon.tolist())


def _contingency(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ka, kb = a.max() + 1, b.max() + 1
    return np.bincount(a * kb + b, minlength=ka * kb).reshape(ka, kb)


def variation_of_information(a, b) -> float:
    """VI distance between two partitions, in nats."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    n = a.size
    cont = _contingency(a, b)
    pa = cont.sum(axis=1) / n
    pb = cont.sum(axis=0) / n
    pab = cont / n
    with np.errstate(divide="ignore", invalid="ignore"):
        ha = -np.sum(pa[pa > 0] * np.log(pa[pa > 0]))
        hb = -np.sum(pb[pb > 0] * np.log(pb[pb > 0]))
        nz = pab > 0
        mi = np.sum(pab[nz] * (np.log(pab[nz])
                               - np.log(np.outer(pa, pb)[nz])))
    return float(ha + hb - 2.0 * mi)


def point_estimate_vi(chain):
    """Partition minimizing the chain-averaged VI distance.

    The search is restricted to the (deduplicated) sampled partitions,
    weighted by their multiplicities.
    """
    if not chain:
        raise ValueError("point_estimate_vi needs a nonempty chain")
    seen: dict = {}
    for rec in chain:
        key = _canonical(_flat_labels(rec))
        seen[key] = seen.get(key, 0) + 1
    parts = [np.asarray(k, dtype=np.int64) for k in seen]
    counts = np.array(list(seen.values()), dtype=float)
    m = len(parts)
    vi = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            vi[i, j] = vi[j, i] = variation_of_information(parts[i], parts[j])
    expected = vi @ counts / counts.sum()
    return parts[int(np.argmin(expected))]


def predictive_density_grid(chain, group: int, grid) -> np.ndarray:
    """Posterior mean density of one group on a grid.

    Per iteration, the (normalized) truncated mixture with Gaussian kernels
    of the recorded noise variance; then averaged over iterations.
    """
    if not chain:
        raise ValueError("predictive_density_grid needs a nonempty chain")
    grid = np.asarray(grid, dtype=float)
    acc = np.zeros_like(grid)
    for rec in chain:
        s = np.asarray(rec.atom_s[group], dtype=float)
        phi = np.asarray(rec.atom_phi[group], dtype=float)
        w = s / s.sum()
        var = rec.sigma_f_sq
        z = (grid[:, None] - phi[None, :])
        dens = np.exp(-0.5 * z * z / var) / math.sqrt(2.0 * math.pi * var)
        acc += dens @ w
    return acc / len(chain)


def cluster_entropy(partition, group_ids):
    """Per-cluster Shannon entropy (nats) of group composition.

    Returns rows ``(cluster, size, entropy, max_entropy)`` where the
    maximum is log of the number of groups.
    """
    partition = np.asarray(partition, dtype=np.int64)
    group_ids = np.asarray(group_ids, dtype=np.int64)
    if partition.size != group_ids.size:
        raise ValueError("partition and group ids must align")
    g = int(group_ids.max()) + 1 if group_ids.size else 0
    rows = []
    for k in np.unique(partition):
        sel = group_ids[partition == k]
        props = np.bincount(sel, minlength=g) / sel.size
        nz = props[props > 0]
        rows.append({"cluster": int(k), "size": int(sel.size),
                     "entropy": float(-np.sum(nz * np.log(nz))),
                     "max_entropy": float(math.log(g)) if g else 0.0})
    return rows


def adjusted_rand_index(a, b) -> float:
    """Pair-counting ARI between two partitions."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    _, a = np.unique(a, return_inverse=True)
    _, b = np.unique(b, return_inverse=True)
    cont = _contingency(a, b)
    n = a.size

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_ij = comb2(cont).sum()
    sum_a = comb2(cont.sum(axis=1)).sum()
    sum_b = comb2(cont.sum(axis=0)).sum()
    total = comb2(np.array(n)).item()
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))
