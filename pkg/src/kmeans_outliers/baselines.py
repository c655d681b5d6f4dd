"""Reference algorithms: the Lloyd-style refinement loop that re-fits centers
while ignoring the ``z`` most expensive points, and the plain seeding baseline
(uniform-cost seeding followed by that refinement).

These double as the post-processing step of the experiment protocol: every
candidate solution gets a fixed number of trimmed Lloyd iterations before
being reported.
"""

from __future__ import annotations

import numpy as np

from .core import (
    CenterSet,
    ClusteringSolution,
    Dataset,
    PenaltyThreshold,
    _trim,
    farthest_indices,
    tau_total,
)
from .seeding import _as_generator, overseed_penalized

__all__ = ["kmeanspp_baseline", "lloyd_outliers"]


def _assign(coords: np.ndarray, centers: np.ndarray):
    """Nearest-center squared distance and index, ties to the earliest center."""
    d1 = np.full(coords.shape[0], np.inf)
    a1 = np.zeros(coords.shape[0], dtype=np.int64)
    for j in range(centers.shape[0]):
        diff = coords - centers[j]
        d = np.einsum("ij,ij->i", diff, diff)
        better = d < d1
        d1[better] = d[better]
        a1[better] = j
    return d1, a1


def lloyd_outliers(data: Dataset, c0: CenterSet, z: int, iters: int = 10,
                   rng=None) -> ClusteringSolution:
    """Trimmed Lloyd iterations: assign, drop the z priciest copies, re-fit.

    Each iteration assigns every point to its nearest center, marks the ``z``
    most expensive copies as outliers (largest cost first, lower index on
    ties), and moves each center to the weighted mean of its surviving
    points.  A center left with no points is re-seeded on a point drawn
    uniformly from the current outliers, or from the whole dataset when there
    are none.  The inlier cost never increases between iterations unless a
    re-seed fires.

    Parameters
    ----------
    data : Dataset
    c0 : CenterSet
        Initial centers (defines k).
    z : int
        Copies to trim per iteration; must be below the total weight.
    iters : int, optional
        Refinement rounds; 10 unless stated otherwise.
    rng : RngStream or numpy Generator, optional
        Only consumed by empty-cluster re-seeds.
    """
    if not 0 <= z < data.total_weight:
        raise ValueError(
            f"z must be in [0, total weight), got z={z} for weight {data.total_weight}"
        )
    if iters < 0:
        raise ValueError(f"iters must be >= 0, got {iters}")
    gen = None if rng is None else _as_generator(rng)
    centers = c0.coords.copy()
    k = centers.shape[0]
    for _ in range(iters):
        d1, a1 = _assign(data.coords, centers)
        kept, _ = _trim(d1, data.weights, z)
        outer = np.flatnonzero(kept < data.weights)
        for j in range(k):
            mask = a1 == j
            mass = float(kept[mask].sum())
            if mass > 0.0:
                centers[j] = (data.coords[mask] * kept[mask, None]).sum(axis=0) / mass
            else:
                if gen is None:
                    raise ValueError("empty-cluster re-seed needs an rng")
                pool = outer if outer.size else np.arange(data.n)
                centers[j] = data.coords[int(pool[gen.integers(pool.shape[0])])]
    final = CenterSet(centers)
    out_idx, phi = farthest_indices(data, final, z)
    return ClusteringSolution(
        centers=final,
        outliers=tuple(int(i) for i in out_idx),
        phi_cost=phi,
        tau_cost=tau_total(data, final, PenaltyThreshold.infinite()),
        theta=PenaltyThreshold.infinite(),
        qualified=True,
    )


def kmeanspp_baseline(data: Dataset, k: int, z: int, iters: int = 10,
                      rng=None) -> ClusteringSolution:
    """Cost-proportional seeding with no penalty, then trimmed Lloyd rounds.

    Seeding runs with an infinite threshold (so draws are plain
    cost-proportional) and exactly ``k`` centers; the stream is split into a
    seeding half (salt 0) and a refinement half (salt 1).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    sites, _ = overseed_penalized(data, k, PenaltyThreshold.infinite(), rng.split(0))
    picks = [int(s) for s in sites]
    unused = (i for i in range(data.n) if i not in set(picks))
    while len(picks) < k:  # zero-mass early stop: pad with the lowest unused sites
        picks.append(next(unused))
    c0 = CenterSet.from_indices(data, picks)
    return lloyd_outliers(data, c0, z, iters=iters, rng=rng.split(1))
