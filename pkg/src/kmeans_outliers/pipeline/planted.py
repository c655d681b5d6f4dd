"""Synthetic instances with known ground truth: well-separated Gaussian
clusters plus a shell of far-away outliers, with the exact inlier optimum."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import CenterSet, Dataset, RngStream

__all__ = ["PlantedInstance", "gen_planted"]


@dataclass(frozen=True)
class PlantedInstance:
    """A generated dataset with its ground truth attached.

    ``labels`` holds the planted cluster id per point, ``-1`` for outliers;
    ``opt`` is the exact cost of the true inliers against the true centers
    (each inlier charged to its *nearest* center, ties notwithstanding).
    """

    data: Dataset
    centers: CenterSet
    labels: np.ndarray
    inlier_idx: np.ndarray
    outlier_idx: np.ndarray
    opt: float


def _planted_centers(k: int, dim: int, spread: float) -> np.ndarray:
    """k centers with pairwise distance >= spread: a line in 1-D, a regular
    k-gon (in the first two coordinates) otherwise."""
    centers = np.zeros((k, dim))
    if k == 1:
        return centers
    if dim == 1:
        centers[:, 0] = spread * np.arange(k)
        return centers
    radius = spread / (2.0 * math.sin(math.pi / k))
    angles = 2.0 * math.pi * np.arange(k) / k
    centers[:, 0] = radius * np.cos(angles)
    centers[:, 1] = radius * np.sin(angles)
    return centers


def gen_planted(n: int, k: int, z: int, *, dim: int, separation: float,
                noise_scale: float, outlier_scale: float,
                rng: RngStream) -> PlantedInstance:
    """Generate ``n`` points: ``n - z`` in Gaussian clusters of (near-)equal
    size around ``k`` planted centers, plus ``z`` outliers in a far shell.

    Centers sit at pairwise distance >= ``separation * sqrt(dim) *
    noise_scale``; outliers are drawn uniformly on a shell whose inner radius
    exceeds both ``outlier_scale * separation`` and every center's norm, so
    no outlier is ever cheaper than a typical cluster point.  The point order
    is shuffled so contiguous shards see all clusters.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if z < 0:
        raise ValueError(f"z must be >= 0, got {z}")
    if k + z >= n:
        raise ValueError(f"need k + z < n, got k={k}, z={z}, n={n}")
    if separation <= 0.0:
        raise ValueError(f"separation must be > 0, got {separation}")
    if noise_scale <= 0.0 or outlier_scale <= 0.0:
        raise ValueError("noise_scale and outlier_scale must be > 0")

    gen = rng.generator()
    spread = separation * math.sqrt(dim) * noise_scale
    centers = _planted_centers(k, dim, spread)

    n_in = n - z
    sizes = np.full(k, n_in // k)
    sizes[: n_in % k] += 1
    labels_in = np.repeat(np.arange(k), sizes)
    coords_in = centers[labels_in] + noise_scale * gen.standard_normal((n_in, dim))

    center_norms = np.sqrt((centers ** 2).sum(axis=1))
    r_min = (outlier_scale * separation * max(1.0, math.sqrt(dim) * noise_scale)
             + float(center_norms.max()))
    dirs = gen.standard_normal((z, dim))
    dirs /= np.sqrt((dirs ** 2).sum(axis=1, keepdims=True))
    radii = gen.uniform(r_min, 2.0 * r_min, size=z)
    coords_out = dirs * radii[:, None]

    coords = np.vstack([coords_in, coords_out])
    labels = np.concatenate([labels_in, np.full(z, -1, dtype=np.int64)])
    perm = gen.permutation(n)
    coords, labels = coords[perm], labels[perm]

    inlier_idx = np.flatnonzero(labels >= 0)
    outlier_idx = np.flatnonzero(labels < 0)
    diff = coords[inlier_idx, None, :] - centers[None, :, :]
    opt = float(np.einsum("ijk,ijk->ij", diff, diff).min(axis=1).sum())
    return PlantedInstance(
        data=Dataset(coords),
        centers=CenterSet(centers),
        labels=labels.astype(np.int64),
        inlier_idx=inlier_idx,
        outlier_idx=outlier_idx,
        opt=opt,
    )
