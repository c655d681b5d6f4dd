"""Penalized seeding: cost-proportional center sampling with clamped costs.

With an infinite penalty threshold this is exactly classic D^2 (k-means++)
seeding; with a finite threshold every point's sampling mass is capped, so
far-away junk cannot soak up the whole distribution.  Overseeding simply
keeps drawing past ``k`` centers, which is what the downstream local search
and coreset stages expect.
"""

from __future__ import annotations

import numpy as np

from .core import (
    CostCache,
    Dataset,
    RngStream,
    TotalCostZero,
    _as_theta,
    _center_coords,
    _min_cost_to,
)

__all__ = ["overseed_penalized", "sample_tau_weighted", "weighted_choice"]


def _as_generator(rng) -> np.random.Generator:
    """Accept an RngStream (fresh generator) or a Generator (used in place)."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def weighted_choice(weights: np.ndarray, u: float) -> int:
    """Index drawn from ``weights`` by inverse CDF at quantile ``u``.

    Deterministic kernel shared by all samplers: index ``i`` owns the
    half-open interval ``[cum[i-1], cum[i]) / total``, so zero-weight entries
    are never selected and exact breakpoints resolve to the right neighbor.
    """
    w = np.asarray(weights, dtype=float)
    cum = np.cumsum(w)
    total = cum[-1]
    if not total > 0.0:
        raise ValueError("weights must have positive total")
    j = int(np.searchsorted(cum, u * total, side="right"))
    return min(j, w.shape[0] - 1)


def sample_tau_weighted(data: Dataset, centers, theta, rng) -> int:
    """One point index drawn with probability proportional to its weighted
    clamped cost against ``centers``.

    Raises
    ------
    TotalCostZero
        If every point has clamped cost zero (the distribution is undefined).
    """
    th = _as_theta(theta)
    phi = _min_cost_to(data.coords, _center_coords(centers))
    mass = data.weights * np.minimum(phi, th)
    if not mass.sum() > 0.0:
        raise TotalCostZero("all clamped costs are zero")
    return weighted_choice(mass, _as_generator(rng).random())


def _sample_from_cache(cache: CostCache, theta: float, gen: np.random.Generator) -> int:
    """Cache-backed version of :func:`sample_tau_weighted` for inner loops."""
    mass = cache.space.weights * cache.tau_row(theta)
    if not mass.sum() > 0.0:
        raise TotalCostZero("all clamped costs are zero")
    return weighted_choice(mass, gen.random())


def overseed_penalized(space, ell: int, theta, rng):
    """Draw up to ``ell`` centers: first weight-uniform, then repeatedly
    proportional to the current clamped cost.

    Parameters
    ----------
    space : Dataset or compatible space
        Anything exposing ``n``, ``weights``, ``cost_row`` and
        ``cost_entries`` (centers are picked among the data sites).
    ell : int
        Number of centers to draw; typically an oversampled multiple of k.
    theta : PenaltyThreshold or float
        Clamp applied to each point's sampling mass.
    rng : RngStream or numpy Generator

    Returns
    -------
    idx : ndarray of int
        Chosen sites in draw order.  May be shorter than ``ell`` when the
        clamped cost hits zero early — at that point the centers already
        cover every point and further draws are undefined.
    cache : CostCache
        Nearest-center cache over the chosen sites, ready for local search.
    """
    if ell < 1:
        raise ValueError(f"ell must be >= 1, got {ell}")
    th = _as_theta(theta)
    gen = _as_generator(rng)
    w = space.weights
    cache = CostCache(space)
    first = weighted_choice(w.astype(float), gen.random())
    cache.add_center(first)
    chosen = [first]
    for _ in range(ell - 1):
        mass = w * cache.tau_row(th)
        if not mass.sum() > 0.0:
            break
        j = weighted_choice(mass, gen.random())
        cache.add_center(j)
        chosen.append(j)
    return np.asarray(chosen, dtype=np.int64), cache
