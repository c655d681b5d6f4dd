"""Slow, independent reference implementations used as test oracles.

Everything here is written with plain Python loops (or the most literal
possible reduction) so that it shares no code path, no caching and no
algebraic shortcut with the package under test.  Values derived from these
oracles are frozen in the test modules.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def brute_dist_sq(a, b) -> float:
    return float(sum((float(x) - float(y)) ** 2 for x, y in zip(a, b, strict=True)))


def brute_phi_point(x, centers) -> float:
    return min(brute_dist_sq(x, c) for c in centers)


def brute_tau_point(x, centers, theta: float) -> float:
    return min(theta, brute_phi_point(x, centers))


def brute_tau_total(points, centers, theta: float, weights=None) -> float:
    if weights is None:
        weights = [1] * len(points)
    return float(
        sum(w * brute_tau_point(x, centers, theta) for x, w in zip(points, weights))
    )


def brute_out_set(points, centers, theta: float) -> set[int]:
    return {i for i, x in enumerate(points) if brute_phi_point(x, centers) >= theta}


def brute_mean(points, weights=None):
    if weights is None:
        weights = [1] * len(points)
    total = float(sum(weights))
    dim = len(points[0])
    return tuple(
        sum(w * float(p[j]) for p, w in zip(points, weights)) / total
        for j in range(dim)
    )


def brute_phi_minus_z(points, centers, z: int, weights=None) -> float:
    """Trimmed cost: drop the z largest per-point costs (lower index first on
    ties), counting a weight-w point as w identical copies."""
    if weights is None:
        weights = [1] * len(points)
    costs = [(brute_phi_point(x, centers), i, w) for i, (x, w) in enumerate(zip(points, weights))]
    # Drop order: largest cost first; equal costs drop the lower index first.
    order = sorted(costs, key=lambda t: (-t[0], t[1]))
    remaining = z
    total = 0.0
    for cost, _i, w in order:
        dropped = min(w, remaining)
        remaining -= dropped
        total += (w - dropped) * cost
    return total


def brute_phi_minus_z_enum(points, centers, z: int) -> float:
    """Literal definition: minimum cost over all subsets of exactly z removed
    points (unit weights, tiny n only)."""
    n = len(points)
    best = math.inf
    for out in itertools.combinations(range(n), z):
        outs = set(out)
        cost = sum(brute_phi_point(x, centers) for i, x in enumerate(points) if i not in outs)
        best = min(best, cost)
    return best


def brute_nearest_two(x, centers) -> tuple[float, float, int]:
    """(d1, d2, index of nearest center); ties to the smaller center index."""
    ds = [brute_dist_sq(x, c) for c in centers]
    a1 = min(range(len(ds)), key=lambda j: (ds[j], j))
    d1 = ds[a1]
    rest = [d for j, d in enumerate(ds) if j != a1]
    d2 = min(rest) if rest else math.inf
    return d1, d2, a1


def brute_swap_costs(points, centers, candidate, theta: float, weights=None) -> list[float]:
    """Clamped totals after adding `candidate` and removing each d in
    centers + [candidate] (the last entry is the no-op swap)."""
    pool = list(centers) + [candidate]
    totals = []
    for r in range(len(pool)):
        kept = [c for j, c in enumerate(pool) if j != r]
        totals.append(brute_tau_total(points, kept, theta, weights))
    return totals


def grid_min_tau(points_A, theta: float, resolution: int = 200):
    """Minimum of tau(A, {mu}) over a resolution x resolution grid spanning the
    bounding box of A (planar points).  Upper-bounds the true infimum."""
    arr = np.asarray(points_A, dtype=float)
    lo = arr.min(axis=0)
    hi = arr.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    gx = np.linspace(lo[0] - 0.05 * span[0], hi[0] + 0.05 * span[0], resolution)
    gy = np.linspace(lo[1] - 0.05 * span[1], hi[1] + 0.05 * span[1], resolution)
    xx, yy = np.meshgrid(gx, gy, indexing="ij")
    grid = np.stack([xx.ravel(), yy.ravel()], axis=1)
    # squared distances of every A-point to every grid candidate
    d = ((arr[:, None, :] - grid[None, :, :]) ** 2).sum(axis=2)
    tau = np.minimum(d, theta).sum(axis=0)
    return float(tau.min())


def mh_transition_matrix(pi) -> np.ndarray:
    """Exact transition matrix of the accept/reject chain with a uniform
    proposal over all n states (self-proposals included) and target pi."""
    pi = np.asarray(pi, dtype=float)
    n = len(pi)
    P = np.zeros((n, n))
    for x in range(n):
        for y in range(n):
            if y == x:
                continue
            if pi[x] == 0.0:
                acc = 1.0 if pi[y] > 0.0 else 0.0
            else:
                acc = min(1.0, pi[y] / pi[x])
            P[x, y] = acc / n
        P[x, x] = 1.0 - P[x].sum()
    return P


def power_distribution(P: np.ndarray, p0, steps: int) -> np.ndarray:
    p = np.asarray(p0, dtype=float)
    for _ in range(steps):
        p = p @ P
    return p
