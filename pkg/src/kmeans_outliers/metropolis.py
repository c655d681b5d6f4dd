"""Sublinear-sampling machinery: a Metropolis-Hastings sampler that imitates
clamped-cost-proportional draws without touching every point, a subsampled
robust-cost estimator, a weighted mini-instance ("coreset") solver, and the
end-to-end fast solver that combines them across the guess ladder.

The point of this module is the accounting: every routine here touches
``O~(n/z)``-ish many points per decision instead of ``n``, and the touched
distances can be charged to a :class:`~kmeans_outliers.core.DistanceCounter`
through a :class:`~kmeans_outliers.core.CountingSpace`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    CenterSet,
    ClusteringSolution,
    CostCache,
    CountingSpace,
    Dataset,
    InfeasibleProblem,
    MatrixSpace,
    PenaltyThreshold,
    TotalCostZero,
    _as_theta,
    farthest_indices,
)
from .local_search import SearchBudget, _step_engine, local_search_with_outliers, theta_ladder
from .seeding import _as_generator, overseed_penalized, weighted_choice

__all__ = [
    "CostEstimate",
    "MHConfig",
    "estimate_robust_cost",
    "fast_algorithm",
    "fast_coreset_solve",
    "metropolized_overseed",
    "mh_sample",
]

log = logging.getLogger(__name__)

C_MH = 4.0        # default chain length: ceil(C_MH * n / z)
C_EST = 4.0       # estimator sample count: ceil(C_EST * (n/z) * ln(n)^2)
C_CORESET = 4.0   # coreset subsample count: ceil(C_CORESET * (n k / z) * ln n)
DEFAULT_A = 2.0   # universal outlier-inflation constant of the fast solver
SMALL_Z_FACTOR = 1.0  # delegate when z <= factor * max(k log2 k, log2(n)^2)


@dataclass(frozen=True)
class MHConfig:
    """Chain length and proposal family for the Metropolis-Hastings sampler."""

    chain_steps: int
    proposal: str = "uniform"

    def __post_init__(self):
        if self.chain_steps < 1:
            raise ValueError(f"chain_steps must be >= 1, got {self.chain_steps}")
        if self.proposal != "uniform":
            raise ValueError(f"only the uniform proposal is implemented, got {self.proposal!r}")


@dataclass(frozen=True)
class CostEstimate:
    """Subsampled trimmed-cost estimate.

    ``zeta`` approximates the trimmed cost of the full dataset;
    ``trim_fraction_used`` is the fraction of the subsample actually dropped.
    """

    zeta: float
    sample_size: int
    trim_fraction_used: float


def _cum_weights(weights: np.ndarray) -> tuple[np.ndarray, float]:
    cum = np.cumsum(weights.astype(float))
    return cum, float(cum[-1])


def _draw_site(cum: np.ndarray, total: float, gen: np.random.Generator) -> int:
    j = int(np.searchsorted(cum, gen.random() * total, side="right"))
    return min(j, cum.shape[0] - 1)


def _accept(t_from: float, t_to: float, gen: np.random.Generator) -> bool:
    # min(1, t_to / t_from), with the 0/0 and x/0 conventions: a zero-mass
    # state accepts any positive-mass proposal and rejects zero-mass ones
    if t_from == 0.0:
        return t_to > 0.0
    if t_to >= t_from:
        return True
    return gen.random() < t_to / t_from


def mh_sample(data: Dataset, cache: CostCache, theta, cfg: MHConfig, rng) -> int:
    """Approximate clamped-cost-proportional draw via an accept/reject chain.

    The chain starts at a weight-uniform site and runs ``cfg.chain_steps``
    rounds with a weight-uniform proposal, accepting a move with probability
    ``min(1, tau(y)/tau(x))``.  Per-point clamped costs come from ``cache``.

    Raises
    ------
    TotalCostZero
        If every point's weighted clamped cost is zero.
    """
    th = _as_theta(theta)
    gen = _as_generator(rng)
    w = cache.space.weights
    taus = np.minimum(cache.d1, th)
    mass = w * taus
    if not mass.sum() > 0.0:
        raise TotalCostZero("all clamped costs are zero")
    cum, total = _cum_weights(w)
    x = _draw_site(cum, total, gen)
    tx = float(taus[x])
    for _ in range(cfg.chain_steps):
        y = _draw_site(cum, total, gen)
        ty = float(taus[y])
        if _accept(tx, ty, gen):
            x, tx = y, ty
    if tx == 0.0:
        # the chain never escaped the zero-mass region; fall back to one
        # exact draw (the target is well defined, we checked above)
        return weighted_choice(mass, gen.random())
    return x


def _mh_sample_lazy(space, center_sites: np.ndarray, th: float, steps: int,
                    gen: np.random.Generator, cum: np.ndarray, total: float) -> int:
    """Chain step with on-demand clamped costs, memoized for the round.

    Each state evaluation costs ``len(center_sites)`` charged distance
    entries; at most ``steps + 1`` states are evaluated per call.  Returns -1
    if a certification pass proves the whole distribution is zero.
    """
    memo: dict[int, float] = {}

    def tau_of(i: int) -> float:
        v = memo.get(i)
        if v is None:
            v = min(th, float(space.cost_entries(i, center_sites).min()))
            memo[i] = v
        return v

    x = _draw_site(cum, total, gen)
    tx = tau_of(x)
    for _ in range(steps):
        y = _draw_site(cum, total, gen)
        ty = tau_of(y)
        if _accept(tx, ty, gen):
            x, tx = y, ty
    if tx > 0.0:
        return x
    # certification pass: compute every clamped cost once, then either report
    # exhaustion or make one exact draw
    best = np.full(space.n, np.inf)
    for c in center_sites:
        np.minimum(best, space.cost_row(int(c)), out=best)
    mass = space.weights * np.minimum(best, th)
    if not mass.sum() > 0.0:
        return -1
    return weighted_choice(mass, gen.random())


def _metropolized_sites(space, ell: int, th: float, steps: int,
                        gen: np.random.Generator) -> np.ndarray:
    """Metropolized analogue of penalized overseeding, returning site indices.

    Stops early (like the exact overseeder) if the clamped cost is certified
    to be zero before ``ell`` centers are drawn.
    """
    if ell < 1:
        raise ValueError(f"ell must be >= 1, got {ell}")
    w = space.weights
    cum, total = _cum_weights(w)
    sites = [_draw_site(cum, total, gen)]
    while len(sites) < ell:
        j = _mh_sample_lazy(space, np.asarray(sites, dtype=np.int64), th, steps, gen, cum, total)
        if j < 0:
            break
        sites.append(j)
    return np.asarray(sites, dtype=np.int64)


def metropolized_overseed(space, ell: int, theta, cfg: MHConfig | None, rng) -> CenterSet:
    """Overseeding where each clamped-cost-proportional draw is replaced by a
    Metropolis-Hastings chain, so a draw costs ``O(chain_steps * |C|)``
    distance entries instead of ``n``.

    Without an explicit config the chain length falls back to ``ceil(4 n)``
    (the ``n/z`` default needs a z, which callers that have one should bake
    into ``cfg``).
    """
    th = _as_theta(theta)
    gen = _as_generator(rng)
    steps = cfg.chain_steps if cfg is not None else math.ceil(C_MH * space.n)
    sites = _metropolized_sites(space, ell, th, steps, gen)
    return CenterSet(space.coords[sites])


# ---------------------------------------------------------------------------
# robust cost estimator


def _trimmed_sum(costs: np.ndarray, trim: int) -> float:
    """Sum of ``costs`` after dropping the ``trim`` largest entries (ties by
    position, earliest dropped first)."""
    if trim >= costs.shape[0]:
        return 0.0
    order = np.lexsort((np.arange(costs.shape[0]), -costs))
    return float(costs[order[trim:]].sum())


def _estimate_from_costs(costs: np.ndarray, n: int, z: int, A: float) -> CostEstimate:
    N = costs.shape[0]
    trim = math.ceil(4.0 * A * z * N / n)
    zeta = (n / N) * _trimmed_sum(costs, trim)
    return CostEstimate(zeta=zeta, sample_size=N, trim_fraction_used=min(trim, N) / N)


def _estimator_size(n: int, z: int, c_est: float) -> int:
    return max(1, math.ceil(c_est * (n / z) * math.log(max(n, 2)) ** 2))


def estimate_robust_cost(data: Dataset, centers: CenterSet, z: int, A: float, rng,
                         *, c_est: float = C_EST) -> CostEstimate:
    """Estimate the trimmed cost from a uniform-with-replacement subsample.

    Draws ``N = ceil(c_est * (n/z) * ln(n)^2)`` copies, trims the
    ``ceil(4 A z N / n)`` most expensive draws, and rescales by ``n/N``.
    """
    if not 1 <= z <= data.total_weight:
        raise ValueError(f"z must be in [1, total weight], got {z}")
    if A < 1.0:
        raise ValueError(f"A must be >= 1, got {A}")
    gen = _as_generator(rng)
    n = data.total_weight
    N = _estimator_size(n, z, c_est)
    cum, total = _cum_weights(data.weights)
    sites = np.minimum(
        np.searchsorted(cum, gen.random(N) * total, side="right"), data.n - 1
    )
    sampled = data.coords[sites]
    best = np.full(N, np.inf)
    for c in centers.coords:
        diff = sampled - c
        np.minimum(best, np.einsum("ij,ij->i", diff, diff), out=best)
    return _estimate_from_costs(best, n, z, A)


def _estimate_sites(space, center_sites: np.ndarray, z: int, A: float,
                    gen: np.random.Generator, c_est: float) -> CostEstimate:
    """Counted variant: sampled costs via charged ``cost_entries`` lookups."""
    n = space.total_weight
    N = _estimator_size(n, z, c_est)
    cum, total = _cum_weights(space.weights)
    sites = np.minimum(
        np.searchsorted(cum, gen.random(N) * total, side="right"), space.n - 1
    )
    best = np.full(N, np.inf)
    for c in center_sites:
        np.minimum(best, space.cost_entries(int(c), sites), out=best)
    return _estimate_from_costs(best, n, z, A)


# ---------------------------------------------------------------------------
# weighted mini-instance solve


def _solve_weighted_penalized(inst, k: int, th: float, gen: np.random.Generator) -> list[int]:
    """Seed + bounded local search for k centers on a small weighted space.

    Returns site positions into ``inst``; pads deterministically if sampling
    ran out of positive-mass sites before reaching k.
    """
    _, cache = overseed_penalized(inst, k, th, gen)
    if len(cache.centers) < k:
        have = set(cache.centers)
        for site in range(inst.n):
            if len(cache.centers) == k:
                break
            if site not in have:
                cache.add_center(site)
    for _ in range(SearchBudget.for_params(k, 1.0).steps):
        try:
            _step_engine(cache, th, gen)
        except TotalCostZero:
            break
    return list(cache.centers)


def fast_coreset_solve(data: Dataset, reference: CenterSet, theta, k: int, rng,
                       *, z: int | None = None, sample_size: int | None = None,
                       c_coreset: float = C_CORESET) -> CenterSet:
    """Solve for k centers on a weighted shadow of the data.

    A uniform subsample is bucketed to its nearest reference center; the
    bucket counts become integer weights on the reference sites, and the
    weighted instance is solved by penalized seeding plus local search.
    Buckets that catch no sample keep weight zero but stay in the instance.

    One of ``z`` (to derive ``sample_size = ceil(c_coreset * (n k / z) * ln n)``)
    or an explicit ``sample_size`` must be given.
    """
    th = _as_theta(theta)
    gen = _as_generator(rng)
    n = data.total_weight
    if sample_size is None:
        if z is None:
            raise ValueError("pass z (to derive the subsample size) or sample_size")
        sample_size = max(1, math.ceil(c_coreset * (n * k / max(z, 1)) * math.log(max(n, 2))))
    cum, total = _cum_weights(data.weights)
    sites = np.minimum(
        np.searchsorted(cum, gen.random(sample_size) * total, side="right"), data.n - 1
    )
    sampled = data.coords[sites]
    best = np.full(sample_size, np.inf)
    assign = np.zeros(sample_size, dtype=np.int64)
    for j, c in enumerate(reference.coords):
        diff = sampled - c
        d = np.einsum("ij,ij->i", diff, diff)
        closer = d < best
        best[closer] = d[closer]
        assign[closer] = j
    what = np.bincount(assign, minlength=len(reference)).astype(np.int64)
    inst = Dataset(reference.coords, weights=what)
    chosen = _solve_weighted_penalized(inst, min(k, inst.n), th, gen)
    return CenterSet(reference.coords[chosen])


def _coreset_solve_sites(space, y_sites: np.ndarray, th: float, k: int,
                         sample_size: int, gen: np.random.Generator) -> np.ndarray:
    """Counted variant over data sites; returns k chosen data-site indices."""
    cum, total = _cum_weights(space.weights)
    sites = np.minimum(
        np.searchsorted(cum, gen.random(sample_size) * total, side="right"), space.n - 1
    )
    best = np.full(sample_size, np.inf)
    assign = np.zeros(sample_size, dtype=np.int64)
    for j, y in enumerate(y_sites):
        d = space.cost_entries(int(y), sites)
        closer = d < best
        best[closer] = d[closer]
        assign[closer] = j
    what = np.bincount(assign, minlength=y_sites.shape[0]).astype(np.int64)
    m = y_sites.shape[0]
    D = np.empty((m, m))
    for i, y in enumerate(y_sites):
        D[i] = space.cost_entries(int(y), y_sites)
    inst = MatrixSpace(D, weights=np.maximum(what, 0))
    chosen = _solve_weighted_penalized(inst, min(k, m), th, gen)
    return y_sites[np.asarray(chosen, dtype=np.int64)]


# ---------------------------------------------------------------------------
# end-to-end fast solver


def _delegation_threshold(n: int, k: int, factor: float) -> float:
    return factor * max(k * math.log2(max(k, 2)), math.log2(max(n, 4)) ** 2)


def fast_algorithm(data: Dataset, k: int, z: int, rng, *, A: float = DEFAULT_A,
                   cfg: MHConfig | None = None, ell_factor: int = 2,
                   counter=None, small_z_factor: float = SMALL_Z_FACTOR,
                   c_est: float = C_EST, c_coreset: float = C_CORESET) -> ClusteringSolution:
    """Sampling-complexity-optimized solver for large z.

    For small z (up to ``small_z_factor * max(k log2 k, log2(n)^2)``) the
    problem is handed unchanged to the full local-search ladder.  Otherwise
    every guess rung runs metropolized overseeding, a weighted coreset solve,
    and a subsampled cost estimate; the rung with the smallest estimate wins
    and its ``min(ceil(10 A z), n - k)`` most expensive points are declared
    outliers.

    ``counter`` (a DistanceCounter) charges every distance entry the sampling
    stages touch; the final report-building pass over the full data is not
    charged, since it is not part of the sampling work the counter measures.
    """
    if k < 1 or z < 0:
        raise ValueError(f"need k >= 1 and z >= 0, got k={k}, z={z}")
    if k + z >= data.total_weight:
        raise InfeasibleProblem(
            f"k + z = {k + z} must be below the total weight {data.total_weight}"
        )
    n = data.n
    if z <= _delegation_threshold(n, k, small_z_factor):
        log.info("z=%d below sampling threshold; delegating to the full ladder", z)
        return local_search_with_outliers(data, k, z, eps=1.0, rng=rng)

    space = data if counter is None else CountingSpace(data, counter)
    steps = cfg.chain_steps if cfg is not None else math.ceil(C_MH * n / max(z, 1))
    ell = max(k + 1, ell_factor * k)
    coreset_size = max(1, math.ceil(c_coreset * (n * k / z) * math.log(max(n, 2))))
    ladder = theta_ladder(n, max(1.0, data.diameter_sq_bound()), z, eps=1.0, beta=1.0)

    best = None  # (zeta, rung index, center sites, theta)
    for i, entry in enumerate(ladder):
        gen = rng.split(i).generator()
        th = float(entry.theta)
        y_sites = _metropolized_sites(space, ell, th, steps, gen)
        c_sites = _coreset_solve_sites(space, y_sites, th, min(k, y_sites.shape[0]),
                                       coreset_size, gen)
        if c_sites.shape[0] < k:
            # degenerate rung (sampling exhausted); pad with unused sites
            have = set(int(s) for s in c_sites)
            pad = [s for s in range(n) if s not in have][: k - c_sites.shape[0]]
            c_sites = np.concatenate([c_sites, np.asarray(pad, dtype=np.int64)])
        est = _estimate_sites(space, c_sites, z, A, gen, c_est)
        if best is None or est.zeta < best[0]:
            best = (est.zeta, i, c_sites, entry.theta)

    _, _, c_sites, theta = best
    centers = CenterSet.from_indices(data, c_sites)
    z_out = min(math.ceil(10.0 * A * z), data.total_weight - k)
    out_idx, phi_in = farthest_indices(data, centers, z_out)
    tau_cost = float(
        (data.weights * np.minimum(CostCache.from_scratch(data, c_sites).d1, float(theta))).sum()
    )
    return ClusteringSolution(
        centers=centers,
        outliers=tuple(int(i) for i in out_idx),
        phi_cost=phi_in,
        tau_cost=tau_cost,
        theta=theta,
        qualified=True,
    )
