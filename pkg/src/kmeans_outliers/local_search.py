"""Sampling-based local search over a ladder of optimum-cost guesses.

One search step samples a candidate center proportional to the clamped cost,
then greedily drops whichever center (possibly the candidate itself) keeps
the clamped total lowest, so the total never increases.  The full solver
wraps this in a geometric ladder of guesses for the unknown optimal cost,
turning each guess into a penalty threshold, and keeps the best intermediate
state whose priced-out point count stays within the declared outlier budget.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    CenterSet,
    ClusteringSolution,
    CostCache,
    Dataset,
    InfeasibleProblem,
    PenaltyThreshold,
    TotalCostZero,
    _as_theta,
)
from .seeding import _as_generator, overseed_penalized, weighted_choice

__all__ = [
    "LadderEntry",
    "SearchBudget",
    "local_search_step",
    "local_search_with_outliers",
    "theta_ladder",
]

log = logging.getLogger(__name__)

# theta = (BETA_NUMERATOR / eps) * opt_guess / z unless overridden
BETA_NUMERATOR = 300.0
# budget = ceil(C1 * k * ln ln max(k,3) + C2 * k * ln(1/eps) / eps)
BUDGET_C1 = 5.0
BUDGET_C2 = 5.0


@dataclass(frozen=True)
class LadderEntry:
    """One rung of the guess ladder: a cost guess and its penalty threshold."""

    opt_guess: float
    theta: PenaltyThreshold


@dataclass(frozen=True)
class SearchBudget:
    """Number of local-search steps to run per ladder rung."""

    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"budget must be a positive step count, got {self.steps}")

    @classmethod
    def for_params(cls, k: int, eps: float, c1: float = BUDGET_C1, c2: float = BUDGET_C2) -> "SearchBudget":
        raw = c1 * k * math.log(math.log(max(k, 3))) + c2 * k * math.log(1.0 / eps) / eps
        return cls(max(1, math.ceil(raw)))


def theta_ladder(n: int, delta_sq_bound: float, z: int, eps: float, beta: float | None = None):
    """Geometric ladder of optimum guesses ``2^0 .. 2^ceil(log2(n * delta_sq_bound))``
    with thresholds ``beta * guess / z`` (``beta`` defaults to ``300/eps``).

    With ``z = 0`` there is nothing to price out and the ladder collapses to a
    single infinite-threshold rung (plain unclamped objective); this mode
    switch is logged.
    """
    if n < 2:
        raise ValueError(f"need at least 2 points, got n={n}")
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must be in (0, 1], got {eps}")
    if delta_sq_bound < 1.0:
        raise ValueError(f"squared-diameter bound must be >= 1, got {delta_sq_bound}")
    if z < 0:
        raise ValueError(f"z must be >= 0, got {z}")
    if z == 0:
        log.info("z=0: single infinite-threshold rung, penalties disabled")
        return [LadderEntry(1.0, PenaltyThreshold.infinite())]
    if beta is None:
        beta = BETA_NUMERATOR / eps
    top = math.ceil(math.log2(n * delta_sq_bound))
    return [
        LadderEntry(float(2 ** i), PenaltyThreshold(beta * float(2 ** i) / z))
        for i in range(top + 1)
    ]


# ---------------------------------------------------------------------------
# one swap step


def _swap_totals(cache: CostCache, candidate: int, theta) -> tuple[np.ndarray, np.ndarray]:
    """Clamped totals after adding site ``candidate`` and removing each member
    of the pool ``centers + [candidate]`` in turn (last entry = removing the
    candidate again, i.e. the no-op).

    Uses the nearest/second-nearest cache: with the candidate added, the
    total after removing pool position r is the clamped-nearest total plus,
    for points assigned to r, the climb to their second choice.  One pass,
    no per-removal rescan.  Also returns the candidate's cost row so the
    caller can reuse it.
    """
    th = _as_theta(theta)
    space = cache.space
    w = space.weights
    kpos = len(cache.centers)
    dc = space.cost_row(candidate)
    closer = dc < cache.d1
    d1n = np.where(closer, dc, cache.d1)
    d2n = np.where(closer, cache.d1, np.minimum(cache.d2, dc))
    a1n = np.where(closer, kpos, cache.a1)
    t1 = np.minimum(d1n, th)
    base = float((w * t1).sum())
    climb = w * (np.minimum(d2n, th) - t1)
    corr = np.bincount(a1n, weights=climb, minlength=kpos + 1)
    return base + corr, dc


def _step_engine(cache: CostCache, theta, gen: np.random.Generator) -> tuple[int, float]:
    """One in-place search step on ``cache``.

    Returns ``(removed_pool_position, new_total)``; position -1 means the
    best move was the no-op and the centers are unchanged.
    """
    th = _as_theta(theta)
    mass = cache.space.weights * np.minimum(cache.d1, th)
    if not mass.sum() > 0.0:
        raise TotalCostZero("all clamped costs are zero; nothing to sample")
    c = weighted_choice(mass, gen.random())
    totals, dc = _swap_totals(cache, c, th)
    r = int(np.argmin(totals))  # ties resolve to the smallest pool position
    if r == len(cache.centers):
        return -1, float(totals[r])
    cache.add_center(c, _row=dc)
    cache.remove_center(r)
    return r, float(totals[r])


def _locate_rows(data: Dataset, centers: CenterSet) -> list[int]:
    sites = []
    for c in centers.coords:
        hit = np.flatnonzero((data.coords == c).all(axis=1))
        if hit.size == 0:
            raise ValueError(
                "centers must be data points; pass the cache built alongside them"
            )
        sites.append(int(hit[0]))
    return sites


def local_search_step(data: Dataset, centers: CenterSet, cache, theta, rng) -> CenterSet:
    """One swap step: sample a candidate proportional to clamped cost, remove
    the pool member whose removal keeps the clamped total lowest.

    The result never costs more than ``centers`` (removing the candidate
    itself is always available).  ``cache`` is updated in place; pass None to
    have it built by locating each center among the data points.
    """
    if cache is None:
        cache = CostCache(data, _locate_rows(data, centers))
    if not cache.centers:
        raise ValueError("need at least one current center")
    _step_engine(cache, theta, _as_generator(rng))
    return CenterSet.from_indices(data, cache.centers)


# ---------------------------------------------------------------------------
# full ladder solver


@dataclass
class _RungOutcome:
    theta: PenaltyThreshold
    q_phi: float | None  # best qualified intermediate, None if none qualified
    q_tau: float
    q_centers: tuple
    q_out: np.ndarray
    final_tau: float
    final_centers: tuple
    final_out: np.ndarray


def _run_rung(data: Dataset, k: int, z: int, eps: float, entry: LadderEntry,
              budget: SearchBudget, stream) -> _RungOutcome:
    gen = stream.generator()
    th = float(entry.theta)
    th10 = 10.0 * th
    w = data.weights
    limit = (1.0 + eps) * z

    _, cache = overseed_penalized(data, k, th, gen)
    if len(cache.centers) < k:
        # seeding covered everything early (coincident points); pad with the
        # lowest-index unused sites so the solution still has k centers
        have = set(cache.centers)
        for site in range(data.n):
            if len(cache.centers) == k:
                break
            if site not in have:
                cache.add_center(site)

    q_phi = None
    q_tau = math.inf
    q_centers: tuple = ()
    q_out = np.empty(0, dtype=np.int64)

    def consider():
        nonlocal q_phi, q_tau, q_centers, q_out
        out_weight = int(w[cache.d1 >= th10].sum())
        if out_weight <= limit:
            inmask = cache.d1 < th10
            phi_in = float((w * np.where(inmask, cache.d1, 0.0)).sum())
            if q_phi is None or phi_in < q_phi:
                q_phi = phi_in
                q_tau = float((w * np.minimum(cache.d1, th)).sum())
                q_centers = tuple(cache.centers)
                q_out = np.flatnonzero(~inmask)

    for _ in range(budget.steps):
        try:
            _step_engine(cache, th, gen)
        except TotalCostZero:
            consider()
            break
        consider()

    return _RungOutcome(
        theta=entry.theta,
        q_phi=q_phi,
        q_tau=q_tau,
        q_centers=q_centers,
        q_out=q_out,
        final_tau=cache.tau_total(th),
        final_centers=tuple(cache.centers),
        final_out=np.flatnonzero(cache.d1 >= th10),
    )


def local_search_with_outliers(data: Dataset, k: int, z: int, eps: float,
                               budget: SearchBudget | None = None, rng=None, *,
                               opt_guesses=None, threads: int = 1) -> ClusteringSolution:
    """Full doubling-ladder local search for k centers and about z outliers.

    For every optimum-cost guess the data is seeded and locally searched
    under the matching penalty threshold; among all intermediate states whose
    priced-out weight stays at most ``(1+eps)*z``, the one with the lowest
    inlier cost wins.  If no state ever qualifies, the minimum-clamped-cost
    state is returned with ``qualified=False``.

    Parameters
    ----------
    budget : SearchBudget, optional
        Steps per rung; default derived from ``k`` and ``eps``.
    rng : RngStream
        Master stream; each rung runs on the child stream ``rng.split(i)``.
    opt_guesses : sequence of float, optional
        Replaces the automatic guess ladder (thresholds still use
        ``300/eps * guess / z``).
    threads : int
        Rungs are independent; values > 1 run them in a thread pool.  The
        result does not depend on ``threads``.
    """
    if rng is None:
        raise ValueError("rng is required")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must be in (0, 1], got {eps}")
    if z < 0:
        raise ValueError(f"z must be >= 0, got {z}")
    if k + z >= data.total_weight:
        raise InfeasibleProblem(
            f"k + z = {k + z} must be below the total weight {data.total_weight}"
        )
    if budget is None:
        budget = SearchBudget.for_params(k, eps)
    if opt_guesses is None:
        ladder = theta_ladder(data.n, max(1.0, data.diameter_sq_bound()), z, eps)
    elif z == 0:
        ladder = [LadderEntry(float(g), PenaltyThreshold.infinite()) for g in opt_guesses[:1]]
    else:
        beta = BETA_NUMERATOR / eps
        ladder = [LadderEntry(float(g), PenaltyThreshold(beta * float(g) / z)) for g in opt_guesses]

    def run(i: int) -> _RungOutcome:
        return _run_rung(data, k, z, eps, ladder[i], budget, rng.split(i))

    if threads > 1 and len(ladder) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, range(len(ladder))))
    else:
        outcomes = [run(i) for i in range(len(ladder))]

    # deterministic reduction in rung order; strict improvement only
    best = None
    for res in outcomes:
        if res.q_phi is not None and (best is None or res.q_phi < best.q_phi):
            best = res
    if best is not None:
        return ClusteringSolution(
            centers=CenterSet.from_indices(data, best.q_centers),
            outliers=tuple(int(i) for i in best.q_out),
            phi_cost=best.q_phi,
            tau_cost=best.q_tau,
            theta=best.theta,
            qualified=True,
        )

    fb = outcomes[0]
    for res in outcomes[1:]:
        if res.final_tau < fb.final_tau:
            fb = res
    inl = np.setdiff1d(np.arange(data.n), fb.final_out)
    phi_in = float((data.weights[inl] * CostCache.from_scratch(data, fb.final_centers).d1[inl]).sum())
    return ClusteringSolution(
        centers=CenterSet.from_indices(data, fb.final_centers),
        outliers=tuple(int(i) for i in fb.final_out),
        phi_cost=phi_in,
        tau_cost=fb.final_tau,
        theta=fb.theta,
        qualified=False,
    )
