"""Coordinator-model distributed solvers over weighted shard summaries.

The input is split across machines; each machine overseeds its shard under a
shared penalty threshold and sends back only its sampled centers, how much
weight gathered around each of them, and how many points it priced out.  The
coordinator merges those summaries into a small weighted instance and solves
it with the sequential machinery, repeating the whole exchange over a ladder
of optimum-cost guesses.  Two summary flavors are supported: plain weights,
and refined per-center histograms of power-of-two distance buckets that the
coordinator expands into a clone ("almost-metric") instance whose self
distances are nonzero.

Everything here is a simulation: machines are tasks in a thread pool and the
ledger counts scalars that *would* be transmitted, not bytes on a wire.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    CenterSet,
    ClusteringSolution,
    CostCache,
    Dataset,
    InfeasibleProblem,
    InfeasibleRung,
    MatrixSpace,
    PenaltyThreshold,
    _as_theta,
    farthest_indices,
    tau_total,
)
from .local_search import (
    LadderEntry,
    SearchBudget,
    _run_rung,
    local_search_with_outliers,
    theta_ladder,
)
from .seeding import _as_generator, overseed_penalized, weighted_choice

__all__ = [
    "AlmostMetricInstance",
    "MachineShard",
    "MessageLedger",
    "WeightedSummary",
    "build_almost_metric",
    "coordinator_solve_refined",
    "coordinator_solve_simple",
    "kmeans_par_overseed",
    "machine_overseed",
    "outlier_budget",
    "run_distributed",
    "shard_dataset",
]

_MODES = ("guha_simple", "guha_refined", "kmeans_par")


@dataclass(frozen=True)
class MachineShard:
    """One machine's slice of the input."""

    machine_id: int
    data: Dataset


def shard_dataset(data: Dataset, m: int) -> list[MachineShard]:
    """Split ``data`` into ``m`` contiguous shards of near-equal size.

    The first ``n mod m`` shards hold one extra point; concatenating the
    shards in machine order reproduces the input point order exactly.
    """
    if not 1 <= m <= data.n:
        raise ValueError(f"need 1 <= m <= n, got m={m} for n={data.n}")
    bounds = np.linspace(0, data.n, m + 1).astype(int)
    return [
        MachineShard(machine_id=j, data=data.subset(np.arange(bounds[j], bounds[j + 1])))
        for j in range(m)
    ]


@dataclass(eq=False)
class WeightedSummary:
    """What one machine sends to the coordinator.

    ``weights[i]`` is the total point weight gathered by ``centers`` row
    ``i`` (points whose clamped cost is strictly below the threshold, ties
    broken toward the smallest center index), ``outliers_dropped`` the weight
    priced out at the threshold.  ``histograms`` is the refined payload: row
    ``i`` counts that center's points by the power-of-two bucket of their
    distance (bucket ``k`` holds distances in ``[2**k, 2**(k+1))``, with
    everything below 1 in bucket 0), so every row sums to the weight.
    """

    machine_id: int
    centers: CenterSet
    weights: np.ndarray
    outliers_dropped: int
    histograms: np.ndarray | None = None

    def __post_init__(self):
        if self.machine_id < 0:
            raise ValueError(f"machine_id must be >= 0, got {self.machine_id}")
        w = np.asarray(self.weights, dtype=np.int64)
        if w.ndim != 1 or w.shape[0] != self.centers.k:
            raise ValueError(
                f"need one weight per center, got {w.shape} for k={self.centers.k}"
            )
        if np.any(w < 0):
            raise ValueError("summary weights must be nonnegative")
        self.weights = w
        if self.outliers_dropped < 0:
            raise ValueError("outliers_dropped must be >= 0")
        if self.histograms is not None:
            h = np.asarray(self.histograms, dtype=np.int64)
            if h.ndim != 2 or h.shape[0] != self.centers.k:
                raise ValueError(f"histograms must be (k, levels), got {h.shape}")
            if np.any(h < 0) or not np.array_equal(h.sum(axis=1), w):
                raise ValueError("histogram rows must be nonnegative and sum to the weights")
            self.histograms = h

    @property
    def size(self) -> int:
        """Shard weight accounted for: gathered weights plus dropped points."""
        return int(self.weights.sum()) + self.outliers_dropped

    def scalar_count(self) -> int:
        """Scalars on the wire: coordinates, weights, one outlier counter,
        and (refined only) every histogram entry."""
        k, dim = self.centers.k, self.centers.coords.shape[1]
        count = k * (dim + 1) + 1
        if self.histograms is not None:
            count += k * self.histograms.shape[1]
        return count

    def to_wire(self) -> str:
        """Canonical JSON encoding (sorted keys, shortest round-trip floats)."""
        payload = {
            "machine_id": int(self.machine_id),
            "centers": [float(v) for v in self.centers.coords.ravel()],
            "weights": [int(v) for v in self.weights],
            "outliers_dropped": int(self.outliers_dropped),
            "histograms": None if self.histograms is None
            else [[int(v) for v in row] for row in self.histograms],
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_wire(cls, text: str) -> "WeightedSummary":
        obj = json.loads(text)
        weights = obj["weights"]
        flat = np.asarray(obj["centers"], dtype=float)
        coords = flat.reshape(len(weights), flat.size // len(weights))
        hist = obj["histograms"]
        return cls(
            machine_id=obj["machine_id"],
            centers=CenterSet(coords),
            weights=weights,
            outliers_dropped=obj["outliers_dropped"],
            histograms=None if hist is None else np.asarray(hist, dtype=np.int64),
        )


@dataclass
class MessageLedger:
    """Per-machine tally of transmitted scalars."""

    scalars: dict = field(default_factory=dict)

    def record(self, summary: WeightedSummary) -> None:
        mid = summary.machine_id
        self.scalars[mid] = self.scalars.get(mid, 0) + summary.scalar_count()

    def per_machine(self, machine_id: int) -> int:
        return self.scalars.get(machine_id, 0)

    @property
    def total(self) -> int:
        return sum(self.scalars.values())


def _histogram_levels(diameter_sq: float) -> int:
    # buckets 0 .. ceil(log2(diameter)); everything below distance 1 shares bucket 0
    diam = math.sqrt(max(diameter_sq, 0.0))
    if diam <= 1.0:
        return 1
    return int(math.ceil(math.log2(diam))) + 1


def _summarize(data: Dataset, cache: CostCache, theta, refined: bool):
    """Aggregate a seeded shard into (weights, dropped weight, histograms)."""
    th = _as_theta(theta)
    w = data.weights
    kept = cache.d1 < th
    kc = len(cache.centers)
    weights = np.zeros(kc, dtype=np.int64)
    if kept.any():
        counts = np.bincount(cache.a1[kept], weights=w[kept].astype(float), minlength=kc)
        weights = np.rint(counts).astype(np.int64)
    dropped = int(w[~kept].sum())
    hist = None
    if refined:
        levels = _histogram_levels(data.diameter_sq_bound())
        hist = np.zeros((kc, levels), dtype=np.int64)
        if kept.any():
            dist = np.sqrt(cache.d1[kept])
            bucket = np.floor(np.log2(np.maximum(dist, 1.0))).astype(np.int64)
            np.clip(bucket, 0, levels - 1, out=bucket)
            np.add.at(hist, (cache.a1[kept], bucket), w[kept])
    return weights, dropped, hist


def machine_overseed(shard: MachineShard, ell: int, theta, refined: bool,
                     rng) -> WeightedSummary:
    """Overseed one shard and compress it into a weighted summary.

    The shard is seeded with up to ``ell`` centers under the clamped cost at
    ``theta``; every shard point cheaper than the threshold is counted toward
    its nearest center, the rest are dropped.  With ``refined=True`` the
    per-center distance histograms are filled as well.

    Parameters
    ----------
    shard : MachineShard
    ell : int
        Number of centers to sample; must not exceed the shard size.
    theta : PenaltyThreshold or float
    refined : bool
        Whether to transmit per-center distance histograms.
    rng : RngStream or numpy Generator
    """
    data = shard.data
    if not 1 <= ell <= data.n:
        raise ValueError(f"need 1 <= ell <= shard size, got ell={ell} for n={data.n}")
    _, cache = overseed_penalized(data, ell, theta, rng)
    weights, dropped, hist = _summarize(data, cache, theta, refined)
    return WeightedSummary(
        machine_id=shard.machine_id,
        centers=CenterSet.from_indices(data, cache.centers),
        weights=weights,
        outliers_dropped=dropped,
        histograms=hist,
    )


def kmeans_par_overseed(data: Dataset, rounds: int, ell: int, theta,
                        rng) -> WeightedSummary:
    """Round-based overseeding: every point joins the pool independently.

    One uniform seed starts the pool; in each of ``rounds`` rounds, point
    ``x`` joins with probability ``min(1, ell * w(x) * tau(x) / tau_total)``
    (the plain per-point rule when all weights are 1).  Rounds stop early
    once the clamped cost hits zero.  The final pool is compressed exactly
    like a machine summary.
    """
    if rounds < 0:
        raise ValueError(f"rounds must be >= 0, got {rounds}")
    if ell < 1:
        raise ValueError(f"ell must be >= 1, got {ell}")
    gen = _as_generator(rng)
    th = _as_theta(theta)
    w = data.weights
    seed = weighted_choice(w, gen.random())
    cache = CostCache(data, [seed])
    for _ in range(rounds):
        taus = np.minimum(cache.d1, th)
        total = float((w * taus).sum())
        if total <= 0.0:
            break
        probs = np.minimum(1.0, ell * w * taus / total)
        for site in np.flatnonzero(gen.random(data.n) < probs):
            # a join whose cost already hit zero (a duplicate of the pool)
            # would add a center no sequential draw could ever produce
            if cache.d1[site] > 0.0:
                cache.add_center(int(site))
    weights, dropped, _ = _summarize(data, cache, theta, False)
    return WeightedSummary(
        machine_id=0,
        centers=CenterSet.from_indices(data, cache.centers),
        weights=weights,
        outliers_dropped=dropped,
        histograms=None,
    )


def outlier_budget(z: int, dropped: int, eps: float, alpha: float) -> int:
    """Coordinator-side outlier budget ``z - dropped + ceil(2*alpha*eps*z)``.

    Negative values mean the machines priced out more weight than the budget
    tolerates and the current threshold rung is infeasible.  The product is
    rounded before the ceiling so float dust cannot inflate the slack.
    """
    slack = math.ceil(round(2.0 * alpha * eps * z, 9))
    return z - dropped + slack


def _merge_summaries(summaries) -> Dataset:
    coords = np.vstack([s.centers.coords for s in summaries])
    weights = np.concatenate([s.weights for s in summaries])
    return Dataset(coords, weights=weights)


def coordinator_solve_simple(summaries, k: int, z: int, eps: float, alpha: float,
                             rng, *, opt_guess: float | None = None,
                             budget: SearchBudget | None = None) -> ClusteringSolution:
    """Merge plain summaries and solve the weighted instance.

    The merged centers-with-weights dataset is handed to the sequential
    outlier solver with the adjusted budget from :func:`outlier_budget`.
    Zero-weight summary rows are tolerated (they can never be sampled).

    Parameters
    ----------
    opt_guess : float, optional
        Couple the inner solver to a single optimum guess instead of its own
        full guess ladder (used by :func:`run_distributed`, which already
        sweeps guesses outside).

    Raises
    ------
    InfeasibleRung
        When the machines dropped more weight than ``z`` plus slack allows.
    """
    if not summaries:
        raise ValueError("need at least one summary")
    dropped = sum(int(s.outliers_dropped) for s in summaries)
    z_a = outlier_budget(z, dropped, eps, alpha)
    if z_a < 0:
        raise InfeasibleRung(
            f"machines dropped {dropped} points, more than z={z} plus slack allows"
        )
    merged = _merge_summaries(summaries)
    guesses = None if opt_guess is None else [float(opt_guess)]
    return local_search_with_outliers(merged, k, z_a, eps, budget=budget, rng=rng,
                                      opt_guesses=guesses)


class AlmostMetricInstance:
    """Clone expansion of refined summaries.

    Every nonzero histogram bucket ``(y, k)`` becomes one clone point with
    radius ``2**k`` and the bucket's weight.  Distances follow one rule::

        d(i, j) = 2**k_i + 2**k_j + base_distance(y_i, y_j) * [y_i != y_j]

    which also fixes the nonzero self-distance ``d(y^k, y^k) = 2 * 2**k`` —
    the reason this is only *almost* a metric.  Costs are squared distances.
    """

    def __init__(self, base: CenterSet, clone_base, clone_level, clone_weights):
        self.base = base
        self.clone_base = np.asarray(clone_base, dtype=np.int64)
        self.clone_level = np.asarray(clone_level, dtype=np.int64)
        self.clone_weights = np.asarray(clone_weights, dtype=np.int64)
        m = self.clone_base.shape[0]
        if m == 0:
            raise ValueError("instance needs at least one clone")
        if self.clone_level.shape[0] != m or self.clone_weights.shape[0] != m:
            raise ValueError("clone arrays must have equal length")
        if np.any(self.clone_base < 0) or np.any(self.clone_base >= base.k):
            raise ValueError("clone base indices out of range")
        if np.any(self.clone_level < 0) or np.any(self.clone_weights <= 0):
            raise ValueError("clone levels must be >= 0 and weights positive")
        self._base_dist = None

    @property
    def n_clones(self) -> int:
        return self.clone_base.shape[0]

    @property
    def clones(self) -> list:
        return [(int(b), int(l)) for b, l in zip(self.clone_base, self.clone_level)]

    def _base_distances(self) -> np.ndarray:
        if self._base_dist is None:
            b = self.base.coords
            out = np.empty((b.shape[0], b.shape[0]))
            for i in range(b.shape[0]):
                diff = b - b[i]
                out[i] = np.einsum("ij,ij->i", diff, diff)
            self._base_dist = np.sqrt(out)
        return self._base_dist

    def base_clone_distance(self, base_idx: int, j: int) -> float:
        """Distance from bare base point ``base_idx`` to clone ``j``."""
        d = 0.0
        if base_idx != self.clone_base[j]:
            d = float(self._base_distances()[base_idx, self.clone_base[j]])
        return 2.0 ** float(self.clone_level[j]) + d

    def clone_distance(self, i: int, j: int) -> float:
        """Distance between clones ``i`` and ``j`` (``i == j`` allowed)."""
        r = 2.0 ** float(self.clone_level[i]) + 2.0 ** float(self.clone_level[j])
        if self.clone_base[i] != self.clone_base[j]:
            r += float(self._base_distances()[self.clone_base[i], self.clone_base[j]])
        return r

    def cost_matrix(self) -> np.ndarray:
        """Full squared-distance matrix between clones (diagonal nonzero)."""
        D = self._base_distances()[np.ix_(self.clone_base, self.clone_base)]
        r = 2.0 ** self.clone_level.astype(float)
        distinct = self.clone_base[:, None] != self.clone_base[None, :]
        d = r[:, None] + r[None, :] + np.where(distinct, D, 0.0)
        return d * d


def build_almost_metric(summaries) -> AlmostMetricInstance:
    """Expand refined summaries into the clone instance.

    Raises ``ValueError`` if any summary lacks histograms or no bucket is
    nonzero.  Clones are ordered by (summary, center, level) so the
    construction is deterministic.
    """
    if any(s.histograms is None for s in summaries):
        raise ValueError("the refined construction requires histograms on every summary")
    coords = np.vstack([s.centers.coords for s in summaries])
    bases, levels, weights = [], [], []
    offset = 0
    for s in summaries:
        rows, cols = np.nonzero(s.histograms)
        bases.append(rows + offset)
        levels.append(cols)
        weights.append(s.histograms[rows, cols])
        offset += s.centers.k
    bases = np.concatenate(bases)
    if bases.size == 0:
        raise ValueError("summaries carry no weight in any bucket")
    return AlmostMetricInstance(
        base=CenterSet(coords),
        clone_base=bases,
        clone_level=np.concatenate(levels),
        clone_weights=np.concatenate(weights),
    )


def coordinator_solve_refined(summaries, k: int, z: int, eps: float, alpha: float,
                              rng, *, opt_guess: float | None = None,
                              budget: SearchBudget | None = None) -> ClusteringSolution:
    """Solve the clone instance, then map centers back to base points.

    The clone instance is searched exactly like a sequential rung (seeding
    plus swap steps under a guess ladder); each chosen clone collapses to its
    base center.  The reported solution is re-scored on the merged *plain*
    instance so simple and refined coordinators are directly comparable.

    Raises
    ------
    InfeasibleRung
        As in :func:`coordinator_solve_simple`.
    """
    if not summaries:
        raise ValueError("need at least one summary")
    dropped = sum(int(s.outliers_dropped) for s in summaries)
    z_a = outlier_budget(z, dropped, eps, alpha)
    if z_a < 0:
        raise InfeasibleRung(
            f"machines dropped {dropped} points, more than z={z} plus slack allows"
        )
    inst = build_almost_metric(summaries)
    space = MatrixSpace(inst.cost_matrix(), inst.clone_weights)
    if k + z_a >= space.total_weight:
        raise InfeasibleProblem(
            f"k + adjusted z = {k + z_a} must be below the summary weight "
            f"{space.total_weight}"
        )
    if budget is None:
        budget = SearchBudget.for_params(k, eps)
    if z_a == 0:
        first = 1.0 if opt_guess is None else float(opt_guess)
        ladder = [LadderEntry(first, PenaltyThreshold.infinite())]
    elif opt_guess is not None:
        from .local_search import BETA_NUMERATOR

        theta = PenaltyThreshold(BETA_NUMERATOR / eps * float(opt_guess) / z_a)
        ladder = [LadderEntry(float(opt_guess), theta)]
    else:
        ladder = theta_ladder(space.total_weight,
                              max(1.0, float(space.cost_row(0).max())), z_a, eps)

    outcomes = [_run_rung(space, k, z_a, eps, entry, budget, rng.split(i))
                for i, entry in enumerate(ladder)]
    best = None
    for res in outcomes:
        if res.q_phi is not None and (best is None or res.q_phi < best.q_phi):
            best = res
    if best is not None:
        sites, theta_e, qualified = best.q_centers, best.theta, True
    else:
        fb = outcomes[0]
        for res in outcomes[1:]:
            if res.final_tau < fb.final_tau:
                fb = res
        sites, theta_e, qualified = fb.final_centers, fb.theta, False

    # collapse each chosen clone to its base center, keeping first occurrence
    base_idx: list[int] = []
    for s in sites:
        b = int(inst.clone_base[s])
        if b not in base_idx:
            base_idx.append(b)
    centers = CenterSet(inst.base.coords[base_idx])
    merged = _merge_summaries(summaries)
    out_idx, phi = farthest_indices(merged, centers, z_a)
    return ClusteringSolution(
        centers=centers,
        outliers=tuple(int(i) for i in out_idx),
        phi_cost=phi,
        tau_cost=tau_total(merged, centers, theta_e),
        theta=theta_e,
        qualified=qualified,
    )


def _map_tasks(fn, items, threads: int) -> list:
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def run_distributed(data: Dataset, m: int, k: int, z: int, eps: float, mode: str,
                    rng, *, alpha: float = 1.0, ell: int | None = None,
                    rounds: int | None = None,
                    threads: int = 1) -> tuple[ClusteringSolution, MessageLedger]:
    """Full distributed pipeline over the optimum-guess ladder.

    For every rung the machines summarize their shards at that rung's
    threshold (``guha_*`` modes) or the round-based overseeder summarizes the
    whole input (``kmeans_par``); the coordinator solves every rung whose
    dropped weight fits ``z`` plus slack and keeps, among rungs dropping at
    most ``z``, the solution with the lowest merged-instance inlier cost.
    The winner's centers are then scored against the raw data, declaring the
    globally farthest points as outliers (never more than ``(1+5*alpha*eps)z``).

    Streams are pre-split per task — rung ``i`` machine ``j`` uses
    ``rng.split(i, j)`` and the rung's coordinator uses ``rng.split(i, m)``
    (``rng.split(i, 1)`` in ``kmeans_par`` mode) — so results do not depend
    on ``threads``.

    Returns
    -------
    (ClusteringSolution, MessageLedger)
        The solution over the raw data and the per-machine scalar counts for
        every transmitted summary (including rungs the coordinator skipped).
    """
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    if not 1 <= m <= data.n:
        raise ValueError(f"need 1 <= m <= n, got m={m} for n={data.n}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if z < 0:
        raise ValueError(f"z must be >= 0, got {z}")
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must be in (0, 1], got {eps}")
    if k + z >= data.total_weight:
        raise InfeasibleProblem(
            f"k + z = {k + z} must be below the total weight {data.total_weight}"
        )
    if ell is None:
        ell = max(k + 1, math.ceil(2 * k / eps))
    if rounds is None:
        rounds = max(1, math.ceil(math.log2(max(data.n / eps, 2.0))))
    ladder = theta_ladder(data.n, max(1.0, data.diameter_sq_bound()), z, eps,
                          beta=1.0 / eps)
    slack = outlier_budget(z, 0, eps, alpha) - z

    if mode == "kmeans_par":
        coord_salt = 1

        def overseed_task(i: int) -> list:
            return [kmeans_par_overseed(data, rounds, ell, ladder[i].theta,
                                        rng.split(i, 0))]
    else:
        shards = shard_dataset(data, m)
        refined = mode == "guha_refined"
        coord_salt = m

        def overseed_task(i: int) -> list:
            return [
                machine_overseed(shard, min(ell, shard.data.n), ladder[i].theta,
                                 refined, rng.split(i, shard.machine_id))
                for shard in shards
            ]

    by_rung = _map_tasks(overseed_task, range(len(ladder)), threads)
    ledger = MessageLedger()
    for summaries in by_rung:
        for s in summaries:
            ledger.record(s)

    solve = coordinator_solve_refined if mode == "guha_refined" else coordinator_solve_simple

    def solve_task(i: int):
        summaries = by_rung[i]
        dropped = sum(s.outliers_dropped for s in summaries)
        if dropped > z + slack:
            return None
        try:
            sol = solve(summaries, k, z, eps, alpha, rng.split(i, coord_salt),
                        opt_guess=ladder[i].opt_guess)
        except (InfeasibleRung, InfeasibleProblem):
            return None
        return dropped, sol

    solved = _map_tasks(solve_task, range(len(ladder)), threads)

    best_i, best = -1, None
    for i, item in enumerate(solved):
        if item is None or item[0] > z:
            continue
        if best is None or item[1].phi_cost < best[1].phi_cost:
            best_i, best = i, item
    if best is None:
        raise InfeasibleProblem("no ladder rung produced a feasible coordinator solution")

    dropped, sol = best
    merged = _merge_summaries(by_rung[best_i])
    declared = int(merged.weights[list(sol.outliers)].sum())
    cap = math.floor(round((1.0 + 5.0 * alpha * eps) * z, 9))
    z_decl = max(0, min(dropped + declared, cap, data.total_weight - k))
    out_idx, phi = farthest_indices(data, sol.centers, z_decl)
    final = ClusteringSolution(
        centers=sol.centers,
        outliers=tuple(int(v) for v in out_idx),
        phi_cost=phi,
        tau_cost=tau_total(data, sol.centers, ladder[best_i].theta),
        theta=ladder[best_i].theta,
        qualified=True,
    )
    return final, ledger
