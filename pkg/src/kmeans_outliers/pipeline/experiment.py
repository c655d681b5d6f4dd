"""The experiment protocol: for every seed x k, generate candidate centers
across the penalty-threshold grid, keep the feasible grid point with the
cheapest declared-inlier cost, refine with trimmed Lloyd rounds, and report.

Also hosts the independent scorer used to audit emitted reports.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..baselines import lloyd_outliers
from ..core import (
    CenterSet,
    CostCache,
    CountingSpace,
    Dataset,
    DistanceCounter,
    InfeasibleProblem,
    PenaltyThreshold,
    RngStream,
    TotalCostZero,
    tau_total,
)
from ..local_search import _step_engine
from ..metropolis import _metropolized_sites
from ..distributed import shard_dataset
from ..seeding import overseed_penalized
from .config import RunConfig, resolve_z, theta_grid_values
from .io import RunReport

__all__ = [
    "evaluate_candidate",
    "grid_candidate",
    "run_experiment",
    "score_reports",
]

log = logging.getLogger(__name__)

#: algorithms that ignore the threshold grid entirely
_GRIDLESS = ("lloyd", "kmeanspp")


def _phi_rows(coords: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Nearest-center squared distance per point (row-at-a-time, no BLAS)."""
    d1 = np.full(coords.shape[0], np.inf)
    for j in range(centers.shape[0]):
        diff = coords - centers[j]
        np.minimum(d1, np.einsum("ij,ij->i", diff, diff), out=d1)
    return d1


def _pad_sites(sites, k: int, n: int) -> list[int]:
    """Top sites up to k with the lowest unused indices (zero-mass early stops
    can return fewer than requested)."""
    picks = [int(s) for s in sites]
    used = set(picks)
    cursor = 0
    while len(picks) < k:
        while cursor in used and cursor < n - 1:
            cursor += 1
        picks.append(cursor)
        used.add(cursor)
        cursor += 1
    return picks[:k]


def _distributed_candidate(data: Dataset, k: int, theta, machines: int,
                           stream: RngStream, counter: DistanceCounter) -> np.ndarray:
    """One-round coordinator sketch: every shard overseeds 2k sites and ships
    them with their covered weight; the coordinator overseeds k from the merge."""
    shards = shard_dataset(data, min(machines, data.n))
    th = float(theta)
    coords_parts, weight_parts = [], []
    for j, shard in enumerate(shards):
        space = CountingSpace(shard.data, counter)
        ell = min(2 * k, shard.data.n)
        sites, cache = overseed_penalized(space, ell, theta, stream.split(j))
        kept = cache.d1 < th
        w = np.bincount(cache.a1[kept], weights=shard.data.weights[kept],
                        minlength=len(cache.centers))
        coords_parts.append(shard.data.coords[np.asarray(cache.centers)])
        weight_parts.append(np.rint(w).astype(np.int64))
    merged = Dataset(np.vstack(coords_parts),
                     np.maximum(np.concatenate(weight_parts), 1))
    space = CountingSpace(merged, counter)
    sites, _ = overseed_penalized(space, min(k, merged.n), theta,
                                  stream.split(len(shards)))
    picks = _pad_sites(sites, min(k, merged.n), merged.n)
    while len(picks) < k:  # degenerate merge smaller than k: repeat a site
        picks.append(picks[0])
    return merged.coords[picks].copy()


def grid_candidate(algorithm: str, data: Dataset, k: int, z: int, eps: float,
                   theta, *, machines: int, mh_steps: int, stream: RngStream,
                   counter: DistanceCounter | None = None) -> np.ndarray:
    """Candidate centers for one grid point (coordinates, shape ``(k, dim)``).

    ``theta`` is ignored by the grid-less baselines and may be ``None`` for
    them.  All candidate-generation distance math is charged to ``counter``;
    selection and refinement are not.
    """
    counter = counter if counter is not None else DistanceCounter()
    space = CountingSpace(data, counter)
    if algorithm == "lloyd":
        sites = stream.generator().choice(data.n, size=min(k, data.n), replace=False)
        return data.coords[_pad_sites(sites, k, data.n)].copy()
    if algorithm == "kmeanspp":
        theta = PenaltyThreshold.infinite()
    if algorithm in ("kmeanspp", "penalized"):
        sites, _ = overseed_penalized(space, min(k, data.n), theta, stream)
        return data.coords[_pad_sites(sites, k, data.n)].copy()
    if algorithm == "metropolized":
        sites = _metropolized_sites(space, min(k, data.n), float(theta), mh_steps,
                                    stream.generator())
        return data.coords[_pad_sites(sites, k, data.n)].copy()
    if algorithm == "local_search":
        sites, _ = overseed_penalized(space, min(k, data.n), theta, stream.split(0))
        cache = CostCache(space, _pad_sites(sites, k, data.n))
        gen = stream.split(1).generator()
        for _ in range(k):
            try:
                _step_engine(cache, theta, gen)
            except TotalCostZero:
                break
        return data.coords[list(cache.centers)].copy()
    if algorithm == "distributed":
        return _distributed_candidate(data, k, theta, machines, stream, counter)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def evaluate_candidate(data: Dataset, centers: np.ndarray, theta, z: int,
                       eps: float) -> tuple[float, int, bool]:
    """Score one candidate at its grid point.

    Returns ``(phi over declared inliers, declared-outlier weight, feasible)``
    where the declared outliers are the points priced out at ``theta``
    (boundary included) and feasibility means their weight is at most
    ``(1 + eps) * z``.
    """
    phi = _phi_rows(data.coords, np.asarray(centers, dtype=float))
    out = phi >= float(theta)
    out_weight = int(data.weights[out].sum())
    phi_in = float((data.weights * np.where(out, 0.0, phi)).sum())
    return phi_in, out_weight, out_weight <= (1.0 + eps) * z + 1e-9


def _run_pair(cfg: RunConfig, data: Dataset, k: int, seed: int, z: int,
              grid, candidates, evals: int, elapsed: float) -> RunReport:
    """Select among grid candidates, refine, and assemble the report."""
    t0 = time.perf_counter()
    if grid is None:
        chosen, theta, theta_index, qualified = candidates[0], None, -1, True
    else:
        scored = []
        for i, coords in enumerate(candidates):
            phi_in, out_w, feasible = evaluate_candidate(data, coords, grid[i], z, cfg.eps)
            scored.append((i, phi_in, out_w, feasible))
        feas = [s for s in scored if s[3]]
        if feas:
            idx = min(feas, key=lambda s: (s[1], s[0]))[0]
            qualified = True
        else:
            # nothing met the outlier budget: keep the closest miss
            idx = min(scored, key=lambda s: (s[2], s[1], s[0]))[0]
            qualified = False
        chosen, theta, theta_index = candidates[idx], float(grid[idx]), idx

    refine_rng = RngStream(seed, k).split(1 if grid is None else len(grid))
    sol = lloyd_outliers(data, CenterSet(chosen), z, iters=cfg.refine_iters,
                         rng=refine_rng)
    centers = sol.centers.coords
    cost_tau = tau_total(data, centers, np.inf if theta is None else theta)
    elapsed += time.perf_counter() - t0
    return RunReport(
        algorithm=cfg.algorithm,
        seed=seed,
        k=k,
        z=z,
        eps=cfg.eps,
        theta=theta,
        theta_index=theta_index,
        cost_phi_inliers=sol.phi_cost,
        cost_tau=cost_tau,
        num_outliers=sol.n_outliers,
        runtime_ms=elapsed * 1e3 if cfg.timing else 0.0,
        distance_evals=evals,
        qualified=qualified,
        centers=tuple(float(v) for v in centers.ravel()),
        outliers=tuple(int(i) for i in sol.outliers),
    )


def run_experiment(cfg: RunConfig, data: Dataset, *, threads: int = 1) -> list[RunReport]:
    """Run the configured algorithm for every seed x k and report each run.

    Grid candidates are independent tasks (safe to spread over a thread
    pool); reports come back sorted by ``(k, seed)`` and are byte-identical
    for a fixed config whenever timing capture is off, regardless of thread
    count.  A run that fails — including ``k + z >= n`` — is logged and
    skipped without aborting the batch.
    """
    z = resolve_z(cfg.z, data.n)
    grid = (None if cfg.algorithm in _GRIDLESS
            else theta_grid_values(cfg, data.n, z, data.diameter_sq_bound()))
    pairs = [(k, seed) for k in sorted(set(cfg.k_values))
             for seed in sorted(set(cfg.seeds))]

    jobs = []
    for k, seed in pairs:
        for i in range(1 if grid is None else len(grid)):
            jobs.append((k, seed, i))

    def run_job(job):
        k, seed, i = job
        if k + z >= data.total_weight:
            raise InfeasibleProblem(f"k + z >= n: {k} + {z} >= {data.total_weight}")
        counter = DistanceCounter()
        t0 = time.perf_counter()
        coords = grid_candidate(cfg.algorithm, data, k, z, cfg.eps,
                                None if grid is None else grid[i],
                                machines=cfg.machines, mh_steps=cfg.mh_steps,
                                stream=RngStream(seed, k).split(i), counter=counter)
        return coords, counter.count, time.perf_counter() - t0

    def guarded(job):
        try:
            return run_job(job)
        except Exception as exc:  # noqa: BLE001 -- per-run isolation
            return exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(guarded, jobs))
    else:
        results = [guarded(job) for job in jobs]

    by_pair: dict[tuple[int, int], list] = {pair: [] for pair in pairs}
    for job, res in zip(jobs, results):
        by_pair[(job[0], job[1])].append(res)

    reports = []
    for k, seed in pairs:
        outcomes = by_pair[(k, seed)]
        errors = [r for r in outcomes if isinstance(r, Exception)]
        if errors:
            log.warning("run (k=%d, seed=%d) failed: %s", k, seed, errors[0])
            continue
        candidates = [r[0] for r in outcomes]
        evals = sum(r[1] for r in outcomes)
        elapsed = sum(r[2] for r in outcomes)
        try:
            reports.append(_run_pair(cfg, data, k, seed, z, grid, candidates,
                                     evals, elapsed))
        except Exception as exc:  # noqa: BLE001 -- per-run isolation
            log.warning("run (k=%d, seed=%d) failed: %s", k, seed, exc)
    reports.sort(key=lambda r: (r.k, r.seed, r.theta_index))
    return reports


def score_reports(data: Dataset, reports) -> list[dict]:
    """Audit reports against the raw dataset.

    Recomputes the declared-inlier cost from each report's centers and
    outliers and checks it against ``cost_phi_inliers`` (1e-9 relative).
    """
    results = []
    for rep in reports:
        entry = {"algorithm": rep.algorithm, "k": rep.k, "seed": rep.seed,
                 "reported": rep.cost_phi_inliers, "recomputed": None, "ok": False}
        if rep.centers is not None and rep.outliers is not None:
            centers = np.asarray(rep.centers, dtype=float).reshape(rep.k, -1)
            keep = np.ones(data.n, dtype=bool)
            keep[list(rep.outliers)] = False
            phi = _phi_rows(data.coords[keep], centers)
            recomputed = float((data.weights[keep] * phi).sum())
            entry["recomputed"] = recomputed
            tol = 1e-9 * max(1.0, abs(rep.cost_phi_inliers))
            entry["ok"] = abs(recomputed - rep.cost_phi_inliers) <= tol
        results.append(entry)
    return results
