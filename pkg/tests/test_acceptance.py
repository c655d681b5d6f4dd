"""Acceptance gate: one test per shipped guarantee.

Each test is self-contained, checks its claim against an independent
reference (exact enumeration, transition-matrix powering, brute-force
trimmed costs, or planted ground truth), asserts its own wall-clock
budget, and prints a single summary line (visible under ``pytest -s``).
Everything runs on synthetic data; no downloads, no fixtures shared with
the unit-test modules.
"""

from __future__ import annotations

import math
import time

import numpy as np

from kmeans_outliers import (
    CenterSet,
    Dataset,
    DistanceCounter,
    HardInstance,
    MHConfig,
    PenaltyThreshold,
    QueryOracle,
    RngStream,
    WeightedSummary,
    build_almost_metric,
    estimate_robust_cost,
    exhaustive_label_cover,
    fast_algorithm,
    gen_hard_instance,
    local_search_with_outliers,
    machine_overseed,
    metropolized_overseed,
    overseed_penalized,
    run_budgeted_eval,
    run_distributed,
    shard_dataset,
    uniform_random_centers,
)
from kmeans_outliers.local_search import theta_ladder
from kmeans_outliers.pipeline import (
    gen_planted,
    parse_config,
    reports_to_json_lines,
    run_experiment,
)

from _brute import brute_phi_minus_z, mh_transition_matrix, power_distribution


# ---------------------------------------------------------------------------
# helpers


def _tau_many(A: np.ndarray, mus: np.ndarray, theta: float) -> np.ndarray:
    """Clamped cost of the point set ``A`` against each single center in
    ``mus`` (one value per row of ``mus``)."""
    d2 = ((A[:, None, :] - mus[None, :, :]) ** 2).sum(axis=2)
    return np.minimum(d2, theta).sum(axis=0)


_SUBSET_MASKS: dict[int, np.ndarray] = {}


def _subset_masks(m: int) -> np.ndarray:
    got = _SUBSET_MASKS.get(m)
    if got is None:
        rows = [[(mask >> i) & 1 for i in range(m)] for mask in range(1, 1 << m)]
        got = _SUBSET_MASKS.setdefault(m, np.asarray(rows, dtype=float))
    return got


def _exact_penalized_infimum(A: np.ndarray, theta: float) -> float:
    """Exact ``inf`` over all of R^d of the clamped single-center cost.

    An optimal center either clamps every point (value ``theta * |A|``) or
    can be replaced by the mean of the subset it leaves unclamped without
    increasing the cost, so enumerating every nonempty subset mean is
    exhaustive.
    """
    masks = _subset_masks(len(A))
    means = (masks @ A) / masks.sum(axis=1, keepdims=True)
    best = float(_tau_many(A, means, theta).min())
    return min(best, theta * len(A))


def _finish(number: int, label: str, t0: float, budget: float, extra: str = "") -> None:
    elapsed = time.perf_counter() - t0
    assert elapsed < budget, f"criterion {number} overran: {elapsed:.1f}s >= {budget:.0f}s"
    tail = f" [{extra}]" if extra else ""
    print(f"\ncriterion {number:2d} ({label}): PASS in {elapsed:.1f}s{tail}")


# ---------------------------------------------------------------------------
# 1. seeding inequalities, exact enumeration on tiny point sets


def test_criterion_01_seeding_inequalities_exact():
    t0 = time.perf_counter()
    clamps = (0.1, 1.0, 10.0, math.inf)
    gen = RngStream(9001, 0).generator()
    for trial in range(1000):
        m = int(gen.integers(2, 9))
        dim = int(gen.integers(1, 4))
        scale = float(gen.uniform(0.2, 3.0))
        A = gen.normal(0.0, scale, size=(m, dim))
        theta = clamps[trial % len(clamps)]

        inf_exact = _exact_penalized_infimum(A, theta)

        # cross-check the enumeration against a bounding-box grid search
        axes = [np.linspace(A[:, j].min() - 0.5, A[:, j].max() + 0.5, 6) for j in range(dim)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
        inf_grid = min(float(_tau_many(A, grid, theta).min()), theta * m)
        assert inf_exact <= inf_grid + 1e-9

        # picking a uniformly random member of A as the center is a
        # 2-approximation of the clamped infimum on average
        avg_in_set = float(_tau_many(A, A, theta).mean())
        assert avg_in_set <= 2.0 * inf_exact + 1e-9

        # metric variant: the in-set average is a 4-approximation of the
        # best center drawn from any ambient point set, for a plain and a
        # clamped ground distance
        extra = gen.normal(0.0, scale, size=(4, dim))
        ambient = np.vstack([A, extra])
        raw = np.sqrt(((A[:, None, :] - ambient[None, :, :]) ** 2).sum(axis=2))
        clamp = float(gen.uniform(0.3, 2.0))
        for D in (raw, np.minimum(raw, clamp)):
            costs = (D**2).sum(axis=0)
            avg_metric = float(costs[:m].mean())  # first m columns are A itself
            assert avg_metric <= 4.0 * costs.min() + 1e-9

        # adding one A-point drawn with probability proportional to its
        # clamped cost: 8x the infimum in expectation, and within 10x with
        # probability at least 1/5 (both computed exactly)
        C = gen.normal(0.0, 2.0 * scale, size=(int(gen.integers(1, 4)), dim))
        tau_c = np.minimum(((A[:, None, :] - C[None, :, :]) ** 2).sum(axis=2).min(axis=1), theta)
        tau_total_c = float(tau_c.sum())
        if tau_total_c <= 1e-12:
            continue  # zero-cost states carry no sampling mass
        pair_d2 = ((A[:, None, :] - A[None, :, :]) ** 2).sum(axis=2)
        tau_aug = np.minimum(tau_c[:, None], np.minimum(pair_d2, theta)).sum(axis=0)
        expectation = float(tau_c @ tau_aug) / tau_total_c
        assert expectation <= 8.0 * inf_exact + 1e-9
        good = tau_aug <= 10.0 * inf_exact + 1e-9
        assert float(tau_c[good].sum()) / tau_total_c >= 0.2 - 1e-12

    _finish(1, "seeding inequalities", t0, 60.0, "1000 instances, zero violations")


# ---------------------------------------------------------------------------
# 2. clamped-distance facts on random triples


def test_criterion_02_clamped_distance_facts():
    t0 = time.perf_counter()
    gen = RngStream(9002, 0).generator()
    pts = gen.normal(0.0, 2.0, size=(100_000, 3, 3))
    a, b, c = pts[:, 0], pts[:, 1], pts[:, 2]
    dab = np.sqrt(((a - b) ** 2).sum(axis=1))
    dac = np.sqrt(((a - c) ** 2).sum(axis=1))
    dbc = np.sqrt(((b - c) ** 2).sum(axis=1))
    for clamp in (0.1, 1.0, 10.0, math.inf):
        tab = np.minimum(dab, clamp)
        tac = np.minimum(dac, clamp)
        tbc = np.minimum(dbc, clamp)
        # clamping keeps every metric axiom; the triangle inequality is the
        # only one with content, checked at all three corners
        assert np.all(tab >= 0.0)
        assert np.all(tac <= tab + tbc + 1e-12)
        assert np.all(tab <= tac + tbc + 1e-12)
        assert np.all(tbc <= tab + tac + 1e-12)
        # smooth triangle bound for squared distances
        for eps in (0.1, 1.0):
            lhs = tac**2 - tbc**2
            rhs = eps * tbc**2 + (1.0 + 1.0 / eps) * tab**2
            assert np.all(lhs <= rhs + 1e-9)
    _finish(2, "clamped-distance facts", t0, 10.0, "100000 triples, zero violations")


# ---------------------------------------------------------------------------
# 3. chain domination certified by transition-matrix powering


def test_criterion_03_chain_dominates_half_target():
    t0 = time.perf_counter()
    gen = RngStream(9003, 0).generator()
    accepted = 0
    attempts = 0
    seen_z = set()
    while accepted < 200:
        attempts += 1
        assert attempts < 50_000, "could not draw enough in-regime instances"
        n = int(gen.integers(4, 13))
        z = int(gen.integers(1, 4))
        if 2 * z > n:
            continue
        pts = gen.uniform(0.0, 3.0, size=(n, 1))
        center = pts[int(gen.integers(n))]
        phi = ((pts - center) ** 2).sum(axis=1)
        opt = float(np.sort(phi)[: n - z].sum()) or 1.0
        theta = opt / z
        taus = np.minimum(phi, theta)
        if taus.sum() <= 0.0:
            continue
        pi = taus / taus.sum()
        if pi.max() > 1.0 / z:
            continue  # uniform proposal does not (z/n)-cover this target
        T = math.ceil(4 * n / z)
        p_T = power_distribution(mh_transition_matrix(pi), np.full(n, 1.0 / n), T)
        assert np.all(p_T >= pi / 2.0 - 1e-12)
        accepted += 1
        seen_z.add(z)
    assert seen_z == {1, 2, 3}
    _finish(3, "chain domination", t0, 60.0, "200 instances, zero violations")


# ---------------------------------------------------------------------------
# 4. subsample estimator sandwiched by brute-force trimmed costs


def test_criterion_04_estimator_sandwich():
    t0 = time.perf_counter()
    z, A = 40, 2.0
    inside = 0
    trials = 200
    for t in range(trials):
        gen = np.random.default_rng(9100 + t)
        pts = gen.uniform(0.0, 10.0, size=(400, 2))
        X = Dataset(pts)
        C = CenterSet(pts[gen.choice(400, size=4, replace=False)])
        est = estimate_robust_cost(X, C, z=z, A=A, rng=RngStream(9200, t))
        upper = brute_phi_minus_z(pts, C.coords, min(int(A * z), 400))
        lower = brute_phi_minus_z(pts, C.coords, min(int(10 * A * z), 400))
        if 0.25 * lower - 1e-9 <= est.zeta <= 4.0 * upper + 1e-9:
            inside += 1
    assert inside >= 190
    _finish(4, "estimator sandwich", t0, 60.0, f"{inside}/{trials} inside")


# ---------------------------------------------------------------------------
# 5. local search on a planted instance


def test_criterion_05_local_search_planted():
    t0 = time.perf_counter()
    inst = gen_planted(2000, 10, 50, dim=5, separation=10.0, noise_scale=1.0,
                       outlier_scale=4.0, rng=RngStream(9500, 0))
    eps = 0.2
    cost_bound = 50.0 * inst.opt / eps
    out_bound = math.ceil(1.2 * 50)
    wins = 0
    for s in range(100):
        sol = local_search_with_outliers(inst.data, 10, 50, eps,
                                         rng=RngStream(9501, s), threads=4)
        if sol.n_outliers <= out_bound and sol.phi_cost <= cost_bound:
            wins += 1
    assert wins >= 50
    _finish(5, "local search", t0, 300.0, f"{wins}/100 runs inside both bounds")


# ---------------------------------------------------------------------------
# 6. overseeding coverage and its chain-accelerated variant


def test_criterion_06_overseeding_coverage():
    t0 = time.perf_counter()
    inst = gen_planted(2000, 10, 50, dim=5, separation=10.0, noise_scale=1.0,
                       outlier_scale=4.0, rng=RngStream(9500, 0))
    eps, z, k = 0.2, 50, 10
    ell = math.ceil(20 * k / eps)
    theta = inst.opt / (eps * z)  # inside the admissible guess band
    bound = 20.0 * (inst.opt + eps * z * theta)
    inliers = inst.data.coords[inst.inlier_idx]

    def tau_inliers(centers: np.ndarray) -> float:
        d1 = np.full(inliers.shape[0], np.inf)
        for ctr in centers:
            diff = inliers - ctr
            np.minimum(d1, np.einsum("ij,ij->i", diff, diff), out=d1)
        return float(np.minimum(d1, theta).sum())

    exact_vals = []
    for s in range(100):
        sites, _ = overseed_penalized(inst.data, ell, PenaltyThreshold(theta),
                                      RngStream(9600, s))
        exact_vals.append(tau_inliers(inst.data.coords[sites]))
    wins = sum(v <= bound for v in exact_vals)
    assert wins >= 50

    metro_vals = []
    for s in range(20):
        C = metropolized_overseed(inst.data, ell, PenaltyThreshold(theta),
                                  MHConfig(100), RngStream(9700, s))
        metro_vals.append(tau_inliers(C.coords))
    assert float(np.median(metro_vals)) <= 2.0 * float(np.median(exact_vals))
    _finish(6, "overseeding coverage", t0, 300.0,
            f"{wins}/100 inside, medians {np.median(exact_vals):.0f}/{np.median(metro_vals):.0f}")


# ---------------------------------------------------------------------------
# 7. distributed solver: outlier budget, cost, message volume


def test_criterion_07_distributed_budget_cost_messages():
    t0 = time.perf_counter()
    inst = gen_planted(5000, 10, 200, dim=5, separation=10.0, noise_scale=1.0,
                       outlier_scale=4.0, rng=RngStream(9800, 0))
    machines, k, z, eps, alpha = 10, 10, 200, 0.2, 1.0
    ell = max(k + 1, math.ceil(2 * k / eps))
    rungs = len(theta_ladder(inst.data.n, max(1.0, inst.data.diameter_sq_bound()),
                             z, eps, beta=1.0 / eps))
    msg_bound = rungs * (ell * (inst.data.dim + 1) + 1)
    out_bound = math.floor((1 + 5 * alpha * eps) * z)
    cost_bound = 60.0 * inst.opt / eps
    wins = 0
    for s in range(100):
        sol, ledger = run_distributed(inst.data, machines, k, z, eps, "guha_simple",
                                      RngStream(9801, s), alpha=alpha, threads=4)
        assert sol.n_outliers <= out_bound  # holds on every run
        assert max(ledger.scalars.values()) <= msg_bound  # holds on every run
        if sol.phi_cost <= cost_bound:
            wins += 1
    assert wins >= 50
    _finish(7, "distributed pipeline", t0, 600.0, f"{wins}/100 under the cost bound")


# ---------------------------------------------------------------------------
# 8. clone-space distance rules and triangle inequality


def _hand_summaries() -> list[WeightedSummary]:
    a = WeightedSummary(machine_id=0, centers=CenterSet([[0.0]]), weights=[7],
                        outliers_dropped=0, histograms=[[0, 3, 0, 4]])
    b = WeightedSummary(machine_id=1, centers=CenterSet([[3.0]]), weights=[5],
                        outliers_dropped=0, histograms=[[0, 2, 3]])
    return [a, b]


def test_criterion_08_clone_space_rules_and_triangle():
    t0 = time.perf_counter()
    inst = build_almost_metric(_hand_summaries())
    # clone y^j sits at distance 2^j from its base point
    assert inst.base_clone_distance(0, 1) == 8.0
    # self-distance of a clone is twice its radius
    assert inst.clone_distance(1, 1) == 16.0
    # clones of different bases: radius + base distance + radius
    assert inst.clone_distance(0, 3) == 9.0
    # clones of the same base skip the base distance
    assert inst.clone_distance(0, 1) == 10.0
    M = inst.cost_matrix()
    assert M[0, 3] == 81.0
    assert M[3, 3] == 64.0

    gen = np.random.default_rng(9850)
    coords = gen.normal(size=(150, 3)) * 25
    summaries = [machine_overseed(shard, ell=8, theta=PenaltyThreshold(40.0),
                                  refined=True, rng=RngStream(9851, 0, (j,)))
                 for j, shard in enumerate(shard_dataset(Dataset(coords), 3))]
    big = build_almost_metric(summaries)
    D = np.sqrt(big.cost_matrix())
    idx = gen.integers(0, big.n_clones, size=(10_000, 3))
    lhs = D[idx[:, 0], idx[:, 2]]
    rhs = D[idx[:, 0], idx[:, 1]] + D[idx[:, 1], idx[:, 2]]
    assert np.all(lhs <= rhs + 1e-9)
    _finish(8, "clone-space rules", t0, 10.0, "10000 triples, zero violations")


# ---------------------------------------------------------------------------
# 9. sublinear scaling of the fast pipeline's distance evaluations


def test_criterion_09_fast_pipeline_scaling():
    t0 = time.perf_counter()
    inst = gen_planted(10_000, 10, 250, dim=5, separation=10.0, noise_scale=1.0,
                       outlier_scale=4.0, rng=RngStream(9900, 0))
    outlier_counts = (250, 500, 1000, 2000)
    evals = []
    for i, z in enumerate(outlier_counts):
        counter = DistanceCounter()
        fast_algorithm(inst.data, 10, z, RngStream(9901, i), counter=counter)
        assert counter.count > 0
        evals.append(counter.count)
    slope = float(np.polyfit(np.log(outlier_counts), np.log(evals), 1)[0])
    assert -1.3 <= slope <= -0.7
    _finish(9, "fast pipeline scaling", t0, 600.0, f"log-log slope {slope:.2f}")


# ---------------------------------------------------------------------------
# 10. query-oracle hardness separation


def test_criterion_10_hardness_separation_and_counter():
    t0 = time.perf_counter()
    inst = gen_hard_instance(20_000, 20, 2000, RngStream(9950, 0), mass_mult=5.0)
    nonzero = 0
    for trial in range(100):
        sol, used = run_budgeted_eval(inst, uniform_random_centers(RngStream(9951, trial)),
                                      budget=0, outlier_mult=2.0)
        assert used == 0
        if sol.phi_cost > 0.0:
            nonzero += 1
    assert nonzero >= 50

    sol_ex, used_ex = run_budgeted_eval(inst, exhaustive_label_cover,
                                        budget=inst.n * inst.n)
    assert sol_ex.phi_cost == 0.0

    # the built-in query counter must agree with an external tally
    calls: list[tuple[int, int]] = []

    class TallyOracle(QueryOracle):
        def query(self, i: int, j: int) -> float:
            calls.append((i, j))
            return super().query(i, j)

    mirror = HardInstance(n=inst.n, k=inst.k, z=inst.z,
                          oracle=TallyOracle(inst.oracle.labels), mass_mult=5.0)
    _, used_mirror = run_budgeted_eval(mirror, exhaustive_label_cover,
                                       budget=inst.n * inst.n)
    assert used_mirror == len(calls) == mirror.oracle.queries_used == used_ex
    _finish(10, "hardness separation", t0, 300.0,
            f"{nonzero}/100 nonzero at budget 0, exhaustive cost 0")


# ---------------------------------------------------------------------------
# 11. experiment protocol improves on the baselines (direction only)


def test_criterion_11_experiment_smoke_direction():
    t0 = time.perf_counter()
    inst = gen_planted(2000, 10, 200, dim=5, separation=10.0, noise_scale=1.0,
                       outlier_scale=4.0, rng=RngStream(9990, 0))
    seeds = ",".join(str(s) for s in range(20))
    medians = {}
    for algo in ("kmeanspp", "penalized", "local_search"):
        cfg = parse_config(
            f"algorithm = {algo}\nk = 10\nz = 0.10\neps = 0.2\nseeds = {seeds}\n"
        )
        reports = run_experiment(cfg, inst.data, threads=4)
        assert len(reports) == 20
        medians[algo] = float(np.median([r.cost_phi_inliers for r in reports]))
    assert medians["penalized"] < medians["kmeanspp"]
    assert medians["local_search"] < medians["penalized"]
    _finish(11, "experiment smoke", t0, 600.0,
            "medians {kmeanspp:.0f} > {penalized:.0f} > {local_search:.0f}".format(**medians))


# ---------------------------------------------------------------------------
# 12. byte-identical reports across repeats and thread counts


def test_criterion_12_deterministic_reports():
    t0 = time.perf_counter()
    inst = gen_planted(500, 4, 40, dim=3, separation=8.0, noise_scale=1.0,
                       outlier_scale=4.0, rng=RngStream(9995, 0))
    cfg = parse_config(
        "algorithm = metropolized\nk = 3,4\nz = 0.08\neps = 0.5\n"
        "seeds = 0,1,2\nmh_steps = 60\n"
    )
    blobs = [
        reports_to_json_lines(run_experiment(cfg, inst.data, threads=t)).encode()
        for t in (1, 1, 8, 8)
    ]
    assert blobs[0] == blobs[1] == blobs[2] == blobs[3]
    _finish(12, "deterministic reports", t0, 120.0, "threads 1 and 8, two runs each")
