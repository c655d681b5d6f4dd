import math

import numpy as np
import pytest

from kmeans_outliers.core import (
    CenterSet,
    CostCache,
    CountingSpace,
    Dataset,
    DistanceCounter,
    InfeasibleProblem,
    PenaltyThreshold,
    RngStream,
    TotalCostZero,
    phi_minus_z,
    tau_total,
)
from kmeans_outliers.local_search import local_search_with_outliers
from kmeans_outliers.metropolis import (
    MHConfig,
    estimate_robust_cost,
    fast_algorithm,
    fast_coreset_solve,
    metropolized_overseed,
    mh_sample,
)

from _brute import mh_transition_matrix, power_distribution
from _planted import planted_instance


def test_mh_config_validation():
    assert MHConfig(chain_steps=5).proposal == "uniform"
    with pytest.raises(ValueError):
        MHConfig(chain_steps=0)
    with pytest.raises(ValueError):
        MHConfig(chain_steps=3, proposal="adaptive")


# ---------------------------------------------------------------------------
# the chain itself


def test_mh_sample_uniform_target_is_uniform():
    # theta clamps every non-center cost to the same value, so the acceptance
    # ratio is always 1 and the output is uniform over the non-center states
    X = Dataset([[0.0], [5.0], [10.0], [15.0], [20.0], [100.0]])
    cache = CostCache(X, [5])
    cfg = MHConfig(chain_steps=3)
    gen = RngStream(50, 0).generator()
    counts = np.zeros(6)
    for _ in range(5000):
        counts[mh_sample(X, cache, PenaltyThreshold(1.0), cfg, gen)] += 1
    freq = counts / counts.sum()
    np.testing.assert_allclose(freq[:5], 0.2, atol=0.03)
    assert freq[5] == 0.0


def test_mh_sample_two_state_one_step_frozen():
    # tau = (1, 3) -> pi = (0.25, 0.75); after one round from the uniform
    # start the exact law is (1/3, 2/3): hand-expanding the transition,
    # P(1->2) = 1/2, P(2->1) = (1/2)(1/3) = 1/6
    X = Dataset([[1.0], [math.sqrt(3.0)]])
    cache = CostCache(X)
    cache.add_center(0)
    cache.d1[:] = [1.0, 3.0]  # exact taus, avoiding sqrt rounding
    gen = RngStream(55, 0).generator()
    counts = np.zeros(2)
    reps = 30000
    for _ in range(reps):
        counts[mh_sample(X, cache, math.inf, MHConfig(1), gen)] += 1
    assert counts[0] / reps == pytest.approx(1 / 3, abs=0.01)
    assert counts[1] / reps == pytest.approx(2 / 3, abs=0.01)


def test_mh_sample_matches_exact_transition_law():
    rng = np.random.default_rng(51)
    pts = np.sort(rng.uniform(0, 4, size=8)).reshape(-1, 1)
    X = Dataset(pts)
    cache = CostCache(X, [2])
    theta = 1.5
    taus = np.minimum(cache.d1, theta)
    pi = taus / taus.sum()
    T = 6
    P = mh_transition_matrix(pi)
    exact = power_distribution(P, np.full(8, 1 / 8), T)
    gen = RngStream(52, 0).generator()
    counts = np.zeros(8)
    reps = 40000
    for _ in range(reps):
        counts[mh_sample(X, cache, theta, MHConfig(T), gen)] += 1
    np.testing.assert_allclose(counts / reps, exact, atol=0.02)


def test_mh_sample_never_returns_zero_mass_state():
    # most points sit exactly on the center (tau = 0); the sampler must not
    # end there even when the chain starts there
    coords = [[0.0]] * 20 + [[3.0], [4.0]]
    X = Dataset(coords)
    cache = CostCache(X, [0])
    gen = RngStream(53, 0).generator()
    for _ in range(200):
        j = mh_sample(X, cache, math.inf, MHConfig(2), gen)
        assert j in (20, 21)


def test_mh_sample_total_cost_zero():
    X = Dataset([[1.0], [1.0]])
    cache = CostCache(X, [0])
    with pytest.raises(TotalCostZero):
        mh_sample(X, cache, math.inf, MHConfig(3), RngStream(0, 0))


def test_mh_domination_small_instance():
    # exact transition-matrix powering dominates (1-(1-delta)^T) * pi when
    # max pi <= 1/z, i.e. the uniform proposal covers delta * pi
    rng = np.random.default_rng(54)
    z = 2
    n = 8
    for trial in range(10):
        pts = rng.uniform(0, 3, size=(n, 1))
        X = Dataset(pts)
        cache = CostCache(X, [int(rng.integers(n))])
        phi = cache.d1
        opt = float(np.sort(phi)[: n - z].sum()) or 1.0
        theta = opt / z  # inside [opt/(2z), opt/z]
        taus = np.minimum(phi, theta)
        pi = taus / taus.sum()
        if pi.max() > 1.0 / z:
            continue  # premise of the domination bound not met on this draw
        delta = z / n
        T = math.ceil(4 * n / z)
        p_T = power_distribution(mh_transition_matrix(pi), np.full(n, 1 / n), T)
        floor = (1.0 - (1.0 - delta) ** T) * pi
        assert np.all(p_T >= floor - 1e-12)
        assert np.all(p_T >= pi / 2 - 1e-12)


# ---------------------------------------------------------------------------
# metropolized overseeding


def test_metropolized_overseed_distinct_and_counted():
    inst = planted_instance(seed=5, n=400, k=3, z=20)
    X = Dataset(inst.coords)
    counter = DistanceCounter()
    space = CountingSpace(X, counter)
    ell, T = 6, 25
    C = metropolized_overseed(space, ell, PenaltyThreshold(50.0), MHConfig(T), RngStream(60, 0))
    assert len(C) == ell
    assert len({tuple(c) for c in C.coords}) == ell
    # lazy evaluation: at most (T+1) state evaluations per sample, each
    # costing at most the current number of centers
    assert counter.count <= ell * (T + 1) * ell


def test_metropolized_overseed_deterministic():
    inst = planted_instance(seed=6, n=300, k=3, z=15)
    X = Dataset(inst.coords)
    a = metropolized_overseed(X, 5, 40.0, MHConfig(30), RngStream(61, 1))
    b = metropolized_overseed(X, 5, 40.0, MHConfig(30), RngStream(61, 1))
    np.testing.assert_array_equal(a.coords, b.coords)


def test_metropolized_overseed_default_chain_length():
    inst = planted_instance(seed=7, n=200, k=2, z=10)
    X = Dataset(inst.coords)
    C = metropolized_overseed(X, 4, 30.0, None, RngStream(62, 0))
    assert len(C) == 4


def test_metropolized_oversampling_bound_smoke():
    # mini version of the coverage guarantee: clamped cost of the planted
    # inliers stays inside the 20 * (opt + eps z theta) envelope
    eps = 0.5
    hits = 0
    for seed in range(20):
        inst = planted_instance(seed=70 + seed, n=300, k=3, z=30, spread=60.0)
        X = Dataset(inst.coords)
        theta = inst.opt / (eps * inst.z)
        ell = math.ceil(20 * inst.k / eps / 10)  # scaled-down sample count
        T = math.ceil(4 * X.n / inst.z)
        C = metropolized_overseed(X, ell, theta, MHConfig(T), RngStream(71, seed))
        tau_in = tau_total(X.subset(inst.inlier_idx), C, theta)
        if tau_in <= 20.0 * (inst.opt + eps * inst.z * theta):
            hits += 1
    assert hits >= 15


# ---------------------------------------------------------------------------
# robust cost estimator


def test_estimate_sample_size_and_trim_frozen():
    rng = np.random.default_rng(80)
    X = Dataset(rng.normal(size=(400, 2)))
    C = CenterSet(X.coords[:3])
    est = estimate_robust_cost(X, C, z=40, A=2.0, rng=RngStream(81, 0))
    # N = ceil(4 * (400/40) * ln(400)^2) = ceil(1435.9...) = 1436
    assert est.sample_size == 1436
    # trim = ceil(4 * A * z * N / n) = ceil(1148.8) = 1149
    assert est.trim_fraction_used == pytest.approx(1149 / 1436)
    assert est.zeta >= 0.0


def test_estimate_zero_when_all_points_on_centers():
    X = Dataset([[0.0, 0.0]] * 30 + [[1.0, 1.0]] * 10)
    C = CenterSet([[0.0, 0.0], [1.0, 1.0]])
    est = estimate_robust_cost(X, C, z=4, A=2.0, rng=RngStream(82, 0))
    assert est.zeta == 0.0


def test_estimate_zero_when_z_equals_n():
    rng = np.random.default_rng(83)
    X = Dataset(rng.normal(size=(50, 2)))
    C = CenterSet(X.coords[:2])
    est = estimate_robust_cost(X, C, z=50, A=2.0, rng=RngStream(84, 0))
    assert est.zeta == 0.0


def test_estimate_sandwich_mini():
    # zeta is rarely above 4*phi^{-Az} or below phi^{-10Az}/4
    upper_ok = lower_ok = 0
    trials = 30
    for t in range(trials):
        rng = np.random.default_rng(500 + t)
        pts = rng.uniform(0, 10, size=(400, 2))
        X = Dataset(pts)
        C = CenterSet(pts[rng.choice(400, size=4, replace=False)])
        est = estimate_robust_cost(X, C, z=40, A=2.0, rng=RngStream(85, t))
        hi = phi_minus_z(X, C, min(2 * 40, 400))
        lo = phi_minus_z(X, C, min(10 * 2 * 40, 400))
        if est.zeta <= 4.0 * hi:
            upper_ok += 1
        if est.zeta >= 0.25 * lo:
            lower_ok += 1
    assert upper_ok >= 26
    assert lower_ok >= 26


# ---------------------------------------------------------------------------
# coreset solve


def test_coreset_solve_recovers_coincident_sites():
    coords = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    X = Dataset(np.repeat(coords, 8, axis=0))
    Y = CenterSet(coords)
    C = fast_coreset_solve(X, Y, PenaltyThreshold.infinite(), k=3,
                           rng=RngStream(90, 0), sample_size=60)
    assert sorted(map(tuple, C.coords)) == sorted(map(tuple, coords))


def test_coreset_solve_empty_bucket_is_fine():
    # second reference center is so remote that no subsample lands on it
    pts = np.concatenate([np.random.default_rng(91).normal(size=(40, 2)),
                          [[500.0, 500.0]]])
    X = Dataset(pts)
    Y = CenterSet([[0.0, 0.0], [500.0, 500.0]])
    C = fast_coreset_solve(X, Y, PenaltyThreshold(25.0), k=2,
                           rng=RngStream(92, 0), sample_size=10)
    assert len(C) == 2


def test_coreset_solve_requires_some_size_hint():
    X = Dataset(np.random.default_rng(93).normal(size=(20, 2)))
    with pytest.raises(ValueError):
        fast_coreset_solve(X, CenterSet(X.coords[:2]), 1.0, k=2, rng=RngStream(0, 0))


def test_coreset_solve_ten_x_bound_smoke():
    hits = 0
    for seed in range(20):
        inst = planted_instance(seed=600 + seed, n=300, k=3, z=15, spread=50.0)
        X = Dataset(inst.coords)
        means = np.stack([X.coords[inst.labels == j].mean(axis=0) for j in range(3)])
        Y = CenterSet(means)
        theta = inst.opt / inst.z
        C = fast_coreset_solve(X, Y, theta, k=3, rng=RngStream(94, seed), z=inst.z)
        if tau_total(X, C, theta) <= 10.0 * tau_total(X, Y, theta):
            hits += 1
    assert hits >= 15


# ---------------------------------------------------------------------------
# end-to-end fast algorithm


def test_fast_algorithm_delegates_for_small_z():
    inst = planted_instance(seed=8, n=200, k=3, z=5)
    X = Dataset(inst.coords)
    got = fast_algorithm(X, k=3, z=5, rng=RngStream(95, 0))
    want = local_search_with_outliers(X, k=3, z=5, eps=1.0, rng=RngStream(95, 0))
    assert got.outliers == want.outliers
    assert got.phi_cost == want.phi_cost
    np.testing.assert_array_equal(got.centers.coords, want.centers.coords)


def test_fast_algorithm_rejects_infeasible():
    X = Dataset(np.random.default_rng(96).normal(size=(10, 2)))
    with pytest.raises(InfeasibleProblem):
        fast_algorithm(X, k=5, z=5, rng=RngStream(0, 0))


def test_fast_algorithm_sampling_branch():
    inst = planted_instance(seed=9, n=6000, k=5, z=200, spread=80.0)
    X = Dataset(inst.coords)
    counter = DistanceCounter()
    sol = fast_algorithm(X, k=5, z=200, rng=RngStream(97, 0), counter=counter)
    assert len(sol.centers) == 5
    # outlier count is the analysis cap: ceil(10*A*z) with A=2, below n-k
    assert sol.n_outliers == 10 * 2 * 200
    assert counter.count > 0
    # the declared inlier cost stays within a loose constant of planted opt
    assert sol.phi_cost <= 100.0 * inst.opt
    again = fast_algorithm(X, k=5, z=200, rng=RngStream(97, 0))
    assert again.outliers == sol.outliers
    assert again.phi_cost == sol.phi_cost
