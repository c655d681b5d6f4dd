"""Shared primitives: datasets, penalty thresholds, clamped costs and the
incremental nearest-center cache used by every solver in this package.

Conventions
-----------
* All distances are *squared* Euclidean distances unless a name says
  otherwise.
* ``phi`` denotes the plain nearest-center cost of a point, ``tau`` the
  penalty-clamped cost ``min(theta, phi)``.
* Point weights are nonnegative integers (a weight-``w`` point behaves
  exactly like ``w`` coincident unit points).
* Deterministic float reductions only: per-center broadcast rows and
  ``ndarray.sum`` pairwise summation, never matrix products, so results are
  byte-stable across thread counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BudgetExhausted",
    "CenterSet",
    "ClusteringSolution",
    "CostCache",
    "CountingSpace",
    "DataError",
    "Dataset",
    "DistanceCounter",
    "InfeasibleProblem",
    "InfeasibleRung",
    "MatrixSpace",
    "PenaltyThreshold",
    "RaggedRowError",
    "RngStream",
    "TotalCostZero",
    "dist_sq",
    "farthest_indices",
    "mean",
    "out_set",
    "phi_minus_z",
    "tau_point",
    "tau_total",
]


# ---------------------------------------------------------------------------
# errors


class TotalCostZero(Exception):
    """Every point has clamped cost zero, so cost-proportional sampling is
    undefined (the current centers already cover the whole dataset)."""


class InfeasibleRung(Exception):
    """A guess rung cannot be completed (e.g. the adjusted outlier budget at
    the coordinator came out negative)."""


class BudgetExhausted(Exception):
    """A query-budgeted evaluation ran out of budget before the strategy
    proposed any solution."""


class InfeasibleProblem(Exception):
    """The instance parameters admit no meaningful solution (e.g. ``k + z``
    at least the number of points)."""


class DataError(Exception):
    """Malformed input data."""


class RaggedRowError(DataError):
    """Rows of an input table do not all have the same number of fields."""


# ---------------------------------------------------------------------------
# deterministic rng streams


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream addressed by ``(master_seed, stream_id)``
    plus an optional tuple of integer salts.

    Streams are value objects: equal addresses always yield identical
    generators, regardless of platform or thread interleaving.  Use
    :meth:`split` to derive independent child streams for subtasks.
    """

    master_seed: int
    stream_id: int
    salts: tuple = ()

    def __post_init__(self):
        for s in (self.master_seed, self.stream_id, *self.salts):
            if not isinstance(s, (int, np.integer)):
                raise TypeError("stream addresses must be integers")

    def split(self, *salts: int) -> "RngStream":
        """Child stream with the given salts appended to the address."""
        return RngStream(self.master_seed, self.stream_id, self.salts + tuple(int(s) for s in salts))

    def generator(self) -> np.random.Generator:
        """Fresh generator for this address (always the same sequence)."""
        entropy = (int(self.master_seed), int(self.stream_id), *map(int, self.salts))
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


# ---------------------------------------------------------------------------
# value types


@dataclass(frozen=True)
class PenaltyThreshold:
    """Per-point penalty cap ``theta``; clamped cost is ``min(theta, phi)``.

    ``PenaltyThreshold.infinite()`` disables clamping and recovers the plain
    k-means objective.
    """

    value: float

    def __post_init__(self):
        v = float(self.value)
        if np.isnan(v) or v < 0.0:
            raise ValueError(f"penalty threshold must be >= 0, got {self.value!r}")
        object.__setattr__(self, "value", v)

    @classmethod
    def infinite(cls) -> "PenaltyThreshold":
        return cls(np.inf)

    @property
    def is_finite(self) -> bool:
        return np.isfinite(self.value)

    def __float__(self) -> float:
        return self.value


def _as_theta(theta) -> float:
    """Accept a PenaltyThreshold or a bare nonnegative float."""
    if isinstance(theta, PenaltyThreshold):
        return theta.value
    v = float(theta)
    if np.isnan(v) or v < 0.0:
        raise ValueError(f"penalty threshold must be >= 0, got {theta!r}")
    return v


def _as_coords(points, name: str) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array of row vectors, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


class Dataset:
    """A weighted point set with float64 coordinates.

    Parameters
    ----------
    coords : array-like of shape (n, dim)
        Row-per-point coordinates.  Must be finite.
    weights : array-like of int of shape (n,), optional
        Nonnegative integer multiplicities, default all ones.  Zero weights
        are allowed (the point stays addressable but contributes no cost);
        the total weight must be positive.
    """

    def __init__(self, coords, weights=None):
        try:
            arr = np.asarray(coords, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"could not build coordinate array: {exc}") from None
        if arr.ndim != 2:
            raise ValueError(f"coords must be 2-d (n, dim), got shape {arr.shape}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError("dataset must contain at least one point with at least one coordinate")
        if not np.isfinite(arr).all():
            raise ValueError("coords contain NaN or infinite values")
        self.coords = np.ascontiguousarray(arr)
        if weights is None:
            self.weights = np.ones(self.n, dtype=np.int64)
        else:
            w = np.asarray(weights)
            if w.shape != (self.n,):
                raise ValueError(f"weights must have shape ({self.n},), got {w.shape}")
            if not np.issubdtype(w.dtype, np.integer):
                wf = np.asarray(w, dtype=float)
                if not np.all(np.isfinite(wf)) or np.any(wf != np.floor(wf)):
                    raise ValueError("weights must be integers")
                w = wf.astype(np.int64)
            w = w.astype(np.int64)
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
            if int(w.sum()) <= 0:
                raise ValueError("total weight must be positive")
            self.weights = w

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def total_weight(self) -> int:
        return int(self.weights.sum())

    def cost_row(self, i: int) -> np.ndarray:
        """Squared distances from point ``i`` to every point."""
        diff = self.coords - self.coords[i]
        return np.einsum("ij,ij->i", diff, diff)

    def cost_entries(self, i: int, idx) -> np.ndarray:
        """Squared distances from point ``i`` to the points in ``idx``."""
        diff = self.coords[idx] - self.coords[i]
        return np.einsum("ij,ij->i", diff, diff)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.coords[idx], weights=self.weights[idx])

    def diameter_sq_bound(self) -> float:
        """Squared diagonal of the bounding box (upper bound on the squared
        diameter)."""
        span = self.coords.max(axis=0) - self.coords.min(axis=0)
        return float((span ** 2).sum())

    def __repr__(self):
        return f"Dataset(n={self.n}, dim={self.dim}, total_weight={self.total_weight})"


class CenterSet:
    """An ordered list of center coordinates (order matters for tie-breaks)."""

    def __init__(self, coords):
        arr = _as_coords(coords, "centers")
        if arr.shape[0] == 0:
            raise ValueError("center set must be nonempty")
        self.coords = np.ascontiguousarray(arr)

    @classmethod
    def from_indices(cls, data: Dataset, idx) -> "CenterSet":
        return cls(data.coords[np.asarray(idx, dtype=int)])

    @property
    def k(self) -> int:
        return self.coords.shape[0]

    def __len__(self) -> int:
        return self.k

    def __iter__(self):
        return iter(self.coords)

    def __repr__(self):
        return f"CenterSet(k={self.k}, dim={self.coords.shape[1]})"


class MatrixSpace:
    """A finite space given by an explicit matrix of squared costs.

    Used for instances whose costs are not Euclidean (e.g. clamped or
    clone-expanded metrics); duck-types the ``cost_row``/``cost_entries``
    interface of :class:`Dataset`.
    """

    def __init__(self, cost_matrix, weights=None):
        D = np.asarray(cost_matrix, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ValueError(f"cost matrix must be square, got shape {D.shape}")
        if not np.isfinite(D).all() or (D < 0).any():
            raise ValueError("cost matrix entries must be finite and nonnegative")
        self._D = D
        n = D.shape[0]
        if weights is None:
            self.weights = np.ones(n, dtype=np.int64)
        else:
            w = np.asarray(weights, dtype=np.int64)
            if w.shape != (n,) or np.any(w < 0) or int(w.sum()) <= 0:
                raise ValueError("weights must be nonnegative integers with positive total")
            self.weights = w

    @property
    def n(self) -> int:
        return self._D.shape[0]

    @property
    def total_weight(self) -> int:
        return int(self.weights.sum())

    def cost_row(self, i: int) -> np.ndarray:
        return self._D[i]

    def cost_entries(self, i: int, idx) -> np.ndarray:
        return self._D[i, idx]


@dataclass
class DistanceCounter:
    """Mutable counter of scalar distance evaluations."""

    count: int = 0

    def add(self, m: int) -> None:
        self.count += int(m)


class CountingSpace:
    """Wrap a space so every distance evaluation is charged to a counter.

    ``cost_row`` charges ``n`` evaluations, ``cost_entries`` charges one per
    requested entry.
    """

    def __init__(self, inner, counter: DistanceCounter):
        self.inner = inner
        self.counter = counter

    @property
    def n(self) -> int:
        return self.inner.n

    @property
    def coords(self) -> np.ndarray:
        return self.inner.coords

    @property
    def weights(self) -> np.ndarray:
        return self.inner.weights

    @property
    def total_weight(self) -> int:
        return int(self.inner.weights.sum())

    def cost_row(self, i: int) -> np.ndarray:
        self.counter.add(self.inner.n)
        return self.inner.cost_row(i)

    def cost_entries(self, i: int, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=int)
        self.counter.add(idx.size)
        return self.inner.cost_entries(i, idx)


@dataclass(frozen=True)
class ClusteringSolution:
    """Final output of a solver: centers, declared outliers and their costs.

    ``phi_cost`` is the plain cost of the inliers (``X`` minus ``outliers``)
    against ``centers``; ``tau_cost`` is the clamped cost of *all* of ``X`` at
    this solution's penalty threshold.  ``qualified`` is False when the solver
    could not meet its declared outlier budget and fell back to its best
    unqualified state.
    """

    centers: CenterSet
    outliers: tuple
    phi_cost: float
    tau_cost: float
    theta: PenaltyThreshold
    qualified: bool = True

    def __post_init__(self):
        out = tuple(sorted(int(i) for i in self.outliers))
        if any(i < 0 for i in out):
            raise ValueError("outlier indices must be nonnegative")
        if len(set(out)) != len(out):
            raise ValueError("outlier indices must be distinct")
        object.__setattr__(self, "outliers", out)
        if self.phi_cost < 0 or self.tau_cost < 0:
            raise ValueError("costs must be nonnegative")

    @property
    def n_outliers(self) -> int:
        return len(self.outliers)


# ---------------------------------------------------------------------------
# cost functions


def dist_sq(a, b) -> float:
    """Squared Euclidean distance between two points."""
    av = np.asarray(a, dtype=float).ravel()
    bv = np.asarray(b, dtype=float).ravel()
    if av.shape != bv.shape:
        raise ValueError(f"dimension mismatch: {av.shape} vs {bv.shape}")
    d = av - bv
    return float((d * d).sum())


def _min_cost_to(coords: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Per-point squared distance to the nearest of ``centers``.

    One broadcast row per center; no matrix products, so the float reduction
    order is fixed.
    """
    best = np.full(coords.shape[0], np.inf)
    for c in centers:
        diff = coords - c
        np.minimum(best, np.einsum("ij,ij->i", diff, diff), out=best)
    return best


def _center_coords(centers) -> np.ndarray:
    if isinstance(centers, CenterSet):
        return centers.coords
    return CenterSet(centers).coords


def tau_point(x, centers, theta) -> float:
    """Clamped cost ``min(theta, phi(x, centers))`` of a single point."""
    th = _as_theta(theta)
    C = _center_coords(centers)
    xv = np.asarray(x, dtype=float).ravel()
    if xv.shape[0] != C.shape[1]:
        raise ValueError(f"dimension mismatch: point has {xv.shape[0]}, centers have {C.shape[1]}")
    diff = C - xv
    phi = float(np.einsum("ij,ij->i", diff, diff).min())
    return min(th, phi)


def tau_total(data: Dataset, centers, theta) -> float:
    """Total weighted clamped cost of a dataset against a center set."""
    th = _as_theta(theta)
    phi = _min_cost_to(data.coords, _center_coords(centers))
    return float((data.weights * np.minimum(phi, th)).sum())


def phi_minus_z(data: Dataset, centers, z: int) -> float:
    """Trimmed cost: total weighted cost after removing the ``z`` most
    expensive copies.

    Removal order is largest cost first, ties by lower point index first.
    A weight-``w`` point counts as ``w`` copies and may be removed
    partially.
    """
    z = int(z)
    if z < 0 or z > data.total_weight:
        raise ValueError(f"z must be in [0, total weight]; got z={z}, total={data.total_weight}")
    phi = _min_cost_to(data.coords, _center_coords(centers))
    kept, _ = _trim(phi, data.weights, z)
    return float((kept * phi).sum())


def _trim(costs: np.ndarray, weights: np.ndarray, z: int):
    """Drop ``z`` copies in (cost desc, index asc) order.

    Returns ``(kept_weights, drop_order)`` where ``kept_weights`` is a float
    array of surviving multiplicities and ``drop_order`` the point indices
    sorted in removal order.
    """
    n = costs.shape[0]
    order = np.lexsort((np.arange(n), -costs))
    w_ord = weights[order].astype(float)
    before = np.cumsum(w_ord) - w_ord
    dropped = np.clip(z - before, 0.0, w_ord)
    kept = np.empty_like(w_ord)
    kept[order] = w_ord - dropped  # scatter back to point order
    np.copyto(kept, weights.astype(float), where=kept > weights)  # guard fp noise
    return kept, order


def farthest_indices(data: Dataset, centers, z: int):
    """Indices of the points hit by trimming ``z`` copies, plus the trimmed
    cost of the remainder.

    Returns
    -------
    idx : ndarray of int, sorted ascending
        Every point that lost at least one copy (the boundary point of a
        weighted trim may survive with reduced multiplicity but is listed).
    inlier_cost : float
        Same value as :func:`phi_minus_z`.
    """
    z = int(z)
    if z < 0 or z > data.total_weight:
        raise ValueError(f"z must be in [0, total weight]; got z={z}")
    phi = _min_cost_to(data.coords, _center_coords(centers))
    kept, _ = _trim(phi, data.weights, z)
    touched = np.flatnonzero(kept < data.weights)
    return np.sort(touched), float((kept * phi).sum())


def out_set(data: Dataset, centers, theta) -> np.ndarray:
    """Sorted indices of points with ``phi >= theta`` (boundary included).

    ``theta`` must be finite: against an infinite threshold no point is ever
    priced out, and asking for the set is almost certainly a bug.
    """
    th = _as_theta(theta)
    if not np.isfinite(th):
        raise ValueError("out_set requires a finite penalty threshold")
    phi = _min_cost_to(data.coords, _center_coords(centers))
    return np.flatnonzero(phi >= th)


def mean(data: Dataset) -> np.ndarray:
    """Weighted coordinate-wise mean (the optimal 1-means center)."""
    w = data.weights.astype(float)
    return (data.coords * w[:, None]).sum(axis=0) / w.sum()


# ---------------------------------------------------------------------------
# incremental nearest-center cache


class CostCache:
    """Nearest and second-nearest center assignment, maintained incrementally.

    Centers are *site indices* into the underlying space (every solver in
    this package picks centers among the data points).  Adding a center is
    one cost row; removing one recomputes only the points that were assigned
    to it.  Ties in distance go to the center earliest in the list.

    Attributes
    ----------
    centers : list of int
        Current center sites, in insertion order.
    d1, d2 : ndarray of float
        Squared distance of every point to its nearest / second-nearest
        center (``inf`` when there are fewer than one / two centers).
    a1 : ndarray of int
        Position in ``centers`` of each point's nearest center (-1 when
        empty).
    """

    def __init__(self, space, centers=()):
        self.space = space
        n = space.n
        self.centers: list[int] = []
        self.d1 = np.full(n, np.inf)
        self.d2 = np.full(n, np.inf)
        self.a1 = np.full(n, -1, dtype=np.int64)
        self._a2 = np.full(n, -1, dtype=np.int64)
        for j in centers:
            self.add_center(int(j))

    @classmethod
    def from_scratch(cls, space, centers) -> "CostCache":
        """Fresh cache over the same centers (for consistency checks)."""
        return cls(space, list(centers))

    def add_center(self, site: int, _row: np.ndarray | None = None) -> None:
        d = self.space.cost_row(site) if _row is None else _row
        pos = len(self.centers)
        self.centers.append(int(site))
        closer = d < self.d1
        second = ~closer & (d < self.d2)
        # old nearest slides to second place where the new center wins
        self.d2[closer] = self.d1[closer]
        self._a2[closer] = self.a1[closer]
        self.d1[closer] = d[closer]
        self.a1[closer] = pos
        self.d2[second] = d[second]
        self._a2[second] = pos

    def remove_center(self, pos: int) -> None:
        if not 0 <= pos < len(self.centers):
            raise IndexError(f"no center at position {pos}")
        affected = np.flatnonzero((self.a1 == pos) | (self._a2 == pos))
        del self.centers[pos]
        self.a1[self.a1 > pos] -= 1
        self._a2[self._a2 > pos] -= 1
        if not len(self.centers):
            self.d1[:] = np.inf
            self.d2[:] = np.inf
            self.a1[:] = -1
            self._a2[:] = -1
            return
        # rebuild the two nearest centers for the affected points only
        m = affected.size
        d1 = np.full(m, np.inf)
        d2 = np.full(m, np.inf)
        a1 = np.full(m, -1, dtype=np.int64)
        a2 = np.full(m, -1, dtype=np.int64)
        for p, site in enumerate(self.centers):
            d = self.space.cost_entries(site, affected)
            closer = d < d1
            second = ~closer & (d < d2)
            d2[closer] = d1[closer]
            a2[closer] = a1[closer]
            d1[closer] = d[closer]
            a1[closer] = p
            d2[second] = d[second]
            a2[second] = p
        self.d1[affected] = d1
        self.d2[affected] = d2
        self.a1[affected] = a1
        self._a2[affected] = a2

    # -- aggregate costs ----------------------------------------------------

    def tau_row(self, theta) -> np.ndarray:
        """Per-point clamped cost (unweighted)."""
        return np.minimum(self.d1, _as_theta(theta))

    def tau_total(self, theta) -> float:
        return float((self.space.weights * self.tau_row(theta)).sum())

    def phi_total(self) -> float:
        return float((self.space.weights * self.d1).sum())

    def out_count(self, theta) -> int:
        """Total weight priced out at ``theta`` (``phi >= theta``)."""
        return int(self.space.weights[self.d1 >= _as_theta(theta)].sum())
