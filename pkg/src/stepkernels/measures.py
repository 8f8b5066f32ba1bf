"""Finite decoration spaces, signed measures on them, and metrics for weak convergence.

Measures on a finite metric space are dense weight vectors indexed by the
space's points.  Two metrizations of weak convergence are provided: the exact
Levy-Prokhorov distance (computed by subset enumeration, so only practical for
small spaces) and the norm induced by a finite family of [0,1]-valued test
functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "ABS_TOL",
    "LP_EXACT_MAX_POINTS",
    "DecorationSpace",
    "SignedMeasure",
    "TestFamily",
    "LPEstimate",
    "SpaceMismatchError",
    "dirac",
    "integrate",
    "hahn_jordan",
    "tv_distance",
    "f_norm",
    "f_distance",
    "lp_distance",
    "lp_distance_batch",
    "lp_feasible",
    "lp_distance_estimate",
]

ABS_TOL = 1e-12
# 2**m subsets are enumerated when computing the Levy-Prokhorov distance.
LP_EXACT_MAX_POINTS = 20


class SpaceMismatchError(ValueError):
    """Raised when operands live on different decoration spaces."""


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=16)
def _subset_masks(m: int) -> np.ndarray:
    """Boolean matrix of shape (2**m, m); row s is the indicator of subset s."""
    if m > LP_EXACT_MAX_POINTS:
        raise ValueError(f"subset enumeration capped at {LP_EXACT_MAX_POINTS} points, got {m}")
    idx = np.arange(1 << m, dtype=np.uint32)
    masks = (idx[:, None] >> np.arange(m, dtype=np.uint32)) & 1
    masks = masks.astype(bool)
    masks.setflags(write=False)
    return masks


@dataclass(frozen=True, eq=False)
class DecorationSpace:
    """A finite metric space whose points decorate graph edges.

    ``dist`` must be symmetric, zero exactly on the diagonal, strictly
    positive off it, and satisfy the triangle inequality.
    """

    points: tuple
    dist: np.ndarray

    def __init__(self, points, dist):
        points = tuple(points)
        if len(points) < 1:
            raise ValueError("a decoration space needs at least one point")
        if len(set(points)) != len(points):
            raise ValueError("decoration point labels must be distinct")
        d = np.array(dist, dtype=float)
        m = len(points)
        if d.shape != (m, m):
            raise ValueError(f"distance matrix must be {m}x{m}, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("distances must be finite")
        if np.abs(d - d.T).max(initial=0.0) > ABS_TOL:
            raise ValueError("distance matrix must be symmetric")
        d = (d + d.T) / 2.0
        if np.abs(np.diag(d)).max(initial=0.0) > ABS_TOL:
            raise ValueError("distance matrix must vanish on the diagonal")
        np.fill_diagonal(d, 0.0)
        off = d[~np.eye(m, dtype=bool)]
        if off.size and off.min() <= 0.0:
            raise ValueError("off-diagonal distances must be strictly positive")
        # triangle inequality, O(m^3): d[i,j] <= min_k d[i,k] + d[k,j]
        via = d[:, :, None] + d[None, :, :]
        if (d - via.min(axis=1)).max() > 1e-9:
            raise ValueError("distance matrix violates the triangle inequality")
        d.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "dist", d)
        object.__setattr__(self, "_cache", {})

    @property
    def size(self) -> int:
        return len(self.points)

    def same_as(self, other: "DecorationSpace") -> bool:
        return self is other or (
            self.points == other.points and np.array_equal(self.dist, other.dist)
        )

    def require_same(self, other: "DecorationSpace") -> None:
        if not self.same_as(other):
            raise SpaceMismatchError("operands live on different decoration spaces")

    def thresholds(self) -> np.ndarray:
        """Sorted distinct distance values, always starting at 0."""
        key = "thresholds"
        if key not in self._cache:
            t = np.unique(self.dist)
            self._cache[key] = _frozen(t)
        return self._cache[key]

    def index(self, point) -> int:
        return self.points.index(point)

    def _reach_tables(self):
        """For each threshold t: boolean (2**m, m) table of the t-enlargements.

        Row s of table r indicates the set of points within distance <= t_r of
        subset s.
        """
        key = "reach"
        if key not in self._cache:
            masks = _subset_masks(self.size)
            tables = []
            for t in self.thresholds():
                reach = self.dist <= t + ABS_TOL
                tables.append(masks @ reach > 0)
            self._cache[key] = tables
        return self._cache[key]

    @classmethod
    def two_point(cls, labels=(0, 1), distance: float = 1.0) -> "DecorationSpace":
        return cls(labels, [[0.0, distance], [distance, 0.0]])

    @classmethod
    def discrete(cls, labels) -> "DecorationSpace":
        """All off-diagonal distances equal to 1."""
        labels = tuple(labels)
        m = len(labels)
        d = np.ones((m, m)) - np.eye(m)
        return cls(labels, d)

    def __repr__(self):
        return f"DecorationSpace({list(self.points)!r})"


@dataclass(frozen=True, eq=False)
class SignedMeasure:
    """A finite signed measure on a DecorationSpace, stored as a weight vector."""

    space: DecorationSpace
    weights: np.ndarray

    def __init__(self, space: DecorationSpace, weights):
        w = np.array(weights, dtype=float)
        if w.shape != (space.size,):
            raise ValueError(f"weights must have shape ({space.size},), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "weights", w)

    def total_variation(self) -> float:
        return float(np.abs(self.weights).sum())

    def total_mass(self) -> float:
        return float(self.weights.sum())

    def is_nonnegative(self, tol: float = ABS_TOL) -> bool:
        return bool(self.weights.min(initial=0.0) >= -tol)

    def is_probability(self, tol: float = ABS_TOL) -> bool:
        return self.is_nonnegative(tol) and abs(self.total_mass() - 1.0) <= tol

    def variation(self) -> "SignedMeasure":
        return SignedMeasure(self.space, np.abs(self.weights))

    def approx_eq(self, other: "SignedMeasure", tol: float = ABS_TOL) -> bool:
        self.space.require_same(other.space)
        return bool(np.abs(self.weights - other.weights).max(initial=0.0) <= tol)

    def __add__(self, other: "SignedMeasure") -> "SignedMeasure":
        self.space.require_same(other.space)
        return SignedMeasure(self.space, self.weights + other.weights)

    def __sub__(self, other: "SignedMeasure") -> "SignedMeasure":
        self.space.require_same(other.space)
        return SignedMeasure(self.space, self.weights - other.weights)

    def __mul__(self, c: float) -> "SignedMeasure":
        return SignedMeasure(self.space, self.weights * float(c))

    __rmul__ = __mul__

    def __repr__(self):
        return f"SignedMeasure({np.array2string(self.weights, precision=6)})"


def dirac(space: DecorationSpace, point) -> SignedMeasure:
    w = np.zeros(space.size)
    w[space.index(point)] = 1.0
    return SignedMeasure(space, w)


def zero_measure(space: DecorationSpace) -> SignedMeasure:
    return SignedMeasure(space, np.zeros(space.size))


@dataclass(frozen=True, eq=False)
class TestFamily:
    """An ordered family f_0..f_K of [0,1]-valued functions with f_0 == 1.

    The value matrix must have full column rank, which on a finite space is
    exactly the separating property: no two distinct measures integrate every
    member identically.
    """

    __test__ = False  # not a pytest case despite the name

    space: DecorationSpace
    values: np.ndarray

    def __init__(self, space: DecorationSpace, values):
        v = np.array(values, dtype=float)
        if v.ndim != 2 or v.shape[1] != space.size:
            raise ValueError(f"values must be (K+1, {space.size}), got {v.shape}")
        if v.shape[0] < 1:
            raise ValueError("family must contain at least f_0")
        if v.min() < -ABS_TOL or v.max() > 1.0 + ABS_TOL:
            raise ValueError("family functions must take values in [0, 1]")
        if np.abs(v[0] - 1.0).max() > ABS_TOL:
            raise ValueError("f_0 must be the constant function 1")
        if np.linalg.matrix_rank(v, tol=1e-10) < space.size:
            raise ValueError("family value matrix must have full column rank (separating)")
        v.setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.shape[0]

    def function(self, k: int) -> np.ndarray:
        return self.values[k]

    def scale_weights(self) -> np.ndarray:
        """Geometric weights 2**-k applied to the k-th integral."""
        return 2.0 ** (-np.arange(len(self), dtype=float))

    @classmethod
    def default(cls, space: DecorationSpace) -> "TestFamily":
        """The constant 1 followed by the indicators of singletons."""
        return cls(space, np.vstack([np.ones(space.size), np.eye(space.size)]))

    @classmethod
    def two_point(cls, space: DecorationSpace) -> "TestFamily":
        """{1, indicator of the second point}; separates measures on 2 points."""
        if space.size != 2:
            raise ValueError("two_point family requires a 2-point space")
        return cls(space, [[1.0, 1.0], [0.0, 1.0]])


def integrate(mu: SignedMeasure, f) -> float:
    """Integral of the function-vector ``f`` against ``mu``."""
    f = np.asarray(f, dtype=float)
    if f.shape != (mu.space.size,):
        raise SpaceMismatchError(
            f"function vector of length {f.shape} does not match a "
            f"{mu.space.size}-point space"
        )
    return float(mu.weights @ f)


def integrate_family(mu: SignedMeasure, fam: TestFamily) -> np.ndarray:
    mu.space.require_same(fam.space)
    return fam.values @ mu.weights


def hahn_jordan(mu: SignedMeasure) -> tuple[SignedMeasure, SignedMeasure]:
    """Positive/negative parts; mutually singular, mu = pos - neg."""
    pos = np.maximum(mu.weights, 0.0)
    neg = np.maximum(-mu.weights, 0.0)
    return SignedMeasure(mu.space, pos), SignedMeasure(mu.space, neg)


def tv_distance(mu: SignedMeasure, nu: SignedMeasure) -> float:
    mu.space.require_same(nu.space)
    return float(np.abs(mu.weights - nu.weights).sum())


def f_norm(mu: SignedMeasure, fam: TestFamily) -> float:
    """Sum over k of 2**-k |mu(f_k)|.  Bounded by 2 * total variation."""
    mu.space.require_same(fam.space)
    return float(fam.scale_weights() @ np.abs(fam.values @ mu.weights))


def f_distance(mu: SignedMeasure, nu: SignedMeasure, fam: TestFamily) -> float:
    return f_norm(mu - nu, fam)


def _require_nonnegative(mu: SignedMeasure, name: str) -> None:
    if not mu.is_nonnegative():
        raise ValueError(f"{name} has negative weights; the Levy-Prokhorov "
                         "distance is defined for nonnegative measures only")


def lp_distance(mu: SignedMeasure, nu: SignedMeasure) -> float:
    """Exact Levy-Prokhorov distance between nonnegative measures.

    The infimum of eps such that, for every subset U, mu(U) <= nu(U^eps) + eps
    and symmetrically, where U^eps collects the points at distance < eps from
    U.  Exact up to ``LP_EXACT_MAX_POINTS`` points; beyond that use
    :func:`lp_distance_estimate`.
    """
    mu.space.require_same(nu.space)
    _require_nonnegative(mu, "mu")
    _require_nonnegative(nu, "nu")
    if mu.space.size > LP_EXACT_MAX_POINTS:
        raise ValueError(
            f"exact Levy-Prokhorov distance is capped at {LP_EXACT_MAX_POINTS} "
            "points; call lp_distance_estimate for flagged bounds"
        )
    return float(lp_distance_batch(mu.space, mu.weights[None, :], nu.weights[None, :])[0])


def lp_distance_batch(space: DecorationSpace, mus: np.ndarray, nus: np.ndarray) -> np.ndarray:
    """Exact Levy-Prokhorov distances for a batch of weight-vector pairs.

    All pairs share ``space``.  ``mus`` and ``nus`` are (B, m) nonnegative
    arrays.  Returns a (B,) array.

    For eps inside an interval between consecutive distance values the
    enlargement U^eps is constant, so the feasibility requirement there is the
    largest achievable mass gap max_U (mu(U) - nu(U^eps)) over both
    directions.  Scanning every interval therefore locates the infimum
    exactly: the candidate set is the distance values together with the
    achievable mass gaps, and the minimum valid candidate is the distance.
    """
    m = space.size
    mus = np.asarray(mus, dtype=float)
    nus = np.asarray(nus, dtype=float)
    if mus.ndim != 2 or mus.shape[1] != m or nus.shape != mus.shape:
        raise ValueError("mus and nus must be (B, m) arrays over the space")
    masks = _subset_masks(m)
    thresholds = space.thresholds()
    reach_tables = space._reach_tables()
    # mass of every subset, for every batch member: (2**m, B)
    mu_sub = masks @ mus.T
    nu_sub = masks @ nus.T
    best = np.full(mus.shape[0], np.inf)
    n_thresh = len(thresholds)
    for r in range(n_thresh):
        t = thresholds[r]
        t_next = thresholds[r + 1] if r + 1 < n_thresh else np.inf
        reach = reach_tables[r]
        mu_reach = reach @ mus.T
        nu_reach = reach @ nus.T
        gaps = np.maximum(mu_sub - nu_reach, nu_sub - mu_reach)
        required = gaps.max(axis=0)
        required = np.maximum(required, 0.0)
        candidate = np.where(required <= t_next, np.maximum(required, t), np.inf)
        best = np.minimum(best, candidate)
    return best


def lp_feasible(mu: SignedMeasure, nu: SignedMeasure, eps: float) -> bool:
    """Definitional feasibility check of a candidate eps (2**m subsets).

    Uses the strict enlargement U^eps = {z : d(z, U) < eps}.
    """
    mu.space.require_same(nu.space)
    _require_nonnegative(mu, "mu")
    _require_nonnegative(nu, "nu")
    if eps <= 0:
        return tv_distance(mu, nu) == 0.0
    m = mu.space.size
    masks = _subset_masks(m)
    reach = mu.space.dist < eps
    enlarged = masks @ reach > 0
    mu_sub = masks @ mu.weights
    nu_sub = masks @ nu.weights
    mu_enl = enlarged @ mu.weights
    nu_enl = enlarged @ nu.weights
    ok1 = np.all(mu_sub <= nu_enl + eps + ABS_TOL)
    ok2 = np.all(nu_sub <= mu_enl + eps + ABS_TOL)
    return bool(ok1 and ok2)


@dataclass(frozen=True)
class LPEstimate:
    """Levy-Prokhorov value or certified bracket, with an exactness flag."""

    lower: float
    upper: float
    exact: bool

    @property
    def value(self) -> float:
        return self.upper


def lp_distance_estimate(mu: SignedMeasure, nu: SignedMeasure) -> LPEstimate:
    """Exact value when the space is small; otherwise a flagged bracket.

    Beyond the exact cap the upper bound is the total variation distance and
    the lower bound comes from a greedy single-subset search.
    """
    mu.space.require_same(nu.space)
    _require_nonnegative(mu, "mu")
    _require_nonnegative(nu, "nu")
    if mu.space.size <= LP_EXACT_MAX_POINTS:
        v = lp_distance(mu, nu)
        return LPEstimate(lower=v, upper=v, exact=True)
    upper = tv_distance(mu, nu)
    lower = _lp_greedy_lower(mu, nu)
    return LPEstimate(lower=lower, upper=upper, exact=False)


def _single_subset_requirement(space, wa, wb, subset):
    """Infimum of eps satisfying both directional constraints for one subset."""
    thresholds = space.thresholds()
    inside = subset
    best = np.inf
    for r, t in enumerate(thresholds):
        t_next = thresholds[r + 1] if r + 1 < len(thresholds) else np.inf
        reach = (space.dist[:, inside] <= t + ABS_TOL).any(axis=1) if inside.any() \
            else np.zeros(space.size, dtype=bool)
        req = max(wa[inside].sum() - wb[reach].sum(),
                  wb[inside].sum() - wa[reach].sum(), 0.0)
        if req <= t_next:
            best = min(best, max(req, t))
    return best


def _lp_greedy_lower(mu: SignedMeasure, nu: SignedMeasure, sweeps: int = 4) -> float:
    """Greedy hill-climb over single subsets; any subset yields a lower bound."""
    space = mu.space
    m = space.size
    wa, wb = mu.weights, nu.weights
    subset = wa > wb  # start where mu exceeds nu
    best = _single_subset_requirement(space, wa, wb, subset)
    for _ in range(sweeps):
        improved = False
        for i in range(m):
            trial = subset.copy()
            trial[i] = ~trial[i]
            val = _single_subset_requirement(space, wa, wb, trial)
            if val > best + ABS_TOL:
                subset, best, improved = trial, val, True
        if not improved:
            break
    return float(best)
