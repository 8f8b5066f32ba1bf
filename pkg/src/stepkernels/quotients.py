"""Quotient graphs of step kernels, quotient clouds, and Hausdorff comparison.

A quotient averages a kernel over a finite partition, producing a
vertex-weighted graph whose edges are decorated by measures.  The full
quotient set of a kernel is infinite; clouds are finite, provenance-tagged
skeletons built from grid assignments or seeded samples.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .kernels import StepKernel, uniform_refine
from .measures import DecorationSpace, SignedMeasure, _subset_masks, lp_distance_batch
from .overlay import OverlapMatrix

__all__ = [
    "DSQUARE_ENUM_MAX",
    "Quotient",
    "QuotientCloud",
    "quotient",
    "d1_quotient",
    "dsquare_quotient",
    "dsquare_quotient_search",
    "quotient_cloud",
    "hausdorff",
    "rebalance_partition",
]

DSQUARE_ENUM_MAX = 12
DEGENERATE_TOL = 1e-12
DEDUP_DECIMALS = 9


@dataclass(frozen=True, eq=False)
class Quotient:
    """Vertex weights plus measure-valued edge decorations on [k].

    ``beta[i, j]`` is the average of the source kernel over the (i, j) cell
    rectangle; cells with zero mass carry the zero measure and are marked
    degenerate.
    """

    space: DecorationSpace
    alpha: np.ndarray
    beta: np.ndarray  # (k, k, m)

    def __init__(self, space, alpha, beta):
        a = np.array(alpha, dtype=float)
        b = np.array(beta, dtype=float)
        k = a.size
        if a.min() < -DEGENERATE_TOL or abs(a.sum() - 1.0) > 1e-9:
            raise ValueError("vertex weights must be a probability vector")
        a = np.maximum(a, 0.0)
        if b.shape != (k, k, space.size):
            raise ValueError(f"beta must be (k, k, {space.size}), got {b.shape}")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def k(self) -> int:
        return self.alpha.size

    def degenerate(self) -> np.ndarray:
        return self.alpha <= DEGENERATE_TOL

    def scaled(self) -> np.ndarray:
        """Mass-scaled decorations alpha_i alpha_j beta_ij (block integrals)."""
        return self.beta * np.multiply.outer(
            np.outer(self.alpha, self.alpha), np.ones(self.space.size)
        )

    def decoration(self, i: int, j: int) -> SignedMeasure:
        return SignedMeasure(self.space, self.beta[i, j])

    def to_jsonable(self) -> dict:
        return {"alpha": self.alpha.tolist(), "beta": self.beta.tolist()}


def quotient(kernel: StepKernel, partition) -> Quotient:
    """Average the kernel over a partition given as an overlap matrix.

    ``partition`` may be an OverlapMatrix against the kernel's parts or an
    integer assignment vector sending each part wholly to one cell (pass a
    pair ``(assignment, k)`` to fix the cell count).
    """
    if isinstance(partition, OverlapMatrix):
        overlap = partition
    elif isinstance(partition, tuple):
        assignment, k = partition
        overlap = OverlapMatrix.from_assignment(kernel.part_sizes, assignment, k)
    else:
        z = np.asarray(partition, dtype=int)
        overlap = OverlapMatrix.from_assignment(kernel.part_sizes, z, int(z.max()) + 1)
    if overlap.rho.shape[0] != kernel.n_parts:
        raise ValueError("overlap rows do not match the kernel parts")
    if np.abs(overlap.row_sums - kernel.part_sizes).max() > 1e-9:
        raise ValueError("overlap row sums do not match the kernel part sizes")
    alpha = overlap.col_sums
    scaled = np.einsum("pi,pqm,qj->ijm", overlap.rho, kernel.entries, overlap.rho, optimize=True)
    mass = np.outer(alpha, alpha)
    safe = np.where(mass > DEGENERATE_TOL, mass, 1.0)
    beta = scaled / safe[:, :, None]
    beta[mass <= DEGENERATE_TOL] = 0.0
    return Quotient(kernel.space, alpha / max(alpha.sum(), 1e-300), beta)


def _check_comparable(a: Quotient, b: Quotient) -> None:
    a.space.require_same(b.space)
    if a.k != b.k:
        raise ValueError(f"quotients have different cell counts: {a.k} vs {b.k}")


def _require_nonneg_scaled(q: Quotient, name: str) -> np.ndarray:
    s = q.scaled()
    if s.min() < -1e-12:
        raise ValueError(
            f"{name} has signed decorations; quotient distances use the "
            "Levy-Prokhorov metric and need nonnegative sources"
        )
    return np.maximum(s, 0.0)


def d1_quotient(a: Quotient, b: Quotient) -> float:
    """Vertex-weight l1 gap plus the sum of blockwise Levy-Prokhorov gaps."""
    _check_comparable(a, b)
    sa = _require_nonneg_scaled(a, "first quotient")
    sb = _require_nonneg_scaled(b, "second quotient")
    k, m = a.k, a.space.size
    d = lp_distance_batch(a.space, sa.reshape(-1, m), sb.reshape(-1, m))
    return float(np.abs(a.alpha - b.alpha).sum() + d.sum())


def dsquare_quotient(a: Quotient, b: Quotient) -> float:
    """Vertex-weight l1 gap plus the rectangle supremum of aggregated gaps."""
    _check_comparable(a, b)
    k = a.k
    if k > DSQUARE_ENUM_MAX:
        raise ValueError(
            f"exact rectangle enumeration is capped at {DSQUARE_ENUM_MAX} cells; "
            "call dsquare_quotient_search for a flagged estimate"
        )
    sa = _require_nonneg_scaled(a, "first quotient")
    sb = _require_nonneg_scaled(b, "second quotient")
    m = a.space.size
    masks = _subset_masks(k).astype(float)
    agg_a = np.einsum("si,ijm,tj->stm", masks, sa, masks, optimize=True)
    agg_b = np.einsum("si,ijm,tj->stm", masks, sb, masks, optimize=True)
    d = lp_distance_batch(
        a.space,
        np.clip(agg_a.reshape(-1, m), 0.0, None),
        np.clip(agg_b.reshape(-1, m), 0.0, None),
    )
    return float(np.abs(a.alpha - b.alpha).sum() + d.max(initial=0.0))


def dsquare_quotient_search(a: Quotient, b: Quotient, budget=None) -> "SearchResult":
    """Rectangle supremum by flip local search; a flagged lower bound.

    Falls through to the exact enumeration when the cell count allows it.
    """
    from .search import SearchBudget, SearchResult

    _check_comparable(a, b)
    k = a.k
    if k <= DSQUARE_ENUM_MAX:
        return SearchResult(dsquare_quotient(a, b), True, None)
    budget = budget or SearchBudget()
    sa = _require_nonneg_scaled(a, "first quotient")
    sb = _require_nonneg_scaled(b, "second quotient")
    m = a.space.size
    alpha_term = float(np.abs(a.alpha - b.alpha).sum())

    def agg(scaled, s, t):
        return np.einsum("i,ijm,j->m", s.astype(float), scaled, t.astype(float))

    best = 0.0
    for r in range(budget.restarts):
        rng = np.random.default_rng(np.random.SeedSequence(budget.seed, spawn_key=(41, r)))
        s = np.ones(k, dtype=bool) if r == 0 else rng.random(k) < 0.5
        t = np.ones(k, dtype=bool) if r == 0 else rng.random(k) < 0.5
        for _ in range(64):
            val = float(lp_distance_batch(
                a.space, agg(sa, s, t)[None, :], agg(sb, s, t)[None, :]
            )[0])
            cand_mu = np.empty((2 * k, m))
            cand_nu = np.empty((2 * k, m))
            for i in range(k):
                s[i] = ~s[i]
                cand_mu[i] = agg(sa, s, t)
                cand_nu[i] = agg(sb, s, t)
                s[i] = ~s[i]
                t[i] = ~t[i]
                cand_mu[k + i] = agg(sa, s, t)
                cand_nu[k + i] = agg(sb, s, t)
                t[i] = ~t[i]
            vals = lp_distance_batch(a.space, cand_mu, cand_nu)
            j = int(np.argmax(vals))
            if vals[j] <= val + 1e-15:
                break
            if j < k:
                s[j] = ~s[j]
            else:
                t[j - k] = ~t[j - k]
        final = float(lp_distance_batch(
            a.space, agg(sa, s, t)[None, :], agg(sb, s, t)[None, :]
        )[0])
        best = max(best, final)
    return SearchResult(alpha_term + best, False, None)


@dataclass(frozen=True, eq=False)
class QuotientCloud:
    """Finite skeleton of a quotient set, with generation provenance."""

    space: DecorationSpace
    k: int
    quotients: tuple
    provenance: dict

    def __len__(self) -> int:
        return len(self.quotients)

    def to_jsonable(self) -> dict:
        return {
            "k": self.k,
            "space": {"points": list(self.space.points), "dist": self.space.dist.tolist()},
            "quotients": [q.to_jsonable() for q in self.quotients],
            "provenance": self.provenance,
        }


def _dedup_key(alpha: np.ndarray, scaled: np.ndarray) -> bytes:
    return (
        np.round(alpha, DEDUP_DECIMALS).tobytes()
        + np.round(scaled, DEDUP_DECIMALS).tobytes()
    )


def _iter_assignments(n: int, k: int, chunk: int = 4096):
    it = itertools.product(range(k), repeat=n)
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            return
        yield np.array(block, dtype=np.intp)


def quotient_cloud(
    kernel: StepKernel,
    k: int,
    mode: str = "enumerate",
    cells: Optional[int] = None,
    count: int = 64,
    seed: int = 0,
    alpha=None,
    max_enumeration: int = 1_000_000,
) -> QuotientCloud:
    """Finite approximation of the k-cell quotient set.

    ``enumerate`` mode refines the kernel to ``cells`` equal cells and takes
    every class assignment (optionally filtered to vertex weights ``alpha``);
    ``sample`` mode takes ``count`` seeded uniform assignments plus every
    partition aligned with the kernel's own parts.  Members are deduplicated
    on rounded (alpha, scaled decorations) keys.
    """
    if mode == "enumerate":
        n = cells if cells is not None else kernel.n_parts
        if float(k) ** n > max_enumeration:
            raise ValueError(
                f"{k}**{n} assignments exceed the enumeration budget; "
                "use mode='sample'"
            )
        refined = uniform_refine(kernel, n)
        target_counts = None
        if alpha is not None:
            target = np.asarray(alpha, dtype=float) * n
            if np.abs(target - np.rint(target)).max() > 1e-9:
                raise ValueError("alpha is not realizable on the requested grid")
            target_counts = np.rint(target).astype(int)
        members: dict[bytes, Quotient] = {}
        for chunk in _iter_assignments(n, k):
            for z in chunk:
                if target_counts is not None:
                    if not np.array_equal(np.bincount(z, minlength=k), target_counts):
                        continue
                q = quotient(refined, (z, k))
                members.setdefault(_dedup_key(q.alpha, q.scaled()), q)
        provenance = {"mode": "enumerate", "cells": int(n), "k": int(k)}
        if alpha is not None:
            provenance["alpha"] = list(np.asarray(alpha, dtype=float))
        return QuotientCloud(kernel.space, k, tuple(members.values()), provenance)

    if mode == "sample":
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(31,)))
        n = cells if cells is not None else kernel.n_parts
        refined = uniform_refine(kernel, n)
        members = {}
        p = kernel.n_parts
        if float(k) ** p <= 4096:
            for z in itertools.product(range(k), repeat=p):
                q = quotient(kernel, (np.array(z, dtype=np.intp), k))
                members.setdefault(_dedup_key(q.alpha, q.scaled()), q)
        # stratify over cell-mass vectors so coverage does not collapse onto
        # balanced partitions as n grows
        for counts in _stratified_counts(n, k, count, rng):
            z = np.repeat(np.arange(k, dtype=np.intp), counts)
            rng.shuffle(z)
            q = quotient(refined, (z, k))
            members.setdefault(_dedup_key(q.alpha, q.scaled()), q)
        for _ in range(count):
            z = rng.integers(0, k, size=n)
            q = quotient(refined, (z, k))
            members.setdefault(_dedup_key(q.alpha, q.scaled()), q)
        provenance = {
            "mode": "sample",
            "cells": int(n),
            "count": int(count),
            "seed": int(seed),
            "k": int(k),
        }
        return QuotientCloud(kernel.space, k, tuple(members.values()), provenance)

    if mode == "alpha_grid":
        # fractional-overlap quotients on a mass grid: one product-coupling
        # member per mass vector plus seeded transportation vertices; the
        # grid is the multiples of 1/cells (k = 2) or seeded compositions
        from .overlay import _random_transport_vertex

        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(37,)))
        r = cells if cells is not None else 16
        lam = kernel.part_sizes
        alphas: list[np.ndarray] = []
        if k == 2:
            alphas.extend(np.array([c / r, 1.0 - c / r]) for c in range(r + 1))
        else:
            for i in range(k):
                corner = np.zeros(k)
                corner[i] = 1.0
                alphas.append(corner)
            alphas.append(np.full(k, 1.0 / k))
            for _ in range(max(count - len(alphas), 0)):
                c = rng.multinomial(r, rng.dirichlet(np.ones(k)))
                alphas.append(c / r)
        members = {}
        per_alpha = max(1, count // max(len(alphas), 1))
        for a in alphas:
            overlaps = [OverlapMatrix(np.outer(lam, a))]
            for _ in range(per_alpha - 1):
                overlaps.append(OverlapMatrix(_random_transport_vertex(lam, a, rng)))
            for ov in overlaps:
                q = quotient(kernel, ov)
                members.setdefault(_dedup_key(q.alpha, q.scaled()), q)
        provenance = {
            "mode": "alpha_grid",
            "cells": int(r),
            "count": int(count),
            "seed": int(seed),
            "k": int(k),
        }
        return QuotientCloud(kernel.space, k, tuple(members.values()), provenance)

    raise ValueError(f"unknown cloud mode {mode!r}")


def _stratified_counts(n: int, k: int, total: int, rng) -> list[np.ndarray]:
    counts: list[np.ndarray] = []
    if k == 2:
        grid = np.unique(np.round(np.linspace(0, n, max(2, min(total, n + 1)))).astype(int))
        counts.extend(np.array([c, n - c]) for c in grid)
    else:
        for i in range(k):
            corner = np.zeros(k, dtype=int)
            corner[i] = n
            counts.append(corner)
        balanced = np.full(k, n // k)
        balanced[: n % k] += 1
        counts.append(balanced)
        while len(counts) < total:
            counts.append(rng.multinomial(n, rng.dirichlet(np.ones(k))))
    return counts[:max(total, len(counts))] if k == 2 else counts[:total]


def _pairwise_d1(a_members, b_members, space) -> np.ndarray:
    na, nb = len(a_members), len(b_members)
    k = a_members[0].k
    m = space.size
    sa = np.stack([q.scaled() for q in a_members])
    sb = np.stack([q.scaled() for q in b_members])
    aa = np.stack([q.alpha for q in a_members])
    ab = np.stack([q.alpha for q in b_members])
    alpha_term = np.abs(aa[:, None, :] - ab[None, :, :]).sum(axis=2)
    mu = np.broadcast_to(sa[:, None], (na, nb, k, k, m)).reshape(-1, m)
    nu = np.broadcast_to(sb[None, :], (na, nb, k, k, m)).reshape(-1, m)
    out = np.empty(mu.shape[0])
    batch = max(1, (1 << 18) >> m)
    for start in range(0, mu.shape[0], batch):
        out[start : start + batch] = lp_distance_batch(
            space,
            np.clip(mu[start : start + batch], 0, None),
            np.clip(nu[start : start + batch], 0, None),
        )
    return alpha_term + out.reshape(na, nb, k * k).sum(axis=2)


def _pairwise_dsquare(a_members, b_members, space) -> np.ndarray:
    na, nb = len(a_members), len(b_members)
    k = a_members[0].k
    m = space.size
    masks = _subset_masks(k).astype(float)
    sa = np.stack([np.clip(q.scaled(), 0, None) for q in a_members])
    sb = np.stack([np.clip(q.scaled(), 0, None) for q in b_members])
    agg_a = np.einsum("si,aijm,tj->astm", masks, sa, masks, optimize=True)
    agg_b = np.einsum("si,bijm,tj->bstm", masks, sb, masks, optimize=True)
    aa = np.stack([q.alpha for q in a_members])
    ab = np.stack([q.alpha for q in b_members])
    alpha_term = np.abs(aa[:, None, :] - ab[None, :, :]).sum(axis=2)
    n_pairs = agg_a.shape[1] * agg_a.shape[2]
    out = np.empty((na, nb))
    for i in range(na):
        mu = np.clip(agg_a[i].reshape(-1, m), 0, None)
        for j in range(nb):
            nu = np.clip(agg_b[j].reshape(-1, m), 0, None)
            d = lp_distance_batch(space, mu, nu)
            out[i, j] = d.max(initial=0.0)
    return alpha_term + out


def hausdorff(a: QuotientCloud, b: QuotientCloud, metric: str = "dsquare") -> float:
    """Two-sided sup-inf distance between finite quotient clouds (exact)."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("Hausdorff distance needs non-empty clouds")
    a.space.require_same(b.space)
    if a.k != b.k:
        raise ValueError(f"clouds have different cell counts: {a.k} vs {b.k}")
    if metric == "d1":
        d = _pairwise_d1(a.quotients, b.quotients, a.space)
    elif metric == "dsquare":
        if a.k > DSQUARE_ENUM_MAX:
            raise ValueError(f"dsquare enumeration capped at {DSQUARE_ENUM_MAX} cells")
        d = _pairwise_dsquare(a.quotients, b.quotients, a.space)
    else:
        raise ValueError(f"unknown quotient metric {metric!r}")
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def rebalance_partition(overlap: OverlapMatrix, a_target) -> OverlapMatrix:
    """Monotone mass transfer onto new cell masses.

    Shrinking cells only lose mass, growing cells only gain it, so each new
    cell is nested with its predecessor.  The total moved mass is half the
    l1 gap between the old and new distributions.
    """
    target = np.asarray(a_target, dtype=float)
    rho = np.array(overlap.rho)
    current = overlap.col_sums.copy()
    if target.shape != current.shape:
        raise ValueError("target distribution has the wrong number of cells")
    if abs(target.sum() - current.sum()) > 1e-9:
        raise ValueError("target distribution must carry the same total mass")
    excess = current - target
    donors = [i for i in range(target.size) if excess[i] > 1e-15]
    recipients = [j for j in range(target.size) if excess[j] < -1e-15]
    for i in donors:
        to_give = excess[i]
        for j in recipients:
            need = -excess[j]
            if need <= 1e-15 or to_give <= 1e-15:
                continue
            amount = min(to_give, need)
            moved = 0.0
            for p in range(rho.shape[0]):
                if moved >= amount - 1e-15:
                    break
                take = min(rho[p, i], amount - moved)
                if take > 0:
                    rho[p, i] -= take
                    rho[p, j] += take
                    moved += take
            excess[i] -= moved
            excess[j] += moved
            to_give -= moved
    return OverlapMatrix(rho)
