"""Overlay functionals between kernels and decorated graphs or kernel pairs.

The graph overlay maximizes the total decorated interaction over partitions
of [0,1] with prescribed cell masses.  For a step kernel the objective
depends on a partition only through the overlap masses between kernel parts
and partition cells, so the feasible region is a transportation polytope.
Two solver tiers: an exhaustive grid oracle on a uniform refinement, and a
multistart Frank-Wolfe ascent on the overlap matrix (flagged inexact, since
the quadratic may be indefinite).
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .kernels import (
    CbGraph,
    CbStepKernel,
    StepKernel,
    common_refinement,
    common_refinement_cb,
    minimal_refinement,
    uniform_refine,
    uniform_refine_cb,
)
from .measures import ABS_TOL, TestFamily
from .metrics import _f_interaction_tensor, f_inner
from .search import SearchBudget, qap_optimize

__all__ = [
    "GRID_ORACLE_CAP",
    "OverlapMatrix",
    "overlay_graph",
    "overlay_kernel",
    "f_overlay",
    "f_overlay_truncated",
    "overlay_objective",
]

GRID_ORACLE_CAP = 1_000_000
MARGIN_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class OverlapMatrix:
    """Masses shared between kernel parts (rows) and partition cells (columns).

    Row sums reproduce the kernel part sizes, column sums the prescribed cell
    mass distribution.  Every such matrix is realized by some measurable
    partition of [0,1], and conversely.
    """

    rho: np.ndarray
    row_sums: np.ndarray
    col_sums: np.ndarray

    def __init__(self, rho):
        r = np.array(rho, dtype=float)
        if r.ndim != 2:
            raise ValueError("overlap matrix must be 2-dimensional")
        if r.min() < -MARGIN_TOL:
            raise ValueError("overlap masses must be nonnegative")
        r = np.maximum(r, 0.0)
        r.setflags(write=False)
        rows = r.sum(axis=1)
        cols = r.sum(axis=0)
        rows.setflags(write=False)
        cols.setflags(write=False)
        object.__setattr__(self, "rho", r)
        object.__setattr__(self, "row_sums", rows)
        object.__setattr__(self, "col_sums", cols)

    def check_marginals(self, part_sizes, alpha, tol: float = MARGIN_TOL) -> None:
        if np.abs(self.row_sums - np.asarray(part_sizes)).max() > tol:
            raise ValueError("overlap row sums do not match the kernel part sizes")
        if np.abs(self.col_sums - np.asarray(alpha)).max() > tol:
            raise ValueError("overlap column sums do not match the cell distribution")

    @classmethod
    def from_assignment(cls, part_sizes, assignment, k: int) -> "OverlapMatrix":
        """Each part wholly assigned to one cell."""
        lam = np.asarray(part_sizes, dtype=float)
        z = np.asarray(assignment, dtype=int)
        rho = np.zeros((lam.size, k))
        rho[np.arange(lam.size), z] = lam
        return cls(rho)

    @classmethod
    def product(cls, part_sizes, alpha) -> "OverlapMatrix":
        return cls(np.outer(part_sizes, alpha))


@dataclass(frozen=True)
class OverlayResult:
    value: float
    exact: bool
    certificate: object = None

    def to_jsonable(self) -> dict:
        cert = self.certificate
        if isinstance(cert, OverlapMatrix):
            cert = cert.rho.tolist()
        elif isinstance(cert, np.ndarray):
            cert = cert.tolist()
        return {"value": self.value, "exact": self.exact, "certificate": cert}


def _interaction(kernel: StepKernel, graph: CbGraph) -> np.ndarray:
    """c[p, q, i, j] = integral of the (i, j) decoration against block (p, q)."""
    kernel.space.require_same(graph.space)
    return np.einsum("pqm,ijm->pqij", kernel.entries, graph.beta, optimize=True)


def overlay_objective(kernel: StepKernel, graph: CbGraph, overlap: OverlapMatrix) -> float:
    """Total decorated interaction realized by an overlap matrix."""
    c = _interaction(kernel, graph)
    return float(np.einsum("pi,qj,pqij->", overlap.rho, overlap.rho, c, optimize=True))


def _alpha_denominator(alpha, cap: int = 10_000) -> Optional[int]:
    d = 1
    for a in np.asarray(alpha, dtype=float):
        frac = Fraction(a).limit_denominator(cap)
        if abs(float(frac) - a) > MARGIN_TOL:
            return None
        d = d * frac.denominator // gcd(d, frac.denominator)
    return d


def _iter_count_assignments(n: int, counts: np.ndarray):
    """All length-n class sequences with the prescribed class counts."""
    k = counts.size
    seq = np.empty(n, dtype=np.intp)

    def rec(pos: int, remaining: np.ndarray):
        if pos == n:
            yield seq.copy()
            return
        for c in range(k):
            if remaining[c] > 0:
                remaining[c] -= 1
                seq[pos] = c
                yield from rec(pos + 1, remaining)
                remaining[c] += 1

    yield from rec(0, counts.copy())


def _chunked(iterator, size: int):
    while True:
        block = list(itertools.islice(iterator, size))
        if not block:
            return
        yield np.array(block, dtype=np.intp)


def _assignment_values(c_ref: np.ndarray, chunk: np.ndarray) -> np.ndarray:
    n = chunk.shape[1]
    total = np.zeros(chunk.shape[0])
    for a in range(n):
        za = chunk[:, a]
        for b in range(n):
            total += c_ref[a, b][za, chunk[:, b]]
    return total


def overlay_graph(
    kernel: StepKernel,
    graph: CbGraph,
    budget: Optional[SearchBudget] = None,
    alpha=None,
    cells: Optional[int] = None,
) -> OverlayResult:
    """Maximal decorated interaction over partitions with prescribed masses.

    Tier (a), the grid oracle: refine the kernel to n equal cells compatible
    with ``alpha`` and enumerate every cell assignment; exhaustive, hence
    exact over grid partitions.  Tier (b): multistart Frank-Wolfe ascent on
    the overlap matrix, flagged inexact.
    """
    alpha = graph.alpha if alpha is None else np.asarray(alpha, dtype=float)
    k = graph.n_vertices
    if alpha.shape != (k,):
        raise ValueError(f"alpha must have shape ({k},)")
    budget = budget or SearchBudget()

    n = cells
    if n is None:
        base = minimal_refinement(kernel.part_sizes)
        d = _alpha_denominator(alpha)
        if d is not None:
            n = base * d // gcd(base, d)
    grid_ok = (
        n is not None
        and float(k) ** n <= GRID_ORACLE_CAP
        and np.abs(np.rint(alpha * n) - alpha * n).max() <= MARGIN_TOL
        and np.abs(np.rint(kernel.part_sizes * n) - kernel.part_sizes * n).max() <= MARGIN_TOL
    )
    if grid_ok:
        return _overlay_graph_grid(kernel, graph, alpha, n)
    if cells is not None:
        warnings.warn(
            "requested grid is incompatible with alpha or exceeds the oracle "
            "cap; falling back to the ascent tier",
            stacklevel=2,
        )
    elif n is None:
        warnings.warn(
            "alpha is not rational on the oracle grid; falling back to the "
            "ascent tier",
            stacklevel=2,
        )
    return _overlay_graph_ascent(kernel, graph, alpha, budget)


def _overlay_graph_grid(kernel, graph, alpha, n) -> OverlayResult:
    refined = uniform_refine(kernel, n)
    counts = np.rint(alpha * n).astype(int)
    c_ref = _interaction(refined, graph) / float(n * n)
    best = -np.inf
    best_assignment = None
    for chunk in _chunked(_iter_count_assignments(n, counts), 4096):
        vals = _assignment_values(c_ref, chunk)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best = float(vals[i])
            best_assignment = chunk[i].copy()
    rho_cells = OverlapMatrix.from_assignment(refined.part_sizes, best_assignment, graph.n_vertices)
    # fold cell-level overlaps back onto the original parts
    owner = np.repeat(
        np.arange(kernel.n_parts),
        np.rint(kernel.part_sizes * n).astype(int),
    )
    rho = np.zeros((kernel.n_parts, graph.n_vertices))
    np.add.at(rho, owner, rho_cells.rho)
    return OverlayResult(best, True, OverlapMatrix(rho))


def _transport_lp(gradient: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Maximize <gradient, v> over the transportation polytope."""
    p, k = gradient.shape
    a_eq = []
    b_eq = []
    for i in range(p):
        row = np.zeros((p, k))
        row[i, :] = 1.0
        a_eq.append(row.ravel())
        b_eq.append(rows[i])
    for j in range(k):
        col = np.zeros((p, k))
        col[:, j] = 1.0
        a_eq.append(col.ravel())
        b_eq.append(cols[j])
    res = linprog(
        -gradient.ravel(),
        A_eq=np.array(a_eq),
        b_eq=np.array(b_eq),
        bounds=[(0, None)] * (p * k),
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"transportation subproblem failed: {res.message}")
    return res.x.reshape(p, k)


def _random_transport_vertex(rows, cols, rng) -> np.ndarray:
    pr = rng.permutation(rows.size)
    pc = rng.permutation(cols.size)
    rem_r = rows[pr].copy()
    rem_c = cols[pc].copy()
    out = np.zeros((rows.size, cols.size))
    i = j = 0
    while i < rows.size and j < cols.size:
        t = min(rem_r[i], rem_c[j])
        out[pr[i], pc[j]] += t
        rem_r[i] -= t
        rem_c[j] -= t
        if rem_r[i] <= 1e-15:
            i += 1
        if j < cols.size and rem_c[j] <= 1e-15:
            j += 1
    return out


def _random_interior(rows, cols, rng, iters: int = 200) -> np.ndarray:
    out = rng.random((rows.size, cols.size)) + 0.25
    for _ in range(iters):
        out *= (rows / out.sum(axis=1))[:, None]
        out *= (cols / out.sum(axis=0))[None, :]
    out *= (rows / out.sum(axis=1))[:, None]
    return out


def _overlay_graph_ascent(kernel, graph, alpha, budget) -> OverlayResult:
    c = _interaction(kernel, graph)
    lam = kernel.part_sizes

    def value(rho):
        return float(np.einsum("pi,qj,pqij->", rho, rho, c, optimize=True))

    def gradient(rho):
        g = np.einsum("qj,pqij->pi", rho, c, optimize=True)
        g += np.einsum("qj,qpji->pi", rho, c, optimize=True)
        return g

    best_val, best_rho = -np.inf, None
    for r in range(budget.restarts):
        rng = np.random.default_rng(np.random.SeedSequence(budget.seed, spawn_key=(23, r)))
        if r == 0:
            rho = np.outer(lam, alpha)
        elif r % 2 == 1:
            rho = _random_transport_vertex(lam, alpha, rng)
        else:
            rho = _random_interior(lam, alpha, rng)
        val = value(rho)
        for _ in range(200):
            grad = gradient(rho)
            vertex = _transport_lp(grad, lam, alpha)
            direction = vertex - rho
            lin = float((grad * direction).sum())
            quad = float(np.einsum("pi,qj,pqij->", direction, direction, c, optimize=True))
            if lin <= 1e-13 and quad <= 0:
                break
            if quad < 0:
                t = min(max(lin / (-2.0 * quad), 0.0), 1.0)
            elif quad == 0:
                t = 1.0 if lin > 1e-13 else 0.0
            else:
                t = 1.0 if lin + quad > 0 else 0.0
            if t <= 0:
                break
            rho = rho + t * direction
            new_val = value(rho)
            if new_val <= val + 1e-13:
                val = max(val, new_val)
                break
            val = new_val
        if val > best_val:
            best_val, best_rho = val, rho.copy()
    return OverlayResult(best_val, False, OverlapMatrix(best_rho))


def overlay_kernel(
    kernel: StepKernel,
    fn_kernel: CbStepKernel,
    budget: Optional[SearchBudget] = None,
    cells: Optional[int] = None,
) -> OverlayResult:
    """Supremum of the pairing over relabelings of the function-valued kernel.

    Realized as a quadratic assignment over permutations of a common uniform
    refinement: exhaustive (exact) for small grids, annealed and flagged
    beyond.  A constant argument makes every permutation equivalent.
    ``cells`` forces a finer grid (must be a multiple of the natural one),
    enlarging the searched partition class.
    """
    budget = budget or SearchBudget()
    u, w, n = common_refinement_cb(kernel, fn_kernel)
    if cells is not None:
        u, w, n = uniform_refine(u, cells), uniform_refine_cb(w, cells), cells
    if _cb_is_constant(w) or u.is_constant():
        val = float(np.einsum("abm,abm->", u.entries, w.entries) / (n * n))
        return OverlayResult(val, True, np.arange(n, dtype=np.intp))
    interactions = np.einsum("abm,cdm->abcd", u.entries, w.entries, optimize=True) / float(n * n)
    res = qap_optimize(interactions, budget, maximize=True)
    return OverlayResult(res.value, res.exact, res.certificate)


def _cb_is_constant(w: CbStepKernel, tol: float = ABS_TOL) -> bool:
    return bool(np.abs(w.entries - w.entries[0, 0]).max() <= tol)


def f_overlay(
    u: StepKernel,
    w: StepKernel,
    fam: TestFamily,
    budget: Optional[SearchBudget] = None,
    cells: Optional[int] = None,
) -> OverlayResult:
    """Supremum over relabelings of the weighted family inner product."""
    budget = budget or SearchBudget()
    ur, wr, n = common_refinement(u, w)
    if cells is not None:
        ur, wr, n = uniform_refine(ur, cells), uniform_refine(wr, cells), cells
    ur.space.require_same(fam.space)
    if ur.is_constant() or wr.is_constant():
        val = f_inner(ur, wr, fam)
        return OverlayResult(val, True, np.arange(n, dtype=np.intp))
    interactions = _f_interaction_tensor(ur, wr, fam)
    res = qap_optimize(interactions, budget, maximize=True)
    return OverlayResult(res.value, res.exact, res.certificate)


def f_overlay_truncated(
    u: StepKernel,
    w: StepKernel,
    fam: TestFamily,
    n_terms: int,
    budget: Optional[SearchBudget] = None,
) -> tuple[OverlayResult, float]:
    """Family overlay truncated to indices <= n_terms, with an enclosure bound.

    The tail of the geometrically weighted sum is controlled by
    q = sup_tv(u) * sup_tv(w); the returned half-width q / n_terms encloses
    the untruncated value around the truncated one.
    """
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    budget = budget or SearchBudget()
    ur, wr, n = common_refinement(u, w)
    ur.space.require_same(fam.space)
    keep = min(n_terms, len(fam) - 1)
    values = fam.values[: keep + 1]
    scale = fam.scale_weights()[: keep + 1]
    q = u.sup_tv() * w.sup_tv()
    bound = q / float(n_terms)
    if ur.is_constant() or wr.is_constant():
        val = _f_inner_raw(ur, wr, values, scale)
        return OverlayResult(val, True, np.arange(n, dtype=np.intp)), bound
    fu = ur.entries @ values.T
    fw = wr.entries @ values.T
    interactions = np.einsum("abk,cdk,k->abcd", fu, fw, scale, optimize=True) / float(n * n)
    res = qap_optimize(interactions, budget, maximize=True)
    return OverlayResult(res.value, res.exact, res.certificate), bound


def _f_inner_raw(u: StepKernel, w: StepKernel, values: np.ndarray, scale: np.ndarray) -> float:
    lam2 = np.outer(u.part_sizes, u.part_sizes)
    fu = u.entries @ values.T
    fw = w.entries @ values.T
    return float(np.einsum("pq,pqk,k->", lam2, fu * fw, scale))
