"""Cut seminorms and labeled/unlabeled cut distances between step kernels.

The labeled distances take a supremum of a measure discrepancy over
rectangles S x T.  For step kernels the supremum is attained on unions of
parts (by bilinearity for the real cut norm, convexity for the test-family
norm, and quasi-convexity of the Levy-Prokhorov distance), so the exact tier
enumerates subset pairs of parts.  The unlabeled distances minimize the
labeled ones over permutations of a common uniform refinement: exhaustively
up to EXACT_PERM_MAX parts, by simulated annealing beyond, always reporting
an exactness flag and the best permutation found.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .kernels import (
    RealStepKernel,
    StepKernel,
    common_refinement,
    relabel,
    uniform_refine,
)
from .measures import TestFamily, _subset_masks, lp_distance_batch
from .search import (
    EXACT_PERM_MAX,
    SearchBudget,
    SearchResult,
    anneal_permutation,
    iter_permutation_chunks,
    qap_optimize,
)

__all__ = [
    "CUT_ENUM_MAX_PARTS",
    "CUT_NORM_MAX_PARTS",
    "DeltaResult",
    "cut_norm_real",
    "cut_norm_real_search",
    "cut_dist_lp",
    "cut_dist_f",
    "cut_dist_search",
    "delta_cut",
    "delta_2f",
    "f_l2_norm",
    "f_inner",
]

# Exact tiers: subset pairs of parts are enumerated for the cut distances
# (4**P pairs), single subsets for the real cut norm (2**P).
CUT_ENUM_MAX_PARTS = 12
CUT_NORM_MAX_PARTS = 24
_EQUALITY_DFS_NODE_CAP = 200_000


@dataclass(frozen=True)
class DeltaResult:
    """Outcome of an unlabeled-distance minimization.

    ``permutation`` relabels the second kernel to (approximately) best match
    the first on the ``refinement``-cell uniform grid.  When ``exact`` is
    False the value is the best labeled distance found, an upper bound only
    insofar as the labeled evaluations themselves were exact.
    """

    value: float
    exact: bool
    permutation: np.ndarray
    refinement: int

    def to_jsonable(self) -> dict:
        return {
            "value": self.value,
            "exact": self.exact,
            "certificate": self.permutation.tolist(),
            "refinement": self.refinement,
        }


# ---------------------------------------------------------------------------
# real cut norm
# ---------------------------------------------------------------------------

def cut_norm_real(w: RealStepKernel) -> float:
    """Exact rectangle supremum of |integral of w| for kernels with few parts.

    For a fixed row set S the optimal column set keeps either every positive
    or every negative column sum, so only the 2**P row sets are enumerated.
    """
    p = w.n_parts
    if p > CUT_NORM_MAX_PARTS:
        raise ValueError(
            f"exact cut norm enumerates 2**P subsets and is capped at "
            f"{CUT_NORM_MAX_PARTS} parts; call cut_norm_real_search instead"
        )
    weighted = w.values * np.outer(w.part_sizes, w.part_sizes)
    best = 0.0
    chunk = 1 << min(p, 16)
    n_subsets = 1 << p
    bit_cols = np.arange(p, dtype=np.uint32)
    for start in range(0, n_subsets, chunk):
        idx = np.arange(start, min(start + chunk, n_subsets), dtype=np.uint32)
        rows = ((idx[:, None] >> bit_cols) & 1).astype(float)
        col_sums = rows @ weighted
        pos = np.clip(col_sums, 0.0, None).sum(axis=1)
        neg = np.clip(-col_sums, 0.0, None).sum(axis=1)
        best = max(best, float(pos.max(initial=0.0)), float(neg.max(initial=0.0)))
    return best


def cut_norm_real_search(w: RealStepKernel, budget: Optional[SearchBudget] = None) -> SearchResult:
    """Randomized local-search lower bound for kernels with many parts."""
    p = w.n_parts
    if p <= CUT_NORM_MAX_PARTS:
        return SearchResult(cut_norm_real(w), True, None)
    budget = budget or SearchBudget()
    weighted = w.values * np.outer(w.part_sizes, w.part_sizes)
    best, best_s = 0.0, np.zeros(p, dtype=bool)
    for r in range(budget.restarts):
        rng = np.random.default_rng(np.random.SeedSequence(budget.seed, spawn_key=(7, r)))
        s = rng.random(p) < 0.5
        val = _cut_norm_given_rows(weighted, s)
        improved = True
        while improved:
            improved = False
            for i in range(p):
                s[i] = ~s[i]
                cand = _cut_norm_given_rows(weighted, s)
                if cand > val + 1e-15:
                    val, improved = cand, True
                else:
                    s[i] = ~s[i]
        if val > best:
            best, best_s = val, s.copy()
    return SearchResult(best, False, best_s)


def _cut_norm_given_rows(weighted: np.ndarray, s: np.ndarray) -> float:
    col = weighted[s].sum(axis=0)
    return float(max(np.clip(col, 0, None).sum(), np.clip(-col, 0, None).sum()))


# ---------------------------------------------------------------------------
# labeled cut distances (exact tier)
# ---------------------------------------------------------------------------

def _aligned(u: StepKernel, w: StepKernel) -> tuple[StepKernel, StepKernel]:
    if u.n_parts == w.n_parts and np.abs(u.part_sizes - w.part_sizes).max() <= 1e-9:
        u.space.require_same(w.space)
        return u, w
    a, b, _ = common_refinement(u, w)
    return a, b


def _weighted_entries(k: StepKernel) -> np.ndarray:
    lam = k.part_sizes
    return k.entries * np.multiply.outer(np.outer(lam, lam), np.ones(k.space.size))


def _subset_aggregates(weighted: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """All-subset-pair block integrals: (2**P, 2**P, m)."""
    b = masks.astype(float)
    return np.einsum("sp,pqm,tq->stm", b, weighted, b, optimize=True)


def cut_dist_lp(u: StepKernel, w: StepKernel) -> float:
    """Labeled cut distance under the Levy-Prokhorov metric (exact tier).

    Quasi-convexity of the Levy-Prokhorov distance in each aggregated
    argument puts the maximum at a vertex of the fractional rectangle set,
    i.e. on unions of parts.
    """
    u, w = _aligned(u, w)
    for k, name in ((u, "first"), (w, "second")):
        if k.kind == "signed":
            raise ValueError(
                f"{name} kernel is signed; the Levy-Prokhorov cut distance "
                "needs nonnegative kernels (use cut_dist_f)"
            )
    p = u.n_parts
    if p > CUT_ENUM_MAX_PARTS:
        raise ValueError(
            f"exact cut distance enumerates 4**P subset pairs and is capped "
            f"at {CUT_ENUM_MAX_PARTS} parts; call cut_dist_search instead"
        )
    m = u.space.size
    masks = _subset_masks(p)
    agg_u = _subset_aggregates(_weighted_entries(u), masks)
    agg_w = _subset_aggregates(_weighted_entries(w), masks)
    flat_u = np.clip(agg_u.reshape(-1, m), 0.0, None)
    flat_w = np.clip(agg_w.reshape(-1, m), 0.0, None)
    batch = max(1, (1 << 18) >> m)
    best = 0.0
    for start in range(0, flat_u.shape[0], batch):
        d = lp_distance_batch(
            u.space, flat_u[start : start + batch], flat_w[start : start + batch]
        )
        best = max(best, float(d.max(initial=0.0)))
    return best


def cut_dist_f(u: StepKernel, w: StepKernel, fam: TestFamily) -> float:
    """Labeled cut distance under the test-family norm (exact tier).

    The objective is convex in the aggregated difference, so the rectangle
    supremum is attained on unions of parts.
    """
    u, w = _aligned(u, w)
    u.space.require_same(fam.space)
    p = u.n_parts
    if p > CUT_ENUM_MAX_PARTS:
        raise ValueError(
            f"exact cut distance enumerates 4**P subset pairs and is capped "
            f"at {CUT_ENUM_MAX_PARTS} parts; call cut_dist_search instead"
        )
    masks = _subset_masks(p)
    diff = _weighted_entries(u) - _weighted_entries(w)
    scale = fam.scale_weights()
    b = masks.astype(float)
    best = 0.0
    chunk = max(1, (1 << 22) // ((1 << p) * u.space.size))
    for start in range(0, 1 << p, chunk):
        part = np.einsum("sp,pqm->sqm", b[start : start + chunk], diff)
        agg = np.einsum("sqm,tq->stm", part, b)
        fvals = np.abs(agg @ fam.values.T) @ scale
        best = max(best, float(fvals.max(initial=0.0)))
    return best


def cut_dist_search(
    u: StepKernel,
    w: StepKernel,
    metric: str = "lp",
    fam: Optional[TestFamily] = None,
    budget: Optional[SearchBudget] = None,
) -> SearchResult:
    """Alternating local search over subset pairs; a flagged lower bound.

    Falls through to the exact tier when the part count allows it.
    """
    if metric not in ("lp", "f"):
        raise ValueError(f"unknown metric {metric!r}")
    if metric == "f" and fam is None:
        raise ValueError("metric 'f' needs a TestFamily")
    u, w = _aligned(u, w)
    if metric == "lp" and (u.kind == "signed" or w.kind == "signed"):
        raise ValueError("the Levy-Prokhorov cut distance needs nonnegative kernels")
    p = u.n_parts
    if p <= CUT_ENUM_MAX_PARTS:
        if metric == "lp":
            return SearchResult(cut_dist_lp(u, w), True, None)
        return SearchResult(cut_dist_f(u, w, fam), True, None)
    budget = budget or SearchBudget()
    wu, ww = _weighted_entries(u), _weighted_entries(w)
    m = u.space.size

    def objective(pairs_u: np.ndarray, pairs_w: np.ndarray) -> np.ndarray:
        if metric == "lp":
            return lp_distance_batch(
                u.space, np.clip(pairs_u, 0.0, None), np.clip(pairs_w, 0.0, None)
            )
        scale = fam.scale_weights()
        return np.abs((pairs_u - pairs_w) @ fam.values.T) @ scale

    best, best_cert = 0.0, None
    for r in range(budget.restarts):
        rng = np.random.default_rng(np.random.SeedSequence(budget.seed, spawn_key=(11, r)))
        if r == 0:
            s = np.ones(p, dtype=bool)
            t = np.ones(p, dtype=bool)
        else:
            s = rng.random(p) < 0.5
            t = rng.random(p) < 0.5
        for _ in range(64):
            mu = np.einsum("p,pqm,q->m", s.astype(float), wu, t.astype(float))
            nu = np.einsum("p,pqm,q->m", s.astype(float), ww, t.astype(float))
            val = float(objective(mu[None, :], nu[None, :])[0])
            # evaluate every single-coordinate flip of S and of T in one batch
            cand_u = np.empty((2 * p, m))
            cand_w = np.empty((2 * p, m))
            row_u = np.einsum("pqm,q->pm", wu, t.astype(float))
            row_w = np.einsum("pqm,q->pm", ww, t.astype(float))
            col_u = np.einsum("p,pqm->qm", s.astype(float), wu)
            col_w = np.einsum("p,pqm->qm", s.astype(float), ww)
            sign_s = np.where(s, -1.0, 1.0)[:, None]
            sign_t = np.where(t, -1.0, 1.0)[:, None]
            cand_u[:p] = mu + sign_s * row_u
            cand_w[:p] = nu + sign_s * row_w
            cand_u[p:] = mu + sign_t * col_u
            cand_w[p:] = nu + sign_t * col_w
            vals = objective(cand_u, cand_w)
            i = int(np.argmax(vals))
            if vals[i] <= val + 1e-15:
                break
            if i < p:
                s[i] = ~s[i]
            else:
                t[i - p] = ~t[i - p]
        mu = np.einsum("p,pqm,q->m", s.astype(float), wu, t.astype(float))
        nu = np.einsum("p,pqm,q->m", s.astype(float), ww, t.astype(float))
        val = float(objective(mu[None, :], nu[None, :])[0])
        if val > best:
            best, best_cert = val, (s.copy(), t.copy())
    return SearchResult(best, False, best_cert)


# ---------------------------------------------------------------------------
# unlabeled distances
# ---------------------------------------------------------------------------

def _find_equality_permutation(a: np.ndarray, b: np.ndarray, decimals: int = 12):
    """Search for perm with b[perm[i], perm[j]] == a[i, j] for all i, j.

    Blocks are compared through quantized keys, so this is an exact-equality
    shortcut (up to rounding at ``decimals``), not a tolerance search.  A
    failed multiset pre-check or an exhausted node budget returns None.
    """
    n = a.shape[0]
    keys: dict[bytes, int] = {}

    def block_ids(x: np.ndarray) -> np.ndarray:
        rounded = np.round(x, decimals) + 0.0  # normalize -0.0
        out = np.empty((n, n), dtype=np.intp)
        for i in range(n):
            for j in range(n):
                key = rounded[i, j].tobytes()
                out[i, j] = keys.setdefault(key, len(keys))
        return out

    a_ids = block_ids(a)
    b_ids = block_ids(b)
    if not np.array_equal(np.sort(a_ids, axis=None), np.sort(b_ids, axis=None)):
        return None
    if not np.array_equal(np.sort(np.diag(a_ids)), np.sort(np.diag(b_ids))):
        return None
    b_diag = np.diag(b_ids)
    candidates = [np.flatnonzero(b_diag == a_ids[i, i]) for i in range(n)]
    # fill the most constrained vertices first
    vertex_order = sorted(range(n), key=lambda i: candidates[i].size)
    assignment = np.full(n, -1, dtype=np.intp)
    used = np.zeros(n, dtype=bool)
    nodes = 0

    def extend(pos: int) -> bool:
        nonlocal nodes
        if pos == n:
            return True
        i = vertex_order[pos]
        for c in candidates[i]:
            if used[c]:
                continue
            nodes += 1
            if nodes > _EQUALITY_DFS_NODE_CAP:
                raise _DFSBudget()
            ok = True
            for prev in range(pos):
                j = vertex_order[prev]
                d = assignment[j]
                if a_ids[i, j] != b_ids[c, d] or a_ids[j, i] != b_ids[d, c]:
                    ok = False
                    break
            if ok:
                assignment[i] = c
                used[c] = True
                if extend(pos + 1):
                    return True
                used[c] = False
                assignment[i] = -1
        return False

    try:
        if extend(0):
            return assignment.copy()
    except _DFSBudget:
        return None
    return None


class _DFSBudget(Exception):
    pass


def _labeled_value(u, w_relabeled, metric, fam, budget):
    if u.n_parts <= CUT_ENUM_MAX_PARTS:
        if metric == "lp":
            return cut_dist_lp(u, w_relabeled), True
        return cut_dist_f(u, w_relabeled, fam), True
    res = cut_dist_search(u, w_relabeled, metric, fam, budget)
    return res.value, res.exact


def delta_cut(
    u: StepKernel,
    w: StepKernel,
    metric: str = "lp",
    fam: Optional[TestFamily] = None,
    budget: Optional[SearchBudget] = None,
    denominator_cap: int = 120,
    cells: Optional[int] = None,
) -> DeltaResult:
    """Unlabeled cut distance: minimize the labeled one over relabelings.

    The kernels are refined onto a common uniform grid and the labeled cut
    distance is minimized over permutations of the grid cells.  Shortcuts:
    a permutation realizing exact block equality gives 0 immediately, and a
    constant kernel makes every permutation equivalent.  For at most
    EXACT_PERM_MAX cells the enumeration is exhaustive (with early-exit
    pruning against the incumbent); beyond that simulated annealing runs
    within the budget and the result is flagged inexact.
    """
    if metric not in ("lp", "f"):
        raise ValueError(f"unknown metric {metric!r}")
    if metric == "f" and fam is None:
        raise ValueError("metric 'f' needs a TestFamily")
    budget = budget or SearchBudget()
    ur, wr, n = common_refinement(u, w, denominator_cap)
    if cells is not None:
        ur, wr, n = uniform_refine(ur, cells), uniform_refine(wr, cells), cells

    perm = _find_equality_permutation(ur.entries, wr.entries)
    if perm is not None:
        return DeltaResult(0.0, True, perm, n)

    if ur.is_constant() or wr.is_constant():
        # relabeling a constant kernel changes nothing
        value, exact = _labeled_value(ur, wr, metric, fam, budget)
        return DeltaResult(value, exact, np.arange(n, dtype=np.intp), n)

    if n <= EXACT_PERM_MAX:
        value, perm = _delta_exhaustive(ur, wr, metric, fam)
        return DeltaResult(value, True, perm, n)

    def energy(p: np.ndarray) -> float:
        val, _ = _labeled_value(ur, relabel(wr, p), metric, fam, budget)
        return val

    perm, value = anneal_permutation(n, energy, budget, minimize=True)
    return DeltaResult(value, False, perm, n)


def _delta_exhaustive(u, w, metric, fam):
    """Exhaustive minimum over cell permutations.

    Branch pruning: the distance between single-block rectangles lower-bounds
    the full rectangle supremum, and those bounds are cheap for every
    permutation at once.  Permutations are evaluated in ascending
    lower-bound order until the bound reaches the incumbent.
    """
    n = u.n_parts
    m = u.space.size
    wu = _weighted_entries(u)
    ww = _weighted_entries(w)
    if metric == "f":
        scale = fam.scale_weights()
        fu_blk = wu @ fam.values.T
        fw_blk = ww @ fam.values.T
        single = np.einsum(
            "abcdk,k->abcd",
            np.abs(fu_blk[:, :, None, None, :] - fw_blk[None, None, :, :, :]),
            scale,
        )
    else:
        pairs_u = np.broadcast_to(np.clip(wu, 0, None)[:, :, None, None, :], (n, n, n, n, m))
        pairs_w = np.broadcast_to(np.clip(ww, 0, None)[None, None, :, :, :], (n, n, n, n, m))
        single = lp_distance_batch(
            u.space, pairs_u.reshape(-1, m), pairs_w.reshape(-1, m)
        ).reshape(n, n, n, n)

    all_perms = []
    all_bounds = []
    for chunk in iter_permutation_chunks(n, chunk=8192):
        lb = np.zeros(chunk.shape[0])
        for a in range(n):
            pa = chunk[:, a]
            for b in range(n):
                np.maximum(lb, single[a, b][pa, chunk[:, b]], out=lb)
        all_perms.append(chunk)
        all_bounds.append(lb)
    perms = np.concatenate(all_perms)
    bounds = np.concatenate(all_bounds)
    order = np.argsort(bounds, kind="stable")
    perms = perms[order]
    bounds = bounds[order]

    masks = _subset_masks(n)
    agg_u = _subset_aggregates(wu, masks)
    agg_w = _subset_aggregates(ww, masks)
    if metric == "f":
        scale = fam.scale_weights()
        fu = agg_u @ fam.values.T
        fw = agg_w @ fam.values.T
        reference = np.abs(fu) @ scale
    else:
        clip_u = np.clip(agg_u, 0.0, None)
        clip_w = np.clip(agg_w, 0.0, None)
        reference = clip_u.sum(axis=2)
    powers = (1 << np.arange(n)).astype(np.intp)
    masks_int = masks.astype(np.intp)

    def full_value(perm, cap=np.inf):
        smap = masks_int @ powers[perm]
        if metric == "f":
            vals = np.abs(fu - fw[smap][:, smap]) @ scale
            return float(vals.max())
        pw = clip_w[smap][:, smap].reshape(-1, m)
        flat_u = clip_u.reshape(-1, m)
        value = 0.0
        batch = max(1, (1 << 18) >> m)
        for start in range(0, flat_u.shape[0], batch):
            d = lp_distance_batch(
                u.space, flat_u[start : start + batch], pw[start : start + batch]
            )
            value = max(value, float(d.max(initial=0.0)))
            if value >= cap:
                break
        return value

    best_perm = perms[0].copy()
    best = full_value(best_perm)
    alive = bounds < best
    survivors = perms[alive]
    if survivors.shape[0] == 0:
        return best, best_perm

    # race the surviving permutations over subset pairs, most discriminative
    # rectangles first, dropping a permutation once its running maximum
    # reaches the incumbent
    n_sub = 1 << n
    pair_order = np.argsort(reference.ravel(), kind="stable")[::-1]
    s_idx_all = pair_order // n_sub
    t_idx_all = pair_order % n_sub
    smaps = (masks_int @ powers[survivors].T).T
    running = np.zeros(survivors.shape[0])
    chunk_pairs = 64 if metric == "f" else 32
    for start in range(0, pair_order.size, chunk_pairs):
        s_idx = s_idx_all[start : start + chunk_pairs]
        t_idx = t_idx_all[start : start + chunk_pairs]
        if metric == "f":
            gathered = fw[smaps[:, s_idx], smaps[:, t_idx]]
            vals = np.abs(fu[s_idx, t_idx][None, :, :] - gathered) @ scale
        else:
            mu = np.broadcast_to(
                clip_u[s_idx, t_idx][None, :, :], (survivors.shape[0], s_idx.size, m)
            ).reshape(-1, m)
            nu = clip_w[smaps[:, s_idx], smaps[:, t_idx]].reshape(-1, m)
            vals = lp_distance_batch(u.space, mu, nu).reshape(survivors.shape[0], -1)
        np.maximum(running, vals.max(axis=1), out=running)
        keep = running < best
        if not keep.all():
            survivors = survivors[keep]
            smaps = smaps[keep]
            running = running[keep]
            if survivors.shape[0] == 0:
                break
    if survivors.shape[0]:
        i = int(np.argmin(running))
        if running[i] < best:
            best = float(running[i])
            best_perm = survivors[i].copy()
    return best, best_perm


def f_inner(u: StepKernel, w: StepKernel, fam: TestFamily) -> float:
    """Geometric-weighted sum of L2 inner products of the family projections."""
    a, b = _aligned(u, w)
    a.space.require_same(fam.space)
    lam2 = np.outer(a.part_sizes, a.part_sizes)
    fu = a.entries @ fam.values.T
    fw = b.entries @ fam.values.T
    per_k = np.einsum("pq,pqk->k", lam2, fu * fw)
    return float(per_k @ fam.scale_weights())


def f_l2_norm(u: StepKernel, fam: TestFamily) -> float:
    """Inner-product norm: sqrt of the weighted sum of squared L2 norms."""
    return float(np.sqrt(max(f_inner(u, u, fam), 0.0)))


def delta_2f(
    u: StepKernel,
    w: StepKernel,
    fam: TestFamily,
    budget: Optional[SearchBudget] = None,
    denominator_cap: int = 120,
    cells: Optional[int] = None,
) -> DeltaResult:
    """Unlabeled L2-style distance under the inner-product convention.

    Minimizing the distance over permutations is the same search as
    maximizing the weighted inner product, since permutations preserve the
    norm of each argument.
    """
    budget = budget or SearchBudget()
    ur, wr, n = common_refinement(u, w, denominator_cap)
    if cells is not None:
        ur, wr, n = uniform_refine(ur, cells), uniform_refine(wr, cells), cells
    interactions = _f_interaction_tensor(ur, wr, fam)
    res = qap_optimize(interactions, budget, maximize=True)
    # evaluate the distance directly at the winning permutation; the
    # inner-product expansion would lose half the significand to cancellation
    diff = StepKernel(
        ur.space, ur.part_sizes, ur.entries - relabel(wr, res.certificate).entries
    )
    value = float(np.sqrt(max(f_inner(diff, diff, fam), 0.0)))
    return DeltaResult(value, res.exact, res.certificate, n)


def _f_interaction_tensor(u: StepKernel, w: StepKernel, fam: TestFamily) -> np.ndarray:
    """interactions[a, b, c, d] = weighted-inner-product contribution of
    matching block (a, b) of u with block (c, d) of w."""
    n = u.n_parts
    fu = u.entries @ fam.values.T
    fw = w.entries @ fam.values.T
    scale = fam.scale_weights()
    t = np.einsum("abk,cdk,k->abcd", fu, fw, scale, optimize=True)
    return t / float(n * n)
