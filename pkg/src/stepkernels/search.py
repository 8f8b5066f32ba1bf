"""Permutation search shared by the distance and overlay optimizers.

Two tiers: exhaustive enumeration up to ``EXACT_PERM_MAX`` parts, and
simulated annealing (geometric cooling, random-transposition proposals,
exponential acceptance) beyond.  All randomness is keyed by explicit seeds;
restarts are independent and the result is the deterministic best-of.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np

__all__ = [
    "EXACT_PERM_MAX",
    "SearchBudget",
    "SearchResult",
    "iter_permutation_chunks",
    "qap_value",
    "qap_optimize",
    "anneal_permutation",
]

EXACT_PERM_MAX = 8


@dataclass(frozen=True)
class SearchBudget:
    """Effort knobs for the heuristic tier."""

    restarts: int = 6
    steps: int = 2000
    seed: int = 0
    cooling: float = 0.995
    init_temp: Optional[float] = None


@dataclass(frozen=True)
class SearchResult:
    value: float
    exact: bool
    certificate: object = None

    def to_jsonable(self) -> dict:
        cert = self.certificate
        if isinstance(cert, np.ndarray):
            cert = cert.tolist()
        elif isinstance(cert, tuple):
            cert = [c.tolist() if isinstance(c, np.ndarray) else c for c in cert]
        return {"value": self.value, "exact": self.exact, "certificate": cert}


def iter_permutation_chunks(n: int, chunk: int = 4096) -> Iterator[np.ndarray]:
    it = itertools.permutations(range(n))
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            return
        yield np.array(block, dtype=np.intp)


def qap_value(interactions: np.ndarray, perm: np.ndarray) -> float:
    """Sum over (a, b) of interactions[a, b, perm[a], perm[b]]."""
    n = perm.size
    idx = np.ix_(np.arange(n), np.arange(n))
    return float(interactions[idx[0], idx[1], perm[:, None], perm[None, :]].sum())


def _qap_values_bulk(interactions: np.ndarray, perms: np.ndarray) -> np.ndarray:
    n = perms.shape[1]
    total = np.zeros(perms.shape[0])
    for a in range(n):
        pa = perms[:, a]
        for b in range(n):
            total += interactions[a, b][pa, perms[:, b]]
    return total


def _qap_swap_delta(interactions, perm, energy_rows, u, v):
    """Energy change when the images of u and v are transposed.

    ``energy_rows`` caches nothing; the delta is recomputed from the affected
    rows and columns in O(n).
    """
    n = perm.size
    new = perm.copy()
    new[u], new[v] = perm[v], perm[u]
    rows = np.array([u, v])
    others = np.arange(n)
    old = interactions[rows[:, None], others[None, :], perm[rows][:, None], perm[others][None, :]].sum()
    old += interactions[others[:, None], rows[None, :], perm[others][:, None], perm[rows][None, :]].sum()
    old -= interactions[rows[:, None], rows[None, :], perm[rows][:, None], perm[rows][None, :]].sum()
    upd = interactions[rows[:, None], others[None, :], new[rows][:, None], new[others][None, :]].sum()
    upd += interactions[others[:, None], rows[None, :], new[others][:, None], new[rows][None, :]].sum()
    upd -= interactions[rows[:, None], rows[None, :], new[rows][:, None], new[rows][None, :]].sum()
    return float(upd - old), new


def qap_optimize(
    interactions: np.ndarray,
    budget: Optional[SearchBudget] = None,
    maximize: bool = True,
) -> SearchResult:
    """Optimize sum_(a,b) interactions[a, b, perm(a), perm(b)] over permutations.

    Exhaustive (exact) up to EXACT_PERM_MAX; annealed and flagged beyond.
    """
    n = interactions.shape[0]
    sign = 1.0 if maximize else -1.0
    if n <= EXACT_PERM_MAX:
        best_val = -np.inf
        best_perm = None
        for chunk in iter_permutation_chunks(n):
            vals = sign * _qap_values_bulk(interactions, chunk)
            i = int(np.argmax(vals))
            if vals[i] > best_val:
                best_val = float(vals[i])
                best_perm = chunk[i].copy()
        return SearchResult(sign * best_val, True, best_perm)
    budget = budget or SearchBudget()
    best_val = -np.inf
    best_perm = None
    for r in range(budget.restarts):
        rng = np.random.default_rng(np.random.SeedSequence(budget.seed, spawn_key=(r,)))
        perm = rng.permutation(n)
        energy = sign * qap_value(interactions, perm)
        scale = max(abs(energy), 1e-6)
        temp = budget.init_temp if budget.init_temp is not None else 0.25 * scale
        local_best_val, local_best = energy, perm.copy()
        for _ in range(budget.steps):
            u, v = rng.choice(n, size=2, replace=False)
            delta, new = _qap_swap_delta(interactions, perm, None, u, v)
            delta *= sign
            if delta >= 0 or rng.random() < math.exp(delta / max(temp, 1e-12)):
                perm = new
                energy += delta
                if energy > local_best_val:
                    local_best_val, local_best = energy, perm.copy()
            temp *= budget.cooling
        if local_best_val > best_val:
            best_val, best_perm = local_best_val, local_best
    return SearchResult(sign * best_val, False, best_perm)


def anneal_permutation(
    n: int,
    energy_fn: Callable[[np.ndarray], float],
    budget: SearchBudget,
    minimize: bool = True,
    initial: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, float]:
    """Generic annealing over permutations with a black-box energy."""
    sign = -1.0 if minimize else 1.0
    best_perm = None
    best_val = -np.inf
    for r in range(budget.restarts):
        rng = np.random.default_rng(np.random.SeedSequence(budget.seed, spawn_key=(r,)))
        if initial is not None and r == 0:
            perm = np.asarray(initial, dtype=np.intp).copy()
        else:
            perm = rng.permutation(n)
        energy = sign * energy_fn(perm)
        temp = budget.init_temp if budget.init_temp is not None else max(abs(energy) * 0.25, 1e-6)
        local_val, local_perm = energy, perm.copy()
        for _ in range(budget.steps):
            u, v = rng.choice(n, size=2, replace=False)
            cand = perm.copy()
            cand[u], cand[v] = perm[v], perm[u]
            cand_energy = sign * energy_fn(cand)
            delta = cand_energy - energy
            if delta >= 0 or rng.random() < math.exp(delta / max(temp, 1e-12)):
                perm, energy = cand, cand_energy
                if energy > local_val:
                    local_val, local_perm = energy, perm.copy()
            temp *= budget.cooling
        if local_val > best_val:
            best_val, best_perm = local_val, local_perm
    return best_perm, sign * best_val
