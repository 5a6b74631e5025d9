"""
Turn a fractional allocation matrix into a lottery over slot assignments.

The n x k matrix is padded with n - k dummy "not shown" slots into an n x n
doubly stochastic matrix, which is then written as a convex combination of
permutation matrices (Birkhoff-von Neumann).
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from .config import get_settings
from .errors import BadShape, NoPerfectMatching, NotSubstochastic, SolverInvariantError
from .position import AllocationMatrix

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class MatchingDistribution:
    weights: NDArray[np.float64]
    # assignments[e, i] is the column advertiser i takes in entry e;
    # columns k..n-1 are dummy slots
    assignments: NDArray[np.int64]
    k: int

    @property
    def n(self) -> int:
        return int(self.assignments.shape[1])

    def slot_assignments(self) -> NDArray[np.int64]:
        """Assignments with dummy slots reported as -1."""
        return np.where(self.assignments < self.k, self.assignments, -1)

    def to_payload(self) -> Dict[str, Any]:
        return {
            "weights": self.weights.tolist(),
            "assignments": self.slot_assignments().tolist(),
            "k": self.k,
        }


def max_entries(n: int) -> int:
    return max(1, n * n - 2 * n + 2)


def extend_doubly_stochastic(alloc: AllocationMatrix) -> NDArray[np.float64]:
    """Pad the allocation with (1 - row sum) / (n - k) in every dummy column."""
    m = np.asarray(alloc.m, dtype=float)
    n, k = m.shape
    if n < k:
        raise NotSubstochastic(f"{n} advertisers cannot fill {k} slots")
    if m.size and m.min() < -FEASIBILITY_TOL:
        raise NotSubstochastic("negative entry in allocation matrix")
    col_sums = m.sum(axis=0)
    if np.any(np.abs(col_sums - 1.0) > FEASIBILITY_TOL):
        raise NotSubstochastic(f"column sums {col_sums.tolist()} differ from 1")
    row_sums = m.sum(axis=1)
    if np.any(row_sums > 1.0 + FEASIBILITY_TOL):
        raise NotSubstochastic(f"advertiser {int(np.argmax(row_sums))} is allocated more than 1")

    if n == k:
        return m.copy()
    slack = np.clip(1.0 - row_sums, 0.0, 1.0) / (n - k)
    return np.hstack([np.clip(m, 0.0, 1.0), np.repeat(slack[:, None], n - k, axis=1)])


def _augment(r: int, adj: List[List[int]], visited: List[bool], match_row: List[int], match_col: List[int]) -> bool:
    # a free column is taken before any re-routing; both passes go in ascending order
    for c in adj[r]:
        if match_col[c] < 0:
            match_col[c] = r
            match_row[r] = c
            return True
    for c in adj[r]:
        if not visited[c]:
            visited[c] = True
            if match_col[c] < 0 or _augment(match_col[c], adj, visited, match_row, match_col):
                match_col[c] = r
                match_row[r] = c
                return True
    return False


def bvn_decompose(
    A: NDArray[np.float64],
    tol: Optional[float] = None,
    k: Optional[int] = None,
) -> MatchingDistribution:
    """
    Birkhoff-von Neumann decomposition by repeated perfect matchings.

    Each round subtracts the smallest matched entry of the current perfect
    matching on the support {A > tol} and records it as the permutation's
    weight.  The support graph is built once; entries that reach zero drop
    out of it and only the rows that lost their edge are re-matched.  Rows
    are matched in index order; each takes its smallest free column, or else
    the first augmenting path found trying columns in ascending order.  The
    result is therefore a function of A alone.
    Residual mass below n * tol is dropped and the weights renormalised.

    Args:
        A: n x n doubly stochastic matrix.
        tol: support threshold, defaults to the configured ``support_tol``.
        k: number of real slots, for reporting dummy slots as -1 (defaults to n).

    Returns:
        MatchingDistribution: at most n^2 - 2n + 2 weighted permutations.
    """
    tol = get_settings().support_tol if tol is None else tol
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise BadShape(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    k = n if k is None else k
    if n == 0:
        return MatchingDistribution(np.ones(1), np.zeros((1, 0), dtype=np.int64), k)
    if (
        A.min() < -FEASIBILITY_TOL
        or np.any(np.abs(A.sum(axis=0) - 1.0) > FEASIBILITY_TOL)
        or np.any(np.abs(A.sum(axis=1) - 1.0) > FEASIBILITY_TOL)
    ):
        raise NoPerfectMatching("matrix is not doubly stochastic")

    R = np.where(A > tol, A, 0.0).tolist()
    adj = [[c for c in range(n) if R[r][c] > 0.0] for r in range(n)]
    match_row, match_col = [-1] * n, [-1] * n
    for r in range(n):
        if not _augment(r, adj, [False] * n, match_row, match_col):
            raise NoPerfectMatching("support has no perfect matching")

    weights: List[float] = []
    perms: List[List[int]] = []
    bound = max_entries(n)
    remaining = 1.0
    while True:
        perm = list(match_row)
        w = min(R[r][perm[r]] for r in range(n))
        broken = []
        for r in range(n):
            c = perm[r]
            left = R[r][c] - w
            if left <= tol:
                R[r][c] = 0.0
                adj[r].remove(c)
                broken.append(r)
            else:
                R[r][c] = left
        weights.append(w)
        perms.append(perm)
        remaining -= w
        if len(weights) > bound:
            raise SolverInvariantError(f"decomposition exceeded {bound} permutations")
        if remaining <= n * tol or not any(adj):
            break

        for r in broken:
            match_col[match_row[r]] = -1
            match_row[r] = -1
        if not all(_augment(r, adj, [False] * n, match_row, match_col) for r in broken):
            raise NoPerfectMatching(f"support has no perfect matching with {remaining:.3g} mass left")

    weights_arr = np.asarray(weights)
    residual = 1.0 - weights_arr.sum()
    if residual > 0:
        logger.debug("discarding %.3g residual mass after %d rounds", residual, len(weights))
    weights_arr = weights_arr / weights_arr.sum()
    dist = MatchingDistribution(weights=weights_arr, assignments=np.asarray(perms, dtype=np.int64), k=k)
    logger.debug("bvn_decompose: n=%d, %d permutations", n, len(weights))
    return dist


def matching_marginals(dist: MatchingDistribution) -> NDArray[np.float64]:
    """Exact Pr[advertiser i takes column j] over the n x n extended matrix."""
    n = dist.n
    out = np.zeros((n, n))
    rows = np.arange(n)
    for w, perm in zip(dist.weights, dist.assignments):
        out[rows, perm] += w
    return out


def sample_matching(dist: MatchingDistribution, seed: int) -> NDArray[np.int64]:
    """Draw one assignment; slot per advertiser, -1 when not shown."""
    rng = np.random.default_rng(seed)
    e = int(rng.choice(dist.weights.shape[0], p=dist.weights))
    return dist.slot_assignments()[e]


def realize(alloc: AllocationMatrix, seed: int, tol: Optional[float] = None) -> Tuple[MatchingDistribution, NDArray[np.int64]]:
    dist = bvn_decompose(extend_doubly_stochastic(alloc), tol=tol, k=alloc.k)
    return dist, sample_matching(dist, seed)
