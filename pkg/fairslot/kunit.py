"""
k-unit water-filling solvers.

Both mechanisms hand out k units of allocation among n advertisers, at most
one unit each:

- IPA leaves advertiser i unallocated in proportion to g(v_i) = v_i^-ell,
  i.e. a_i = 1 - min(1, t * g(v_i)) for a floor level t.
- PA allocates in proportion to g(v_i) = v_i^ell, capped at one unit,
  i.e. a_i = min(1, T * g(v_i)) for a cap level T.

Both levels are found exactly by walking the breakpoints of the piecewise
linear total, so no iterative root finding happens on the mechanism path.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from .core import Family, MechanismConfig
from .errors import BadShape, Infeasible, KExceedsN

logger = logging.getLogger(__name__)


class Direction(str, Enum):
    FLOOR_ONE_MINUS = "floor_one_minus"
    CAP_AT_ONE = "cap_at_one"


@dataclass(frozen=True)
class KUnitAllocation:
    a: NDArray[np.float64]
    # None when the level is degenerate (k = 0, or too few positive values)
    water_level: Optional[float]

    @property
    def degenerate(self) -> bool:
        return self.water_level is None


def _result(a: NDArray[np.float64], level: Optional[float]) -> KUnitAllocation:
    a = np.clip(np.asarray(a, dtype=float), 0.0, 1.0)
    a.setflags(write=False)
    return KUnitAllocation(a=a, water_level=None if level is None else float(level))


def _check_k(n: int, k: int) -> None:
    if k < 0:
        raise BadShape(f"k must be non-negative, got {k}")
    if k > n:
        raise KExceedsN(f"k = {k} exceeds n = {n}")


def _degenerate(vhat: NDArray[np.float64], k: int) -> KUnitAllocation:
    # Fewer than k positive values: positives are fully served and the
    # zero-valued advertisers split what is left evenly.
    n = vhat.shape[0]
    positive = vhat > 0
    p = int(np.count_nonzero(positive))
    a = np.where(positive, 1.0, (k - p) / (n - p))
    logger.debug("degenerate k-unit branch: %d positive values for k=%d", p, k)
    return _result(a, None)


def cap_level(w: NDArray[np.float64], target: float) -> float:
    """Smallest T >= 0 with sum(min(1, T * w)) = target, for finite w >= 0."""
    if target <= 0:
        return 0.0
    ws = np.sort(w)[::-1]
    p = int(np.count_nonzero(ws > 0))
    if target > p:
        raise Infeasible(f"target {target} exceeds the {p} positive weights")
    if target == p:
        return float(1.0 / ws[p - 1])
    ws = ws[:p]
    tail = np.cumsum(ws[::-1])[::-1]
    m = np.arange(p)
    # on segment m the m largest weights are saturated
    candidates = (target - m) / tail
    valid = candidates * ws <= 1.0
    seg = int(np.argmax(valid))
    return float(candidates[seg])


def water_level_solve(
    weights: Sequence[float],
    k: int,
    direction: Direction = Direction.CAP_AT_ONE,
) -> Tuple[float, NDArray[np.float64]]:
    """
    Solve the cap or floor water-level problem exactly.

    Args:
        weights: non-negative weights; the floor form accepts inf (a weight
            that saturates for every positive level).
        k: number of units to allocate.
        direction: ``CAP_AT_ONE`` solves sum(min(1, T*w)) = k and returns
            min(1, T*w); ``FLOOR_ONE_MINUS`` solves sum(min(1, t*w)) = n - k
            and returns 1 - min(1, t*w).

    Returns:
        Tuple[float, np.ndarray]: (level, allocation)

    Example:
        >>> water_level_solve([4, 2, 1], 2, Direction.CAP_AT_ONE)
        (0.333..., array([1.  , 0.666..., 0.333...]))
    """
    w = np.asarray(weights, dtype=float)
    direction = Direction(direction)
    if w.ndim != 1 or np.any(np.isnan(w)) or np.any(w < 0):
        raise BadShape("weights must be a flat vector of non-negative numbers")
    n = w.shape[0]
    if not 0 <= k <= n:
        raise Infeasible(f"k = {k} outside [0, {n}]")

    inf_mask = np.isinf(w)
    if direction is Direction.CAP_AT_ONE:
        if np.any(inf_mask):
            raise BadShape("cap form needs finite weights")
        level = cap_level(w, k)
        return level, np.minimum(1.0, level * w)

    target = n - k
    z = int(np.count_nonzero(inf_mask))
    if z > target:
        raise Infeasible(f"{z} infinite weights exceed the unallocated mass {target}")
    a = np.zeros(n)
    if target == 0:
        return 0.0, np.ones(n)
    if z == target:
        a[~inf_mask] = 1.0
        return 0.0, a
    finite = w[~inf_mask]
    level = cap_level(finite, target - z)
    a[~inf_mask] = 1.0 - np.minimum(1.0, level * finite)
    return level, a


def kunit_ipa(vhat: Sequence[float], k: int, ell: float) -> KUnitAllocation:
    """
    k-unit inverse proportional allocation.

    Advertisers are visited in non-increasing effective value; the lowest
    remaining one is dropped while (s - k) * g(v_s) >= sum_{i<=s} g(v_i),
    then a_i = 1 - (s - k) * g(v_i) / sum_{t<=s} g(v_t) for the survivors.
    """
    vhat = np.asarray(vhat, dtype=float)
    n = vhat.shape[0]
    _check_k(n, k)
    if k == 0:
        return _result(np.zeros(n), None)
    p = int(np.count_nonzero(vhat > 0))
    if p == 0:
        return _result(np.full(n, k / n), None)
    if p < k:
        return _degenerate(vhat, k)

    order = np.argsort(-vhat, kind="stable")
    g = np.power(vhat[order[:p]], -ell)
    prefix = np.cumsum(g)
    s = p
    while (s - k) * g[s - 1] >= prefix[s - 1]:
        s -= 1
    level = (s - k) / prefix[s - 1]
    a = np.zeros(n)
    a[order[:s]] = 1.0 - level * g[:s]
    logger.debug("kunit_ipa: kept %d of %d advertisers, level %.6g", s, n, level)
    return _result(a, level)


def kunit_pa(vhat: Sequence[float], k: int, ell: float) -> KUnitAllocation:
    """k-unit proportional allocation: a_i = min(1, T * v_i^ell) with sum k."""
    vhat = np.asarray(vhat, dtype=float)
    n = vhat.shape[0]
    _check_k(n, k)
    if k == 0:
        return _result(np.zeros(n), None)
    p = int(np.count_nonzero(vhat > 0))
    if p == 0:
        return _result(np.full(n, k / n), None)
    if p < k:
        return _degenerate(vhat, k)

    w = np.power(vhat, ell)
    level, a = water_level_solve(w, k, Direction.CAP_AT_ONE)
    logger.debug("kunit_pa: %d capped, level %.6g", int(np.count_nonzero(a >= 1.0)), level)
    return _result(a, level)


def kunit_allocate(vhat: Sequence[float], k: int, config: MechanismConfig) -> KUnitAllocation:
    if config.family is Family.IPA:
        return kunit_ipa(vhat, k, config.ell)
    return kunit_pa(vhat, k, config.ell)
