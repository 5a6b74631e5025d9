"""
Brute-force reference implementations.

Nothing here reuses the breakpoint solvers or the payment curves: water
levels come from plain bisection, payments from integrating mechanism runs
on a grid.  Agreement with the main modules is what the tests check.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import minimize_scalar

from .core import AuctionInstance, Family, MechanismConfig, validate_instance
from .errors import BadShape, Infeasible, InvalidConfig, LambdaBelowOne
from .position import click_probabilities, generalized_allocate

logger = logging.getLogger(__name__)


class PairStrategy(str, Enum):
    RANDOM = "random"
    SINGLE_COORDINATE = "single_coordinate"


@dataclass(frozen=True)
class OracleConfig:
    bisection_tol: float = 1e-12
    payment_grid: int = 100_000
    fuzz_trials: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.bisection_tol > 0:
            raise InvalidConfig("bisection_tol must be positive")
        if self.payment_grid < 2:
            raise InvalidConfig("payment_grid needs at least two points")
        if self.fuzz_trials < 1:
            raise InvalidConfig("fuzz_trials must be at least 1")


# -------------------------
# Water levels
# -------------------------

def _bisect(total, target: float, hi: float, tol: float, max_iter: int = 400) -> float:
    lo = 0.0
    mid = hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        value = total(mid)
        if abs(value - target) < tol:
            break
        if value < target:
            lo = mid
        else:
            hi = mid
    return mid


def bisect_water_level(
    weights: Sequence[float],
    k: int,
    direction: str = "cap_at_one",
    tol: float = 1e-12,
) -> NDArray[np.float64]:
    """
    Allocation from a bisected water level.

    ``cap_at_one``: min(1, T w) with sum k.  ``floor_one_minus``:
    1 - min(1, t w) where sum min(1, t w) = n - k; infinite weights
    saturate for every t > 0.
    """
    w = np.asarray(weights, dtype=float)
    direction = getattr(direction, "value", direction)
    n = w.shape[0]
    if not 0 <= k <= n:
        raise Infeasible(f"k = {k} outside [0, {n}]")

    if direction == "cap_at_one":
        p = int(np.count_nonzero(w > 0))
        if k > p:
            raise Infeasible(f"only {p} positive weights for k = {k}")
        if k == 0:
            return np.zeros(n)
        if k == p:
            return (w > 0).astype(float)
        level = _bisect(lambda T: float(np.minimum(1.0, T * w).sum()), k, 1.0 / w[w > 0].min(), tol)
        return np.minimum(1.0, level * w)

    if direction != "floor_one_minus":
        raise InvalidConfig(f"unknown direction {direction!r}")
    infinite = np.isinf(w)
    finite = np.where(infinite, 0.0, w)
    z = int(np.count_nonzero(infinite))
    target = n - k
    if z > target:
        raise Infeasible(f"{z} infinite weights for {target} unallocated units")
    if target == 0:
        return np.ones(n)
    if z == target:
        return np.where(infinite, 0.0, 1.0)
    if z + np.count_nonzero(finite > 0) < target:
        raise Infeasible("not enough positive weights to leave n - k unallocated")

    def total(t: float) -> float:
        return z + float(np.minimum(1.0, t * finite).sum())

    level = _bisect(total, target, 1.0 / finite[finite > 0].min(), tol)
    return np.where(infinite, 0.0, 1.0 - np.minimum(1.0, level * finite))


def bisect_kunit(vhat: Sequence[float], k: int, config: MechanismConfig, tol: float = 1e-12) -> NDArray[np.float64]:
    """k-unit IPA/PA allocation by bisection, including the zero-value rules."""
    vhat = np.asarray(vhat, dtype=float)
    n = vhat.shape[0]
    p = int(np.count_nonzero(vhat > 0))
    if k == 0:
        return np.zeros(n)
    if p < k:
        return np.where(vhat > 0, 1.0, (k - p) / (n - p))
    if config.family is Family.IPA:
        with np.errstate(divide="ignore"):
            weights = np.where(vhat > 0, np.power(np.where(vhat > 0, vhat, 1.0), -config.ell), np.inf)
        return bisect_water_level(weights, k, "floor_one_minus", tol)
    return bisect_water_level(np.power(vhat, config.ell), k, "cap_at_one", tol)


# -------------------------
# Payments
# -------------------------

def numeric_payment(inst: AuctionInstance, i: int, config: MechanismConfig, grid: int = 100_000) -> float:
    """Myerson payment from ``grid`` full mechanism runs on [0, v_i] and the trapezoid rule."""
    v = float(inst.values[i])
    if v == 0 or inst.k == 0:
        return 0.0
    zs = np.linspace(0.0, v, grid)
    xs = np.empty_like(zs)
    bids = np.array(inst.values, dtype=float)
    for n_point, z in enumerate(zs):
        bids[i] = z
        shifted = validate_instance({"values": bids, "alpha": inst.alpha, "beta": inst.beta, "k": inst.k})
        xs[n_point] = click_probabilities(shifted, generalized_allocate(shifted, config))[i]
    # a zero bid is a measure-zero point; use the right limit
    xs[0] = 0.0
    return float(v * xs[-1] - np.trapezoid(xs, zs))


# -------------------------
# Instance generators
# -------------------------

def random_instance(rng: np.random.Generator, n: int, k: int) -> AuctionInstance:
    """Values log-uniform on [1e-2, 1e2], alpha on [0.1, 10], beta sorted uniform."""
    values = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), size=n))
    alpha = np.exp(rng.uniform(np.log(0.1), np.log(10.0), size=n))
    beta = np.sort(rng.uniform(0.0, 1.0, size=k))[::-1]
    return validate_instance({"values": values, "alpha": alpha, "beta": beta, "k": k})


def pair_generator(
    seed: int,
    n: int,
    k: int,
    lambda_max: float,
    strategy: Union[PairStrategy, str] = PairStrategy.RANDOM,
    coordinate: Optional[int] = None,
) -> Tuple[AuctionInstance, AuctionInstance]:
    """
    Two instances for the same slots and advertisers, differing by lambda.

    ``random`` rescales every value and alpha by factors in
    [lambda_max^-1/2, lambda_max^1/2], so effective values move by at most
    lambda_max.  ``single_coordinate`` divides one advertiser's value by
    lambda_max^2, the extreme case for the k-unit stability argument.
    """
    if not lambda_max >= 1:
        raise LambdaBelowOne(f"lambda_max must be >= 1, got {lambda_max}")
    strategy = PairStrategy(strategy)
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n, k)

    if strategy is PairStrategy.RANDOM:
        half = 0.5 * np.log(lambda_max)
        values = inst.values * np.exp(rng.uniform(-half, half, size=n))
        alpha = inst.alpha * np.exp(rng.uniform(-half, half, size=n))
    else:
        i = int(rng.integers(n)) if coordinate is None else coordinate
        if not 0 <= i < n:
            raise BadShape(f"coordinate {i} outside [0, {n})")
        values = np.array(inst.values, dtype=float)
        values[i] = values[i] / lambda_max ** 2
        alpha = inst.alpha
    other = validate_instance({"values": values, "alpha": alpha, "beta": inst.beta, "k": k})
    return inst, other


# -------------------------
# PA worst case
# -------------------------

def pa_worst_ratio(n: int, k: int, ell: float) -> float:
    """min over c in [0, 1] of c + (1 - c) / (1 + (n - k) c^ell)."""
    if n <= k:
        raise BadShape(f"need n > k, got n = {n}, k = {k}")
    rest = n - k

    def ratio(c: float) -> float:
        return c + (1.0 - c) / (1.0 + rest * c ** ell)

    grid = np.linspace(0.0, 1.0, 2001)
    values = grid + (1.0 - grid) / (1.0 + rest * grid ** ell)
    g = int(np.argmin(values))
    lo, hi = grid[max(g - 1, 0)], grid[min(g + 1, len(grid) - 1)]
    res = minimize_scalar(ratio, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    best = min(float(res.fun), float(values[g]))
    logger.debug("pa_worst_ratio(n=%d, k=%d, ell=%g) = %.12g", n, k, ell, best)
    return best
