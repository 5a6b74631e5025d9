"""
Social welfare of allocations, the unfair optimum, and approximation bounds.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import AuctionInstance, Family, MechanismConfig, effective_values, validate_instance
from .errors import BadShape, DimensionMismatch
from .kunit import kunit_ipa
from .position import AllocationMatrix, generalized_allocate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WelfareResult:
    alg: float
    opt: float
    ratio: float
    bound: float
    applicable: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def _ranking(inst: AuctionInstance) -> np.ndarray:
    # descending effective value, ties by index
    return np.argsort(-effective_values(inst), kind="stable")


def opt_welfare(inst: AuctionInstance) -> float:
    """Welfare of showing the top-k effective values in slot order."""
    top = effective_values(inst)[_ranking(inst)[: inst.k]]
    return float(top @ inst.beta)


def unfair_opt_matrix(inst: AuctionInstance) -> AllocationMatrix:
    m = np.zeros((inst.n, inst.k))
    m[_ranking(inst)[: inst.k], np.arange(inst.k)] = 1.0
    cumulative = np.vstack([np.zeros(inst.n), np.cumsum(m, axis=1).T])
    return AllocationMatrix.from_payload({"matrix": m.tolist(), "cumulative": cumulative.tolist()})


def allocation_welfare(inst: AuctionInstance, alloc: AllocationMatrix) -> float:
    """sum_ij vhat_i beta_j M_ij."""
    m = np.asarray(alloc.m if isinstance(alloc, AllocationMatrix) else alloc, dtype=float)
    if m.shape != (inst.n, inst.k):
        raise DimensionMismatch(f"matrix shape {m.shape} does not match (n, k) = {(inst.n, inst.k)}")
    return float(effective_values(inst) @ m @ inst.beta)


def kunit_welfare(vhat: Sequence[float], a: Sequence[float]) -> float:
    return float(np.dot(np.asarray(vhat, dtype=float), np.asarray(a, dtype=float)))


def ipa_bound(ell: float) -> float:
    """1 - ell^ell / (1 + ell)^(ell + 1); 3/4 at ell = 1."""
    return float(1.0 - np.exp(ell * np.log(ell) - (ell + 1.0) * np.log1p(ell)))


def pa_bound(n: int, k: int, ell: float, beta: Optional[Sequence[float]] = None) -> Tuple[float, bool]:
    """
    PA welfare guarantee (n-k)/n * (n-k)^(-1/ell) + 1/n.

    Returns:
        Tuple[float, bool]: (bound, applicable).  The guarantee is only
        established when n - k > ((ell + 2) / ell)^ell; below that the
        formula can exceed the true worst case.  With n == k every advertiser
        is shown, so the ratio is 1 only when the slots are interchangeable:
        applicable needs a uniform ``beta``.
    """
    if n == k:
        if beta is None:
            return 1.0, False
        beta = np.asarray(beta, dtype=float)
        return 1.0, bool(beta.size == 0 or np.all(beta == beta[0]))
    rest = n - k
    bound = rest / n * rest ** (-1.0 / ell) + 1.0 / n
    return float(bound), bool(rest > ((ell + 2.0) / ell) ** ell)


def ipa_tight_instance(k: int, n: int, eps: float) -> AuctionInstance:
    """Bids (1,..,1, eps,..,eps) with k ones, unit alpha and beta = (1,..,1)."""
    if n <= 2 * k:
        raise BadShape(f"need n > 2k, got n = {n}, k = {k}")
    if not 0 < eps < 1:
        raise BadShape(f"eps must lie in (0, 1), got {eps}")
    values = [1.0] * k + [eps] * (n - k)
    return validate_instance({"values": values, "alpha": [1.0] * n, "beta": [1.0] * k, "k": k})


def ipa_tight_ratio(k: int, n: int, eps: float) -> float:
    """Closed-form ell = 1 IPA ratio on ``ipa_tight_instance``: 1 - N eps (1-eps) / (k eps + N)."""
    rest = n - k
    return 1.0 - rest * eps * (1.0 - eps) / (k * eps + rest)


def tight_instance_ratio(k: int, n: int, eps: float) -> float:
    """The same ratio measured by running k-unit IPA."""
    inst = ipa_tight_instance(k, n, eps)
    vhat = effective_values(inst)
    return kunit_welfare(vhat, kunit_ipa(vhat, k, 1.0).a) / opt_welfare(inst)


def welfare_result(
    inst: AuctionInstance,
    config: MechanismConfig,
    alloc: Optional[AllocationMatrix] = None,
) -> WelfareResult:
    alloc = generalized_allocate(inst, config) if alloc is None else alloc
    alg = allocation_welfare(inst, alloc)
    opt = opt_welfare(inst)
    ratio = alg / opt if opt > 0 else 1.0
    if config.family is Family.IPA:
        bound, applicable = ipa_bound(config.ell), True
    else:
        bound, applicable = pa_bound(inst.n, inst.k, config.ell, inst.beta)
    if applicable and ratio < bound - 1e-9:
        logger.warning("welfare ratio %.6g below the %s bound %.6g", ratio, config.family.value, bound)
    return WelfareResult(alg=alg, opt=opt, ratio=float(ratio), bound=bound, applicable=applicable)
