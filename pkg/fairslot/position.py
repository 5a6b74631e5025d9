"""
Generalized IPA / PA for position auctions.

Column j of the allocation matrix is a^(j) - a^(j-1), where a^(h) is the
k-unit allocation of h units.  Slot click-through rates play no part in the
allocation; they only enter welfare and payments.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List

import numpy as np
from numpy.typing import NDArray

from .core import AuctionInstance, Family, MechanismConfig, effective_values
from .errors import BadShape, SolverInvariantError
from .kunit import kunit_allocate

logger = logging.getLogger(__name__)

CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class AllocationMatrix:
    m: NDArray[np.float64]  # n x k, advertisers x slots
    cumulative: NDArray[np.float64]  # (k + 1) x n, row h is a^(h)

    @property
    def n(self) -> int:
        return int(self.m.shape[0])

    @property
    def k(self) -> int:
        return int(self.m.shape[1])

    @property
    def row_sums(self) -> NDArray[np.float64]:
        return self.m.sum(axis=1)

    def to_payload(self) -> Dict[str, List[List[float]]]:
        return {"matrix": self.m.tolist(), "cumulative": self.cumulative.tolist()}

    @classmethod
    def from_payload(cls, payload: Dict[str, Any]) -> "AllocationMatrix":
        m = np.array(payload["matrix"], dtype=float)
        cumulative = np.array(payload["cumulative"], dtype=float)
        if m.ndim != 2:
            # a k = 0 matrix serialises as [[], [], ...] or []
            m = m.reshape(len(payload["matrix"]), 0)
        if cumulative.ndim != 2 or cumulative.shape != (m.shape[1] + 1, m.shape[0]):
            raise BadShape("cumulative must hold k + 1 vectors of length n")
        return _freeze(m, cumulative)


def _freeze(m: NDArray[np.float64], cumulative: NDArray[np.float64]) -> AllocationMatrix:
    m = np.array(m, dtype=float)
    cumulative = np.array(cumulative, dtype=float)
    m.setflags(write=False)
    cumulative.setflags(write=False)
    return AllocationMatrix(m=m, cumulative=cumulative)


def _telescope(vhat: NDArray[np.float64], k: int, config: MechanismConfig) -> AllocationMatrix:
    n = vhat.shape[0]
    cumulative = np.zeros((k + 1, n))
    for h in range(1, k + 1):
        cumulative[h] = kunit_allocate(vhat, h, config).a

    m = np.diff(cumulative, axis=0).T.copy()
    if m.size and m.min() < -CLAMP_TOL:
        i, j = np.unravel_index(int(np.argmin(m)), m.shape)
        raise SolverInvariantError(
            f"{config.family.value}: column {j} has entry {m[i, j]:.3g} for advertiser {i}; "
            "k-unit allocations are not monotone in k"
        )
    if m.size and m.min() < 0:
        cols = np.unique(np.nonzero(m < 0)[1])
        logger.warning("clamping floating-point dust in columns %s", cols.tolist())
        m[m < 0] = 0.0
        m[:, cols] /= m[:, cols].sum(axis=0)
    return _freeze(m, cumulative)


def generalized_ipa(inst: AuctionInstance, ell: float) -> AllocationMatrix:
    return _telescope(effective_values(inst), inst.k, MechanismConfig(Family.IPA, ell))


def generalized_pa(inst: AuctionInstance, ell: float) -> AllocationMatrix:
    return _telescope(effective_values(inst), inst.k, MechanismConfig(Family.PA, ell))


def generalized_allocate(inst: AuctionInstance, config: MechanismConfig) -> AllocationMatrix:
    return _telescope(effective_values(inst), inst.k, config)


def click_probabilities(inst: AuctionInstance, alloc: AllocationMatrix) -> NDArray[np.float64]:
    """Expected clicks per advertiser, alpha_i * sum_j beta_j M_ij."""
    return inst.alpha * (alloc.m @ inst.beta)
