"""Fair sponsored-search position auctions: IPA / PA mechanisms, lotteries, payments and audits."""

from .core import (
    AuctionInstance,
    Family,
    MechanismConfig,
    StabilityBound,
    effective_values,
    lambda_of,
    stability_bound,
    validate_instance,
)
from .errors import FairSlotError
from .feasibility import MatchingDistribution, bvn_decompose, extend_doubly_stochastic, sample_matching
from .kunit import KUnitAllocation, kunit_ipa, kunit_pa, water_level_solve
from .payments import allocation_curve, click_allocation_curve, myerson_payment, payment_report
from .position import AllocationMatrix, generalized_allocate, generalized_ipa, generalized_pa
from .welfare import WelfareResult, allocation_welfare, ipa_bound, opt_welfare, pa_bound

__version__ = "0.1.0"
