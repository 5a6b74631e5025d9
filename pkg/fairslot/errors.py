"""
Exception hierarchy for fairslot.

Every error carries a stable ``code`` that the CLI prints as its diagnostic,
so scripts can branch on it without parsing messages.
"""

from typing import Any, Dict


class FairSlotError(ValueError):
    code = "FairSlotError"

    def __init__(self, detail: str = ""):
        super().__init__(detail or self.code)
        self.detail = detail or self.code

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.code, "detail": self.detail}


# Instance validation
class NegativeValue(FairSlotError):
    code = "NegativeValue"


class NonPositiveAlpha(FairSlotError):
    code = "NonPositiveAlpha"


class BetaNotSorted(FairSlotError):
    code = "BetaNotSorted"


class BetaOutOfRange(FairSlotError):
    code = "BetaOutOfRange"


class TooFewAdvertisers(FairSlotError):
    code = "TooFewAdvertisers"


class LengthMismatch(FairSlotError):
    code = "LengthMismatch"


class BadShape(FairSlotError):
    code = "BadShape"


class InvalidConfig(FairSlotError):
    code = "InvalidConfig"


class LambdaBelowOne(FairSlotError):
    code = "LambdaBelowOne"


# Solvers
class KExceedsN(FairSlotError):
    code = "KExceedsN"


class Infeasible(FairSlotError):
    code = "Infeasible"


class SolverInvariantError(FairSlotError):
    code = "SolverInvariant"


# Feasibility
class NotSubstochastic(FairSlotError):
    code = "NotSubstochastic"


class NoPerfectMatching(FairSlotError):
    code = "NoPerfectMatching"


# Payments
class SlotOutOfRange(FairSlotError):
    code = "SlotOutOfRange"


class NegativeValueQuery(FairSlotError):
    code = "NegativeValueQuery"


class AdvertiserOutOfRange(FairSlotError):
    code = "AdvertiserOutOfRange"


class IntegrationFailed(FairSlotError):
    code = "IntegrationFailed"


# Audits
class DimensionMismatch(FairSlotError):
    code = "DimensionMismatch"


class InvalidH(FairSlotError):
    code = "InvalidH"


# CLI
class InvalidSweepSpec(FairSlotError):
    code = "InvalidSweepSpec"
