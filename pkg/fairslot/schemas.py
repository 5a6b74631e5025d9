from typing import List, Literal, Optional, Type, TypeVar

from pydantic import BaseModel, ValidationError, field_validator

from .core import AuctionInstance, Family, MechanismConfig, validate_instance
from .errors import BadShape, FairSlotError, InvalidConfig, InvalidSweepSpec

Model = TypeVar("Model", bound=BaseModel)


def parse_payload(model: Type[Model], data, error: Type[FairSlotError] = BadShape) -> Model:
    """Validate ``data`` against ``model``, re-raising pydantic errors as ``error``."""
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ())) or "payload"
        raise error(f"{where}: {first.get('msg', 'invalid')}") from exc


# Inputs
class InstancePayload(BaseModel):
    values: List[float]
    alpha: List[float]
    beta: List[float]
    k: Optional[int] = None

    def to_instance(self) -> AuctionInstance:
        raw = self.model_dump()
        if raw["k"] is None:
            raw.pop("k")
        return validate_instance(raw)


class ConfigPayload(BaseModel):
    family: Family = Family.IPA
    ell: float = 1.0

    @field_validator("family", mode="before")
    @classmethod
    def lower_family(cls, v):
        return v.lower() if isinstance(v, str) else v

    @field_validator("ell")
    @classmethod
    def validate_ell(cls, v):
        if not v > 0:
            raise ValueError("ell must be positive")
        return v

    def to_config(self) -> MechanismConfig:
        return MechanismConfig(self.family, self.ell)


class SweepSpec(BaseModel):
    kind: Literal["welfare", "tightness", "stability"] = "welfare"
    n: List[int]
    k: List[int]
    ell: List[float] = [1.0]
    family: List[Family] = [Family.IPA]
    trials: int = 1
    seed: int = 0
    eps: float = 0.5
    lambda_max: float = 4.0
    strategy: Literal["random", "single_coordinate"] = "random"

    @field_validator("n")
    @classmethod
    def validate_n(cls, v):
        if not v or min(v) < 1:
            raise ValueError("n grid must be non-empty with n >= 1")
        return v

    @field_validator("k")
    @classmethod
    def validate_k(cls, v):
        if not v or min(v) < 0:
            raise ValueError("k grid must be non-empty with k >= 0")
        return v

    @field_validator("ell")
    @classmethod
    def validate_ell(cls, v):
        if not v or min(v) <= 0:
            raise ValueError("ell grid must be non-empty and positive")
        return v

    @field_validator("trials")
    @classmethod
    def validate_trials(cls, v):
        if v < 0:
            raise ValueError("trials must be non-negative")
        return v

    @field_validator("eps")
    @classmethod
    def validate_eps(cls, v):
        if not 0 < v < 1:
            raise ValueError("eps must lie in (0, 1)")
        return v

    @field_validator("lambda_max")
    @classmethod
    def validate_lambda_max(cls, v):
        if not v >= 1:
            raise ValueError("lambda_max must be >= 1")
        return v


# Outputs
class MatrixPayload(BaseModel):
    matrix: List[List[float]]
    cumulative: List[List[float]]


class MatchingPayload(BaseModel):
    weights: List[float]
    assignments: List[List[int]]
    k: Optional[int] = None


class SamplePayload(BaseModel):
    seed: int
    assignment: List[int]
    matching: MatchingPayload


class PaymentPayload(BaseModel):
    advertiser: int
    allocation: float
    payment: float
    pieces: int
    method: Literal["closed_form", "quadrature", "sampled"]
    per_click_price: Optional[float] = None
    oracle_payment: Optional[float] = None
    oracle_delta: Optional[float] = None


class PaymentsPayload(BaseModel):
    payments: List[PaymentPayload]


class AuditRecordPayload(BaseModel):
    metric: str
    measured: float
    bound: float
    satisfied: bool
    witness: dict


class AuditPayload(BaseModel):
    lambda_effective: float
    lambda_values: float
    satisfied: bool
    records: List[AuditRecordPayload]


class WelfarePayload(BaseModel):
    family: Family
    ell: float
    alg: float
    opt: float
    ratio: float
    bound: float
    applicable: bool


def load_instance(data) -> AuctionInstance:
    return parse_payload(InstancePayload, data, BadShape).to_instance()


def load_config(data) -> MechanismConfig:
    return parse_payload(ConfigPayload, data, InvalidConfig).to_config()


def load_sweep_spec(data) -> SweepSpec:
    return parse_payload(SweepSpec, data, InvalidSweepSpec)
