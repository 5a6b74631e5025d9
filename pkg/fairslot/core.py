"""
Domain types shared by every fairslot module.

An auction has n advertisers with per-click bids ``values`` and ad-specific
click-through rates ``alpha``, and k slots with non-increasing click-through
rates ``beta``.  All mechanisms work on the effective values v_i * alpha_i.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping, Sequence, Union

import numpy as np
from numpy.typing import NDArray

from .errors import (
    BadShape,
    BetaNotSorted,
    BetaOutOfRange,
    InvalidConfig,
    LambdaBelowOne,
    LengthMismatch,
    NegativeValue,
    NonPositiveAlpha,
    TooFewAdvertisers,
)

logger = logging.getLogger(__name__)

EffectiveValues = NDArray[np.float64]


class Family(str, Enum):
    IPA = "ipa"
    PA = "pa"


def _frozen(x: Any) -> NDArray[np.float64]:
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AuctionInstance:
    values: NDArray[np.float64]
    alpha: NDArray[np.float64]
    beta: NDArray[np.float64]
    k: int

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def vhat(self) -> EffectiveValues:
        return effective_values(self)

    def to_dict(self) -> dict:
        return {
            "values": self.values.tolist(),
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "k": self.k,
        }


@dataclass(frozen=True)
class MechanismConfig:
    family: Family = Family.IPA
    ell: float = 1.0

    def __post_init__(self):
        # accept plain strings such as "ipa" / "PA"
        if not isinstance(self.family, Family):
            try:
                object.__setattr__(self, "family", Family(str(self.family).lower()))
            except ValueError:
                raise InvalidConfig(f"unknown family {self.family!r}")
        if not (np.isfinite(self.ell) and self.ell > 0):
            raise InvalidConfig(f"ell must be a positive real, got {self.ell}")
        object.__setattr__(self, "ell", float(self.ell))

    def g(self, x):
        """Smoothing function: x^-ell for IPA (g(0) = inf), x^ell for PA."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            if self.family is Family.IPA:
                out = np.where(x > 0, np.power(np.where(x > 0, x, 1.0), -self.ell), np.inf)
            else:
                out = np.power(x, self.ell)
        return out if out.ndim else float(out)

    def g_inverse(self, u):
        """Inverse of ``g`` on [0, inf], with the limits at 0 and inf made explicit."""
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            if self.family is Family.IPA:
                safe = np.where((u > 0) & np.isfinite(u), u, 1.0)
                out = np.power(safe, -1.0 / self.ell)
                out = np.where(u <= 0, np.inf, np.where(np.isinf(u), 0.0, out))
            else:
                out = np.power(u, 1.0 / self.ell)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class StabilityBound:
    lam: float
    value: float

    @classmethod
    def of(cls, lam: float, ell: float) -> "StabilityBound":
        return cls(lam=float(lam), value=stability_bound(lam, ell))


def validate_instance(raw: Union[Mapping[str, Any], AuctionInstance]) -> AuctionInstance:
    """
    Validate a candidate instance and return an immutable ``AuctionInstance``.

    Args:
        raw: mapping with keys ``values``, ``alpha``, ``beta`` and optionally
            ``k`` (defaults to ``len(beta)``), or an existing instance.

    Returns:
        AuctionInstance: the validated instance.

    Raises:
        LengthMismatch, TooFewAdvertisers, NegativeValue, NonPositiveAlpha,
        BetaOutOfRange, BetaNotSorted, BadShape

    Example:
        >>> inst = validate_instance({"values": [1, 2], "alpha": [1, 1], "beta": [1.0, 0.5], "k": 2})
        >>> inst.n, inst.k
        (2, 2)
    """
    if isinstance(raw, AuctionInstance):
        raw = raw.to_dict()
    try:
        values = np.array(raw["values"], dtype=float)
        alpha = np.array(raw["alpha"], dtype=float)
        beta = np.array(raw["beta"], dtype=float)
    except KeyError as exc:
        raise BadShape(f"missing field {exc.args[0]!r}")
    except (TypeError, ValueError) as exc:
        raise BadShape(f"non-numeric instance field: {exc}")

    for name, arr in (("values", values), ("alpha", alpha), ("beta", beta)):
        if arr.ndim != 1:
            raise BadShape(f"{name} must be a flat list")
        if not np.all(np.isfinite(arr)):
            raise BadShape(f"{name} must contain finite numbers")

    k = raw.get("k", beta.shape[0])
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 0:
        raise BadShape(f"k must be a non-negative integer, got {k!r}")
    k = int(k)

    if values.shape != alpha.shape:
        raise LengthMismatch(f"values has {values.shape[0]} entries but alpha has {alpha.shape[0]}")
    if beta.shape[0] != k:
        raise LengthMismatch(f"beta has {beta.shape[0]} entries but k = {k}")
    if values.shape[0] < k:
        raise TooFewAdvertisers(f"n = {values.shape[0]} < k = {k}")
    if np.any(values < 0):
        raise NegativeValue(f"advertiser {int(np.argmax(values < 0))} has a negative value")
    if np.any(alpha <= 0):
        raise NonPositiveAlpha(f"advertiser {int(np.argmax(alpha <= 0))} has a non-positive alpha")
    if np.any((beta < 0) | (beta > 1)):
        raise BetaOutOfRange("beta entries must lie in [0, 1]")
    if np.any(np.diff(beta) > 0):
        raise BetaNotSorted("beta must be non-increasing")

    return AuctionInstance(values=_frozen(values), alpha=_frozen(alpha), beta=_frozen(beta), k=k)


def effective_values(inst: AuctionInstance) -> EffectiveValues:
    return _frozen(inst.values * inst.alpha)


def instance_from_effective(vhat: Sequence[float], beta: Sequence[float]) -> AuctionInstance:
    """Instance with unit alpha whose effective values are ``vhat``."""
    vhat = np.asarray(vhat, dtype=float)
    return validate_instance({"values": vhat, "alpha": np.ones_like(vhat), "beta": list(beta), "k": len(beta)})


def with_values(inst: AuctionInstance, values: Sequence[float]) -> AuctionInstance:
    """Copy of ``inst`` with the bid vector replaced."""
    return validate_instance({"values": values, "alpha": inst.alpha, "beta": inst.beta, "k": inst.k})


def stability_bound(lam: float, ell: float) -> float:
    """f_ell(lambda) = 1 - lambda^(-2 ell)."""
    if not lam >= 1:
        raise LambdaBelowOne(f"lambda must be >= 1, got {lam}")
    if np.isinf(lam):
        return 1.0
    return float(1.0 - lam ** (-2.0 * ell))


def lambda_of(x: Sequence[float], y: Sequence[float]) -> float:
    """
    Largest componentwise multiplicative distance between two vectors.

    A zero facing a positive entry gives inf; two zeros count as ratio 1.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise LengthMismatch(f"vectors of length {x.shape} and {y.shape}")
    if x.size == 0:
        return 1.0
    both_zero = (x == 0) & (y == 0)
    one_zero = (x == 0) ^ (y == 0)
    if np.any(one_zero):
        return float("inf")
    xs = np.where(both_zero, 1.0, x)
    ys = np.where(both_zero, 1.0, y)
    return float(max(1.0, np.max(np.maximum(xs / ys, ys / xs))))
